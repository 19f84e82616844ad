"""CCA/CKA correctness: hand values, invariances, and independent oracles."""

import numpy as np
import pytest
import scipy.linalg as la

from repsim.errors import AlignmentError, DegenerateInputError, ValidationError
from repsim.similarity import (
    CcaResult,
    Kernel,
    Metric,
    cca_r2,
    center_columns,
    cka,
    l2_normalize_rows,
    parse_similarity_csv,
    similarity_matrix,
    similarity_to_csv,
)
from repsim.store import Variant

from conftest import make_matrix


def cca_r2_eigen_oracle(x: np.ndarray, y: np.ndarray) -> float:
    """Independent route: mean of the top-c eigenvalues of
    Sxx^-1 Sxy Syy^-1 Syx, which are the squared canonical correlations."""
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = xc.T @ xc
    syy = yc.T @ yc
    sxy = xc.T @ yc
    m = la.solve(sxx, sxy) @ la.solve(syy, sxy.T)
    eigvals = np.sort(np.real(la.eigvals(m)))[::-1]
    c = min(x.shape[1], y.shape[1])
    return float(np.mean(np.clip(eigvals[:c], 0.0, 1.0)))


def gram_form_linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    """Dual formulation: HSIC on double-centered Gram matrices K=XX^T,
    L=YY^T."""
    n = x.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    k = h @ (x @ x.T) @ h
    l = h @ (y @ y.T) @ h
    return float(np.sum(k * l) / (np.linalg.norm(k) * np.linalg.norm(l)))


def random_invertible(rng, p: int, max_cond: float = 100.0) -> np.ndarray:
    """Random invertible matrix with bounded condition number."""
    q1, _ = np.linalg.qr(rng.normal(size=(p, p)))
    q2, _ = np.linalg.qr(rng.normal(size=(p, p)))
    singular = np.linspace(1.0, max_cond * 0.5, p)
    return q1 @ np.diag(singular) @ q2


class TestCenterColumns:
    def test_basic(self):
        out = center_columns(np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(out, [[-1.0], [0.0], [1.0]])

    def test_idempotent(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        once = center_columns(x)
        assert np.allclose(center_columns(once), once)

    def test_constant_column(self):
        assert np.allclose(center_columns(np.array([[5.0], [5.0], [5.0]])), 0.0)

    def test_input_unmodified(self):
        x = np.arange(6, dtype=np.float64).reshape(3, 2)
        before = x.copy()
        center_columns(x)
        assert np.array_equal(x, before)

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            center_columns(np.ones((1, 3)))


class TestCcaR2:
    def test_hand_value(self):
        x = np.array([[1.0], [2.0], [3.0]])
        y = np.array([[1.0], [1.0], [2.0]])
        result = cca_r2(x, y)
        assert result.r2_cca == pytest.approx(0.75, abs=1e-12)
        assert result.correlations[0] == pytest.approx(np.sqrt(3) / 2, abs=1e-12)
        assert result.effective_rank_x == result.effective_rank_y == 1

    def test_self_similarity(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.normal(size=(50, 6))
            result = cca_r2(x, x)
            assert abs(result.r2_cca - 1.0) < 1e-9
            assert all(abs(r - 1.0) < 1e-9 for r in result.correlations)

    def test_invertible_map_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(80, 5))
        y = rng.normal(size=(80, 4))
        a = random_invertible(rng, 5)
        b = random_invertible(rng, 4)
        assert cca_r2(x, y).r2_cca == pytest.approx(cca_r2(x @ a, y @ b).r2_cca, abs=1e-6)

    def test_invertible_map_gives_unit_similarity(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 4))
        a = random_invertible(rng, 4)
        assert cca_r2(x, x @ a).r2_cca == pytest.approx(1.0, abs=1e-9)

    def test_eigen_oracle_equivalence(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            n = int(rng.integers(30, 200))
            p = int(rng.integers(1, 9))
            q = int(rng.integers(1, 9))
            x = rng.normal(size=(n, p))
            y = rng.normal(size=(n, q))
            assert cca_r2(x, y).r2_cca == pytest.approx(
                cca_r2_eigen_oracle(x, y), abs=1e-8
            )

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(60, 5))
        y = rng.normal(size=(60, 3))
        assert abs(cca_r2(x, y).r2_cca - cca_r2(y, x).r2_cca) < 1e-10

    def test_rank_deficient_input_uses_effective_rank(self):
        rng = np.random.default_rng(6)
        base = rng.normal(size=(50, 2))
        x = base @ rng.normal(size=(2, 6))  # rank 2 embedded in 6 dims
        result = cca_r2(x, rng.normal(size=(50, 4)))
        assert result.effective_rank_x == 2

    def test_constant_features_rejected(self):
        x = np.full((10, 3), 2.5)
        y = np.random.default_rng(7).normal(size=(10, 3))
        with pytest.raises(DegenerateInputError, match="zero effective rank"):
            cca_r2(x, y)

    def test_sample_count_mismatch(self):
        with pytest.raises(AlignmentError):
            cca_r2(np.ones((5, 2)), np.ones((6, 2)))

    def test_result_invariants(self):
        rng = np.random.default_rng(8)
        result = cca_r2(rng.normal(size=(40, 4)), rng.normal(size=(40, 6)))
        assert isinstance(result, CcaResult)
        rho = np.array(result.correlations)
        assert ((rho >= 0) & (rho <= 1)).all()
        assert np.all(np.diff(rho) <= 1e-12)  # descending
        c = min(result.effective_rank_x, result.effective_rank_y)
        assert result.r2_cca == pytest.approx(float(np.mean(rho[:c] ** 2)), abs=1e-15)


class TestCka:
    def test_hand_value(self):
        x = np.array([[1.0], [2.0], [3.0]])
        y = np.array([[1.0], [1.0], [2.0]])
        assert cka(x, y) == pytest.approx(0.75, abs=1e-12)

    def test_self_similarity(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(40, 7))
        assert cka(x, x) == pytest.approx(1.0, abs=1e-10)
        assert cka(x, x, Kernel.RBF) == pytest.approx(1.0, abs=1e-10)

    def test_orthogonal_and_scale_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(50, 6))
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        assert cka(x, x @ q) == pytest.approx(1.0, abs=1e-8)
        assert cka(x, -2.3 * x) == pytest.approx(1.0, abs=1e-8)

    def test_shear_breaks_invariance(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(60, 5))
        shear = np.eye(5)
        shear[0, 1] = 3.0
        assert cka(x, x @ shear) < 1.0 - 1e-3

    def test_gram_form_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(15):
            x = rng.normal(size=(50, 4))
            y = rng.normal(size=(50, 4))
            assert cka(x, y) == pytest.approx(gram_form_linear_cka(x, y), abs=1e-8)

    def test_symmetry(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(30, 4))
        y = rng.normal(size=(30, 6))
        assert abs(cka(x, y) - cka(y, x)) < 1e-10
        assert abs(cka(x, y, Kernel.RBF) - cka(y, x, Kernel.RBF)) < 1e-10

    def test_range(self):
        rng = np.random.default_rng(15)
        for kernel in (Kernel.LINEAR, Kernel.RBF):
            for _ in range(10):
                x = rng.normal(size=(25, 3))
                y = rng.normal(size=(25, 5))
                score = cka(x, y, kernel)
                assert -1e-7 <= score <= 1 + 1e-7

    def test_constant_input_rejected(self):
        y = np.random.default_rng(16).normal(size=(10, 2))
        with pytest.raises(DegenerateInputError):
            cka(np.full((10, 2), 1.0), y)

    def test_identical_points_rejected_for_rbf(self):
        x = np.tile(np.array([[1.0, 2.0]]), (8, 1))
        with pytest.raises(DegenerateInputError, match="identical"):
            cka(x, x, Kernel.RBF)

    def test_bad_bandwidth(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(10, 2))
        with pytest.raises(ValidationError, match="rbf_bandwidth"):
            cka(x, x, Kernel.RBF, rbf_bandwidth=0.0)


class TestL2Normalize:
    def test_unit_norms(self):
        rng = np.random.default_rng(18)
        out = l2_normalize_rows(rng.normal(size=(20, 4)))
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0)

    def test_zero_row_rejected(self):
        x = np.ones((3, 2))
        x[1] = 0.0
        with pytest.raises(DegenerateInputError, match="zero row 1"):
            l2_normalize_rows(x)


class TestSimilarityMatrix:
    def _aligned(self, datas, variants):
        return [
            make_matrix(data=d.astype(np.float32), variant=v)
            for d, v in zip(datas, variants)
        ]

    def test_identical_pair_all_ones(self):
        rng = np.random.default_rng(20)
        data = rng.normal(size=(30, 4))
        mats = self._aligned([data, data], [Variant.ORIGINAL, Variant.CENTER])
        sm = similarity_matrix(mats, Metric.CKA_LINEAR)
        assert np.allclose(sm.values, 1.0, atol=1e-9)

    def test_five_variants_match_pairwise_calls(self):
        rng = np.random.default_rng(21)
        datas = [rng.normal(size=(40, 5)) for _ in range(5)]
        mats = self._aligned(datas, list(Variant))
        sm = similarity_matrix(mats, Metric.CCA_R2)
        assert sm.values.shape == (5, 5)
        # entries of the computed triangle equal per-pair direct calls exactly;
        # the lower triangle is the mirror of those values
        for i in range(5):
            for j in range(i, 5):
                direct = cca_r2(
                    mats[i].data.astype(np.float64), mats[j].data.astype(np.float64)
                ).r2_cca
                assert sm.values[i, j] == min(max(direct, 0.0), 1.0)
                assert sm.values[j, i] == sm.values[i, j]

    def test_symmetry_and_unit_diagonal(self):
        rng = np.random.default_rng(22)
        datas = [rng.normal(size=(25, 3)) for _ in range(3)]
        mats = self._aligned(datas, [Variant.ORIGINAL, Variant.CENTER, Variant.BORDER])
        for metric in Metric:
            sm = similarity_matrix(mats, metric)
            assert np.array_equal(sm.values, sm.values.T)
            assert np.allclose(np.diag(sm.values), 1.0, atol=1e-9)
            assert ((sm.values >= 0) & (sm.values <= 1)).all()

    def test_misaligned_rejected(self):
        rng = np.random.default_rng(23)
        a = make_matrix(data=rng.normal(size=(10, 3)).astype(np.float32))
        b = make_matrix(data=rng.normal(size=(10, 3)).astype(np.float32), variant=Variant.CENTER)
        b.sample_ids[0] = "different"
        with pytest.raises(AlignmentError):
            similarity_matrix([a, b], Metric.CKA_LINEAR)

    def test_single_matrix_rejected(self):
        a = make_matrix()
        with pytest.raises(ValidationError, match="at least 2"):
            similarity_matrix([a], Metric.CKA_LINEAR)

    def test_pair_context_in_errors(self):
        rng = np.random.default_rng(24)
        a = make_matrix(data=rng.normal(size=(10, 3)).astype(np.float32))
        b = make_matrix(data=np.zeros((10, 3), dtype=np.float32), variant=Variant.BORDER)
        with pytest.raises(DegenerateInputError, match=r"\(original, border\)"):
            similarity_matrix([a, b], Metric.CKA_LINEAR)

    def test_csv_roundtrip(self):
        rng = np.random.default_rng(25)
        datas = [rng.normal(size=(20, 3)) for _ in range(3)]
        mats = self._aligned(datas, [Variant.ORIGINAL, Variant.FOREGROUND, Variant.CENTER])
        sm = similarity_matrix(mats, Metric.CKA_LINEAR)
        variants, values = parse_similarity_csv(similarity_to_csv(sm))
        assert variants == sm.variants
        assert np.array_equal(values, sm.values)  # full-precision repr roundtrip
