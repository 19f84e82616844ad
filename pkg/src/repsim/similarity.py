"""Pairwise representation-similarity metrics and the 5x5 variant matrices.

Two metrics are implemented on aligned feature matrices:

* mean squared canonical correlation: canonical correlations are obtained as
  the singular values of ``Qx^T Qy`` where Qx, Qy are orthonormal bases of the
  centered column spaces, and the score averages their squares over the
  smaller effective rank;
* centered kernel alignment with a linear or RBF kernel.

All accumulation runs in 64-bit floating point regardless of the 32-bit
storage dtype.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DegenerateInputError, ValidationError
from .parallel import map_slots
from .store import FeatureMatrix

# Singular values below this fraction of the largest are treated as numerical
# null directions and excluded from the effective rank.
RANK_TOLERANCE = 1e-10

# Largest [0,1] clamp expected on well-conditioned input; beyond it we flag
# ill-conditioning instead of silently clipping.
CLAMP_WARN_THRESHOLD = 1e-7

DEFAULT_RBF_BANDWIDTH = 0.5


class Metric(enum.Enum):
    CCA_R2 = "cca_r2"
    CKA_LINEAR = "cka_linear"
    CKA_RBF = "cka_rbf"


class Kernel(enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class CcaResult:
    """Canonical correlations (descending, clamped to [0,1]) and their
    mean-square over the smaller effective rank."""

    correlations: tuple[float, ...]
    r2_cca: float
    effective_rank_x: int
    effective_rank_y: int


@dataclass
class SimilarityMatrix:
    """Symmetric matrix of pairwise variant similarities with unit diagonal."""

    metric: Metric
    variants: list[str]
    values: np.ndarray


def center_columns(x: np.ndarray) -> np.ndarray:
    """Subtract the column means; the input is left untouched."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValidationError(f"need at least 2 samples to center, got {x.shape[0]}")
    return x - x.mean(axis=0, keepdims=True)


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; zero rows are rejected."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if (norms == 0).any():
        row = int(np.argwhere(norms[:, 0] == 0)[0, 0])
        raise DegenerateInputError(f"cannot L2-normalize zero row {row}")
    return x / norms


def _orthonormal_basis(centered: np.ndarray) -> np.ndarray:
    """Rank-revealing orthonormal basis of the column space.

    Columns whose singular value falls below ``RANK_TOLERANCE * sigma_max``
    are truncated so numerically null directions cannot masquerade as
    perfectly correlated ones.
    """
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateInputError(
            "zero effective rank: all features are constant across samples"
        )
    rank = int(np.sum(s > RANK_TOLERANCE * s[0]))
    return u[:, :rank]


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValidationError("similarity inputs must be 2-D matrices")
    if x.shape[0] != y.shape[0]:
        raise AlignmentError(
            f"sample count mismatch: {x.shape[0]} vs {y.shape[0]}"
        )
    if x.shape[0] < 2:
        raise ValidationError("need at least 2 samples")
    return x, y


def cca_r2(x: np.ndarray, y: np.ndarray) -> CcaResult:
    """Mean squared canonical correlation between two representations.

    Both inputs are column-centered, reduced to orthonormal bases of their
    column spaces, and the canonical correlations are the singular values of
    the basis cross-product, clamped to [0, 1]. The score averages the
    squared correlations over ``min(effective ranks)`` components, so
    directions that carry no variance never dilute or inflate it. Invariant
    to invertible linear maps of either input; deterministic for fixed input.
    """
    x, y = _check_pair(x, y)
    qx = _orthonormal_basis(center_columns(x))
    qy = _orthonormal_basis(center_columns(y))
    rho = np.linalg.svd(qx.T @ qy, compute_uv=False)
    rho = np.clip(rho, 0.0, 1.0)
    c = min(qx.shape[1], qy.shape[1])
    r2 = float(np.mean(rho[:c] ** 2))
    return CcaResult(
        correlations=tuple(float(v) for v in rho),
        r2_cca=r2,
        effective_rank_x=qx.shape[1],
        effective_rank_y=qy.shape[1],
    )


def _linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    xc = center_columns(x)
    yc = center_columns(y)
    num = np.linalg.norm(yc.T @ xc, ord="fro") ** 2
    den = np.linalg.norm(xc.T @ xc, ord="fro") * np.linalg.norm(yc.T @ yc, ord="fro")
    if den == 0.0:
        raise DegenerateInputError(
            "zero-norm centered input: all features are constant across samples"
        )
    return float(num / den)


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, np.newaxis] + sq[np.newaxis, :] - 2.0 * (x @ x.T)
    return np.maximum(d2, 0.0)


def _rbf_gram(x: np.ndarray, bandwidth_fraction: float) -> np.ndarray:
    d2 = _pairwise_sq_dists(x)
    n = d2.shape[0]
    upper = np.sqrt(d2[np.triu_indices(n, k=1)])
    median = float(np.median(upper))
    if median == 0.0:
        raise DegenerateInputError(
            "median pairwise distance is zero: all samples are identical"
        )
    sigma = bandwidth_fraction * median
    return np.exp(-d2 / (2.0 * sigma * sigma))


def _double_center(k: np.ndarray) -> np.ndarray:
    # H K H with H = I - (1/n) 11^T
    row = k.mean(axis=0, keepdims=True)
    col = k.mean(axis=1, keepdims=True)
    return k - row - col + k.mean()


def _rbf_cka(x: np.ndarray, y: np.ndarray, bandwidth_fraction: float) -> float:
    hkh = _double_center(_rbf_gram(x, bandwidth_fraction))
    hlh = _double_center(_rbf_gram(y, bandwidth_fraction))
    num = float(np.sum(hkh * hlh))
    den = np.linalg.norm(hkh, ord="fro") * np.linalg.norm(hlh, ord="fro")
    if den == 0.0:
        raise DegenerateInputError("degenerate RBF Gram matrix after centering")
    return num / den


def cka(
    x: np.ndarray,
    y: np.ndarray,
    kernel: Kernel = Kernel.LINEAR,
    rbf_bandwidth: float = DEFAULT_RBF_BANDWIDTH,
) -> float:
    """Centered kernel alignment between two representations, in [0, 1].

    Linear kernel: ``||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F)`` on
    column-centered inputs. RBF kernel: Gram matrices with bandwidth
    ``rbf_bandwidth * median pairwise distance`` are double-centered and
    compared by normalized Frobenius inner product. Symmetric in (x, y);
    invariant to orthogonal maps and isotropic scaling, but not to general
    invertible linear maps.
    """
    x, y = _check_pair(x, y)
    if kernel is Kernel.LINEAR:
        return _linear_cka(x, y)
    if rbf_bandwidth <= 0:
        raise ValidationError(f"rbf_bandwidth must be positive, got {rbf_bandwidth}")
    return _rbf_cka(x, y, rbf_bandwidth)


def _metric_fn(metric: Metric, rbf_bandwidth: float):
    if metric is Metric.CCA_R2:
        return lambda a, b: cca_r2(a, b).r2_cca
    if metric is Metric.CKA_LINEAR:
        return lambda a, b: cka(a, b, Kernel.LINEAR)
    return lambda a, b: cka(a, b, Kernel.RBF, rbf_bandwidth)


def similarity_matrix(
    matrices: list[FeatureMatrix],
    metric: Metric,
    rbf_bandwidth: float = DEFAULT_RBF_BANDWIDTH,
) -> SimilarityMatrix:
    """All-pairs similarity over aligned variant matrices.

    Every pair (i, j) with i <= j is computed (the diagonal included, never
    assumed) and mirrored; pairs may run in parallel, with results written
    into preassigned slots so the output is order-independent. Entries are
    clamped to [0, 1]; a clamp larger than ``CLAMP_WARN_THRESHOLD`` or a
    diagonal farther than 1e-9 from 1 flags ill-conditioned input.
    """
    if len(matrices) < 2:
        raise ValidationError(f"need at least 2 variant matrices, got {len(matrices)}")
    ref = matrices[0]
    for mat in matrices[1:]:
        if mat.sample_ids != ref.sample_ids:
            raise AlignmentError(
                f"variants {ref.variant.key} and {mat.variant.key} are not row-aligned"
            )
    names = [m.variant.key for m in matrices]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate variants in input: {names}")

    fn = _metric_fn(metric, rbf_bandwidth)
    pairs = [(i, j) for i in range(len(matrices)) for j in range(i, len(matrices))]

    def compute(pair: tuple[int, int]) -> float:
        i, j = pair
        try:
            return fn(matrices[i].data, matrices[j].data)
        except ValidationError as exc:
            raise type(exc)(f"pair ({names[i]}, {names[j]}): {exc}") from exc

    raw = map_slots(compute, pairs)
    n = len(matrices)
    values = np.zeros((n, n), dtype=np.float64)
    max_clamp = 0.0
    for (i, j), score in zip(pairs, raw):
        clamped = min(max(score, 0.0), 1.0)
        max_clamp = max(max_clamp, abs(score - clamped))
        values[i, j] = clamped
        values[j, i] = clamped
    if max_clamp > CLAMP_WARN_THRESHOLD:
        warnings.warn(
            f"similarity scores clamped by up to {max_clamp:.3e}; "
            "input may be ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    diag_err = float(np.max(np.abs(np.diag(values) - 1.0)))
    if diag_err > 1e-9:
        worst = int(np.argmax(np.abs(np.diag(values) - 1.0)))
        raise DegenerateInputError(
            f"self-similarity of {names[worst]} is {values[worst, worst]:.12f}, "
            "expected 1 within 1e-9; input is ill-conditioned"
        )
    return SimilarityMatrix(metric=metric, variants=names, values=values)


def similarity_to_csv(sm: SimilarityMatrix) -> str:
    """Header row/column of variant names, full-precision decimal values."""
    lines = ["variant," + ",".join(sm.variants)]
    for name, row in zip(sm.variants, sm.values):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_similarity_csv(text: str) -> tuple[list[str], np.ndarray]:
    """Inverse of :func:`similarity_to_csv` (metric metadata lives in the
    JSON twin)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("variant,"):
        raise ValidationError("similarity CSV must start with a 'variant,...' header")
    variants = lines[0].split(",")[1:]
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append([float(v) for v in cells[1:]])
    values = np.asarray(rows, dtype=np.float64)
    if values.shape != (len(variants), len(variants)):
        raise ValidationError(
            f"similarity CSV is not square: {values.shape} vs {len(variants)} variants"
        )
    return variants, values
