"""Variant purity of K-nearest neighborhoods and 2-D projections.

All variants are pooled into one point set; each point's exact k nearest
neighbors (self excluded) vote on which variant its neighborhood belongs to.
Search is exact brute force with a documented deterministic tie-break:
equal distances resolve by variant order, then lexicographic sample id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .parallel import map_slots
from .store import FeatureMatrix, VARIANT_ORDER

_QUERY_BATCH = 256


class Distance(enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


@dataclass
class PurityReport:
    """Row-stochastic confusion of neighbor variants.

    ``confusion[u][v]`` is the fraction of neighbor slots of variant-u queries
    filled by variant-v points; ``per_variant[v] == confusion[v][v]``.
    """

    k: int
    distance: Distance
    variants: list[str]
    confusion: np.ndarray
    per_variant: dict[str, float]


@dataclass
class ProjectionResult:
    """Top-2 principal-component coordinates of a stratified subsample,
    plus the raw subsampled vectors for external projection tools."""

    coords: np.ndarray
    variants: list[str]
    sample_ids: list[str]
    raw: np.ndarray


@dataclass
class _Pooled:
    points: np.ndarray
    variant_idx: np.ndarray
    names: list[str]
    point_variants: list[str]
    point_sample_ids: list[str]


def _pool(matrices: list[FeatureMatrix]) -> _Pooled:
    """Stack variants into one point set ordered by (variant, sample_id).

    With this ordering the documented tie-break is simply ascending pool
    index, which keeps exact search and brute-force oracles comparable.
    """
    if not matrices:
        raise ValidationError("no variant matrices given")
    order = {v: i for i, v in enumerate(VARIANT_ORDER)}
    matrices = sorted(matrices, key=lambda m: order[m.variant])
    names = [m.variant.key for m in matrices]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate variants in input: {names}")
    ref = matrices[0]
    ref_ids = set(ref.sample_ids)
    for mat in matrices[1:]:
        if mat.dim != ref.dim:
            raise ValidationError("pooled variants must share one dimension")
        if set(mat.sample_ids) != ref_ids:
            raise ValidationError(
                f"variants {ref.variant.key} and {mat.variant.key} "
                "cover different sample_id sets"
            )

    blocks, point_variants, point_sample_ids, variant_idx = [], [], [], []
    for vi, mat in enumerate(matrices):
        row_order = np.argsort(np.array(mat.sample_ids, dtype=object), kind="stable")
        blocks.append(np.asarray(mat.data, dtype=np.float64)[row_order])
        for i in row_order:
            point_variants.append(mat.variant.key)
            point_sample_ids.append(mat.sample_ids[i])
            variant_idx.append(vi)
    return _Pooled(
        points=np.vstack(blocks),
        variant_idx=np.asarray(variant_idx, dtype=np.int64),
        names=names,
        point_variants=point_variants,
        point_sample_ids=point_sample_ids,
    )


def _distance_block(queries: np.ndarray, pool: np.ndarray, distance: Distance) -> np.ndarray:
    if distance is Distance.EUCLIDEAN:
        # direct squared differences: bitwise-reproducible against a per-pair
        # oracle, unlike the norm-expansion trick
        return ((queries[:, np.newaxis, :] - pool[np.newaxis, :, :]) ** 2).sum(axis=2)
    norms = np.linalg.norm(pool, axis=1)
    if (norms == 0).any():
        row = int(np.flatnonzero(norms == 0)[0])
        raise DegenerateInputError(f"zero vector at pooled index {row}: cosine undefined")
    q_norms = np.linalg.norm(queries, axis=1)
    return 1.0 - (queries @ pool.T) / (q_norms[:, np.newaxis] * norms[np.newaxis, :])


def knn_variant_purity(
    matrices: list[FeatureMatrix], k: int, distance: Distance = Distance.EUCLIDEAN
) -> PurityReport:
    """Fraction of each variant's neighbor slots occupied by its own variant.

    Exact search over the pooled set; each query excludes itself and ties are
    broken by (variant order, sample id). Confusion rows sum to 1.
    """
    pooled = _pool(matrices)
    n_total = pooled.points.shape[0]
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k >= n_total:
        raise ValidationError(f"k={k} must be smaller than the pooled size {n_total}")

    variant_idx = pooled.variant_idx
    n_variants = len(pooled.names)
    starts = list(range(0, n_total, _QUERY_BATCH))

    def neighbor_counts(start: int) -> np.ndarray:
        stop = min(start + _QUERY_BATCH, n_total)
        dists = _distance_block(pooled.points[start:stop], pooled.points, distance)
        # stable sort on distance == tie-break by pool index, i.e. by
        # (variant order, sample_id) given the pooling order
        ranked = np.argsort(dists, axis=1, kind="stable")
        counts = np.zeros((n_variants, n_variants), dtype=np.int64)
        for row, qi in enumerate(range(start, stop)):
            order = ranked[row]
            neigh = order[order != qi][:k]
            counts[variant_idx[qi]] += np.bincount(
                variant_idx[neigh], minlength=n_variants
            )
        return counts

    counts = sum(map_slots(neighbor_counts, starts))
    slots = np.bincount(variant_idx, minlength=n_variants) * k
    confusion = counts / slots[:, np.newaxis]
    per_variant = {pooled.names[v]: float(confusion[v, v]) for v in range(n_variants)}
    return PurityReport(
        k=k,
        distance=distance,
        variants=pooled.names,
        confusion=confusion,
        per_variant=per_variant,
    )


def _principal_axes(centered: np.ndarray, n_components: int) -> np.ndarray:
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:n_components]
    # deterministic sign: largest-magnitude loading of each axis is positive
    for row in axes:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return axes


def project_2d(
    matrices: list[FeatureMatrix], sample_fraction: float, seed: int
) -> ProjectionResult:
    """Project a stratified subsample of the pooled points onto the top-2
    principal components.

    The subsample is seeded and per-variant (each variant contributes
    ``round(fraction * n)`` points, at least one), so plots stay comparable
    across runs. Raw subsampled vectors ride along for external tools.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ValidationError(
            f"sample_fraction must be in (0, 1], got {sample_fraction}"
        )
    pooled = _pool(matrices)

    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    for vi in range(len(pooled.names)):
        members = np.flatnonzero(pooled.variant_idx == vi)
        take = min(len(members), max(1, int(round(sample_fraction * len(members)))))
        keep.append(np.sort(rng.choice(members, size=take, replace=False)))
    keep_idx = np.concatenate(keep)
    if keep_idx.size < 3:
        raise ValidationError(
            f"subsample has {keep_idx.size} points; need at least 3 to project"
        )

    sub = pooled.points[keep_idx]
    centered = sub - sub.mean(axis=0, keepdims=True)
    axes = _principal_axes(centered, 2)
    coords = centered @ axes.T
    return ProjectionResult(
        coords=coords,
        variants=[pooled.point_variants[i] for i in keep_idx],
        sample_ids=[pooled.point_sample_ids[i] for i in keep_idx],
        raw=sub.astype(np.float32),
    )
