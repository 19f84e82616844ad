"""Shared fixtures: synthetic feature sets and on-disk manifests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from repsim.store import (
    FeatureMatrix,
    ManifestEntry,
    Variant,
    labels_path_for,
    write_features,
    write_manifest,
)


def make_matrix(
    n: int = 12,
    dim: int = 4,
    variant: Variant = Variant.ORIGINAL,
    seed: int = 0,
    n_classes: int = 3,
    data: np.ndarray | None = None,
) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    if data is None:
        data = rng.normal(size=(n, dim)).astype(np.float32)
    n = data.shape[0]
    return FeatureMatrix(
        data=data,
        sample_ids=[f"img{i:04d}" for i in range(n)],
        labels=[i % n_classes for i in range(n)],
        variant=variant,
    )


def write_manifest_tree(
    tmp_path: Path,
    per_variant: dict[Variant, np.ndarray],
    labels: list[int],
    model: str = "testmodel",
    dataset: str = "testdata",
    sample_ids: list[str] | None = None,
) -> Path:
    """Materialize aligned variant feature files plus a manifest JSON."""
    n = len(labels)
    if sample_ids is None:
        sample_ids = [f"img{i:04d}" for i in range(n)]
    entries = {}
    for variant, data in per_variant.items():
        path = tmp_path / f"{variant.key}.npy"
        write_features(
            FeatureMatrix(data=data, sample_ids=sample_ids, labels=labels, variant=variant),
            path,
        )
        entries[variant] = ManifestEntry(features=path, labels=labels_path_for(path))
    manifest_path = tmp_path / "manifest.json"
    write_manifest(manifest_path, model, dataset, entries)
    return manifest_path


@pytest.fixture
def five_variant_manifest(tmp_path: Path) -> Path:
    rng = np.random.default_rng(7)
    n, dim = 30, 5
    labels = [i % 3 for i in range(n)]
    base = rng.normal(size=(n, dim)).astype(np.float32)
    per_variant = {
        Variant.ORIGINAL: base,
        Variant.FOREGROUND: base + 0.1 * rng.normal(size=(n, dim)).astype(np.float32),
        Variant.BACKGROUND: rng.normal(size=(n, dim)).astype(np.float32),
        Variant.CENTER: base + 0.2 * rng.normal(size=(n, dim)).astype(np.float32),
        Variant.BORDER: rng.normal(size=(n, dim)).astype(np.float32),
    }
    return write_manifest_tree(tmp_path, per_variant, labels)
