"""On-disk exchange format for feature matrices, labels, and manifests.

A feature set for one model+dataset pair is a small tree of files:

* ``<stem>.npy`` -- the embedding matrix (see :mod:`repsim.npyio`),
* ``<stem>.labels.csv`` -- sidecar with header ``sample_id,label``; its row
  order defines the matrix row order,
* ``manifest.json`` -- ``{model, dataset, variants: {original: {features,
  labels}, ...}, class_names?}`` tying the per-variant files together.

Loading is pure: loaded matrices are immutable (arrays are write-locked) and
safe to share across concurrent analysis tasks.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import npyio
from .errors import AlignmentError, IOFormatError, ValidationError


class Variant(enum.Enum):
    """The five dataset views, in canonical presentation order."""

    ORIGINAL = "original"
    FOREGROUND = "foreground"
    BACKGROUND = "background"
    CENTER = "center"
    BORDER = "border"

    @property
    def key(self) -> str:
        return self.value

    @classmethod
    def from_key(cls, key: str) -> "Variant":
        try:
            return cls(key.lower())
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ValidationError(f"unknown variant {key!r}; expected one of: {valid}")


VARIANT_ORDER = tuple(Variant)


@dataclass(eq=False)
class FeatureMatrix:
    """An ``n_samples x dim`` embedding matrix with aligned ids and labels.

    Data is normalized to little-endian float32 (the storage dtype) on
    construction so that a write/read roundtrip is bit-exact.
    """

    data: np.ndarray
    sample_ids: list[str]
    labels: list[int]
    variant: Variant

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype="<f4")
        if self.data.ndim != 2:
            raise ValidationError(f"feature data must be 2-D, got shape {self.data.shape}")
        n, dim = self.data.shape
        if dim < 1:
            raise ValidationError("feature dimension must be >= 1")
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.labels = [int(v) for v in self.labels]
        if len(self.sample_ids) != n:
            raise ValidationError(
                f"sample_id count {len(self.sample_ids)} != sample count {n}"
            )
        if len(self.labels) != n:
            raise ValidationError(f"label count {len(self.labels)} != sample count {n}")
        if len(set(self.sample_ids)) != n:
            dup = next(s for s in self.sample_ids if self.sample_ids.count(s) > 1)
            raise ValidationError(f"duplicate sample_id {dup!r}")
        if any(v < 0 for v in self.labels):
            raise ValidationError("labels must be non-negative class indices")
        _check_finite(self.data)
        self.data.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def reordered(self, order: np.ndarray) -> "FeatureMatrix":
        """Row permutation; returns a new matrix."""
        return FeatureMatrix(
            data=self.data[order],
            sample_ids=[self.sample_ids[i] for i in order],
            labels=[self.labels[i] for i in order],
            variant=self.variant,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.variant is other.variant
            and self.sample_ids == other.sample_ids
            and self.labels == other.labels
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass
class ManifestEntry:
    features: Path
    labels: Path


@dataclass
class VariantManifest:
    model_name: str
    dataset_name: str
    entries: dict[Variant, ManifestEntry]
    class_names: list[str] | None = None
    path: Path | None = field(default=None, compare=False)

    @property
    def variants(self) -> list[Variant]:
        return [v for v in VARIANT_ORDER if v in self.entries]


def _check_finite(data: np.ndarray) -> None:
    if not np.isfinite(data).all():
        row, col = np.argwhere(~np.isfinite(data))[0]
        raise ValidationError(f"non-finite value at ({row}, {col})")


def labels_path_for(feature_path: Path) -> Path:
    """Sidecar convention: ``features.npy`` -> ``features.labels.csv``."""
    feature_path = Path(feature_path)
    return feature_path.with_suffix("").with_suffix(".labels.csv")


def _write_labels(path: Path, sample_ids: list[str], labels: list[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label"])
        for sid, lab in zip(sample_ids, labels):
            writer.writerow([sid, lab])


def _read_labels(path: Path) -> tuple[list[str], list[int]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOFormatError(f"cannot read labels file {path}: {exc}") from exc
    if not rows or rows[0] != ["sample_id", "label"]:
        raise IOFormatError(f"{path}: expected header 'sample_id,label'")
    sample_ids, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise IOFormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        sid, lab = row
        if not lab.lstrip("-").isdigit():
            raise IOFormatError(f"{path}:{lineno}: label {lab!r} is not an integer")
        sample_ids.append(sid)
        labels.append(int(lab))
    return sample_ids, labels


def write_features(matrix: FeatureMatrix, path: Path) -> None:
    """Serialize *matrix* to *path* plus its ``.labels.csv`` sidecar.

    A subsequent :func:`read_features` of the same path returns a bit-identical
    matrix.
    """
    path = Path(path)
    npyio.write_matrix(matrix.data, path)
    _write_labels(labels_path_for(path), matrix.sample_ids, matrix.labels)


def read_features(
    path: Path,
    variant: Variant = Variant.ORIGINAL,
    labels_path: Path | None = None,
) -> FeatureMatrix:
    """Load a feature file and join labels from its sidecar by row order."""
    path = Path(path)
    if not path.exists():
        raise IOFormatError(f"feature file not found: {path}")
    data = npyio.read_matrix(path)
    sidecar = Path(labels_path) if labels_path is not None else labels_path_for(path)
    sample_ids, labels = _read_labels(sidecar)
    if len(labels) != data.shape[0]:
        raise ValidationError(
            f"label count {len(labels)} != sample count {data.shape[0]} "
            f"({sidecar} vs {path})"
        )
    return FeatureMatrix(data=data, sample_ids=sample_ids, labels=labels, variant=variant)


def _parse_manifest(path: Path) -> VariantManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IOFormatError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IOFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc

    for key in ("model", "dataset", "variants"):
        if key not in doc:
            raise IOFormatError(f"{path}: manifest missing key {key!r}")
    if not isinstance(doc["variants"], dict) or not doc["variants"]:
        raise IOFormatError(f"{path}: manifest 'variants' must be a non-empty object")

    base = path.parent
    entries: dict[Variant, ManifestEntry] = {}
    for key, entry in doc["variants"].items():
        variant = Variant.from_key(key)
        if not isinstance(entry, dict) or "features" not in entry:
            raise IOFormatError(f"{path}: variant {key!r} needs a 'features' path")
        features = base / entry["features"]
        labels = (
            base / entry["labels"] if "labels" in entry else labels_path_for(features)
        )
        entries[variant] = ManifestEntry(features=features, labels=labels)

    class_names = doc.get("class_names")
    if class_names is not None and not all(isinstance(c, str) for c in class_names):
        raise IOFormatError(f"{path}: class_names must be strings")
    return VariantManifest(
        model_name=str(doc["model"]),
        dataset_name=str(doc["dataset"]),
        entries=entries,
        class_names=class_names,
        path=path,
    )


def load_manifest(path: Path) -> tuple[VariantManifest, list[FeatureMatrix]]:
    """Load a manifest and all referenced matrices, canonically aligned.

    All variants are verified to reference the same sample_id set, reordered
    to lexicographic sample order, and checked for identical dimensionality
    and per-sample labels. Matrices are returned in canonical variant order.
    Loading the same manifest twice yields identical in-memory ordering.
    """
    manifest = _parse_manifest(Path(path))
    if len(manifest.entries) < 2:
        raise ValidationError(
            f"manifest declares {len(manifest.entries)} variant(s); need at least 2"
        )

    matrices: list[FeatureMatrix] = []
    for variant in manifest.variants:
        entry = manifest.entries[variant]
        if not entry.features.exists():
            raise IOFormatError(f"feature file not found: {entry.features}")
        mat = read_features(entry.features, variant=variant, labels_path=entry.labels)
        order = np.argsort(np.array(mat.sample_ids, dtype=object), kind="stable")
        matrices.append(mat.reordered(order))

    ref = matrices[0]
    ref_ids = ref.sample_ids
    for mat in matrices[1:]:
        if mat.sample_ids != ref_ids:
            missing = sorted(set(ref_ids) ^ set(mat.sample_ids))
            detail = f"; first mismatched id: {missing[0]!r}" if missing else ""
            raise AlignmentError(
                f"sample_id sets differ between {ref.variant.key} and "
                f"{mat.variant.key}{detail}"
            )
        if mat.dim != ref.dim:
            raise AlignmentError(
                f"dimension mismatch: {ref.variant.key} has dim {ref.dim}, "
                f"{mat.variant.key} has dim {mat.dim}"
            )
        if mat.labels != ref.labels:
            i = next(i for i, (a, b) in enumerate(zip(ref.labels, mat.labels)) if a != b)
            raise AlignmentError(
                f"label mismatch for sample {ref_ids[i]!r}: {ref.variant.key}="
                f"{ref.labels[i]}, {mat.variant.key}={mat.labels[i]}"
            )
    if manifest.class_names is not None:
        n_classes = len(manifest.class_names)
        bad = [v for v in ref.labels if v >= n_classes]
        if bad:
            raise ValidationError(
                f"label {bad[0]} out of range for {n_classes} class_names"
            )
    return manifest, matrices


def write_manifest(
    path: Path,
    model_name: str,
    dataset_name: str,
    entries: dict[Variant, ManifestEntry],
    class_names: list[str] | None = None,
) -> None:
    """Write a manifest JSON with paths stored relative to the manifest."""
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        p = Path(p)
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return str(p)

    doc: dict = {
        "model": model_name,
        "dataset": dataset_name,
        "variants": {
            v.key: {"features": rel(e.features), "labels": rel(e.labels)}
            for v, e in entries.items()
        },
    }
    if class_names is not None:
        doc["class_names"] = list(class_names)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def subsample_aligned(
    matrices: list[FeatureMatrix], max_samples: int, seed: int
) -> list[FeatureMatrix]:
    """Deterministic row subsample applied identically to every variant.

    Keeps alignment intact; a no-op when ``max_samples >= n``.
    """
    if max_samples < 1:
        raise ValidationError("max_samples must be >= 1")
    n = matrices[0].n_samples
    if max_samples >= n:
        return matrices
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=max_samples, replace=False))
    return [m.reordered(keep) for m in matrices]


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_digest(manifest: VariantManifest) -> str:
    """Stable content hash over the manifest file and every referenced file."""
    if manifest.path is None:
        raise ValidationError("manifest has no on-disk path to digest")
    h = hashlib.sha256()
    h.update(sha256_file(manifest.path).encode())
    for variant in manifest.variants:
        entry = manifest.entries[variant]
        h.update(variant.key.encode())
        h.update(sha256_file(entry.features).encode())
        h.update(sha256_file(entry.labels).encode())
    return h.hexdigest()
