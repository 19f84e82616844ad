"""Foreground/Background and Center/Border variant construction.

Two mask families split each image into a complementary pair that shares no
original pixels: a circular mask centered in the frame (Center/Border) and an
externally supplied binary object segmentation (Foreground/Background).
Masking happens in raw pixel space, before any resize or normalization.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IOFormatError, ValidationError
from .store import Variant

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# Segmentation mask convention: single-channel PNG, value > 127 is foreground.
MASK_THRESHOLD = 127

DEFAULT_RADIUS_FRACTION = 0.5


class MaskKind(enum.Enum):
    CIRCULAR = "circular"
    SEGMENTATION = "segmentation"


@dataclass(frozen=True)
class MaskSpec:
    """Parameters of one masking transformation.

    ``radius_fraction`` scales the circle radius relative to ``min(H, W)/2``;
    ``fill`` is the per-channel replacement value for removed pixels;
    ``mask_path`` points at the external segmentation mask (segmentation only).
    """

    kind: MaskKind
    radius_fraction: float = DEFAULT_RADIUS_FRACTION
    fill: tuple[int, ...] = (0,)
    mask_path: Path | None = None

    def __post_init__(self) -> None:
        if self.kind is MaskKind.CIRCULAR:
            if not 0.0 < self.radius_fraction <= 1.0:
                raise ValidationError(
                    f"radius_fraction must be in (0, 1], got {self.radius_fraction}"
                )
        if any(not 0 <= v <= 255 for v in self.fill):
            raise ValidationError(f"fill values must be 8-bit, got {self.fill}")


@dataclass(eq=False)
class ImageTensor:
    """H x W x C array of 8-bit channel values plus its sample id."""

    pixels: np.ndarray
    sample_id: str

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim == 2:
            self.pixels = self.pixels[:, :, np.newaxis]
        if self.pixels.ndim != 3:
            raise ValidationError(f"image must be H x W x C, got shape {self.pixels.shape}")
        h, w, c = self.pixels.shape
        if h < 1 or w < 1:
            raise ValidationError(f"image dimensions must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise ValidationError(f"channel count must be 1 or 3, got {c}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def circular_masks(h: int, w: int, radius_fraction: float) -> np.ndarray:
    """Binary disk mask: 1 iff (x-cx)^2 + (y-cy)^2 <= r^2.

    The continuous center sits at ``((w-1)/2, (h-1)/2)`` and
    ``r = radius_fraction * min(h, w) / 2``, so the mask covers the same
    distance in every direction regardless of parity of h and w.
    """
    if h < 1 or w < 1:
        raise ValidationError(f"mask dimensions must be >= 1, got {h}x{w}")
    if not 0.0 < radius_fraction <= 1.0:
        raise ValidationError(f"radius_fraction must be in (0, 1], got {radius_fraction}")
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    r = radius_fraction * min(h, w) / 2.0
    yy = (np.arange(h, dtype=np.float64) - cy) ** 2
    xx = (np.arange(w, dtype=np.float64) - cx) ** 2
    return (yy[:, np.newaxis] + xx[np.newaxis, :]) <= r * r


def _fill_vector(fill: tuple[int, ...], channels: int) -> np.ndarray:
    if len(fill) == 1:
        return np.full(channels, fill[0], dtype=np.uint8)
    if len(fill) != channels:
        raise ValidationError(
            f"fill has {len(fill)} channel(s), image has {channels}"
        )
    return np.asarray(fill, dtype=np.uint8)


def apply_mask(img: ImageTensor, mask: np.ndarray, fill: tuple[int, ...] = (0,)) -> ImageTensor:
    """Keep pixels where mask is 1, replace the rest with *fill*."""
    mask = np.asarray(mask)
    if mask.shape != (img.height, img.width):
        raise ValidationError(
            f"mask shape {mask.shape} != image shape {(img.height, img.width)}"
        )
    if mask.dtype != bool:
        values = np.unique(mask)
        if not np.isin(values, (0, 1)).all():
            raise ValidationError("mask is not binary")
        mask = mask.astype(bool)
    fill_px = _fill_vector(fill, img.channels)
    out = np.where(mask[:, :, np.newaxis], img.pixels, fill_px[np.newaxis, np.newaxis, :])
    return ImageTensor(pixels=out, sample_id=img.sample_id)


def load_segmentation_mask(path: Path, expected_hw: tuple[int, int]) -> np.ndarray:
    """Read a single-channel mask PNG; value > 127 means foreground."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("1", "L"):
                raise ValidationError(
                    f"{path}: segmentation mask must be single-channel, got mode {im.mode!r}"
                )
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError as exc:
        raise IOFormatError(f"mask file not found: {path}") from exc
    except (OSError, UnidentifiedImageError) as exc:
        raise IOFormatError(f"cannot decode mask {path}: {exc}") from exc
    if arr.shape != expected_hw:
        raise ValidationError(
            f"{path}: mask shape {arr.shape} != image shape {expected_hw}"
        )
    return arr > MASK_THRESHOLD


def variant_names(kind: MaskKind) -> tuple[Variant, Variant]:
    """(kept, complement) variant labels for a mask family."""
    if kind is MaskKind.CIRCULAR:
        return Variant.CENTER, Variant.BORDER
    return Variant.FOREGROUND, Variant.BACKGROUND


def make_variants(img: ImageTensor, spec: MaskSpec) -> tuple[ImageTensor, ImageTensor]:
    """Split *img* into its (kept, complement) pair.

    The retained-pixel regions are exactly disjoint and exhaustive:
    recomposing the pair reproduces the original image bit-exactly.
    """
    if spec.kind is MaskKind.CIRCULAR:
        mask = circular_masks(img.height, img.width, spec.radius_fraction)
    else:
        if spec.mask_path is None:
            raise ValidationError("segmentation spec requires mask_path")
        mask = load_segmentation_mask(spec.mask_path, (img.height, img.width))
    kept = apply_mask(img, mask, spec.fill)
    complement = apply_mask(img, ~mask, spec.fill)
    return kept, complement


def _load_image(path: Path) -> ImageTensor:
    with Image.open(path) as im:
        if im.mode in ("1", "L"):
            arr = np.asarray(im.convert("L"))
        else:
            arr = np.asarray(im.convert("RGB"))
    return ImageTensor(pixels=arr, sample_id=path.stem)


def _find_mask(mask_dir: Path, stem: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = mask_dir / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def run_variant_pipeline(
    input_dir: Path,
    output_dir: Path,
    spec: MaskSpec,
    mask_dir: Path | None = None,
) -> dict[str, int]:
    """Write both variants of every decodable image in *input_dir*.

    Outputs ``<stem>.<variant>.png`` files plus ``summary.json`` with counts
    ``{processed, skipped, errors}``. Images lacking a segmentation mask are
    skipped with a log line; undecodable images are counted as errors, not
    fatal. Processing order is sorted by sample id, so the summary is
    deterministic.
    """
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    if not input_dir.is_dir():
        raise IOFormatError(f"input directory not found: {input_dir}")
    if spec.kind is MaskKind.SEGMENTATION and mask_dir is None:
        raise ValidationError("segmentation pipeline requires a mask directory")
    output_dir.mkdir(parents=True, exist_ok=True)

    paths = sorted(
        (p for p in input_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.stem,
    )
    kept_name, comp_name = variant_names(spec.kind)
    summary = {"processed": 0, "skipped": 0, "errors": 0}
    for path in paths:
        per_image_spec = spec
        if spec.kind is MaskKind.SEGMENTATION:
            mask_path = _find_mask(mask_dir, path.stem)
            if mask_path is None:
                logger.warning("no mask for %s, skipping", path.name)
                summary["skipped"] += 1
                continue
            per_image_spec = replace(spec, mask_path=mask_path)
        try:
            img = _load_image(path)
            kept, complement = make_variants(img, per_image_spec)
        except (IOFormatError, ValidationError, UnidentifiedImageError, OSError) as exc:
            logger.warning("failed on %s: %s", path.name, exc)
            summary["errors"] += 1
            continue
        for variant, out_img in ((kept_name, kept), (comp_name, complement)):
            out_path = output_dir / f"{path.stem}.{variant.key}.png"
            pixels = out_img.pixels
            if pixels.shape[2] == 1:
                pixels = pixels[:, :, 0]
            Image.fromarray(pixels).save(out_path)
        summary["processed"] += 1

    with open(output_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary
