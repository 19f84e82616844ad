"""Toolkit for quantifying representation robustness under missing input.

Generates masked dataset variants, computes cross-variant similarity matrices
(mean squared CCA correlation, CKA), runs k-fold linear probes with balanced
accuracy, and measures K-nearest-neighbor variant purity.
"""

__version__ = "0.1.0"

from .errors import (
    AlignmentError,
    DegenerateInputError,
    IOFormatError,
    RepsimError,
    ValidationError,
)
from .masking import ImageTensor, MaskKind, MaskSpec, apply_mask, circular_masks, make_variants
from .neighbors import Distance, PurityReport, knn_variant_purity, project_2d
from .probe import (
    ProbeConfig,
    ProbeReport,
    balanced_accuracy,
    fit_linear_classifier,
    run_probe,
    stratified_folds,
)
from .similarity import CcaResult, Kernel, Metric, SimilarityMatrix, cca_r2, cka, similarity_matrix
from .store import (
    FeatureMatrix,
    Variant,
    VariantManifest,
    load_manifest,
    read_features,
    write_features,
)

__all__ = [
    "AlignmentError",
    "CcaResult",
    "DegenerateInputError",
    "Distance",
    "FeatureMatrix",
    "ImageTensor",
    "IOFormatError",
    "Kernel",
    "MaskKind",
    "MaskSpec",
    "Metric",
    "ProbeConfig",
    "ProbeReport",
    "PurityReport",
    "RepsimError",
    "SimilarityMatrix",
    "ValidationError",
    "Variant",
    "VariantManifest",
    "apply_mask",
    "balanced_accuracy",
    "cca_r2",
    "circular_masks",
    "cka",
    "fit_linear_classifier",
    "knn_variant_purity",
    "load_manifest",
    "make_variants",
    "project_2d",
    "read_features",
    "run_probe",
    "similarity_matrix",
    "stratified_folds",
    "write_features",
]
