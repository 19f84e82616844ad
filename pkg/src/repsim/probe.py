"""K-fold linear evaluation of frozen features with balanced accuracy.

The probe is a multinomial logistic regression with an L2 penalty, fit by
deterministic full-batch L-BFGS on a hand-written loss/gradient. Folds are
stratified and shared across all variants so per-variant scores stay directly
comparable; features are standardized with train-fold statistics only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ValidationError
from .store import FeatureMatrix, load_manifest

DEFAULT_L2_PENALTY = 1e-4


@dataclass(frozen=True)
class ProbeConfig:
    n_folds: int = 5
    l2_penalty: float = DEFAULT_L2_PENALTY
    max_iterations: int = 500
    convergence_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_folds < 2:
            raise ValidationError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.l2_penalty < 0:
            raise ValidationError(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.convergence_tol <= 0:
            raise ValidationError("convergence_tol must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")


@dataclass(frozen=True)
class FittedClassifier:
    """Weights (dim x classes), bias (classes,), and convergence outcome."""

    weights: np.ndarray
    bias: np.ndarray
    converged: bool
    n_iterations: int
    loss_history: tuple[float, ...] = ()

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_values(x), axis=1)


@dataclass
class VariantScore:
    mean: float
    std: float
    per_fold: list[float]
    converged: list[bool]


@dataclass
class ProbeReport:
    """Per-variant balanced-accuracy summary over the shared folds.

    ``mean`` is the arithmetic mean and ``std`` the population standard
    deviation of the per-fold scores.
    """

    per_variant: dict[str, VariantScore]
    config: ProbeConfig
    n_classes: int = 0
    fold_sizes: list[int] = field(default_factory=list)


def stratified_folds(
    labels: list[int] | np.ndarray, n_folds: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint, exhaustive test folds preserving class proportions.

    Each class is shuffled with a seeded generator and dealt round-robin, so
    per-class fold sizes differ by at most one sample. Deterministic for a
    fixed seed. Raises if any class has fewer members than ``n_folds``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValidationError("empty label list")
    if n_folds < 2:
        raise ValidationError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng(seed)
    fold_members: list[list[int]] = [[] for _ in range(n_folds)]
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise ValidationError(
                f"class {int(cls)} has {idx.size} < {n_folds} members"
            )
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            fold_members[(j + offset) % n_folds].append(int(i))
        offset = (offset + idx.size) % n_folds

    all_idx = np.arange(labels.size)
    folds = []
    for members in fold_members:
        test = np.sort(np.asarray(members, dtype=np.int64))
        train = np.setdiff1d(all_idx, test, assume_unique=True)
        folds.append((train, test))
    return folds


def balanced_accuracy(
    y_true: np.ndarray | list[int], y_pred: np.ndarray | list[int], n_classes: int
) -> float:
    """Mean per-class recall over the classes present in ``y_true``."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValidationError("empty input")
    if y_true.shape != y_pred.shape:
        raise ValidationError(
            f"length mismatch: {y_true.size} true vs {y_pred.size} predicted"
        )
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValidationError(f"{name} contains labels outside [0, {n_classes})")
    recalls = []
    for cls in np.unique(y_true):
        in_class = y_true == cls
        recalls.append(float(np.mean(y_pred[in_class] == cls)))
    return float(np.mean(recalls))


def _loss_and_grad(
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    l2_penalty: float,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy + (l2/2)||W||^2 with its analytic gradient.

    The bias row is unpenalized so class priors survive strong regularization.
    """
    n, dim = x.shape
    w = params[: dim * n_classes].reshape(dim, n_classes)
    b = params[dim * n_classes :]
    logits = x @ w + b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    denom = exp.sum(axis=1)
    log_probs = logits - np.log(denom)[:, np.newaxis]
    loss = -float(np.mean(log_probs[np.arange(n), y]))
    loss += 0.5 * l2_penalty * float(np.sum(w * w))

    probs = exp / denom[:, np.newaxis]
    probs[np.arange(n), y] -= 1.0
    grad_w = x.T @ probs / n + l2_penalty * w
    grad_b = probs.mean(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


def fit_linear_classifier(
    x_train: np.ndarray,
    y_train: np.ndarray | list[int],
    config: ProbeConfig,
    n_classes: int | None = None,
    record_history: bool = False,
) -> FittedClassifier:
    """Fit the multinomial logistic probe by full-batch L-BFGS.

    Accepted line-search steps never increase the training loss; the result
    carries ``converged=False`` (not an error) when the gradient-norm
    criterion is not met within ``max_iterations``.
    """
    x = np.asarray(x_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.int64)
    if x.ndim != 2:
        raise ValidationError("training features must be 2-D")
    if x.shape[0] != y.size:
        raise ValidationError("feature/label count mismatch")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if x.shape[0] < n_classes:
        raise ValidationError(
            f"need at least {n_classes} training samples, got {x.shape[0]}"
        )

    dim = x.shape[1]
    x0 = np.zeros(dim * n_classes + n_classes, dtype=np.float64)
    history: list[float] = []
    callback = None
    if record_history:
        history.append(_loss_and_grad(x0, x, y, n_classes, config.l2_penalty)[0])

        def callback(params: np.ndarray) -> None:
            history.append(_loss_and_grad(params, x, y, n_classes, config.l2_penalty)[0])

    result = optimize.minimize(
        _loss_and_grad,
        x0,
        args=(x, y, n_classes, config.l2_penalty),
        method="L-BFGS-B",
        jac=True,
        callback=callback,
        options={
            "maxiter": config.max_iterations,
            "pgtol": config.convergence_tol,
            "ftol": 1e-14,
            "maxfun": 10 * config.max_iterations,
        },
    )
    converged = bool(np.max(np.abs(result.jac)) <= config.convergence_tol)
    return FittedClassifier(
        weights=result.x[: dim * n_classes].reshape(dim, n_classes),
        bias=result.x[dim * n_classes :],
        converged=converged,
        n_iterations=int(result.nit),
        loss_history=tuple(history),
    )


def standardize(
    train: np.ndarray, *apply_to: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Zero-mean unit-variance scaling using train statistics only.

    Constant dimensions keep a unit divisor so they map to exactly zero.
    """
    train = np.asarray(train, dtype=np.float64)
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0.0] = 1.0
    out = [(train - mean) / std]
    out.extend((np.asarray(a, dtype=np.float64) - mean) / std for a in apply_to)
    return tuple(out)


def probe_variants(
    matrices: list[FeatureMatrix], config: ProbeConfig
) -> ProbeReport:
    """Run the probe protocol on aligned variant matrices.

    Fold assignments are computed once from the shared labels and reused for
    every variant (paired comparison). Deterministic for a fixed seed.
    """
    if not matrices:
        raise ValidationError("no variant matrices given")
    labels = np.asarray(matrices[0].labels, dtype=np.int64)
    for mat in matrices[1:]:
        if mat.labels != matrices[0].labels:
            raise ValidationError("variants disagree on labels; reload via manifest")
    n_classes = int(labels.max()) + 1
    folds = stratified_folds(labels, config.n_folds, config.seed)

    per_variant: dict[str, VariantScore] = {}
    for mat in matrices:
        data = np.asarray(mat.data, dtype=np.float64)
        scores: list[float] = []
        converged: list[bool] = []
        for train_idx, test_idx in folds:
            x_train, x_test = standardize(data[train_idx], data[test_idx])
            fitted = fit_linear_classifier(
                x_train, labels[train_idx], config, n_classes=n_classes
            )
            y_pred = fitted.predict(x_test)
            scores.append(balanced_accuracy(labels[test_idx], y_pred, n_classes))
            converged.append(fitted.converged)
        per_variant[mat.variant.key] = VariantScore(
            mean=float(np.mean(scores)),
            std=float(np.std(scores)),
            per_fold=scores,
            converged=converged,
        )
    return ProbeReport(
        per_variant=per_variant,
        config=config,
        n_classes=n_classes,
        fold_sizes=[len(test) for _, test in folds],
    )


def run_probe(manifest_path: Path, config: ProbeConfig) -> ProbeReport:
    """Load a manifest and probe every variant it declares."""
    _, matrices = load_manifest(manifest_path)
    return probe_variants(matrices, config)


def format_score(mean: float, std: float) -> str:
    """Render one cell in the ``mean_(std)`` table style, 2 decimal places
    with trailing zeros trimmed (0.30 prints as 0.3)."""
    return f"{round(mean, 2)}_({round(std, 2)})"


def format_report(report: ProbeReport) -> str:
    """Human-readable table with one row per variant."""
    width = max(len(name) for name in report.per_variant)
    lines = [f"{'variant'.ljust(width)}  balanced accuracy (mean_(std) over "
             f"{report.config.n_folds} folds)"]
    for name, score in report.per_variant.items():
        lines.append(f"{name.ljust(width)}  {format_score(score.mean, score.std)}")
    return "\n".join(lines)


def report_to_dict(report: ProbeReport) -> dict:
    return {
        "config": asdict(report.config),
        "n_classes": report.n_classes,
        "fold_sizes": report.fold_sizes,
        "per_variant": {
            name: {
                "mean": score.mean,
                "std": score.std,
                "per_fold": score.per_fold,
                "converged": score.converged,
                "formatted": format_score(score.mean, score.std),
            }
            for name, score in report.per_variant.items()
        },
    }
