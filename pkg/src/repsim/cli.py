"""Single entry-point binary exposing the pipeline as subcommands.

Exit-code contract: 0 success, 1 validation/usage error, 2 IO error. Every
JSON output embeds its run metadata (toolkit version, subcommand, flags,
input digests, seed, wall time); ``wall_time_s`` is the only field that
varies between otherwise identical runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import IOFormatError, ValidationError
from .masking import MaskKind, MaskSpec, run_variant_pipeline
from .neighbors import Distance, knn_variant_purity, project_2d
from .probe import ProbeConfig, format_report, report_to_dict, run_probe
from .similarity import (
    DEFAULT_RBF_BANDWIDTH,
    Metric,
    l2_normalize_rows,
    similarity_matrix,
    similarity_to_csv,
)
from .store import (
    FeatureMatrix,
    load_manifest,
    manifest_digest,
    sha256_file,
    subsample_aligned,
)
from . import npyio

PROG = "repsim"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1, not argparse's 2
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


@dataclasses.dataclass
class RunMetadata:
    toolkit_version: str
    subcommand: str
    args: dict
    input_digests: dict[str, str]
    manifest_digest: str | None
    seed: int | None
    wall_time_s: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _flag_dict(args: argparse.Namespace) -> dict:
    drop = {"func", "subcommand"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in drop:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_aligned(args: argparse.Namespace) -> tuple[list[FeatureMatrix], str, dict[str, str]]:
    manifest, matrices = load_manifest(args.manifest)
    digest = manifest_digest(manifest)
    digests = {str(args.manifest): sha256_file(args.manifest)}
    for variant in manifest.variants:
        entry = manifest.entries[variant]
        digests[str(entry.features)] = sha256_file(entry.features)
        digests[str(entry.labels)] = sha256_file(entry.labels)
    max_samples = getattr(args, "max_samples", None)
    if max_samples is not None:
        matrices = subsample_aligned(matrices, max_samples, getattr(args, "seed", 0) or 0)
    if getattr(args, "l2_normalize", False):
        matrices = [
            FeatureMatrix(
                data=l2_normalize_rows(m.data),
                sample_ids=m.sample_ids,
                labels=m.labels,
                variant=m.variant,
            )
            for m in matrices
        ]
    return matrices, digest, digests


def _parse_fill(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"fill must be integers like '0' or '0,0,0', got {text!r}")
    if len(values) not in (1, 3):
        raise ValidationError(f"fill needs 1 or 3 channel values, got {len(values)}")
    return values


def _dir_digest(path: Path) -> str:
    import hashlib

    h = hashlib.sha256()
    for child in sorted(p for p in Path(path).iterdir() if p.is_file()):
        h.update(child.name.encode())
        h.update(sha256_file(child).encode())
    return h.hexdigest()


# -- subcommand handlers --------------------------------------------------


def _cmd_variants(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    spec = MaskSpec(
        kind=MaskKind(args.kind),
        radius_fraction=args.radius_fraction,
        fill=_parse_fill(args.fill),
    )
    if not Path(args.input).is_dir():
        raise IOFormatError(f"input directory not found: {args.input}")
    summary = run_variant_pipeline(
        args.input, args.output, spec, mask_dir=args.masks
    )
    digests = {str(args.input): _dir_digest(args.input)}
    if args.masks is not None:
        digests[str(args.masks)] = _dir_digest(args.masks)
    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand="variants",
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=None,
        seed=None,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_json(Path(args.output) / "summary.json", {"metadata": meta.to_dict(), **summary})
    print(json.dumps(summary))
    return 0


def _similarity_command(args: argparse.Namespace, metric: Metric) -> int:
    t0 = time.perf_counter()
    matrices, digest, digests = _load_aligned(args)
    rbf_bandwidth = getattr(args, "rbf_bandwidth", DEFAULT_RBF_BANDWIDTH)
    sm = similarity_matrix(matrices, metric, rbf_bandwidth=rbf_bandwidth)

    out_csv = Path(args.out)
    out_csv.write_text(similarity_to_csv(sm), encoding="utf-8")
    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand=args.subcommand,
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=digest,
        seed=getattr(args, "seed", None),
        wall_time_s=time.perf_counter() - t0,
    )
    payload = {
        "metadata": meta.to_dict(),
        "metric": sm.metric.value,
        "variants": sm.variants,
        "values": sm.values.tolist(),
        "options": {
            "l2_normalize": bool(args.l2_normalize),
            "max_samples": args.max_samples,
            "rbf_bandwidth": rbf_bandwidth if metric is Metric.CKA_RBF else None,
        },
    }
    _write_json(out_csv.with_suffix(".json"), payload)
    print(similarity_to_csv(sm), end="")
    return 0


def _cmd_cca(args: argparse.Namespace) -> int:
    return _similarity_command(args, Metric.CCA_R2)


def _cmd_cka(args: argparse.Namespace) -> int:
    metric = Metric.CKA_RBF if args.kernel == "rbf" else Metric.CKA_LINEAR
    return _similarity_command(args, metric)


def _cmd_probe(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    _, digest, digests = _load_aligned(args)
    config = ProbeConfig(
        n_folds=args.folds,
        l2_penalty=args.l2,
        max_iterations=args.max_iterations,
        convergence_tol=args.tol,
        seed=args.seed,
    )
    report = run_probe(args.manifest, config)
    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand="probe",
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=digest,
        seed=args.seed,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_json(Path(args.out), {"metadata": meta.to_dict(), **report_to_dict(report)})
    print(format_report(report))
    return 0


def _cmd_knn_purity(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    matrices, digest, digests = _load_aligned(args)
    report = knn_variant_purity(matrices, args.k, Distance(args.distance))
    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand="knn-purity",
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=digest,
        seed=None,
        wall_time_s=time.perf_counter() - t0,
    )
    payload = {
        "metadata": meta.to_dict(),
        "k": report.k,
        "distance": report.distance.value,
        "variants": report.variants,
        "confusion": report.confusion.tolist(),
        "per_variant": report.per_variant,
    }
    _write_json(Path(args.out), payload)
    print(_render_matrix("variant purity confusion", report.variants, report.confusion))
    return 0


def _cmd_project(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    matrices, digest, digests = _load_aligned(args)
    result = project_2d(matrices, args.fraction, args.seed)

    out = Path(args.out)
    lines = ["x,y,variant,sample_id"]
    for (x, y), variant, sid in zip(result.coords, result.variants, result.sample_ids):
        lines.append(f"{x!r},{y!r},{variant},{sid}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    raw_path = out.with_suffix("").with_suffix(".raw.npy")
    npyio.write_matrix(result.raw, raw_path)
    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand="project",
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=digest,
        seed=args.seed,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_json(
        out.with_suffix(".json"),
        {
            "metadata": meta.to_dict(),
            "points": str(out),
            "raw_vectors": str(raw_path),
            "n_points": int(result.coords.shape[0]),
        },
    )
    print(f"wrote {result.coords.shape[0]} projected points to {out}")
    return 0


_REPORT_KINDS = {"probe": "probe", "cca": "cca", "cka": "cka", "knn-purity": "knn_purity"}


def _cmd_report(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    if not args.artifacts:
        raise ValidationError("nothing to report: no artifact files given")
    merged: dict[str, dict] = {}
    digest: str | None = None
    digests: dict[str, str] = {}
    for path in args.artifacts:
        path = Path(path)
        if not path.exists():
            raise IOFormatError(f"artifact not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IOFormatError(f"{path}: artifact is not valid JSON: {exc}") from exc
        meta = doc.get("metadata") or {}
        kind = _REPORT_KINDS.get(meta.get("subcommand"))
        if kind is None:
            raise ValidationError(
                f"{path}: not a reportable artifact (subcommand "
                f"{meta.get('subcommand')!r})"
            )
        artifact_digest = meta.get("manifest_digest")
        if artifact_digest is None:
            raise ValidationError(f"{path}: artifact carries no manifest digest")
        if digest is None:
            digest = artifact_digest
        elif digest != artifact_digest:
            raise ValidationError(
                f"cross-run contamination: {path} was produced from a different "
                f"manifest (digest {artifact_digest[:12]}… != {digest[:12]}…)"
            )
        if kind in merged:
            raise ValidationError(f"duplicate {kind} artifact: {path}")
        merged[kind] = doc
        digests[str(path)] = sha256_file(path)

    meta = RunMetadata(
        toolkit_version=__version__,
        subcommand="report",
        args=_flag_dict(args),
        input_digests=digests,
        manifest_digest=digest,
        seed=None,
        wall_time_s=time.perf_counter() - t0,
    )
    payload: dict = {"metadata": meta.to_dict()}
    for kind, doc in merged.items():
        if kind in ("cca", "cka"):
            sm_variants = doc["variants"]
            values = np.asarray(doc["values"], dtype=np.float64)
            doc = dict(doc)
            doc["csv"] = _matrix_csv(sm_variants, values)
        payload[kind] = doc
    _write_json(Path(args.out), payload)
    print(_render_report(payload))
    return 0


def _matrix_csv(variants: list[str], values: np.ndarray) -> str:
    lines = ["variant," + ",".join(variants)]
    for name, row in zip(variants, values):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _render_matrix(title: str, variants: list[str], values: np.ndarray) -> str:
    width = max(8, max(len(v) for v in variants) + 1)
    lines = [title, " " * width + "".join(v.rjust(width) for v in variants)]
    for name, row in zip(variants, values):
        lines.append(name.ljust(width) + "".join(f"{v:.4f}".rjust(width) for v in row))
    return "\n".join(lines)


def _render_report(payload: dict) -> str:
    sections = []
    if "probe" in payload:
        doc = payload["probe"]
        width = max(len(v) for v in doc["per_variant"])
        lines = [
            "linear probe (balanced accuracy, mean_(std) over "
            f"{doc['config']['n_folds']} folds)"
        ]
        for name, score in doc["per_variant"].items():
            lines.append(f"{name.ljust(width)}  {score['formatted']}")
        sections.append("\n".join(lines))
    for kind, title in (("cca", "mean squared CCA correlation"), ("cka", "CKA")):
        if kind in payload:
            doc = payload[kind]
            sections.append(
                _render_matrix(
                    f"{title} ({doc['metric']})",
                    doc["variants"],
                    np.asarray(doc["values"]),
                )
            )
    if "knn_purity" in payload:
        doc = payload["knn_purity"]
        sections.append(
            _render_matrix(
                f"KNN variant purity (k={doc['k']}, {doc['distance']})",
                doc["variants"],
                np.asarray(doc["confusion"]),
            )
        )
    return "\n\n".join(sections)


# -- parser ---------------------------------------------------------------


def _add_manifest_options(p: argparse.ArgumentParser, with_subsample: bool = True) -> None:
    p.add_argument("--manifest", required=True, type=Path, help="variant manifest JSON")
    p.add_argument(
        "--l2-normalize",
        action="store_true",
        help="L2-normalize feature rows before analysis (off by default)",
    )
    if with_subsample:
        p.add_argument(
            "--max-samples",
            type=int,
            default=None,
            help="seeded deterministic row subsample applied to every variant",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__)
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")

    p = sub.add_parser("variants", help="generate masked dataset variants", prog=f"{PROG} variants")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--kind", required=True, choices=["circular", "segmentation"])
    p.add_argument("--radius-fraction", type=float, default=0.5)
    p.add_argument("--fill", default="0", help="fill value, e.g. '0' or '0,0,0'")
    p.add_argument("--masks", type=Path, default=None, help="segmentation mask directory")
    p.set_defaults(func=_cmd_variants)

    p = sub.add_parser("cca", help="mean squared CCA correlation matrix", prog=f"{PROG} cca")
    _add_manifest_options(p)
    p.add_argument("--out", required=True, type=Path, help="output CSV (JSON twin written alongside)")
    p.add_argument("--seed", type=int, default=0, help="seed for --max-samples subsampling")
    p.set_defaults(func=_cmd_cca)

    p = sub.add_parser("cka", help="CKA similarity matrix", prog=f"{PROG} cka")
    _add_manifest_options(p)
    p.add_argument("--kernel", choices=["linear", "rbf"], default="linear")
    p.add_argument(
        "--rbf-bandwidth",
        type=float,
        default=DEFAULT_RBF_BANDWIDTH,
        help="RBF bandwidth as a fraction of the median pairwise distance",
    )
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_cka)

    p = sub.add_parser("probe", help="k-fold linear probe with balanced accuracy", prog=f"{PROG} probe")
    _add_manifest_options(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("knn-purity", help="variant purity of K nearest neighbors", prog=f"{PROG} knn-purity")
    _add_manifest_options(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--distance", choices=["euclidean", "cosine"], default="euclidean")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_cmd_knn_purity)

    p = sub.add_parser("project", help="2-D PCA projection of a pooled subsample", prog=f"{PROG} project")
    _add_manifest_options(p, with_subsample=False)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path, help="points CSV (x,y,variant,sample_id)")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("report", help="merge analysis artifacts into one document", prog=f"{PROG} report")
    p.add_argument("artifacts", nargs="*", type=Path, help="JSON artifacts from one run")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_cmd_report)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    """Route argv to a subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        print(f"{PROG}: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"{PROG} {args.subcommand}: {exc}", file=sys.stderr)
        return 1
    except (IOFormatError, OSError) as exc:
        print(f"{PROG} {args.subcommand}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())
