"""cli.py - Command-line entry point (``gait-rdf``).

Subcommands::

    gait-rdf extract --manifest M --features CF --out features.csv
    gait-rdf eval {cv,ksweep,gallery,cmc,ablate,rsm} --manifest M [...] --out DIR
    gait-rdf synth -n 10 -s 5 -f 300 --noise 0 --seed 1 --out DIR
    gait-rdf serve [--manifest M] [--features CF] [--port 5000]

Every command except ``serve`` writes a ``run.json`` manifest next to its
results recording the resolved parameters, the inputs, the tool version and
start/end timestamps.  ``--seed`` determines every random draw, so re-running
with the recorded parameters reproduces the result files byte for byte.

Exit codes: 0 on success, 1 on a contract, parse or validation error, 2 on
an I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, NoReturn

from _common import FeatureKind, GaitError, __version__
from config import _active_env_overrides, configure_logging, load_config
from ensemble import EnsembleConfig
from evaluation import (
    EvalReport,
    ProbeRecord,
    ablate_rdf_subsets,
    cmc,
    compare_rsm,
    gallery_sweep,
    k_sweep,
    kfold_cv,
    write_cmc_csv,
    write_cv_csv,
    write_gallery_csv,
    write_ksweep_csv,
    write_probes_csv,
    write_rsm_csv,
)
from features import build_feature_table, write_feature_csv, write_skip_report
from skeleton import load_dataset
from synth import NoiseConfig, generate_dataset_with_truth, write_synthetic_tree

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

logger = logging.getLogger(__name__)

__all__ = [
    "EXIT_CONTRACT",
    "EXIT_IO",
    "EXIT_OK",
    "RunManifest",
    "build_parser",
    "cmd_eval",
    "cmd_extract",
    "cmd_serve",
    "cmd_synth",
    "main",
]

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_IO = 2

_EXPERIMENTS = ("cv", "ksweep", "gallery", "cmc", "ablate", "rsm")


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class RunManifest:
    """Provenance record written as ``run.json`` with every run."""

    command: str
    parameters: dict[str, Any]
    seed: int | None
    inputs: list[str]
    version: str = __version__
    env_overrides: dict[str, str] = field(default_factory=_active_env_overrides)
    started_at: str = field(default_factory=_utc_now)
    finished_at: str | None = None
    outputs: list[str] = field(default_factory=list)

    def write(self, path: Path) -> None:
        self.finished_at = _utc_now()
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        logger.debug("Wrote run manifest %s", path)


def _jsonable(args: argparse.Namespace) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [v.value if isinstance(v, FeatureKind) else v for v in value]
        elif isinstance(value, FeatureKind):
            value = value.value
        params[key] = value
    return params


# ---------------------------------------------------------------------------
# Argument types
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    """Parse ``"1,2,5"``, ``"1-70"`` or ``"10-140:10"`` into integers."""
    values: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()  # noqa: PLW2901
            if not part:
                continue
            span, _, step = part.partition(":")
            if "-" in span:
                lo, hi = span.split("-", 1)
                values.extend(range(int(lo), int(hi) + 1, int(step or 1)))
            else:
                values.append(int(span))
    except ValueError as exc:
        msg = f"not an integer list: {text!r}"
        raise argparse.ArgumentTypeError(msg) from exc
    if not values:
        msg = f"empty integer list: {text!r}"
        raise argparse.ArgumentTypeError(msg)
    return values


def _feature_kind(text: str) -> FeatureKind:
    try:
        return FeatureKind(text.strip().upper())
    except ValueError as exc:
        msg = f"unknown feature set {text!r} (choose from {', '.join(k.value for k in FeatureKind)})"
        raise argparse.ArgumentTypeError(msg) from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_extract(args: argparse.Namespace) -> int:
    """Write one feature row per sequence of ``--manifest`` to ``--out``."""
    run = RunManifest("extract", _jsonable(args), None, [str(args.manifest)])
    dataset = load_dataset(args.manifest, workers=args.workers)
    table = build_feature_table(dataset, args.features, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        write_feature_csv(table, fh)
    skipped = out.with_name(f"{out.stem}.skipped.csv")
    with skipped.open("w", encoding="utf-8", newline="") as fh:
        write_skip_report(table.skipped, fh)
    run.outputs = [str(out), str(skipped)]
    run.write(out.with_name(f"{out.stem}.run.json"))
    logger.info("Wrote %d feature row(s) to %s", len(table), out)
    return EXIT_OK


def _write(path: Path, writer: Callable[..., None], payload: Any, outputs: list[str]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer(payload, fh)
    outputs.append(str(path))


def _probe_log(reports: Iterable[EvalReport]) -> list[ProbeRecord]:
    return [p for r in reports for p in r.probes]


def cmd_eval(args: argparse.Namespace) -> int:
    """Run one experiment and write its CSV, ``probes.csv`` and ``run.json``."""
    run = RunManifest(f"eval {args.experiment}", _jsonable(args), args.seed, [str(args.manifest)])
    dataset = load_dataset(args.manifest, workers=args.workers)
    config = EnsembleConfig(L=args.L, N=args.N, K=args.K, seed=args.seed)
    folds = args.folds if args.folds is not None else load_config()["folds"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    common: dict[str, Any] = {"workers": args.workers}
    probes: list[ProbeRecord]

    if args.experiment == "cv":
        reports = [
            kfold_cv(dataset, kind, folds, config, args.rsm, args.seed, **common)
            for kind in args.features
        ]
        _write(out / "cv.csv", write_cv_csv, reports, outputs)
        probes = _probe_log(reports)
    elif args.experiment == "ksweep":
        curves = {
            kind: k_sweep(
                dataset,
                kind,
                args.k_values,
                config,
                args.seed,
                folds=folds,
                use_rsm=args.rsm,
                **common,
            )
            for kind in args.features
        }
        _write(out / "ksweep.csv", write_ksweep_csv, curves, outputs)
        probes = _probe_log(p.report for points in curves.values() for p in points)
    elif args.experiment == "gallery":
        sweeps = [
            gallery_sweep(
                dataset,
                kind,
                args.sizes,
                args.reps,
                config,
                args.seed,
                use_rsm=args.rsm,
                **common,
            )
            for kind in args.features
        ]
        _write(out / "gallery.csv", write_gallery_csv, sweeps, outputs)
        probes = [p for s in sweeps for p in s.probes]
    elif args.experiment == "cmc":
        reports = [
            cmc(
                dataset,
                kind,
                args.max_rank,
                config,
                args.seed,
                use_rsm=args.rsm,
                folds=args.folds,
                **common,
            )
            for kind in args.features
        ]
        _write(out / "cmc.csv", write_cmc_csv, reports, outputs)
        probes = _probe_log(reports)
    elif args.experiment == "ablate":
        ablation = ablate_rdf_subsets(
            dataset,
            config,
            args.seed,
            folds=folds,
            use_rsm=args.rsm,
            **common,
        )
        _write(out / "ablate.csv", write_cv_csv, ablation.values(), outputs)
        probes = _probe_log(ablation.values())
    else:
        comparisons = compare_rsm(dataset, args.features, folds, config, args.seed, **common)
        _write(out / "rsm.csv", write_rsm_csv, comparisons, outputs)
        probes = _probe_log(r for c in comparisons for r in (c.without_rsm, c.with_rsm))

    _write(out / "probes.csv", write_probes_csv, probes, outputs)
    run.outputs = outputs
    run.write(out / "run.json")
    logger.info("Results written to %s", out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic dataset tree under ``--out``."""
    run = RunManifest("synth", _jsonable(args), args.seed, [])
    noise = NoiseConfig(
        coord_std=args.noise,
        occlusion_rate=args.occlusion,
        inferred_std=args.inferred_std,
        occlusion_mode=args.occlusion_mode,
    )
    dataset, truth = generate_dataset_with_truth(
        args.subjects,
        args.sequences,
        args.frames,
        noise,
        args.seed,
        workers=args.workers,
    )
    out = Path(args.out)
    manifest = write_synthetic_tree(out, dataset, truth)
    run.outputs = [str(manifest), str(out / "truth.json")]
    run.write(out / "run.json")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    """Start the identification service."""
    if args.manifest:
        os.environ["GAIT_GALLERY_MANIFEST"] = str(args.manifest)
    if args.features:
        os.environ["GAIT_GALLERY_FEATURES"] = args.features.value
    import app  # noqa: PLC0415

    app.run(host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with :data:`EXIT_CONTRACT`."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONTRACT, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser, cfg: dict[str, Any]) -> None:
    parser.add_argument(
        "--workers",
        type=int,
        default=cfg["workers"],
        help="worker threads (default: %(default)s)",
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser; defaults come from :func:`config.load_config`."""
    cfg = load_config()
    parser = _Parser(
        prog="gait-rdf",
        description="Skeleton gait recognition with relative distance features.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract one feature set to CSV")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=_feature_kind, default=FeatureKind(cfg["features"]))
    p.add_argument("--out", type=Path, required=True, help="feature CSV path")
    _add_common(p, cfg)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="run an identification experiment")
    p.add_argument("experiment", choices=_EXPERIMENTS)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument(
        "--features",
        type=_feature_kind,
        nargs="+",
        default=[FeatureKind(cfg["features"])],
    )
    p.add_argument("--folds", type=int, default=None, help=f"default {cfg['folds']}; cmc: leave-one-out")
    p.add_argument("--K", type=int, default=cfg["ensemble"]["K"])
    p.add_argument("--L", type=int, default=cfg["ensemble"]["L"])
    p.add_argument("--N", type=int, default=cfg["ensemble"]["N"])
    p.add_argument("--seed", type=int, default=cfg["seed"])
    p.add_argument("--rsm", action=argparse.BooleanOptionalAction, default=cfg["use_rsm"])
    p.add_argument("--k-values", type=_int_list, default=cfg["k_values"], help="e.g. 1-70")
    p.add_argument("--sizes", type=_int_list, default=cfg["sizes"], help="e.g. 10-140:10")
    p.add_argument("--reps", type=int, default=cfg["repetitions"])
    p.add_argument("--max-rank", type=int, default=cfg["max_rank"])
    p.add_argument("--out", type=Path, default=Path("results"), help="result directory")
    _add_common(p, cfg)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("-n", "--subjects", type=int, default=10)
    p.add_argument("-s", "--sequences", type=int, default=5)
    p.add_argument("-f", "--frames", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.0, help="coordinate noise std, meters")
    p.add_argument("--occlusion", type=float, default=0.0, help="per-frame occlusion rate")
    p.add_argument("--inferred-std", type=float, default=NoiseConfig.inferred_std)
    p.add_argument("--occlusion-mode", choices=("inferred", "lost"), default="inferred")
    p.add_argument("--seed", type=int, default=cfg["seed"])
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_common(p, cfg)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the identification service")
    p.add_argument("--manifest", type=Path, default=None, help="gallery manifest")
    p.add_argument("--features", type=_feature_kind, default=None)
    p.add_argument("--host", default="0.0.0.0")  # noqa: S104
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse *argv*, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(verbose=args.verbose)
    try:
        return int(args.func(args))
    except GaitError as exc:
        logger.error("%s", exc)  # noqa: TRY400
        return EXIT_CONTRACT
    except OSError as exc:
        logger.error("I/O error: %s", exc)  # noqa: TRY400
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
