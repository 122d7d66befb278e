"""Command line front end.

Subcommands map one-to-one onto pipeline stages, plus ``run`` for the whole
chain, ``stats`` for comparing two image directories, and ``ablation`` for
the condition battery. Stage commands are cumulative: asking for a stage
also brings its prerequisites up to date in the same run directory.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 training
divergence, 4 stale checkpoints that need --force.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import (StaleCheckpointError, TrainingDivergedError,
                     ValidationError)

_STAGE_COMMANDS = ("gen-data", "gen-target", "train-reid", "train-illum",
                   "infer-illum", "train-translate", "translate", "finetune",
                   "evaluate")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="override the config seed")
    p.add_argument("--out", type=Path, default=argparse.SUPPRESS,
                   help="run directory")
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS,
                   help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--force", action="store_true", default=argparse.SUPPRESS,
                   help="rebuild stages whose recorded config went stale")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="illumadapt", parents=[common],
        description="illumination-aware domain adaptation benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    stage_help = {
        "gen-data": "render the source camera and the synthetic sweep",
        "gen-target": "render the unlabeled target cameras",
        "train-reid": "train the joint feature extractor",
        "train-illum": "train the illumination classifier",
        "infer-illum": "vote the target's nearest synthetic domain",
        "train-translate": "train the image translator",
        "translate": "push the selected synthetic domain through the translator",
        "finetune": "adapt the extractor on translated images",
        "evaluate": "score retrieval on the target cameras",
    }
    for name in _STAGE_COMMANDS:
        sub.add_parser(name, parents=[common], help=stage_help[name])

    sub.add_parser("run", parents=[common], help="run every stage in order")

    p_stats = sub.add_parser("stats", parents=[common],
                             help="histogram distance between two datasets")
    p_stats.add_argument("first", type=Path, help="dataset directory")
    p_stats.add_argument("second", type=Path, help="dataset directory")

    p_abl = sub.add_parser("ablation", parents=[common],
                           help="compare conditions across seeds")
    p_abl.add_argument("--seeds", default="0,1,2",
                       help="comma-separated benchmark seeds")
    p_abl.add_argument("--conditions", default=None,
                       help="comma-separated subset of conditions")
    p_abl.add_argument("--selection-modes", default="inferred",
                       help="comma-separated: inferred,random")
    p_abl.add_argument("--draws", type=int, default=3,
                       help="random domain draws per seed")
    p_abl.add_argument("--identities", type=int, default=20)
    p_abl.add_argument("--illuminations", type=int, default=12)
    p_abl.add_argument("--samples-per-identity", type=int, default=4)
    return parser


def _load_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else \
        ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _require_out(args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None)
    if out is None:
        raise ValidationError(f"{args.command} needs --out <run directory>")
    return out


def _cmd_stage(args: argparse.Namespace, upto: str | None) -> int:
    from .pipeline import run_pipeline

    cfg = _load_experiment_config(args)
    out = _require_out(args)
    manifest = run_pipeline(cfg, out, force=getattr(args, "force", False),
                            upto=upto, echo=print)
    if upto is None or upto == "evaluate":
        metrics = manifest.metrics
        if "rank1" in metrics:
            print(f"rank-1 {metrics['rank1']:.3f} "
                  f"(baseline {metrics['baseline_rank1']:.3f})")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    from .evaluation import image_stats, stats_distance
    from .synth import load_manifest

    a = image_stats(load_manifest(args.first))
    b = image_stats(load_manifest(args.second))
    print(json.dumps({"distance": stats_distance(a, b)}, indent=2))
    return 0


def _cmd_ablation(args: argparse.Namespace) -> int:
    from .evaluation import AblationConfig, CONDITIONS, run_ablation

    def csv(text: str) -> tuple[str, ...]:
        return tuple(part.strip() for part in text.split(",") if part.strip())

    try:
        seeds = tuple(int(s) for s in csv(args.seeds))
    except ValueError:
        raise ValidationError(f"--seeds must be integers, got {args.seeds!r}") \
            from None
    config = AblationConfig(
        identities=args.identities, illuminations=args.illuminations,
        samples_per_identity=args.samples_per_identity,
        conditions=csv(args.conditions) if args.conditions else CONDITIONS,
        selection_modes=csv(args.selection_modes),
        seeds=seeds, random_draws=args.draws)
    report = run_ablation(config)
    out = getattr(args, "out", None)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation_report.json").write_text(
            json.dumps(report, indent=2) + "\n")
        print(f"wrote {out / 'ablation_report.json'}")
    for condition, mean in report["means"].items():
        print(f"{condition:>20}: mean rank-1 {mean:.3f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in _STAGE_COMMANDS:
            return _cmd_stage(args, upto=args.command)
        if args.command == "run":
            return _cmd_stage(args, upto=None)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "ablation":
            return _cmd_ablation(args)
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except TrainingDivergedError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return 3
    except StaleCheckpointError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
