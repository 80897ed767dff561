"""Command-line entry point: single trials, seeded batches and sensor replays.

Exit codes: 0 success, 1 bad input file, 2 numerical failure, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ScenarioConfig, apply_overrides, load_config
from .core import NumericalFailure
from .eval import formats
from .eval.harness import VARIANTS, SensorRecord, SensorReplay, run_batch, run_trial

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3

_SHORTCUTS = (("no_prediction", "no_prediction"), ("no_reorient", "no_reorient"), ("no_threat", "no_threat"))


def _common(p: argparse.ArgumentParser, multi_variant: bool = False) -> None:
    p.add_argument("--config", help="YAML or JSON scenario config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. threat.alpha=0.5 (repeatable)")
    p.add_argument("--seed", type=int, help="base seed (defaults to the config's seed)")
    if multi_variant:
        p.add_argument("--variant", action="append", choices=VARIANTS + ("all",),
                       help="pipeline variant (repeatable; 'all' runs every variant)")
    else:
        p.add_argument("--variant", choices=VARIANTS, help="pipeline variant (default full)")
    p.add_argument("--no-prediction", action="store_true", help="shortcut for --variant no_prediction")
    p.add_argument("--no-reorient", action="store_true", help="shortcut for --variant no_reorient")
    p.add_argument("--no-threat", action="store_true", help="shortcut for --variant no_threat")
    p.add_argument("--out-dir", default="out", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflexnav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one closed-loop trial")
    _common(run)
    run.add_argument("--record", action="store_true", help="also save the sensor streams for replay")

    batch = sub.add_parser("batch", help="run seeded trials for one or more variants")
    _common(batch, multi_variant=True)
    batch.add_argument("--trials", type=int, default=50, help="trials per variant")
    batch.add_argument("--workers", type=int, help="worker processes (default: min(cpu count, 8))")

    rep = sub.add_parser("replay", help="rerun a trial on recorded sensor streams")
    _common(rep)
    rep.add_argument("--clouds", required=True, help="binary point-cloud replay file")
    rep.add_argument("--detections", help="detection replay CSV")
    return parser


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _variants(args) -> list[str]:
    chosen = [v for flag, v in _SHORTCUTS if getattr(args, flag)]
    given = args.variant
    if isinstance(given, list):
        for v in given:
            chosen.extend(VARIANTS if v == "all" else [v])
    elif given:
        chosen.append(given)
    if not chosen:
        chosen = ["full"]
    # keep first occurrence order
    return list(dict.fromkeys(chosen))


def _single_variant(args) -> str:
    vs = _variants(args)
    if len(vs) > 1:
        raise ConfigError(f"conflicting variants {vs}")
    return vs[0]


def cmd_run(args) -> int:
    cfg = _config(args)
    variant = _single_variant(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec = SensorRecord() if args.record else None
    result = run_trial(cfg, variant, record=rec)
    formats.write_results_jsonl(out / "results.jsonl", [result])
    formats.write_step_log(out / "steps.csv", result.log)
    if rec is not None:
        formats.write_clouds(out / "clouds.bin", rec.clouds)
        formats.write_detections(out / "detections.csv", rec.detections)
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _config(args)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    variants = _variants(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = run_batch(cfg, variants, args.trials, workers=args.workers)
    results = [r for rep in reports.values() for r in rep.results]
    formats.write_results_jsonl(out / "results.jsonl", results)
    formats.write_summary_csv(out / "summary.csv", reports)
    (out / "report.json").write_text(json.dumps({v: r.to_dict() for v, r in reports.items()}, indent=2,
                                                sort_keys=True) + "\n")
    for v, r in reports.items():
        lo, hi = r.asr_ci
        q = " ".join(f"{k}={d['success']}/{d['n']}" for k, d in r.quadrants.items())
        tnl = r.tnl["mean"]
        print(f"{v:18s} ASR={r.asr:.3f} [{lo:.3f}, {hi:.3f}] "
              f"TNL={'n/a' if tnl is None else f'{tnl:.3f}'} {q}")
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _config(args)
    variant = _single_variant(args)
    clouds = formats.read_clouds(args.clouds)
    dets = None
    if args.detections:
        dets = formats.detections_by_step(formats.read_detections(args.detections), cfg.dt, cfg.n_steps)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_trial(cfg, variant, replay=SensorReplay(clouds, dets))
    formats.write_results_jsonl(out / "results.jsonl", [result])
    formats.write_step_log(out / "steps.csv", result.log)
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "batch": cmd_batch, "replay": cmd_replay}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
