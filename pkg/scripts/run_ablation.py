"""Seeded ablation table: ASR with Wilson interval, quadrant breakdown and TNL per variant."""

import argparse
import json
import sys
import time
from dataclasses import replace

from reflexnav.config import ScenarioConfig, apply_overrides, load_config
from reflexnav.eval.harness import VARIANTS, run_batch


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--config")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--variant", action="append", choices=VARIANTS)
    ap.add_argument("--json", help="also write the reports to this path")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = replace(apply_overrides(cfg, args.overrides), seed=args.seed)
    variants = args.variant or list(VARIANTS)
    t0 = time.perf_counter()
    reports = run_batch(cfg, variants, args.trials, workers=args.workers)
    elapsed = time.perf_counter() - t0
    print(f"{'variant':18s} {'ASR':>6s} {'95% CI':>15s} {'front':>7s} {'left':>7s} {'right':>7s} {'rear':>7s}"
          f" {'TNL':>6s} {'d_min':>6s}")
    for v, r in reports.items():
        q = {k: f"{d['success']}/{d['n']}" for k, d in r.quadrants.items()}
        tnl = "-" if r.tnl["mean"] is None else f"{r.tnl['mean']:.3f}"
        dmin = "-" if r.d_min["mean"] is None else f"{r.d_min['mean']:.3f}"
        print(f"{v:18s} {r.asr:6.3f} [{r.asr_ci[0]:.3f}, {r.asr_ci[1]:.3f}] {q['front']:>7s} {q['left']:>7s}"
              f" {q['right']:>7s} {q['rear']:>7s} {tnl:>6s} {dmin:>6s}")
    print(f"{args.trials} trials x {len(variants)} variants in {elapsed:.0f}s")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({v: r.to_dict() for v, r in reports.items()}, f, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
