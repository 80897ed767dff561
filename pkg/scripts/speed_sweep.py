"""Head-on speed sweep: peak blend factor, trigger lead and clearance for one seeded geometry."""

import argparse
import sys
from dataclasses import replace

import numpy as np

from reflexnav.config import ScenarioConfig, SpawnSpec
from reflexnav.eval.harness import run_trial


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speeds", type=float, nargs="+", default=[1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    ap.add_argument("--range", type=float, default=5.0)
    ap.add_argument("--variant", default="full")
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()
    print(f"{'speed':>6s} {'success':>8s} {'d_min':>7s} {'beta@closest':>13s} {'peak beta':>10s} {'TNL':>6s}")
    for s in args.speeds:
        spawn = SpawnSpec(range_min=args.range, range_max=args.range, direction_min=0.0, direction_max=0.0,
                          speed_min=s, speed_max=s, radius_min=0.2, radius_max=0.2, aim_offset=0.0,
                          type_weights={"linear": 1.0})
        r = run_trial(replace(ScenarioConfig(seed=args.seed), spawn=spawn), args.variant)
        k = int(np.argmin(r.log.clearance))
        tnl = "-" if r.tnl is None else f"{r.tnl:.3f}"
        print(f"{s:6.2f} {str(r.success):>8s} {r.d_min:7.3f} {r.log.beta[k]:13.3f} {max(r.log.beta[:k + 1]):10.3f}"
              f" {tnl:>6s}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
