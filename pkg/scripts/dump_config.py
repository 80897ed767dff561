"""Write the default scenario config (or one with overrides applied) as YAML."""

import argparse
import sys

import yaml

from reflexnav.config import ScenarioConfig, apply_overrides, config_to_dict


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", nargs="?", help="output path (stdout if omitted)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    text = yaml.safe_dump(config_to_dict(apply_overrides(ScenarioConfig(), args.overrides)), sort_keys=False)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
