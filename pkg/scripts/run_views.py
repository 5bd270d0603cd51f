"""Test error of l1 and l2 MK-FN versus the number of synthetic views."""
import argparse
import sys

from mkfn.data_io import SyntheticSpec
from mkfn.experiments import SCALE, VIEW_COUNTS, views_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=float, default=SCALE, help="sample-count scale")
    ap.add_argument("--format", choices=("text", "json-lines"), default="text")
    args = ap.parse_args()
    res = views_experiment(VIEW_COUNTS, (1.0, 2.0), args.trials, args.seed,
                           SyntheticSpec(seed=args.seed).scaled(args.scale),
                           progress=lambda t: print(f"trial {t} done", file=sys.stderr))
    print(res.table(args.format), end="")


if __name__ == "__main__":
    main()
