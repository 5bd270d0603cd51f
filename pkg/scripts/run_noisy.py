"""Test AUC of a six-kernel bank as informative kernels become noise."""
import argparse
import sys

from mkfn.data_io import SyntheticSpec
from mkfn.experiments import NOISE_COUNTS, SCALE, noisy_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=float, default=SCALE)
    ap.add_argument("--noise-dim", type=int, default=None, help="noise view dimension (default: view dim)")
    ap.add_argument("--format", choices=("text", "json-lines"), default="text")
    args = ap.parse_args()
    res = noisy_experiment(NOISE_COUNTS, (1.0, 2.0), args.trials, args.seed,
                           spec=SyntheticSpec(seed=args.seed).scaled(args.scale), noise_dim=args.noise_dim,
                           progress=lambda t: print(f"trial {t} done", file=sys.stderr))
    print(res.table(args.format), end="")


if __name__ == "__main__":
    main()
