"""Iterations to convergence of the fixed-point solver over random starts."""
import argparse

from mkfn.experiments import CONVERGENCE_P, convergence_experiment, histogram_bank


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--inits", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--plain", action="store_true", help="disable Anderson mixing")
    args = ap.parse_args()
    res = convergence_experiment(histogram_bank(seed=args.seed), CONVERGENCE_P, inits=args.inits,
                                 seed=args.seed, acceleration=None if args.plain else "anderson")
    print(res.table(), end="")


if __name__ == "__main__":
    main()
