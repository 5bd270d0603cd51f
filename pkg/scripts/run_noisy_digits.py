"""Noisy-kernel sweep on handwritten digits (needs the ``digits`` extra).

Six hand-crafted views per 8x8 image (pixels, row/column profiles, low DCT
block, 2x2 block means, gradient profiles, moments); each digit class in
turn is the target class. Noise views are standard-normal with the view's
own dimension, or ``--noise-dim`` columns.
"""
import argparse
import sys

import numpy as np
from scipy.fft import dctn
from sklearn.datasets import load_digits

from mkfn.evaluation import DELTA_MULTIPLIERS, HyperGrid, grid_select, roc_auc
from mkfn.experiments import ViewBanks

WIDTHS = (0.25, 0.5, 1.0)


def digit_views(images):
    n = images.shape[0]
    ii, jj = np.mgrid[0:8, 0:8]
    moments = []
    for x in images:
        s = x.sum()
        ci, cj = (ii * x).sum() / s, (jj * x).sum() / s
        orders = [(2, 0), (0, 2), (1, 1), (3, 0), (0, 3), (2, 1), (1, 2)]
        moments.append([ci, cj] + [((ii - ci) ** a * (jj - cj) ** b * x).sum() / s for a, b in orders])
    views = [
        images.reshape(n, -1),
        np.hstack([images.sum(1), images.sum(2)]),
        np.stack([dctn(x, norm="ortho")[:6, :6].ravel() for x in images]),
        images.reshape(n, 4, 2, 4, 2).mean((2, 4)).reshape(n, -1),
        np.hstack([np.abs(np.diff(images, axis=1)).sum(2), np.abs(np.diff(images, axis=2)).sum(1)]),
        np.array(moments),
    ]
    return [(v - v.mean(0)) / (v.std(0) + 1e-9) for v in views]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=2, help="passes over the ten digit classes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise-dim", type=int, default=None)
    args = ap.parse_args()

    d = load_digits()
    V, y = digit_views(d.images), d.target
    rng = np.random.default_rng(args.seed)
    auc = {(p, k): [] for p in (1.0, 2.0) for k in range(7)}
    for trial in range(args.trials):
        for c in range(10):
            pos, neg = rng.permutation(np.flatnonzero(y == c)), rng.permutation(np.flatnonzero(y != c))
            ntr, nva = int(0.6 * len(pos)), int(0.2 * len(pos))
            tr, va, te = pos[:ntr], pos[ntr:ntr + nva], pos[ntr + nva:]
            nv, nt = neg[:100], neg[100:300]
            vidx, tidx = np.r_[va, nv], np.r_[te, nt]
            vl = np.r_[np.ones(len(va), bool), np.zeros(len(nv), bool)]
            tl = np.r_[np.ones(len(te), bool), np.zeros(len(nt), bool)]
            informative = [(v[tr], v[vidx], v[tidx]) for v in V]
            noise = [tuple(rng.standard_normal((len(a), args.noise_dim or v.shape[1])) for a in (tr, vidx, tidx))
                     for v in V]
            banks = ViewBanks(informative + noise, WIDTHS)
            for k in range(7):
                idx = list(range(6 - k)) + list(range(6, 6 + k))
                for p in (1.0, 2.0):
                    grid = HyperGrid(p_values=(p,), delta_multipliers=DELTA_MULTIPLIERS, width_factors=WIDTHS)
                    res = grid_select(banks.factory(idx), vl, grid, "lp_mkl")
                    auc[(p, k)].append(roc_auc(res.model.score_bank(banks.test(res.width_factor, idx)), tl))
        print(f"pass {trial} done", file=sys.stderr)
    print("# p noise mean_auc std_auc")
    for p in (1.0, 2.0):
        for k in range(7):
            print(f"{p!r} {k} {np.mean(auc[(p, k)]):.6f} {np.std(auc[(p, k)]):.6f}")


if __name__ == "__main__":
    main()
