"""Synthetic-view, noisy-kernel, convergence and runtime experiments."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .data_io import SyntheticSpec, noise_views, synth_gaussian_task
from .evaluation import (
    DELTA_MULTIPLIERS,
    HyperGrid,
    classification_error,
    grid_select,
    min_error_threshold,
    roc_auc,
)
from .kernelspace import KernelBank, KernelParams, cross_gram_rbf, gram_rbf, rbf_width_heuristic
from .lp_mkl import MklConfig, fit_fixed_point, fit_gradient_ascent

VIEW_COUNTS = (1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50)
NOISE_COUNTS = (0, 1, 2, 3, 4, 5, 6)
CONVERGENCE_P = (32 / 31, 16 / 15, 8 / 7, 4 / 3, 2.0, 4.0, 8.0, 1e6)
# 1/4 of the full sample counts keeps the 100-trial sweeps within minutes
SCALE = 0.25


class ViewBanks:
    """Per-width RBF banks for a list of views, sliced by view index.

    Each view is ``(train, val, test)``; the banks carry the train-by-val
    cross blocks and the train-by-test blocks are kept alongside.
    """

    def __init__(self, views, width_factors):
        self.banks = {}
        self.test_cross = {}
        for wf in width_factors:
            mats, val_c, test_c, params = [], [], [], []
            for tr, va, te in views:
                sigma = rbf_width_heuristic(tr, wf)
                mats.append(gram_rbf(tr, sigma))
                val_c.append(cross_gram_rbf(tr, va, sigma))
                test_c.append(cross_gram_rbf(tr, te, sigma))
                params.append(KernelParams(sigma, wf))
            self.banks[wf] = KernelBank(np.stack(mats), cross=np.stack(val_c), params=tuple(params))
            self.test_cross[wf] = np.stack(test_c)

    def factory(self, idx):
        idx = list(idx)
        return lambda wf: self.banks[wf].subset(idx)

    def test(self, wf, idx):
        return self.test_cross[wf][list(idx)]


@dataclass
class CellStats:
    values: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.values else math.nan


@dataclass
class SweepResult:
    """``stats[(p, x)]`` for the swept quantity ``x`` (views or noise count)."""

    name: str
    metric: str
    xs: tuple
    p_values: tuple
    stats: dict
    trials: int

    def mean(self, p, x) -> float:
        return self.stats[(p, x)].mean

    def table(self, fmt: str = "text") -> str:
        import json

        rows = []
        if fmt == "json-lines":
            for p in self.p_values:
                for x in self.xs:
                    st = self.stats[(p, x)]
                    rows.append(json.dumps({"experiment": self.name, "p": p, "x": x, "metric": self.metric,
                                            "mean": st.mean, "std": st.std, "trials": len(st.values)},
                                           sort_keys=True))
        else:
            rows.append(f"# experiment={self.name} metric={self.metric} trials={self.trials}")
            rows.append("# p x mean std")
            for p in self.p_values:
                for x in self.xs:
                    st = self.stats[(p, x)]
                    rows.append(f"{p!r} {x} {st.mean:.6f} {st.std:.6f}")
        return "\n".join(rows) + "\n"


def _grid(width_factors, delta_multipliers, p):
    return HyperGrid(p_values=(p,), delta_multipliers=delta_multipliers, width_factors=width_factors)


def views_experiment(
    view_counts: Sequence[int] = VIEW_COUNTS,
    p_values: Sequence[float] = (1.0, 2.0),
    trials: int = 100,
    seed: int = 0,
    spec: Optional[SyntheticSpec] = None,
    width_factors=(0.25, 0.5, 1.0),
    delta_multipliers=DELTA_MULTIPLIERS,
    progress: Optional[Callable] = None,
) -> SweepResult:
    """Test classification error versus the number of independent views.

    Trial ``t`` draws ``max(view_counts)`` views from seed ``(seed, t)``;
    the run with J views uses the first J of them, so all view counts and
    both norms see the same data within a trial. (delta, width) are picked
    on validation AUC; the decision threshold minimises validation error.
    """
    spec = spec or SyntheticSpec().scaled(SCALE)
    view_counts = tuple(view_counts)
    p_values = tuple(float(p) for p in p_values)
    stats = {(p, J): CellStats() for p in p_values for J in view_counts}
    J_max = max(view_counts)
    for t in range(trials):
        task = synth_gaussian_task(spec.with_(J=J_max, seed=_trial_seed(seed, t)))
        banks = ViewBanks(list(zip(task.train, task.val, task.test)), width_factors)
        for J in view_counts:
            idx = range(J)
            for p in p_values:
                res = grid_select(banks.factory(idx), task.val_labels,
                                  _grid(width_factors, delta_multipliers, p), "lp_mkl")
                val_scores = res.model.score_bank(res.bank.cross)
                thr = min_error_threshold(val_scores, task.val_labels)
                test_scores = res.model.score_bank(banks.test(res.width_factor, idx))
                stats[(p, J)].values.append(classification_error(test_scores, task.test_labels, thr))
        if progress is not None:
            progress(t)
    return SweepResult("views", "error", view_counts, p_values, stats, trials)


def _trial_seed(seed, t):
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def noisy_experiment(
    noise_counts: Sequence[int] = NOISE_COUNTS,
    p_values: Sequence[float] = (1.0, 2.0),
    trials: int = 100,
    seed: int = 0,
    n_kernels: int = 6,
    spec: Optional[SyntheticSpec] = None,
    width_factors=(0.25, 0.5, 1.0),
    delta_multipliers=DELTA_MULTIPLIERS,
    noise_dim: Optional[int] = None,
    progress: Optional[Callable] = None,
) -> SweepResult:
    """Test AUC of a fixed-size bank as informative kernels are swapped for
    noise kernels.

    Informative views come from the synthetic Gaussian generator; noise
    views are standard-normal data with the same sample counts and, unless
    ``noise_dim`` says otherwise, the same dimension.
    With ``k`` noisy kernels the bank holds the first ``n_kernels - k``
    informative kernels followed by ``k`` noise kernels.
    """
    spec = spec or SyntheticSpec().scaled(SCALE)
    noise_counts = tuple(noise_counts)
    if max(noise_counts) > n_kernels or min(noise_counts) < 0:
        raise ValueError(f"noise counts must lie in 0..{n_kernels}")
    p_values = tuple(float(p) for p in p_values)
    stats = {(p, k): CellStats() for p in p_values for k in noise_counts}
    for t in range(trials):
        s = _trial_seed(seed, t)
        task = synth_gaussian_task(spec.with_(J=n_kernels, seed=s))
        sizes = (task.train[0].shape[0], task.val[0].shape[0], task.test[0].shape[0])
        noise = noise_views(sizes, noise_dim or spec.dim, n_kernels, np.random.default_rng([s, 1]))
        views = list(zip(task.train, task.val, task.test)) + [tuple(v) for v in noise]
        banks = ViewBanks(views, width_factors)
        for k in noise_counts:
            idx = list(range(n_kernels - k)) + list(range(n_kernels, n_kernels + k))
            for p in p_values:
                res = grid_select(banks.factory(idx), task.val_labels,
                                  _grid(width_factors, delta_multipliers, p), "lp_mkl")
                test_scores = res.model.score_bank(banks.test(res.width_factor, idx))
                stats[(p, k)].values.append(roc_auc(test_scores, task.test_labels))
        if progress is not None:
            progress(t)
    return SweepResult("noisy", "auc", noise_counts, p_values, stats, trials)


# --------------------------------------------------------- convergence


def histogram_bank(n: int = 48, J: int = 7, bins: int = 32, seed: int = 0) -> KernelBank:
    """Exponential chi-square kernels over random normalised histograms.

    Mimics precomputed image-descriptor distance matrices: each view draws
    Dirichlet histograms around a few view-specific prototypes, and the
    kernel is ``exp(-D / mean(D))`` with ``D`` the chi-square distance.
    """
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(J):
        protos = rng.dirichlet(np.ones(bins), size=3)
        which = rng.integers(0, 3, size=n)
        conc = rng.uniform(20.0, 80.0)
        H = np.stack([rng.dirichlet(conc * protos[w] + 1e-3) for w in which])
        num = (H[:, None, :] - H[None, :, :]) ** 2
        den = H[:, None, :] + H[None, :, :]
        D = 0.5 * np.sum(np.divide(num, den, out=np.zeros_like(num), where=den > 0), axis=2)
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
        mats.append(np.exp(-D / D[np.triu_indices(n, 1)].mean()))
    return KernelBank(np.stack(mats), names=tuple(f"view{j}" for j in range(J)))


@dataclass
class ConvergenceResult:
    p_values: tuple
    iterations: dict
    converged: dict
    histories: dict

    def max_iterations(self, p) -> int:
        return max(self.iterations[p])

    def table(self) -> str:
        rows = ["# p max_iter mean_iter all_converged"]
        for p in self.p_values:
            its = self.iterations[p]
            rows.append(f"{p!r} {max(its)} {np.mean(its):.2f} {int(all(self.converged[p]))}")
        return "\n".join(rows) + "\n"


def convergence_experiment(
    bank: Optional[KernelBank] = None,
    p_values: Sequence[float] = CONVERGENCE_P,
    inits: int = 100,
    delta_mult: float = 1e-3,
    seed: int = 0,
    acceleration: Optional[str] = "anderson",
    max_iter: int = 200,
) -> ConvergenceResult:
    """Iterations to reach ``||d alpha||_2 <= 1e-8 sqrt(n)`` from random
    non-negative unit-p-norm starting weights."""
    bank = bank or histogram_bank()
    rng = np.random.default_rng(seed)
    iterations, converged, histories = {}, {}, {}
    for p in p_values:
        cfg = MklConfig(p=p, delta=delta_mult * bank.n, max_iter=max_iter)
        its, conv, hist = [], [], []
        for _ in range(inits):
            b = rng.uniform(0.0, 1.0, bank.J)
            b /= np.linalg.norm(b, p) if p < 1e3 else b.max()
            m = fit_fixed_point(bank, cfg, beta0=b, acceleration=acceleration)
            its.append(m.iterations_used)
            conv.append(m.converged)
            hist.append(m.history)
        iterations[p], converged[p], histories[p] = its, conv, hist
    return ConvergenceResult(tuple(p_values), iterations, converged, histories)


# --------------------------------------------------------------- bench


@dataclass
class BenchRow:
    n: int
    J: int
    solver: str
    seconds: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.seconds))


def bench(
    n_list: Sequence[int] = (100,),
    j_list: Sequence[int] = (5, 15, 50),
    repeats: int = 10,
    p: float = 2.0,
    delta_mult: float = 1e-2,
    seed: int = 0,
    on_phase: Optional[Callable[[str, float], None]] = None,
    solvers=("lp-mkl", "lp-mkl-grad"),
) -> list:
    """Wall-clock training time per (n, J) and solver.

    Kernel construction runs outside the timed region; ``on_phase(name,
    seconds)`` reports both the construction and the solve phases.
    """
    fits = {"lp-mkl": fit_fixed_point, "lp-mkl-grad": fit_gradient_ascent}
    rows = []
    for n in n_list:
        for J in j_list:
            rng = np.random.default_rng([seed, n, J])
            t0 = time.perf_counter()
            views = [rng.standard_normal((n, 2)) for _ in range(J)]
            mats = [gram_rbf(X, rbf_width_heuristic(X, 0.5)) for X in views]
            bank = KernelBank(np.stack(mats))
            if on_phase is not None:
                on_phase("kernels", time.perf_counter() - t0)
            cfg = MklConfig(p=p, delta=delta_mult * n)
            for solver in solvers:
                secs = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    fits[solver](bank, cfg)
                    dt = time.perf_counter() - t0
                    secs.append(dt)
                    if on_phase is not None:
                        on_phase(f"solve:{solver}", dt)
                rows.append(BenchRow(n, J, solver, secs))
    return rows


def bench_table(rows, fmt: str = "text") -> str:
    import json

    if fmt == "json-lines":
        return "".join(json.dumps({"n": r.n, "J": r.J, "solver": r.solver, "mean_seconds": r.mean,
                                   "repeats": len(r.seconds)}, sort_keys=True) + "\n" for r in rows)
    out = ["# n J solver mean_ms repeats"]
    out.extend(f"{r.n} {r.J} {r.solver} {1e3 * r.mean:.4f} {len(r.seconds)}" for r in rows)
    return "\n".join(out) + "\n"
