"""Joint lp-norm MKL: several one-class tasks sharing one kernel weight vector.

Each task ``c`` has its own bank ``K_j^c`` (same J, same kernel recipe) and
its own ``alpha_c``. The weights are updated from the summed responses
``v_j = sum_c alpha_c' K_j^c alpha_c`` with the single-task closed form, after
which every task re-solves its own linear system.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ShapeError
from .fn_solver import dual_objective, solve_alpha
from .kernelspace import KernelBank, combine_weighted
from .lp_mkl import (
    MklConfig,
    MklModel,
    alternate_tasks,
    kernel_responses,
    mkl_objective,
)


@dataclass(frozen=True)
class TaskBankSet:
    banks: tuple
    names: tuple = ()

    def __post_init__(self):
        banks = tuple(b if isinstance(b, KernelBank) else KernelBank(b) for b in self.banks)
        if not banks:
            raise ShapeError("need at least one task")
        J = banks[0].J
        for c, b in enumerate(banks):
            if b.J != J:
                raise ShapeError(f"task {c} has {b.J} kernels, task 0 has {J}")
            if b.names != banks[0].names:
                raise ShapeError(f"task {c} kernel names {b.names} differ from {banks[0].names}")
        names = tuple(self.names) if self.names else tuple(f"task{c}" for c in range(len(banks)))
        if len(names) != len(banks):
            raise ShapeError(f"{len(names)} task names for {len(banks)} tasks")
        object.__setattr__(self, "banks", banks)
        object.__setattr__(self, "names", names)

    @property
    def C(self) -> int:
        return len(self.banks)

    @property
    def J(self) -> int:
        return self.banks[0].J

    def __len__(self):
        return self.C


@dataclass(frozen=True)
class JointMklModel:
    alphas: tuple
    beta: np.ndarray
    config: MklConfig
    iterations_used: int
    final_change: float
    converged: bool
    task_names: tuple = ()
    kernel_names: tuple = ()
    task_changes: tuple = ()
    history: tuple = field(default=(), compare=False)

    @property
    def p(self) -> float:
        return self.config.p

    @property
    def delta(self) -> float:
        return self.config.delta

    def task_model(self, c: int, bank=None) -> MklModel:
        """Single-task view of task ``c`` (objective needs the task bank)."""
        alpha = self.alphas[c]
        objective = (
            float("nan") if bank is None
            else mkl_objective(bank, alpha, self.config.p, self.config.delta)
        )
        return MklModel(
            alpha=alpha,
            beta=self.beta,
            config=self.config,
            iterations_used=self.iterations_used,
            final_change=self.task_changes[c] if self.task_changes else self.final_change,
            objective=objective,
            converged=self.converged,
            kernel_names=self.kernel_names,
        )


def _as_taskset(banks) -> TaskBankSet:
    return banks if isinstance(banks, TaskBankSet) else TaskBankSet(tuple(banks))


def joint_responses(banks, alphas: Sequence) -> np.ndarray:
    """``v_j = sum_c alpha_c' K_j^c alpha_c``."""
    tasks = _as_taskset(banks)
    if len(alphas) != tasks.C:
        raise ShapeError(f"{len(alphas)} alpha vectors for {tasks.C} tasks")
    v = kernel_responses(tasks.banks[0], alphas[0])
    for bank, alpha in zip(tasks.banks[1:], alphas[1:]):
        v = v + kernel_responses(bank, alpha)
    return v


def fit_joint(
    banks,
    config: MklConfig,
    beta0=None,
    acceleration: Optional[str] = "anderson",
    callback=None,
) -> JointMklModel:
    """Fit all tasks jointly; with one task this is :func:`fit_fixed_point`.

    Convergence is declared when the root sum of squares of the per-task
    alpha changes falls below ``config.tol_for(sum of task sizes)``. A
    factorization failure in any task aborts the fit; the error message
    names the task index.
    """
    tasks = _as_taskset(banks)
    res = alternate_tasks(
        [b.matrices for b in tasks.banks],
        config,
        beta0=beta0,
        acceleration=acceleration,
        callback=callback,
    )
    for a in res.alphas:
        a.setflags(write=False)
    res.beta.setflags(write=False)
    return JointMklModel(
        alphas=tuple(res.alphas),
        beta=res.beta,
        config=config,
        iterations_used=res.iterations,
        final_change=res.change,
        converged=res.converged,
        task_names=tasks.names,
        kernel_names=tasks.banks[0].names,
        task_changes=tuple(res.task_changes),
        history=res.history,
    )


def apply_shared_beta(bank, beta, delta: float, p: float = 2.0) -> MklModel:
    """One solve for a new task using weights learned elsewhere; no iteration.

    ``p`` is only recorded in the returned model's config.
    """
    mats = bank.matrices if isinstance(bank, KernelBank) else np.asarray(bank, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    beta = np.array(beta, dtype=float)
    if beta.shape != (mats.shape[0],):
        raise ShapeError(f"{beta.shape[0]} shared weights for a bank of {mats.shape[0]} kernels")
    alpha = solve_alpha(combine_weighted(mats, beta), delta)
    alpha.setflags(write=False)
    beta.setflags(write=False)
    return MklModel(
        alpha=alpha,
        beta=beta,
        config=MklConfig(p=p, delta=delta),
        iterations_used=0,
        final_change=0.0,
        objective=dual_objective(combine_weighted(mats, beta), delta, alpha),
        converged=True,
        kernel_names=getattr(bank, "names", ()),
        meta={"solver": "shared-beta"},
    )

