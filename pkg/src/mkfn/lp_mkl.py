"""lp-norm multiple kernel one-class Fisher null-space.

The saddle-point problem over dual coefficients ``alpha`` and kernel weights
``beta >= 0, ||beta||_p <= 1`` is solved by alternating two closed forms:

* for fixed alpha the optimal weights are ``beta ∝ u^{1/(p-1)}`` normalised to
  unit p-norm, with ``u_j = alpha' K_j alpha`` (:func:`beta_update`);
* for fixed beta, ``alpha = (delta I + sum_j beta_j K_j)^{-1} 1``.

:func:`fit_fixed_point` iterates the two until ``alpha`` stops moving.
Eliminating beta leaves a concave problem in alpha alone
(:func:`mkl_objective`), which :func:`fit_gradient_ascent` maximises directly
and which serves as an independent check of the fixed-point solver.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import (
    DegenerateResponseError,
    DegenerateResponseWarning,
    DomainError,
    InvalidResponseError,
    NumericalError,
    ShapeError,
    StepSizeError,
    UnsupportedExponentError,
)
from .fn_solver import project_alpha, score_from_projection, solve_alpha
from .kernelspace import KernelBank, combine_weighted

P_GRID = (1.0, 32 / 31, 16 / 15, 8 / 7, 4 / 3, 2.0, 4.0, 8.0, 1e6)
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class MklConfig:
    """Solver settings. ``tol=None`` means ``1e-8 * sqrt(n)``."""

    p: float = 2.0
    delta: float = 1.0
    tol: Optional[float] = None
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.p >= 1:
            raise DomainError(f"p must be >= 1, got {self.p}")
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if self.tol is not None and not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")

    def tol_for(self, n: int) -> float:
        return self.tol if self.tol is not None else 1e-8 * math.sqrt(n)


@dataclass(frozen=True)
class MklModel:
    alpha: np.ndarray
    beta: np.ndarray
    config: MklConfig
    iterations_used: int
    final_change: float
    objective: float
    converged: bool
    kernel_names: tuple = ()
    history: tuple = field(default=(), compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def p(self) -> float:
        return self.config.p

    @property
    def delta(self) -> float:
        return self.config.delta

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def combine_cross(self, cross) -> np.ndarray:
        cross = np.asarray(cross, dtype=float)
        if cross.ndim == 2:
            cross = cross[None]
        return combine_weighted(cross, self.beta)

    def project_bank(self, cross) -> np.ndarray:
        """Raw projections of test samples given ``(J, n, m)`` cross kernels."""
        return project_alpha(self.alpha, self.combine_cross(cross))

    def score_bank(self, cross, raw: bool = False) -> np.ndarray:
        s = self.project_bank(cross)
        return s if raw else score_from_projection(s)


def _stack(bank) -> np.ndarray:
    if isinstance(bank, KernelBank):
        return bank.matrices
    mats = np.asarray(bank, dtype=float)
    return mats[None] if mats.ndim == 2 else mats


def _names(bank) -> tuple:
    return bank.names if isinstance(bank, KernelBank) else ()


def kernel_responses(bank, alpha) -> np.ndarray:
    """``u_j = alpha' K_j alpha`` for every kernel in the bank."""
    mats = _stack(bank)
    alpha = np.asarray(alpha, dtype=float)
    if mats.shape[1] != alpha.shape[0]:
        raise ShapeError(f"alpha of length {alpha.shape[0]} for kernels of size {mats.shape[1]}")
    return (mats @ alpha) @ alpha


def lp_norm(x, q: float) -> float:
    """``||x||_q`` for ``q >= 1`` including ``q = inf``, overflow-safe."""
    x = np.abs(np.asarray(x, dtype=float))
    m = float(np.max(x)) if x.size else 0.0
    if m == 0.0:
        return 0.0
    if math.isinf(q):
        return m
    return m * float(np.sum((x / m) ** q)) ** (1.0 / q)


def dual_exponent(p: float) -> float:
    """Conjugate exponent ``p / (p - 1)``; infinite for ``p = 1``."""
    return math.inf if p == 1 else p / (p - 1.0)


def _check_responses(u) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise ShapeError("empty response vector")
    if not np.all(np.isfinite(u)):
        raise InvalidResponseError("kernel responses must be finite")
    scale = float(np.max(np.abs(u)))
    if np.any(u < -1e-12 * scale):
        raise InvalidResponseError(f"negative kernel response {u.min():.3e}")
    # round-off from PSD kernels with zero eigenvalues
    return np.maximum(u, 0.0)


def beta_update(u, p: float) -> np.ndarray:
    """Optimal kernel weights for fixed responses ``u``.

    For ``p > 1``: ``beta_j = u_j^{1/(p-1)} / ||u^{1/(p-1)}||_p``, evaluated
    after dividing ``u`` by its maximum (the map is scale-invariant) so that
    exponents near ``p = 1`` cannot overflow. For ``p == 1`` the result is
    one-hot at the first maximal response.

    An all-zero ``u`` with ``p > 1`` falls back to the uniform unit-norm
    vector and emits :class:`DegenerateResponseWarning`.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    u = _check_responses(u)
    J = u.shape[0]
    if p == 1:
        beta = np.zeros(J)
        beta[int(np.argmax(u))] = 1.0
        return beta
    umax = float(np.max(u))
    if umax == 0.0:
        warnings.warn(
            "all kernel responses are zero; using uniform kernel weights",
            DegenerateResponseWarning,
            stacklevel=2,
        )
        return np.full(J, J ** (-1.0 / p))
    r = 1.0 / (p - 1.0)
    with np.errstate(divide="ignore"):
        logw = r * (np.log(u) - math.log(umax))
    w = np.exp(logw)
    return w / lp_norm(w, p)


def uniform_beta(J: int, p: float) -> np.ndarray:
    return np.full(J, J ** (-1.0 / p))


def mkl_objective(bank, alpha, p: float, delta: float) -> float:
    """Concave objective ``-delta a'a + 2 a'1 - ||u(a)||_{p/(p-1)}``."""
    alpha = np.asarray(alpha, dtype=float)
    u = kernel_responses(bank, alpha)
    return float(-delta * alpha @ alpha + 2.0 * alpha.sum() - lp_norm(u, dual_exponent(p)))


def mkl_gradient(bank, alpha, p: float, delta: float) -> np.ndarray:
    """Gradient of :func:`mkl_objective` with respect to alpha (``p > 1``).

    ``2 [1 - delta a - ||u||_q^{-1/(p-1)} sum_j u_j^{1/(p-1)} K_j a]`` with
    ``q = p/(p-1)``; the kernel coefficients are evaluated as
    ``(u_j / ||u||_q)^{1/(p-1)}`` to stay finite.
    """
    if p == 1:
        raise UnsupportedExponentError("objective is not differentiable at p = 1")
    if not p > 1:
        raise DomainError(f"p must be > 1, got {p}")
    mats = _stack(bank)
    alpha = np.asarray(alpha, dtype=float)
    Ka = mats @ alpha
    u = np.maximum(Ka @ alpha, 0.0)
    return _gradient_from(alpha, Ka, u, p, dual_exponent(p), delta)


def _init_alpha(mats, p, delta, beta0):
    J = mats.shape[0]
    beta = uniform_beta(J, p) if beta0 is None else np.asarray(beta0, dtype=float)
    if beta.shape != (J,):
        raise ShapeError(f"initial beta has shape {beta.shape}, expected ({J},)")
    return beta, solve_alpha(combine_weighted(mats, beta), delta)


class _Anderson:
    """Type-II Anderson mixing for the fixed-point map on kernel weights."""

    def __init__(self, depth: int):
        self.depth = depth
        self.f_hist = []
        self.g_hist = []

    def step(self, beta, g):
        f = g - beta
        self.f_hist = (self.f_hist + [f])[-(self.depth + 1):]
        self.g_hist = (self.g_hist + [g])[-(self.depth + 1):]
        if len(self.f_hist) < 2:
            return g
        dF = np.diff(np.array(self.f_hist), axis=0).T
        dG = np.diff(np.array(self.g_hist), axis=0).T
        gamma = np.linalg.lstsq(dF, f, rcond=None)[0]
        mixed = np.maximum(g - dG @ gamma, 0.0)
        if not np.all(np.isfinite(mixed)) or not mixed.any():
            self.f_hist, self.g_hist = [f], [g]
            return g
        return mixed


@dataclass
class _Alternation:
    alphas: list
    beta: np.ndarray
    iterations: int
    change: float
    converged: bool
    history: tuple
    task_changes: list
    cycle: int = 0


def _objective_sum(alphas) -> float:
    # for alpha solving (delta I + K) alpha = 1 the inner maximum is 1'alpha
    return float(sum(a.sum() for a in alphas))


def alternate_tasks(
    task_mats,
    config: MklConfig,
    beta0=None,
    acceleration: Optional[str] = "anderson",
    depth: int = 5,
    callback=None,
) -> _Alternation:
    """Shared fixed-point loop over C tasks coupled by one weight vector.

    Responses are summed over tasks before the weight update; every task
    then gets its own alpha solve. The stopping test uses the root sum of
    squares of the per-task alpha changes against ``config.tol_for(sum n_c)``;
    with one task this is exactly the single-task criterion.

    At ``p == 1`` the weights are one-hot, so the plain alternation is a map
    on kernel indices: it either settles or re-enters an index it visited
    before, after which it repeats forever. Anderson mixing is not used
    there; a revisit stops the loop (``converged=False``) and returns the
    cycle member with the smallest inner maximum.
    """
    if acceleration not in (None, "anderson"):
        raise ValueError(f"unknown acceleration {acceleration!r}")
    J = task_mats[0].shape[0]
    p, delta = config.p, config.delta
    tol = config.tol_for(sum(m.shape[1] for m in task_mats))
    beta = uniform_beta(J, p) if beta0 is None else np.asarray(beta0, dtype=float)
    if beta.shape != (J,):
        raise ShapeError(f"initial beta has shape {beta.shape}, expected ({J},)")
    alphas = [_solve_task(m, beta, delta, c, len(task_mats)) for c, m in enumerate(task_mats)]
    one_hot = p == 1
    mixer = _Anderson(depth) if acceleration == "anderson" and J > 1 and not one_hot else None
    visited = {}
    states = []
    history = []
    change = math.inf
    task_changes = [math.inf] * len(task_mats)
    it = 0
    converged = False
    plain = True

    def responses(alphas):
        v = kernel_responses(task_mats[0], alphas[0])
        for m, a in zip(task_mats[1:], alphas[1:]):
            v = v + kernel_responses(m, a)
        return v

    def solve_all(beta):
        return [_solve_task(m, beta, delta, c, len(task_mats)) for c, m in enumerate(task_mats)]

    def measure(new, old):
        per = [float(np.linalg.norm(a - b)) for a, b in zip(new, old)]
        return math.hypot(*per), per

    while it < config.max_iter:
        it += 1
        target = beta_update(responses(alphas), p)
        if one_hot and J > 1:
            j = int(np.argmax(target))
            if j in visited and not np.array_equal(target, beta):
                start = visited[j]
                cyc = [(_objective_sum(a), k, b, a) for k, (b, a) in enumerate(states[start:])]
                _, _, beta, alphas = min(cyc, key=lambda t: (t[0], t[1]))
                return _Alternation(alphas, beta, it, change, False, tuple(history),
                                    task_changes, cycle=len(cyc))
        if mixer is not None:
            beta = mixer.step(beta, target)
            plain = beta is target
        else:
            beta = target
        new = solve_all(beta)
        change, task_changes = measure(new, alphas)
        alphas = new
        history.append(change)
        if one_hot and J > 1:
            visited.setdefault(int(np.argmax(beta)), len(states))
            states.append((beta, alphas))
        if callback is not None:
            callback(it, alphas, beta, change)
        if change <= tol:
            converged = True
            break
    if not plain:
        # finish on the closed-form pair
        beta = beta_update(responses(alphas), p)
        new = solve_all(beta)
        change, task_changes = measure(new, alphas)
        alphas = new
    return _Alternation(alphas, beta, it, change, converged, tuple(history), task_changes)


def _solve_task(mats, beta, delta, c, C):
    try:
        return solve_alpha(combine_weighted(mats, beta), delta)
    except NumericalError as err:
        if C == 1:
            raise
        raise NumericalError(f"task {c}: {err}", err.jitter) from err


def fit_fixed_point(
    bank,
    config: MklConfig,
    beta0=None,
    acceleration: Optional[str] = "anderson",
    depth: int = 5,
    callback=None,
) -> MklModel:
    """Alternate the closed-form beta and alpha updates until convergence.

    Starts from ``alpha = (delta I + sum_j J^{-1/p} K_j)^{-1} 1`` (or from
    the weights ``beta0`` if given). Each iteration computes the responses,
    the optimal weights for them, and the alpha solve for those weights; it
    stops when ``||alpha_new - alpha||_2 <= config.tol_for(n)``. Hitting
    ``max_iter`` returns a model with ``converged=False`` instead of raising.

    With ``acceleration="anderson"`` the new weights are an Anderson mixture
    of the last ``depth`` closed-form updates. The plain alternation
    (``acceleration=None``) can fall into a 2-cycle for p close to 1; the
    mixture has the same fixed points. An accelerated run always ends with
    one plain step, so the returned beta has unit p-norm and alpha solves
    ``(delta I + sum_j beta_j K_j) alpha = 1`` for it.

    ``callback(it, alpha, beta, change)`` is invoked after every iteration.
    """
    mats = _stack(bank)
    res = alternate_tasks(
        [mats], config, beta0=beta0, acceleration=acceleration, depth=depth,
        callback=None if callback is None else
        (lambda it, alphas, beta, change: callback(it, alphas[0], beta, change)),
    )
    alpha, beta = res.alphas[0], res.beta
    p, delta = config.p, config.delta
    it, change, converged, history = res.iterations, res.change, res.converged, res.history
    alpha.setflags(write=False)
    beta.setflags(write=False)
    return MklModel(
        alpha=alpha,
        beta=beta,
        config=config,
        iterations_used=it,
        final_change=change,
        objective=mkl_objective(mats, alpha, p, delta),
        converged=converged,
        kernel_names=_names(bank),
        history=tuple(history),
        meta={"solver": "fixed-point", "acceleration": None if p == 1 else acceleration,
              "cycle": res.cycle},
    )


def initial_step(mats, delta: float) -> float:
    n = mats.shape[1]
    tr = max(float(np.trace(K)) for K in mats) / n
    return 1.0 / (2.0 * delta + 2.0 * tr)


def _objective_from(alpha, Ka, q, delta):
    u = np.maximum(Ka @ alpha, 0.0)
    return float(-delta * alpha @ alpha + 2.0 * alpha.sum() - lp_norm(u, q)), u


def _gradient_from(alpha, Ka, u, p, q, delta):
    norm_u = lp_norm(u, q)
    if norm_u == 0.0:
        raise DegenerateResponseError("gradient undefined where all kernel responses vanish")
    coef = (u / norm_u) ** (1.0 / (p - 1.0))
    return 2.0 * (1.0 - delta * alpha - coef @ Ka)


def fit_gradient_ascent(
    bank,
    config: MklConfig,
    step: Optional[float] = None,
    grad_tol: Optional[float] = None,
    line_search: bool = True,
    max_iter: Optional[int] = None,
    callback=None,
) -> MklModel:
    """Maximise :func:`mkl_objective` by gradient ascent.

    Starts at the same alpha as :func:`fit_fixed_point` and stops once
    ``||grad||_2 <= grad_tol`` (default ``2e-9 * delta * sqrt(n)``; the
    objective is ``2 delta``-strongly concave, so this bounds the distance
    to the optimum by ``1e-9 sqrt(n)``). With ``line_search`` each step
    first tries twice the previous step size and halves it until the
    objective increases by an Armijo margin; once objective differences are
    at round-off level the step is accepted if the slope along the search
    direction keeps its sign and the gradient norm does not grow. Without it, the fixed ``step`` is used and
    ten consecutive decreasing steps raise :class:`StepSizeError`.
    ``max_iter`` defaults to ``max(1000 * config.max_iter, 200000)``.
    """
    p, delta = config.p, config.delta
    if p == 1:
        raise UnsupportedExponentError("gradient ascent needs p > 1")
    mats = _stack(bank)
    n = mats.shape[1]
    q = dual_exponent(p)
    if grad_tol is None:
        grad_tol = 2e-9 * delta * math.sqrt(n)
    if max_iter is None:
        max_iter = max(1000 * config.max_iter, 200_000)
    kappa = initial_step(mats, delta) if step is None else float(step)
    if not kappa > 0:
        raise DomainError(f"step size must be positive, got {kappa}")

    _, alpha = _init_alpha(mats, p, delta, None)
    Ka = mats @ alpha
    obj, u = _objective_from(alpha, Ka, q, delta)
    grad = _gradient_from(alpha, Ka, u, p, q, delta)
    gnorm = float(np.linalg.norm(grad))
    history = [gnorm]
    it = 0
    decreasing = 0
    stalled = False
    while gnorm > grad_tol and it < max_iter:
        it += 1
        if line_search:
            trial = 2.0 * kappa
            slack = 1e-14 * max(1.0, abs(obj))
            gg = float(grad @ grad)
            for _ in range(80):
                cand = alpha + trial * grad
                Kc = mats @ cand
                cand_obj, cand_u = _objective_from(cand, Kc, q, delta)
                gain = cand_obj - obj
                if gain >= 1e-4 * trial * gg and gain > slack:
                    break
                if abs(gain) <= slack:
                    # objective differences are round-off here; test the slope instead
                    cand_grad = _gradient_from(cand, Kc, cand_u, p, q, delta)
                    if cand_grad @ grad >= 0 and cand_grad @ cand_grad <= gg:
                        break
                trial *= 0.5
            else:
                stalled = True
                break
            kappa = trial
        else:
            cand = alpha + kappa * grad
            Kc = mats @ cand
            cand_obj, cand_u = _objective_from(cand, Kc, q, delta)
            decreasing = decreasing + 1 if cand_obj < obj else 0
            if decreasing >= 10:
                raise StepSizeError(
                    f"objective decreased for 10 consecutive steps with step {kappa:.3e}"
                )
        if np.array_equal(cand, alpha):
            stalled = True
            break
        alpha, Ka, obj, u = cand, Kc, cand_obj, cand_u
        grad = _gradient_from(alpha, Ka, u, p, q, delta)
        gnorm = float(np.linalg.norm(grad))
        history.append(gnorm)
        if callback is not None:
            callback(it, alpha, obj, gnorm)
    beta = beta_update(u, p)
    alpha = np.array(alpha)
    alpha.setflags(write=False)
    beta.setflags(write=False)
    return MklModel(
        alpha=alpha,
        beta=beta,
        config=config,
        iterations_used=it,
        final_change=gnorm,
        objective=obj,
        converged=gnorm <= grad_tol,
        kernel_names=_names(bank),
        history=tuple(history),
        meta={"solver": "gradient", "stalled": stalled, "step": kappa},
    )


def delta_convergence_bound(n: int, omega: float) -> float:
    """Sufficient regulariser ``2 sqrt(n) / omega`` for a contraction, where
    ``omega`` is the observed change between consecutive alpha iterates."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    return 2.0 * math.sqrt(n) / omega


