"""Single-kernel regularized Fisher null-space one-class classifier.

Training solves the dual ridge system ``(delta I + K) alpha = 1``. The learned
projection maps every target training sample close to 1 while the
hypothetical negative class sits at the origin, so test samples are scored
by their distance to 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import DomainError, NumericalError, ShapeError
from .kernelspace import check_symmetric, fuse

MAX_JITTER_ESCALATIONS = 3


def solve_alpha(K, delta: float) -> np.ndarray:
    """Return ``(delta I + K)^{-1} 1`` via a Cholesky factorization.

    If the shifted matrix is not numerically positive definite, a jitter of
    ``1e-10 * trace(K) / n`` is added to the diagonal and escalated by 10x at
    most three times before giving up with :class:`NumericalError`.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got {K.shape}")
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    n = K.shape[0]
    ones = np.ones(n)
    A = K + delta * np.eye(n)
    tr = np.trace(K) / n if n else 0.0
    base = 1e-10 * tr if tr > 0 else 1e-10
    jitters = [0.0] + [base * 10.0**k for k in range(MAX_JITTER_ESCALATIONS + 1)]
    for jitter in jitters:
        try:
            factor = cho_factor(A + jitter * np.eye(n), lower=True, check_finite=True)
            return cho_solve(factor, ones)
        except (LinAlgError, ValueError):
            continue
    raise NumericalError("Cholesky factorization of delta*I + K failed", jitter)


def dual_objective(K, delta: float, alpha) -> float:
    """``-a'Ka - delta a'a + 2 a'1``."""
    K = np.asarray(K, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if K.shape != (alpha.shape[0], alpha.shape[0]):
        raise ShapeError(f"alpha of length {alpha.shape[0]} does not match K {K.shape}")
    return float(-alpha @ K @ alpha - delta * alpha @ alpha + 2.0 * alpha.sum())


def project_alpha(alpha, k_x) -> np.ndarray:
    k_x = np.asarray(k_x, dtype=float)
    if k_x.shape[0] != alpha.shape[0]:
        raise ShapeError(
            f"kernel column has {k_x.shape[0]} rows, model has {alpha.shape[0]} samples"
        )
    return k_x.T @ alpha


def score_from_projection(s):
    return -np.abs(1.0 - np.asarray(s, dtype=float))


@dataclass(frozen=True)
class FnModel:
    """Fitted single-kernel model.

    ``fusion`` is set ("average" / "product") when the training kernel was a
    fixed-rule fusion of a bank; scoring a bank of cross kernels then fuses
    them the same way.
    """

    alpha: np.ndarray
    delta: float
    fusion: Optional[str] = None
    kernel_names: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def project(self, k_x):
        return project(self, k_x)

    def decision_score(self, k_x):
        return decision_score(self, k_x)

    def combine_cross(self, cross) -> np.ndarray:
        cross = np.asarray(cross, dtype=float)
        if cross.ndim == 2:
            return cross
        if self.fusion is None:
            if cross.shape[0] != 1:
                raise ShapeError("single-kernel model given a stack of cross kernels")
            return cross[0]
        return fuse(cross, self.fusion)

    def project_bank(self, cross) -> np.ndarray:
        return project_alpha(self.alpha, self.combine_cross(cross))

    def score_bank(self, cross, raw: bool = False) -> np.ndarray:
        s = self.project_bank(cross)
        return s if raw else score_from_projection(s)


def fit_fn(K, delta: float, fusion=None, kernel_names=(), meta=None) -> FnModel:
    """Fit on a precomputed (possibly fused) Gram matrix."""
    K = check_symmetric(K)
    alpha = solve_alpha(K, delta)
    alpha.setflags(write=False)
    return FnModel(alpha, float(delta), fusion, tuple(kernel_names), dict(meta or {}))


def fit_fused(bank, delta: float, rule: str) -> FnModel:
    """FN-Average / FN-Product baselines: fuse the bank, then fit."""
    names = getattr(bank, "names", ())
    return fit_fn(fuse(bank, rule), delta, fusion=rule, kernel_names=names)


def project(model: FnModel, k_x):
    """Raw projection ``k_x' alpha`` (vector input -> scalar, matrix -> per column)."""
    s = project_alpha(model.alpha, k_x)
    return float(s) if np.ndim(s) == 0 else s


def decision_score(model: FnModel, k_x):
    """``-|1 - projection|``; larger means more target-like."""
    s = score_from_projection(project_alpha(model.alpha, k_x))
    return float(s) if np.ndim(s) == 0 else s
