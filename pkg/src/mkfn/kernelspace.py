"""RBF Gram matrices, kernel banks and fixed-rule kernel fusion.

Kernels use the Gaussian convention ``k(x, y) = exp(-||x - y||^2 / (2 sigma^2))``
with ``sigma = factor * D``, where ``D`` is the mean pairwise Euclidean
distance between training samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import (
    DegenerateDataError,
    DomainError,
    InsufficientSamplesError,
    InvalidDataError,
    InvalidWeightError,
    ShapeError,
    SymmetryError,
)

WIDTH_FACTORS = (0.25, 0.5, 1.0)
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8


def as_samples(X, name="X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array (1-D input is one feature)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[1] < 1:
        raise ShapeError(f"{name} has no feature columns")
    if not np.all(np.isfinite(X)):
        raise InvalidDataError(f"{name} contains non-finite values")
    return X


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelParams:
    sigma: float
    width_factor: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"kernel width must be positive, got {self.sigma}")


@dataclass(frozen=True)
class KernelBank:
    """J Gram matrices over one ordered training set.

    ``cross`` optionally carries the matching train-by-test blocks, shape
    ``(J, n, m)``.
    """

    matrices: np.ndarray
    names: tuple = ()
    cross: Optional[np.ndarray] = None
    params: tuple = field(default=(), compare=False)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[0] < 1 or mats.shape[1] != mats.shape[2]:
            raise ShapeError(f"kernel bank must have shape (J, n, n), got {mats.shape}")
        object.__setattr__(self, "matrices", _frozen(mats))
        J, n = mats.shape[0], mats.shape[1]
        names = tuple(self.names) if self.names else tuple(f"k{j}" for j in range(J))
        if len(names) != J:
            raise ShapeError(f"{len(names)} names for {J} kernels")
        object.__setattr__(self, "names", names)
        if self.cross is not None:
            cross = np.asarray(self.cross, dtype=float)
            if cross.ndim == 2:
                cross = cross[None]
            if cross.ndim != 3 or cross.shape[:2] != (J, n):
                raise ShapeError(
                    f"cross kernels must have shape ({J}, {n}, m), got {cross.shape}"
                )
            object.__setattr__(self, "cross", _frozen(cross))
        object.__setattr__(self, "params", tuple(self.params))

    @property
    def J(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    def __len__(self):
        return self.J

    def __getitem__(self, j):
        return self.matrices[j]

    def with_cross(self, cross) -> "KernelBank":
        return KernelBank(self.matrices, self.names, cross, self.params)

    def subset(self, idx: Sequence[int]) -> "KernelBank":
        idx = list(idx)
        cross = None if self.cross is None else self.cross[idx]
        params = tuple(self.params[i] for i in idx) if self.params else ()
        return KernelBank(self.matrices[idx], tuple(self.names[i] for i in idx), cross, params)


def rbf_width_heuristic(X, factor: float = 1.0) -> float:
    """``factor`` times the mean Euclidean distance over all unordered pairs."""
    X = as_samples(X)
    if X.shape[0] < 2:
        raise InsufficientSamplesError("width heuristic needs at least 2 samples")
    if not factor > 0:
        raise DomainError(f"width factor must be positive, got {factor}")
    D = float(np.mean(pdist(X)))
    if D == 0.0:
        raise DegenerateDataError("all training samples coincide; mean distance is 0")
    return factor * D


def _rbf_from_sqdist(sq: np.ndarray, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise DomainError(f"kernel width must be positive, got {sigma}")
    return np.exp(-sq / (2.0 * sigma * sigma))


def gram_rbf(X, sigma: float) -> np.ndarray:
    """Dense RBF Gram matrix of ``X``; exactly symmetric with unit diagonal."""
    X = as_samples(X)
    sq = cdist(X, X, "sqeuclidean")
    # cdist is not bitwise symmetric in general
    sq = np.triu(sq, 1)
    sq = sq + sq.T
    return _rbf_from_sqdist(sq, sigma)


def cross_gram_rbf(X_train, X_test, sigma: float) -> np.ndarray:
    """Train-by-test RBF block of shape ``(n, m)``."""
    X_train = as_samples(X_train, "X_train")
    X_test = np.asarray(X_test, dtype=float)
    if X_test.size == 0:
        return np.zeros((X_train.shape[0], 0))
    X_test = as_samples(X_test, "X_test")
    if X_test.shape[1] != X_train.shape[1]:
        raise ShapeError(
            f"feature dimension mismatch: train {X_train.shape[1]}, test {X_test.shape[1]}"
        )
    return _rbf_from_sqdist(cdist(X_train, X_test, "sqeuclidean"), sigma)


def build_bank(views, train_idx=None, factor=0.5, test=None, names=()) -> KernelBank:
    """One RBF kernel per view, each with its own distance heuristic.

    ``views`` is a list of training sample matrices (same row count); ``test``
    an optional matching list of test matrices for the cross blocks.
    """
    mats, crosses, params = [], [], []
    for v, Xv in enumerate(views):
        Xv = as_samples(Xv)
        sigma = rbf_width_heuristic(Xv, factor)
        mats.append(gram_rbf(Xv, sigma))
        params.append(KernelParams(sigma, factor))
        if test is not None:
            crosses.append(cross_gram_rbf(Xv, test[v], sigma))
    cross = np.stack(crosses) if test is not None else None
    return KernelBank(np.stack(mats), names, cross, tuple(params))


def _check_same_shape(bank) -> np.ndarray:
    if isinstance(bank, KernelBank):
        return bank.matrices
    mats = np.asarray(bank, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[0] == 0:
        raise ShapeError("expected a non-empty stack of equally shaped kernel matrices")
    return mats


def combine_weighted(bank, beta) -> np.ndarray:
    """Element-wise ``sum_j beta_j K_j``."""
    mats = _check_same_shape(bank)
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != mats.shape[0]:
        raise ShapeError(f"{beta.shape[0]} weights for {mats.shape[0]} kernels")
    if np.any(beta < 0):
        raise InvalidWeightError("kernel weights must be non-negative")
    J = mats.shape[0]
    return np.tensordot(beta, mats.reshape(J, -1), axes=1).reshape(mats.shape[1:])


def fuse_average(bank) -> np.ndarray:
    """Element-wise arithmetic mean of the kernels."""
    mats = _check_same_shape(bank)
    return mats.mean(axis=0)


def fuse_product(bank) -> np.ndarray:
    """Element-wise geometric mean of the kernels."""
    mats = _check_same_shape(bank)
    if np.any(mats < 0):
        raise DomainError("geometric-mean fusion needs non-negative kernel entries")
    J = mats.shape[0]
    if J == 1:
        return mats[0].copy()
    with np.errstate(divide="ignore"):
        logs = np.log(mats)
    out = np.exp(logs.sum(axis=0) / J)
    # identical inputs must come back unchanged
    same = np.all(mats == mats[0], axis=0)
    out[same] = mats[0][same]
    return out


def fuse(bank, rule: str) -> np.ndarray:
    if rule == "average":
        return fuse_average(bank)
    if rule == "product":
        return fuse_product(bank)
    raise ValueError(f"unknown fusion rule {rule!r}")


def check_symmetric(K, tol: float = SYMMETRY_TOL) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got {K.shape}")
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asym > tol:
        raise SymmetryError(f"kernel matrix asymmetric by {asym:.3e} (> {tol:.1e})")
    return K


def validate_psd(K, tol: float = PSD_TOL) -> bool:
    """True iff the smallest eigenvalue is at least ``-tol * max(diag)``."""
    K = check_symmetric(K)
    if K.size == 0:
        return True
    lam_min = np.linalg.eigvalsh(K)[0]
    scale = max(float(np.max(np.diag(K))), 0.0)
    return bool(lam_min >= -tol * scale)
