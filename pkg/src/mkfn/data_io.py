"""Feature CSV and kernel-bank files, model persistence and synthetic tasks."""
from __future__ import annotations

import csv
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DomainError,
    FormatError,
    InvalidDataError,
    ShapeError,
    SymmetrizedWarning,
    VersionError,
)
from .fn_solver import FnModel
from .joint_mkl import JointMklModel
from .kernelspace import KernelBank, KernelParams, cross_gram_rbf, gram_rbf, rbf_width_heuristic
from .lp_mkl import MklConfig, MklModel

MODEL_FORMAT_VERSION = 1
BANK_SYMMETRY_TOL = 1e-8


def _fmt(x) -> str:
    return "%.17g" % float(x)


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- datasets


@dataclass(frozen=True)
class Dataset:
    """Target and anomaly samples; ``views`` groups columns into kernels."""

    targets: np.ndarray
    anomalies: np.ndarray = None
    species: Optional[np.ndarray] = None
    source: str = ""
    views: Optional[tuple] = None

    def __post_init__(self):
        T = np.asarray(self.targets, dtype=float)
        if T.ndim == 1:
            T = T[:, None]
        if T.ndim != 2:
            raise ShapeError(f"targets must be 2-D, got {T.shape}")
        d = T.shape[1]
        if self.anomalies is None:
            A = np.zeros((0, d))
        else:
            A = np.asarray(self.anomalies, dtype=float)
            if A.size == 0:
                A = A.reshape(0, d)
            if A.ndim == 1:
                A = A[:, None]
        if A.shape[1] != d:
            raise ShapeError(f"targets have {d} features, anomalies {A.shape[1]}")
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(A))):
            raise InvalidDataError("dataset contains non-finite values")
        object.__setattr__(self, "targets", T)
        object.__setattr__(self, "anomalies", A)
        if self.species is not None:
            sp = np.asarray(self.species, dtype=object)
            if sp.shape != (A.shape[0],):
                raise ShapeError("one species tag per anomaly is required")
            object.__setattr__(self, "species", sp)
        if self.views is not None:
            views = tuple(tuple(int(c) for c in v) for v in self.views)
            if any(not v for v in views) or any(c < 0 or c >= d for v in views for c in v):
                raise ShapeError(f"view column groups must index the {d} feature columns")
            object.__setattr__(self, "views", views)

    @property
    def d(self) -> int:
        return self.targets.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[0]

    @property
    def n_anomalies(self) -> int:
        return self.anomalies.shape[0]

    def view_columns(self) -> list:
        if self.views is None:
            return [list(range(self.d))]
        return [list(v) for v in self.views]

    def per_attribute(self) -> "Dataset":
        return Dataset(self.targets, self.anomalies, self.species, self.source,
                       tuple((c,) for c in range(self.d)))

    def view_data(self, X) -> list:
        X = np.asarray(X, dtype=float)
        return [X[:, cols] for cols in self.view_columns()]


def load_features_csv(
    path,
    header: bool = False,
    label_col: Optional[int] = None,
    species_col: Optional[int] = None,
    per_attribute: bool = False,
    allow_empty: bool = False,
) -> Dataset:
    """Parse a comma-separated decimal feature file.

    With ``label_col`` set, that column (negative indices count from the end)
    holds 1 for targets and -1 for anomalies; otherwise every row is a
    target. ``species_col`` names an optional column of anomaly species tags
    (left empty on target rows). ``per_attribute`` gives each remaining
    column its own kernel view. An empty file is an error unless
    ``allow_empty`` is set, in which case a zero-row dataset is returned.
    """
    rows, labels, tags = [], [], []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not raw or all(not c.strip() for c in raw):
                continue
            if width is None:
                width = len(raw)
            elif len(raw) != width:
                raise FormatError(f"expected {width} columns, found {len(raw)}", lineno)
            special = {}
            for name, col in (("label", label_col), ("species", species_col)):
                if col is not None:
                    if not -width <= col < width:
                        raise FormatError(f"{name} column {col} out of range", lineno)
                    special[col % width] = name
            values = []
            for k, cell in enumerate(raw):
                kind = special.get(k)
                if kind == "species":
                    tags.append(cell.strip())
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(f"non-numeric cell {cell.strip()!r} in column {k}", lineno) from None
                if not math.isfinite(v):
                    raise FormatError(f"non-finite cell in column {k}", lineno)
                if kind == "label":
                    if v not in (1.0, -1.0):
                        raise FormatError(f"label must be 1 or -1, got {cell.strip()!r}", lineno)
                    labels.append(v > 0)
                else:
                    values.append(v)
            rows.append(values)
    if not rows:
        if allow_empty:
            return Dataset(np.zeros((0, 0)), source=os.fspath(path))
        raise FormatError("file contains no samples")
    X = np.array(rows, dtype=float)
    d = X.shape[1]
    if d == 0:
        raise FormatError("file contains no feature columns")
    if label_col is None:
        T, A, sp = X, None, None
    else:
        y = np.array(labels, dtype=bool)
        T, A = X[y], X[~y]
        sp = np.array(tags, dtype=object)[~y] if species_col is not None else None
    ds = Dataset(T, A, sp, source=os.fspath(path))
    return ds.per_attribute() if per_attribute else ds


def save_features_csv(path, dataset: Dataset, with_labels: bool = True) -> None:
    lines = []
    for rows, lab in ((dataset.targets, "1"), (dataset.anomalies, "-1")):
        for r in rows:
            cells = [_fmt(v) for v in r]
            if with_labels:
                cells.append(lab)
            lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


# ------------------------------------------------------------ kernel banks


def _read_numbers(lines, start, count, width, lineno0):
    block = []
    for k in range(count):
        idx = start + k
        if idx >= len(lines):
            raise FormatError(f"file ends after {idx} lines; expected more matrix rows", idx + lineno0)
        parts = lines[idx].split()
        if len(parts) != width:
            raise FormatError(f"expected {width} values, found {len(parts)}", idx + lineno0)
        try:
            block.append([float(v) for v in parts])
        except ValueError:
            raise FormatError("non-numeric value", idx + lineno0) from None
    return np.array(block, dtype=float).reshape(count, width)


def _symmetrize(K, j, tol=BANK_SYMMETRY_TOL):
    asym = float(np.max(np.abs(K - K.T))) if K.size else 0.0
    if asym > tol:
        raise FormatError(f"kernel {j} asymmetric by {asym:.3e} (> {tol:.0e})")
    if asym > 0:
        warnings.warn(f"kernel {j} symmetrized (asymmetry {asym:.1e})", SymmetrizedWarning, stacklevel=3)
        K = 0.5 * (K + K.T)
    return K


def _parse_header(lines):
    if not lines:
        raise FormatError("empty kernel file", 1)
    parts = lines[0].split()
    if len(parts) not in (2, 3):
        raise FormatError("header must be 'n J' or 'n J m'", 1)
    try:
        dims = [int(v) for v in parts]
    except ValueError:
        raise FormatError("header values must be integers", 1) from None
    if dims[0] < 1 or dims[1] < 1 or (len(dims) == 3 and dims[2] < 0):
        raise FormatError("header dimensions must be positive", 1)
    return dims


def load_kernel_bank(path, names=()) -> KernelBank:
    """Read ``n J [m]`` followed by J blocks of n rows of n values (and, when
    ``m`` is given, J blocks of n rows of m cross-kernel values)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines()]
    dims = _parse_header(lines)
    n, J = dims[0], dims[1]
    body = lines[1:]
    # blank lines between blocks are tolerated but must not shift line numbers
    numbered = [(i + 2, ln) for i, ln in enumerate(body) if ln.strip()]
    texts = [ln for _, ln in numbered]
    linenos = [k for k, _ in numbered]

    def block(start, rows, width):
        try:
            return _read_numbers(texts, start, rows, width, 0)
        except FormatError as err:
            idx = err.line
            line = linenos[idx] if idx is not None and idx < len(linenos) else (linenos[-1] + 1 if linenos else 2)
            raise FormatError(err.message, line) from None

    mats = []
    for j in range(J):
        K = block(j * n, n, n)
        mats.append(_symmetrize(K, j))
    pos = J * n
    cross = None
    if len(dims) == 3:
        m = dims[2]
        cross = np.stack([block(pos + j * n, n, m) for j in range(J)]) if m else np.zeros((J, n, 0))
        pos += J * n
    if pos != len(texts):
        raise FormatError(f"{len(texts) - pos} unexpected trailing lines after {J} blocks",
                          linenos[pos] if pos < len(linenos) else None)
    return KernelBank(np.stack(mats), names, cross)


def format_kernel_bank(bank: KernelBank, include_cross: bool = True) -> str:
    J, n = bank.J, bank.n
    has_cross = include_cross and bank.cross is not None
    head = f"{n} {J} {bank.cross.shape[2]}" if has_cross else f"{n} {J}"
    out = [head]
    for K in bank.matrices:
        out.extend(" ".join(_fmt(v) for v in row) for row in K)
    if has_cross:
        for C in bank.cross:
            out.extend(" ".join(_fmt(v) for v in row) for row in C)
    return "\n".join(out) + "\n"


def save_kernel_bank(bank: KernelBank, path, include_cross: bool = True) -> None:
    atomic_write(path, format_kernel_bank(bank, include_cross))


def load_cross_kernels(path) -> np.ndarray:
    """Read ``n J m`` followed by J blocks of n rows of m train-by-test values."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    dims = _parse_header(lines)
    if len(dims) != 3:
        raise FormatError("cross-kernel header must be 'n J m'", 1)
    n, J, m = dims
    numbered = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    texts = [ln for _, ln in numbered]
    if m == 0:
        if texts:
            raise FormatError("rows present although m = 0", numbered[0][0])
        return np.zeros((J, n, 0))
    try:
        blocks = [_read_numbers(texts, j * n, n, m, 0) for j in range(J)]
    except FormatError as err:
        line = numbered[err.line][0] if err.line is not None and err.line < len(numbered) else None
        raise FormatError(err.message, line) from None
    if len(texts) != J * n:
        raise FormatError(f"{len(texts) - J * n} unexpected trailing lines", numbered[J * n][0])
    return np.stack(blocks)


def save_cross_kernels(cross, path) -> None:
    cross = np.asarray(cross, dtype=float)
    J, n, m = cross.shape
    out = [f"{n} {J} {m}"]
    for C in cross:
        out.extend(" ".join(_fmt(v) for v in row) for row in C)
    atomic_write(path, "\n".join(out) + "\n")


def kernel_from_distances(D, sigma: float) -> np.ndarray:
    """``exp(-D^2 / (2 sigma^2))`` element-wise, the RBF convention."""
    D = np.asarray(D, dtype=float)
    if not sigma > 0:
        raise DomainError(f"kernel width must be positive, got {sigma}")
    if np.any(D < 0):
        raise InvalidDataError("distances must be non-negative")
    return np.exp(-(D * D) / (2.0 * sigma * sigma))


def load_distance_bank(path, sigma: Optional[float] = None, width_factor: float = 1.0, names=()) -> KernelBank:
    """Kernel-bank file holding distance matrices, converted to RBF kernels.

    ``sigma=None`` uses ``width_factor`` times the mean off-diagonal distance
    of each matrix.
    """
    raw = load_kernel_bank(path, names)
    mats, params = [], []
    n = raw.n
    for D in raw.matrices:
        s = sigma
        if s is None:
            if n < 2:
                raise InvalidDataError("width heuristic needs at least 2 samples")
            s = width_factor * float(D[np.triu_indices(n, 1)].mean())
        mats.append(kernel_from_distances(D, s))
        params.append(KernelParams(s, None if sigma is not None else width_factor))
    cross = None
    if raw.cross is not None:
        cross = np.stack([kernel_from_distances(C, p.sigma) for C, p in zip(raw.cross, params)])
    return KernelBank(np.stack(mats), raw.names, cross, tuple(params))


# ------------------------------------------------------------------ models


@dataclass(frozen=True)
class KernelRecipe:
    """Everything needed to rebuild the cross kernels from raw features."""

    train: np.ndarray
    views: tuple
    sigmas: tuple
    width_factor: Optional[float] = None

    def cross(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        d = self.train.shape[1]
        if X.size == 0:
            return np.zeros((len(self.views), self.train.shape[0], 0))
        if X.ndim != 2 or X.shape[1] != d:
            raise ShapeError(f"model was trained on {d} features, test data has "
                             f"{X.shape[1] if X.ndim == 2 else X.ndim}")
        return np.stack([
            cross_gram_rbf(self.train[:, list(v)], X[:, list(v)], s)
            for v, s in zip(self.views, self.sigmas)
        ])

    def bank(self) -> KernelBank:
        mats = [gram_rbf(self.train[:, list(v)], s) for v, s in zip(self.views, self.sigmas)]
        return KernelBank(np.stack(mats), params=tuple(KernelParams(s, self.width_factor) for s in self.sigmas))


def recipe_for(train: np.ndarray, views, width_factor: float) -> KernelRecipe:
    train = np.asarray(train, dtype=float)
    views = tuple(tuple(v) for v in views)
    sigmas = tuple(rbf_width_heuristic(train[:, list(v)], width_factor) for v in views)
    return KernelRecipe(train, views, sigmas, width_factor)


def _vec(key, values):
    values = list(values)
    return f"{key} {len(values)}" + "".join(" " + _fmt(v) for v in values)


def _matrix(key, M):
    M = np.asarray(M, dtype=float)
    out = [f"{key} {M.shape[0]} {M.shape[1]}"]
    out.extend(" ".join(_fmt(v) for v in row) for row in M)
    return out


def _names_line(key, names):
    for name in names:
        if not name or any(ch.isspace() for ch in name):
            raise FormatError(f"kernel/task name {name!r} must be non-empty without whitespace")
    return f"{key} {len(names)}" + "".join(" " + name for name in names)


def format_model(model, recipe: Optional[KernelRecipe] = None) -> str:
    lines = [f"mkfn-model {MODEL_FORMAT_VERSION}"]
    if isinstance(model, FnModel):
        lines.append("kind fn")
        lines.append(f"delta {_fmt(model.delta)}")
        lines.append(f"fusion {model.fusion or 'none'}")
        lines.append(_names_line("kernel_names", model.kernel_names))
        lines.append(_vec("alpha", model.alpha))
    elif isinstance(model, MklModel):
        lines.append("kind mkl")
        lines.append(f"solver {model.meta.get('solver', 'fixed-point')}")
        _config_lines(lines, model.config)
        lines.append(f"iterations_used {int(model.iterations_used)}")
        lines.append(f"final_change {_fmt(model.final_change)}")
        lines.append(f"objective {_fmt(model.objective)}")
        lines.append(f"converged {int(bool(model.converged))}")
        lines.append(_names_line("kernel_names", model.kernel_names))
        lines.append(_vec("beta", model.beta))
        lines.append(_vec("alpha", model.alpha))
    elif isinstance(model, JointMklModel):
        lines.append("kind joint")
        _config_lines(lines, model.config)
        lines.append(f"iterations_used {int(model.iterations_used)}")
        lines.append(f"final_change {_fmt(model.final_change)}")
        lines.append(f"converged {int(bool(model.converged))}")
        lines.append(_names_line("kernel_names", model.kernel_names))
        lines.append(_names_line("task_names", model.task_names))
        lines.append(_vec("task_changes", model.task_changes))
        lines.append(_vec("beta", model.beta))
        for c, a in enumerate(model.alphas):
            lines.append(_vec(f"alpha_{c}", a))
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    if recipe is not None:
        lines.append(f"recipe_width_factor {'none' if recipe.width_factor is None else _fmt(recipe.width_factor)}")
        lines.append(_vec("recipe_sigmas", recipe.sigmas))
        lines.append("recipe_views " + " ".join(",".join(str(c) for c in v) for v in recipe.views))
        lines.extend(_matrix("recipe_train", recipe.train))
    lines.append("end")
    return "\n".join(lines) + "\n"


def _config_lines(lines, config: MklConfig):
    lines.append(f"p {_fmt(config.p)}")
    lines.append(f"delta {_fmt(config.delta)}")
    lines.append(f"tol {'none' if config.tol is None else _fmt(config.tol)}")
    lines.append(f"max_iter {int(config.max_iter)}")


def save_model(model, path, recipe: Optional[KernelRecipe] = None) -> None:
    atomic_write(path, format_model(model, recipe))


class _Reader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0
        self.fields = {}

    def parse(self):
        while self.pos < len(self.lines):
            lineno = self.pos + 2
            line = self.lines[self.pos]
            self.pos += 1
            if not line.strip():
                continue
            key, _, rest = line.partition(" ")
            if key == "end":
                return self.fields
            if key in self.fields:
                raise FormatError(f"duplicate field {key!r}", lineno)
            if key == "recipe_train":
                try:
                    r, c = (int(v) for v in rest.split())
                except ValueError:
                    raise FormatError("bad matrix header", lineno) from None
                # +2: 1-based numbering and the header line stripped by the caller
                M = _read_numbers(self.lines, self.pos, r, c, 2) if r else np.zeros((0, c))
                self.pos += r
                self.fields[key] = (M, lineno)
            else:
                self.fields[key] = (rest, lineno)
        raise FormatError("model file truncated (missing 'end')", len(self.lines) + 1)

    def get(self, key, conv=str, default=None, required=True):
        if key not in self.fields:
            if required:
                raise FormatError(f"missing field {key!r}")
            return default
        value, lineno = self.fields[key]
        try:
            return conv(value)
        except (ValueError, TypeError) as err:
            raise FormatError(f"corrupted field {key!r}: {err}", lineno) from None


def _parse_vec(text):
    parts = text.split()
    count = int(parts[0])
    if len(parts) - 1 != count:
        raise ValueError(f"declared {count} values, found {len(parts) - 1}")
    vals = np.array([float(v) for v in parts[1:]], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value")
    return vals


def _parse_names(text):
    parts = text.split()
    count = int(parts[0])
    if len(parts) - 1 != count:
        raise ValueError(f"declared {count} names, found {len(parts) - 1}")
    return tuple(parts[1:])


def _opt_float(text):
    return None if text.strip() == "none" else float(text)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def parse_model(text: str):
    """Return ``(model, recipe or None)``."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("mkfn-model "):
        raise FormatError("not a model file (missing 'mkfn-model' header)", 1)
    try:
        version = int(lines[0].split()[1])
    except (ValueError, IndexError):
        raise FormatError("unreadable format version", 1) from None
    if version > MODEL_FORMAT_VERSION:
        raise VersionError(f"model format version {version} is newer than supported "
                           f"version {MODEL_FORMAT_VERSION}", 1)
    if version < 1:
        raise VersionError(f"unknown model format version {version}", 1)
    r = _Reader("\n".join(lines[1:]))
    r.parse()
    kind = r.get("kind")
    if kind == "fn":
        fusion = r.get("fusion")
        model = FnModel(
            alpha=_frozen(r.get("alpha", _parse_vec)),
            delta=r.get("delta", float),
            fusion=None if fusion == "none" else fusion,
            kernel_names=r.get("kernel_names", _parse_names),
        )
    elif kind in ("mkl", "joint"):
        config = MklConfig(
            p=r.get("p", float), delta=r.get("delta", float),
            tol=r.get("tol", _opt_float), max_iter=r.get("max_iter", int),
        )
        beta = _frozen(r.get("beta", _parse_vec))
        names = r.get("kernel_names", _parse_names)
        if len(names) != beta.size:
            raise FormatError(f"{len(names)} kernel names for {beta.size} weights")
        if kind == "mkl":
            model = MklModel(
                alpha=_frozen(r.get("alpha", _parse_vec)),
                beta=beta,
                config=config,
                iterations_used=r.get("iterations_used", int),
                final_change=r.get("final_change", float),
                objective=r.get("objective", float),
                converged=bool(r.get("converged", int)),
                kernel_names=names,
                meta={"solver": r.get("solver")},
            )
        else:
            tasks = r.get("task_names", _parse_names)
            alphas = tuple(_frozen(r.get(f"alpha_{c}", _parse_vec)) for c in range(len(tasks)))
            model = JointMklModel(
                alphas=alphas,
                beta=beta,
                config=config,
                iterations_used=r.get("iterations_used", int),
                final_change=r.get("final_change", float),
                converged=bool(r.get("converged", int)),
                task_names=tasks,
                kernel_names=names,
                task_changes=tuple(r.get("task_changes", _parse_vec)),
            )
    else:
        raise FormatError(f"unknown model kind {kind!r}")
    recipe = None
    if "recipe_train" in r.fields:
        train = r.fields["recipe_train"][0]
        views = r.get("recipe_views", lambda s: tuple(tuple(int(c) for c in v.split(",")) for v in s.split()))
        sigmas = tuple(r.get("recipe_sigmas", _parse_vec))
        if len(views) != len(sigmas):
            raise FormatError(f"{len(views)} recipe views for {len(sigmas)} widths")
        recipe = KernelRecipe(train, views, sigmas, r.get("recipe_width_factor", _opt_float))
    return model, recipe


def load_model(path, with_recipe: bool = False):
    """Load a model file; ``with_recipe=True`` returns ``(model, recipe)``."""
    with open(path) as fh:
        model, recipe = parse_model(fh.read())
    return (model, recipe) if with_recipe else model


# --------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-Gaussian one-class task, repeated independently for each view."""

    dim: int = 2
    n_target_train: int = 1000
    n_test_pos: int = 500
    n_test_neg: int = 500
    n_val_pos: int = 100
    n_val_neg: int = 100
    target_mean_range: tuple = (0.0, 1.0)
    negative_mean_range: tuple = (0.5, 1.5)
    J: int = 1
    seed: int = 0

    def __post_init__(self):
        counts = (self.dim, self.n_target_train, self.n_test_pos, self.n_test_neg,
                  self.n_val_pos, self.n_val_neg, self.J)
        if min(counts) < 1:
            raise InvalidDataError(f"all counts must be positive, got {counts}")

    def scaled(self, factor: float) -> "SyntheticSpec":
        """Same design with every sample count multiplied by ``factor``."""
        def s(k):
            return max(1, int(round(k * factor)))
        return SyntheticSpec(self.dim, s(self.n_target_train), s(self.n_test_pos), s(self.n_test_neg),
                             s(self.n_val_pos), s(self.n_val_neg), self.target_mean_range,
                             self.negative_mean_range, self.J, self.seed)

    def with_(self, **kw) -> "SyntheticSpec":
        from dataclasses import replace
        return replace(self, **kw)


def random_spd_covariance(dim: int, rng) -> np.ndarray:
    """``A'A + 0.1 I`` with ``A`` entries uniform on (-1, 1)."""
    A = rng.uniform(-1.0, 1.0, size=(dim, dim))
    return A.T @ A + 0.1 * np.eye(dim)


@dataclass(frozen=True)
class SyntheticViews:
    """Per-view sample matrices; labels are shared across views."""

    train: list
    val: list
    val_labels: np.ndarray
    test: list
    test_labels: np.ndarray
    means: list = field(default_factory=list, compare=False)

    @property
    def J(self) -> int:
        return len(self.train)

    def split(self):
        from .evaluation import TrialSplit
        return TrialSplit(self.train, self.val, self.val_labels, self.test, self.test_labels)

    def datasets(self):
        """``(train, val, test)`` datasets whose columns concatenate the views."""
        d = self.train[0].shape[1]
        views = tuple(tuple(range(j * d, (j + 1) * d)) for j in range(self.J))

        def ds(mats, labels, name):
            X = np.hstack(mats)
            if labels is None:
                return Dataset(X, None, source=name, views=views)
            return Dataset(X[labels], X[~labels], source=name, views=views)

        return (ds(self.train, None, "synthetic-train"), ds(self.val, self.val_labels, "synthetic-val"),
                ds(self.test, self.test_labels, "synthetic-test"))


def _draw_view(spec: SyntheticSpec, rng):
    mu_t = rng.uniform(*spec.target_mean_range, size=spec.dim)
    cov = random_spd_covariance(spec.dim, rng)
    mu_n = rng.uniform(*spec.negative_mean_range, size=spec.dim)
    L = np.linalg.cholesky(cov)

    def draw(mu, k):
        return mu + rng.standard_normal((k, spec.dim)) @ L.T

    train = draw(mu_t, spec.n_target_train)
    val = np.vstack([draw(mu_t, spec.n_val_pos), draw(mu_n, spec.n_val_neg)])
    test = np.vstack([draw(mu_t, spec.n_test_pos), draw(mu_n, spec.n_test_neg)])
    return train, val, test, (mu_t, mu_n, cov)


def synth_gaussian_task(spec: SyntheticSpec) -> SyntheticViews:
    """J independent draws of the whole generation process, one per view.

    Each view has its own target mean, negative mean and covariance; the
    negative class uses the same covariance as the target class. Positive
    samples precede negatives in the validation and test sets.
    """
    rng = np.random.default_rng(spec.seed)
    train, val, test, means = [], [], [], []
    for _ in range(spec.J):
        tr, va, te, m = _draw_view(spec, rng)
        train.append(tr)
        val.append(va)
        test.append(te)
        means.append(m)
    val_labels = np.r_[np.ones(spec.n_val_pos, bool), np.zeros(spec.n_val_neg, bool)]
    test_labels = np.r_[np.ones(spec.n_test_pos, bool), np.zeros(spec.n_test_neg, bool)]
    return SyntheticViews(train, val, val_labels, test, test_labels, means)


def noise_views(sizes: Sequence[int], dim: int, n_noise: int, rng) -> list:
    """``n_noise`` views of standard-normal data; each view is a list of
    matrices with the given row counts (e.g. train, val, test)."""
    return [[rng.standard_normal((k, dim)) for k in sizes] for _ in range(n_noise)]


def make_noisy_bank(informative: KernelBank, n_noise: int, seed: int, dim: int = 2,
                    width_factor: float = 0.5) -> KernelBank:
    """Replace the last ``n_noise`` kernels by RBF kernels over random data.

    The noise data are standard normal with ``dim`` features and as many
    samples as the bank; the total kernel count stays fixed. Cross blocks,
    if present, are replaced by kernels against independent random test
    data of the same width.
    """
    J = informative.J
    if not 0 <= n_noise <= J:
        raise InvalidDataError(f"n_noise={n_noise} outside 0..{J}")
    if n_noise == 0:
        return informative
    rng = np.random.default_rng(seed)
    n = informative.n
    m = informative.cross.shape[2] if informative.cross is not None else 0
    keep = J - n_noise
    mats = list(informative.matrices[:keep])
    crosses = list(informative.cross[:keep]) if informative.cross is not None else []
    params = list(informative.params[:keep]) if informative.params else []
    for _ in range(n_noise):
        Z = rng.standard_normal((n, dim))
        sigma = rbf_width_heuristic(Z, width_factor)
        mats.append(gram_rbf(Z, sigma))
        params.append(KernelParams(sigma, width_factor))
        if informative.cross is not None:
            crosses.append(cross_gram_rbf(Z, rng.standard_normal((m, dim)), sigma))
    names = informative.names[:keep] + tuple(f"noise{k}" for k in range(n_noise))
    cross = np.stack(crosses) if informative.cross is not None else None
    return KernelBank(np.stack(mats), names, cross, tuple(params) if informative.params else ())
