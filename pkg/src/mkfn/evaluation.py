"""ROC/AUC and presentation-attack metrics, validation grid search and the
repeated random-split trial protocol."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .exceptions import (
    EmptyGroupWarning,
    GridSearchError,
    InsufficientSamplesError,
    InvalidDataError,
    MKFNError,
    ShapeError,
    UndefinedMetricError,
)
from .fn_solver import fit_fused
from .kernelspace import WIDTH_FACTORS, KernelBank
from .lp_mkl import P_GRID, MklConfig, fit_fixed_point, fit_gradient_ascent

DELTA_MULTIPLIERS = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2)
METHODS = ("lp_mkl", "lp_mkl_grad", "fn_average", "fn_product")


def _labels(labels) -> np.ndarray:
    """Boolean target mask from {1, -1}, {1, 0} or bool labels."""
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels
    return labels > 0


@dataclass(frozen=True)
class ScoredSet:
    """Scores with labels (True / +1 = target). ``species`` tags anomalies."""

    scores: np.ndarray
    labels: np.ndarray
    species: Optional[np.ndarray] = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).ravel()
        labels = _labels(self.labels).ravel()
        if scores.shape != labels.shape:
            raise ShapeError(f"{scores.size} scores for {labels.size} labels")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        if self.species is not None:
            species = np.asarray(self.species, dtype=object).ravel()
            if species.shape != scores.shape:
                raise ShapeError("species tags must align with scores")
            object.__setattr__(self, "species", species)


def roc_auc(scores, labels=None) -> float:
    """Normalised Mann-Whitney U with midranks; targets are positives.

    Accepts a :class:`ScoredSet` or ``(scores, labels)``.
    """
    if labels is None:
        scored = scores
    else:
        scored = ScoredSet(scores, labels)
    pos = scored.labels
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one target and one anomaly")
    ranks = rankdata(scored.scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """``(fpr, tpr, thresholds)`` with thresholds descending, starting at +inf."""
    s = ScoredSet(scores, labels)
    order = np.argsort(-s.scores, kind="mergesort")
    scores_sorted = s.scores[order]
    y = s.labels[order]
    distinct = np.r_[np.nonzero(np.diff(scores_sorted))[0], y.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos, n_neg = y.sum(), y.size - y.sum()
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes")
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, scores_sorted[distinct]]
    return fpr, tpr, thresholds


def pad_metrics(scored: ScoredSet, threshold: float):
    """``(APCER, BPCER, ACER)`` at ``threshold``.

    Samples scored strictly above the threshold are accepted as bona fide.
    APCER is the worst per-species attack acceptance rate.
    """
    if scored.species is None:
        raise InvalidDataError("presentation-attack metrics need species tags for anomalies")
    attacks = ~scored.labels
    tags = scored.species[attacks]
    if any(t is None or (isinstance(t, float) and math.isnan(t)) or t == "" for t in tags):
        raise InvalidDataError("every anomaly needs a species tag")
    accepted = scored.scores > threshold
    rates = {}
    for tag in sorted(set(tags), key=str):
        group = attacks & (scored.species == tag)
        if not group.any():
            warnings.warn(f"species {tag!r} has no samples", EmptyGroupWarning, stacklevel=2)
            continue
        rates[tag] = float(accepted[group].mean())
    if not rates:
        raise UndefinedMetricError("no attack samples")
    targets = scored.labels
    if not targets.any():
        raise UndefinedMetricError("no bona fide samples")
    apcer = max(rates.values())
    bpcer = float((~accepted[targets]).mean())
    return apcer, bpcer, (apcer + bpcer) / 2.0


def eer_threshold(scores, labels) -> float:
    """Threshold where false-accept and false-reject rates are closest."""
    s = ScoredSet(scores, labels)
    cands = np.unique(s.scores)
    best, best_gap = cands[0], math.inf
    for t in np.r_[cands[0] - 1.0, cands]:
        far = float((s.scores[~s.labels] > t).mean())
        frr = float((s.scores[s.labels] <= t).mean())
        if abs(far - frr) < best_gap:
            best, best_gap = t, abs(far - frr)
    return float(best)


def min_error_threshold(scores, labels) -> float:
    """Threshold minimising the misclassification rate (ties -> lowest)."""
    s = ScoredSet(scores, labels)
    cands = np.r_[-np.inf, np.unique(s.scores)]
    errs = [classification_error(s.scores, s.labels, t) for t in cands]
    return float(cands[int(np.argmin(errs))])


def classification_error(scores, labels, threshold: float) -> float:
    """Fraction misclassified when ``score > threshold`` means target."""
    s = ScoredSet(scores, labels)
    return float(np.mean((s.scores > threshold) != s.labels))


@dataclass(frozen=True)
class HyperGrid:
    p_values: tuple = P_GRID
    delta_multipliers: tuple = DELTA_MULTIPLIERS
    width_factors: tuple = WIDTH_FACTORS

    def __post_init__(self):
        for name in ("p_values", "delta_multipliers", "width_factors"):
            vals = tuple(sorted(float(v) for v in getattr(self, name)))
            if not vals:
                raise InvalidDataError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)


@dataclass
class GridResult:
    p: Optional[float]
    delta_multiplier: float
    width_factor: float
    delta: float
    auc: float
    model: object
    bank: KernelBank
    cells: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)


def fit_method(bank, method: str, p: Optional[float], delta: float, config_kw=None):
    config_kw = config_kw or {}
    if method == "lp_mkl":
        return fit_fixed_point(bank, MklConfig(p=p, delta=delta, **config_kw))
    if method == "lp_mkl_grad":
        return fit_gradient_ascent(bank, MklConfig(p=p, delta=delta, **config_kw))
    if method == "fn_average":
        return fit_fused(bank, delta, "average")
    if method == "fn_product":
        return fit_fused(bank, delta, "product")
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def grid_select(
    bank_factory: Callable[[float], KernelBank],
    val_labels,
    grid: HyperGrid = HyperGrid(),
    method: str = "lp_mkl",
    config_kw=None,
) -> GridResult:
    """Fit every grid cell and keep the one with the best validation AUC.

    ``bank_factory(width_factor)`` returns the training bank whose ``cross``
    blocks hold the train-by-validation kernels. Ties go to the lower p,
    then the lower delta, then the lower width factor. Fixed-rule methods
    ignore the p axis. Cells that raise are recorded in ``failures``; if
    every cell fails :class:`GridSearchError` is raised.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    val_labels = _labels(val_labels)
    if val_labels.all() or not val_labels.any():
        raise InsufficientSamplesError("validation set needs both targets and anomalies")
    if method in ("fn_average", "fn_product"):
        p_values = (None,)
    elif method == "lp_mkl_grad":
        p_values = tuple(p for p in grid.p_values if p > 1)
    else:
        p_values = grid.p_values
    best = None
    best_key = None
    cells, failures = [], {}
    for wf in grid.width_factors:
        bank = bank_factory(wf)
        if bank.cross is None:
            raise ShapeError("bank factory must attach validation cross kernels")
        n = bank.n
        for p in p_values:
            for dm in grid.delta_multipliers:
                cell = (p, dm, wf)
                try:
                    model = fit_method(bank, method, p, dm * n, config_kw)
                    auc = roc_auc(model.score_bank(bank.cross), val_labels)
                except MKFNError as err:
                    failures[cell] = str(err)
                    continue
                cells.append((cell, auc))
                key = (-auc, -math.inf if p is None else p, dm, wf)
                if best_key is None or key < best_key:
                    best_key = key
                    best = GridResult(p, dm, wf, dm * n, auc, model, bank)
    if best is None:
        raise GridSearchError(f"all {len(failures)} grid cells failed", failures)
    best.cells = cells
    best.failures = failures
    return best


@dataclass(frozen=True)
class Protocol:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    trials: int = 10
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) <= 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidDataError(f"split fractions must be positive and sum to 1, got {fr}")
        if self.trials < 1:
            raise InvalidDataError("need at least one trial")


@dataclass
class TrialSplit:
    """Per-view sample matrices for one trial."""

    train: list
    val: list
    val_labels: np.ndarray
    test: list
    test_labels: np.ndarray
    test_species: Optional[np.ndarray] = None


@dataclass
class TrialReport:
    aucs: list
    selected: list
    method: str
    errors: list = field(default_factory=list)
    J: int = 0

    @property
    def trials(self) -> int:
        return len(self.aucs)

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs)) if self.aucs else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.aucs)) if self.aucs else math.nan

    def rows(self):
        for i, (auc, sel) in enumerate(zip(self.aucs, self.selected)):
            yield {"trial": i, **sel, "auc": auc}


def random_split(dataset, protocol: Protocol, rng) -> TrialSplit:
    """Targets split train/val/test by the protocol fractions; anomalies
    split between validation and test only."""
    X_t, X_a = dataset.targets, dataset.anomalies
    n_t, n_a = X_t.shape[0], X_a.shape[0]
    n_train = int(round(protocol.train_frac * n_t))
    n_val = int(round(protocol.val_frac * n_t))
    if n_train < 2 or n_val < 1 or n_t - n_train - n_val < 1:
        raise InsufficientSamplesError(f"target class: {n_t} samples are too few to split")
    if n_a < 2:
        raise InsufficientSamplesError(f"anomaly class: {n_a} samples are too few to split")
    perm_t = rng.permutation(n_t)
    perm_a = rng.permutation(n_a)
    share = protocol.val_frac / (protocol.val_frac + protocol.test_frac)
    n_val_a = min(max(int(round(share * n_a)), 1), n_a - 1)
    tr = perm_t[:n_train]
    va_t, te_t = perm_t[n_train:n_train + n_val], perm_t[n_train + n_val:]
    va_a, te_a = perm_a[:n_val_a], perm_a[n_val_a:]
    views = dataset.view_columns()

    def cut(rows_t, rows_a):
        return [np.vstack([X_t[rows_t][:, cols], X_a[rows_a][:, cols]]) for cols in views]

    train = [X_t[tr][:, cols] for cols in views]
    val_labels = np.r_[np.ones(len(va_t), bool), np.zeros(len(va_a), bool)]
    test_labels = np.r_[np.ones(len(te_t), bool), np.zeros(len(te_a), bool)]
    species = None
    if dataset.species is not None:
        species = np.r_[np.full(len(te_t), None, dtype=object), dataset.species[te_a]]
    return TrialSplit(train, cut(va_t, va_a), val_labels, cut(te_t, te_a), test_labels, species)


def evaluate_split(split: TrialSplit, grid: HyperGrid, method: str, names=()):
    """Grid-select on the validation part, return ``(test AUC, selection, result)``."""
    from .kernelspace import build_bank, cross_gram_rbf

    def factory(wf):
        return build_bank(split.train, factor=wf, test=split.val, names=names)

    result = grid_select(factory, split.val_labels, grid, method)
    sigmas = [kp.sigma for kp in result.bank.params]
    cross = np.stack([cross_gram_rbf(Xv, Zv, s) for Xv, Zv, s in zip(split.train, split.test, sigmas)])
    scores = result.model.score_bank(cross)
    auc = roc_auc(scores, split.test_labels)
    sel = {"p": result.p, "delta_mult": result.delta_multiplier, "width_factor": result.width_factor}
    return auc, sel, result, scores


def run_trials(
    dataset,
    protocol: Protocol = Protocol(),
    grid: HyperGrid = HyperGrid(),
    method: str = "lp_mkl",
    splitter: Optional[Callable] = None,
    n_jobs: int = 1,
) -> TrialReport:
    """Repeat split -> grid search -> test AUC ``protocol.trials`` times.

    Trial ``i`` draws its split from ``numpy.random.default_rng([seed, i])``,
    so results do not depend on execution order. ``splitter(dataset,
    protocol, rng)`` replaces the default random split (e.g. for
    subject-wise validation sets).
    """
    splitter = splitter or random_split

    def one(i):
        rng = np.random.default_rng([protocol.seed, i])
        split = splitter(dataset, protocol, rng)
        auc, sel, _, _ = evaluate_split(split, grid, method)
        return auc, sel

    if n_jobs == 1:
        outcomes = []
        for i in range(protocol.trials):
            try:
                outcomes.append(one(i))
            except InsufficientSamplesError:
                raise
            except MKFNError as err:
                outcomes.append(err)
    else:
        from joblib import Parallel, delayed

        def safe(i):
            try:
                return one(i)
            except InsufficientSamplesError:
                raise
            except MKFNError as err:
                return err

        outcomes = Parallel(n_jobs=n_jobs)(delayed(safe)(i) for i in range(protocol.trials))
    aucs, selected, errors = [], [], []
    for i, out in enumerate(outcomes):
        if isinstance(out, Exception):
            errors.append((i, str(out)))
        else:
            aucs.append(out[0])
            selected.append(out[1])
    return TrialReport(aucs, selected, method, errors, J=len(dataset.view_columns()))


def format_report(report: TrialReport, fmt: str = "text") -> str:
    """Results file: one row per trial, then a summary row."""
    import json

    lines = []
    if fmt == "json-lines":
        for row in report.rows():
            lines.append(json.dumps(row, sort_keys=True))
        lines.append(json.dumps({"summary": True, "trials": report.trials, "mean_auc": report.mean,
                                 "std_auc": report.std, "method": report.method,
                                 "failed": len(report.errors)}, sort_keys=True))
    else:
        lines.append("# trial p delta_mult width_factor auc")
        for row in report.rows():
            p = "-" if row["p"] is None else repr(row["p"])
            lines.append(f"{row['trial']} {p} {row['delta_mult']!r} {row['width_factor']!r} "
                         f"{row['auc']:.17g}")
        lines.append(f"# summary method={report.method} trials={report.trials} "
                     f"mean={report.mean:.17g} std={report.std:.17g} failed={len(report.errors)}")
    return "\n".join(lines) + "\n"


def format_roc(fpr: Sequence[float], tpr: Sequence[float]) -> str:
    return "".join(f"{a:.17g} {b:.17g}\n" for a, b in zip(fpr, tpr))
