"""Mahalanobis-distance classification with plug-in covariance estimators.

Each group's covariance is estimated from its scatter matrix
``A = sum (y - ybar)(y - ybar)'`` with an orthogonally equivariant estimator,
and a point goes to the group with the smallest
``(x - ybar)' Sigma_hat^{-1} (x - ybar)``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NotPositiveDefiniteError, ParseError, SingularScatterError
from .estimators import EstimatorKind, apply_estimator, coefficients
from .moments import moment_table

DOF_RULES = ("n-1", "n")


@dataclass(frozen=True)
class LabeledDataset:
    """Samples grouped by label, in order of first appearance; row order kept within groups."""

    labels: tuple[str, ...]
    groups: tuple[np.ndarray, ...]
    feature_names: tuple[str, ...] = ()
    source: str = ""

    def __post_init__(self):
        if not self.groups or len(self.labels) != len(self.groups):
            raise ValueError("need one nonempty group per label")
        p = self.groups[0].shape[1]
        for g in self.groups:
            if g.ndim != 2 or g.shape[0] == 0:
                raise ValueError("every group needs at least one sample")
            if g.shape[1] != p:
                raise DimensionMismatchError("groups differ in feature dimension")

    @property
    def p(self) -> int:
        return self.groups[0].shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(g.shape[0] for g in self.groups)

    @classmethod
    def from_arrays(cls, x, y, feature_names=(), source="") -> "LabeledDataset":
        x = np.asarray(x, dtype=float)
        y = [str(v) for v in y]
        if x.ndim != 2 or x.shape[0] != len(y):
            raise DimensionMismatchError("x must be (rows, features) with one label per row")
        labels = list(dict.fromkeys(y))
        ya = np.array(y)
        return cls(tuple(labels), tuple(x[ya == lab] for lab in labels), tuple(feature_names), source)


def load_csv(path, label_column: str = "species", feature_columns=None) -> LabeledDataset:
    """Read a comma-separated file with a header row.

    Parameters
    ----------
    path : path-like
    label_column : str
        Name of the column holding group labels.
    feature_columns : sequence of str, optional
        Feature column names; defaults to every column except the label.

    Raises
    ------
    ParseError
        On an empty file, a missing column, a file without data rows, or a
        field that does not parse as a real number (row and column reported).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        return _parse(csv.reader(fh), label_column, feature_columns, str(path))


def _parse(reader, label_column, feature_columns, source) -> LabeledDataset:
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(f"{source}: empty file") from None
    if label_column not in header:
        raise ParseError(f"{source}: no column named {label_column!r}")
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise ParseError(f"{source}: missing feature columns {missing}")
    li = header.index(label_column)
    fi = [header.index(c) for c in feature_columns]
    rows, labels = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise ParseError(f"{source}: row {lineno} has {len(rec)} fields, expected {len(header)}")
        vals = []
        for j in fi:
            try:
                vals.append(float(rec[j]))
            except ValueError:
                raise ParseError(f"{source}: row {lineno}, column {header[j]!r}: cannot parse {rec[j]!r}") from None
        rows.append(vals)
        labels.append(rec[li].strip())
    if not rows:
        raise ParseError(f"{source}: no data rows")
    return LabeledDataset.from_arrays(np.array(rows), labels, feature_columns, source)


def load_iris() -> LabeledDataset:
    """The 150-sample iris data shipped with the package (canonical row order)."""
    ref = resources.files("blockcov") / "data" / "iris.csv"
    with resources.as_file(ref) as path:
        ds = load_csv(path)
    return LabeledDataset(ds.labels, ds.groups, ds.feature_names, "iris (bundled)")


# -- models ---------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorConfig:
    """Which estimator to plug in and how its coefficients are built.

    ``dof`` is ``"n-1"`` (coefficients at ``n = N - 1``, so U gives ``A/(N-1)``)
    or ``"n"`` (``n = N``).  ``m`` is the first block size for MA estimators.
    """

    kind: EstimatorKind = EstimatorKind.U
    m: int = 1
    dof: str = "n-1"
    moment_reps: int = 1_000_000

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.dof not in DOF_RULES:
            raise ValueError(f"dof must be one of {DOF_RULES}")

    def n_for(self, n_learn: int) -> int:
        return n_learn - 1 if self.dof == "n-1" else n_learn


_COEF_CACHE: dict = {}


def coefficients_for(config: EstimatorConfig, p: int, n: int) -> np.ndarray:
    key = (config.kind, p, config.m, n, config.moment_reps)
    if key not in _COEF_CACHE:
        moments = None
        if config.kind in (EstimatorKind.MA1, EstimatorKind.MA2):
            moments = moment_table(p, config.m, n, reps=config.moment_reps)
        _COEF_CACHE[key] = coefficients(config.kind, p, config.m, n, moments).c
    return _COEF_CACHE[key]


@dataclass(frozen=True)
class GroupModel:
    label: str
    mean: np.ndarray
    sigma_hat: np.ndarray
    kind: EstimatorKind
    n_learn: int
    _chol: tuple = field(repr=False, compare=False, default=None)

    def distance(self, x) -> np.ndarray:
        """Squared Mahalanobis distance of one point or a stack of points."""
        d = np.atleast_2d(np.asarray(x, dtype=float)) - self.mean
        chol = self._chol or scipy.linalg.cho_factor(self.sigma_hat, lower=True)
        sol = scipy.linalg.cho_solve(chol, d.T)
        out = np.einsum("ij,ji->i", d, sol)
        return out if np.ndim(x) > 1 else out[0]


def fit_group(samples, config: EstimatorConfig = EstimatorConfig(), label: str = "") -> GroupModel:
    """Mean and plug-in covariance of one learning set.

    Raises
    ------
    SingularScatterError
        If the scatter matrix is not positive definite (for instance with
        fewer than ``p + 1`` distinct samples).
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need at least two samples")
    n_learn, p = y.shape
    mean = y.mean(axis=0)
    dev = y - mean
    scatter = dev.T @ dev
    n = config.n_for(n_learn)
    if n < p:
        raise SingularScatterError(f"{n_learn} samples give dof {n} below dimension {p}")
    c = coefficients_for(config, p, n)
    try:
        sigma_hat = apply_estimator(scatter, c)
    except NotPositiveDefiniteError as exc:
        raise SingularScatterError("scatter matrix is singular") from exc
    chol = scipy.linalg.cho_factor(sigma_hat, lower=True)
    return GroupModel(label, mean, sigma_hat, config.kind, n_learn, chol)


def classify_index(x, models) -> np.ndarray | int:
    """Index of the nearest model; ties go to the lowest index."""
    dist = np.stack([np.atleast_1d(mod.distance(x)) for mod in models])
    idx = np.argmin(dist, axis=0)  # argmin returns the first minimum
    return idx if np.ndim(x) > 1 else int(idx[0])


def classify(x, models) -> str | list:
    idx = classify_index(x, models)
    if np.ndim(idx) == 0:
        return models[idx].label
    return [models[i].label for i in idx]


# -- cross-validation -----------------------------------------------------------

@dataclass(frozen=True)
class LeaveOneOut:
    name = "loo"


@dataclass(frozen=True)
class KSampleSet:
    """Consecutive blocks of ``k`` samples per group form the learning set; all other points are tested."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")

    @property
    def name(self) -> str:
        return f"kset:{self.k}"


def parse_scheme(text: str):
    text = text.strip().lower()
    if text == "loo":
        return LeaveOneOut()
    if text.startswith("kset:"):
        return KSampleSet(int(text.split(":", 1)[1]))
    raise ValueError(f"unknown scheme {text!r}; use loo or kset:K")


@dataclass
class CVReport:
    scheme: str
    kind: EstimatorKind
    fold_ccp: list
    fold_trials: list
    correct: int
    trials: int
    misclassified: list
    config: EstimatorConfig | None = None
    skipped_folds: list = field(default_factory=list)

    @property
    def ccp(self) -> float:
        """Overall correct classification percentage."""
        return 100.0 * self.correct / self.trials

    @property
    def average(self) -> float:
        """Mean of the per-fold percentages."""
        return float(np.mean(self.fold_ccp))


def _loo(ds: LabeledDataset, config):
    full = [fit_group(g, config, lab) for lab, g in zip(ds.labels, ds.groups)]
    correct, miss = 0, []
    for gi, g in enumerate(ds.groups):
        for j in range(g.shape[0]):
            models = list(full)
            models[gi] = fit_group(np.delete(g, j, axis=0), config, ds.labels[gi])
            if classify_index(g[j], models) == gi:
                correct += 1
            else:
                miss.append((ds.labels[gi], j + 1))
    trials = sum(ds.sizes)
    return [100.0 * correct / trials], [trials], correct, trials, miss


def _kset_fold(ds, config, k, f):
    models = [fit_group(g[f * k:(f + 1) * k], config, lab) for lab, g in zip(ds.labels, ds.groups)]
    correct, trials, miss = 0, 0, []
    for gi, g in enumerate(ds.groups):
        test = np.ones(g.shape[0], dtype=bool)
        test[f * k:(f + 1) * k] = False
        pred = classify_index(g[test], models)
        ok = pred == gi
        correct += int(ok.sum())
        trials += int(test.sum())
        rows = np.flatnonzero(test)[~ok]
        miss.extend((ds.labels[gi], int(r) + 1, f + 1) for r in rows)
    return correct, trials, miss


def cross_validate(ds: LabeledDataset, scheme, config: EstimatorConfig = EstimatorConfig(), *,
                   skip_singular: bool = False, threads: int | None = None) -> CVReport:
    """Correct classification percentages under leave-one-out or k-sample-set folds.

    Misclassified samples are reported as ``(label, 1-based index within group)``,
    with the fold number appended for k-sample-set runs.  A k-sample-set fold
    whose learning set has a singular scatter matrix raises
    :class:`SingularScatterError` unless ``skip_singular`` is set, in which
    case the fold is left out and listed in ``skipped_folds`` (1-based).
    """
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    if isinstance(scheme, LeaveOneOut):
        fold_ccp, fold_trials, correct, trials, miss = _loo(ds, config)
        return CVReport("loo", config.kind, fold_ccp, fold_trials, correct, trials, miss, config)
    k = scheme.k
    sizes = set(ds.sizes)
    if len(sizes) != 1 or ds.sizes[0] % k:
        raise ValueError(f"k-sample-set needs equal group sizes divisible by {k}, got {ds.sizes}")
    folds = ds.sizes[0] // k
    # build coefficients once before any worker runs
    coefficients_for(config, ds.p, config.n_for(k))

    def run(f):
        try:
            return _kset_fold(ds, config, k, f)
        except SingularScatterError:
            if not skip_singular:
                raise
            return None

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(folds)))
    else:
        results = [run(f) for f in range(folds)]
    skipped = [f + 1 for f, r in enumerate(results) if r is None]
    parts = [r for r in results if r is not None]
    if not parts:
        raise SingularScatterError("every fold has a singular learning set")
    fold_ccp = [100.0 * c / t for c, t, _ in parts]
    return CVReport(scheme.name, config.kind, fold_ccp, [t for _, t, _ in parts],
                    sum(c for c, _, _ in parts), sum(t for _, t, _ in parts),
                    [m for _, _, ms in parts for m in ms], config, skipped)
