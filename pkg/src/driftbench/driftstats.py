"""Temporal drift analytics for one (AP, RP) pair.

Two tools: the variance profile of the raw detections, and an Isolation
Forest over per-day aggregates.  The forest follows the scikit-learn
conventions (``c(2) = 1``, depth cap ``ceil(log2(psi))``, leaf-size
correction, percentile offset) so that its signed decision score is negative
for the days it flags.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import (
    DimensionMismatch,
    NoDetections,
    NonFiniteFeature,
    TooFewSamples,
)
from .fpdb import day_aggregates
from .rng import RngStream

EULER_GAMMA = 0.5772156649015329


def c_norm(n):
    """Average path length of an unsuccessful BST search over ``n`` points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


def _c_norm_array(sizes):
    sizes = np.asarray(sizes, dtype=np.float64)
    out = np.zeros_like(sizes)
    two = sizes == 2
    big = sizes > 2
    out[two] = 1.0
    s = sizes[big]
    out[big] = 2.0 * (np.log(s - 1.0) + EULER_GAMMA) - 2.0 * (s - 1.0) / s
    return out


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int = 100
    contamination: float = 0.10
    max_samples: object = "auto"
    max_features: float = 1.0
    random_state: int = 42

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0 < self.contamination < 0.5:
            raise ValueError("contamination must lie in (0, 0.5)")
        if not 0 < self.max_features <= 1:
            raise ValueError("max_features must lie in (0, 1]")
        if self.max_samples != "auto" and (not isinstance(self.max_samples, int) or self.max_samples < 1):
            raise ValueError("max_samples must be 'auto' or a positive count")

    def subsample_size(self, n):
        if self.max_samples == "auto":
            return min(256, n)
        return min(self.max_samples, n)


@dataclass(frozen=True)
class DailySample:
    day_index: int
    features: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in np.atleast_1d(self.features)))


@dataclass(frozen=True, eq=False)
class IsolationTree:
    """Array-backed binary tree.  ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    n_samples: int

    @property
    def n_nodes(self):
        return len(self.feature)

    def is_leaf(self, node):
        return self.feature[node] < 0

    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def apply(self, x):
        """Leaf index reached by each row of ``x``."""
        node = np.zeros(len(x), dtype=np.int64)
        rows = np.arange(len(x))
        active = self.feature[node] >= 0
        while np.any(active):
            r = rows[active]
            nd = node[active]
            go_left = x[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def path_lengths(self, x):
        """h(x): edges to the leaf plus the c(n) correction for the leaf size."""
        leaf = self.apply(x)
        return self.depth[leaf] + _c_norm_array(self.size[leaf])


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    hyper: ForestHyperparams
    n: int
    offset: float
    n_features: int


def _grow_tree(x, limit, features, rs):
    feat, thr, left, right, size, depth = [], [], [], [], [], []

    def grow(idx, d):
        node = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(len(idx))
        depth.append(d)
        if d >= limit or len(idx) <= 1:
            return node
        sub = x[idx]
        spread = [f for f in features if sub[:, f].max() > sub[:, f].min()]
        if not spread:
            return node
        f = spread[rs.integer(len(spread))]
        lo, hi = sub[:, f].min(), sub[:, f].max()
        cut = lo + rs.uniform() * (hi - lo)
        if cut >= hi:
            cut = lo
        goes_left = sub[:, f] <= cut
        feat[node] = f
        thr[node] = cut
        left[node] = grow(idx[goes_left], d + 1)
        right[node] = grow(idx[~goes_left], d + 1)
        return node

    grow(np.arange(len(x)), 0)
    return IsolationTree(
        np.array(feat, dtype=np.int64),
        np.array(thr, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(size, dtype=np.int64),
        np.array(depth, dtype=np.float64),
        len(x),
    )


def _as_features(samples):
    if isinstance(samples, np.ndarray):
        x = np.asarray(samples, dtype=np.float64)
    else:
        rows = [s.features if isinstance(s, DailySample) else np.atleast_1d(s) for s in samples]
        if not rows:
            return np.empty((0, 0))
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DimensionMismatch("samples have differing feature lengths")
        x = np.array(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def fit_forest(samples, hyper=None):
    """Fit an isolation forest.

    Samples are put in canonical (lexicographic) order first, so the per-tree
    subsample drawn by ``RngStream(random_state, i)`` does not depend on the
    order the caller supplied them in.
    """
    hyper = hyper or ForestHyperparams()
    x = _as_features(samples)
    if len(x) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteFeature("features must be finite")
    x = x[np.lexsort(x.T[::-1])]
    n, d = x.shape
    psi = hyper.subsample_size(n)
    limit = int(math.ceil(math.log2(max(psi, 2))))
    k = int(math.ceil(hyper.max_features * d))
    trees = []
    for i in range(hyper.n_estimators):
        rs = RngStream(hyper.random_state, i)
        idx = np.sort(rs.sample_without_replacement(n, psi))
        feats = list(range(d)) if k >= d else sorted(int(f) for f in rs.sample_without_replacement(d, k))
        trees.append(_grow_tree(x[idx], limit, feats, rs))
    model = ForestModel(tuple(trees), hyper, psi, 0.0, d)
    offset = numerics.percentile(-score_samples(model, x), 100.0 * hyper.contamination)
    return ForestModel(model.trees, hyper, psi, offset, d)


def expected_path_length(model, samples):
    x = _as_features(samples)
    if x.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {x.shape[1]}")
    total = np.zeros(len(x))
    for tree in model.trees:
        total += tree.path_lengths(x)
    return total / len(model.trees)


def score_from_path_length(mean_path, n):
    """s = 2^(-E[h(x)] / c(n))."""
    return np.power(2.0, -np.asarray(mean_path, dtype=np.float64) / c_norm(n))


def score_samples(model, samples):
    """Anomaly scores in [0, 1] for many samples; close to 1 means outlier."""
    return score_from_path_length(expected_path_length(model, samples), model.n)


def anomaly_score(model, sample):
    return float(score_samples(model, [sample])[0])


def decision_scores(model, samples):
    """Signed scores; a value <= 0 marks the sample as anomalous."""
    return -score_samples(model, samples) - model.offset


def daily_samples(db, ap, rp_id, mode="mean"):
    """One DailySample per database day; ``mode`` is ``mean`` or ``stats``."""
    aggs = day_aggregates(db, ap, rp_id)
    if mode == "mean":
        return [DailySample(a.day_index, (a.mean,)) for a in aggs]
    if mode == "stats":
        return [DailySample(a.day_index, a.stats()) for a in aggs]
    raise ValueError(f"unknown feature mode {mode!r}")


@dataclass(frozen=True)
class AnomalyRow:
    day_index: int
    mean_rssi: float
    anomaly_score: float
    signed_score: float
    flagged: bool


def anomaly_table(db, ap, rp_id, hyper=None, mode="mean"):
    samples = daily_samples(db, ap, rp_id, mode)
    model = fit_forest(samples, hyper)
    scores = score_samples(model, samples)
    signed = -scores - model.offset
    means = {a.day_index: a.mean for a in day_aggregates(db, ap, rp_id)}
    rows = [
        AnomalyRow(s.day_index, means[s.day_index], float(sc), float(sg), bool(sg <= 0.0))
        for s, sc, sg in zip(samples, scores, signed)
    ]
    return model, rows


@dataclass(frozen=True)
class VarianceProfile:
    daily_means: list = field(default_factory=list)
    variance: float = 0.0
    sample_variance: float = float("nan")
    n_samples: int = 0


def variance_profile(db, ap, rp_id):
    """Variance of all raw detections of ``ap`` at ``rp_id`` plus the daily means.

    Undetected scans are absent readings, so the -110 sentinel never enters
    the variance.
    """
    aggs = day_aggregates(db, ap, rp_id)
    raw = [v for a in aggs for v in a.samples]
    if not raw:
        raise NoDetections(f"{ap!r} never detected at rp {rp_id}")
    sample_var = numerics.variance(raw, ddof=1) if len(raw) > 1 else float("nan")
    return VarianceProfile(
        [(a.day_index, a.mean) for a in aggs],
        numerics.variance(raw),
        sample_var,
        len(raw),
    )
