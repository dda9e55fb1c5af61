"""Gaussian process coordinate regression with an Ornstein-Uhlenbeck kernel.

Inputs are raw RSSI vectors (including -110 sentinels) compared by Euclidean
distance; both coordinates share one kernel matrix and one Cholesky factor.
"""

import hashlib
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .. import numerics
from ..errors import DimensionMismatch, NotPositiveDefinite, ShapeMismatch

JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class GpConfig:
    kernel_variance: float = 1.0
    lengthscale: float = 100.0
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.kernel_variance > 0:
            raise ValueError("kernel_variance must be > 0")
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be > 0")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be >= 0")

    def to_dict(self):
        return asdict(self)


def ou_kernel(a, b, cfg=None):
    """sigma^2 * exp(-||a - b|| / lengthscale)."""
    cfg = cfg or GpConfig()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"kernel arguments differ in shape: {a.shape} vs {b.shape}")
    return float(cfg.kernel_variance * np.exp(-np.linalg.norm(a - b) / cfg.lengthscale))


def kernel_matrix(a_rows, b_rows, cfg):
    a = np.atleast_2d(np.asarray(a_rows, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b_rows, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"row lengths differ: {a.shape[1]} vs {b.shape[1]}")
    return cfg.kernel_variance * np.exp(-cdist(a, b) / cfg.lengthscale)


@dataclass(frozen=True, eq=False)
class GpModel:
    train_inputs: np.ndarray
    target_means: np.ndarray
    chol: np.ndarray
    alphas: np.ndarray
    cfg: GpConfig
    jitter: float = 0.0
    ap_universe: tuple = ()

    @property
    def n_features(self):
        return self.train_inputs.shape[1]

    def parameter_digest(self):
        h = hashlib.sha256()
        for arr in (self.train_inputs, self.target_means, self.chol, self.alphas):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def gp_fit(x_rows, coords, cfg=None, ap_universe=()):
    """Factor K + noise*I once and solve for both centered coordinates.

    If the factorization fails, one retry adds 1e-8 times the mean diagonal.
    """
    cfg = cfg or GpConfig()
    x = np.atleast_2d(np.asarray(x_rows, dtype=np.float64))
    y = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if len(x) < 1:
        raise ShapeMismatch("need at least one training row")
    if len(x) != len(y):
        raise ShapeMismatch(f"{len(x)} rows but {len(y)} coordinate pairs")
    k = kernel_matrix(x, x, cfg)
    k[np.diag_indices_from(k)] += cfg.noise_variance
    jitter = 0.0
    try:
        chol = numerics.cholesky(k)
    except NotPositiveDefinite:
        jitter = JITTER_SCALE * float(np.mean(np.diag(k)))
        k[np.diag_indices_from(k)] += jitter
        chol = numerics.cholesky(k)
    means = y.mean(axis=0)
    alphas = numerics.solve_spd(chol, y - means)
    return GpModel(x, means, chol, alphas, cfg, jitter, tuple(ap_universe))


def gp_predict_many(model, rows):
    """Posterior means, shape (m, 2), and variances, shape (m,)."""
    q = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if q.shape[1] != model.n_features:
        raise ShapeMismatch(f"model expects {model.n_features} features, got {q.shape[1]}")
    k_star = kernel_matrix(q, model.train_inputs, model.cfg)
    mean = model.target_means + k_star @ model.alphas
    v = numerics.solve_lower(model.chol, k_star.T)
    var = model.cfg.kernel_variance - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def gp_predict(model, row):
    """(x, y, predictive variance) for one query row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ShapeMismatch("gp_predict takes a single row; use gp_predict_many")
    mean, var = gp_predict_many(model, row[None, :])
    return float(mean[0, 0]), float(mean[0, 1]), float(var[0])


def localization_error(pred, truth):
    """Euclidean distance in meters."""
    return float(np.hypot(pred[0] - truth[0], pred[1] - truth[1]))


def localization_errors(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return np.hypot(pred[:, 0] - truth[:, 0], pred[:, 1] - truth[:, 1])
