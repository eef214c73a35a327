"""Gaussian-process surrogate over sequences.

Items are one-hot encoded per site, so the squared Euclidean distance between
two encodings is twice their Hamming distance. Conditioning is exact, via a
Cholesky factor of the training covariance.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import ndtr

from .constraint_space import GroundSet, Item

logger = logging.getLogger(__name__)

KERNELS = ("matern12", "matern32", "matern52", "rbf")
_CHUNK = 8192
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


class GPNumericalError(ArithmeticError):
    """Covariance could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class GpHyperparameters:
    kernel: str = "matern52"
    signal_variance: float = 1.0
    lengthscale: float = 1.0
    noise_variance: float = 1e-4
    # None: use the mean of the training targets at fit time
    prior_mean: float | None = None

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")
        if not self.signal_variance > 0 or not self.lengthscale > 0:
            raise ValueError("signal variance and lengthscale must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "GpHyperparameters":
        return cls(**data)


def kernel_from_sqdist(sqdist: np.ndarray, hyper: GpHyperparameters) -> np.ndarray:
    r = np.sqrt(np.maximum(sqdist, 0.0)) / hyper.lengthscale
    s2 = hyper.signal_variance
    if hyper.kernel == "matern52":
        a = math.sqrt(5.0) * r
        return s2 * (1.0 + a + a * a / 3.0) * np.exp(-a)
    if hyper.kernel == "matern32":
        a = math.sqrt(3.0) * r
        return s2 * (1.0 + a) * np.exp(-a)
    if hyper.kernel == "matern12":
        return s2 * np.exp(-r)
    return s2 * np.exp(-0.5 * r * r)


def encode_item(item: Sequence[str], ground: GroundSet) -> np.ndarray:
    """Concatenated per-site one-hot vector of length ``|C|``."""
    codes = ground.symbol_codes(item)
    x = np.zeros(ground.total_constraints)
    for site, c in enumerate(codes):
        x[ground.offsets[site] + c] = 1.0
    return x


def encode_indices(indices, ground: GroundSet) -> np.ndarray:
    codes = ground.codes_from_indices(indices)
    X = np.zeros((codes.shape[0], ground.total_constraints))
    rows = np.arange(codes.shape[0])
    for site in range(ground.n_sites):
        X[rows, ground.offsets[site] + codes[:, site]] = 1.0
    return X


def _sqdist(XA: np.ndarray, XB: np.ndarray, n_sites: int) -> np.ndarray:
    # one-hot rows each hold exactly n_sites ones
    return 2.0 * (n_sites - XA @ XB.T)


def _stable_cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    scale = max(np.trace(K) / n, np.finfo(float).tiny)
    rel = 0.0
    while rel <= _JITTER_MAX * (1 + 1e-9):
        jitter = rel * scale
        try:
            return cholesky(K + jitter * np.eye(n), lower=True, check_finite=False), jitter
        except LinAlgError:
            rel = rel * 10.0 if rel else _JITTER_START
    raise GPNumericalError(
        f"covariance of {n} points is not positive definite after jitter up to "
        f"{_JITTER_MAX:g} x mean diagonal ({scale:.3g}); check for non-finite inputs "
        "or use a larger noise variance"
    )


@dataclass(frozen=True)
class GpPosterior:
    ground: GroundSet
    hyper: GpHyperparameters
    train_indices: np.ndarray
    train_targets: np.ndarray
    prior_mean: float
    chol: np.ndarray | None
    alpha: np.ndarray | None
    jitter: float = 0.0

    @property
    def n_train(self) -> int:
        return len(self.train_indices)

    def _train_features(self) -> np.ndarray:
        return encode_indices(self.train_indices, self.ground)

    def mean_var(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and (clamped) marginal variance at dense item indices."""
        indices = np.asarray(indices, dtype=np.int64)
        mean = np.full(len(indices), self.prior_mean)
        var = np.full(len(indices), self.hyper.signal_variance)
        if self.n_train == 0 or len(indices) == 0:
            return mean, var
        XA = self._train_features()
        L = self.ground.n_sites
        for start in range(0, len(indices), _CHUNK):
            sl = slice(start, start + _CHUNK)
            Xq = encode_indices(indices[sl], self.ground)
            Kqa = kernel_from_sqdist(_sqdist(Xq, XA, L), self.hyper)
            mean[sl] += Kqa @ self.alpha
            V = solve_triangular(self.chol, Kqa.T, lower=True, check_finite=False)
            var[sl] -= np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)

    def covariance(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and full covariance matrix over ``indices``."""
        indices = np.asarray(indices, dtype=np.int64)
        Xq = encode_indices(indices, self.ground)
        L = self.ground.n_sites
        cov = kernel_from_sqdist(_sqdist(Xq, Xq, L), self.hyper)
        mean = np.full(len(indices), self.prior_mean)
        if self.n_train:
            XA = self._train_features()
            Kqa = kernel_from_sqdist(_sqdist(Xq, XA, L), self.hyper)
            mean += Kqa @ self.alpha
            V = solve_triangular(self.chol, Kqa.T, lower=True, check_finite=False)
            cov = cov - V.T @ V
        cov = 0.5 * (cov + cov.T)
        return mean, cov

    def predict_items(self, items: Sequence[Item]) -> tuple[np.ndarray, np.ndarray]:
        return self.mean_var([self.ground.item_index(x) for x in items])


def _prepare(observations, ground: GroundSet) -> tuple[np.ndarray, np.ndarray]:
    if not observations:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    items, values = zip(*observations)
    idx = np.array(
        [x if isinstance(x, (int, np.integer)) else ground.item_index(x) for x in items],
        dtype=np.int64,
    )
    y = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("observed values must be finite")
    return idx, y


def fit_posterior(observations, hyper: GpHyperparameters, ground: GroundSet) -> GpPosterior:
    """Condition the GP on ``(item, value)`` pairs.

    Items may be symbol tuples or dense indices. Duplicates are kept as
    separate noisy observations.
    """
    idx, y = _prepare(observations, ground)
    return _fit_arrays(idx, y, hyper, ground)


def _fit_arrays(idx, y, hyper, ground) -> GpPosterior:
    prior_mean = hyper.prior_mean
    if prior_mean is None:
        prior_mean = float(np.mean(y)) if len(y) else 0.0
    if len(idx) == 0:
        return GpPosterior(ground, hyper, idx, y, prior_mean, None, None)
    X = encode_indices(idx, ground)
    K = kernel_from_sqdist(_sqdist(X, X, ground.n_sites), hyper)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    chol, jitter = _stable_cholesky(K)
    alpha = cho_solve((chol, True), y - prior_mean, check_finite=False)
    return GpPosterior(ground, hyper, idx, y, prior_mean, chol, alpha, jitter)


def log_marginal_likelihood(posterior: GpPosterior) -> float:
    n = posterior.n_train
    if n == 0:
        return 0.0
    resid = posterior.train_targets - posterior.prior_mean
    return float(
        -0.5 * resid @ posterior.alpha
        - np.log(np.diag(posterior.chol)).sum()
        - 0.5 * n * math.log(2 * math.pi)
    )


def default_grid(values, kernel: str = "matern52", n_points: int = 5) -> list[GpHyperparameters]:
    """Log-spaced (lengthscale, signal variance, noise variance) grid scaled to the data."""
    var = float(np.var(values)) if len(values) > 1 else 1.0
    var = var if var > 0 else 1.0
    lengthscales = np.geomspace(0.5, 8.0, n_points)
    signals = var * np.geomspace(0.1, 10.0, n_points)
    noises = var * np.geomspace(1e-4, 1e-1, n_points)
    return [
        GpHyperparameters(kernel, float(s), float(ell), float(nz))
        for ell, s, nz in itertools.product(lengthscales, signals, noises)
    ]


def fit_hyperparameters(observations, grid: Sequence[GpHyperparameters], ground: GroundSet) -> GpHyperparameters:
    """Grid point with the highest log marginal likelihood (first wins ties)."""
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    idx, y = _prepare(observations, ground)
    if len(y) < 2:
        raise ValueError("need at least two observations to select hyperparameters")
    best, best_lml = None, -np.inf
    for hyper in grid:
        try:
            lml = log_marginal_likelihood(_fit_arrays(idx, y, hyper, ground))
        except GPNumericalError:
            continue
        if lml > best_lml:
            best, best_lml = hyper, lml
    if best is None:
        raise GPNumericalError("every hyperparameter grid point was numerically infeasible")
    logger.debug("selected %s (log marginal likelihood %.4f)", best, best_lml)
    return best


@dataclass(frozen=True)
class RewardMatrix:
    """Improvement probabilities for every item of the full library."""

    rho: np.ndarray
    tau: float

    def __post_init__(self):
        if self.rho.ndim != 1 or np.any((self.rho < 0) | (self.rho > 1)):
            raise ValueError("rewards must be a flat array of probabilities")


def improvement_probability(mean, sd, tau: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    out = (mean > tau).astype(float)
    pos = sd > 0
    out[pos] = ndtr((mean[pos] - tau) / sd[pos])
    return out


def compute_rewards(posterior: GpPosterior, tau: float, indices=None) -> RewardMatrix:
    """rho(x) = P(u(x) > tau) under each item's posterior marginal, for all of Q(C)."""
    if not math.isfinite(tau):
        raise ValueError("threshold must be finite")
    if indices is None:
        indices = np.arange(posterior.ground.library_size)
    mean, var = posterior.mean_var(indices)
    return RewardMatrix(improvement_probability(mean, np.sqrt(var), tau), float(tau))
