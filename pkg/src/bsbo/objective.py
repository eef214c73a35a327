"""Batch acquisition functions over constraint sets.

The surrogate treats item utilities as independent: an item contributes its
improvement probability times the chance it is drawn at least once in a batch
of ``n`` uniform draws from the library. The Monte Carlo estimator samples
utilities jointly from the GP posterior instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .constraint_space import ConstraintSet, GroundSet, library_indices, library_size
from .gp_model import GpPosterior, RewardMatrix

MEMO_SIZE = 100_000
MC_SIZE_CAP = 4096
MC_BLOCK = 100


def coverage(q, n: int):
    """P(a given item of a size-q library appears in n uniform draws); 0 for q = 0."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    one = q == 1
    big = q > 1
    out[one] = 1.0
    out[big] = -np.expm1(n * np.log1p(-1.0 / q[big]))
    return out if out.ndim else float(out)


class ObjectiveContext:
    """Rewards over Q(C) reshaped per site, plus batch size.

    ``reward_sum`` is memoized by constraint mask; ``toggle_stats`` evaluates
    all single-constraint toggles of a set from per-site slice sums.
    """

    def __init__(self, ground: GroundSet, rewards, n: int):
        if n < 1:
            raise ValueError("batch size must be at least 1")
        rho = rewards.rho if isinstance(rewards, RewardMatrix) else np.asarray(rewards, dtype=float)
        if rho.shape != (ground.library_size,):
            raise ValueError(
                f"rewards cover {rho.size} items, library Q(C) has {ground.library_size}"
            )
        self.ground = ground
        self.n = int(n)
        self.rho = rho
        self.tau = rewards.tau if isinstance(rewards, RewardMatrix) else None
        self.tensor = rho.reshape(ground.sizes)
        self._site = ground.site_array()
        self._local = np.arange(ground.total_constraints) - np.repeat(ground.offsets, ground.sizes)
        self.reward_sum = lru_cache(maxsize=MEMO_SIZE)(self._reward_sum)

    def with_rewards(self, rho) -> "ObjectiveContext":
        return ObjectiveContext(self.ground, np.asarray(rho, dtype=float), self.n)

    def _vectors(self, S: ConstraintSet) -> list[np.ndarray]:
        return [a.astype(float) for a in S.site_arrays()]

    def _reward_sum(self, mask: int) -> float:
        S = ConstraintSet(self.ground, mask)
        if library_size(S) == 0:
            return 0.0
        T = self.tensor
        for ax, v in reversed(list(enumerate(self._vectors(S)))):
            T = np.tensordot(T, v, axes=([ax], [0]))
        return float(T)

    def site_slices(self, S: ConstraintSet) -> list[np.ndarray]:
        """Entry ``[l][a]``: reward mass of Q(S) with site ``l`` pinned to symbol ``a``."""
        vecs = self._vectors(S)
        out = []
        for keep in range(self.ground.n_sites):
            T = self.tensor
            for ax in reversed(range(self.ground.n_sites)):
                if ax != keep:
                    T = np.tensordot(T, vecs[ax], axes=([ax], [0]))
            out.append(np.asarray(T, dtype=float))
        return out

    def toggle_stats(self, S: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
        """Library sizes and reward sums of ``S ^ {j}`` for every constraint j."""
        counts = np.asarray(S.site_counts(), dtype=float)
        selected = S.as_array()
        slices = np.concatenate(self.site_slices(S))
        sign = np.where(selected, -1.0, 1.0)
        new_counts = counts[self._site] + sign
        others = np.array([np.prod(np.delete(counts, s)) for s in range(len(counts))])
        q = others[self._site] * new_counts
        sums = self.reward_sum(S.mask) + sign * slices
        sums = np.where(q > 0, sums, 0.0)
        return q, sums

    def value(self, S: ConstraintSet) -> float:
        return surrogate_objective(S, self)

    def toggle_values(self, S: ConstraintSet) -> np.ndarray:
        q, sums = self.toggle_stats(S)
        return sums * coverage(q, self.n)

    def best_item(self) -> int:
        return int(np.argmax(self.rho))


def surrogate_objective(S: ConstraintSet, ctx: ObjectiveContext) -> float:
    q = library_size(S)
    if q == 0:
        return 0.0
    return ctx.reward_sum(S.mask) * coverage(q, ctx.n)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    num_samples: int
    seed: int


class McSizeError(ValueError):
    pass


def _factor(cov: np.ndarray) -> np.ndarray:
    """A matrix ``A`` with ``A @ A.T ~= cov`` for a PSD (possibly singular) covariance."""
    m = cov.shape[0]
    scale = max(float(np.trace(cov)) / m, 0.0)
    if scale == 0.0:
        return np.zeros_like(cov)
    for rel in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            return cholesky(cov + rel * scale * np.eye(m), lower=True, check_finite=False)
        except LinAlgError:
            continue
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0.0, None))


def mc_from_moments(mean, factor, tau: float, n: int, num_samples: int, seed: int,
                    count_duplicates: bool = False) -> McEstimate:
    """Monte Carlo batch-improvement count for utilities ``mean + factor @ z``.

    ``factor`` may be None (deterministic utilities), a 1-D array of standard
    deviations (independent utilities) or a square covariance factor.
    Replicates are drawn in fixed blocks, each from ``SeedSequence([seed, block])``.
    """
    if num_samples < 1:
        raise ValueError("need at least one Monte Carlo sample")
    mean = np.asarray(mean, dtype=float)
    m = mean.size
    counts = np.empty(num_samples)
    for block, start in enumerate(range(0, num_samples, MC_BLOCK)):
        r = min(MC_BLOCK, num_samples - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
        z = rng.standard_normal((r, m))
        draws = rng.integers(0, m, size=(r, n))
        if factor is None:
            u = np.broadcast_to(mean, (r, m))
        elif np.ndim(factor) == 1:
            u = mean + z * factor
        else:
            u = mean + z @ factor.T
        improved = u > tau
        rows = np.repeat(np.arange(r), n)
        if count_duplicates:
            counts[start:start + r] = improved[rows, draws.ravel()].reshape(r, n).sum(axis=1)
        else:
            hit = np.zeros((r, m), dtype=bool)
            hit[rows, draws.ravel()] = True
            counts[start:start + r] = (hit & improved).sum(axis=1)
    sd = counts.std(ddof=1) if num_samples > 1 else 0.0
    # identical replicates say nothing about rare events; one event would shift the mean by 1/N
    stderr = sd / math.sqrt(num_samples) if sd > 0 else 1.0 / num_samples
    return McEstimate(float(counts.mean()), float(stderr), num_samples, seed)


def mc_objective(S: ConstraintSet, posterior: GpPosterior, tau: float, n: int,
                 num_samples: int = 1000, seed: int = 0, size_cap: int = MC_SIZE_CAP,
                 count_duplicates: bool = False, diagonal: bool = False) -> McEstimate:
    """Monte Carlo estimate of the exact batch objective under the joint posterior.

    ``diagonal=True`` drops posterior correlations between items.
    """
    q = library_size(S)
    if q == 0:
        raise McSizeError("constraint set has an empty library")
    if q > size_cap:
        raise McSizeError(
            f"library of {q} items exceeds the Monte Carlo cap of {size_cap}; "
            "shrink the constraint set or raise the cap"
        )
    idx = library_indices(S)
    if diagonal:
        mean, var = posterior.mean_var(idx)
        factor = np.sqrt(var)
    else:
        mean, cov = posterior.covariance(idx)
        factor = _factor(cov)
    return mc_from_moments(mean, factor, tau, n, num_samples, seed, count_duplicates)


def update_threshold(observed_values) -> float:
    values = list(observed_values)
    if not values:
        raise ValueError("threshold needs at least one observed value")
    return float(max(values))


def simple_regret(best_found: float, global_best: float) -> float:
    return float(global_best - best_found)
