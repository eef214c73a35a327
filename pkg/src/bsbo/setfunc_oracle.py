"""Exhaustive set-function oracles for small ground sets (|C| <= ~16).

Values are held in dense arrays indexed by constraint bit mask, so every
check here is a vectorized sweep over all subsets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraint_space import ConstraintSet, GroundSet

MAX_BRUTE_FORCE = 16


def _check_size(n_bits: int):
    if n_bits > MAX_BRUTE_FORCE:
        raise ValueError(f"refusing exhaustive sweep over 2^{n_bits} subsets")


def all_masks(n_bits: int) -> np.ndarray:
    _check_size(n_bits)
    return np.arange(1 << n_bits, dtype=np.int64)


def tabulate(f, ground: GroundSet) -> np.ndarray:
    """Evaluate ``f(ConstraintSet)`` on every subset of the ground set."""
    masks = all_masks(ground.total_constraints)
    return np.array([f(ConstraintSet(ground, int(m))) for m in masks], dtype=float)


def _site_subset_indicators(size: int) -> np.ndarray:
    masks = np.arange(1 << size)
    return ((masks[:, None] >> np.arange(size)[None, :]) & 1).astype(float)


def library_tables(ground: GroundSet, rho) -> tuple[np.ndarray, np.ndarray]:
    """|Q(S)| and sum of rewards over Q(S) for every subset mask S."""
    _check_size(ground.total_constraints)
    tensor = np.asarray(rho, dtype=float).reshape(ground.sizes)
    sums = tensor
    counts = np.ones(())
    # contract the last site first; the final axis order is (site L-1, ..., site 0),
    # which flattens to the global mask because site 0 owns the low bits
    for site in reversed(range(ground.n_sites)):
        ind = _site_subset_indicators(ground.sizes[site])
        sums = np.tensordot(sums, ind, axes=([site], [1]))
        counts = np.multiply.outer(counts, ind.sum(axis=1))
    n_sub = 1 << ground.total_constraints
    return counts.reshape(n_sub), sums.reshape(n_sub)


@dataclass(frozen=True)
class ViolationReport:
    checked: int
    violations: int
    worst: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def submodularity_violations(values, n_bits: int, tol: float = 1e-9) -> ViolationReport:
    """Count failures of Delta(j|S) >= Delta(j|S+k) over all S, j, k (local test)."""
    values = np.asarray(values, dtype=float)
    masks = all_masks(n_bits)
    checked = violations = 0
    worst = 0.0
    for j in range(n_bits):
        bj = 1 << j
        for k in range(n_bits):
            if k == j:
                continue
            bk = 1 << k
            base = masks[(masks & (bj | bk)) == 0]
            d_small = values[base | bj] - values[base]
            d_large = values[base | bj | bk] - values[base | bk]
            excess = d_large - d_small
            checked += base.size
            bad = excess > tol
            violations += int(bad.sum())
            if bad.any():
                worst = max(worst, float(excess.max()))
    return ViolationReport(checked, violations, worst)


def supermodularity_violations(values, n_bits: int, tol: float = 1e-9) -> ViolationReport:
    return submodularity_violations(-np.asarray(values, dtype=float), n_bits, tol)


def monotonicity_violations(values, n_bits: int, tol: float = 1e-9) -> ViolationReport:
    values = np.asarray(values, dtype=float)
    masks = all_masks(n_bits)
    checked = violations = 0
    worst = 0.0
    for j in range(n_bits):
        base = masks[(masks >> j & 1) == 0]
        drop = values[base] - values[base | (1 << j)]
        checked += base.size
        bad = drop > tol
        violations += int(bad.sum())
        if bad.any():
            worst = max(worst, float(drop.max()))
    return ViolationReport(checked, violations, worst)


def exact_beta(values, n_bits: int) -> float:
    """min over j and chains S <= S' <= C \\ {j} of Delta(j|S) - Delta(j|S').

    For each j the inner max over supersets is a superset-max transform, so
    the sweep is O(2^N N^2) rather than O(3^N).
    """
    values = np.asarray(values, dtype=float)
    masks = all_masks(n_bits)
    best = 0.0
    for j in range(n_bits):
        bj = 1 << j
        base = masks[(masks & bj) == 0]
        delta = np.full(masks.size, -np.inf)
        delta[base] = values[base | bj] - values[base]
        sup = delta.copy()
        for i in range(n_bits):
            if i == j:
                continue
            low = base[(base >> i & 1) == 0]
            sup[low] = np.maximum(sup[low], sup[low | (1 << i)])
        best = min(best, float(np.min(delta[base] - sup[base])))
    return best
