"""Difference-of-submodular decompositions of the surrogate objective.

Both constructions return a pair ``(h, g)`` of submodular set functions with
``g - h == F_hat`` exactly:

* submodular augmentation: ``h1 = c * sqrt(|S|)``, ``g1 = F_hat + h1`` where
  ``c = |beta'| / alpha`` compensates the worst supermodular curvature of
  ``F_hat``;
* difference of convex: ``F_hat = sum_rho * (1 - r(|Q|))`` with
  ``r(x) = (1 - 1/x)^n`` split as ``r = (r + beta u) - beta u``, ``u = x^2/2``.

Every function here depends on S only through ``(|S|, |Q(S)|, sum rho over
Q(S)``), which lets toggles and exhaustive tables be evaluated in bulk.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .constraint_space import ConstraintSet, library_size
from .objective import MEMO_SIZE, ObjectiveContext, coverage
from .setfunc_oracle import exact_beta, library_tables

logger = logging.getLogger(__name__)

# ground sets up to this size get the exhaustive beta check
EXACT_BETA_LIMIT = 12


class SetFunction:
    """Set function of the form ``phi(|S|, |Q(S)|, sum_{x in Q(S)} rho(x))``.

    ``phi`` must accept numpy arrays.
    """

    def __init__(self, ctx: ObjectiveContext, phi: Callable, name: str = "f"):
        self.ctx = ctx
        self.phi = phi
        self.name = name
        self._cached = lru_cache(maxsize=MEMO_SIZE)(self._eval)

    def _eval(self, mask: int) -> float:
        S = ConstraintSet(self.ctx.ground, mask)
        q = library_size(S)
        s = self.ctx.reward_sum(mask) if q else 0.0
        return float(self.phi(np.array(len(S), dtype=float), np.array(q, dtype=float), np.array(s)))

    def __call__(self, S: ConstraintSet) -> float:
        return self._cached(S.mask)

    def marginal(self, j: int, S: ConstraintSet) -> float:
        """Delta(j | S) = f(S + j) - f(S)."""
        return self(S.add(j)) - self(S)

    def toggle_values(self, S: ConstraintSet) -> np.ndarray:
        """f(S ^ {j}) for every constraint j."""
        q, sums = self.ctx.toggle_stats(S)
        card = len(S) + np.where(S.as_array(), -1.0, 1.0)
        return np.asarray(self.phi(card, q, sums), dtype=float)

    def table(self) -> np.ndarray:
        """Values on every subset mask (small ground sets only)."""
        ground = self.ctx.ground
        q, sums = library_tables(ground, self.ctx.rho)
        masks = np.arange(q.size)
        card = np.array([bin(m).count("1") for m in masks], dtype=float)
        return np.asarray(self.phi(card, q, sums), dtype=float)


def surrogate_function(ctx: ObjectiveContext) -> SetFunction:
    n = ctx.n
    return SetFunction(ctx, lambda card, q, s: s * coverage(q, n), "F_hat")


@dataclass(frozen=True)
class ModularFunction:
    offset: float
    weights: np.ndarray

    def __call__(self, S: ConstraintSet) -> float:
        return float(self.offset + self.weights[S.as_array()].sum())


@dataclass
class DsDecomposition:
    h: SetFunction
    g: SetFunction
    alpha: float
    beta: float
    construction: str
    beta_prime: float | None = None
    beta_exact: float | None = None
    notes: list[str] = field(default_factory=list)

    def objective(self, S: ConstraintSet) -> float:
        return self.g(S) - self.h(S)


# submodular augmentation

def sqrt_curvature_gap(n_constraints: int) -> float:
    """min_k 2v(k+1) - v(k) - v(k+2) for v = sqrt over the usable cardinalities."""
    if n_constraints < 2:
        return 1.0
    k = np.arange(0, n_constraints - 1, dtype=float)
    gaps = 2 * np.sqrt(k + 1) - np.sqrt(k) - np.sqrt(k + 2)
    return float(gaps.min())


def beta_prime_terms(rho, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per library size s: the increment bound r1(s) and the top-s reward mass r2(s)."""
    s = np.arange(1, len(rho) + 1, dtype=float)
    r2 = np.cumsum(np.sort(np.asarray(rho, dtype=float))[::-1])
    r1 = np.exp(n * np.log1p(-0.5 / s)) - np.where(s > 1, np.exp(n * np.log1p(-1.0 / np.maximum(s, 2))), 0.0)
    return r1, r2


def evaluate_beta_prime(ctx: ObjectiveContext) -> float:
    r1, r2 = beta_prime_terms(ctx.rho, ctx.n)
    return -float(np.max(r1 * r2)) + 0.0


def safe_beta_bound(ctx: ObjectiveContext, beta_prime: float) -> float:
    """A lower bound on beta that also covers the supermodular reward-sum part.

    The gain of the reward sum from adding constraint j can grow by at most
    the reward mass of its full slice, so subtracting the largest slice mass
    from beta' gives a bound valid for every instance.
    """
    full = ConstraintSet.full(ctx.ground)
    slice_mass = np.concatenate(ctx.site_slices(full))
    return beta_prime - float(slice_mass.max(initial=0.0))


def decompose_sa(ctx: ObjectiveContext, exact_limit: int = EXACT_BETA_LIMIT) -> DsDecomposition:
    n_constraints = ctx.ground.total_constraints
    alpha = sqrt_curvature_gap(n_constraints)
    beta_p = evaluate_beta_prime(ctx)
    notes = []
    beta_ex = None
    if n_constraints <= exact_limit:
        beta_ex = exact_beta(surrogate_function(ctx).table(), n_constraints)
        if beta_p <= beta_ex + 1e-12:
            beta = beta_p
        else:
            beta = beta_ex
            msg = f"beta' = {beta_p:.6g} exceeds exact beta = {beta_ex:.6g}; using exact beta"
            notes.append(msg)
            logger.warning(msg)
    else:
        beta = safe_beta_bound(ctx, beta_p)
        notes.append(f"beta' = {beta_p:.6g} widened to {beta:.6g} for the reward-sum curvature")
    c = abs(beta) / alpha
    n = ctx.n
    h = SetFunction(ctx, lambda card, q, s: c * np.sqrt(card), "h_sa")
    g = SetFunction(ctx, lambda card, q, s: s * coverage(q, n) + c * np.sqrt(card), "g_sa")
    return DsDecomposition(h, g, alpha, beta, "SA", beta_p, beta_ex, notes)


# difference of convex

def r_second_derivative(x, n: int):
    """d^2/dx^2 of (1 - 1/x)^n for x >= 1."""
    t = 1.0 / np.asarray(x, dtype=float)
    if n == 1:
        return -2.0 * t**3
    return n * t**3 * (1 - t) ** (n - 2) * ((n + 1) * t - 2)


def dc_beta(n: int, max_library: int) -> float:
    """|min of r''| over the real interval [1, max_library].

    With t = 1/x the critical points of r'' solve
    (n+1)(n+2) t^2 - 6(n+1) t + 6 = 0, so the minimum is exact.
    """
    candidates = [1.0, float(max_library)]
    if n >= 2:
        a, b, c = (n + 1) * (n + 2), -6.0 * (n + 1), 6.0
        disc = b * b - 4 * a * c
        if disc >= 0:
            for t in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)):
                if t > 0 and 1.0 <= 1.0 / t <= max_library:
                    candidates.append(1.0 / t)
    low = float(np.min(r_second_derivative(np.array(candidates), n)))
    return max(0.0, -low)


def decompose_dc(ctx: ObjectiveContext) -> DsDecomposition:
    n = ctx.n
    beta = dc_beta(n, ctx.ground.library_size)

    def r(q):
        q = np.asarray(q, dtype=float)
        return np.where(q >= 1, 1.0 - coverage(q, n), 0.0)

    h = SetFunction(ctx, lambda card, q, s: -(1.0 + beta * 0.5 * q * q) * s, "h_dc")
    g = SetFunction(ctx, lambda card, q, s: -(r(q) + beta * 0.5 * q * q) * s, "g_dc")
    return DsDecomposition(h, g, 1.0, beta, "DC")


def decompose(ctx: ObjectiveContext, construction: str) -> DsDecomposition:
    construction = construction.upper()
    if construction == "SA":
        return decompose_sa(ctx)
    if construction == "DC":
        return decompose_dc(ctx)
    raise ValueError(f"unknown decomposition {construction!r}")


# modular bounds

def modular_upper_bound(h: SetFunction, X: ConstraintSet, variant: str = "grow") -> ModularFunction:
    """Modular m >= h, tight at X (h submodular)."""
    in_x = X.as_array()
    hX = h(X)
    at_x = h.toggle_values(X)
    if variant == "grow":
        empty = ConstraintSet.empty(X.ground)
        drop = hX - at_x                            # Delta(j | X - j)
        add = h.toggle_values(empty) - h(empty)     # Delta(j | {})
    elif variant == "shrink":
        full = ConstraintSet.full(X.ground)
        drop = h(full) - h.toggle_values(full)      # Delta(j | C - j)
        add = at_x - hX                             # Delta(j | X)
    else:
        raise ValueError(f"unknown upper-bound variant {variant!r}")
    weights = np.where(in_x, drop, add)
    return ModularFunction(float(hX - drop[in_x].sum()), weights)


PERMUTATIONS = ("marginal", "singleton-gain")


def default_order(g: SetFunction, X: ConstraintSet, h: SetFunction | None = None,
                  policy: str = "marginal") -> list[int]:
    """Chain order for the lower bound: X first, then the rest.

    With the ``marginal`` policy elements are ranked by their marginal at X
    of ``g - h`` (of ``g`` alone when ``h`` is None): inside X the cheapest
    removal goes last, outside X the best addition goes first, so the chain
    is exact for both moves. ``singleton-gain`` ranks by g({j}) - g({}).
    Ties keep index order.
    """
    in_x = X.as_array()
    if policy == "marginal":
        at_x = g.toggle_values(X) - g(X)
        if h is not None:
            at_x = at_x - (h.toggle_values(X) - h(X))
        marginal = np.where(in_x, -at_x, at_x)   # Delta(j | X - j) inside, Delta(j | X) outside
    elif policy == "singleton-gain":
        empty = ConstraintSet.empty(X.ground)
        marginal = g.toggle_values(empty) - g(empty)
    else:
        raise ValueError(f"unknown permutation policy {policy!r}; expected one of {PERMUTATIONS}")
    idx = np.arange(len(marginal))
    key = np.lexsort((idx, -marginal, ~in_x))
    return [int(j) for j in key]


def modular_lower_bound(g: SetFunction, X: ConstraintSet, order=None) -> ModularFunction:
    """Chain (Edmonds greedy) modular l <= g, tight at X (g submodular)."""
    n_c = X.ground.total_constraints
    if order is None:
        order = default_order(g, X)
    order = [int(j) for j in order]
    if sorted(order) != list(range(n_c)):
        raise ValueError("order must be a permutation of the constraint indices")
    k = len(X)
    if sorted(order[:k]) != X.indices():
        raise ValueError("order must list the elements of X first")
    weights = np.zeros(n_c)
    W = ConstraintSet.empty(X.ground)
    prev = g(W)
    offset = prev
    for j in order:
        W = W.add(j)
        cur = g(W)
        weights[j] = cur - prev
        prev = cur
    return ModularFunction(float(offset), weights)
