"""Maximizing the surrogate objective over constraint sets.

``dsopt`` alternates a 1-toggle local search (whose results are pooled as
candidates) with ModMod or SupSub moves on a DS decomposition, over several
restarts, and returns the best pooled candidate. The three greedy baselines
share the same steepest-ascent machinery.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .constraint_space import ConstraintSet, library_size
from .ds_decompose import (
    PERMUTATIONS,
    DsDecomposition,
    decompose,
    default_order,
    modular_lower_bound,
    modular_upper_bound,
)
from .objective import ObjectiveContext

logger = logging.getLogger(__name__)

DS_METHODS = ("modmod-sa", "modmod-dc", "supsub-sa", "supsub-dc")
GREEDY_METHODS = ("greedy", "greedy-add", "greedy-rem")
METHODS = DS_METHODS + GREEDY_METHODS
REL_TOL = 1e-12
MAX_REJECTION_TRIES = 1000


def improves(new: float, old: float) -> bool:
    return new - old > REL_TOL * max(1.0, abs(old))


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "modmod-sa"
    restarts: int = 19
    max_outer_iterations: int = 100
    permutation: str = "marginal"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if self.permutation not in PERMUTATIONS:
            raise ValueError(f"unknown permutation policy {self.permutation!r}; expected one of {PERMUTATIONS}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "OptimizerConfig":
        return cls(**data)


@dataclass
class OptRun:
    initial: ConstraintSet
    trajectory: list[tuple[ConstraintSet, float]] = field(default_factory=list)
    final: ConstraintSet | None = None
    final_value: float = 0.0
    converged: bool = False
    evaluations: int = 0
    candidates: list[tuple[ConstraintSet, float]] = field(default_factory=list)


def _best_toggle(ctx, S, value, allow_add, allow_rem, run=None):
    """The steepest strictly improving toggle of S, or None (lowest index on ties)."""
    vals = ctx.toggle_values(S)
    if run is not None:
        run.evaluations += vals.size
    allowed = np.where(S.as_array(), allow_rem, allow_add)
    vals = np.where(allowed, vals, -np.inf)
    j = int(np.argmax(vals))
    if not allowed[j] or not improves(vals[j], value):
        return None
    return S.toggle(j)


def steepest_ascent(ctx: ObjectiveContext, S: ConstraintSet, add: bool = True,
                    remove: bool = True, run: OptRun | None = None) -> ConstraintSet:
    value = ctx.value(S)
    while (nxt := _best_toggle(ctx, S, value, add, remove, run)) is not None:
        S = nxt
        value = ctx.value(S)
    return S


def local_search(ctx: ObjectiveContext, S: ConstraintSet, run: OptRun | None = None) -> ConstraintSet:
    return steepest_ascent(ctx, S, True, True, run)


def greedy_baseline(ctx: ObjectiveContext, mode: str, start: ConstraintSet,
                    run: OptRun | None = None) -> ConstraintSet:
    if mode not in ("add", "rem", "both"):
        raise ValueError(f"unknown greedy mode {mode!r}")
    return steepest_ascent(ctx, start, mode != "rem", mode != "add", run)


def repair(ctx: ObjectiveContext, S: ConstraintSet) -> ConstraintSet:
    """Give every empty site the symbol carrying the most reward mass.

    Mass is measured with the other selected sites held fixed and the empty
    ones opened fully.
    """
    ground = S.ground
    empty_sites = [s for s, k in enumerate(S.site_counts()) if k == 0]
    if not empty_sites:
        return S
    opened = S
    for s in empty_sites:
        for c in range(ground.sizes[s]):
            opened = opened.add(ground.offsets[s] + c)
    slices = ctx.site_slices(opened)
    for s in empty_sites:
        S = S.add(ground.offsets[s] + int(np.argmax(slices[s])))
    return S


def _best_candidate(ctx: ObjectiveContext, S: ConstraintSet, candidates) -> ConstraintSet:
    best, best_val = S, ctx.value(S)
    for Y in candidates:
        val = ctx.value(Y)
        if improves(val, best_val):
            best, best_val = Y, val
    return best


def modmod_step(ds: DsDecomposition, S: ConstraintSet, ctx: ObjectiveContext,
                permutation: str = "marginal") -> ConstraintSet:
    """Minimize (modular upper bound of h) - (modular lower bound of g), both tight at S."""
    lower = modular_lower_bound(ds.g, S, default_order(ds.g, S, ds.h, permutation))
    candidates = []
    for variant in ("grow", "shrink"):
        upper = modular_upper_bound(ds.h, S, variant)
        net = upper.weights - lower.weights
        Y = ConstraintSet.from_array(S.ground, net < 0)
        candidates += [Y, repair(ctx, Y)]
    return _best_candidate(ctx, S, candidates)


def _maximize_with_modular_penalty(g, upper, S: ConstraintSet) -> ConstraintSet:
    """Double-pass greedy on g(Y) - upper(Y): forward additions, then backward removals."""
    w = upper.weights
    Y = S
    while True:
        changed = False
        for adding in (True, False):
            while True:
                base = g(Y) - upper(Y)
                sel = Y.as_array()
                vals = g.toggle_values(Y) - (upper(Y) + np.where(sel, -w, w))
                ok = ~sel if adding else sel
                vals = np.where(ok, vals, -np.inf)
                j = int(np.argmax(vals))
                if not ok[j] or not improves(vals[j], base):
                    break
                Y = Y.toggle(j)
                changed = True
        if not changed:
            return Y


def supsub_step(ds: DsDecomposition, S: ConstraintSet, ctx: ObjectiveContext,
                permutation: str = "marginal") -> ConstraintSet:
    """Replace h by a tight modular upper bound and greedily maximize g - bound.

    ``permutation`` is accepted for signature parity with :func:`modmod_step`.
    """
    candidates = []
    for variant in ("grow", "shrink"):
        upper = modular_upper_bound(ds.h, S, variant)
        Y = _maximize_with_modular_penalty(ds.g, upper, S)
        candidates += [Y, repair(ctx, Y)]
    return _best_candidate(ctx, S, candidates)


def random_start(ctx: ObjectiveContext, rng: np.random.Generator) -> ConstraintSet:
    """Each constraint kept with probability 1/2, resampled until every site is non-empty."""
    ground = ctx.ground
    for _ in range(MAX_REJECTION_TRIES):
        S = ConstraintSet.from_array(ground, rng.random(ground.total_constraints) < 0.5)
        if library_size(S) > 0:
            return S
    return ConstraintSet.from_indices(
        ground, [o + int(rng.integers(k)) for o, k in zip(ground.offsets, ground.sizes)]
    )


def best_item_start(ctx: ObjectiveContext) -> ConstraintSet:
    ground = ctx.ground
    return ConstraintSet.from_item(ground, ground.item_from_index(ctx.best_item()))


def restart_starts(ctx: ObjectiveContext, restarts: int, seed: int) -> list[ConstraintSet]:
    """Restart 0 at the best single item; restart r > 0 from seed (seed, r)."""
    starts = [best_item_start(ctx)]
    for r in range(1, restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        starts.append(random_start(ctx, rng))
    return starts


def _run_ds(ctx, ds, start, max_iter, step, permutation) -> OptRun:
    run = OptRun(initial=start)
    S = start
    value = ctx.value(S)
    run.trajectory.append((S, value))
    pool = []
    small_gains = 0
    for _ in range(max_iter):
        L = local_search(ctx, S, run)
        pool.append((L, ctx.value(L)))
        new = step(ds, S, ctx, permutation)
        run.evaluations += 2 * S.ground.total_constraints
        if new == S:
            run.converged = True
            break
        new_value = ctx.value(new)
        small_gains = small_gains + 1 if new_value - value < 1e-12 else 0
        S, value = new, new_value
        run.trajectory.append((S, value))
        if small_gains >= 3:
            run.converged = True
            break
    # the final iterate is pooled after a last local search, so every candidate is 1-toggle optimal
    L = local_search(ctx, S, run)
    pool.append((L, ctx.value(L)))
    run.candidates = pool
    run.final, run.final_value = _argmax(pool)
    return run


def _run_greedy(ctx, mode, start) -> OptRun:
    run = OptRun(initial=start)
    run.trajectory.append((start, ctx.value(start)))
    S = start
    value = run.trajectory[0][1]
    allow_add, allow_rem = mode != "rem", mode != "add"
    while True:
        nxt = _best_toggle(ctx, S, value, allow_add, allow_rem, run)
        if nxt is None:
            break
        S = nxt
        value = ctx.value(S)
        run.trajectory.append((S, value))
    run.converged = True
    run.final, run.final_value = S, value
    run.candidates = [(S, value)]
    return run


def _argmax(pool):
    best = pool[0]
    for cand in pool[1:]:
        if improves(cand[1], best[1]):
            best = cand
    return best


def run_from_start(ctx: ObjectiveContext, method: str, start: ConstraintSet,
                   ds: DsDecomposition | None = None, max_outer_iterations: int = 100,
                   permutation: str = "marginal") -> OptRun:
    if method in GREEDY_METHODS:
        mode = {"greedy": "both", "greedy-add": "add", "greedy-rem": "rem"}[method]
        return _run_greedy(ctx, mode, start)
    if method not in DS_METHODS:
        raise ValueError(f"unknown method {method!r}")
    kind, construction = method.split("-")
    if ds is None:
        ds = decompose(ctx, construction)
    step = modmod_step if kind == "modmod" else supsub_step
    return _run_ds(ctx, ds, start, max_outer_iterations, step, permutation)


def optimize(ctx: ObjectiveContext, config: OptimizerConfig, starts=None) -> tuple[ConstraintSet, list[OptRun]]:
    """Best constraint set over all restarts, plus the per-restart runs."""
    if starts is None:
        starts = restart_starts(ctx, config.restarts, config.seed)
    ds = None
    if config.method in DS_METHODS:
        ds = decompose(ctx, config.method.split("-")[1])

    def one(start):
        return run_from_start(ctx, config.method, start, ds, config.max_outer_iterations, config.permutation)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            runs = list(pool.map(one, starts))
    else:
        runs = [one(s) for s in starts]
    best = _argmax([(r.final, r.final_value) for r in runs])[0]
    return best, runs


def dsopt(ctx: ObjectiveContext, config: OptimizerConfig, starts=None) -> tuple[ConstraintSet, list[OptRun]]:
    if config.method not in DS_METHODS:
        raise ValueError(f"dsopt needs a DS method, got {config.method!r}")
    return optimize(ctx, config, starts)


def is_local_maximum(ctx: ObjectiveContext, S: ConstraintSet) -> bool:
    value = ctx.value(S)
    return not any(improves(ctx.value(T), value) for T in (S.toggle(j) for j in range(S.ground.total_constraints)))
