"""Multi-round design campaigns simulated against a full-factorial fitness table.

Each round refits the GP on everything observed so far, turns the posterior
into improvement probabilities over the whole library, picks a constraint set
with the optimizer and samples a batch from its library. All randomness comes
from seeds derived from the master seed and a (purpose, round) label, so a
campaign is reproducible bit-for-bit.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .constraint_space import ConstraintSet, GroundSet, library_size
from .data_io import FitnessTable, format_item
from .ds_optimize import OptimizerConfig, optimize
from .gp_model import (
    GpHyperparameters,
    compute_rewards,
    default_grid,
    fit_hyperparameters,
    fit_posterior,
)
from .objective import McSizeError, ObjectiveContext, mc_objective, simple_regret, update_threshold

logger = logging.getLogger(__name__)


def derive_seed(master: int, label: str, *path: int) -> int:
    """A 63-bit seed for ``(master, label, *path)``, independent of call order."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(label.encode()), *map(int, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def derived_rng(master: int, label: str, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master), zlib.crc32(label.encode()), *map(int, path)]))


@dataclass(frozen=True)
class GpSettings:
    kernel: str = "matern52"
    refit: bool = True
    grid_points: int = 5
    hyper: GpHyperparameters | None = None

    def resolve(self, obs, ground: GroundSet) -> GpHyperparameters:
        if self.refit or self.hyper is None:
            values = [v for _, v in obs]
            return fit_hyperparameters(obs, default_grid(values, self.kernel, self.grid_points), ground)
        return self.hyper

    def to_json(self) -> dict:
        d = asdict(self)
        d["hyper"] = None if self.hyper is None else self.hyper.to_json()
        return d

    @classmethod
    def from_json(cls, data: dict) -> "GpSettings":
        data = dict(data)
        if data.get("hyper") is not None:
            data["hyper"] = GpHyperparameters.from_json(data["hyper"])
        return cls(**data)


@dataclass(frozen=True)
class CampaignConfig:
    rounds: int = 3
    batch_size: int = 100
    k_random: int = 100
    obs_noise: float = 0.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    gp: GpSettings = field(default_factory=GpSettings)
    mc_validation: bool = False
    mc_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.k_random < 0 or self.obs_noise < 0 or self.mc_samples < 1:
            raise ValueError("k_random and obs_noise must be >= 0, mc_samples >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["optimizer"] = self.optimizer.to_json()
        d["gp"] = self.gp.to_json()
        return d

    @classmethod
    def from_json(cls, data: dict) -> "CampaignConfig":
        data = dict(data)
        if "optimizer" in data:
            data["optimizer"] = OptimizerConfig.from_json(data["optimizer"])
        if "gp" in data:
            data["gp"] = GpSettings.from_json(data["gp"])
        return cls(**data)


def sample_batch(S: ConstraintSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform draws with replacement from Q(S), as dense item indices."""
    q = library_size(S)
    if q == 0:
        raise ValueError("cannot sample from an empty library")
    ground = S.ground
    k = rng.integers(0, q, size=n)
    out = np.zeros(n, dtype=np.int64)
    # decode the position within Q(S) in mixed radix, site 0 most significant
    for site in reversed(range(ground.n_sites)):
        codes = np.asarray(S.site_codes(site), dtype=np.int64)
        k, digit = np.divmod(k, codes.size)
        out += codes[digit] * ground.strides[site]
    return out


def single_mutants(ground: GroundSet, wild_type) -> list[int]:
    wt = ground.symbol_codes(wild_type)
    out = []
    for site in range(ground.n_sites):
        for c in range(ground.sizes[site]):
            if c != wt[site]:
                codes = list(wt)
                codes[site] = c
                out.append(int(ground.indices_from_codes(codes)))
    return out


def initial_design(ground: GroundSet, wild_type, k_random: int, rng: np.random.Generator) -> list[int]:
    """Wild type, all single mutants, then ``k_random`` uniform items; duplicates dropped."""
    items = [ground.item_index(wild_type), *single_mutants(ground, wild_type)]
    items += [int(i) for i in rng.integers(0, ground.library_size, size=k_random)]
    return list(dict.fromkeys(items))


def reference_lines(table: FitnessTable) -> dict:
    ground = table.ground
    wt = table.wild_type()
    wt_idx = ground.item_index(wt)
    mutants = single_mutants(ground, wt)
    refs = {"wild_type": wt_idx}
    if mutants:
        refs["best_single_mutant"] = mutants[int(np.argmax(table.lookup(mutants)))]
    # best symbol per site in the wild-type background (the wild-type symbol included)
    wt_codes = ground.symbol_codes(wt)
    best_codes = []
    for site in range(ground.n_sites):
        variants = []
        for c in range(ground.sizes[site]):
            codes = list(wt_codes)
            codes[site] = c
            variants.append(int(ground.indices_from_codes(codes)))
        best_codes.append(int(np.argmax(table.lookup(variants))))
    refs["recombined_best"] = int(ground.indices_from_codes(best_codes))
    return {name: {"sequence": table.sequence(i), "fitness": float(table.values[i])} for name, i in refs.items()}


@dataclass
class RoundRecord:
    round: int
    batch: list[int]
    fitness: list[float]
    observed: list[float]
    best_so_far: float
    regret: float
    tau: float | None = None
    constraint_set: ConstraintSet | None = None
    surrogate: float | None = None
    hyper: GpHyperparameters | None = None
    mc: dict | None = None

    def to_json(self, table: FitnessTable) -> dict:
        return {
            "round": self.round,
            "batch": [table.sequence(i) for i in self.batch],
            "fitness": [float(v) for v in self.fitness],
            "observed": [float(v) for v in self.observed],
            "best_so_far": float(self.best_so_far),
            "regret": float(self.regret),
            "tau": self.tau,
            "constraint_set": None if self.constraint_set is None else self.constraint_set.to_json(),
            "surrogate": self.surrogate,
            "hyper": None if self.hyper is None else self.hyper.to_json(),
            "mc": self.mc,
        }


@dataclass
class CampaignState:
    round: int
    obs_items: list[int]
    obs_values: list[float]
    obs_rounds: list[int]
    tau: float
    best_so_far: float
    records: list[RoundRecord]
    posterior: object = None

    def unique_observations(self) -> list[tuple[int, float]]:
        """One (item, mean observed value) pair per distinct item, in first-seen order."""
        acc: dict[int, list[float]] = {}
        for i, v in zip(self.obs_items, self.obs_values):
            acc.setdefault(i, []).append(v)
        return [(i, float(np.mean(vs))) for i, vs in acc.items()]


def _observe(table: FitnessTable, items, noise: float, rng) -> tuple[np.ndarray, np.ndarray]:
    truth = table.lookup(items)
    observed = truth + noise * rng.standard_normal(truth.size) if noise > 0 else truth.copy()
    return truth, observed


def start_campaign(table: FitnessTable, config: CampaignConfig) -> CampaignState:
    ground = table.ground
    items = initial_design(ground, table.wild_type(), config.k_random, derived_rng(config.seed, "initial"))
    truth, observed = _observe(table, items, config.obs_noise, derived_rng(config.seed, "noise", 0))
    best = float(truth.max())
    record = RoundRecord(0, items, truth.tolist(), observed.tolist(), best,
                         simple_regret(best, table.global_max()))
    return CampaignState(0, list(items), observed.tolist(), [0] * len(items),
                         update_threshold(observed), best, [record])


def run_round(state: CampaignState, table: FitnessTable, config: CampaignConfig) -> CampaignState:
    if not state.obs_items:
        raise ValueError("campaign state needs at least one observation")
    ground = table.ground
    t = state.round + 1
    obs = state.unique_observations()
    hyper = config.gp.resolve(obs, ground)
    posterior = fit_posterior(obs, hyper, ground)
    tau = update_threshold(state.obs_values)
    rewards = compute_rewards(posterior, tau)
    ctx = ObjectiveContext(ground, rewards, config.batch_size)
    opt = replace(config.optimizer, seed=derive_seed(config.seed, "optimizer", t))
    S, _ = optimize(ctx, opt)
    batch = sample_batch(S, config.batch_size, derived_rng(config.seed, "batch", t))
    truth, observed = _observe(table, batch, config.obs_noise, derived_rng(config.seed, "noise", t))
    best = max(state.best_so_far, float(truth.max()))
    mc = None
    if config.mc_validation:
        try:
            est = mc_objective(S, posterior, tau, config.batch_size, config.mc_samples,
                               derive_seed(config.seed, "mc", t))
            mc = {"mean": est.mean, "stderr": est.stderr, "num_samples": est.num_samples}
        except McSizeError as exc:
            mc = {"skipped": str(exc)}
    record = RoundRecord(t, batch.tolist(), truth.tolist(), observed.tolist(), best,
                         simple_regret(best, table.global_max()), tau, S, ctx.value(S), hyper, mc)
    logger.info("round %d: |Q(S)|=%d F_hat=%.4g best=%.4g", t, library_size(S), record.surrogate, best)
    return CampaignState(
        t,
        state.obs_items + batch.tolist(),
        state.obs_values + observed.tolist(),
        state.obs_rounds + [t] * len(batch),
        update_threshold(state.obs_values + observed.tolist()),
        best,
        state.records + [record],
        posterior,
    )


@dataclass
class CampaignReport:
    table: FitnessTable
    config: CampaignConfig
    records: list[RoundRecord]

    @property
    def regret_curve(self) -> list[float]:
        return [r.regret for r in self.records]

    @property
    def best_found(self) -> float:
        return self.records[-1].best_so_far

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "ground": self.table.ground.to_json(),
            "dataset": {k: v for k, v in self.table.metadata.items() if k != "spec"},
            "global_max": self.table.global_max(),
            "reference_lines": reference_lines(self.table),
            "rounds": [r.to_json(self.table) for r in self.records],
        }


def run_campaign(table: FitnessTable, config: CampaignConfig) -> CampaignReport:
    state = start_campaign(table, config)
    for _ in range(config.rounds):
        state = run_round(state, table, config)
    return CampaignReport(table, config, state.records)

