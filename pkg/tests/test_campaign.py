import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsbo.campaign import (
    CampaignConfig,
    GpSettings,
    derive_seed,
    initial_design,
    reference_lines,
    run_campaign,
    run_round,
    sample_batch,
    single_mutants,
    start_campaign,
)
from bsbo.constraint_space import ConstraintSet, GroundSet, library_indices
from bsbo.data_io import Block, FitnessTable, SyntheticSpec, generate_synthetic
from bsbo.ds_optimize import OptimizerConfig
from bsbo.gp_model import GpHyperparameters

SMALL = generate_synthetic(SyntheticSpec(alphabet_size=8, blocks=(Block(5, 2, 2, 3, 1.0), Block(1, 6, 2, 1, 0.4))))
FAST = CampaignConfig(rounds=2, batch_size=10, k_random=5, optimizer=OptimizerConfig(restarts=3))


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(3, "batch", 1) == derive_seed(3, "batch", 1)
    seeds = {derive_seed(3, "batch", 1), derive_seed(3, "batch", 2), derive_seed(3, "noise", 1), derive_seed(4, "batch", 1)}
    assert len(seeds) == 4
    assert 0 <= derive_seed(0, "x") < 2**63


@st.composite
def nonempty_sets(draw):
    sizes = draw(st.lists(st.integers(1, 4), min_size=1, max_size=3))
    g = GroundSet(tuple(tuple("ABCD"[:k]) for k in sizes))
    per_site = [draw(st.lists(st.integers(0, k - 1), min_size=1, unique=True)) for k in sizes]
    return ConstraintSet.from_indices(g, [g.offsets[s] + c for s, cs in enumerate(per_site) for c in cs])


@given(nonempty_sets(), st.integers(0, 1000))
def test_sample_batch_stays_in_library(S, seed):
    batch = sample_batch(S, 50, np.random.default_rng(seed))
    assert set(batch.tolist()) <= set(library_indices(S).tolist())


def test_sample_batch_is_uniform():
    g = GroundSet.uniform(2, "ABC")
    S = ConstraintSet.from_symbols(g, [["A", "C"], ["B", "C"]])
    batch = sample_batch(S, 40_000, np.random.default_rng(0))
    _, counts = np.unique(batch, return_counts=True)
    assert counts.size == 4
    assert np.all(np.abs(counts / 40_000 - 0.25) < 0.01)
    with pytest.raises(ValueError):
        sample_batch(ConstraintSet.empty(g), 3, np.random.default_rng(0))


def test_initial_design_contents():
    g = GroundSet.uniform(3, "ABC")
    items = initial_design(g, ("A", "A", "A"), 10, np.random.default_rng(0))
    assert items[0] == 0
    assert set(single_mutants(g, ("A", "A", "A"))) <= set(items)
    assert len(single_mutants(g, ("A", "A", "A"))) == 6
    assert len(items) == len(set(items))


def test_reference_lines():
    g = GroundSet.uniform(2, "ABC")
    values = np.zeros(9)
    values[g.item_index(("B", "A"))] = 2.0   # best single mutant
    values[g.item_index(("A", "C"))] = 1.0
    values[g.item_index(("B", "C"))] = 0.5   # epistatic: recombination is worse
    values[g.item_index(("A", "A"))] = 0.3
    t = FitnessTable(g, values, np.zeros(9, dtype=bool), {"wild_type": "AA"})
    refs = reference_lines(t)
    assert refs["wild_type"] == {"sequence": "AA", "fitness": 0.3}
    assert refs["best_single_mutant"] == {"sequence": "BA", "fitness": 2.0}
    assert refs["recombined_best"] == {"sequence": "BC", "fitness": 0.5}


def test_campaign_regret_is_non_increasing_and_deterministic():
    a = run_campaign(SMALL, FAST)
    b = run_campaign(SMALL, FAST)
    assert len(a.records) == 3
    curve = a.regret_curve
    assert all(y <= x for x, y in zip(curve, curve[1:]))
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)
    assert all(len(r.batch) == 10 for r in a.records[1:])
    assert a.best_found == max(max(r.fitness) for r in a.records)


def test_observation_noise_only_affects_observed():
    cfg = CampaignConfig(rounds=1, batch_size=10, k_random=5, obs_noise=0.1, optimizer=OptimizerConfig(restarts=2))
    rep = run_campaign(SMALL, cfg)
    r = rep.records[1]
    assert r.fitness == SMALL.lookup(r.batch).tolist()
    assert r.observed != r.fitness


def test_fixed_hyperparameters_are_used_without_refit():
    hyper = GpHyperparameters(lengthscale=2.0, noise_variance=1e-3)
    cfg = CampaignConfig(rounds=1, batch_size=5, k_random=5, gp=GpSettings(refit=False, hyper=hyper),
                         optimizer=OptimizerConfig(restarts=2))
    state = run_round(start_campaign(SMALL, cfg), SMALL, cfg)
    assert state.records[-1].hyper == hyper


def test_config_json_round_trip_and_validation():
    cfg = CampaignConfig(rounds=4, gp=GpSettings(hyper=GpHyperparameters()), optimizer=OptimizerConfig(method="greedy"))
    assert CampaignConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
    with pytest.raises(ValueError):
        CampaignConfig(batch_size=0)
    with pytest.raises(TypeError):
        CampaignConfig.from_json({"round": 3})
