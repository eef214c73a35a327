import itertools

import numpy as np
import pytest

from bsbo.constraint_space import ConstraintSet, library_indices, library_size
from bsbo.setfunc_oracle import (
    all_masks,
    exact_beta,
    library_tables,
    monotonicity_violations,
    submodularity_violations,
    supermodularity_violations,
    tabulate,
)

from conftest import make_ctx


def naive_beta(values, n_bits):
    """min over j and S <= T <= C - j of Delta(j|S) - Delta(j|T), by direct enumeration."""
    best = 0.0
    for j in range(n_bits):
        bj = 1 << j
        others = [m for m in range(1 << n_bits) if not m & bj]
        for S in others:
            for T in others:
                if S & ~T == 0:
                    best = min(best, (values[S | bj] - values[S]) - (values[T | bj] - values[T]))
    return best


@pytest.mark.parametrize("sizes", [(2,), (2, 2), (3, 1, 2), (4, 3)])
def test_library_tables_match_direct_evaluation(sizes):
    ctx = make_ctx(sizes, 3, seed=len(sizes))
    counts, sums = library_tables(ctx.ground, ctx.rho)
    assert np.array_equal(counts, tabulate(library_size, ctx.ground))
    direct = tabulate(lambda S: ctx.rho[library_indices(S)].sum(), ctx.ground)
    np.testing.assert_allclose(sums, direct, rtol=1e-12, atol=1e-15)


def test_cardinality_functions_classified():
    n = 6
    card = np.array([bin(m).count("1") for m in all_masks(n)], dtype=float)
    assert submodularity_violations(np.sqrt(card), n).ok
    assert not submodularity_violations(card**2, n).ok
    assert supermodularity_violations(card**2, n).ok
    assert not supermodularity_violations(np.sqrt(card), n).ok
    assert monotonicity_violations(card, n).ok
    assert not monotonicity_violations(-card, n).ok


def test_submodularity_counts_match_brute_force():
    rng = np.random.default_rng(0)
    n = 4
    vals = rng.normal(size=1 << n)
    rep = submodularity_violations(vals, n)
    brute = 0
    for S in range(1 << n):
        for j, k in itertools.permutations(range(n), 2):
            if S >> j & 1 or S >> k & 1:
                continue
            if (vals[S | 1 << j | 1 << k] - vals[S | 1 << k]) - (vals[S | 1 << j] - vals[S]) > 1e-9:
                brute += 1
    assert rep.violations == brute
    assert rep.checked == (1 << (n - 2)) * n * (n - 1)


@pytest.mark.parametrize("seed", range(5))
def test_exact_beta_matches_naive_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 5
    vals = rng.normal(size=1 << n)
    assert exact_beta(vals, n) == pytest.approx(naive_beta(vals, n), abs=1e-12)


def test_exact_beta_zero_for_submodular():
    n = 5
    card = np.array([bin(m).count("1") for m in all_masks(n)], dtype=float)
    assert exact_beta(np.sqrt(card), n) == 0.0
    # |S|^2 has constant second difference 2
    assert exact_beta(card**2, n) == pytest.approx(-2.0 * (n - 1))


def test_refuses_large_ground_sets():
    with pytest.raises(ValueError):
        all_masks(30)
