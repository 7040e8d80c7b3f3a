import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nestquant import beta_opt
from nestquant.beta_opt import ErrorProfile


def random_profile(seed, m_max=12, samples=(20, 200)):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, m_max + 1))
    q = int(rng.choice([4, 8, 16]))
    betas = np.sort(rng.choice(np.arange(1, 61) * 0.25, size=m, replace=False)) / q
    betas[-1] = max(betas[-1], 20.0 / q)  # keep one overload-free scale
    x = rng.standard_normal((int(rng.integers(*samples)), 8))
    return beta_opt.profile_errors(x, betas, q), rng


def test_universes():
    g = beta_opt.universe("appendixG", 10) * 10
    assert g[0] == 1.0 and g[-1] == 40.0
    assert set(np.round(np.diff(g), 6)) == {0.25, 0.5, 1.0, 2.0}
    assert np.allclose(beta_opt.universe("synthetic", 1), 0.5 * np.arange(1, 51))
    with pytest.raises(KeyError):
        beta_opt.universe("nope", 4)


def test_profile_zero_sample_and_large_beta():
    prof = beta_opt.profile_errors(np.zeros((3, 8)), [0.1, 1.0], 4)
    assert not prof.mse.any() and not prof.overload.any()
    x = np.random.default_rng(0).standard_normal((500, 8))
    assert not beta_opt.profile_errors(x, [100.0], 4).overload.any()
    with pytest.raises(ValueError):
        beta_opt.profile_errors(np.zeros((0, 8)), [1.0], 4)


def test_gaussian_profile_shape():
    x = np.random.default_rng(1).standard_normal((20000, 8))
    prof = beta_opt.profile_errors(x, beta_opt.universe("appendixF", 16), 16)
    p_over = prof.overload.mean(axis=0)
    assert p_over[0] > 0.99 and p_over[-1] == 0
    assert np.all(np.diff(p_over) <= 0.002)
    granular = np.array([prof.mse[~prof.overload[:, j], j].mean() for j in range(8, prof.betas.size)])
    assert np.all(np.diff(granular) > 0)


def test_dp_matches_bruteforce_on_random_instances():
    for seed in range(40):
        prof, rng = random_profile(seed)
        k = int(rng.integers(1, 4))
        dp_idx, dp_total = beta_opt.dp_optimal_betas(prof, k)
        bf_idx, bf_total = beta_opt.brute_force_betas(prof, k)
        assert math.isclose(dp_total, bf_total, rel_tol=1e-12, abs_tol=1e-12)
        assert len(dp_idx) <= k


def test_full_universe_exact_size():
    prof, _ = random_profile(3)
    m = prof.betas.size
    idx, total = beta_opt.dp_optimal_betas(prof, m, exact=True)
    assert idx == list(range(m))
    assert math.isclose(total, beta_opt.first_beta_cost(prof, range(m)))
    _, loose = beta_opt.dp_optimal_betas(prof, m)
    assert loose <= total


def test_k1_picks_cheapest_safe_scale():
    prof, _ = random_profile(5)
    idx, total = beta_opt.dp_optimal_betas(prof, 1)
    safe = prof.safe()
    sums = prof.mse[:, safe].sum(axis=0)
    assert idx == [int(safe[np.argmin(sums)])]
    assert math.isclose(total, sums.min())
    assert beta_opt.brute_force_betas(prof, 1)[0] == idx


def test_zero_samples_cost_nothing():
    prof = beta_opt.profile_errors(np.zeros((4, 8)), [0.1, 0.2, 0.3], 8)
    assert beta_opt.dp_optimal_betas(prof, 2)[1] == 0.0
    assert beta_opt.brute_force_betas(prof, 2)[1] == 0.0


def test_no_safe_scale_is_reported():
    prof = ErrorProfile(np.array([0.1, 0.2]), np.ones((2, 2)), np.array([[True, True], [False, True]]))
    with pytest.raises(ValueError, match="extend"):
        beta_opt.dp_optimal_betas(prof, 2)
    with pytest.raises(ValueError):
        beta_opt.dp_optimal_betas(prof, 0)


def test_bruteforce_budget():
    prof = ErrorProfile(np.arange(1, 41) / 10, np.ones((1, 40)), np.zeros((1, 40), dtype=bool))
    with pytest.raises(ValueError):
        beta_opt.brute_force_betas(prof, 10, budget=1000)


def test_transition_cost_definition():
    over = np.array([[1, 0, 0], [1, 1, 0]], dtype=bool)
    mse = np.array([[5.0, 1.0, 2.0], [7.0, 6.0, 3.0]])
    cost = beta_opt.transition_costs(ErrorProfile(np.array([1.0, 2.0, 3.0]), mse, over))
    # row 0: virtual predecessor where everything overloads
    assert cost[0, 1:].tolist() == [0.0, 1.0, 5.0]
    assert cost[1, 2] == 1.0 and cost[1, 3] == 5.0 and cost[2, 3] == 3.0


def test_nonmonotone_overload_documented_gap():
    # sample 0 is served at scale 0, overloads at scale 1, and is served again at scale 2;
    # the recursion charges it twice on the path 0 -> 1 -> 2
    over = np.array([[False, True, False], [True, False, False]])
    mse = np.array([[1.0, 9.0, 4.0], [9.0, 1.0, 2.0]])
    prof = ErrorProfile(np.array([1.0, 2.0, 3.0]), mse, over)
    bf_idx, bf_total = beta_opt.brute_force_betas(prof, 3)
    dp_idx, dp_total = beta_opt.dp_optimal_betas(prof, 3)
    assert bf_idx == [0, 1, 2] and bf_total == 2.0
    assert dp_total == beta_opt.first_beta_cost(prof, dp_idx) > bf_total


def test_superset_and_strategy_dominance():
    x = np.random.default_rng(7).standard_normal((4000, 8))
    uni = beta_opt.universe("appendixF", 16)
    small = beta_opt.profile_errors(x, uni[::2], 16)
    big = beta_opt.profile_errors(x, uni, 16)
    for k in (1, 2, 4):
        idx, total = beta_opt.dp_optimal_betas(small, k)
        assert beta_opt.dp_optimal_betas(big, k)[1] <= total + 1e-9
        assert beta_opt.opt_beta_cost(small, idx) <= total


def test_margins():
    assert math.isclose(beta_opt.apply_margin(1.0, "weights", 14), 1.0 + 3 / 14)
    assert math.isclose(beta_opt.apply_margin(2.0, "activations", 10), 2.4)
    assert beta_opt.apply_margin(2.0, "keys", 10**12) - 2.0 < 1e-11
    with pytest.raises(ValueError):
        beta_opt.apply_margin(1.0, "bias", 4)


def test_dp_beats_evenly_spaced_subset():
    # q=16, universe {0.25, ..., 10}/q, k=4
    rng = np.random.default_rng(11)
    prof = beta_opt.profile_errors(rng.standard_normal((1 << 15, 8)), beta_opt.universe("appendixF", 16), 16)
    idx, total = beta_opt.dp_optimal_betas(prof, 4)
    even = [int(np.argmin(np.abs(prof.betas * 16 - t))) for t in (2.5, 5.0, 7.5, 10.0)]
    rmse = math.sqrt(total / prof.n_samples)
    assert rmse <= math.sqrt(beta_opt.first_beta_cost(prof, even) / prof.n_samples)
    assert rmse <= 0.0798 + 0.002


def test_profile_csv():
    prof = beta_opt.profile_errors(np.ones((2, 8)), [0.5, 1.0], 4)
    lines = prof.to_csv().splitlines()
    assert lines[0] == "sample_id,beta,mse,overload"
    assert len(lines) == 5 and lines[1].startswith("0,0.5,")


@given(st.integers(0, 10**6))
def test_select_betas_consistent(seed):
    x = np.random.default_rng(seed).standard_normal((64, 8))
    betas, rmse = beta_opt.select_betas(x, beta_opt.universe("synthetic", 8), 8, 2)
    assert 1 <= len(betas) <= 2 and rmse >= 0
