import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from voterlab.errors import DomainError
from voterlab.pathmodel import (PathModel, expected_informative, hitting_prob,
                                hitting_prob_half, hitting_prob_linear, hitting_probs,
                                simulate_birth_death, simulate_path)


def test_half_examples():
    assert hitting_prob_half(5, 3, 1) == 2 / 5
    assert hitting_prob_half(10, 2, 5) == 10 / 17


@pytest.mark.parametrize("n", [2, 3, 7, 15])
def test_half_closed_forms_reproduced(n):
    m = PathModel.half(n)
    for u in range(1, n + 1):
        for k in range(1, n):
            assert abs(hitting_prob(m, u, k) - hitting_prob_half(n, u, k)) < 1e-13


def test_general_p_matches_linear_solve(rng):
    for n in (2, 6, 13, 30):
        for m in (PathModel.default(n), PathModel(tuple(rng.uniform(0.02, 0.98, n)))):
            for u in range(1, n + 1):
                for k in range(1, n):
                    assert abs(hitting_prob(m, u, k) - hitting_prob_linear(m, u, k)) <= 1e-10


def test_log_space_large_n(rng):
    m = PathModel(tuple(rng.uniform(0.01, 0.99, 200)))
    h = hitting_probs(m, 60)
    assert np.all(np.isfinite(h)) and np.all((h >= 0) & (h <= 1))


def test_kk_recursion():
    m = PathModel.default(9)
    for k in range(1, 8):
        q = 1 - m.pu(k + 1)
        rec = (1 + q * hitting_prob(m, k, k + 1)) / (2 - m.pu(k + 1))
        assert abs(hitting_prob(m, k, k) - rec) < 1e-14


def test_boundary_k_n_minus_one():
    n = 7
    m = PathModel.default(n)
    # vertex n only interacts informatively while Y = n-1
    assert abs(hitting_prob(m, n, n - 1) - hitting_prob_linear(m, n, n - 1)) < 1e-14


def test_two_vertices():
    # all p = 1/2: each vertex is informative with probability 2/3
    assert abs(expected_informative(2, 1).exact - 4 / 3) < 1e-12
    # p_1 = 1, p_2 = 0: the first step ends the run and one vertex was active
    assert abs(hitting_probs(PathModel.default(2), 1).sum() - 1.0) < 1e-12


def test_expected_informative_harmonic_form():
    for n, k in [(10, 3), (40, 1), (40, 39), (100, 5)]:
        e = expected_informative(n, k)
        assert abs(e.exact - hitting_probs(PathModel.half(n), k).sum()) < 1e-9
        assert e.exact <= n


def test_asymptotic_band():
    gaps = [expected_informative(n, k).gap for n in (50, 100, 400, 1600)
            for k in (1, 5, n // 4, n // 2)]
    assert max(gaps) - min(gaps) < 2.0


def test_h_n_k():
    n, k = 50, 3
    assert abs(hitting_prob_half(n, n, k) - 2 * n / (2 * n - 1) * k / n) < 1e-14


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 30))
def test_monotone_away_from_boundary(n):
    m = PathModel.half(n)
    for k in range(1, n):
        h = hitting_probs(m, k)
        assert np.all(np.diff(h[k:]) <= 1e-15)            # u > k
        assert np.all(np.diff(h[:k - 1]) >= -1e-15)       # u < k


def test_domain():
    with pytest.raises(DomainError):
        hitting_prob(PathModel.default(4), 1, 4)
    with pytest.raises(DomainError):
        PathModel((1.0, 0.0, 0.5))


def test_monte_carlo_frequencies():
    m = PathModel.default(8)
    sim = simulate_path(m, 3, 20000, 4)
    h = hitting_probs(m, 3)
    assert np.all(np.abs(sim.frequency - h) <= 4 * sim.stderr)
    assert abs(sim.N.mean() - h.sum()) < 4 * sim.N.std() / np.sqrt(sim.reps)


def test_birth_death_reduction_ks():
    m = PathModel.default(8)
    a = simulate_path(m, 3, 5000, 1).tau
    b = simulate_birth_death(m, 3, 5000, 2)
    assert ks_2samp(a, b).pvalue > 0.01


def test_simulation_block_independent():
    m = PathModel.default(6)
    a = simulate_path(m, 2, 300, 9, block=100)
    b = simulate_path(m, 2, 300, 9, block=100)
    assert np.array_equal(a.N, b.N)
