import numpy as np
import pytest

from voterlab.chain import AbsorbingChain
from voterlab.consensus import instance_library
from voterlab.correlation import (complete_graph_lambda1, eig_bounds, exact_correlation,
                                  lyapunov_residual, lyapunov_solve_noisy,
                                  noisy_exact_correlation, palm_correlation, q_matrix,
                                  twocorr, voter_lyapunov)
from voterlab.errors import DomainError, InsufficientData, UnsupportedMu
from voterlab.model import (bit_table, build_matrix, complete_graph, cycle_graph,
                            path_graph, star_graph, stationary_distribution)
from voterlab.simulate import InitialDistribution, run_extended

from conftest import random_dense

HALF = InitialDistribution.product_bernoulli(0.5)


def brute_palm(A, w, include_final, tmax=3000):
    """Palm ratio by propagating the start law step by step."""
    ch = AbsorbingChain(A)
    n = ch.n
    X = bit_table(n)
    N = 1 << n
    num = np.zeros((n, n))
    length = 0.0
    v = w.copy()
    cons = np.zeros(N, bool)
    cons[[0, N - 1]] = True
    # consensus starts contribute X_0 only
    num += (X * (v * cons)[:, None]).T @ X
    length += v[cons].sum()
    v = np.where(cons, 0.0, v)
    for _ in range(tmax):
        num += (X * v[:, None]).T @ X
        length += v.sum()
        nxt = v @ ch.P
        if include_final:
            num += (X * (nxt * cons)[:, None]).T @ X
            length += nxt[cons].sum()
        v = np.where(cons, 0.0, nxt)
    return num / length


@pytest.mark.parametrize("inc", [False, True])
def test_exact_correlation_vs_propagation(rng, inc):
    A = random_dense(4, rng)
    w = InitialDistribution.product_bernoulli(0.4).pmf(4)
    M = exact_correlation(A, w, inc).M
    assert np.abs(M - brute_palm(A.A, w, inc)).max() < 1e-10


def test_palm_mc_close_to_exact():
    A = build_matrix(cycle_graph(4), "lazy")
    tr = run_extended(A, "sync", HALF, 20000, 3, include_final=True)
    ex = exact_correlation(A, HALF, True)
    assert np.abs(palm_correlation(tr).M - ex.M).max() < 0.01
    with pytest.raises(InsufficientData):
        palm_correlation(run_extended(A, "sync", HALF, 5, 1))


def test_second_moment_eigenvalue():
    for p in (0.2, 0.5, 0.7):
        _, m2 = InitialDistribution.product_bernoulli(p).moments(6)
        assert abs(np.linalg.eigvalsh(m2)[0] - p * (1 - p)) < 1e-12


@pytest.mark.parametrize("p", [0.5, 0.3])
def test_twocorr(p):
    for name, A in instance_library(6):
        mu = InitialDistribution.product_bernoulli(p)
        n = A.n
        pi = stationary_distribution(A).pi
        w = mu.pmf(n)
        Me = exact_correlation(A, w, False)
        Mi = exact_correlation(A, w, True)
        m1, _ = mu.moments(n)
        c0, c1 = mu.consensus_mass(n)
        pred = twocorr(Me.M, Me.window_mean, pi, m1, c0 + c1, pi @ m1 - c1)
        assert np.abs(pred - Mi.M).max() < 1e-10, name


def test_twocorr_no_consensus_mass():
    A = build_matrix(path_graph(4), "lazy")
    mu = InitialDistribution.product_bernoulli(0.5, True)
    pi = stationary_distribution(A).pi
    Me = exact_correlation(A, mu, False)
    Mi = exact_correlation(A, mu, True)
    m1, _ = mu.moments(4)
    assert np.abs(twocorr(Me.M, Me.window_mean, pi, m1) - Mi.M).max() < 1e-12


def test_eiglb():
    for name, A in instance_library(6):
        mu = InitialDistribution.product_bernoulli(0.5, True)
        Me = exact_correlation(A, mu, False)
        _, m2 = mu.moments(A.n)
        assert Me.lambda_min >= np.linalg.eigvalsh(m2)[0] / Me.window_mean - 1e-12


@pytest.mark.parametrize("closed", [True, False])
def test_lyapunov_residual(closed):
    for name, A in instance_library(6):
        r = voter_lyapunov(A, HALF, closed_form=closed)
        assert r.lyapunov_residual <= 1e-8, name


def test_generic_q_other_mu():
    A = build_matrix(star_graph(5), "lazy")
    for mu in (InitialDistribution.uniform_over_transients(),
               InitialDistribution.fixed([1, 0, 0, 1, 0]),
               InitialDistribution.product_bernoulli(0.3, True)):
        assert voter_lyapunov(A, mu, closed_form=False).lyapunov_residual <= 1e-8


def test_closed_form_needs_product_mu():
    A = build_matrix(cycle_graph(4), "lazy")
    ex = exact_correlation(A, HALF, True)
    with pytest.raises(UnsupportedMu):
        q_matrix(A, InitialDistribution.fixed([1, 0, 0, 0]), ex.M, ex.mean, 3.0)


def test_quadratic_form_pi_vanishes():
    for name, A in instance_library(6):
        r = voter_lyapunov(A, HALF)
        pi = stationary_distribution(A).pi
        assert abs(pi @ r.Q @ pi) < 1e-12, name


def test_q_pi_zero_on_k4():
    r = voter_lyapunov(build_matrix(complete_graph(4), "uniform_neighbor"), HALF)
    assert r.extra["q_pi_residual"] <= 1e-8


def test_q_pi_nonzero_for_nonuniform_pi():
    # pi^T Q pi = 0 but Q is indefinite once pi is not uniform
    r = voter_lyapunov(build_matrix(star_graph(4), "lazy"), HALF)
    assert r.extra["q_pi_residual"] > 1e-3 and r.eig_Q[0] < -1e-3


def test_q_localization_complete():
    r = voter_lyapunov(build_matrix(complete_graph(5), "uniform_neighbor"), HALF)
    assert abs(r.eig_Q[0]) < 1e-12
    assert r.eig_Q[1] >= r.extra["lambda2_lower"] - 1e-12


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("p", [0.5, 0.3])
def test_complete_graph_lambda1(n, p):
    A = build_matrix(complete_graph(n), "uniform_neighbor")
    r = voter_lyapunov(A, InitialDistribution.product_bernoulli(p))
    assert abs(complete_graph_lambda1(n, p, r.extra["etau_transient"]) - r.eig_M[0]) < 1e-12


def test_eig_bounds_hold():
    for name, A in instance_library(6):
        r = voter_lyapunov(A, HALF)
        assert r.lambda_min_bounds["holds"], name


def test_eig_bounds_rayleigh():
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    b = eig_bounds(M, np.array([0.5, 0.5]), np.eye(2))
    assert b["rayleigh_pi"] == 3.0 and b["lambda1_M"] == pytest.approx(1.0)


def test_voter_lyapunov_mc():
    A = build_matrix(complete_graph(4), "uniform_neighbor")
    tr = run_extended(A, "sync", HALF, 20000, 5, include_final=True)
    assert voter_lyapunov(A, HALF, trace=tr).lyapunov_residual < 0.02


@pytest.mark.parametrize("eps", [0.05, 0.25, 0.5])
def test_noisy_fixed_point(rng, eps):
    A = random_dense(5, rng)
    sol = lyapunov_solve_noisy(A, eps)
    Mx, mx = noisy_exact_correlation(A, eps)
    assert np.abs(sol.M - Mx).max() < 1e-9
    assert np.allclose(sol.mean, 0.5) and np.allclose(mx, 0.5)
    assert sol.rate <= (1 - 2 * eps) ** 2 + 0.05
    assert sol.lambda_min >= eps ** 2 - 1e-12
    assert np.allclose(np.diag(sol.M), 0.5)


def test_noisy_domain():
    with pytest.raises(DomainError):
        lyapunov_solve_noisy(np.eye(2), 0.0)


def test_lyapunov_residual_zero_for_exact_solution():
    A = np.array([[0.5, 0.5], [0.2, 0.8]])
    M = np.array([[1.0, 0.3], [0.3, 2.0]])
    Q = M - A @ M @ A.T
    assert lyapunov_residual(M, A, Q) == 0.0
