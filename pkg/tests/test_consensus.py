from math import e, log

import numpy as np
import pytest

from voterlab.chain import AbsorbingChain, extended_transition, stationary_pmf
from voterlab.consensus import (bound_report, drift_identity_check, empirical_tau_stats,
                                etau_bound, etau_survival_bound, exact_expected_tau,
                                expectation_bound_check, exponential_moment_check,
                                instance_library, lower_bound_check, moment_bound,
                                mu_prefactor, sum_quantile, survival_check, tail_bound)
from voterlab.errors import DomainError, InsufficientData, TooLargeForExact
from voterlab.model import (InteractionMatrix, bit_table, build_matrix, complete_graph,
                            path_graph, phi_A, stationary_distribution)
from voterlab.simulate import InitialDistribution, run_extended

from conftest import random_dense

HALF2 = InteractionMatrix([[0.5, 0.5], [0.5, 0.5]])
K3 = build_matrix(complete_graph(3), "uniform_neighbor")


def tau_pmf(chain, start, tmax):
    """P[tau = t] for t = 1..tmax by explicit matrix powers."""
    v = np.zeros(len(chain.transient))
    v[start - 1] = 1.0
    out = []
    for _ in range(tmax):
        out.append(v @ chain.PTC.sum(axis=1))
        v = v @ chain.PTT
    return np.array(out)


def test_two_vertex_exact():
    assert abs(exact_expected_tau(HALF2, start=[1, 0]).mean - 2) < 1e-12


def test_consensus_start():
    assert exact_expected_tau(K3, start=[1, 1, 1]).mean == 1.0


def test_absorption_equals_pi(rng):
    A = random_dense(6, rng)
    pi = stationary_distribution(A).pi
    r = exact_expected_tau(A, start=0)
    assert np.abs(r.absorption_per_state - bit_table(6) @ pi).max() < 1e-10


def test_too_large():
    with pytest.raises(TooLargeForExact):
        AbsorbingChain(np.full((11, 11), 1 / 11))


def test_expected_tau_vs_series(rng):
    A = random_dense(4, rng)
    ch = AbsorbingChain(A)
    t = np.arange(1, 4001)
    p = tau_pmf(ch, 5, 4000)
    assert abs(p @ t - ch.expected_tau(5)) < 1e-9


def test_moments_vs_series(rng):
    A = random_dense(4, rng)
    ch = AbsorbingChain(A)
    t = np.arange(1, 4001, dtype=float)
    p = tau_pmf(ch, 6, 4000)
    mom = ch.moments(3)[:, 6]
    for k in range(4):
        assert abs(p @ t ** k - mom[k]) < 1e-8 * max(1, mom[k])


def test_exponential_moment_vs_series(rng):
    A = random_dense(4, rng)
    ch = AbsorbingChain(A)
    rho = ch.spectral_radius_transient()
    lam = (1 + rho) / 2
    p = tau_pmf(ch, 3, 400)
    t = np.arange(1, 401)
    assert abs(p @ lam ** (-t.astype(float)) - ch.exponential_moment(lam)[3]) < 1e-8
    assert np.isinf(ch.exponential_moment(rho * 0.999)[3])


def test_survival_vs_pmf(rng):
    ch = AbsorbingChain(random_dense(4, rng))
    p = tau_pmf(ch, 2, 30)
    s = ch.survival(2, 30)
    assert np.allclose(s[1:], 1 - np.cumsum(p), atol=1e-13)


@pytest.mark.parametrize("include_final", [False, True])
def test_occupation_is_extended_stationary_law(rng, include_final):
    A = random_dense(4, rng)
    mu = InitialDistribution.product_bernoulli(0.35)
    w = mu.pmf(4)
    ch = AbsorbingChain(A)
    occ = ch.occupation(w, include_final)
    st = stationary_pmf(extended_transition(A, w, "sync", include_final))
    assert np.abs(occ / occ.sum() - st).max() < 1e-12


def test_bound_formulas():
    phi, ps = 6 / 49, 1 / 8
    assert abs(etau_bound(phi, ps) - 49 / 6 * log(4)) < 1e-12
    assert abs(etau_bound(phi, ps) - 11.3214) < 1e-4
    assert moment_bound(0, phi, ps) == 4.0
    assert abs(moment_bound(2, phi, ps) - 0.5 * (2 / e) ** 2 / phi ** 2 / ps) < 1e-12
    assert abs(sum_quantile(phi, ps, 10, 0.05)
               - (log(4) + log(20) / 10) / phi) < 1e-12


def test_bound_report_k8():
    A = build_matrix(complete_graph(8), "uniform_neighbor")
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi).value
    assert abs(phi - 6 / 49) < 1e-12
    r = bound_report(phi, sd.pi_star, 2.0, 10, 0.05)
    t = np.array(r.tail_grid)[:, 1]
    assert np.all((t > 0) & (t <= 1)) and np.all(np.diff(t) <= 0)
    assert r.sum_quantile_ceiling == int(np.ceil(r.sum_quantile))
    assert r.theta_star == -log(1 - phi)


@pytest.mark.parametrize("args", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, 0.6)])
def test_bound_report_domain(args):
    with pytest.raises(DomainError):
        bound_report(args[0], args[1], 1.0, 1, 0.05)


def test_tail_bound_capped():
    assert tail_bound(0.0, 0.2, 3.0, 5) == 1.0


def test_survival_bound_holds_on_library():
    for name, A in instance_library(6):
        assert survival_check(A, 80)["violations"] == 0, name


def test_survival_etau_bound_dominates():
    for name, A in instance_library(6):
        ch = AbsorbingChain(A)
        sd = stationary_distribution(A)
        phi = phi_A(A, sd.pi).value
        s = bit_table(A.n)[ch.transient] @ sd.pi
        W = s * (1 - s) / (sd.pi_star * (1 - sd.pi_star))
        et = ch.expected_tau_transient()
        b = np.array([etau_survival_bound(phi, w) for w in W])
        assert np.all(et <= b + 1e-9), name


def test_expectation_check_consistent():
    r = expectation_bound_check(K3)
    ch = AbsorbingChain(K3)
    assert abs(r["max_etau"] - ch.expected_tau_transient().max()) < 1e-12
    assert r["violations"] == int(np.sum(ch.expected_tau_transient() > r["bound"]))


def test_exponential_moment_singular_for_complete_graph():
    # the transient block of K_n has spectral radius 1 - phi_A
    r = exponential_moment_check(K3)
    assert abs(r["rho_transient"] - (1 - r["phi"])) < 1e-12


def test_lower_bound_holds():
    for name, A in instance_library(6):
        assert lower_bound_check(A, InitialDistribution.product_bernoulli(0.5, True))["holds"]


def test_mu_prefactor_matches_enumeration(rng):
    A = random_dense(4, rng)
    mu = InitialDistribution.product_bernoulli(0.3, True)
    pi = stationary_distribution(A).pi
    s = bit_table(4) @ pi
    ev = mu.pmf(4) @ (s * (1 - s))
    ps = pi.min()
    assert abs(mu_prefactor(A, mu) - ev / (ps * (1 - ps))) < 1e-12


def test_drift_identity_exact_two_vertices():
    A = InteractionMatrix([[0.7, 0.3], [0.3, 0.7]])
    r = drift_identity_check(A, InitialDistribution.fixed([1, 0]))
    assert r.absolute <= 1e-10


def test_drift_identity_exact_path():
    A = build_matrix(path_graph(3), "lazy")
    r = drift_identity_check(A, InitialDistribution.fixed([1, 0, 0]))
    assert r.absolute <= 1e-10


def test_drift_identity_rejects_consensus_mass():
    with pytest.raises(DomainError):
        drift_identity_check(K3, InitialDistribution.product_bernoulli(0.5))


def test_drift_identity_mc():
    mu = InitialDistribution.product_bernoulli(0.5, exclude_consensus=True)
    tr = run_extended(K3, "sync", mu, 10000, 4, include_final=True)
    assert drift_identity_check(K3, mu, tr).relative <= 0.03
    with pytest.raises(InsufficientData):
        drift_identity_check(K3, mu, run_extended(K3, "sync", mu, 10, 1))


def test_empirical_single_cycle():
    tr = run_extended(K3, "sync", InitialDistribution.fixed([1, 0, 0]), 1, 3)
    assert empirical_tau_stats(tr)["mean"] == tr.cycles[0].tau


def test_k3_mc_matches_exact():
    mu = InitialDistribution.fixed([1, 0, 0])
    tr = run_extended(K3, "sync", mu, 5000, 12)
    ex = exact_expected_tau(K3, start=mu).mean
    assert abs(tr.taus.mean() - ex) < 3 * tr.taus.std() / np.sqrt(tr.m)
