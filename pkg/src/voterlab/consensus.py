"""Consensus-time bounds, exact expected consensus times and their checks."""
from dataclasses import dataclass, field
from math import ceil, e, exp, log

import numpy as np

from .chain import AbsorbingChain
from .errors import DomainError, InsufficientData
from .model import (as_matrix, bit_table, build_matrix, complete_graph,
                    cycle_graph, path_graph, phi_A, star_graph, barbell_graph,
                    stationary_distribution)
from .simulate import InitialDistribution


def theta_star(phi):
    return -log(1 - phi)


def etau_bound(phi, pi_star):
    """(1/phi) log(1/(2 pi*))."""
    return log(1 / (2 * pi_star)) / phi


def moment_bound(k, phi, pi_star):
    """(1/2) (k/e)^k phi^{-k} / pi*, with 0^0 = 1."""
    base = 1.0 if k == 0 else (k / e) ** k
    return 0.5 * base * phi ** (-k) / pi_star


def tail_bound(a, phi, prefactor, m):
    """(prefactor (1-phi)^a)^m, capped at 1."""
    a = np.asarray(a, dtype=np.float64)
    raw = m * (log(prefactor) + a * log(1 - phi))
    return np.minimum(1.0, np.exp(raw))


def sum_quantile(phi, pi_star, m, delta):
    """(1/phi) (log(1/(2 pi*)) + (1/m) log(1/delta))."""
    return (log(1 / (2 * pi_star)) + log(1 / delta) / m) / phi


def survival_bound(t, phi, weight):
    """P[tau > t | X_0 = x] <= min(1, W (1-phi)^t) with W = V_pi(x)/min V_pi.

    Follows from E[V_pi(X_{t+1}) | X_t] <= (1 - phi) V_pi(X_t) off C.
    """
    t = np.asarray(t, dtype=np.float64)
    return np.minimum(1.0, weight * (1 - phi) ** t)


def etau_survival_bound(phi, weight):
    """sum_{t>=0} min(1, W (1-phi)^t), an upper bound on E[tau | x]."""
    if weight <= 1:
        return weight / phi
    t0 = int(ceil(log(weight) / -log(1 - phi)))
    return t0 + weight * (1 - phi) ** t0 / phi


def mu_prefactor(A, mu, pi=None):
    """E0[V_pi(X_0)] / min_{z not in C} V_pi(z).

    The minimum over transient z of s(1-s), s = pi^T z, is pi*(1 - pi*),
    attained by the singleton of the smallest pi entry.  The numerator is
    pi^T E[X_0] - pi^T E[X_0 X_0^T] pi.
    """
    A = as_matrix(A)
    pi = stationary_distribution(A).pi if pi is None else np.asarray(pi)
    ps = pi.min()
    if mu is None:
        return 1 / (2 * ps)
    m1, m2 = mu.moments(A.shape[0])
    return float((pi @ m1 - pi @ m2 @ pi) / (ps * (1 - ps)))


@dataclass
class BoundReport:
    phi_A: float
    pi_star: float
    theta_star: float
    etau_bound: float
    moment_bounds: dict
    prefactor: float
    m: int
    delta: float
    sum_quantile: float
    sum_quantile_ceiling: int
    tail_grid: list = field(default_factory=list)
    empirical: dict = None
    etau_survival_bound: float = None

    def tail(self, a):
        return tail_bound(a, self.phi_A, self.prefactor, self.m)

    def to_dict(self):
        d = dict(self.__dict__)
        d["moment_bounds"] = {str(k): v for k, v in self.moment_bounds.items()}
        return d


def bound_report(phi, pi_star, prefactor, m, delta, k_list=(0, 1, 2, 3),
                 tail_points=None):
    """Closed-form consensus-time bounds for given Phi_A and pi*."""
    if not 0 < phi < 1:
        raise DomainError("phi_A must lie in (0, 1)")
    if not 0 < pi_star <= 0.5:
        raise DomainError("pi* must lie in (0, 1/2]")
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0, 1]")
    if m < 1 or prefactor <= 0:
        raise DomainError("need m >= 1 and a positive prefactor")
    q = sum_quantile(phi, pi_star, m, delta)
    if tail_points is None:
        tail_points = np.linspace(0, 3 * q, 31)
    tails = tail_bound(tail_points, phi, prefactor, m)
    return BoundReport(
        phi, pi_star, theta_star(phi), etau_bound(phi, pi_star),
        {int(k): moment_bound(k, phi, pi_star) for k in k_list},
        prefactor, int(m), delta, q, int(ceil(q)),
        [[float(a), float(b)] for a, b in zip(tail_points, tails)],
        etau_survival_bound=etau_survival_bound(phi, 0.25 / (pi_star * (1 - pi_star))))


# --------------------------------------------------------------------------
# exact consensus times

@dataclass
class ExactTau:
    mean: float
    absorption_one: float
    per_state: np.ndarray
    absorption_per_state: np.ndarray


def exact_expected_tau(A, variant="sync", start=None, chain=None):
    """Exact E[tau] and P[absorbed at all-ones] via the fundamental matrix.

    ``start`` may be a 0/1 state, a bitmask, an InitialDistribution or a pmf
    over the 2^n states.
    """
    chain = chain or AbsorbingChain(A, variant)
    if isinstance(start, InitialDistribution):
        w = start.pmf(chain.n)
    else:
        w = chain.start_pmf(start)
    per = np.ones(1 << chain.n)
    per[chain.transient] = chain.expected_tau_transient()
    h = chain.absorption_one()
    return ExactTau(float(w @ per), float(w @ h), per, h)


def expectation_bound_check(A, variant="sync", chain=None):
    """Largest exact E[tau | x] over transient x against (1/phi) log(1/(2 pi*)).

    The async variant uses Phi'_A.
    """
    A = as_matrix(A)
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi, variant).value
    chain = chain or AbsorbingChain(A, variant)
    et = chain.expected_tau_transient()
    b = etau_bound(phi, sd.pi_star) if phi > 0 else np.inf
    return {"phi": phi, "pi_star": sd.pi_star, "bound": b,
            "max_etau": float(et.max()),
            "violations": int(np.sum(et > b * (1 + 1e-12))),
            "starts": len(et)}


def exponential_moment_check(A, chain=None):
    """Exact E[(1-phi)^{-tau} | x] against V_pi(x) / min_{z not in C} V_pi(z)."""
    A = as_matrix(A)
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi).value
    chain = chain or AbsorbingChain(A)
    g = chain.exponential_moment(1 - phi)[chain.transient]
    s = bit_table(chain.n)[chain.transient] @ sd.pi
    rhs = s * (1 - s) / (sd.pi_star * (1 - sd.pi_star))
    return {"phi": phi, "rho_transient": chain.spectral_radius_transient(),
            "max_ratio": float(np.max(g / rhs)),
            "violations": int(np.sum(g > rhs * (1 + 1e-12))),
            "starts": len(g)}


def survival_check(A, tmax=200, chain=None):
    """Exact P[tau > t | x] against min(1, W(x)(1-phi)^t) for all transient x."""
    A = as_matrix(A)
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi).value
    chain = chain or AbsorbingChain(A)
    X = bit_table(chain.n)[chain.transient]
    s = X @ sd.pi
    W = s * (1 - s) / (sd.pi_star * (1 - sd.pi_star))
    v = np.eye(len(chain.transient))
    t = np.arange(tmax + 1)
    surv = np.empty((len(W), tmax + 1))
    surv[:, 0] = 1.0
    for k in range(1, tmax + 1):
        v = v @ chain.PTT if k > 1 else chain.PTT.copy()
        surv[:, k] = v.sum(axis=1)
    bound = np.minimum(1.0, W[:, None] * (1 - phi) ** t[None, :])
    worst = float(np.max(surv - bound))
    return {"phi": phi, "max_excess": worst,
            "violations": int(np.sum(surv > bound + 1e-12))}


def lower_bound_check(A, mu, chain=None):
    """E0[tau] >= 4 E0[V_pi(X_0)] / ||pi||^2 - 1."""
    A = as_matrix(A)
    pi = stationary_distribution(A).pi
    chain = chain or AbsorbingChain(A)
    w = mu.pmf(chain.n)
    et = exact_expected_tau(A, "sync", w, chain).mean
    X = bit_table(chain.n)
    s = X @ pi
    ev = w @ (s * (1 - s))
    lb = 4 * ev / (pi @ pi) - 1
    return {"etau": et, "lower": float(lb), "holds": bool(et >= lb - 1e-12)}


# --------------------------------------------------------------------------
# drift identity

@dataclass
class DriftResidual:
    lhs: float
    rhs: float
    absolute: float
    relative: float
    mode: str


def drift_identity_check(A, mu, trace=None, min_cycles=100):
    """(E0[tau] + 1) sum_u pi_u^2 E[V_{a_u}(X)] - E0[V_pi(X_0)].

    The stationary expectation E[.] is for the extended process that keeps
    final consensus states, written through the Palm inversion formula.
    Exact for n <= 10 when ``trace`` is None; Monte Carlo otherwise.
    """
    A = as_matrix(A)
    n = A.shape[0]
    pi = stationary_distribution(A).pi
    p2 = pi ** 2
    if trace is None:
        chain = AbsorbingChain(A)
        w = mu.pmf(n) if isinstance(mu, InitialDistribution) else np.asarray(mu)
        if w[0] + w[-1] > 0:
            raise DomainError("drift identity needs mu(C) = 0")
        et = chain.expected_tau(w)
        occ = chain.occupation(w, include_final=True)
        X = bit_table(n)
        Q = X @ A.T
        ev = (occ / occ.sum()) @ (Q * (1 - Q) @ p2)
        s = X @ pi
        rhs = float(w @ (s * (1 - s)))
        lhs = float((et + 1) * ev)
        mode = "exact"
    else:
        if trace.m < min_cycles:
            raise InsufficientData(f"{trace.m} cycles < {min_cycles}")
        tot_v = 0.0
        tot_len = 0
        for c in trace.cycles:
            W = c.window(include_final=True).astype(np.float64)
            Q = W @ A.T
            tot_v += float(np.sum(Q * (1 - Q) @ p2))
            tot_len += len(W)
        ev = tot_v / tot_len
        et = trace.taus.mean()
        S = trace.starts.astype(np.float64) @ pi
        rhs = float(np.mean(S * (1 - S)))
        lhs = float((et + 1) * ev)
        mode = "mc"
    diff = lhs - rhs
    return DriftResidual(lhs, rhs, abs(diff), abs(diff) / abs(rhs), mode)


# --------------------------------------------------------------------------
# empirical summaries

def empirical_tau_stats(trace, quantiles=(0.5, 0.9, 0.95, 0.99), kmax=3):
    """Mean, variance, max, empirical quantiles and low moments of tau."""
    t = trace.taus.astype(np.float64)
    if len(t) == 0:
        raise DomainError("empty trace")
    return {
        "m": int(len(t)),
        "mean": float(t.mean()),
        "var": float(t.var()),
        "max": int(t.max()),
        "quantiles": {str(q): float(np.quantile(t, q, method="inverted_cdf"))
                      for q in quantiles},
        "moments": {str(k): float(np.mean(t ** k)) for k in range(1, kmax + 1)},
        "absorbed_one": float(np.mean(trace.absorbed == 1)),
    }


def sum_exceedance(taus, m, level):
    """Fraction of consecutive blocks of m cycles whose mean tau exceeds level."""
    taus = np.asarray(taus, dtype=np.float64)
    blocks = taus[:len(taus) // m * m].reshape(-1, m).mean(axis=1)
    return float(np.mean(blocks > level)), blocks


# --------------------------------------------------------------------------
# instance library

def instance_library(max_n=10):
    """Named small instances: complete graphs with a_uv = 1/(n-1), lazy
    matrices on cycles, paths, stars and barbells."""
    out = []
    for n in range(3, min(8, max_n) + 1):
        out.append((f"K{n}", build_matrix(complete_graph(n), "uniform_neighbor")))
    for n in range(3, min(10, max_n) + 1):
        out.append((f"C{n}-lazy", build_matrix(cycle_graph(n), "lazy")))
    for n in range(3, min(8, max_n) + 1):
        out.append((f"P{n}-lazy", build_matrix(path_graph(n), "lazy")))
    for n in (4, 6):
        if n <= max_n:
            out.append((f"star{n}-lazy", build_matrix(star_graph(n), "lazy")))
    if max_n >= 6:
        out.append(("barbell6-lazy", build_matrix(barbell_graph(6), "lazy")))
    return out
