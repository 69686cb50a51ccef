"""Stationary correlation matrices and Lyapunov equations.

M' is the stationary correlation E[X X^T] of the extended process that drops
each cycle's final consensus state, M the one that keeps it.  Both are Palm
ratios E0[sum over window X_t X_t^T] / E0[window length].
"""
from dataclasses import dataclass, field

import numpy as np

from .chain import AbsorbingChain, stationary_pmf, sync_transition
from .errors import DomainError, InsufficientData, NonConvergence, UnsupportedMu
from .model import as_matrix, bit_table, stationary_distribution
from .simulate import InitialDistribution, is_consensus


def _sym(M):
    return 0.5 * (M + M.T)


@dataclass
class PalmCorrelation:
    M: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray
    lambda_min: float
    window_mean: float
    include_final: bool
    cycles: int = None
    mode: str = "mc"

    def to_dict(self):
        return {"M": self.M.tolist(), "mean": self.mean.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "lambda_min": self.lambda_min,
                "window_mean": self.window_mean,
                "include_final": self.include_final, "cycles": self.cycles,
                "mode": self.mode}


def _wrap(M, mean, wlen, inc, cycles, mode):
    M = _sym(M)
    ev = np.linalg.eigvalsh(M)
    return PalmCorrelation(M, mean, ev, float(ev[0]), float(wlen), inc,
                           cycles, mode)


def palm_correlation(trace, include_final=None, min_cycles=100):
    """Monte Carlo Palm estimate of the stationary correlation matrix."""
    inc = trace.include_final if include_final is None else include_final
    if trace.m < min_cycles:
        raise InsufficientData(f"{trace.m} cycles < {min_cycles}")
    W = trace.window_states(inc).astype(np.float64)
    return _wrap(W.T @ W / len(W), W.mean(axis=0), len(W) / trace.m, inc,
                 trace.m, "mc")


def exact_correlation(A, mu, include_final=False, chain=None):
    """Exact Palm correlation from the occupation measure of the 2^n chain."""
    chain = chain or AbsorbingChain(A)
    w = mu.pmf(chain.n) if isinstance(mu, InitialDistribution) else np.asarray(mu)
    M, mean = chain.correlation(w, include_final)
    return _wrap(M, mean, chain.window_length(w, include_final), include_final,
                 None, "exact")


def twocorr(M_excl, etau, pi, start_mean, mu_consensus=0.0, start_one_transient=None):
    """Include-final correlation from the exclude-final one.

    With mu(C) = 0,
        M = (E0[tau] M' + pi^T E0[X_0] 11^T) / (E0[tau] + 1).
    In general the added final states come only from transient starts, so
    the numerator uses E0[pi^T X_0; X_0 not in C] and the denominator
    E0[tau] + 1 - mu(C).
    """
    n = M_excl.shape[0]
    pi = np.asarray(pi)
    c = pi @ start_mean if start_one_transient is None else start_one_transient
    return (etau * M_excl + c * np.ones((n, n))) / (etau + 1 - mu_consensus)


# --------------------------------------------------------------------------
# Lyapunov equation of the voter model

@dataclass
class QMatrix:
    Q: np.ndarray
    eigenvalues: np.ndarray
    lambda2: float
    lambda2_lower: float
    alpha: float
    ev_diag: np.ndarray
    localization: list
    q_pi_residual: float
    closed_form: bool

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


def stationary_variance(A, M, mean):
    """E[V_{a_u}(X)] = a_u^T E[X] - a_u^T M a_u for each u."""
    A = as_matrix(A)
    return A @ mean - np.einsum("uv,vw,uw->u", A, M, A)


def q_matrix(A, mu, M, mean, etau_transient, closed_form=True, pi=None):
    """Q of the Lyapunov equation M = A M A^T + Q (include-final convention).

    ``M`` and ``mean`` are the include-final stationary correlation and mean,
    ``etau_transient`` is E0[tau | X_0 not in C].  With ``closed_form`` and a
    product Bernoulli(p) start, the off-diagonal entries are the constant
    -alpha with alpha = p(1-p) / ((1 - p^n - (1-p)^n) E0[tau] + 1).
    """
    A = as_matrix(A)
    n = A.shape[0]
    pi = stationary_distribution(A).pi if pi is None else np.asarray(pi)
    ev = stationary_variance(A, M, mean)
    if closed_form:
        if not (isinstance(mu, InitialDistribution)
                and mu.kind == "product_bernoulli" and not mu.exclude_consensus):
            raise UnsupportedMu("closed form needs an unconditioned product "
                                "Bernoulli start")
        p = mu.p
        alpha = p * (1 - p) / ((1 - p ** n - (1 - p) ** n) * etau_transient + 1)
        Q = -alpha * (np.ones((n, n)) - np.eye(n)) + np.diag(ev)
    else:
        if not isinstance(mu, InitialDistribution):
            raise UnsupportedMu("generic branch needs an InitialDistribution")
        m1, m2 = mu.moments(n)
        c0, c1 = mu.consensus_mass(n)
        mc = c0 + c1
        if mc < 1:
            # E0[X_0 | X_0 not in C] from the unconditioned mean
            cond = (m1 - c1) / (1 - mc)
        else:
            cond = np.zeros(n)
        coef = c1 + (1 - mc) * (pi @ cond)
        Q = np.diag(ev) + (m2 - coef * np.ones((n, n))) / (
            (1 - mc) * etau_transient + 1)
        alpha = float(-np.mean(Q[~np.eye(n, dtype=bool)]))
    Q = _sym(Q)
    eig = np.linalg.eigvalsh(Q)
    # Q = diag(e) - alpha 11^T with e_u = E[V_u] + alpha: interlacing puts one
    # eigenvalue below min(e) and the rest in [e_i, e_{i+1}]
    e = np.unique(np.round(ev + alpha, 14))
    loc = [[float(e[i]), float(e[i + 1]) if i + 1 < len(e) else float(e[i])]
           for i in range(len(e))]
    return QMatrix(Q, eig, float(eig[1]) if n > 1 else float("nan"),
                   float(ev.min() + alpha), float(alpha), ev, loc,
                   float(np.abs(Q @ pi).max()), closed_form)


def lyapunov_residual(M, A, Q):
    """||M - A M A^T - Q||_F / ||M||_F."""
    A = as_matrix(A)
    R = M - A @ M @ A.T - Q
    return float(np.linalg.norm(R) / np.linalg.norm(M))


@dataclass
class CorrelationAnalysis:
    M: np.ndarray
    include_final: bool
    Q: np.ndarray
    lyapunov_residual: float
    eig_M: np.ndarray
    eig_Q: np.ndarray
    lambda_min_bounds: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def voter_lyapunov(A, mu, trace=None, closed_form=None):
    """Lyapunov check for the voter model, exact (n <= 10) or from a trace."""
    A = as_matrix(A)
    n = A.shape[0]
    pi = stationary_distribution(A).pi
    if closed_form is None:
        closed_form = (mu.kind == "product_bernoulli"
                       and not mu.exclude_consensus)
    if trace is None:
        chain = AbsorbingChain(A)
        w = mu.pmf(n)
        inc = exact_correlation(A, w, True, chain)
        M, mean = inc.M, inc.mean
        wT = w.copy()
        wT[[0, -1]] = 0.0
        et = chain.expected_tau(wT / wT.sum()) if wT.sum() > 0 else 1.0
        lam_excl = exact_correlation(A, w, False, chain).lambda_min
        mode = "exact"
    else:
        pc = palm_correlation(trace, include_final=True)
        M, mean = pc.M, pc.mean
        trans = np.array([not is_consensus(c.states[0]) for c in trace.cycles])
        et = float(trace.taus[trans].mean())
        lam_excl = palm_correlation(trace, include_final=False).lambda_min
        mode = "mc"
    q = q_matrix(A, mu, M, mean, et, closed_form, pi)
    res = lyapunov_residual(M, A, q.Q)
    b = eig_bounds(M, pi, q.Q)
    return CorrelationAnalysis(M, True, q.Q, res, np.linalg.eigvalsh(M),
                               q.eigenvalues, b,
                               {"mode": mode, "etau_transient": et,
                                "alpha": q.alpha,
                                "lambda2_lower": q.lambda2_lower,
                                "q_pi_residual": q.q_pi_residual,
                                "lambda_min_exclude_final": lam_excl})


def eig_bounds(M, pi, Q):
    """R(M; pi), lambda_2(Q), the bound min of the two, and lambda_1(M)."""
    pi = np.asarray(pi)
    r = float(pi @ M @ pi / (pi @ pi))
    l2 = float(np.linalg.eigvalsh(_sym(Q))[1])
    l1 = float(np.linalg.eigvalsh(_sym(M))[0])
    bound = min(r, l2)
    return {"rayleigh_pi": r, "lambda2_Q": l2, "bound": bound, "lambda1_M": l1,
            "holds": bool(bound <= l1 + 1e-12), "slack": l1 - bound}


def complete_graph_lambda1(n, p, etau_transient):
    """lambda_1(M) = a - b for K_n with a_uu = 0 and a_uv = 1/(n-1).

    a - b = (n-1)^2/(n-2) p(1-p) / ((1 - p^n - (1-p)^n) E0[tau] + 1), with M
    the include-final correlation under a product Bernoulli(p) start.
    """
    return (n - 1) ** 2 / (n - 2) * p * (1 - p) / (
        (1 - p ** n - (1 - p) ** n) * etau_transient + 1)


# --------------------------------------------------------------------------
# linear noisy voter model

@dataclass
class NoisySolution:
    M: np.ndarray
    mean: np.ndarray
    iterations: int
    rate: float
    rate_bound: float
    lambda_min: float
    residual: float

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


def noisy_q(A, epsilon, M, mean):
    """Q^eps = E[D(V_{a^eps}(X))] + eps^2 I + eps(1-eps) 11^T, a^eps = (1-2eps) a."""
    Ae = (1 - 2 * epsilon) * as_matrix(A)
    n = Ae.shape[0]
    ev = Ae @ mean - np.einsum("uv,vw,uw->u", Ae, M, Ae)
    return np.diag(ev) + epsilon ** 2 * np.eye(n) + epsilon * (1 - epsilon) * np.ones((n, n))


def lyapunov_solve_noisy(A, epsilon, tol=1e-12, max_iter=10 ** 6):
    """Fixed point of M = A^eps M A^eps^T + Q^eps(M).

    E[X] solves (I - A^eps) m = eps 1, which gives m = 1/2 for every A.
    The iteration contracts at rate (1 - 2 eps)^2.
    """
    A = as_matrix(A)
    if not 0 < epsilon <= 0.5:
        raise DomainError("epsilon must lie in (0, 1/2]")
    n = A.shape[0]
    Ae = (1 - 2 * epsilon) * A
    mean = np.linalg.solve(np.eye(n) - Ae, np.full(n, epsilon))
    M = np.full((n, n), 0.25) + 0.25 * np.eye(n)
    diffs = []
    for it in range(1, max_iter + 1):
        new = _sym(Ae @ M @ Ae.T + noisy_q(A, epsilon, M, mean))
        d = float(np.abs(new - M).max())
        M = new
        diffs.append(d)
        if d <= tol * max(1.0, float(np.abs(M).max())):
            break
    else:
        raise NonConvergence("noisy Lyapunov iteration hit its cap", diffs[-1],
                             {"diffs": diffs[-10:]})
    ratios = [b / a for a, b in zip(diffs[:-1], diffs[1:]) if a > 1e-13]
    rate = float(max(ratios[-5:])) if ratios else 0.0
    res = float(np.linalg.norm(M - Ae @ M @ Ae.T - noisy_q(A, epsilon, M, mean)))
    return NoisySolution(M, mean, it, rate, (1 - 2 * epsilon) ** 2,
                         float(np.linalg.eigvalsh(M)[0]), res)


def noisy_exact_correlation(A, epsilon):
    """E[X X^T] and E[X] under the stationary law of the noisy 2^n chain."""
    A = as_matrix(A)
    n = A.shape[0]
    w = stationary_pmf(sync_transition(A, epsilon))
    X = bit_table(n)
    return (X * w[:, None]).T @ X, w @ X
