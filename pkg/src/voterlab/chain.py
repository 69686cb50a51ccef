"""Exact 2^n-state Markov chains of the voter dynamics.

States are bitmasks 0..2^n-1 (bit u is x_u).  The consensus states are 0 and
2^n - 1; everything else is transient.  Used as brute-force oracles for the
consensus-time, correlation and drift identities on small n.
"""
from math import comb

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DomainError, SingularSystem, TooLargeForExact
from .model import as_matrix, bit_table

MAX_EXACT_CHAIN = 10


def _check_n(n):
    if n > MAX_EXACT_CHAIN:
        raise TooLargeForExact(f"n={n} > {MAX_EXACT_CHAIN} for the exact chain")


def sync_transition(A, epsilon=0.0):
    """P[x, y] = prod_u q_u^{y_u} (1 - q_u)^{1 - y_u}, q = eps + (1-2 eps) A x."""
    A = as_matrix(A)
    n = A.shape[0]
    _check_n(n)
    X = bit_table(n)
    Q = epsilon + (1 - 2 * epsilon) * (X @ A.T)
    P = np.ones((1 << n, 1 << n))
    for u in range(n):
        y = X[:, u]
        P *= np.where(y[None, :] == 1, Q[:, u:u + 1], 1 - Q[:, u:u + 1])
    return P


def async_transition(A, epsilon=0.0):
    """One uniformly chosen vertex resamples its state."""
    A = as_matrix(A)
    n = A.shape[0]
    _check_n(n)
    N = 1 << n
    X = bit_table(n)
    Q = epsilon + (1 - 2 * epsilon) * (X @ A.T)
    P = np.zeros((N, N))
    idx = np.arange(N)
    for u in range(n):
        on = idx | (1 << u)
        off = idx & ~(1 << u)
        np.add.at(P, (idx, on), Q[:, u] / n)
        np.add.at(P, (idx, off), (1 - Q[:, u]) / n)
    return P


def transition_matrix(A, variant="sync", epsilon=0.0):
    if variant == "sync":
        return sync_transition(A, epsilon)
    if variant == "async":
        return async_transition(A, epsilon)
    raise DomainError(f"unknown variant {variant!r}")


class AbsorbingChain:
    """Voter chain on {0,1}^n absorbed at the two consensus states.

    ``tau`` counts steps from time 0 to the first t >= 1 with X_t in C, so a
    consensus start has tau = 1.
    """

    def __init__(self, A, variant="sync"):
        self.A = as_matrix(A)
        self.n = self.A.shape[0]
        self.variant = variant
        self.P = transition_matrix(self.A, variant)
        N = 1 << self.n
        self.transient = np.arange(1, N - 1)
        self.PTT = self.P[np.ix_(self.transient, self.transient)]
        self.PTC = self.P[np.ix_(self.transient, [0, N - 1])]
        try:
            self._lu = lu_factor(np.eye(len(self.transient)) - self.PTT,
                                 check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystem(str(exc)) from exc
        if not np.all(np.isfinite(self._lu[0])) or np.any(
                np.abs(np.diag(self._lu[0])) < 1e-14):
            raise SingularSystem("I - P_TT is singular; chain never absorbs")

    def solve(self, b, trans=0):
        return lu_solve(self._lu, b, trans=trans)

    def expected_tau_transient(self):
        """E[tau | X_0 = x] for every transient x (indexed like ``transient``)."""
        return self.solve(np.ones(len(self.transient)))

    def expected_tau(self, start):
        """Exact E[tau] from a bitmask, a state vector or a full pmf over 2^n."""
        w = self.start_pmf(start)
        full = np.ones(1 << self.n)
        full[self.transient] = self.expected_tau_transient()
        return float(w @ full)

    def absorption_one(self):
        """P[absorbed at all-ones | X_0 = x] for every state."""
        h = np.zeros(1 << self.n)
        h[-1] = 1.0
        h[self.transient] = self.solve(self.PTC[:, 1])
        # consensus starts: the state is already absorbed
        return h

    def start_pmf(self, start):
        N = 1 << self.n
        if np.isscalar(start) or (np.ndim(start) == 0):
            w = np.zeros(N)
            w[int(start)] = 1.0
            return w
        start = np.asarray(start, dtype=np.float64)
        if start.shape == (self.n,):
            w = np.zeros(N)
            w[int(sum(int(b) << u for u, b in enumerate(start)))] = 1.0
            return w
        if start.shape == (N,):
            return start
        raise DomainError("start must be a mask, a state or a pmf over 2^n")

    def occupation(self, start, include_final=False):
        """Expected number of visits to each state in one cycle's window.

        Exclude-final windows cover t = 0..tau-1.  Include-final windows add
        the absorbing state X_tau, except that a cycle starting in C counts
        its start state once (restart convention of the extended process).
        """
        w = self.start_pmf(start)
        N = 1 << self.n
        occ = np.zeros(N)
        occ[[0, N - 1]] += w[[0, N - 1]]
        wT = w[self.transient]
        # visits to transient states from a transient start: wT N
        occT = self.solve(wT, trans=1)
        occ[self.transient] += occT
        if include_final:
            occ[[0, N - 1]] += occT @ self.PTC
        return occ

    def window_length(self, start, include_final=False):
        return float(self.occupation(start, include_final).sum())

    def correlation(self, start, include_final=False):
        """Palm ratio E0[sum_window X X^T] / E0[window length] and its mean."""
        occ = self.occupation(start, include_final)
        X = bit_table(self.n)
        tot = occ.sum()
        M = (X * occ[:, None]).T @ X / tot
        return M, occ @ X / tot

    def spectral_radius_transient(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.PTT))))

    def exponential_moment(self, lam):
        """g(x) = E[lam^{-tau} | X_0 = x] for every state.

        Finite only when the spectral radius of P_TT is below ``lam``;
        transient entries are +inf otherwise.
        """
        z = 1.0 / lam
        rho = self.spectral_radius_transient()
        N = 1 << self.n
        g = np.full(N, z)
        if rho * z >= 1 - 1e-10:
            g[self.transient] = np.inf
            return g
        T = len(self.transient)
        M = np.eye(T) - z * self.PTT
        g[self.transient] = np.linalg.solve(M, z * self.PTC.sum(axis=1))
        return g

    def moments(self, kmax):
        """E[tau^k | x] for k = 0..kmax and every state (consensus rows give 1)."""
        out = np.ones((kmax + 1, 1 << self.n))
        out[:, self.transient] = self._raw_moments(kmax)
        return out

    def _raw_moments(self, kmax):
        """Raw moments E[tau^k | x] for transient x.

        With tau = 1 + tau'(X_1) and tau'(y) = 0 for y in C,
        m_k = 1 + sum_{j=1..k} C(k, j) P_TT m_j, and the j = k term moves to
        the left-hand side.
        """
        T = len(self.transient)
        m = [np.ones(T)]
        for k in range(1, kmax + 1):
            rhs = np.ones(T)
            for j in range(1, k):
                rhs += comb(k, j) * (self.PTT @ m[j])
            m.append(self.solve(rhs))
        return np.array(m)

    def survival(self, start, tmax):
        """P[tau > t] for t = 0..tmax."""
        w = self.start_pmf(start)
        v = w[self.transient].copy()
        out = np.empty(tmax + 1)
        out[0] = 1.0
        for t in range(1, tmax + 1):
            v = v @ self.PTT
            out[t] = v.sum()
        return out


def stationary_pmf(P):
    """Stationary law of an ergodic transition matrix by a dense solve."""
    N = P.shape[0]
    M = P.T - np.eye(N)
    M[-1, :] = 1.0
    b = np.zeros(N)
    b[-1] = 1.0
    return np.linalg.solve(M, b)


def extended_transition(A, mu, variant="sync", include_final=True):
    """Transition matrix of the extended process that restarts from ``mu``.

    With ``include_final`` the consensus states are visited and restart on
    the next step; otherwise the restart is folded into the absorbing step,
    so consensus states are only visited when ``mu`` charges them.
    """
    P = transition_matrix(A, variant).copy()
    mu = np.asarray(mu, dtype=np.float64)
    N = P.shape[0]
    if include_final:
        P[0] = mu
        P[N - 1] = mu
        return P
    ext = P.copy()
    absorb = P[:, 0] + P[:, N - 1]
    ext[:, 0] = 0.0
    ext[:, N - 1] = 0.0
    ext += absorb[:, None] * mu[None, :]
    ext[0] = mu
    ext[N - 1] = mu
    return ext
