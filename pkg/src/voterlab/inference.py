"""Regularized maximum-likelihood estimation of the interaction matrix.

The log-likelihood of a trace under a candidate A (rows nonnegative, row sums
at most one) is

    l(A) = - sum_i sum_{t < tau_i} sum_u H(X_{t+1,u}, a_u^T X_t)

with H the Bernoulli cross-entropy.  For asynchronous traces only the active
vertex of each step contributes.  The initial-state term log mu(X_0) does not
depend on A and is left out.
"""
from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np

from .errors import DomainError
from .model import as_matrix, phi_A, stationary_distribution

SNAP = 1e-12


# --------------------------------------------------------------------------
# data

@dataclass
class TransitionData:
    """Distinct (X_t, X_{t+1}) pairs with multiplicities.

    ``active`` is an (N, n) 0/1 matrix marking which vertices' outcomes
    enter the likelihood for each pair: all of them for synchronous traces,
    only I_t for asynchronous ones.
    """
    X: np.ndarray
    Y: np.ndarray
    active: np.ndarray
    weight: np.ndarray

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def steps(self):
        return float(self.weight.sum())


def transition_data(trace):
    """Collapse a trace (or an (X, Y, events) triple) into TransitionData."""
    if isinstance(trace, TransitionData):
        return trace
    if isinstance(trace, tuple):
        X, Y, ev = trace
    else:
        X, Y, ev = trace.transitions()
    X = np.asarray(X, dtype=np.uint8)
    Y = np.asarray(Y, dtype=np.uint8)
    n = X.shape[1]
    if len(X) == 0:
        z = np.zeros((0, n))
        return TransitionData(z, z, z, np.zeros(0))
    if ev is None:
        key = np.concatenate([X, Y], axis=1)
    else:
        key = np.concatenate([X, Y, np.asarray(ev)[:, None].astype(np.uint8)],
                             axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    Xu = uniq[:, :n].astype(np.float64)
    Yu = uniq[:, n:2 * n].astype(np.float64)
    if ev is None:
        act = np.ones_like(Xu)
    else:
        act = np.zeros_like(Xu)
        act[np.arange(len(uniq)), uniq[:, 2 * n].astype(int)] = 1.0
    return TransitionData(Xu, Yu, act, counts.astype(np.float64))


def _snap(Q):
    return np.where(Q > 1 - SNAP, 1.0, np.where(Q < SNAP, 0.0, Q))


# --------------------------------------------------------------------------
# likelihood and derivatives

@dataclass
class LogLikelihood:
    value: float
    clip_count: int


def log_likelihood(A, trace, clip=1e-6):
    """l(A; X) and the number of clipped (impossible) observations.

    Degenerate predictions q in {0, 1} that agree with the outcome add 0.
    When they contradict it, q is clipped to [clip, 1 - clip] inside the log
    and the event is counted.
    """
    d = transition_data(trace)
    A = as_matrix(A)
    Q = _snap(d.X @ A.T)
    w = d.active * d.weight[:, None]
    bad = ((Q == 0) & (d.Y == 1)) | ((Q == 1) & (d.Y == 0))
    Qc = np.where(bad, np.clip(Q, clip, 1 - clip), Q)
    with np.errstate(divide="ignore"):
        ll = np.where(d.Y == 1, np.log(Qc), np.log1p(-Qc))
    ll = np.where(w > 0, ll, 0.0)
    return LogLikelihood(float(np.sum(w * ll)), int(np.sum(w * bad)))


def informative_mask(A, d):
    """(pair, vertex) entries with 0 < a_u^T x < 1 that enter the likelihood."""
    Q = _snap(d.X @ as_matrix(A).T)
    return (Q > 0) & (Q < 1) & (d.active > 0), Q


def gradient(A, trace, full=False):
    """Gradient of l(A) restricted to the informative steps T_u.

    d l / d a_uv = sum_{t in T_u} (y/q - (1-y)/(1-q)) x_v.

    With ``full`` the degenerate steps whose prediction q in {0, 1} agrees
    with the outcome are added through their one-sided derivatives (+1 for
    q = y = 1, -1 for q = y = 0).  This is the slope the optimizer sees when
    it moves a row off the boundary, e.g. below a unit row sum.
    """
    d = transition_data(trace)
    inf, Q = informative_mask(A, d)
    Qs = np.where(inf, Q, 0.5)
    g = np.where(inf, d.Y / Qs - (1 - d.Y) / (1 - Qs), 0.0)
    if full:
        act = d.active > 0
        g = g + np.where(act & (Q == 1) & (d.Y == 1), 1.0, 0.0)
        g = g - np.where(act & (Q == 0) & (d.Y == 0), 1.0, 0.0)
    g = g * d.weight[:, None]
    return g.T @ d.X


def gradient_hessian(A, trace):
    """Gradient of l(A) and the Hessian blocks of -l(A).

    The Hessian of -l is block diagonal over rows; block u is
    sum_{t in T_u} phi_u X_t X_t^T with phi = y/q^2 + (1-y)/(1-q)^2.
    Returned as an (n, n, n) array indexed [u, v, w].
    """
    d = transition_data(trace)
    inf, Q = informative_mask(A, d)
    Qs = np.where(inf, Q, 0.5)
    g = np.where(inf, d.Y / Qs - (1 - d.Y) / (1 - Qs), 0.0) * d.weight[:, None]
    ph = np.where(inf, d.Y / Qs ** 2 + (1 - d.Y) / (1 - Qs) ** 2, 0.0)
    ph = ph * d.weight[:, None]
    H = np.einsum("tu,tv,tw->uvw", ph, d.X, d.X)
    return g.T @ d.X, H


def h_delta(Delta, trace):
    """sum_i sum_{t < tau_i} sum_u (Delta_u^T X_t)^2 over exclude-final windows."""
    Delta = np.asarray(Delta, dtype=np.float64)
    if hasattr(trace, "window_states"):
        W = trace.window_states(include_final=False).astype(np.float64)
    else:
        W = np.asarray(trace, dtype=np.float64)
    return float(np.sum((W @ Delta.T) ** 2))


# --------------------------------------------------------------------------
# projections

def project_capped_simplex(v):
    """Euclidean projection of each row of v onto {a >= 0, sum(a) <= 1}."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    out = np.maximum(v, 0.0)
    over = out.sum(axis=1) > 1
    if np.any(over):
        V = v[over]
        U = -np.sort(-V, axis=1)
        css = np.cumsum(U, axis=1) - 1
        k = np.arange(1, V.shape[1] + 1)
        cond = U - css / k > 0
        r = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        theta = css[np.arange(len(V)), r] / (r + 1)
        out[over] = np.maximum(V - theta[:, None], 0.0)
    return out


def prox_step(V, step, lam, mask=None):
    """prox of step*lam*||A||_{1,1} + indicator of the feasible set.

    On the nonnegative orthant the l1 term is linear, so the prox is the
    projection of V - step*lam.  Entries outside ``mask`` are fixed at 0.
    """
    W = np.asarray(V, dtype=np.float64) - step * lam
    if mask is None:
        return project_capped_simplex(W)
    out = np.zeros_like(W)
    for u in range(W.shape[0]):
        idx = np.nonzero(mask[u])[0]
        if len(idx):
            out[u, idx] = project_capped_simplex(W[u, idx])[0]
    return out


# --------------------------------------------------------------------------
# estimator

@dataclass
class LossConfig:
    lambda_m: float = 0.0
    clip: float = 1e-6
    support: np.ndarray = None
    max_iters: int = 5000
    tol: float = 1e-10
    xtol: float = 1e-8
    step0: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.lambda_m) or self.lambda_m < 0:
            raise DomainError("lambda_m must be finite and >= 0")
        if not 0 < self.clip < 0.5:
            raise DomainError("clip must lie in (0, 1/2)")
        if self.support is not None:
            self.support = np.asarray(self.support, dtype=bool)


@dataclass
class EstimationResult:
    A_hat: np.ndarray
    lambda_m: float
    objective: list
    informative_counts: np.ndarray
    identifiable: np.ndarray
    iterations: int
    converged: bool
    clip_count: int
    frob_error: float = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "A_hat": self.A_hat.tolist(),
            "lambda_m": self.lambda_m,
            "objective": list(map(float, self.objective)),
            "informative_counts": self.informative_counts.tolist(),
            "identifiable": self.identifiable.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "clip_count": self.clip_count,
            "frob_error": self.frob_error,
            "diagnostics": self.diagnostics,
        }


def default_matrix(n, support=None):
    """Uniform rows over the declared support, else over off-diagonal entries."""
    S = ~np.eye(n, dtype=bool) if support is None else np.asarray(support, bool)
    cnt = S.sum(axis=1, keepdims=True)
    return np.where(S, 1.0 / np.maximum(cnt, 1), 0.0)


def informative_counts(d, support=None):
    """Per-row number of steps whose state is mixed on the row's support.

    Without a declared support every vertex counts, so any transient state is
    informative.  These are the only steps that carry information on row u
    under every candidate supported on S_u.
    """
    n = d.n
    S = np.ones((n, n), bool) if support is None else np.asarray(support, bool)
    k = d.X @ S.T.astype(float)
    mixed = (k > 0) & (k < S.sum(axis=1)[None, :])
    return ((mixed & (d.active > 0)) * d.weight[:, None]).sum(axis=0)


def _objective(A, d, lam, clip):
    ll = log_likelihood(A, d, clip)
    return -ll.value + lam * A.sum(), ll.clip_count


def estimate(trace, config=None, A_star=None):
    """Proximal projected gradient on -l(A) + lambda_m ||A||_{1,1}.

    The feasible set is {A >= 0, row sums <= 1}, optionally restricted to a
    known support.  Steps are chosen by backtracking on the smooth part and
    accepted only if the full objective does not increase.  Rows without
    informative steps are set to the default row and flagged.
    """
    config = config or LossConfig()
    d = transition_data(trace)
    n = d.n
    mask = config.support
    lam = config.lambda_m
    counts = informative_counts(d, mask)
    ident = counts > 0
    A = default_matrix(n, mask)
    # identifiable rows start strictly inside the feasible set, where no
    # observation has a degenerate prediction
    S = np.ones((n, n), bool) if mask is None else mask
    A[ident] = (S / S.sum(axis=1, keepdims=True))[ident]
    free = np.ones((n, n), bool) if mask is None else mask.copy()
    free[~ident] = False
    fval, clips = _objective(A, d, lam, config.clip)
    hist = [fval]
    step = config.step0
    converged = False
    it = 0
    if not ident.any() or d.steps == 0:
        converged = True
    while not converged and it < config.max_iters:
        it += 1
        f_smooth = fval - lam * A.sum()
        G = -gradient(A, d, full=True)
        accepted = False
        while step >= 1e-20:
            B = prox_step(A - step * G, step, lam, free)
            B[~ident] = A[~ident]
            D = B - A
            if np.max(np.abs(D)) < 1e-15:
                break
            fs_new = -log_likelihood(B, d, config.clip).value
            f_new = fs_new + lam * B.sum()
            quad = f_smooth + np.sum(G * D) + np.sum(D * D) / (2 * step)
            if fs_new <= quad + 1e-12 * abs(f_smooth) and f_new <= fval:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent step exists at machine precision
            converged = bool(np.max(np.abs(D)) < 1e-15 or step < 1e-20)
            break
        rel = (fval - f_new) / max(abs(fval), 1.0)
        A, fval = B, f_new
        hist.append(fval)
        step *= 2.0
        if rel < config.tol and np.max(np.abs(D)) < config.xtol:
            converged = True
    _, clips = _objective(A, d, lam, config.clip)
    res = EstimationResult(A, lam, hist, counts, ident, it, bool(converged),
                           clips, diagnostics={"final_step": step,
                                               "steps": d.steps})
    if A_star is not None:
        res.frob_error = frobenius_error(A, A_star)["frob"]
    return res


# --------------------------------------------------------------------------
# metrics

def frobenius_error(A_hat, A_star, threshold=1e-3, rows=None):
    """||A_hat - A*||_F, its square, and support precision/recall.

    ``rows`` restricts the comparison to a subset of rows (for instance the
    identifiable ones).
    """
    A_hat = np.asarray(A_hat, dtype=np.float64)
    A_star = as_matrix(A_star)
    if rows is not None:
        A_hat, A_star = A_hat[rows], A_star[rows]
    D = A_hat - A_star
    f2 = float(np.sum(D * D))
    est = A_hat > threshold
    true = A_star > 0
    tp = int(np.sum(est & true))
    prec = tp / max(int(est.sum()), 1)
    rec = tp / max(int(true.sum()), 1)
    return {"frob": sqrt(f2), "frob2": f2, "precision": prec, "recall": rec}


def kl_bernoulli(p, q, alpha=None):
    """KL(Ber(p) || Ber(q)) with the sandwich 2(p-q)^2 <= KL <= (2/alpha)(p-q)^2.

    The upper bound needs alpha <= q <= 1 - alpha.
    """
    p = float(p)
    q = float(q)
    if not 0 <= p <= 1 or not 0 < q < 1:
        raise DomainError("need p in [0, 1] and q in (0, 1)")
    kl = 0.0
    if p > 0:
        kl += p * log(p / q)
    if p < 1:
        kl += (1 - p) * log((1 - p) / (1 - q))
    lower = 2 * (p - q) ** 2
    out = {"kl": kl, "lower": lower, "lower_ok": lower <= kl + 1e-15}
    if alpha is not None:
        if not alpha <= q <= 1 - alpha:
            raise DomainError("q must lie in [alpha, 1 - alpha]")
        upper = 2 / alpha * (p - q) ** 2
        out.update(upper=upper, upper_ok=kl <= upper + 1e-15)
    return out


# --------------------------------------------------------------------------
# theory calculator

def c_n_delta(n, delta, pi_star, m):
    return sqrt((log(1 / (2 * pi_star)) + log(2 * n * n / delta) / m)
                * log(4 * n * n / delta))


def c_n(n, pi_star):
    return sqrt((log(1 / (2 * pi_star)) + log(2 * n ** 3)) * log(4 * n ** 3))


def c_delta(delta, pi_star, m):
    return 8 * (log(1 / (2 * pi_star)) + log(2 / delta) / m) * log(2 / delta)


def lambda_default(n, pi_star, alpha, phi, m):
    """2 sqrt(2) c_{n,pi*} / (alpha sqrt(phi)) sqrt(m)."""
    return 2 * sqrt(2) * c_n(n, pi_star) / (alpha * sqrt(phi)) * sqrt(m)


def gradient_bound(n, delta, pi_star, alpha, phi, m):
    """sqrt(2) (1/alpha) phi^{-1/2} sqrt(m) c_{n,delta,pi*}(m)."""
    return sqrt(2) / alpha / sqrt(phi) * sqrt(m) * c_n_delta(n, delta, pi_star, m)


def sample_lower_bound(alpha, epsilon, delta):
    """(alpha/16) epsilon^{-2} log(1/(2.4 delta)); a bound on m E0[tau] lambda_min."""
    return alpha / 16 / epsilon ** 2 * log(1 / (2.4 * delta))


@dataclass
class TheoryReport:
    n: int
    m: int
    s: int
    alpha: float
    phi: float
    pi_star: float
    etau: float
    lambda_min: float
    delta: float
    lambda_m_default: float
    c_n_delta_pi: float
    c_n_pi: float
    c_delta_pi: float
    grad_bound: float
    grad_infnorm: float
    grad_ok: bool
    kappa1: float
    kappa: float
    kappa_prime: float
    m_curvature: float
    a: float
    m1: float
    m2: float
    frob_bound_4608: float
    mest_bound: float
    epsilon: float
    epsilon_max: float
    lower_bound_rhs: float
    m_lower: float
    constants: dict
    h_delta: dict = None

    def to_dict(self):
        return dict(self.__dict__)


def theory_report(A_star, m, etau, lambda_min, delta=0.05, epsilon=None,
                  c1=1.0, c2=1.0, gamma=0.0, trace=None, alpha=None,
                  phi=None, deltas=None):
    """Theory quantities for estimating A* from m cycles.

    ``etau`` and ``lambda_min`` are E0[tau] and lambda_min(E[X_0 X_0^T])
    (exclude-final stationary correlation).  c1 and c2 are the unspecified
    constants of the covering-number conditions, supplied by the caller.
    When ``trace`` is given the sup-norm of the gradient at A* is compared
    with its high-probability bound, and h(Delta; X) is evaluated for the
    matrices in ``deltas``.
    """
    A = as_matrix(A_star)
    n = A.shape[0]
    if m < 1 or etau <= 0 or lambda_min <= 0:
        raise DomainError("m, etau and lambda_min must be positive")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    sd = stationary_distribution(A)
    ps = sd.pi_star
    alpha = alpha if alpha is not None else float(A[A > 0].min())
    phi = phi if phi is not None else phi_A(A, sd.pi).value
    s = int(np.sum(A > 0))
    L = log(1 / (2 * ps))
    lam = lambda_default(n, ps, alpha, phi, m)
    gb = gradient_bound(n, delta, ps, alpha, phi, m)
    gi = float("nan")
    ok = None
    if trace is not None:
        gi = float(np.max(np.abs(gradient(A, trace))))
        ok = bool(gi <= gb)
    k1 = m * etau * lambda_min
    pe = phi * etau
    a = s * n * (L + log(n)) / (pe * lambda_min)
    m1 = c1 * s ** 2 * (L * (a + 1) * log(n) + (a + 1) ** 2 * log(n) ** 2) / (
        phi * etau ** 2 * lambda_min ** 2)
    m2 = c2 * n ** 3 / ps / (pe ** 2 * lambda_min ** 2)
    cn = c_n(n, ps)
    frob = 4608 * s * cn ** 2 / (alpha ** 2 * pe ** 2 * lambda_min ** 2) * phi / m
    kp = k1 / 8
    mest = 9 * s * (lam / kp) ** 2 + 2 * gamma ** 2 / m * lam / kp
    eps_max = min(1 / (2 * sqrt(n)), alpha / 4)
    eps = epsilon if epsilon is not None else eps_max / 2
    if not 0 < eps < eps_max:
        raise DomainError(f"epsilon must lie in (0, {eps_max})")
    lb = sample_lower_bound(alpha, eps, delta) if delta < 1 / 2.4 else 0.0
    hd = None
    if trace is not None and deltas is not None:
        hd = {str(i): h_delta(D, trace) for i, D in enumerate(deltas)}
    return TheoryReport(
        n, int(m), s, alpha, phi, ps, etau, lambda_min, delta, lam,
        c_n_delta(n, delta, ps, m), cn, c_delta(delta, ps, m), gb, gi, ok,
        k1, k1 / 2, kp,
        s ** 2 / phi / (etau ** 2 * lambda_min ** 2) * c_delta(delta, ps, m),
        a, m1, m2, frob, mest, eps, eps_max, lb, lb / (etau * lambda_min),
        {"c1": c1, "c2": c2, "gamma": gamma, "frob_constant": 4608}, hd)
