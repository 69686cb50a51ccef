"""Asynchronous voter model on a path started from a step configuration.

Vertices are 1..n.  Vertex u samples u+1 with probability p_u and u-1
otherwise; vertex 1 samples itself instead of vertex 0 and vertex n samples
itself instead of vertex n+1.  From k leading ones the state stays a step
configuration, so the process reduces to Y_t, the number of ones.

Vertex u interacts informatively at step t when it is active and its two
potential neighbours disagree, i.e. when Y_t is u-1 or u.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .errors import CapExceeded, DomainError
from .rng import as_generator, stream

_PATH_STREAM = 0x70617468


@dataclass(frozen=True)
class PathModel:
    """Bias vector p (length n, entry u-1 is p_u)."""

    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or len(p) < 2:
            raise DomainError("need n >= 2")
        if np.any((p < 0) | (p > 1)):
            raise DomainError("p entries must lie in [0, 1]")
        if np.any((p[1:-1] <= 0) | (p[1:-1] >= 1)):
            raise DomainError("interior p_u must lie in (0, 1)")
        object.__setattr__(self, "p", tuple(float(v) for v in p))

    @property
    def n(self):
        return len(self.p)

    def pu(self, u):
        return self.p[u - 1]

    @classmethod
    def default(cls, n):
        """p_1 = 1, p_n = 0 and 1/2 in between (endpoints never sample themselves)."""
        return cls((1.0,) + (0.5,) * (n - 2) + (0.0,))

    @classmethod
    def half(cls, n):
        """All p_u = 1/2; the setting of the 1/2-bias closed forms."""
        return cls((0.5,) * n)


def _check(model, u, k):
    n = model.n
    if not 1 <= u <= n:
        raise DomainError(f"vertex {u} outside 1..{n}")
    if not 1 <= k <= n - 1:
        raise DomainError(f"k={k} outside 1..{n - 1}")


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _logsumexp1(terms):
    """log(1 + sum exp(terms))."""
    t = np.concatenate([[0.0], terms])
    top = t.max()
    return top + np.log(np.exp(t - top).sum())


def _left_terms(model, u):
    """log r_z for z = 1..u-1 with r_z = prod_{j<=z} p_j / prod_{2<=j<=z+1} (1 - p_j).

    p_u is read as 0 (vertex u absorbs Y-tilde from u-1 at rate 1/n).
    """
    p = np.array(model.p)
    num = np.cumsum(_log(p[:u - 1]))
    q = 1 - p[1:u]
    q[-1:] = 1.0
    den = np.cumsum(_log(q))
    return num - den


def _right_terms(model, u):
    """log r_z for z = u..n-1 with r_z = prod_{u<=j<=z} p_j / prod_{u+1<=j<=z+1} (1 - p_j).

    p_u is read as 1.
    """
    p = np.array(model.p)
    n = model.n
    top = p[u - 1:n - 1].copy()
    top[0] = 1.0
    num = np.cumsum(_log(top))
    den = np.cumsum(_log(1 - p[u:n]))
    return num - den


def hitting_prob(model, u, k):
    """P[vertex u interacts informatively at least once | Y_0 = k]."""
    _check(model, u, k)
    if k < u:
        t = _left_terms(model, u)
        return min(1.0, float(np.exp(_logsumexp1(t[:k - 1]) - _logsumexp1(t))))
    if k > u:
        t = _right_terms(model, u)
        sub = t[k - u:]
        if len(sub) == 0:
            return 0.0
        top = sub.max()
        lnum = top + np.log(np.exp(sub - top).sum())
        return min(1.0, float(np.exp(lnum - _logsumexp1(t))))
    q = 1 - model.pu(k + 1)
    hk1 = hitting_prob(model, k, k + 1) if k + 1 <= model.n - 1 else 0.0
    return (1 + q * hk1) / (1 + q)


def hitting_probs(model, k):
    """h_{u,k} for u = 1..n."""
    return np.array([hitting_prob(model, u, k) for u in range(1, model.n + 1)])


def hitting_prob_half(n, u, k):
    """Closed forms under all p_u = 1/2."""
    if not 1 <= k <= n - 1 or not 1 <= u <= n:
        raise DomainError("need 1 <= u <= n and 1 <= k <= n-1")
    if k < u:
        return 2 * k / (2 * u - 1)
    if k > u:
        return 2 * (n - k) / (2 * (n - u) + 1)
    return 2 / 3 * (1 + (n - k - 1) / (2 * (n - k) + 1))


def hitting_prob_linear(model, u, k):
    """Same probability from a direct solve of the first-step equations of Y."""
    _check(model, u, k)
    n = model.n
    ys = np.arange(1, n)
    P = np.zeros((n - 1, n - 1))
    s = np.zeros(n - 1)
    for i, y in enumerate(ys):
        up = (1 - model.pu(y + 1)) / n      # vertex y+1 copies y
        down = model.pu(y) / n              # vertex y copies y+1
        if y in (u - 1, u):
            s[i] = 1.0 / n
            if u == y + 1:
                up = 0.0
            else:
                down = 0.0
        P[i, i] = 1 - up - down - s[i]
        # moves into 0 or n are absorbed with h = 0
        if y + 1 < n:
            P[i, i + 1] = up
        if y > 1:
            P[i, i - 1] = down
    h = np.linalg.solve(np.eye(n - 1) - P, s)
    return float(h[k - 1])


def _harmonic(n):
    return float(digamma(n + 1) + np.euler_gamma)


def _odd_sum(n):
    """S_n = sum_{u=1..n} 1/(2u-1) = H_{2n} - H_n/2."""
    return _harmonic(2 * n) - _harmonic(n) / 2


@dataclass
class InformativeCount:
    n: int
    k: int
    exact: float
    asymptotic: float
    gap: float
    right: float
    left: float
    boundary: float


def expected_informative(n, k):
    """E[N] under all p_u = 1/2, with the logarithmic approximation.

    Vertices right of the boundary contribute 2k (S_n - S_k) and vertices
    left of it 2(n-k)(S_n - S_{n-k+1}); vertex k adds h_{k,k}.
    """
    if n < 2 or not 1 <= k <= n - 1:
        raise DomainError("need n >= 2 and 1 <= k <= n-1")
    right = 2 * k * (_odd_sum(n) - _odd_sum(k))
    left = 2 * (n - k) * (_odd_sum(n) - _odd_sum(n - k + 1))
    mid = hitting_prob_half(n, k, k)
    exact = right + left + mid
    asym = k * np.log(n / k) + (n - k) * np.log(n / (n - k + 1))
    return InformativeCount(n, k, exact, float(asym), exact - float(asym),
                            right, left, mid)


# --------------------------------------------------------------------------
# simulation

@dataclass
class PathSimulation:
    frequency: np.ndarray
    stderr: np.ndarray
    N: np.ndarray
    tau: np.ndarray
    reps: int


def _simulate_block(p, k, reps, rng, cap):
    n = len(p)
    x = np.zeros((reps, n + 2), dtype=bool)   # padded with ghost cells
    x[:, 1:k + 1] = True
    hit = np.zeros((reps, n), dtype=bool)
    tau = np.zeros(reps, dtype=np.int64)
    alive = np.arange(reps)
    t = 0
    while alive.size:
        if t >= cap:
            raise CapExceeded(cap, None)
        r = alive.size
        u = rng.integers(1, n + 1, size=r)
        right = rng.random(r) < p[u - 1]
        xs = x[alive]
        left_v = np.where(u == 1, xs[:, 1], xs[np.arange(r), u - 1])
        right_v = np.where(u == n, xs[:, n], xs[np.arange(r), u + 1])
        hit[alive[left_v != right_v], u[left_v != right_v] - 1] = True
        x[alive, u] = np.where(right, right_v, left_v)
        t += 1
        ones = x[alive, 1:n + 1].sum(axis=1)
        done = (ones == 0) | (ones == n)
        tau[alive[done]] = t
        alive = alive[~done]
    return hit, tau


def simulate_path(model, k, reps, rng=None, cap=10 ** 7, block=20000):
    """Full asynchronous dynamics; per-vertex informative frequencies and N.

    Blocks of ``block`` replications use independent streams derived from one
    master seed, so results do not depend on how blocks are scheduled.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    if not 1 <= k <= model.n - 1:
        raise DomainError("k outside 1..n-1")
    seed = int(as_generator(rng).integers(0, 2 ** 63))
    p = np.array(model.p)
    hits, taus = [], []
    for b, start in enumerate(range(0, reps, block)):
        h, t = _simulate_block(p, k, min(block, reps - start),
                               stream(seed, _PATH_STREAM, b), cap)
        hits.append(h)
        taus.append(t)
    hit = np.concatenate(hits)
    freq = hit.mean(axis=0)
    se = np.sqrt(freq * (1 - freq) / reps)
    return PathSimulation(freq, se, hit.sum(axis=1), np.concatenate(taus), reps)


def simulate_birth_death(model, k, reps, rng=None, cap=10 ** 7):
    """Absorption times of Y simulated directly as a birth-death chain."""
    rng = as_generator(rng)
    n = model.n
    p = np.array(model.p)
    y = np.full(reps, k)
    tau = np.zeros(reps, dtype=np.int64)
    alive = np.arange(reps)
    t = 0
    while alive.size:
        if t >= cap:
            raise CapExceeded(cap, None)
        yy = y[alive]
        up = (1 - p[yy]) / n            # p_{y+1} sits at index y
        down = p[yy - 1] / n
        r = rng.random(alive.size)
        yy = yy + (r < up) - ((r >= up) & (r < up + down))
        y[alive] = yy
        t += 1
        done = (yy == 0) | (yy == n)
        tau[alive[done]] = t
        alive = alive[~done]
    return tau
