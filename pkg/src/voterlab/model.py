"""Graphs, interaction matrices and the partition functionals built on them.

A state x in {0,1}^n is identified with the vertex set S = {u : x_u = 1}.
Partitions are encoded as integer bitmasks where bit u holds x_u.
"""
from dataclasses import dataclass, field
from math import gcd, sqrt

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (BipartiteOrReducible, DomainError, NonConvergence,
                     SelfLoopViolation, TooLargeForExact)
from .rng import as_generator

MAX_EXACT_PHI = 16
MAX_EXACT_PSI = 12
ROW_TOL = 1e-12
NORMALIZE_TOL = 1e-9


def bit_table(n, masks=None):
    """Rows of the 0/1 matrix whose row i is the bit expansion of mask i."""
    if masks is None:
        masks = np.arange(1 << n, dtype=np.int64)
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)


def mask_to_bits(mask, n):
    return np.array([(int(mask) >> u) & 1 for u in range(n)], dtype=np.int8)


def bits_to_mask(x):
    return int(sum(int(b) << u for u, b in enumerate(np.asarray(x).ravel())))


# --------------------------------------------------------------------------
# graphs

@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on vertices 0..n-1.

    ``edges`` holds pairs (u, v) with u <= v; a pair (u, u) is a self-loop,
    which adds one to the degree of u.
    """
    n: int
    edges: tuple
    self_loops_allowed: bool = True

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise DomainError("graph needs at least one vertex")
        canon = []
        for e in self.edges:
            u, v = sorted((int(e[0]), int(e[1])))
            if u < 0 or v >= n:
                raise DomainError(f"edge {e} out of range for n={n}")
            canon.append((u, v))
        if len(set(canon)) != len(canon):
            raise DomainError("duplicate edges")
        if not self.self_loops_allowed and any(u == v for u, v in canon):
            raise SelfLoopViolation("self-loops present but not allowed")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if np.any(self.degrees == 0):
            raise DomainError("every vertex needs degree >= 1")
        if n > 1:
            ncomp, _ = connected_components(self.adjacency(), directed=False)
            if ncomp != 1:
                raise DomainError("graph is not connected")

    @property
    def self_loops(self):
        return tuple(u for u, v in self.edges if u == v)

    @property
    def proper_edges(self):
        return tuple((u, v) for u, v in self.edges if u != v)

    def adjacency(self):
        """0/1 adjacency matrix with ones on the diagonal for self-loops."""
        W = np.zeros((self.n, self.n))
        for u, v in self.edges:
            W[u, v] = W[v, u] = 1.0
        return W

    @property
    def degrees(self):
        return self.adjacency().sum(axis=1)

    @property
    def volume(self):
        return float(self.degrees.sum())

    def with_self_loops(self):
        loops = [(u, u) for u in range(self.n) if u not in self.self_loops]
        return Graph(self.n, self.edges + tuple(loops), True)

    def without_self_loops(self):
        return Graph(self.n, self.proper_edges, self.self_loops_allowed)


def complete_graph(n, self_loops=False):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    g = Graph(n, tuple(edges))
    return g.with_self_loops() if self_loops else g


def cycle_graph(n, self_loops=False):
    if n < 3:
        raise DomainError("cycle needs n >= 3")
    g = Graph(n, tuple((u, (u + 1) % n) for u in range(n)))
    return g.with_self_loops() if self_loops else g


def path_graph(n, self_loops=False):
    g = Graph(n, tuple((u, u + 1) for u in range(n - 1)))
    return g.with_self_loops() if self_loops else g


def star_graph(n, self_loops=False):
    """Vertex 0 joined to n-1 leaves."""
    g = Graph(n, tuple((0, v) for v in range(1, n)))
    return g.with_self_loops() if self_loops else g


def barbell_graph(n, self_loops=False):
    """Two cliques on floor(n/2) and ceil(n/2) vertices joined by one edge."""
    h = n // 2
    if h < 2:
        raise DomainError("barbell needs n >= 4")
    edges = [(u, v) for u in range(h) for v in range(u + 1, h)]
    edges += [(u, v) for u in range(h, n) for v in range(u + 1, n)]
    edges.append((h - 1, h))
    g = Graph(n, tuple(edges))
    return g.with_self_loops() if self_loops else g


GRAPH_FAMILIES = {
    "complete": complete_graph,
    "cycle": cycle_graph,
    "path": path_graph,
    "star": star_graph,
    "barbell": barbell_graph,
}


def graph_family(name, n, self_loops=False):
    try:
        return GRAPH_FAMILIES[name](n, self_loops=self_loops)
    except KeyError:
        raise DomainError(f"unknown graph family {name!r}") from None


# --------------------------------------------------------------------------
# interaction matrices

def support_period(S):
    """Period of the digraph with adjacency ``S`` (gcd of cycle lengths).

    Uses BFS levels from vertex 0: the period is the gcd over arcs (u, v) of
    level[u] + 1 - level[v].
    """
    order, pred = breadth_first_order(csr_matrix(S.astype(float)), 0,
                                      directed=True)
    level = np.full(S.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    g = 0
    for u, v in zip(*np.nonzero(S)):
        if level[u] >= 0 and level[v] >= 0:
            g = gcd(g, abs(int(level[u]) + 1 - int(level[v])))
    return g


def is_irreducible(S):
    ncomp, _ = connected_components(csr_matrix(S.astype(float)),
                                    directed=True, connection="strong")
    return ncomp == 1


class InteractionMatrix:
    """Row-stochastic matrix A; row u is the sampling law of vertex u.

    Rows within 1e-9 of stochastic are renormalized, anything further off is
    rejected.  Irreducibility and aperiodicity of the support digraph are
    checked unless ``allow_periodic`` is set, in which case only
    irreducibility is required.
    """

    def __init__(self, rows, allow_periodic=False, check=True):
        A = np.array(rows, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DomainError("interaction matrix must be square")
        if np.any(~np.isfinite(A)) or np.any(A < 0) or np.any(A > 1):
            raise DomainError("entries must lie in [0, 1]")
        rs = A.sum(axis=1)
        if np.any(np.abs(rs - 1) > NORMALIZE_TOL):
            raise DomainError("rows must sum to 1")
        if np.any(np.abs(rs - 1) > ROW_TOL):
            A = A / rs[:, None]
        A.setflags(write=False)
        self._A = A
        self.allow_periodic = bool(allow_periodic)
        if check:
            S = A > 0
            if not is_irreducible(S):
                raise BipartiteOrReducible("support digraph is reducible")
            self.period = support_period(S)
            if self.period != 1 and not allow_periodic:
                raise BipartiteOrReducible(
                    f"support digraph has period {self.period}")
        else:
            self.period = None

    @property
    def A(self):
        return self._A

    @property
    def n(self):
        return self._A.shape[0]

    @property
    def support(self):
        return self._A > 0

    @property
    def alpha(self):
        """Smallest positive entry."""
        return float(self._A[self._A > 0].min())

    def __array__(self, dtype=None, copy=None):
        return self._A if dtype is None else self._A.astype(dtype)

    def __repr__(self):
        return f"InteractionMatrix(n={self.n})"


def as_matrix(A):
    """Raw ndarray from an InteractionMatrix or array-like."""
    if isinstance(A, InteractionMatrix):
        return A.A
    return np.asarray(A, dtype=np.float64)


def build_matrix(graph, kind, require_self_loops=False, allow_periodic=False):
    """Interaction matrix of ``kind`` on ``graph``.

    ``lazy``: a_uu = 1/2 and a_uv = 1/(2 d_u) for each neighbor v.
    ``uniform_neighbor``: a_uv = 1/d_u over the neighborhood, where a
    self-loop makes u its own neighbor.
    """
    W = graph.adjacency()
    if kind == "lazy":
        if graph.self_loops:
            raise SelfLoopViolation("lazy matrix is defined on loop-free graphs")
        d = W.sum(axis=1)
        A = 0.5 * np.eye(graph.n) + 0.5 * W / d[:, None]
    elif kind == "uniform_neighbor":
        if require_self_loops and len(graph.self_loops) != graph.n:
            raise SelfLoopViolation("every vertex needs a self-loop")
        A = W / W.sum(axis=1)[:, None]
    else:
        raise DomainError(f"unknown matrix kind {kind!r}")
    return InteractionMatrix(A, allow_periodic=allow_periodic)


def random_matrix(n, rng=None, density=0.6):
    """Random irreducible aperiodic interaction matrix (for tests and demos)."""
    rng = as_generator(rng)
    while True:
        S = rng.random((n, n)) < density
        S[np.arange(n), (np.arange(n) + 1) % n] = True
        W = np.where(S, rng.random((n, n)) + 0.05, 0.0)
        A = W / W.sum(axis=1, keepdims=True)
        if support_period(A > 0) == 1:
            return InteractionMatrix(A)


# --------------------------------------------------------------------------
# stationary distribution

@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    pi_star: float
    residual: float


def stationary_distribution(A, tol=1e-10, max_iter=1_000_000):
    """Solve pi^T = pi^T A with sum(pi) = 1.

    Dense solve for n <= 64, power iteration on (I + A)/2 otherwise.
    """
    A = as_matrix(A)
    n = A.shape[0]
    if n <= 64:
        M = A.T - np.eye(n)
        M[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(M, b)
    else:
        L = 0.5 * (np.eye(n) + A)
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            new = pi @ L
            if np.abs(new - pi).sum() < 1e-15:
                pi = new
                break
            pi = new
        else:
            res = float(np.abs(pi @ A - pi).sum())
            raise NonConvergence("power iteration did not converge", res)
    pi = pi / pi.sum()
    res = float(np.abs(pi @ A - pi).max())
    if res > tol or np.any(pi <= 0):
        raise NonConvergence("stationary distribution residual too large", res)
    return StationaryDistribution(pi, float(pi.min()), res)


def _pi_vec(A, pi):
    if pi is None:
        return stationary_distribution(A).pi
    if isinstance(pi, StationaryDistribution):
        return pi.pi
    return np.asarray(pi, dtype=np.float64)


# --------------------------------------------------------------------------
# partition functionals

def variance(q):
    """V_a(x) = a^T x (1 - a^T x) given q = a^T x."""
    return q * (1.0 - q)


def phi_ratio(A, pi, X, variant="sync"):
    """Defining ratio of Phi_A (or Phi'_A) for each row of the 0/1 matrix X."""
    A = as_matrix(A)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    q = X @ A.T
    s = X @ pi
    if variant == "sync":
        num = variance(q) @ pi ** 2
    elif variant == "async":
        num = (X * (1 - q) + (1 - X) * q) @ pi ** 2 / A.shape[0]
    else:
        raise DomainError(f"unknown variant {variant!r}")
    return num / (s * (1 - s))


@dataclass
class FunctionalValue:
    """Value of a partition functional with its minimizing partition."""
    value: float
    witness: int
    mode: str
    evaluated: int

    def witness_bits(self, n):
        return mask_to_bits(self.witness, n)


def _argmin_mask(values, masks):
    m = values.min()
    hit = np.nonzero(values <= m * (1 + 1e-12) if m > 0 else values <= m)[0]
    i = hit[np.argmin(masks[hit])]
    return float(values[i]), int(masks[i])


def _chunks(n, size=1 << 14):
    top = (1 << n) - 1
    for lo in range(1, top, size):
        yield np.arange(lo, min(lo + size, top), dtype=np.int64)


def _random_masks(n, k, rng):
    rng = as_generator(rng)
    masks = rng.integers(1, (1 << n) - 1, size=k, dtype=np.int64)
    return masks


def phi_A(A, pi=None, variant="sync", mode="exact", samples=1000, rng=None):
    """Phi_A (variant sync) or Phi'_A (variant async).

    Exact mode enumerates the 2^n - 2 partitions and returns the smallest
    bitmask among minimizers.  Sampled mode evaluates ``samples`` random
    partitions and so gives an upper estimate.
    """
    A = as_matrix(A)
    n = A.shape[0]
    pi = _pi_vec(A, pi)
    if n < 2:
        raise DomainError("need n >= 2")
    if mode == "exact":
        if n > MAX_EXACT_PHI:
            raise TooLargeForExact(f"n={n} > {MAX_EXACT_PHI}")
        masks = np.arange(1, (1 << n) - 1, dtype=np.int64)
        vals = np.concatenate([phi_ratio(A, pi, bit_table(n, m), variant)
                               for m in _chunks(n)])
        v, w = _argmin_mask(vals, masks)
        return FunctionalValue(v, w, "exact", len(masks))
    if mode == "sampled":
        masks = np.unique(_random_masks(n, samples, rng))
        v, w = _argmin_mask(phi_ratio(A, pi, bit_table(n, masks), variant),
                            masks)
        return FunctionalValue(v, w, "sampled", len(masks))
    raise DomainError(f"unknown mode {mode!r}")


def phi_complete(n):
    """Closed form of Phi_A for the complete graph with a_uv = 1/(n-1)."""
    return (n - 2) / (n - 1) ** 2


def phi_cycle(n):
    """Phi_A for the cycle with a_{u,u+1} = a_{u,u-1} = 1/2, by direct
    evaluation: 0 for even n (alternating partition) and 2/(n^2 - 1) for odd
    n (attained by a set of (n - 1)/2 pairwise non-adjacent vertices).
    """
    if n < 3:
        raise DomainError("cycle needs n >= 3")
    return 0.0 if n % 2 == 0 else 2.0 / (n * n - 1)


def conductance_ratio(graph, X):
    """|E(S, S^c)| / min(d(S), d(S^c)) for each row of X."""
    X = np.atleast_2d(X)
    cut = np.zeros(X.shape[0])
    for u, v in graph.proper_edges:
        cut += np.abs(X[:, u] - X[:, v])
    dS = X @ graph.degrees
    return cut / np.minimum(dS, graph.volume - dS)


def normalized_laplacian(graph):
    W = graph.adjacency()
    d = W.sum(axis=1)
    r = 1.0 / np.sqrt(d)
    return np.eye(graph.n) - r[:, None] * W * r[None, :]


@dataclass
class ConductanceReport:
    phi_G: float
    lambda2: float
    cheeger_ok: bool
    witness: int


def conductance(graph):
    """Graph conductance by enumeration, lambda_2 of the normalized
    Laplacian, and the Cheeger sandwich lambda_2/2 <= Phi(G) <= sqrt(2 lambda_2).
    """
    n = graph.n
    if n > MAX_EXACT_PHI:
        raise TooLargeForExact(f"n={n} > {MAX_EXACT_PHI}")
    if n < 2:
        raise DomainError("need n >= 2")
    vals, masks = [], []
    for m in _chunks(n):
        vals.append(conductance_ratio(graph, bit_table(n, m)))
        masks.append(m)
    phi, w = _argmin_mask(np.concatenate(vals), np.concatenate(masks))
    lam = np.linalg.eigvalsh(normalized_laplacian(graph))
    lam2 = float(lam[1])
    tol = 1e-12
    ok = lam2 / 2 <= phi + tol and phi <= sqrt(max(2 * lam2, 0.0)) + tol
    return ConductanceReport(phi, lam2, bool(ok), w)


def psi_numerators(A, pi, X):
    """E|sum_u pi_u (x_u - b_u)| with independent b_u ~ Ber(a_u^T x),
    computed exactly for each row of X by enumerating the random coordinates.
    """
    A = as_matrix(A)
    out = np.empty(X.shape[0])
    tables = {}
    for i, x in enumerate(X):
        q = A @ x
        free = np.nonzero((q > 0) & (q < 1))[0]
        c = pi @ x - pi @ np.where((q > 0) & (q < 1), 0.0, q)
        k = len(free)
        if k not in tables:
            tables[k] = bit_table(k)
        B = tables[k]
        qf = q[free]
        prob = np.prod(np.where(B == 1, qf, 1 - qf), axis=1)
        out[i] = prob @ np.abs(c - B @ pi[free])
    return out


def psi_tilde(A, pi=None, mode="exact", samples=2000, rng=None):
    """min over partitions of E|pi^T (x - b)| / min(pi^T x, 1 - pi^T x).

    ``exact`` enumerates outcomes of the Bernoulli vector (n <= 12); ``mc``
    averages ``samples`` draws of it per partition.
    """
    A = as_matrix(A)
    n = A.shape[0]
    pi = _pi_vec(A, pi)
    if n > (MAX_EXACT_PSI if mode == "exact" else MAX_EXACT_PHI):
        raise TooLargeForExact(f"n={n} too large for {mode} psi")
    masks = np.arange(1, (1 << n) - 1, dtype=np.int64)
    X = bit_table(n, masks)
    s = X @ pi
    den = np.minimum(s, 1 - s)
    if mode == "exact":
        num = psi_numerators(A, pi, X)
    elif mode == "mc":
        rng = as_generator(rng)
        Q = X @ A.T
        num = np.empty(len(masks))
        for i in range(len(masks)):
            b = rng.random((samples, n)) < Q[i]
            num[i] = np.abs(s[i] - b @ pi).mean()
    else:
        raise DomainError(f"unknown mode {mode!r}")
    v, w = _argmin_mask(num / den, masks)
    return FunctionalValue(v, w, mode, len(masks))


# --------------------------------------------------------------------------
# reports

@dataclass
class SpectralReport:
    phi_A: float
    phi_A_async: float
    psi_tilde: float
    psi: float
    conductance: float
    lambda2: float
    cheeger_ok: bool
    witnesses: dict = field(default_factory=dict)
    mode: str = "exact"

    def to_dict(self):
        return dict(self.__dict__)


def spectral_report(A, graph=None, mode="exact", samples=1000, rng=None):
    """Phi_A, Phi'_A, Psi~_A and, when a graph is given, Phi(G) and lambda_2.

    Psi~ is computed exactly only up to n = 12; beyond that it is left as nan
    in exact mode.
    """
    A = as_matrix(A)
    n = A.shape[0]
    sd = stationary_distribution(A)
    pi = sd.pi
    f = phi_A(A, pi, "sync", mode, samples, rng)
    g = phi_A(A, pi, "async", mode, samples, rng)
    wit = {"phi_A": f.witness, "phi_A_async": g.witness}
    if n <= MAX_EXACT_PSI:
        p = psi_tilde(A, pi, "exact")
        psi, wit["psi_tilde"] = p.value, p.witness
    else:
        psi = float("nan")
    phi_G = lam2 = float("nan")
    ok = None
    if graph is not None:
        c = conductance(graph)
        phi_G, lam2, ok, wit["conductance"] = c.phi_G, c.lambda2, c.cheeger_ok, c.witness
    return SpectralReport(f.value, g.value, psi, sd.pi_star * psi, phi_G,
                          lam2, ok, wit, f.mode)


def comparison_report(graph, kind):
    """Check the comparison inequalities between Phi_A, Psi~_A and Phi(G).

    Returns a list of dicts with keys name, lhs, rhs, holds and slack
    (rhs - lhs).  For ``uniform_neighbor`` every vertex must carry a
    self-loop.
    """
    if graph.n > MAX_EXACT_PSI:
        raise TooLargeForExact(f"n={graph.n} > {MAX_EXACT_PSI}")
    if kind == "uniform_neighbor" and len(graph.self_loops) != graph.n:
        raise SelfLoopViolation("comparison needs a self-loop at every vertex")
    A = build_matrix(graph, kind)
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi).value
    psit = psi_tilde(A, sd.pi).value
    psi = sd.pi_star * psit
    cond = conductance(graph).phi_G
    dV = graph.volume
    dmin = graph.degrees.min()
    if kind == "lazy":
        rows = [
            ("1/phi_A <= 2 (d(V)/d_min) / phi_G", 1 / phi, 2 * dV / dmin / cond),
            ("psi_tilde <= phi_G", psit, cond),
            ("1/phi_A <= 2 / psi", 1 / phi, 2 / psi),
        ]
    else:
        rows = [
            ("1/phi_A <= d(V) / (2 phi_G)", 1 / phi, 0.5 * dV / cond),
            ("psi_tilde <= 2 phi_G", psit, 2 * cond),
            ("1/phi_A <= d_min / psi", 1 / phi, dmin / psi),
        ]
    return [dict(name=nm, lhs=float(l), rhs=float(r),
                 holds=bool(l <= r * (1 + 1e-12)), slack=float(r - l))
            for nm, l, r in rows]
