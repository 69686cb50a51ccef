"""Sampling engine for synchronous, asynchronous and noisy voter dynamics.

States are uint8 vectors of length n.  A trajectory X_0..X_tau stops at
tau = min{t >= 1 : X_t in C}, so a consensus start has tau = 1.  Extended
traces concatenate independent cycles restarted from mu, each driven by its
own random stream derived from the master seed and the cycle index.
"""
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DomainError
from .model import as_matrix, bit_table
from .rng import as_generator, stream

DEFAULT_CAP = 10 ** 8
SNAP = 1e-12


def is_consensus(x):
    x = np.asarray(x)
    return bool(x.all() or not x.any())


def bits_to_str(x):
    return "".join("1" if b else "0" for b in x)


def str_to_bits(s):
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")


def _probs(A, x, epsilon=0.0):
    q = A @ x
    q = np.where(q > 1 - SNAP, 1.0, np.where(q < SNAP, 0.0, q))
    if epsilon:
        q = epsilon + (1 - 2 * epsilon) * q
    return q


# --------------------------------------------------------------------------
# initial distributions

class InitialDistribution:
    """Law mu of X_0.

    Kinds: ``product_bernoulli`` (independent Ber(p) entries, optionally
    conditioned off C), ``fixed`` (a point mass) and
    ``uniform_over_transients``.
    """

    def __init__(self, kind, p=None, x=None, exclude_consensus=False):
        self.kind = kind
        self.p = None if p is None else float(p)
        self.x = None if x is None else np.asarray(x, dtype=np.uint8)
        self.exclude_consensus = bool(exclude_consensus)
        if kind == "product_bernoulli":
            if not 0 < self.p < 1:
                raise DomainError("p must lie in (0, 1)")
        elif kind == "fixed":
            if self.x is None or not np.isin(self.x, (0, 1)).all():
                raise DomainError("fixed start needs a 0/1 vector")
        elif kind != "uniform_over_transients":
            raise DomainError(f"unknown initial distribution {kind!r}")

    @classmethod
    def product_bernoulli(cls, p, exclude_consensus=False):
        return cls("product_bernoulli", p=p, exclude_consensus=exclude_consensus)

    @classmethod
    def fixed(cls, x):
        return cls("fixed", x=x)

    @classmethod
    def uniform_over_transients(cls):
        return cls("uniform_over_transients")

    def describe(self):
        if self.kind == "product_bernoulli":
            return {"bernoulli": self.p,
                    "exclude_consensus": self.exclude_consensus}
        if self.kind == "fixed":
            return {"fixed": bits_to_str(self.x)}
        return {"uniform_transient": True}

    def require_transient(self):
        """Raise unless mu puts zero mass on C."""
        if self.kind == "fixed" and is_consensus(self.x):
            raise DomainError("fixed start lies in C")
        if self.kind == "product_bernoulli" and not self.exclude_consensus:
            raise DomainError("product form charges C; use exclude_consensus")

    def sample(self, rng, n):
        if self.kind == "fixed":
            if len(self.x) != n:
                raise DomainError("fixed start has the wrong length")
            return self.x.copy()
        if self.kind == "product_bernoulli":
            while True:
                x = (rng.random(n) < self.p).astype(np.uint8)
                if not (self.exclude_consensus and is_consensus(x)):
                    return x
        if n < 2:
            raise DomainError("no transient states for n < 2")
        mask = int(rng.integers(1, (1 << n) - 1))
        return np.array([(mask >> u) & 1 for u in range(n)], dtype=np.uint8)

    def pmf(self, n):
        """Exact probability of every bitmask state (n small)."""
        N = 1 << n
        if self.kind == "fixed":
            w = np.zeros(N)
            w[int(sum(int(b) << u for u, b in enumerate(self.x)))] = 1.0
            return w
        if self.kind == "uniform_over_transients":
            w = np.full(N, 1.0 / (N - 2))
            w[[0, N - 1]] = 0.0
            return w
        k = bit_table(n).sum(axis=1)
        w = self.p ** k * (1 - self.p) ** (n - k)
        if self.exclude_consensus:
            w[[0, N - 1]] = 0.0
            w /= w.sum()
        return w

    def consensus_mass(self, n):
        """mu(C_0), mu(C_1)."""
        if self.kind == "product_bernoulli" and not self.exclude_consensus:
            return (1 - self.p) ** n, self.p ** n
        if self.kind == "fixed":
            return float(not self.x.any()), float(self.x.all())
        return 0.0, 0.0

    def moments(self, n):
        """E[X_0] and E[X_0 X_0^T] under mu."""
        if self.kind == "product_bernoulli":
            p = self.p
            m1 = np.full(n, p)
            m2 = np.full((n, n), p * p)
            np.fill_diagonal(m2, p)
            if self.exclude_consensus:
                z = 1 - p ** n - (1 - p) ** n
                m1 = (m1 - p ** n) / z
                m2 = (m2 - p ** n) / z
            return m1, m2
        if self.kind == "fixed":
            x = self.x.astype(float)
            return x, np.outer(x, x)
        N = 1 << n
        # uniform over transients: drop the two consensus states from the
        # uniform law on {0,1}^n
        m1 = np.full(n, (N / 2 - 1) / (N - 2))
        m2 = np.full((n, n), (N / 4 - 1) / (N - 2))
        np.fill_diagonal(m2, m1)
        return m1, m2


# --------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    states: np.ndarray
    tau: int
    absorbed_to: int
    events: np.ndarray = None
    index: int = 0

    @property
    def start_in_consensus(self):
        return is_consensus(self.states[0])

    def window(self, include_final=False):
        """States observed in the cycle's window.

        Exclude-final: X_0..X_{tau-1}.  Include-final: X_0..X_tau, except a
        consensus start, which contributes X_0 only.
        """
        if not include_final:
            return self.states[:self.tau]
        if self.start_in_consensus:
            return self.states[:1]
        return self.states[:self.tau + 1]


@dataclass
class NoisyModel:
    """Linear epsilon-noisy voter model: X'_u ~ Ber(eps + (1-2 eps) a_u^T x)."""
    A: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.A = as_matrix(self.A)
        if not 0 < self.epsilon <= 0.5:
            raise DomainError("epsilon must lie in (0, 1/2]")

    @property
    def effective(self):
        return (1 - 2 * self.epsilon) * self.A


def step(model, variant, x, rng):
    """One transition.  Returns the new state (and the active vertex for async)."""
    x = np.asarray(x, dtype=np.uint8)
    n = len(x)
    if isinstance(model, NoisyModel):
        A, eps = model.A, model.epsilon
    else:
        A, eps = as_matrix(model), 0.0
    if variant in ("sync", "noisy"):
        q = _probs(A, x, eps)
        return (rng.random(n) < q).astype(np.uint8)
    if variant == "async":
        u = int(rng.integers(n))
        q = _probs(A[u:u + 1], x, eps)[0]
        y = x.copy()
        y[u] = rng.random() < q
        return y, u
    raise DomainError(f"unknown variant {variant!r}")


def _cycle(A, variant, x0, rng, cap, index=0):
    n = len(x0)
    x = x0
    states = [x]
    events = [] if variant == "async" else None
    t = 0
    while True:
        if variant == "sync":
            x = (rng.random(n) < _probs(A, x)).astype(np.uint8)
        else:
            u = int(rng.integers(n))
            q = _probs(A[u:u + 1], x)[0]
            x = x.copy()
            x[u] = rng.random() < q
            events.append(u)
        t += 1
        states.append(x)
        if is_consensus(x):
            break
        if t >= cap:
            raise CapExceeded(cap, Trajectory(np.array(states), t, -1,
                                              None if events is None else
                                              np.array(events), index))
    return Trajectory(np.array(states, dtype=np.uint8), t, int(x[0]),
                      None if events is None else np.array(events, dtype=np.int64),
                      index)


def run_to_consensus(model, variant, mu, rng=None, cap=DEFAULT_CAP, index=0):
    """Run one realization from X_0 ~ mu until the first t >= 1 with X_t in C."""
    if variant not in ("sync", "async"):
        raise DomainError("run_to_consensus needs variant sync or async")
    if cap < 1:
        raise DomainError("cap must be >= 1")
    A = as_matrix(model)
    rng = as_generator(rng)
    if not isinstance(mu, InitialDistribution):
        mu = InitialDistribution.fixed(mu)
    x0 = mu.sample(rng, A.shape[0])
    return _cycle(A, variant, x0, rng, cap, index)


# --------------------------------------------------------------------------
# extended traces

@dataclass
class ExtendedTrace:
    """m independent cycles of the extended voter process."""
    cycles: list
    include_final: bool = False
    seed: int = None
    variant: str = "sync"
    n: int = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.cycles)

    @property
    def taus(self):
        return np.array([c.tau for c in self.cycles], dtype=np.int64)

    @property
    def absorbed(self):
        return np.array([c.absorbed_to for c in self.cycles], dtype=np.int64)

    @property
    def starts(self):
        return np.array([c.states[0] for c in self.cycles], dtype=np.uint8)

    def window_lengths(self, include_final=None):
        inc = self.include_final if include_final is None else include_final
        return np.array([len(c.window(inc)) for c in self.cycles])

    def window_states(self, include_final=None):
        """All window states stacked over cycles."""
        inc = self.include_final if include_final is None else include_final
        return np.concatenate([c.window(inc) for c in self.cycles])

    def transitions(self):
        """Stacked pairs (X_t, X_{t+1}) for t = 0..tau-1 of every cycle, plus
        the active vertex per pair for async traces (else None)."""
        X = np.concatenate([c.states[:-1] for c in self.cycles])
        Y = np.concatenate([c.states[1:] for c in self.cycles])
        if self.variant == "async":
            ev = np.concatenate([c.events for c in self.cycles])
        else:
            ev = None
        return X, Y, ev

    def cycle_ids(self):
        return np.repeat(np.arange(self.m), self.taus)


def _run_block(args):
    A, variant, mu, seed, lo, hi, cap = args
    n = A.shape[0]
    out = []
    for i in range(lo, hi):
        g = stream(seed, i)
        out.append(_cycle(A, variant, mu.sample(g, n), g, cap, i))
    return out


def master_seed(rng):
    """Integer master seed from an int, None or a Generator."""
    if rng is None:
        return int(np.random.SeedSequence().entropy) & ((1 << 64) - 1)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 63))
    return int(rng)


def run_extended(model, variant, mu, m, rng=None, include_final=False,
                 cap=DEFAULT_CAP, workers=1):
    """m cycles each started fresh from mu.

    Cycle i uses the stream keyed by (seed, i), so the trace does not depend
    on ``workers`` or on execution order.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    if variant not in ("sync", "async"):
        raise DomainError("variant must be sync or async")
    A = as_matrix(model)
    seed = master_seed(rng)
    if workers <= 1 or m < 2 * workers:
        cycles = _run_block((A, variant, mu, seed, 0, m, cap))
    else:
        edges = np.linspace(0, m, workers * 4 + 1).astype(int)
        jobs = [(A, variant, mu, seed, lo, hi, cap)
                for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
        with ProcessPoolExecutor(workers) as ex:
            cycles = [c for block in ex.map(_run_block, jobs) for c in block]
    return ExtendedTrace(cycles, include_final, seed, variant, A.shape[0],
                         {"mu": mu.describe()})


def run_noisy(model, steps, rng=None, chains=1, burn_in=0, x0=None):
    """Run ``chains`` independent synchronous noisy chains in lockstep.

    Returns a dict with per-chain time averages of X (``mean``, shape
    chains x n), the pooled second moment ``second`` and the final states.
    Averages exclude the first ``burn_in`` steps.
    """
    if not isinstance(model, NoisyModel):
        raise DomainError("run_noisy needs a NoisyModel")
    rng = as_generator(rng)
    A, eps = model.A, model.epsilon
    n = A.shape[0]
    if x0 is None:
        X = (rng.random((chains, n)) < 0.5).astype(np.float64)
    else:
        X = np.tile(np.asarray(x0, dtype=np.float64), (chains, 1))
    s1 = np.zeros((chains, n))
    s2 = np.zeros((n, n))
    kept = 0
    for t in range(burn_in + steps):
        Q = eps + (1 - 2 * eps) * (X @ A.T)
        X = (rng.random((chains, n)) < Q).astype(np.float64)
        if t >= burn_in:
            s1 += X
            s2 += X.T @ X
            kept += 1
    return {"mean": s1 / kept, "second": s2 / (kept * chains), "final": X,
            "steps": kept}


# --------------------------------------------------------------------------
# diagnostics

def variance_diagnostics(A, pi, x):
    """V_pi(x), the vector V_{a_u}(x) and sum_u pi_u^2 V_{a_u}(x)."""
    A = as_matrix(A)
    pi = np.asarray(pi, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    s = pi @ x
    q = A @ x
    va = q * (1 - q)
    return float(s * (1 - s)), va, float(pi ** 2 @ va)


# --------------------------------------------------------------------------
# trace files

def write_trace(trace, path):
    """JSON lines: a header line, then one object per cycle."""
    with open(path, "w") as fh:
        head = {"meta": {"n": trace.n, "seed": trace.seed,
                         "variant": trace.variant,
                         "include_final": trace.include_final, **trace.meta}}
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for c in trace.cycles:
            rec = {"cycle": int(c.index), "tau": int(c.tau),
                   "absorbed": int(c.absorbed_to),
                   "states": [bits_to_str(s) for s in c.states]}
            if c.events is not None:
                rec["events"] = [int(e) for e in c.events]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trace(path):
    meta = {}
    cycles = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "meta" in rec:
                meta = dict(rec["meta"])
                continue
            states = np.array([str_to_bits(s) for s in rec["states"]],
                              dtype=np.uint8)
            ev = rec.get("events")
            cycles.append(Trajectory(states, int(rec["tau"]),
                                     int(rec["absorbed"]),
                                     None if ev is None else np.array(ev, dtype=np.int64),
                                     int(rec["cycle"])))
    cycles.sort(key=lambda c: c.index)
    variant = meta.pop("variant", "async" if cycles and cycles[0].events is not None else "sync")
    n = meta.pop("n", len(cycles[0].states[0]) if cycles else None)
    return ExtendedTrace(cycles, bool(meta.pop("include_final", False)),
                         meta.pop("seed", None), variant, n, meta)
