"""Command-line front end: ``voterlab <subcommand> [options]``.

Exit codes: 2 for configuration errors, 1 for failed verification, 0
otherwise.
"""
import argparse
import os
import sys
import time

import numpy as np

from . import io
from .chain import MAX_EXACT_CHAIN, AbsorbingChain
from .consensus import (bound_report, drift_identity_check, empirical_tau_stats,
                        exact_expected_tau, expectation_bound_check,
                        exponential_moment_check, instance_library,
                        lower_bound_check, mu_prefactor, sum_exceedance,
                        survival_check)
from .correlation import (exact_correlation, lyapunov_solve_noisy,
                          noisy_exact_correlation, twocorr, voter_lyapunov)
from .errors import VoterlabError
from .inference import (LossConfig, estimate, frobenius_error, kl_bernoulli,
                        lambda_default)
from .model import (GRAPH_FAMILIES, InteractionMatrix, build_matrix,
                    comparison_report, graph_family, phi_A, phi_complete,
                    random_matrix, spectral_report, stationary_distribution)
from .pathmodel import (PathModel, hitting_prob, hitting_prob_linear,
                        hitting_probs, simulate_path)
from .simulate import InitialDistribution, read_trace, run_extended, write_trace


class ConfigError(Exception):
    """Invalid command-line configuration (exit code 2)."""


def resolve_threads(value):
    if value is None:
        env = os.environ.get("VOTERLAB_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"VOTERLAB_THREADS={env!r} is not an integer") from exc
        else:
            value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError("--threads must be >= 1")
    return value


def _need_seed(args):
    if args.seed is None:
        raise ConfigError("--seed is required for stochastic runs")
    return args.seed


def _load_model(args, allow_graph=True):
    """InteractionMatrix and optional Graph from --matrix or --graph/--kind."""
    if getattr(args, "matrix", None):
        return io.read_matrix(args.matrix), None
    if allow_graph and getattr(args, "graph", None):
        if not args.kind:
            raise ConfigError("--graph needs --kind")
        g = io.read_graph(args.graph)
        return build_matrix(g, args.kind), g
    raise ConfigError("give --matrix" + (" or --graph with --kind" if allow_graph else ""))


def _model_args(p, graph=True):
    p.add_argument("--matrix", help="interaction matrix JSON")
    if graph:
        p.add_argument("--graph", help="graph JSON")
        p.add_argument("--kind", choices=["lazy", "uniform_neighbor"])


# --------------------------------------------------------------------------
# subcommands

def cmd_gen_matrix(args):
    if args.random:
        A = random_matrix(args.random, np.random.default_rng(_need_seed(args)))
        g = None
    else:
        if args.graph:
            g = io.read_graph(args.graph)
        elif args.family:
            if args.n is None:
                raise ConfigError("--family needs --n")
            g = graph_family(args.family, args.n, self_loops=args.self_loops)
        else:
            raise ConfigError("give --graph, --family or --random")
        if not args.kind:
            raise ConfigError("--kind is required with a graph")
        A = build_matrix(g, args.kind)
    if args.graph_out and g is not None:
        io.write_graph(g, args.graph_out)
    io.write_matrix(A, args.out)
    return 0


def cmd_spectral(args):
    A, g = _load_model(args)
    rng = np.random.default_rng(args.seed) if args.mode == "sampled" else None
    if args.mode == "sampled" and args.seed is None:
        raise ConfigError("--mode sampled needs --seed")
    rep = spectral_report(A, g, args.mode, args.samples, rng).to_dict()
    rep["pi"] = stationary_distribution(A).pi
    if g is not None and args.kind:
        rep["comparisons"] = comparison_report(g, args.kind) \
            if args.kind == "lazy" or len(g.self_loops) == g.n else []
    io.write_json(rep, args.out)
    return 0


def cmd_simulate(args):
    A, _ = _load_model(args)
    mu = io.parse_mu(args.mu)
    seed = _need_seed(args)
    tr = run_extended(A, args.variant, mu, args.m, seed,
                      include_final=args.include_final, cap=args.cap,
                      workers=resolve_threads(args.threads))
    if args.out is None:
        raise ConfigError("--out is required")
    write_trace(tr, args.out)
    return 0


def cmd_bounds(args):
    A, _ = _load_model(args)
    mu = io.parse_mu(args.mu)
    sd = stationary_distribution(A)
    phi = phi_A(A, sd.pi).value
    rep = bound_report(phi, sd.pi_star, mu_prefactor(A, mu, sd.pi), args.m,
                       args.delta).to_dict()
    n = A.n
    if n <= MAX_EXACT_CHAIN:
        chain = AbsorbingChain(A)
        rep["exact"] = {
            "etau_mu": exact_expected_tau(A, "sync", mu, chain).mean,
            "expectation_check": expectation_bound_check(A, chain=chain),
            "exponential_moment_check": exponential_moment_check(A, chain),
            "survival_check": survival_check(A, 100, chain),
        }
    if args.mc:
        tr = run_extended(A, "sync", mu, args.mc, _need_seed(args),
                          workers=resolve_threads(args.threads))
        emp = empirical_tau_stats(tr)
        if args.m > 1 and args.mc >= args.m:
            emp["sum_exceedance"] = sum_exceedance(tr.taus, args.m,
                                                   rep["sum_quantile"])[0]
        rep["empirical"] = emp
    io.write_json(rep, args.out)
    return 0


def cmd_estimate(args):
    tr = read_trace(args.trace)
    A_star = io.read_matrix(args.astar) if args.astar else None
    support = None
    if args.support == "known":
        if A_star is None:
            raise ConfigError("--support known needs --astar")
        support = A_star.A > 0
    m = tr.m
    if args.lam == "auto":
        if A_star is not None:
            ref = A_star
        else:
            # plug-in from the unpenalised estimate
            pre = estimate(tr, LossConfig(0.0, support=support)).A_hat
            pre = np.where(pre > 1e-3, pre, 0.0)
            pre = pre / pre.sum(axis=1, keepdims=True)
            ref = InteractionMatrix(pre)
        sd = stationary_distribution(ref)
        lam = lambda_default(ref.n, sd.pi_star, ref.alpha,
                             phi_A(ref, sd.pi).value, m)
    else:
        try:
            lam = float(args.lam)
        except ValueError as exc:
            raise ConfigError("--lambda must be 'auto' or a number") from exc
    cfg = LossConfig(lam, clip=args.clip, support=support,
                     max_iters=args.max_iters)
    res = estimate(tr, cfg, A_star)
    out = res.to_dict()
    out["m"] = m
    if A_star is not None:
        out["error"] = frobenius_error(res.A_hat, A_star)
    io.write_json(out, args.out)
    return 0


def cmd_lyapunov(args):
    A, _ = _load_model(args, allow_graph=True)
    n = A.n
    if args.epsilon is not None:
        sol = lyapunov_solve_noisy(A, args.epsilon, tol=args.tol)
        out = sol.to_dict()
        out["epsilon"] = args.epsilon
        out["lambda_min_ge_eps2"] = bool(sol.lambda_min >= args.epsilon ** 2 - 1e-12)
        out["rate_ok"] = bool(sol.rate <= sol.rate_bound + 0.05)
        if args.mode == "check" and n <= MAX_EXACT_CHAIN:
            Mx, mx = noisy_exact_correlation(A, args.epsilon)
            out["exact_max_abs_diff"] = float(np.abs(Mx - sol.M).max())
        io.write_json(out, args.out)
        return 0
    mu = io.parse_mu(args.mu)
    if n <= MAX_EXACT_CHAIN:
        res = voter_lyapunov(A, mu)
    else:
        if not args.mc:
            raise ConfigError(f"n > {MAX_EXACT_CHAIN} needs --mc cycles")
        tr = run_extended(A, "sync", mu, args.mc, _need_seed(args),
                          include_final=True,
                          workers=resolve_threads(args.threads))
        res = voter_lyapunov(A, mu, trace=tr)
    out = res.to_dict()
    if args.mode == "solve":
        out = {"M": res.M, "Q": res.Q, "mode": res.extra["mode"]}
    io.write_json(out, args.out)
    return 0


def cmd_path(args):
    if args.k < 1 or args.k > args.n - 1:
        raise ConfigError("need 1 <= k <= n-1")
    model = PathModel.half(args.n) if args.bias == "half" else PathModel.default(args.n)
    h = hitting_probs(model, args.k)
    rows = []
    if args.reps:
        sim = simulate_path(model, args.k, args.reps, _need_seed(args))
        rows = [(u + 1, h[u], sim.frequency[u], sim.stderr[u])
                for u in range(args.n)]
    else:
        rows = [(u + 1, h[u], "", "") for u in range(args.n)]
    header = ["vertex", "h_closed_form", "h_empirical", "stderr"]
    if args.out:
        io.write_csv(rows, header, args.out)
    else:
        print(",".join(header))
        for r in rows:
            print(",".join(repr(float(v)) if isinstance(v, (float, np.floating))
                           else str(v) for v in r))
    return 0


# --------------------------------------------------------------------------
# verify

def _row(results, instance, check, value, limit, ok, kind="invariant"):
    results.append({"instance": instance, "check": check, "value": value,
                    "limit": limit, "pass": bool(ok), "kind": kind})


def verify_suite(suite="quick"):
    """Run the invariant checks; returns a list of result rows.

    Rows of kind ``invariant`` are identities that must hold.  Rows of kind
    ``claim`` compare against published bounds that are known not to hold on
    every instance and are reported for information.
    """
    max_n = 6 if suite == "quick" else 10
    res = []
    for n in range(3, 13 if suite == "full" else 9):
        A = build_matrix(graph_family("complete", n), "uniform_neighbor")
        v = phi_A(A).value
        _row(res, f"K{n}", "phi_A closed form", abs(v - phi_complete(n)), 1e-12,
             abs(v - phi_complete(n)) <= 1e-12)
    half = InitialDistribution.product_bernoulli(0.5)
    off = InitialDistribution.product_bernoulli(0.5, exclude_consensus=True)
    for name, A in instance_library(max_n):
        n = A.n
        chain = AbsorbingChain(A)
        sd = stationary_distribution(A)
        X = np.array([[(mk >> u) & 1 for u in range(n)] for mk in range(1 << n)])
        h = chain.absorption_one()
        e = float(np.abs(h - X @ sd.pi).max())
        _row(res, name, "absorption = pi^T x", e, 1e-10, e <= 1e-10)
        d = drift_identity_check(A, off)
        _row(res, name, "drift identity", d.absolute, 1e-10, d.absolute <= 1e-10)
        s = survival_check(A, 60 if n > 8 else 150, chain)
        _row(res, name, "survival bound", s["violations"], 0, s["violations"] == 0)
        lb = lower_bound_check(A, off, chain)
        _row(res, name, "E0[tau] lower bound", lb["etau"] - lb["lower"], 0,
             lb["holds"])
        ly = voter_lyapunov(A, half)
        _row(res, name, "Lyapunov residual", ly.lyapunov_residual, 1e-8,
             ly.lyapunov_residual <= 1e-8)
        qpq = float(abs(sd.pi @ ly.Q @ sd.pi))
        _row(res, name, "pi^T Q pi = 0", qpq, 1e-8, qpq <= 1e-8)
        _row(res, name, "Q pi = 0", ly.extra["q_pi_residual"], 1e-8,
             ly.extra["q_pi_residual"] <= 1e-8, "claim")
        _row(res, name, "lambda1(M) >= min(R, lambda2(Q))",
             ly.lambda_min_bounds["slack"], 0, ly.lambda_min_bounds["holds"])
        w = half.pmf(n)
        Me = exact_correlation(A, w, False, chain)
        Mi = exact_correlation(A, w, True, chain)
        m1, m2 = half.moments(n)
        c0, c1 = half.consensus_mass(n)
        pred = twocorr(Me.M, Me.window_mean, sd.pi, m1, c0 + c1,
                       sd.pi @ (m1 - c1))
        e = float(np.abs(pred - Mi.M).max())
        _row(res, name, "two-correlation relation", e, 1e-8, e <= 1e-8)
        lb2 = float(np.linalg.eigvalsh(m2)[0]) / Me.window_mean
        _row(res, name, "lambda_min(M') >= lambda_min(E0 XX^T)/E0 tau",
             Me.lambda_min - lb2, 0, Me.lambda_min >= lb2 - 1e-12)
        for eps in (0.05, 0.25):
            sol = lyapunov_solve_noisy(A, eps)
            Mx, _ = noisy_exact_correlation(A, eps)
            e = float(np.abs(Mx - sol.M).max())
            _row(res, name, f"noisy fixed point eps={eps}", e, 1e-8, e <= 1e-8)
            _row(res, name, f"noisy rate eps={eps}", sol.rate,
                 sol.rate_bound + 0.05, sol.rate <= sol.rate_bound + 0.05)
            _row(res, name, f"noisy lambda_min >= eps^2 eps={eps}",
                 sol.lambda_min, eps ** 2, sol.lambda_min >= eps ** 2 - 1e-12)
        ec = expectation_bound_check(A, chain=chain)
        _row(res, name, "E[tau] <= log(1/(2pi*))/phi_A", ec["violations"], 0,
             ec["violations"] == 0, "claim")
        mc = exponential_moment_check(A, chain)
        _row(res, name, "exponential moment bound", mc["violations"], 0,
             mc["violations"] == 0, "claim")
        if n <= 8:
            ac = expectation_bound_check(A, "async")
            _row(res, name, "async E[tau] <= log(1/(2pi*))/phi'_A",
                 ac["violations"], 0, ac["violations"] == 0, "claim")
    for fam in ("cycle", "path", "star"):
        for n in (4, 6):
            g = graph_family(fam, n)
            for c in comparison_report(g, "lazy"):
                _row(res, f"{fam}{n}-lazy", c["name"], c["slack"], 0, c["holds"])
    rng = np.random.default_rng(0)
    worst = 0.0
    for n in (2, 5, 12) if suite == "quick" else (2, 5, 12, 30):
        for model in (PathModel.default(n),
                      PathModel(tuple(rng.uniform(0.05, 0.95, n)))):
            for u in range(1, n + 1):
                for k in range(1, n):
                    worst = max(worst, abs(hitting_prob(model, u, k)
                                           - hitting_prob_linear(model, u, k)))
    _row(res, "path", "closed form = linear solve", worst, 1e-10, worst <= 1e-10)
    viol = 0
    for p in np.linspace(0, 1, 100):
        for q in np.linspace(0.05, 0.95, 100):
            k = kl_bernoulli(p, q, alpha=0.05)
            viol += (not k["lower_ok"]) + (not k["upper_ok"])
    _row(res, "grid", "KL sandwich", viol, 0, viol == 0)
    return res


def cmd_verify(args):
    t0 = time.time()
    res = verify_suite(args.suite)
    width = max(len(r["instance"]) for r in res)
    cw = max(len(r["check"]) for r in res)
    for r in res:
        tag = "PASS" if r["pass"] else "FAIL"
        v = r["value"]
        v = f"{v:.3e}" if isinstance(v, float) else str(v)
        print(f"{tag}  {r['instance']:<{width}}  {r['check']:<{cw}}  "
              f"{v:>10}  [{r['kind']}]")
    inv = [r for r in res if r["kind"] == "invariant"]
    claims = [r for r in res if r["kind"] == "claim"]
    bad_inv = sum(not r["pass"] for r in inv)
    bad_claim = sum(not r["pass"] for r in claims)
    print(f"invariants: {len(inv) - bad_inv}/{len(inv)} pass; "
          f"published-bound checks: {len(claims) - bad_claim}/{len(claims)} "
          f"pass; {time.time() - t0:.1f}s")
    if args.out:
        io.write_json(res, args.out)
    failed = bad_inv > 0 or (args.strict and bad_claim > 0)
    return 1 if failed else 0


# --------------------------------------------------------------------------

def build_parser():
    def globals_parser(default):
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default, help="64-bit master seed")
        g.add_argument("--threads", type=int, default=default,
                       help="worker processes (default: VOTERLAB_THREADS or cpu count)")
        return g

    # the flags work before or after the subcommand; SUPPRESS keeps the
    # subcommand's unset copy from clobbering a value given up front
    common = globals_parser(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="voterlab", parents=[globals_parser(None)],
                                description="Voter model simulation, bounds and inference.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-matrix", parents=[common], help="build an interaction matrix")
    s.add_argument("--graph")
    s.add_argument("--family", choices=sorted(GRAPH_FAMILIES))
    s.add_argument("--n", type=int)
    s.add_argument("--self-loops", action="store_true")
    s.add_argument("--kind", choices=["lazy", "uniform_neighbor"])
    s.add_argument("--random", type=int, metavar="N", help="random N x N matrix")
    s.add_argument("--graph-out")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_gen_matrix)

    s = sub.add_parser("spectral", parents=[common], help="phi_A, psi, conductance")
    _model_args(s)
    s.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_spectral)

    s = sub.add_parser("simulate", parents=[common], help="write an extended-process trace")
    _model_args(s)
    s.add_argument("--mu", default='{"bernoulli": 0.5}')
    s.add_argument("--m", type=int, default=1000)
    s.add_argument("--variant", choices=["sync", "async"], default="sync")
    s.add_argument("--include-final", action="store_true")
    s.add_argument("--cap", type=int, default=10 ** 8)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bounds", parents=[common], help="consensus-time bounds")
    _model_args(s)
    s.add_argument("--mu", default='{"bernoulli": 0.5}')
    s.add_argument("--m", type=int, default=1, help="cycles in the tail/quantile bounds")
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--mc", type=int, default=0, help="simulated cycles for empirical stats")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("estimate", parents=[common], help="penalised MLE of A")
    s.add_argument("--trace", required=True)
    s.add_argument("--lambda", dest="lam", default="0")
    s.add_argument("--support", choices=["known", "unknown"], default="unknown")
    s.add_argument("--astar")
    s.add_argument("--clip", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("lyapunov", parents=[common], help="correlation matrices")
    _model_args(s)
    s.add_argument("--mu", default='{"bernoulli": 0.5}')
    s.add_argument("--epsilon", type=float)
    s.add_argument("--mode", choices=["check", "solve"], default="check")
    s.add_argument("--mc", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("path", parents=[common], help="path-model informative counts")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--reps", type=int, default=0)
    s.add_argument("--bias", choices=["default", "half"], default="default")
    s.add_argument("--out")
    s.set_defaults(func=cmd_path)

    s = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    s.add_argument("--suite", choices=["quick", "full"], default="quick")
    s.add_argument("--strict", action="store_true",
                   help="also fail on published-bound checks")
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, VoterlabError, OSError, ValueError, KeyError) as exc:
        print(f"voterlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
