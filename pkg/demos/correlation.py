#!/usr/bin/env python3
"""Stationary correlation of the extended process and the noisy model.

For each graph the script solves for M exactly, checks M = A M A^T + Q,
and shows where Q pi vanishes (uniform pi) and where it does not.  Then it
iterates the noisy fixed point and compares its contraction rate with
(1 - 2 eps)^2.
"""
from voterlab.correlation import lyapunov_solve_noisy, voter_lyapunov
from voterlab.model import build_matrix, complete_graph, cycle_graph, star_graph
from voterlab.simulate import InitialDistribution

GRAPHS = [("K5", build_matrix(complete_graph(5), "uniform_neighbor")),
          ("C6-lazy", build_matrix(cycle_graph(6), "lazy")),
          ("star5-lazy", build_matrix(star_graph(5), "lazy"))]


def main():
    mu = InitialDistribution.product_bernoulli(0.5)
    for name, A in GRAPHS:
        r = voter_lyapunov(A, mu)
        print(f"{name:<11} residual {r.lyapunov_residual:.1e}  |Q pi| "
              f"{r.extra['q_pi_residual']:.1e}  lambda(Q) in "
              f"[{r.eig_Q[0]:+.3f}, {r.eig_Q[-1]:+.3f}]")
    for eps in (0.05, 0.2, 0.4):
        sol = lyapunov_solve_noisy(GRAPHS[1][1], eps)
        print(f"eps={eps:.2f}  iterations {sol.iterations:5d}  rate {sol.rate:.3f}  "
              f"(1-2eps)^2 {(1 - 2 * eps) ** 2:.3f}  lambda_min {sol.lambda_min:.3f}")


if __name__ == "__main__":
    main()
