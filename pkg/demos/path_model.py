#!/usr/bin/env python3
"""Informative interactions on a path started from a step configuration.

Compares closed-form hitting probabilities with simulation and shows the
expected number of informative vertices against k log(n/k) + ...
"""
import numpy as np

from voterlab.pathmodel import (PathModel, expected_informative, hitting_probs,
                                simulate_path)


def main():
    n, k = 12, 4
    model = PathModel.default(n)
    h = hitting_probs(model, k)
    sim = simulate_path(model, k, 50000, 12)
    print(" u   closed   simulated  stderr")
    for u in range(n):
        print(f"{u + 1:2d}  {h[u]:.4f}   {sim.frequency[u]:.4f}   {sim.stderr[u]:.4f}")
    print(f"E[N] closed {h.sum():.3f}, simulated {sim.N.mean():.3f}")
    print("\n   n    k     E[N]   log approx   gap")
    for n in (50, 200, 800):
        for k in (1, n // 10, n // 2):
            e = expected_informative(n, k)
            print(f"{n:4d} {k:4d} {e.exact:8.2f} {e.asymptotic:10.2f} {e.gap:6.2f}")


if __name__ == "__main__":
    main()
