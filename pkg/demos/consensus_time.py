#!/usr/bin/env python3
"""Consensus time on small graphs: exact values against the Phi_A bounds.

Prints, for each instance in the built-in library, Phi_A, the worst exact
E[tau | x] over transient starts, the expectation bound and the survival
bound that sums min(1, W (1 - Phi)^t).
"""
import numpy as np

from voterlab.chain import AbsorbingChain
from voterlab.consensus import (etau_bound, etau_survival_bound, instance_library)
from voterlab.model import bit_table, phi_A, stationary_distribution


def main():
    print(f"{'instance':<14}{'Phi_A':>9}{'max E[tau]':>12}{'log bound':>11}{'surv bound':>12}")
    for name, A in instance_library(8):
        sd = stationary_distribution(A)
        phi = phi_A(A, sd.pi).value
        ch = AbsorbingChain(A)
        et = ch.expected_tau_transient()
        s = bit_table(A.n)[ch.transient] @ sd.pi
        W = s * (1 - s) / (sd.pi_star * (1 - sd.pi_star))
        surv = max(etau_survival_bound(phi, w) for w in W)
        flag = "" if et.max() <= etau_bound(phi, sd.pi_star) else "  <- exceeds"
        print(f"{name:<14}{phi:9.4f}{et.max():12.3f}{etau_bound(phi, sd.pi_star):11.3f}"
              f"{surv:12.3f}{flag}")
    # the survival form always holds; the log form fails on dense small graphs


if __name__ == "__main__":
    main()
