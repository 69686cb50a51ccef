#!/usr/bin/env python3
"""Recover the interaction matrix of K_5 from simulated cycles.

Squared Frobenius error of the maximum likelihood estimate falls roughly
like 1/m in the number of observed cycles.
"""
import numpy as np

from voterlab.inference import LossConfig, estimate
from voterlab.model import build_matrix, complete_graph
from voterlab.simulate import InitialDistribution, run_extended


def main(seeds=10):
    A = build_matrix(complete_graph(5), "uniform_neighbor")
    mu = InitialDistribution.product_bernoulli(0.5)
    ms = [125, 250, 500, 1000, 2000, 4000]
    med = []
    for m in ms:
        err = [estimate(run_extended(A, "sync", mu, m, 100 + s),
                        LossConfig(lambda_m=0.0), A.A).frob_error ** 2
               for s in range(seeds)]
        med.append(np.median(err))
        print(f"m={m:5d}  median ||A_hat - A||_F^2 = {med[-1]:.2e}")
    slope = np.polyfit(np.log(ms), np.log(med), 1)[0]
    print(f"log-log slope {slope:.2f}")


if __name__ == "__main__":
    main()
