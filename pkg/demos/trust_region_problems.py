"""Newton trust-region runs on the two nonlinear test problems.

The classification objective is a smooth nonconvex least-squares loss on
tanh outputs; the assimilation objective fits a Lorenz-96 initial state to
noisy observations of its own trajectory.  Each outer iteration solves the
quadratic model approximately with one of three truncated inner solvers.
On a quadratic model all three produce the same inner iterates until they
meet the boundary or negative curvature, so their counts tend to agree.

    python demos/trust_region_problems.py [--assimilation-size 40]
"""

import argparse
import time

import numpy as np

from qnkrylov.problems import (
    assimilation_functions,
    classification_functions,
    make_assimilation,
    make_classification,
)
from qnkrylov.trust_region import SUBSOLVERS, TrustRegionConfig, tr_newton


def table(title, fns, z0, config):
    print(f"\n{title}")
    print(f"{'subsolver':<9}{'status':>12}{'outer':>7}{'obj':>6}{'grad':>6}{'hprod':>7}"
          f"{'f':>14}{'|grad|':>10}{'secs':>7}")
    for name in sorted(SUBSOLVERS):
        t0 = time.perf_counter()
        r = tr_newton(*fns, z0, config, name)
        print(f"{name:<9}{r.status:>12}{r.outer_iterations:>7}{r.obj_evals:>6}{r.grad_evals:>6}"
              f"{r.hvp_evals:>7}{r.f:>14.6e}{r.gnorm:>10.1e}{time.perf_counter() - t0:>7.2f}")
    return r


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--assimilation-size", type=int, default=40)
    args = ap.parse_args()
    config = TrustRegionConfig()

    prob = make_classification(N=2000, n=100, seed=0)
    r = table("binary classification, N = 2000 samples, n = 100 features", classification_functions(prob),
              np.zeros(100), config)
    err = np.mean(np.sign(prob.A.T @ r.z) != prob.b)
    print(f"training error of the last solution: {100 * err:.1f}%")

    p = make_assimilation(n=args.assimilation_size, seed=0)
    r = table(f"Lorenz-96 assimilation, n = {p.n}, {p.n_obs_times} observation times",
              assimilation_functions(p), p.zb.copy(), config)
    print(f"background error {np.linalg.norm(p.zb - p.truth):.3f} -> "
          f"analysis error {np.linalg.norm(r.z - p.truth):.3f}")


if __name__ == "__main__":
    main()
