"""Broyden-class directions are scalar multiples of the PCG directions.

Runs BFGS, DFP and the half-way member on one SPD quadratic with a
shadow PCG iteration, and prints the measured proportionality factor
gamma_k next to the value predicted by the scalar recurrence.  BFGS keeps
gamma_k = 1, so it reproduces PCG exactly; smaller phi shrinks gamma and
lengthens the exact line-search step, which is the step-length ordering.
"""

import numpy as np

from qnkrylov.broyden import broyden_solve
from qnkrylov.core import QuadraticModel
from qnkrylov.problems import synthetic_spd


def main(n=20, kappa=100.0):
    A = synthetic_spd(n, kappa, 0, "linear")
    b = np.random.default_rng(1).standard_normal(n)
    model = QuadraticModel(A, b)
    runs = {}
    for sched in ("bfgs", 0.5, "dfp"):
        _, t = broyden_solve(model, schedule=sched, rtol=1e-10, shadow=True)
        runs[str(sched)] = t

    print(f"n = {n}, kappa = {kappa:g}\n")
    print(f"{'k':>3}" + "".join(f"{'gamma ' + k:>14}{'recurrence':>12}" for k in runs))
    K = min(len(t.info["gamma_measured"]) for t in runs.values())
    for k in range(0, K, 2):
        row = "".join(f"{t.info['gamma_measured'][k]:>14.6f}{t.info['gamma_recurrence'][k]:>12.6f}"
                      for t in runs.values())
        print(f"{k:>3}{row}")

    print("\nstep lengths (alpha_k): a smaller phi gives a longer step, PCG gives the shortest")
    print(f"{'k':>3}{'PCG':>12}" + "".join(f"{k:>12}" for k in runs))
    alpha_pcg = runs["bfgs"].info["alpha_pcg"]
    for k in range(0, K, 2):
        row = "".join(f"{t.column('alpha')[k + 1]:>12.5f}" for t in runs.values())
        print(f"{k:>3}{alpha_pcg[k]:>12.5f}{row}")

    print()
    for k, t in runs.items():
        print(f"  {k:<5} {t.iterations} iterations, status {t.status}")


if __name__ == "__main__":
    main()
