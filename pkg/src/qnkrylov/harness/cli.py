"""Command-line entry point: ``qnkrylov {solve,verify,trunk,inspect}``.

Exit codes: 0 success, 1 a checked property failed (or a trust-region run
did not converge), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..problems import (
    assimilation_functions,
    classification_from_idx,
    classification_functions,
    make_assimilation,
    make_classification,
    rosenbrock_functions,
)
from ..trust_region import SUBSOLVERS, TrustRegionConfig, tr_newton
from .experiment import METHODS, ExperimentConfig, run_experiment
from .mmio import MatrixMarketError
from .traces import read_trace
from .verify import SUITES, verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnkrylov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("solve", help="run one linear solver and write its trace")
    s.add_argument("--matrix", default="synthetic:n=100,kappa=1e3",
                   help="MatrixMarket path or synthetic:n=..,kappa=..[,seed=..][,spectrum=linear]")
    s.add_argument("--method", choices=METHODS, default="cg")
    s.add_argument("--memory", type=int, default=None, help="memory m (default: n)")
    s.add_argument("--phi", default="bfgs", help="bfgs, dfp, sr1 or a number (broyden only)")
    s.add_argument("--rtol", type=float, default=1e-8)
    s.add_argument("--atol", type=float, default=0.0)
    s.add_argument("--maxit", type=int, default=None)
    s.add_argument("--rhs", choices=("hundred", "ones", "random"), default="hundred")
    s.add_argument("--x0", choices=("zeros", "random"), default="zeros")
    s.add_argument("--trace", default=None, help="output path (.json or .csv)")
    s.add_argument("--format", choices=("json", "csv"), default=None)
    s.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("verify", help="run identity suites")
    v.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    v.add_argument("--n", type=int, default=None)
    v.add_argument("--kappa", type=float, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--spectrum", choices=("linear", "loguniform"), default=None)
    v.add_argument("--json", action="store_true", help="print the machine-readable report")

    t = sub.add_parser("trunk", help="Newton trust-region run on a test problem")
    t.add_argument("--problem", choices=("rosenbrock", "classification", "assimilation"),
                   default="rosenbrock")
    t.add_argument("--subsolver", choices=sorted(SUBSOLVERS) + ["all"], default="all")
    t.add_argument("--memory", type=int, default=5)
    t.add_argument("--delta0", type=float, default=1.0)
    t.add_argument("--eta1", type=float, default=0.25)
    t.add_argument("--eta2", type=float, default=0.75)
    t.add_argument("--gtol", type=float, default=1e-5)
    t.add_argument("--max-outer", type=int, default=500)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--size", type=int, default=None,
                   help="state dimension (assimilation) or feature count (classification)")
    t.add_argument("--samples", type=int, default=2000, help="classification sample count")
    t.add_argument("--images", default=None, help="IDX image file (classification)")
    t.add_argument("--labels", default=None, help="IDX label file (classification)")
    t.add_argument("--log", default=None, help="write per-iteration logs as JSON")

    i = sub.add_parser("inspect", help="summarize a trace file")
    i.add_argument("path")
    i.add_argument("--format", choices=("json", "csv"), default=None)
    return p


def _solve(args) -> int:
    cfg = ExperimentConfig(matrix=args.matrix, method=args.method, memory=args.memory, phi=args.phi,
                           rtol=args.rtol, atol=args.atol, maxit=args.maxit, rhs=args.rhs,
                           x0=args.x0, trace_path=args.trace, trace_format=args.format,
                           seed=args.seed)
    tf = run_experiment(cfg)
    last = tf.records[-1]
    print(f"{tf.header['matrix']}  n={tf.header['n']}  method={cfg.method}  status={tf.status}  "
          f"iterations={tf.iterations}  rel_res={last.rel_res:.3e}")
    return EXIT_OK


def _verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    reports = []
    for name in names:
        params = {}
        if name != "tr-monotonicity":
            for key in ("n", "kappa", "seed", "spectrum"):
                val = getattr(args, key)
                if val is not None:
                    params[key] = val
        elif args.seed is not None:
            params["seed"] = args.seed
        rep = verify(name, **params)
        reports.append(rep.as_dict())
        ok &= rep.passed
        if not args.json:
            print(f"[{'PASS' if rep.passed else 'FAIL'}] {name} {rep.params}")
            for line in rep.lines():
                print("  " + line)
    if args.json:
        print(json.dumps(reports, indent=1, default=float))
    return EXIT_OK if ok else EXIT_FAIL


def _trunk(args) -> int:
    if args.problem == "rosenbrock":
        fns, z0 = rosenbrock_functions(), np.array([-1.2, 1.0])
    elif args.problem == "classification":
        if (args.images is None) != (args.labels is None):
            raise ValueError("--images and --labels go together")
        if args.images:
            prob = classification_from_idx(args.images, args.labels)
        else:
            prob = make_classification(args.samples, args.size or 100, args.seed)
        fns, z0 = classification_functions(prob), np.zeros(prob.n_features)
    else:
        prob = make_assimilation(n=args.size or 40, seed=args.seed)
        fns, z0 = assimilation_functions(prob), prob.zb.copy()
    cfg = TrustRegionConfig(delta0=args.delta0, eta1=args.eta1, eta2=args.eta2, gtol=args.gtol,
                            max_outer=args.max_outer, memory=args.memory)
    names = sorted(SUBSOLVERS) if args.subsolver == "all" else [args.subsolver]
    ok = True
    logs = {}
    print(f"{'subsolver':<9} {'status':<16} {'outer':>5} {'obj_eval':>8} {'grad_eval':>9} "
          f"{'hprod_eval':>10} {'f':>14} {'|grad f|':>10}")
    for name in names:
        res = tr_newton(*fns, z0, cfg, name)
        ok &= res.status == "converged"
        logs[name] = {"summary": res.summary(), "log": res.log}
        print(f"{name:<9} {res.status:<16} {res.outer_iterations:>5} {res.obj_evals:>8} "
              f"{res.grad_evals:>9} {res.hvp_evals:>10} {res.f:>14.6e} {res.gnorm:>10.2e}")
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            json.dump(logs, fh, indent=1, default=float)
    return EXIT_OK if ok else EXIT_FAIL


def _inspect(args) -> int:
    tf = read_trace(args.path, args.format)
    print(f"method    {tf.header.get('method')}")
    print(f"matrix    {tf.header.get('matrix')}  n={tf.header.get('n')}  kappa={tf.header.get('kappa')}")
    print(f"status    {tf.status}")
    print(f"rows      {len(tf.records)} (iterations {tf.iterations})")
    if tf.records:
        r = tf.records[-1]
        print(f"final     res_norm={r.res_norm:.6e}  rel_res={r.rel_res:.6e}  q={r.q}")
        for level in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
            print(f"to {level:.0e}  {tf.iterations_to(level)}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    handlers = {"solve": _solve, "verify": _verify, "trunk": _trunk, "inspect": _inspect}
    try:
        return handlers[args.verb](args)
    except (OSError, MatrixMarketError, ValueError, KeyError) as exc:
        print(f"qnkrylov: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
