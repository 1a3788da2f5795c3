"""Configured solver runs on file or synthetic matrices."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..broyden import PhiSchedule, broyden_solve
from ..core import QuadraticModel, SymmetricOperator
from ..krylov import diom_solve, fom_solve, pcg_solve
from ..limited_memory import lbfgs_solve, lsr1_solve
from ..problems import synthetic_spd
from .mmio import read_matrix_market
from .traces import TraceFile, export_trace, trace_file

__all__ = ["METHODS", "ExperimentConfig", "load_matrix", "parse_synthetic", "run_experiment"]

METHODS = ("cg", "fom", "diom", "lbfgs", "lsr1", "broyden")


@dataclass(frozen=True)
class ExperimentConfig:
    """One solver run.

    ``matrix`` is a MatrixMarket path or ``synthetic:n=200,kappa=1e6[,seed=0][,spectrum=linear]``.
    ``memory=None`` means full memory (``m = n``).  ``rhs`` is ``"hundred"``
    (``100 * ones``), ``"ones"`` or ``"random"``; ``x0`` is ``"zeros"`` or
    ``"random"``.  Random choices draw from ``seed``.
    """

    matrix: str = "synthetic:n=100,kappa=1e3"
    method: str = "cg"
    memory: Optional[int] = None
    phi: str = "bfgs"
    rtol: float = 1e-8
    atol: float = 0.0
    maxit: Optional[int] = None
    rhs: str = "hundred"
    x0: str = "zeros"
    trace_path: Optional[str] = None
    trace_format: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.memory is not None and self.memory < 1:
            raise ValueError("memory must be at least 1")
        if not self.rtol > 0 and not self.atol > 0:
            raise ValueError("need a positive rtol or atol")
        if self.rtol < 0 or self.atol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.rhs not in ("hundred", "ones", "random"):
            raise ValueError(f"unknown rhs {self.rhs!r}")
        if self.x0 not in ("zeros", "random"):
            raise ValueError(f"unknown x0 {self.x0!r}")
        PhiSchedule.parse(self.phi)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_synthetic(spec: str) -> dict:
    body = spec.split(":", 1)[1] if ":" in spec else ""
    out = {"n": 100, "kappa": 1e3, "seed": 0, "spectrum": "loguniform"}
    for item in filter(None, body.split(",")):
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in out:
            raise ValueError(f"unknown synthetic parameter {key!r}")
        out[key] = type(out[key])(float(val)) if key in ("n", "seed") else (
            float(val) if key == "kappa" else val.strip())
    return out


def load_matrix(source: str) -> SymmetricOperator:
    if source.startswith("synthetic"):
        p = parse_synthetic(source)
        return synthetic_spd(p["n"], p["kappa"], p["seed"], p["spectrum"])
    return read_matrix_market(source)


def _vector(kind: str, n: int, rng) -> np.ndarray:
    if kind == "hundred":
        return np.full(n, 100.0)
    if kind == "ones":
        return np.ones(n)
    if kind == "zeros":
        return np.zeros(n)
    return rng.standard_normal(n)


def run_experiment(config: ExperimentConfig, operator: Optional[SymmetricOperator] = None) -> TraceFile:
    """Run the configured solver and return (and optionally write) its trace.

    Breakdown and curvature failures end up in the trace status, never as
    exceptions.  The header holds the configuration, the matrix name,
    ``n``, and the exact condition number when the spectrum is known.
    """
    A = operator if operator is not None else load_matrix(config.matrix)
    n = A.n
    rng = np.random.default_rng(config.seed)
    b = _vector(config.rhs, n, rng)
    x0 = _vector(config.x0, n, rng)
    m = n if config.memory is None else config.memory
    kw = dict(rtol=config.rtol, atol=config.atol, maxit=config.maxit)
    model = QuadraticModel(A, b)
    method = config.method
    if method == "cg":
        _, trace = pcg_solve(A, b, x0=x0, **kw)
    elif method == "fom":
        _, trace = fom_solve(A, b, x0=x0, **kw)
    elif method == "diom":
        _, trace = diom_solve(A, b, x0=x0, m=None if config.memory is None else m, **kw)
    elif method == "lbfgs":
        _, trace = lbfgs_solve(model, m, x0=x0, **kw)
    elif method == "lsr1":
        _, trace = lsr1_solve(model, m, x0=x0, **kw)
    else:
        _, trace = broyden_solve(model, x0=x0, schedule=config.phi, **kw)
    header = {
        "config": config.as_dict(),
        "matrix": A.name,
        "n": n,
        "kappa": A.condition_number(),
    }
    tf = trace_file(trace, header)
    if config.trace_path:
        export_trace(tf, config.trace_format, config.trace_path)
    return tf
