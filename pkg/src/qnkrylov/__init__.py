"""Conjugate gradients, Broyden-class and limited-memory quasi-Newton methods,
FOM/DIOM, and truncated trust-region solvers, with executable checks of the
identities that tie them together on quadratics."""

from .broyden import (
    PhiSchedule,
    broyden_solve,
    broyden_update,
    gamma_next,
    gamma_sr1_next,
    phi_critical,
    phi_critical_from_gamma,
    sr1_phi,
    sr1_update,
)
from .core import (
    BreakdownError,
    DimensionError,
    Preconditioner,
    QuadraticModel,
    SolveTrace,
    SolverError,
    SymmetricOperator,
    TraceRecord,
    ZeroCurvatureError,
    exact_linesearch,
    q_gradient,
    q_value,
)
from .krylov import diom_identity_report, diom_solve, fom_solve, pcg_solve
from .limited_memory import LbfgsMemory, Lsr1Memory, lbfgs_solve, lsr1_solve
from .problems import synthetic_spd
from .trust_region import (
    SubproblemResult,
    TrustRegionConfig,
    steihaug_tcg,
    tr_diom,
    tr_lbfgs,
    tr_newton,
)

__version__ = "0.1.0"

__all__ = [
    "PhiSchedule", "broyden_solve", "broyden_update", "gamma_next", "gamma_sr1_next",
    "phi_critical", "phi_critical_from_gamma", "sr1_phi", "sr1_update",
    "BreakdownError", "DimensionError", "Preconditioner", "QuadraticModel", "SolveTrace",
    "SolverError", "SymmetricOperator", "TraceRecord", "ZeroCurvatureError",
    "exact_linesearch", "q_gradient", "q_value",
    "diom_identity_report", "diom_solve", "fom_solve", "pcg_solve",
    "LbfgsMemory", "Lsr1Memory", "lbfgs_solve", "lsr1_solve",
    "synthetic_spd",
    "SubproblemResult", "TrustRegionConfig", "steihaug_tcg", "tr_diom", "tr_lbfgs", "tr_newton",
]
