"""Linear operators, quadratic models and solve traces shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EPS = np.finfo(np.float64).eps
#: Curvature-zero threshold, scaled by the squared norm of the direction.
EPS_CURV = float(np.sqrt(EPS))

STATUSES = ("converged", "max_iterations", "nonpositive_curvature", "boundary", "breakdown")


class SolverError(Exception):
    """Base class for numerical failures raised by the library."""


class DimensionError(SolverError, ValueError):
    pass


class ZeroCurvatureError(SolverError):
    """Raised when a direction has (numerically) zero curvature."""


class BreakdownError(SolverError):
    """Raised when an update or recurrence would divide by a vanishing quantity.

    ``kind`` names the failing quantity, e.g. ``"curvature"``,
    ``"denominator"`` or ``"sr1"``.
    """

    def __init__(self, message: str, kind: str = "breakdown"):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class SymmetricOperator:
    """The action ``v -> A v`` of a symmetric ``n x n`` matrix.

    ``matrix`` is kept when the operator was built from an explicit (dense or
    sparse) matrix; verification code uses it, solvers never do.
    """

    n: int
    apply: Callable[[np.ndarray], np.ndarray]
    matrix: object = None
    name: str = ""
    eigenvalues: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.n) <= 0:
            raise DimensionError(f"operator dimension must be positive, got {self.n}")

    def __matmul__(self, v):
        return self.apply(v)

    @classmethod
    def from_matrix(cls, M, name: str = "", eigenvalues=None) -> "SymmetricOperator":
        """Wrap a square dense array or scipy sparse matrix."""
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {M.shape}")
        if isinstance(M, np.ndarray):
            M = np.asarray(M, dtype=np.float64)

        def apply(v):
            return np.asarray(M @ v, dtype=np.float64)

        return cls(M.shape[0], apply, matrix=M, name=name, eigenvalues=eigenvalues)

    def dense(self) -> np.ndarray:
        """Dense copy of the matrix, assembled column by column if needed."""
        if self.matrix is not None:
            M = self.matrix
            return M.toarray() if hasattr(M, "toarray") else np.array(M, dtype=np.float64)
        return np.column_stack([self.apply(e) for e in np.eye(self.n)])

    def condition_number(self) -> Optional[float]:
        if self.eigenvalues is None:
            return None
        ev = np.abs(self.eigenvalues)
        return float(ev.max() / ev.min())


@dataclass(frozen=True)
class Preconditioner:
    """The action ``v -> H0 v`` of a symmetric positive-definite matrix."""

    apply: Callable[[np.ndarray], np.ndarray]
    is_identity: bool = False
    matrix: Optional[np.ndarray] = None

    @classmethod
    def identity(cls) -> "Preconditioner":
        return cls(lambda v: np.array(v, dtype=np.float64, copy=True), is_identity=True)

    @classmethod
    def from_matrix(cls, M) -> "Preconditioner":
        M = np.asarray(M, dtype=np.float64)
        return cls(lambda v: M @ v, is_identity=False, matrix=M)

    def dense(self, n: int) -> np.ndarray:
        if self.is_identity:
            return np.eye(n)
        if self.matrix is not None:
            return np.array(self.matrix, dtype=np.float64)
        return np.column_stack([self.apply(e) for e in np.eye(n)])


def as_preconditioner(H0) -> Preconditioner:
    """Accept ``None`` (identity), a :class:`Preconditioner`, or a dense matrix."""
    if H0 is None:
        return Preconditioner.identity()
    if isinstance(H0, Preconditioner):
        return H0
    return Preconditioner.from_matrix(H0)


def as_operator(A) -> SymmetricOperator:
    if isinstance(A, SymmetricOperator):
        return A
    return SymmetricOperator.from_matrix(A)


@dataclass(frozen=True)
class QuadraticModel:
    """``q(x) = 1/2 x'Ax - b'x + c``."""

    operator: SymmetricOperator
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        if b.shape != (self.operator.n,):
            raise DimensionError(
                f"linear term has shape {b.shape}, operator dimension is {self.operator.n}"
            )
        object.__setattr__(self, "b", b)

    @classmethod
    def from_matrix(cls, A, b, c: float = 0.0) -> "QuadraticModel":
        return cls(as_operator(A), b, c)

    @property
    def n(self) -> int:
        return self.operator.n

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


def q_value(model: QuadraticModel, x) -> float:
    """Value of the quadratic at ``x``; one operator application."""
    x = model._check(x)
    return float(0.5 * x @ model.operator.apply(x) - model.b @ x + model.c)


def q_gradient(model: QuadraticModel, x) -> np.ndarray:
    x = model._check(x)
    return model.operator.apply(x) - model.b


def exact_linesearch(model: QuadraticModel, g, d, curvature: Optional[float] = None) -> float:
    """Stationary step ``-g'd / d'Ad`` of ``alpha -> q(x + alpha d)``.

    Pass ``curvature = d'Ad`` when it is already known to save a product.
    """
    d = np.asarray(d, dtype=np.float64)
    if curvature is None:
        curvature = float(d @ model.operator.apply(d))
    if abs(curvature) <= EPS_CURV * float(d @ d):
        raise ZeroCurvatureError(f"d'Ad = {curvature:.3e} is numerically zero")
    return -float(np.dot(g, d)) / curvature


def check_operator(op: SymmetricOperator, samples: int = 3, seed: int = 0,
                   linear_rtol: float = 1e-12, symmetric_rtol: float = 1e-10) -> bool:
    """Sampled linearity and symmetry check of an operator."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        u = rng.standard_normal(op.n)
        v = rng.standard_normal(op.n)
        Au, Av, Auv = op.apply(u), op.apply(v), op.apply(u + v)
        scale = max(np.linalg.norm(Au) + np.linalg.norm(Av), np.finfo(float).tiny)
        if np.linalg.norm(Auv - Au - Av) > linear_rtol * scale:
            return False
        lhs, rhs = u @ Av, v @ Au
        if abs(lhs - rhs) > symmetric_rtol * max(
            np.linalg.norm(u) * np.linalg.norm(Av), np.linalg.norm(v) * np.linalg.norm(Au)
        ):
            return False
    return True


def check_preconditioner(H0: Preconditioner, n: int, samples: int = 3, seed: int = 0) -> bool:
    """Sampled symmetry and positivity check of a preconditioner."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        Hu, Hv = H0.apply(u), H0.apply(v)
        if not u @ Hu > 0:
            return False
        if abs(u @ Hv - v @ Hu) > 1e-10 * np.linalg.norm(u) * np.linalg.norm(Hv):
            return False
    return True


# ---------------------------------------------------------------------------
# traces

TRACE_FIELDS = ("k", "res_norm", "rel_res", "q", "alpha", "curvature", "gamma", "u_kk", "zeta")


@dataclass
class TraceRecord:
    """One row of a :class:`SolveTrace`.

    Row ``k`` describes iterate ``x_k``.  ``alpha``, ``curvature``, ``gamma``,
    ``u_kk`` and ``zeta`` describe the step that produced ``x_k`` from
    ``x_{k-1}`` and are ``None`` on row 0 or when a method has no such quantity.
    """

    k: int
    res_norm: float
    rel_res: float
    q: Optional[float] = None
    alpha: Optional[float] = None
    curvature: Optional[float] = None
    gamma: Optional[float] = None
    u_kk: Optional[float] = None
    zeta: Optional[float] = None

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in TRACE_FIELDS}


class SolveTrace:
    """Per-iteration history of a solve.

    With ``keep_history=True`` the solver also stores iterates and search
    directions (``iterates[k]`` is ``x_k``, ``directions[k]`` the direction
    used from ``x_k``, ``gradients[k]`` is ``A x_k - b``); identity checks
    use those, exporters ignore them.
    """

    def __init__(self, method: str = "", bnorm: float = 1.0, keep_history: bool = False):
        self.method = method
        self.bnorm = float(bnorm) if bnorm > 0 else 1.0
        self.records: list[TraceRecord] = []
        self.status: Optional[str] = None
        self.keep_history = keep_history
        self.iterates: list[np.ndarray] = []
        self.directions: list[np.ndarray] = []
        self.gradients: list[np.ndarray] = []
        self.info: dict = {}

    def append(self, k: int, res_norm: float, **fields) -> TraceRecord:
        if self.records and k <= self.records[-1].k:
            raise ValueError("trace iteration indices must be strictly increasing")
        rec = TraceRecord(k=int(k), res_norm=float(res_norm),
                          rel_res=float(res_norm) / self.bnorm,
                          **{key: (None if val is None else float(val)) for key, val in fields.items()})
        self.records.append(rec)
        return rec

    def finish(self, status: str) -> "SolveTrace":
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        if self.status is not None:
            raise ValueError("trace already has a final status")
        self.status = status
        return self

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=np.float64)

    def iterations_to(self, rel_res: float) -> Optional[int]:
        """First iteration whose relative residual is at most ``rel_res``."""
        for r in self.records:
            if r.rel_res <= rel_res:
                return r.k
        return None

    def __len__(self):
        return len(self.records)

    def __repr__(self):
        return f"SolveTrace(method={self.method!r}, iterations={self.iterations}, status={self.status!r})"
