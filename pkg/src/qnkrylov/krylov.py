"""PCG, the Arnoldi process, FOM and DIOM(m)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    EPS,
    BreakdownError,
    Preconditioner,
    SolveTrace,
    as_operator,
    as_preconditioner,
)

__all__ = [
    "PCGIteration",
    "pcg_solve",
    "ArnoldiBasis",
    "ArnoldiStep",
    "arnoldi_step",
    "fom_solve",
    "DiomWindow",
    "diom_solve",
    "diom_identity_report",
]


def _tolerance(bnorm, rtol, atol):
    return max(atol, rtol * bnorm)


def _start(A, b, x0):
    A = as_operator(A)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    return A, b, x


class PCGIteration:
    """Preconditioned conjugate gradients, one iteration per :meth:`step`.

    Attributes after construction describe iteration ``k``: ``x``, ``g``
    (gradient ``Ax - b``), ``d`` (search direction) and ``rho = g'H0 g``.
    :meth:`step` moves to ``k + 1`` and stores the step length in ``alpha``
    and ``d'Ad`` in ``curvature``.
    """

    def __init__(self, A, b, x0=None, H0: Optional[Preconditioner] = None):
        self.A, self.b, self.x = _start(A, b, x0)
        self.H0 = as_preconditioner(H0)
        self.k = 0
        self.g = self.A.apply(self.x) - self.b
        z = -self.H0.apply(self.g)
        self.rho = -float(self.g @ z)
        self.d = z
        self.alpha = None
        self.curvature = None

    def step(self):
        Ad = self.A.apply(self.d)
        self.curvature = float(self.d @ Ad)
        if self.curvature <= 0:
            raise BreakdownError(f"d'Ad = {self.curvature:.3e} <= 0", kind="nonpositive_curvature")
        self.alpha = self.rho / self.curvature
        self.x = self.x + self.alpha * self.d
        self.g = self.g + self.alpha * Ad
        z = -self.H0.apply(self.g)
        rho_next = -float(self.g @ z)
        beta = rho_next / self.rho
        self.d = z + beta * self.d
        self.rho = rho_next
        self.k += 1

    def q(self, c: float = 0.0) -> float:
        # Ax = g + b, so q(x) needs no extra product
        return float(0.5 * self.x @ (self.g - self.b) + c)


def pcg_solve(A, b, H0=None, x0=None, rtol=1e-8, atol=0.0, maxit=None,
              keep_history=False, c=0.0):
    """Solve ``Ax = b`` with preconditioned CG.

    Stops when ``||Ax_k - b|| <= max(atol, rtol ||b||)``.  The status is
    ``"nonpositive_curvature"`` if a direction with ``d'Ad <= 0`` shows up.

    Returns
    -------
    x : ndarray
    trace : SolveTrace
    """
    it = PCGIteration(A, b, x0, H0)
    bnorm = float(np.linalg.norm(it.b))
    tol = _tolerance(bnorm, rtol, atol)
    maxit = 2 * it.A.n if maxit is None else maxit
    trace = SolveTrace("cg" if it.H0.is_identity else "pcg", bnorm, keep_history)

    def record():
        fields = {}
        if it.k > 0:
            fields = {"alpha": it.alpha, "curvature": it.curvature}
        trace.append(it.k, np.linalg.norm(it.g), q=it.q(c), **fields)
        if keep_history:
            trace.iterates.append(it.x.copy())
            trace.directions.append(it.d.copy())
            trace.gradients.append(it.g.copy())

    record()
    while True:
        if trace.records[-1].res_norm <= tol:
            trace.finish("converged")
            break
        if it.k >= maxit:
            trace.finish("max_iterations")
            break
        try:
            it.step()
        except BreakdownError:
            trace.info["curvature"] = it.curvature
            trace.finish("nonpositive_curvature")
            break
        record()
    return it.x, trace


# ---------------------------------------------------------------------------
# Arnoldi


class ArnoldiBasis:
    """Sliding window of Arnoldi vectors keyed by their absolute index.

    ``window=None`` keeps every vector (full Arnoldi).
    """

    def __init__(self, v1, window: Optional[int] = None, beta: float = 1.0):
        if window is not None and window < 1:
            raise ValueError("window must be at least 1")
        self.window = window
        self.beta = float(beta)
        self.vectors: dict[int, np.ndarray] = {1: np.asarray(v1, dtype=np.float64)}
        self.columns: dict[int, dict[int, float]] = {}
        self.subdiagonal: dict[int, float] = {}

    def first(self, k: int) -> int:
        if self.window is None:
            return 1
        return max(1, k - self.window + 1)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.vectors[i]

    def __contains__(self, i: int) -> bool:
        return i in self.vectors

    def evict_before(self, index: int):
        for i in [i for i in self.vectors if i < index]:
            del self.vectors[i]

    def matrix(self, k: int) -> np.ndarray:
        """Columns ``v_first..v_k`` currently held in the window."""
        return np.column_stack([self.vectors[i] for i in range(self.first(k), k + 1)])


@dataclass
class ArnoldiStep:
    column: dict          # {i: t_{i,k}}
    subdiag: float        # t_{k+1,k} >= 0
    v_next: Optional[np.ndarray]
    happy_breakdown: bool
    Av_norm: float


def arnoldi_step(A, basis: ArnoldiBasis, k: int, window: Optional[int] = None) -> ArnoldiStep:
    """Orthogonalize ``A v_k`` against ``v_i``, ``i = max(1, k-window+1)..k``.

    Modified Gram-Schmidt, as written in the Arnoldi process.  The new vector
    ``v_{k+1}`` is stored in ``basis`` unless ``t_{k+1,k}`` vanishes relative
    to ``||A v_k||`` (happy breakdown), in which case ``v_next`` is ``None``.
    Vectors older than the next window are evicted.
    """
    A = as_operator(A)
    if k not in basis:
        raise KeyError(f"v_{k} is not in the basis window")
    if window is not None:
        basis.window = window
    w = A.apply(basis[k])
    Av_norm = float(np.linalg.norm(w))
    column = {}
    for i in range(basis.first(k), k + 1):
        t = float(basis[i] @ w)
        w = w - t * basis[i]
        column[i] = t
    sub = float(np.linalg.norm(w))
    basis.columns[k] = column
    basis.subdiagonal[k] = sub
    happy = sub <= EPS * Av_norm
    v_next = None
    if not happy:
        v_next = w / sub
        basis.vectors[k + 1] = v_next
    basis.evict_before(basis.first(k + 1))
    return ArnoldiStep(column, sub, v_next, happy, Av_norm)


def fom_solve(A, b, x0=None, rtol=1e-8, atol=0.0, maxit=None, keep_history=False, c=0.0):
    """Full orthogonalization method.

    Builds the full Arnoldi basis and solves ``T_k w_k = beta e_1`` at every
    iteration.  Each row of the trace carries the residual norm from the
    closed form ``-t_{k+1,k} (e_k'w_k) v_{k+1}``; the directly computed
    residual ``b - A x_k`` is compared against it and the largest gap
    (relative to ``||r_0||``) is kept in ``trace.info["residual_gap"]``.
    """
    A, b, x0 = _start(A, b, x0)
    n = A.n
    maxit = n if maxit is None else maxit
    bnorm = float(np.linalg.norm(b))
    tol = _tolerance(bnorm, rtol, atol)
    r0 = b - A.apply(x0)
    beta = float(np.linalg.norm(r0))
    trace = SolveTrace("fom", bnorm, keep_history)
    trace.info["residual_gap"] = 0.0
    x = x0.copy()

    def q_of(x, r):
        return float(0.5 * x @ (-r - b) + c)

    trace.append(0, beta, q=q_of(x, r0))
    if keep_history:
        trace.iterates.append(x.copy())
        trace.gradients.append(-r0)
    if beta <= tol:
        return x, trace.finish("converged")

    basis = ArnoldiBasis(r0 / beta, window=None, beta=beta)
    T = np.zeros((maxit + 1, maxit))
    V = []
    for k in range(1, maxit + 1):
        V.append(basis[k])
        step = arnoldi_step(A, basis, k)
        for i, t in step.column.items():
            T[i - 1, k - 1] = t
        T[k, k - 1] = step.subdiag
        rhs = np.zeros(k)
        rhs[0] = beta
        try:
            w = np.linalg.solve(T[:k, :k], rhs)
        except np.linalg.LinAlgError:
            trace.info["singular_k"] = k
            return x, trace.finish("breakdown")
        x = x0 + np.column_stack(V) @ w
        r_direct = b - A.apply(x)
        if step.happy_breakdown:
            r_formula = np.zeros(n)
        else:
            r_formula = -step.subdiag * w[-1] * step.v_next
        gap = float(np.linalg.norm(r_direct - r_formula)) / beta
        trace.info["residual_gap"] = max(trace.info["residual_gap"], gap)
        res = float(np.linalg.norm(r_formula))
        trace.append(k, res, q=q_of(x, r_direct))
        if keep_history:
            trace.iterates.append(x.copy())
            trace.gradients.append(-r_direct)
        if res <= tol or step.happy_breakdown:
            return x, trace.finish("converged")
    return x, trace.finish("max_iterations")


# ---------------------------------------------------------------------------
# DIOM


class DiomWindow:
    """State of DIOM(m): sliding Krylov basis, update directions and LU scalars.

    The memory ``m`` counts the *previous* basis vectors each new product is
    orthogonalized against, so step ``k`` works on ``v_i`` for
    ``i = max(1, k-m)..k``.  With ``m = 1`` this is the Lanczos three-term
    recurrence and DIOM(1) reproduces CG; ``m = None`` means full memory.

    ``step()`` performs the orthogonalization and the LU column update for
    iteration ``k`` and leaves ``u_kk``, ``d = v_k - sum u_ik p_i`` and
    ``zeta`` (``zeta_k``) for the caller, which then decides how to move and
    calls :meth:`advance`.
    """

    def __init__(self, A, r0, m: Optional[int] = None):
        if m is not None and m < 1:
            raise ValueError("DIOM memory must be at least 1")
        self.A = as_operator(A)
        self.m = m
        self.beta = float(np.linalg.norm(r0))
        window = None if m is None else m + 1
        self.basis = ArnoldiBasis(np.asarray(r0) / self.beta, window=window, beta=self.beta)
        cap = None if m is None else m
        self.p: deque = deque(maxlen=cap)        # (index, p_i)
        self.ell: deque = deque(maxlen=cap)      # (index i, l_{i,i-1})
        self.k = 0
        self.zeta = self.beta                    # zeta_1
        self.u_kk = None
        self.t_next = None
        self.d = None
        self.column_u = None
        self.happy_breakdown = False
        self.mults = 0

    def step(self):
        self.k += 1
        k = self.k
        st = arnoldi_step(self.A, self.basis, k)
        self.t_next = st.subdiag
        self.happy_breakdown = st.happy_breakdown
        ell = dict(self.ell)
        u = {}
        prev = 0.0                   # u_{first-1,k} = 0 outside the band
        for i, t in st.column.items():
            u[i] = t - ell.get(i, 0.0) * prev
            prev = u[i]
        self.column_u = u
        self.u_kk = u[k]
        d = self.basis[k].copy()
        for i, p in self.p:
            if i in u and i < k:
                d -= u[i] * p
        self.d = d
        n = self.A.n
        self.mults += 2 * len(st.column) * n + (len(u) - 1) * n + len(u)
        return st

    def advance(self, p_k):
        """Store ``p_k`` and update ``l_{k+1,k}`` and ``zeta_{k+1}``."""
        k = self.k
        self.p.append((k, p_k))
        ell = self.t_next / self.u_kk
        self.ell.append((k + 1, ell))
        self.zeta = -ell * self.zeta

    def stored_vectors(self) -> int:
        return 1 + 2 * (self.m if self.m is not None else self.k)


def diom_solve(A, b, x0=None, m: Optional[int] = None, rtol=1e-8, atol=0.0, maxit=None,
               keep_history=False, refresh=50, c=0.0):
    """Direct incomplete orthogonalization method DIOM(m).

    The residual norm ``|t_{k+1,k} zeta_k / u_kk|`` comes for free from the
    LU scalars.  Every ``refresh`` iterations, and whenever that estimate
    declares convergence, the residual ``b - A x_k`` is recomputed directly;
    the solve only stops when the direct residual also meets the tolerance.

    Trace rows carry ``u_kk`` and ``zeta`` (``zeta_k``) and
    ``alpha = 1/u_kk``.  With ``keep_history`` the direction stored for row
    ``k`` is ``p_{k+1}``.
    """
    A, b, x0 = _start(A, b, x0)
    n = A.n
    maxit = 2 * n if maxit is None else maxit
    bnorm = float(np.linalg.norm(b))
    tol = _tolerance(bnorm, rtol, atol)
    r0 = b - A.apply(x0)
    beta = float(np.linalg.norm(r0))
    trace = SolveTrace("diom", bnorm, keep_history)
    trace.info["memory"] = m
    trace.info["refresh_gaps"] = []
    x = x0.copy()
    trace.append(0, beta, q=float(0.5 * x @ (-r0 - b) + c))
    if keep_history:
        trace.iterates.append(x.copy())
        trace.gradients.append(-r0)
    if beta <= tol:
        return x, trace.finish("converged")

    win = DiomWindow(A, r0, m)
    for k in range(1, maxit + 1):
        st = win.step()
        # a pivot at rounding level relative to ||A v_k|| is a singular T_k
        if abs(win.u_kk) <= EPS * st.Av_norm:
            trace.info["singular_k"] = k
            return x, trace.finish("breakdown")
        zeta_k = win.zeta
        p_k = win.d / win.u_kk
        x = x + zeta_k * p_k
        if keep_history:
            trace.directions.append(p_k.copy())
        win.advance(p_k)
        if st.happy_breakdown:
            r = np.zeros(n)
            res = 0.0
        else:
            r = -win.t_next * (zeta_k / win.u_kk) * win.basis[k + 1]
            res = abs(win.zeta)
        direct = None
        if k % refresh == 0 or res <= tol:
            r_direct = b - A.apply(x)
            direct = float(np.linalg.norm(r_direct))
            trace.info["refresh_gaps"].append((k, float(np.linalg.norm(r_direct - r)) / beta))
            r, res = r_direct, direct
        trace.append(k, res, q=float(0.5 * x @ (-r - b) + c),
                     alpha=1.0 / win.u_kk, u_kk=win.u_kk, zeta=zeta_k)
        if keep_history:
            trace.iterates.append(x.copy())
            trace.gradients.append(-r)
        if direct is not None and direct <= tol:
            return x, trace.finish("converged")
        if st.happy_breakdown:
            # invariant subspace reached; the direct residual decides
            return x, trace.finish("breakdown")
    return x, trace.finish("max_iterations")


def diom_identity_report(trace_diom: SolveTrace, trace_pcg: SolveTrace) -> dict:
    """Compare a DIOM run with a CG run on the same SPD system.

    Both traces need ``keep_history=True``.  Reports

    * ``u_alpha``: ``max |u_{k+1,k+1} alpha_k - 1|``,
    * ``zeta_signs``: whether ``sign(zeta_k) = (-1)^(k-1)`` on every row,
    * ``descent_signs``: whether ``sign(g_k'p_{k+1}) = (-1)^(k-1)`` for ``k >= 1``,
    * ``g0p1``: relative error of ``g_0'p_1 = -beta/u_11``,
    * ``direction``: ``max ||zeta_{k+1} u_{k+1,k+1} p_{k+1} - d_k|| / ||d_k||``.
    """
    if not trace_diom.keep_history or not trace_pcg.keep_history:
        raise ValueError("both traces must be recorded with keep_history=True")
    K = min(len(trace_diom.records), len(trace_pcg.records)) - 1
    if K < 1:
        raise ValueError("traces must contain at least one iteration")
    if len(trace_diom.directions) < K or len(trace_pcg.directions) < K:
        raise ValueError("trace length mismatch")
    u_alpha = 0.0
    direction = 0.0
    zeta_signs = []
    descent_signs = []
    for k in range(1, K + 1):
        rd, rp = trace_diom.records[k], trace_pcg.records[k]
        u_alpha = max(u_alpha, abs(rd.u_kk * rp.alpha - 1.0))
        zeta_signs.append(bool(np.sign(rd.zeta) == (-1) ** (k - 1)))
        p = trace_diom.directions[k - 1]           # p_k
        d = trace_pcg.directions[k - 1]            # d_{k-1}
        est = rd.zeta * rd.u_kk * p
        direction = max(direction, float(np.linalg.norm(est - d) / np.linalg.norm(d)))
        if k >= 2:
            g = trace_diom.gradients[k - 1]       # g_{k-1}
            descent_signs.append(bool(np.sign(g @ p) == (-1) ** (k - 2)))
    beta = trace_diom.records[0].res_norm
    g0p1 = float(trace_diom.gradients[0] @ trace_diom.directions[0])
    expected = -beta / trace_diom.records[1].u_kk
    return {
        "iterations": K,
        "u_alpha": u_alpha,
        "zeta_signs": all(zeta_signs),
        "descent_signs": all(descent_signs),
        "g0p1": abs(g0p1 - expected) / abs(expected),
        "direction": direction,
    }
