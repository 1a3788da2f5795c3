"""Limited-memory BFGS and SR1 operators, and their exact-line-search solvers.

Both memories keep their vectors in preallocated ``(m, n)`` arrays used as
circular buffers.  ``mults`` counts scalar multiplications spent beyond
the base operator so that per-iteration costs can be checked against the
usual accounting (``4mn + n`` for either method once the window is full).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import (
    EPS_CURV,
    BreakdownError,
    Preconditioner,
    QuadraticModel,
    SolveTrace,
    ZeroCurvatureError,
    as_preconditioner,
    exact_linesearch,
)

__all__ = [
    "LbfgsMemory",
    "Lsr1Memory",
    "lbfgs_apply",
    "lbfgs_push",
    "lsr1_apply",
    "lsr1_push",
    "lbfgs_solve",
    "lsr1_solve",
]


class _Window:
    def __init__(self, n: int, m: int, base):
        if m < 1:
            raise ValueError("memory must be at least 1")
        self.n = int(n)
        self.m = int(m)
        self.base: Preconditioner = as_preconditioner(base)
        self.head = 0           # slot of the next insertion
        self.count = 0
        self.mults = 0

    def __len__(self):
        return self.count

    def _slots(self):
        """Slots from oldest to newest."""
        start = (self.head - self.count) % self.m
        return [(start + i) % self.m for i in range(self.count)]

    def _advance(self):
        slot = self.head
        self.head = (self.head + 1) % self.m
        self.count = min(self.count + 1, self.m)
        return slot


class LbfgsMemory(_Window):
    """Window of at most ``m`` pairs ``(s_i, y_i)`` with cached ``1/s_i'y_i``."""

    def __init__(self, n: int, m: int, base=None):
        super().__init__(n, m, base)
        self.S = np.zeros((self.m, self.n))
        self.Y = np.zeros((self.m, self.n))
        self.rho = np.zeros(self.m)

    def pairs(self):
        return [(self.S[i], self.Y[i]) for i in self._slots()]

    def stored_vectors(self) -> int:
        """Vectors held by the solver: iterate, gradient and ``m`` pairs."""
        return 2 + 2 * self.m


class Lsr1Memory(_Window):
    """Window of at most ``m`` vectors ``z_i = s_i - H_i y_i`` with ``delta_i = y_i'z_i``.

    The denominator is ``y'z`` (not ``s'z``): only that choice gives the
    secant property ``H y = s`` of the inverse SR1 update.
    """

    def __init__(self, n: int, m: int, base=None):
        super().__init__(n, m, base)
        self.Z = np.zeros((self.m, self.n))
        self.delta = np.zeros(self.m)
        self.skipped = 0

    def vectors(self):
        return [(self.Z[i], self.delta[i]) for i in self._slots()]

    def stored_vectors(self) -> int:
        return 2 + self.m


def lbfgs_apply(mem: LbfgsMemory, v) -> np.ndarray:
    """Two-loop recursion: ``H_k^m v``."""
    q = np.array(v, dtype=np.float64, copy=True)
    slots = mem._slots()
    a = np.empty(len(slots))
    for j in range(len(slots) - 1, -1, -1):
        i = slots[j]
        a[j] = mem.rho[i] * (mem.S[i] @ q)
        q -= a[j] * mem.Y[i]
    r = mem.base.apply(q)
    for j, i in enumerate(slots):
        beta = mem.rho[i] * (mem.Y[i] @ r)
        r += (a[j] - beta) * mem.S[i]
    mem.mults += 4 * len(slots) * mem.n
    return r


def lbfgs_push(mem: LbfgsMemory, s, y):
    """Insert a pair, evicting the oldest one when the window is full."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sy = float(s @ y)
    mem.mults += mem.n
    if abs(sy) <= EPS_CURV * np.linalg.norm(s) * np.linalg.norm(y):
        raise BreakdownError(f"s'y = {sy:.3e} is numerically zero", kind="curvature")
    slot = mem._advance()
    mem.S[slot] = s
    mem.Y[slot] = y
    mem.rho[slot] = 1.0 / sy


def lsr1_apply(mem: Lsr1Memory, v) -> np.ndarray:
    """``H0 v + sum_i (z_i'v / delta_i) z_i``."""
    v = np.asarray(v, dtype=np.float64)
    out = mem.base.apply(v)
    slots = mem._slots()
    if slots:
        Z = mem.Z[slots]
        out = out + ((Z @ v) / mem.delta[slots]) @ Z
    mem.mults += 2 * len(slots) * mem.n
    return out


def lsr1_push(mem: Lsr1Memory, s, y):
    """Form ``z = s - H y`` with the current operator and store it.

    Raises
    ------
    BreakdownError
        ``kind="sr1"`` when ``y'z`` is numerically zero; the pair is skipped
        and ``mem.skipped`` incremented.
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = s - lsr1_apply(mem, y)
    delta = float(y @ z)
    mem.mults += mem.n
    if not np.any(z) or abs(delta) <= EPS_CURV * np.linalg.norm(y) * np.linalg.norm(z):
        mem.skipped += 1
        raise BreakdownError(f"y'z = {delta:.3e} is numerically zero", kind="sr1")
    slot = mem._advance()
    mem.Z[slot] = z
    mem.delta[slot] = delta


def _quasi_newton_solve(model, mem, apply, push, method, x0, rtol, atol, maxit, keep_history):
    A, b, n = model.operator, model.b, model.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    maxit = 2 * n if maxit is None else maxit
    bnorm = float(np.linalg.norm(b))
    tol = max(atol, rtol * bnorm)
    trace = SolveTrace(method, bnorm, keep_history)
    trace.info["memory"] = mem.m
    trace.info["skipped"] = 0
    g = A.apply(x) - b

    def q_of():
        return float(0.5 * x @ (g - b) + model.c)

    trace.append(0, np.linalg.norm(g), q=q_of())
    if keep_history:
        trace.iterates.append(x.copy())
        trace.gradients.append(g.copy())
    k = 0
    while True:
        if trace.records[-1].res_norm <= tol:
            status = "converged"
            break
        if k >= maxit:
            status = "max_iterations"
            break
        d = -apply(mem, g)
        if keep_history:
            trace.directions.append(d.copy())
        Ad = A.apply(d)
        curvature = float(d @ Ad)
        if curvature < -EPS_CURV * float(d @ d) and method == "lbfgs":
            status = "nonpositive_curvature"
            break
        try:
            alpha = exact_linesearch(model, g, d, curvature)
        except ZeroCurvatureError:
            status = "breakdown"
            break
        s = alpha * d
        y = alpha * Ad
        x = x + s
        g = g + y
        k += 1
        trace.append(k, np.linalg.norm(g), q=q_of(), alpha=alpha, curvature=curvature)
        if keep_history:
            trace.iterates.append(x.copy())
            trace.gradients.append(g.copy())
        try:
            push(mem, s, y)
        except BreakdownError as exc:
            if exc.kind == "sr1":
                trace.info["skipped"] += 1
                continue
            if trace.records[-1].res_norm <= tol:
                continue
            status = "breakdown"
            break
    return x, trace.finish(status)


def lbfgs_solve(model: QuadraticModel, m: int, x0=None, H0=None, rtol=1e-8, atol=0.0,
                maxit=None, keep_history=False):
    """LBFGS(m) with exact line search on a quadratic; the base matrix stays ``H0``."""
    mem = LbfgsMemory(model.n, m, H0)
    x, trace = _quasi_newton_solve(model, mem, lbfgs_apply, lbfgs_push, "lbfgs", x0,
                                   rtol, atol, maxit, keep_history)
    trace.info["mults"] = mem.mults
    return x, trace


def lsr1_solve(model: QuadraticModel, m: int, x0=None, H0=None, rtol=1e-8, atol=0.0,
               maxit=None, keep_history=False):
    """LSR1(m) with exact line search.

    Pairs whose SR1 denominator vanishes are skipped and counted in
    ``trace.info["skipped"]``; the iteration continues with the unmodified
    operator.  The step along an ascent direction is still the exact
    minimizer along the line (its length is then negative).
    """
    mem = Lsr1Memory(model.n, m, H0)
    x, trace = _quasi_newton_solve(model, mem, lsr1_apply, lsr1_push, "lsr1", x0,
                                   rtol, atol, maxit, keep_history)
    trace.info["mults"] = mem.mults
    return x, trace
