"""Truncated solvers for ``min q(x) s.t. ||x|| <= Delta`` and a Newton trust-region loop.

All three subproblem solvers start from ``x_0 = 0`` on ``q(x) = 1/2 x'Ax - b'x``
(so ``g_0 = -b``) and spend exactly one operator product per inner
iteration.  Model values along the path are tracked by recurrences, never
by extra products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import BreakdownError, QuadraticModel, SymmetricOperator
from .krylov import DiomWindow
from .limited_memory import LbfgsMemory, lbfgs_apply, lbfgs_push

__all__ = [
    "TrustRegionConfig",
    "SubproblemResult",
    "TrustRegionResult",
    "SUBSOLVERS",
    "boundary_tau",
    "forcing_rtol",
    "steihaug_tcg",
    "tr_lbfgs",
    "tr_diom",
    "tr_newton",
]

SUB_STATUSES = ("interior_converged", "boundary", "nonpositive_curvature_boundary", "max_iterations")
SHRINK = 0.25
GROW = 2.0
DELTA_FLOOR = 1e-15


@dataclass(frozen=True)
class TrustRegionConfig:
    delta0: float = 1.0
    eta1: float = 0.25
    eta2: float = 0.75
    gtol: float = 1e-5
    max_outer: int = 500
    memory: int = 5
    inner_maxit: Optional[int] = None

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError("initial radius must be positive")
        if not 0 < self.eta1 < self.eta2 < 1:
            raise ValueError("need 0 < eta1 < eta2 < 1")
        if not self.gtol > 0:
            raise ValueError("gradient tolerance must be positive")
        if self.max_outer < 1 or self.memory < 1:
            raise ValueError("iteration limit and memory must be positive")


@dataclass
class SubproblemResult:
    """Outcome of a truncated solve.

    ``q_path[k]`` is ``q(x_k)`` (so ``q_path[0] = 0``) and ``norms[k]`` is
    ``||x_k||``; the last entry is the returned step.
    """

    x: np.ndarray
    status: str
    decrease: float
    iterations: int
    hvps: int
    q_path: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    iterates: Optional[list] = None


def boundary_tau(x, d, delta: float) -> float:
    """Positive root of ``||x + tau d|| = delta`` (requires ``||x|| <= delta``)."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    dd = float(d @ d)
    if dd == 0.0:
        raise ValueError("direction must be nonzero")
    if math.isinf(delta):
        return math.inf
    xd = float(x @ d)
    gap = max(delta * delta - float(x @ x), 0.0)
    disc = math.sqrt(xd * xd + dd * gap)
    # the two algebraically equal forms; pick the one without cancellation
    if xd <= 0:
        return (-xd + disc) / dd
    return gap / (xd + disc) if gap > 0 else 0.0


def forcing_rtol(gnorm: float) -> float:
    """Inexact-Newton inner tolerance ``max(1e-12, min(0.1, sqrt(||g||)))``."""
    return max(1e-12, min(0.1, math.sqrt(gnorm)))


class _Path:
    def __init__(self, n, keep):
        self.x = np.zeros(n)
        self.q = 0.0
        self.q_path = [0.0]
        self.norms = [0.0]
        self.iterates = [self.x.copy()] if keep else None

    def move(self, step, dq):
        self.x = self.x + step
        self.q += dq
        self.q_path.append(self.q)
        self.norms.append(float(np.linalg.norm(self.x)))
        if self.iterates is not None:
            self.iterates.append(self.x.copy())

    def result(self, status, k, hvps, delta):
        nx = self.norms[-1]
        if nx > delta:
            # rounding in tau can overshoot by an ulp or two
            self.x *= delta / nx
            self.norms[-1] = delta
        return SubproblemResult(self.x, status, -self.q, k, hvps, self.q_path, self.norms,
                                self.iterates)


def _setup(model: QuadraticModel, delta, rtol, maxit):
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    g = -model.b.copy()
    gnorm0 = float(np.linalg.norm(g))
    if rtol is None:
        rtol = forcing_rtol(gnorm0)
    tol = max(1e-12, rtol) * gnorm0
    maxit = 2 * model.n if maxit is None else maxit
    return g, tol, maxit


def steihaug_tcg(model: QuadraticModel, delta: float, rtol: Optional[float] = None,
                 maxit: Optional[int] = None, keep_iterates: bool = False) -> SubproblemResult:
    """Steihaug's truncated conjugate gradient.

    ``rtol=None`` applies :func:`forcing_rtol` to ``||b||``.
    """
    A = model.operator
    g, tol, maxit = _setup(model, delta, rtol, maxit)
    path = _Path(model.n, keep_iterates)
    d = -g
    rho = float(g @ g)
    hvps = 0
    for k in range(maxit):
        if math.sqrt(rho) <= tol:
            return path.result("interior_converged", k, hvps, delta)
        Ad = A.apply(d)
        hvps += 1
        curv = float(d @ Ad)
        gd = float(g @ d)
        if curv <= 0:
            if math.isinf(delta):
                return path.result("nonpositive_curvature_boundary", k, hvps, delta)
            tau = boundary_tau(path.x, d, delta)
            path.move(tau * d, tau * gd + 0.5 * tau * tau * curv)
            return path.result("nonpositive_curvature_boundary", k + 1, hvps, delta)
        alpha = rho / curv
        tau = boundary_tau(path.x, d, delta)
        if alpha >= tau:
            path.move(tau * d, tau * gd + 0.5 * tau * tau * curv)
            return path.result("boundary", k + 1, hvps, delta)
        path.move(alpha * d, alpha * gd + 0.5 * alpha * alpha * curv)
        g = g + alpha * Ad
        rho_next = float(g @ g)
        d = -g + (rho_next / rho) * d
        rho = rho_next
    status = "interior_converged" if math.sqrt(rho) <= tol else "max_iterations"
    return path.result(status, maxit, hvps, delta)


def tr_lbfgs(model: QuadraticModel, delta: float, m: int = 5, rtol: Optional[float] = None,
             maxit: Optional[int] = None, keep_iterates: bool = False) -> SubproblemResult:
    """Truncated LBFGS(m) with ``H_0 = I`` and exact steps along ``d_k = -H_k g_k``.

    The boundary step is taken along ``d_k``.  A rejected curvature pair is
    treated as nonpositive curvature along ``d_k``.
    """
    A = model.operator
    g, tol, maxit = _setup(model, delta, rtol, maxit)
    path = _Path(model.n, keep_iterates)
    mem = LbfgsMemory(model.n, m)
    hvps = 0
    for k in range(maxit):
        if float(np.linalg.norm(g)) <= tol:
            return path.result("interior_converged", k, hvps, delta)
        d = -lbfgs_apply(mem, g)
        Ad = A.apply(d)
        hvps += 1
        curv = float(d @ Ad)
        gd = float(g @ d)
        tau = boundary_tau(path.x, d, delta)
        if curv <= 0:
            if math.isinf(delta):
                return path.result("nonpositive_curvature_boundary", k, hvps, delta)
            path.move(tau * d, tau * gd + 0.5 * tau * tau * curv)
            return path.result("nonpositive_curvature_boundary", k + 1, hvps, delta)
        alpha = -gd / curv
        if alpha >= tau:
            path.move(tau * d, tau * gd + 0.5 * tau * tau * curv)
            return path.result("boundary", k + 1, hvps, delta)
        s, y = alpha * d, alpha * Ad
        try:
            lbfgs_push(mem, s, y)
        except BreakdownError:
            if math.isinf(delta):
                return path.result("nonpositive_curvature_boundary", k, hvps, delta)
            path.move(tau * d, tau * gd + 0.5 * tau * tau * curv)
            return path.result("nonpositive_curvature_boundary", k + 1, hvps, delta)
        path.move(s, alpha * gd + 0.5 * alpha * alpha * curv)
        g = g + y
    status = "interior_converged" if float(np.linalg.norm(g)) <= tol else "max_iterations"
    return path.result(status, maxit, hvps, delta)


def tr_diom(model: QuadraticModel, delta: float, m: Optional[int] = 5,
            rtol: Optional[float] = None, maxit: Optional[int] = None,
            keep_iterates: bool = False) -> SubproblemResult:
    """Truncated DIOM(m).

    With ``d_k = zeta_k (v_k - sum u_ik p_i)`` the model along ``x + tau d_k``
    changes by ``-tau zeta_k^2 + tau^2 zeta_k^2 u_kk / 2``, so ``u_kk <= 0``
    flags nonpositive curvature and the unconstrained step is
    ``tau = 1/u_kk``.  Residual norms are the free estimates ``|zeta_{k+1}|``.
    """
    b = model.b
    if not np.any(b):
        raise ValueError("tr_diom needs b != 0")
    _, tol, maxit = _setup(model, delta, rtol, maxit)
    path = _Path(model.n, keep_iterates)
    win = DiomWindow(model.operator, b, m)
    hvps = 0
    for k in range(maxit):
        if abs(win.zeta) <= tol:
            return path.result("interior_converged", k, hvps, delta)
        st = win.step()
        hvps += 1
        zeta, u = win.zeta, win.u_kk
        d = zeta * win.d
        z2 = zeta * zeta
        if u <= 0:
            if math.isinf(delta):
                return path.result("nonpositive_curvature_boundary", k, hvps, delta)
            tau = boundary_tau(path.x, d, delta)
            path.move(tau * d, -tau * z2 + 0.5 * tau * tau * z2 * u)
            return path.result("nonpositive_curvature_boundary", k + 1, hvps, delta)
        tau = boundary_tau(path.x, d, delta)
        if 1.0 / u >= tau:
            path.move(tau * d, -tau * z2 + 0.5 * tau * tau * z2 * u)
            return path.result("boundary", k + 1, hvps, delta)
        path.move(d / u, -0.5 * z2 / u)
        win.advance(d / (zeta * u))
        if st.happy_breakdown:
            return path.result("interior_converged", k + 1, hvps, delta)
    status = "interior_converged" if abs(win.zeta) <= tol else "max_iterations"
    return path.result(status, maxit, hvps, delta)


SUBSOLVERS = {"tcg": steihaug_tcg, "trlbfgs": tr_lbfgs, "trdiom": tr_diom}


@dataclass
class TrustRegionResult:
    z: np.ndarray
    status: str
    f: float
    gnorm: float
    outer_iterations: int
    obj_evals: int
    grad_evals: int
    hvp_evals: int
    log: list

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in ("status", "f", "gnorm", "outer_iterations",
                                              "obj_evals", "grad_evals", "hvp_evals")}


def tr_newton(f: Callable, grad: Callable, hvp: Callable, z0, config: Optional[TrustRegionConfig] = None,
              subsolver: str = "tcg") -> TrustRegionResult:
    """Newton trust-region method with a truncated inner solver.

    ``hvp(z, v)`` returns the Hessian (or an approximation) at ``z`` applied to
    ``v``.  Final status is one of ``converged``, ``max_iterations``,
    ``radius_underflow`` or ``stagnation`` (the subproblem produced no model
    decrease).  Each log entry describes one outer iteration.
    """
    config = config or TrustRegionConfig()
    if subsolver not in SUBSOLVERS:
        raise ValueError(f"unknown subsolver {subsolver!r}; choose from {sorted(SUBSOLVERS)}")
    z = np.array(z0, dtype=np.float64, copy=True)
    n = z.size
    fz = float(f(z))
    g = np.asarray(grad(z), dtype=np.float64)
    n_obj, n_grad, n_hvp = 1, 1, 0
    delta = float(config.delta0)
    log = []
    status = "max_iterations"
    for j in range(config.max_outer + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.gtol:
            status = "converged"
            break
        if j == config.max_outer:
            break
        if delta < DELTA_FLOOR:
            status = "radius_underflow"
            break
        zj = z

        def apply(v, zj=zj):
            return np.asarray(hvp(zj, v), dtype=np.float64)

        model = QuadraticModel(SymmetricOperator(n, apply), -g)
        kwargs = {"maxit": config.inner_maxit}
        if subsolver != "tcg":
            kwargs["m"] = config.memory
        sub = SUBSOLVERS[subsolver](model, delta, **kwargs)
        n_hvp += sub.hvps
        pred = sub.decrease
        entry = {"j": j, "f": fz, "gnorm": gnorm, "delta": delta, "inner": sub.iterations,
                 "hvps": sub.hvps, "sub_status": sub.status, "pred": pred}
        if not pred > 0:
            entry.update(rho=None, accepted=False)
            log.append(entry)
            status = "stagnation"
            break
        z_trial = z + sub.x
        f_trial = float(f(z_trial))
        n_obj += 1
        rho = (fz - f_trial) / pred if np.isfinite(f_trial) else -math.inf
        accepted = rho >= config.eta1
        entry.update(rho=rho, accepted=accepted, step_norm=sub.norms[-1])
        log.append(entry)
        if rho < config.eta1:
            delta *= SHRINK
        elif rho >= config.eta2:
            delta *= GROW
        if accepted:
            z, fz = z_trial, f_trial
            g = np.asarray(grad(z), dtype=np.float64)
            n_grad += 1
    return TrustRegionResult(z, status, fz, float(np.linalg.norm(g)), len(log), n_obj, n_grad,
                             n_hvp, log)
