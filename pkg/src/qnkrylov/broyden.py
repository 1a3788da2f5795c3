"""Full-memory Broyden-class quasi-Newton methods on quadratics.

The inverse-Hessian approximation is kept as a dense matrix, so everything
here is meant for verification-sized problems.  Besides the solver, the
module exposes the scalar identities relating Broyden directions to PCG
directions: the proportionality recurrence :func:`gamma_next`, its SR1 form
:func:`gamma_sr1_next`, and both expressions of the critical parameter
that makes an update singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    EPS_CURV,
    BreakdownError,
    QuadraticModel,
    SolveTrace,
    ZeroCurvatureError,
    as_preconditioner,
    exact_linesearch,
)
from .krylov import PCGIteration

__all__ = [
    "broyden_update",
    "sr1_phi",
    "sr1_update",
    "phi_critical",
    "phi_critical_from_gamma",
    "gamma_next",
    "gamma_sr1_next",
    "PhiSchedule",
    "BroydenState",
    "broyden_solve",
    "measure_gamma",
]


def broyden_update(H, s, y, phi: float) -> np.ndarray:
    """One Broyden-class update of the inverse-Hessian approximation ``H``.

    ``phi = 1`` gives BFGS, ``phi = 0`` DFP.  The result satisfies the secant
    equation ``H' y = s``.

    Raises
    ------
    BreakdownError
        ``kind="curvature"`` if ``s'y`` is numerically zero,
        ``kind="denominator"`` if ``y'Hy`` is.
    """
    H = np.asarray(H, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sy = float(s @ y)
    if abs(sy) <= EPS_CURV * np.linalg.norm(s) * np.linalg.norm(y):
        raise BreakdownError(f"s'y = {sy:.3e} is numerically zero", kind="curvature")
    Hy = H @ y
    yHy = float(y @ Hy)
    if abs(yHy) <= EPS_CURV * float(y @ y):
        raise BreakdownError(f"y'Hy = {yHy:.3e} is numerically zero", kind="denominator")
    v = s / sy - Hy / yHy
    return H + np.outer(s, s) / sy - np.outer(Hy, Hy) / yHy + phi * yHy * np.outer(v, v)


def sr1_phi(H, s, y) -> float:
    """Broyden parameter ``y's / (s - Hy)'y`` that reproduces SR1."""
    H = np.asarray(H, dtype=np.float64)
    r = s - H @ y
    den = float(r @ y)
    if abs(den) <= EPS_CURV * np.linalg.norm(r) * np.linalg.norm(y) or not np.any(r):
        raise BreakdownError(f"(s - Hy)'y = {den:.3e} is numerically zero", kind="sr1")
    return float(y @ s) / den


def sr1_update(H, s, y) -> np.ndarray:
    """Rank-one SR1 form ``H + rr'/(r'y)`` with ``r = s - Hy``."""
    H = np.asarray(H, dtype=np.float64)
    r = s - H @ y
    den = float(r @ y)
    if abs(den) <= EPS_CURV * np.linalg.norm(r) * np.linalg.norm(y) or not np.any(r):
        raise BreakdownError(f"(s - Hy)'y = {den:.3e} is numerically zero", kind="sr1")
    return H + np.outer(r, r) / den


def phi_critical(H, s, y, solveH: Optional[Callable] = None) -> float:
    """Value of the Broyden parameter for which the update is singular.

    ``solveH(s)`` must return ``H^{-1} s``; by default a dense solve is used.
    """
    H = np.asarray(H, dtype=np.float64)
    if solveH is None:
        def solveH(v):
            try:
                return np.linalg.solve(H, v)
            except np.linalg.LinAlgError as exc:
                raise BreakdownError("H is singular", kind="singular") from exc
    Bs = solveH(s)
    ys = float(y @ s)
    den = ys * ys - float(y @ H @ y) * float(s @ Bs)
    if den == 0.0:
        raise BreakdownError("zero denominator in critical parameter", kind="denominator")
    return ys * ys / den


def phi_critical_from_gamma(gamma: float, rho_k: float, rho_next: float) -> float:
    """Critical parameter on an SPD quadratic under exact line search.

    ``rho_k = g_k'H0 g_k`` and ``rho_next = g_{k+1}'H0 g_{k+1}``.
    """
    return -gamma * rho_k / rho_next


def gamma_next(gamma: float, phi: float, rho_k: float, rho_next: float) -> float:
    """Proportionality factor between ``d_{k+1}^phi`` and ``d_{k+1}^PCG``.

    Raises
    ------
    BreakdownError
        when the denominator vanishes, i.e. ``phi`` is the critical value.
    """
    den = gamma * rho_k + rho_next
    if den == 0.0:
        raise BreakdownError("singular update: phi equals the critical value", kind="singular")
    return (gamma * rho_k + phi * rho_next) / den


def gamma_sr1_next(gamma: float, alpha_pcg: float, rho_k: float, rho_next: float) -> float:
    """SR1 proportionality factor written with the PCG step length."""
    a = (gamma - alpha_pcg) * rho_k
    return a / (a + rho_next)


@dataclass(frozen=True)
class PhiSchedule:
    """Choice of Broyden parameter at every iteration.

    Build with :meth:`bfgs`, :meth:`dfp`, :meth:`sr1`, :meth:`constant` or
    :meth:`custom`.  A custom function is called as ``func(k, H, s, y)``.
    """

    kind: str
    value: Optional[float] = None
    func: Optional[Callable] = None

    @classmethod
    def bfgs(cls):
        return cls("bfgs", 1.0)

    @classmethod
    def dfp(cls):
        return cls("dfp", 0.0)

    @classmethod
    def sr1(cls):
        return cls("sr1")

    @classmethod
    def constant(cls, value: float):
        return cls("constant", float(value))

    @classmethod
    def custom(cls, func: Callable):
        return cls("custom", func=func)

    @classmethod
    def parse(cls, spec) -> "PhiSchedule":
        """``"bfgs"``, ``"dfp"``, ``"sr1"`` or a number."""
        if isinstance(spec, PhiSchedule):
            return spec
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        spec = str(spec).lower()
        if spec in ("bfgs", "dfp", "sr1"):
            return getattr(cls, spec)()
        try:
            return cls.constant(float(spec))
        except ValueError:
            raise ValueError(f"unknown phi schedule {spec!r}") from None

    def __call__(self, k: int, H, s, y) -> float:
        if self.kind == "sr1":
            return sr1_phi(H, s, y)
        if self.kind == "custom":
            return float(self.func(k, H, s, y))
        return self.value

    def __str__(self):
        if self.kind == "constant":
            return f"constant({self.value:g})"
        return self.kind


@dataclass
class BroydenState:
    H: np.ndarray
    k: int = 0
    gamma: float = 1.0


def measure_gamma(d_phi, d_pcg) -> float:
    """Least-squares ratio ``argmin_g ||d_phi - g d_pcg||``."""
    return float(d_phi @ d_pcg) / float(d_pcg @ d_pcg)


def _angle(a, b) -> float:
    u = b / np.linalg.norm(b)
    along = float(a @ u)
    across = float(np.linalg.norm(a - along * u))
    return float(np.arctan2(across, abs(along)))


def broyden_solve(model: QuadraticModel, x0=None, H0=None, schedule=None, rtol=1e-8,
                  atol=0.0, maxit=None, shadow=False, keep_history=False):
    """Minimize a quadratic with a Broyden-class method and exact line search.

    With ``shadow=True`` a PCG iteration sharing ``x0`` and ``H0`` is advanced
    in lockstep.  The trace then records the measured proportionality factor
    ``gamma`` of every direction, and ``trace.info`` holds per-iteration lists

    ``gamma_measured``, ``gamma_recurrence``
        measured factor and the recurrence propagated from ``gamma_0 = 1``;
    ``gamma_sr1``
        the SR1 closed form (SR1 schedules only);
    ``angle``
        angle in radians between the two directions;
    ``alpha_pcg``, ``rho``
        PCG step lengths and ``g_k'H0 g_k``;
    ``phi``, ``phi_c``
        parameter used and the critical value (dense form) at every update.

    The final approximation is returned in ``trace.info["H"]``.
    """
    schedule = PhiSchedule.bfgs() if schedule is None else PhiSchedule.parse(schedule)
    A, b, n = model.operator, model.b, model.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)
    H0 = as_preconditioner(H0)
    state = BroydenState(H=H0.dense(n))
    maxit = 2 * n if maxit is None else maxit
    bnorm = float(np.linalg.norm(b))
    tol = max(atol, rtol * bnorm)
    trace = SolveTrace(f"broyden[{schedule}]", bnorm, keep_history)
    info = trace.info
    info.update(schedule=str(schedule), phi=[], phi_c=[], pairs=[])
    if shadow:
        pcg = PCGIteration(A, b, x, H0)
        info.update(gamma_measured=[], gamma_recurrence=[], gamma_sr1=[], angle=[],
                    alpha_pcg=[], rho=[pcg.rho])
        gamma_rec = 1.0

    g = A.apply(x) - b

    def q_of():
        return float(0.5 * x @ (g - b) + model.c)

    trace.append(0, np.linalg.norm(g), q=q_of())
    if keep_history:
        trace.iterates.append(x.copy())
        trace.gradients.append(g.copy())

    status = None
    while status is None:
        if trace.records[-1].res_norm <= tol:
            status = "converged"
            break
        if state.k >= maxit:
            status = "max_iterations"
            break
        d = -(state.H @ g)
        if keep_history:
            trace.directions.append(d.copy())
        gamma = None
        if shadow:
            gamma = measure_gamma(d, pcg.d)
            info["gamma_measured"].append(gamma)
            info["gamma_recurrence"].append(gamma_rec)
            info["angle"].append(_angle(d, pcg.d))
        Ad = A.apply(d)
        curvature = float(d @ Ad)
        if curvature < -EPS_CURV * float(d @ d):
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
        if shadow:
            try:
                pcg.step()
            except BreakdownError:
                shadow = False
            else:
                info["alpha_pcg"].append(pcg.alpha)
                info["rho"].append(pcg.rho)
        state.k += 1
        trace.append(state.k, np.linalg.norm(g), q=q_of(), alpha=alpha,
                     curvature=curvature, gamma=gamma)
        if keep_history:
            trace.iterates.append(x.copy())
            trace.gradients.append(g.copy())
            info["pairs"].append((s, y))
        converged = trace.records[-1].res_norm <= tol
        try:
            phi = schedule(state.k - 1, state.H, s, y)
            if shadow and not converged:
                try:
                    info["phi_c"].append(phi_critical(state.H, s, y))
                except BreakdownError:
                    info["phi_c"].append(None)
            H_new = broyden_update(state.H, s, y, phi)
        except BreakdownError as exc:
            info["breakdown"] = (state.k - 1, exc.kind)
            if converged:
                status = "converged"
            else:
                status = "breakdown"
            break
        info["phi"].append(phi)
        if shadow:
            rho_k, rho_next = info["rho"][-2], info["rho"][-1]
            if schedule.kind == "sr1" and info["gamma_measured"]:
                info["gamma_sr1"].append(
                    gamma_sr1_next(gamma, info["alpha_pcg"][-1], rho_k, rho_next))
            try:
                gamma_rec = gamma_next(gamma_rec, phi, rho_k, rho_next)
            except BreakdownError:
                gamma_rec = np.nan
        state.H = H_new
        state.gamma = gamma_rec if shadow else state.gamma
    info["H"] = state.H
    trace.finish(status)
    return x, trace
