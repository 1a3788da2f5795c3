"""Test problems: synthetic SPD systems, Lorenz-96 assimilation, tanh classification.

Every nonlinear problem exposes ``(f, grad, hvp)`` through an ``*_fgh``
function; ``hvp`` is a closure ``v -> Hessian(z) v`` bound to the point.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import DimensionError, SolverError, SymmetricOperator

__all__ = [
    "synthetic_spd",
    "lorenz96_rhs",
    "rk4_step",
    "propagate",
    "BlowUpError",
    "AssimilationProblem",
    "make_assimilation",
    "assimilation_objective",
    "assimilation_fgh",
    "assimilation_functions",
    "ClassificationProblem",
    "make_classification",
    "load_idx",
    "classification_from_idx",
    "classification_fgh",
    "classification_functions",
    "rosenbrock_fgh",
    "rosenbrock_functions",
    "quadratic_fgh",
    "fd_gradient_check",
    "fd_hvp_check",
    "hvp_symmetry_check",
]


# ---------------------------------------------------------------------------
# synthetic SPD systems

def synthetic_spd(n: int, kappa: float, seed: int = 0, spectrum: str = "loguniform") -> SymmetricOperator:
    """Dense ``Q D Q'`` with seeded orthogonal ``Q`` and eigenvalues in ``[1/kappa, 1]``.

    ``spectrum="loguniform"`` spaces the eigenvalues geometrically (both
    extremes included); ``"linear"`` spaces them evenly.  The eigenvalues
    travel with the operator so the exact condition number is known.
    """
    if kappa < 1:
        raise ValueError("condition number must be at least 1")
    if n < 1:
        raise DimensionError("dimension must be positive")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    if n == 1:
        D = np.ones(1)
    elif spectrum == "loguniform":
        D = np.logspace(-np.log10(kappa), 0.0, n)
    elif spectrum == "linear":
        D = np.linspace(1.0 / kappa, 1.0, n)
    else:
        raise ValueError(f"unknown spectrum {spectrum!r}")
    M = (Q * D) @ Q.T
    M = 0.5 * (M + M.T)
    name = f"synthetic(n={n},kappa={kappa:g},seed={seed},{spectrum})"
    return SymmetricOperator.from_matrix(M, name=name, eigenvalues=D)


# ---------------------------------------------------------------------------
# Lorenz-96

class BlowUpError(SolverError):
    """The model state became non-finite during integration."""


def lorenz96_rhs(z, F: float = 8.0) -> np.ndarray:
    """Cyclic ``dz_i/dt = (z_{i+1} - z_{i-2}) z_{i-1} - z_i + F``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 4:
        raise DimensionError("Lorenz-96 needs a state vector of length at least 4")
    return (np.roll(z, -1) - np.roll(z, 2)) * np.roll(z, 1) - z + F


def _l96_vjp(z, w):
    """``J(z)' w`` for the Lorenz-96 right-hand side."""
    # d f_i / d z_{i+1} = z_{i-1};  d f_i / d z_{i-2} = -z_{i-1}
    # d f_i / d z_{i-1} = z_{i+1} - z_{i-2};  d f_i / d z_i = -1
    zp1, zm1, zm2 = np.roll(z, -1), np.roll(z, 1), np.roll(z, 2)
    out = np.roll(w * zm1, 1)             # contributions to z_{i+1}
    out -= np.roll(w * zm1, -2)           # contributions to z_{i-2}
    out += np.roll(w * (zp1 - zm2), -1)   # contributions to z_{i-1}
    return out - w


def rk4_step(z, dt: float, F: float = 8.0):
    k1 = lorenz96_rhs(z, F)
    k2 = lorenz96_rhs(z + 0.5 * dt * k1, F)
    k3 = lorenz96_rhs(z + 0.5 * dt * k2, F)
    k4 = lorenz96_rhs(z + dt * k3, F)
    return z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(z0, steps: int, dt: float = 0.01, F: float = 8.0, return_path: bool = False):
    """Fixed-step classical RK4 integration of Lorenz-96.

    Raises :class:`BlowUpError` as soon as the state is non-finite.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    z = np.array(z0, dtype=np.float64, copy=True)
    path = [z.copy()] if return_path else None
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(steps)):
            z = rk4_step(z, dt, F)
            if not np.all(np.isfinite(z)):
                raise BlowUpError("Lorenz-96 state became non-finite")
            if return_path:
                path.append(z.copy())
    return (z, path) if return_path else z


def _rk4_vjp(z, lam, dt, F):
    """Pull ``lam`` (adjoint of the state after one RK4 step) back to ``z``."""
    a2_shift = 0.5 * dt
    k1 = lorenz96_rhs(z, F)
    a2 = z + a2_shift * k1
    k2 = lorenz96_rhs(a2, F)
    a3 = z + a2_shift * k2
    k3 = lorenz96_rhs(a3, F)
    a4 = z + dt * k3
    gk4 = dt / 6.0 * lam
    gk3 = dt / 3.0 * lam
    gk2 = dt / 3.0 * lam
    gk1 = dt / 6.0 * lam
    ga4 = _l96_vjp(a4, gk4)
    gk3 = gk3 + dt * ga4
    ga3 = _l96_vjp(a3, gk3)
    gk2 = gk2 + a2_shift * ga3
    ga2 = _l96_vjp(a2, gk2)
    gk1 = gk1 + a2_shift * ga2
    return lam + ga4 + ga3 + ga2 + _l96_vjp(z, gk1)


@dataclass(frozen=True)
class AssimilationProblem:
    """Strong-constraint variational assimilation over a Lorenz-96 trajectory.

    Observation ``i`` (``i = 1..N_t``) is taken after ``i * steps_between``
    integration steps at the indices ``obs_indices[i-1]``.
    """

    n: int
    zb: np.ndarray
    sigma_b: float
    sigma_r: float
    obs_indices: tuple
    observations: tuple
    steps_between: int = 10
    dt: float = 0.01
    F: float = 8.0
    truth: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.sigma_b <= 0 or self.sigma_r <= 0:
            raise ValueError("covariance scales must be positive")
        if len(self.obs_indices) != len(self.observations):
            raise ValueError("one index set per observation vector")
        for idx, y in zip(self.obs_indices, self.observations):
            idx = np.asarray(idx)
            if idx.size > self.n or np.any(np.diff(idx) <= 0) or idx.min() < 0 or idx.max() >= self.n:
                raise ValueError("observation indices must be strictly increasing and within range")
            if np.shape(y) != idx.shape:
                raise DimensionError("observation vector does not match its index set")

    @property
    def n_obs_times(self) -> int:
        return len(self.observations)


def make_assimilation(n: int = 40, n_times: int = 2, m_obs=20, sigma_b: float = 0.8,
                      sigma_r: float = 0.2, steps_between: int = 10, dt: float = 0.01,
                      F: float = 8.0, seed: int = 0, noise: bool = True,
                      spinup: int = 500) -> AssimilationProblem:
    """Seeded twin experiment: truth from a spun-up trajectory, noisy observations,
    background equal to truth plus ``N(0, sigma_b)`` noise."""
    rng = np.random.default_rng(seed)
    truth = propagate(F + rng.standard_normal(n), spinup, dt, F)
    zb = truth + np.sqrt(sigma_b) * rng.standard_normal(n)
    ms = [m_obs] * n_times if np.isscalar(m_obs) else list(m_obs)
    idx_sets, obs = [], []
    z = truth
    for m in ms:
        if m > n:
            raise ValueError("more observations than state components")
        z = propagate(z, steps_between, dt, F)
        idx = np.unique(np.linspace(0, n - 1, m).round().astype(int))
        y = z[idx] + (sigma_r * rng.standard_normal(idx.size) if noise else 0.0)
        idx_sets.append(tuple(int(i) for i in idx))
        obs.append(np.asarray(y, dtype=np.float64))
    return AssimilationProblem(n, zb, sigma_b, sigma_r, tuple(idx_sets), tuple(obs),
                               steps_between, dt, F, truth=truth, seed=seed)


def assimilation_objective(p: AssimilationProblem, z0) -> float:
    z0 = np.asarray(z0, dtype=np.float64)
    f = 0.5 * float(np.sum((z0 - p.zb) ** 2)) / p.sigma_b
    z = z0
    for idx, y in zip(p.obs_indices, p.observations):
        z = propagate(z, p.steps_between, p.dt, p.F)
        r = y - z[list(idx)]
        f += 0.5 * float(r @ r) / p.sigma_r ** 2
    return f


def _assimilation_f_grad(p: AssimilationProblem, z0):
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.shape != (p.n,):
        raise DimensionError(f"expected a state of length {p.n}")
    f = 0.5 * float(np.sum((z0 - p.zb) ** 2)) / p.sigma_b
    # forward sweep, keeping every state for the adjoint
    states = [z0]
    z = z0
    seeds = {}
    step = 0
    for idx, y in zip(p.obs_indices, p.observations):
        for _ in range(p.steps_between):
            z = rk4_step(z, p.dt, p.F)
            states.append(z)
        step += p.steps_between
        if not np.all(np.isfinite(z)):
            raise BlowUpError("Lorenz-96 state became non-finite")
        r = y - z[list(idx)]
        f += 0.5 * float(r @ r) / p.sigma_r ** 2
        seed = np.zeros(p.n)
        seed[list(idx)] = -r / p.sigma_r ** 2
        seeds[step] = seed
    # reverse sweep
    lam = np.zeros(p.n)
    for j in range(step, 0, -1):
        if j in seeds:
            lam = lam + seeds[j]
        lam = _rk4_vjp(states[j - 1], lam, p.dt, p.F)
    grad = lam + (z0 - p.zb) / p.sigma_b
    return f, grad


def assimilation_fgh(p: AssimilationProblem, z0, fd_step: Optional[float] = None):
    """Objective, discrete-adjoint gradient and finite-difference Hessian product.

    The gradient is exact for the discretized model (reverse sweep through
    every RK4 stage).  ``hvp(v)`` is the central difference of the gradient
    along ``v`` with step ``h = fd_step or cbrt(eps) * (1 + ||z||) / ||v||``.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    f, g = _assimilation_f_grad(p, z0)
    base = 1.0 + float(np.linalg.norm(z0))

    def hvp(v):
        v = np.asarray(v, dtype=np.float64)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.zeros_like(v)
        h = fd_step if fd_step is not None else np.cbrt(np.finfo(float).eps) * base / nv
        gp = _assimilation_f_grad(p, z0 + h * v)[1]
        gm = _assimilation_f_grad(p, z0 - h * v)[1]
        return (gp - gm) / (2.0 * h)

    return f, g, hvp


def assimilation_functions(p: AssimilationProblem):
    """``(f, grad, hvp)`` callables of ``z`` for :func:`~qnkrylov.trust_region.tr_newton`."""
    def f(z):
        return assimilation_objective(p, z)

    def grad(z):
        return _assimilation_f_grad(p, z)[1]

    def hvp(z, v):
        return assimilation_fgh(p, z)[2](v)

    return f, grad, hvp


# ---------------------------------------------------------------------------
# binary classification

@dataclass(frozen=True)
class ClassificationProblem:
    """``f(z) = 1/2 ||1 - tanh(b * (A' z))||^2`` with samples stored as columns of ``A``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or b.shape != (A.shape[1],):
            raise DimensionError("labels must match the number of columns of A")
        if not np.all(np.abs(b) == 1.0):
            raise ValueError("labels must be +1 or -1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_features(self) -> int:
        return self.A.shape[0]

    @property
    def n_samples(self) -> int:
        return self.A.shape[1]


def make_classification(N: int = 2000, n: int = 100, seed: int = 0, separation: float = 2.0):
    """Two overlapping Gaussian clusters in ``R^n`` with centers ``+-mu/2``.

    Each cluster has unit covariance and ``||mu|| = separation``, so the
    classes overlap along ``mu``.  Everything is scaled by ``1/sqrt(n)`` to
    keep ``A'z`` of order one near the origin.
    """
    rng = np.random.default_rng(seed)
    b = np.where(rng.random(N) < 0.5, 1.0, -1.0)
    mu = rng.standard_normal(n)
    mu *= separation / np.linalg.norm(mu)
    X = (rng.standard_normal((n, N)) + 0.5 * np.outer(mu, b)) / np.sqrt(n)
    return ClassificationProblem(X, b)


def load_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzipped): big-endian magic, dims, raw data."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    zero, dtype_code, ndim = struct.unpack(">HBB", raw[:4])
    types = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
    if zero != 0 or dtype_code not in types:
        raise ValueError(f"{path}: bad IDX magic number")
    dims = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    dt = np.dtype(types[dtype_code])
    count = int(np.prod(dims)) if dims else 1
    body = raw[4 + 4 * ndim:]
    if len(body) != count * dt.itemsize:
        raise ValueError(f"{path}: expected {count} items, found {len(body) // dt.itemsize}")
    return np.frombuffer(body, dtype=dt).reshape(dims)


def classification_from_idx(images_path, labels_path, positive: int = 1, negative: int = 7):
    """Digits ``positive`` (label +1) against ``negative`` (label -1), pixels in [0, 1]."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DimensionError("image and label counts differ")
    keep = (labels == positive) | (labels == negative)
    X = images[keep].reshape(int(keep.sum()), -1).astype(np.float64) / 255.0
    b = np.where(labels[keep] == positive, 1.0, -1.0)
    return ClassificationProblem(X.T.copy(), b)


def classification_fgh(p: ClassificationProblem, z):
    """Objective, analytic gradient and exact Hessian-vector product."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (p.n_features,):
        raise DimensionError(f"expected a vector of length {p.n_features}")
    A, b = p.A, p.b
    t = np.tanh(b * (A.T @ z))
    e = 1.0 - t
    f = 0.5 * float(e @ e)
    sech2 = 1.0 - t * t
    grad = -(A @ (b * sech2 * e))
    # phi(u) = 1/2 (1 - tanh u)^2 ; phi'' = sech2 * (sech2 + 2 t (1 - t)), and b^2 = 1
    w = sech2 * (sech2 + 2.0 * t * e)

    def hvp(v):
        return A @ (w * (A.T @ np.asarray(v, dtype=np.float64)))

    return f, grad, hvp


def classification_functions(p: ClassificationProblem):
    def f(z):
        return classification_fgh(p, z)[0]

    def grad(z):
        return classification_fgh(p, z)[1]

    def hvp(z, v):
        return classification_fgh(p, z)[2](v)

    return f, grad, hvp


# ---------------------------------------------------------------------------
# small analytic problems

def rosenbrock_fgh(z):
    """Two-dimensional Rosenbrock function ``100 (y - x^2)^2 + (1 - x)^2``."""
    x, y = float(z[0]), float(z[1])
    f = 100.0 * (y - x * x) ** 2 + (1.0 - x) ** 2
    g = np.array([-400.0 * x * (y - x * x) - 2.0 * (1.0 - x), 200.0 * (y - x * x)])
    H = np.array([[1200.0 * x * x - 400.0 * y + 2.0, -400.0 * x], [-400.0 * x, 200.0]])
    return f, g, (lambda v: H @ np.asarray(v, dtype=np.float64))


def rosenbrock_functions():
    return (lambda z: rosenbrock_fgh(z)[0], lambda z: rosenbrock_fgh(z)[1],
            lambda z, v: rosenbrock_fgh(z)[2](v))


def quadratic_fgh(A, b) -> tuple[Callable, Callable, Callable]:
    """``f(z) = 1/2 z'Az - b'z`` as ``(f, grad, hvp)`` callables."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (lambda z: float(0.5 * z @ A @ z - b @ z), lambda z: A @ z - b, lambda z, v: A @ v)


# ---------------------------------------------------------------------------
# derivative checks

def fd_gradient_check(f, grad, z, directions: int = 3, seed: int = 0, h: Optional[float] = None) -> float:
    """Worst relative mismatch between ``grad(z)'d`` and a central difference of ``f``."""
    rng = np.random.default_rng(seed)
    z = np.asarray(z, dtype=np.float64)
    g = grad(z)
    worst = 0.0
    for _ in range(directions):
        d = rng.standard_normal(z.size)
        d /= np.linalg.norm(d)
        step = h if h is not None else 1e-5 * (1.0 + np.linalg.norm(z))
        fd = (f(z + step * d) - f(z - step * d)) / (2.0 * step)
        an = float(g @ d)
        worst = max(worst, abs(fd - an) / max(abs(an), np.linalg.norm(g), 1e-300))
    return worst


def fd_hvp_check(grad, hvp, z, directions: int = 3, seed: int = 0) -> float:
    """Worst relative mismatch between ``hvp(v)`` and a central difference of ``grad``."""
    rng = np.random.default_rng(seed)
    z = np.asarray(z, dtype=np.float64)
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(z.size)
        v /= np.linalg.norm(v)
        h = 1e-5 * (1.0 + np.linalg.norm(z))
        fd = (grad(z + h * v) - grad(z - h * v)) / (2.0 * h)
        an = hvp(v)
        worst = max(worst, float(np.linalg.norm(fd - an) / max(np.linalg.norm(an), 1e-300)))
    return worst


def hvp_symmetry_check(hvp, n: int, pairs: int = 3, seed: int = 0) -> float:
    """Worst relative value of ``|u'H v - v'H u|``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        Hu, Hv = hvp(u), hvp(v)
        scale = max(abs(u @ Hv), abs(v @ Hu), np.linalg.norm(u) * np.linalg.norm(Hv) * 1e-3, 1e-300)
        worst = max(worst, abs(u @ Hv - v @ Hu) / scale)
    return worst
