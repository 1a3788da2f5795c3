"""Executable identity suites.

Each suite builds seeded instances, evaluates a list of checks and returns
a :class:`Report`.  Every check that enforces a module invariant carries
the invariant's identifier; :data:`INVARIANTS` lists them all so a test can
confirm nothing is left unchecked.

Synthetic instances default to evenly spaced spectra: the identities are
exact-arithmetic statements, and on geometrically spaced spectra rounding
errors are amplified enough after a dozen iterations to swamp the
tolerances (see the README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..broyden import broyden_solve, gamma_next, gamma_sr1_next
from ..core import QuadraticModel, check_operator
from ..krylov import ArnoldiBasis, arnoldi_step, diom_identity_report, diom_solve, fom_solve, pcg_solve
from ..limited_memory import (
    LbfgsMemory,
    Lsr1Memory,
    lbfgs_apply,
    lbfgs_push,
    lbfgs_solve,
    lsr1_apply,
    lsr1_push,
)
from ..broyden import broyden_update
from ..problems import rosenbrock_functions, synthetic_spd
from ..trust_region import SUBSOLVERS, TrustRegionConfig, tr_newton

__all__ = ["Check", "Report", "SUITES", "INVARIANTS", "verify", "rel_iterate_error"]

#: invariant id -> suite responsible for it
INVARIANTS = {
    "broyden.hereditary_secant": "secant",
    "broyden.symmetry": "secant",
    "broyden.collinearity": "gamma",
    "broyden.gamma_recurrence": "gamma",
    "broyden.closed_forms": "gamma",
    "broyden.pcg_coincidence": "gamma",
    "broyden.steplength_ordering": "steplen",
    "limited_memory.lbfgs_pcg_coincidence": "lbfgs-cg",
    "limited_memory.lbfgs_dense_match": "lbfgs-cg",
    "limited_memory.memory_accounting": "lbfgs-cg",
    "krylov.pcg_fom_diom_coincidence": "diom-identities",
    "krylov.window_orthogonality": "diom-identities",
    "krylov.diom_conjugacy": "diom-identities",
    "krylov.residual_identity": "diom-identities",
    "krylov.diom_identities": "diom-identities",
    "krylov.quadratic_termination": "quadratic-termination",
    "broyden.quadratic_termination": "quadratic-termination",
    "trust_region.bounds": "tr-monotonicity",
    "trust_region.inner_monotonicity": "tr-monotonicity",
    "trust_region.infinite_radius": "tr-monotonicity",
    "trust_region.outer_monotonicity": "tr-monotonicity",
}


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    invariant: Optional[str] = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tol": self.tol, "passed": self.passed,
                "invariant": self.invariant, "detail": self.detail}


@dataclass
class Report:
    suite: str
    params: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, tol, invariant=None, detail="", passed=None) -> Check:
        value = float(value)
        if passed is None:
            passed = bool(value <= tol)
        c = Check(name, value, float(tol), bool(passed), invariant, detail)
        self.checks.append(c)
        return c

    def as_dict(self) -> dict:
        return {"suite": self.suite, "params": self.params, "passed": self.passed,
                "checks": [c.as_dict() for c in self.checks]}

    def lines(self):
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            extra = f"  ({c.detail})" if c.detail else ""
            yield f"{tag}  {c.name}: {c.value:.3e} (tol {c.tol:.1e}){extra}"


def rel_iterate_error(xs, ref) -> float:
    """Largest ``||x_k - ref_k|| / max(||ref_k||, tiny)`` over common indices ``k >= 1``."""
    K = min(len(xs), len(ref))
    worst = 0.0
    for k in range(1, K):
        scale = max(float(np.linalg.norm(ref[k])), np.finfo(float).tiny)
        worst = max(worst, float(np.linalg.norm(xs[k] - ref[k])) / scale)
    return worst


def _instance(n, kappa, seed, spectrum):
    A = synthetic_spd(n, kappa, seed, spectrum)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    return A, b, QuadraticModel(A, b)


def _rel(a, b):
    return abs(a - b) / max(abs(b), np.finfo(float).tiny)


# ---------------------------------------------------------------------------

def suite_gamma(n=20, kappa=100.0, seed=0, spectrum="linear", rtol=1e-10, angle_tol=1e-6):
    rep = Report("gamma", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    A, b, model = _instance(n, kappa, seed, spectrum)
    K = min(n, 40)
    _, tp = pcg_solve(A, b, rtol=rtol, maxit=K, keep_history=True)
    for sched in ("bfgs", "dfp", 0.5):
        _, t = broyden_solve(model, schedule=sched, rtol=rtol, maxit=K, shadow=True, keep_history=True)
        label = f"phi={sched}"
        rep.add(f"{label} iterates vs PCG", rel_iterate_error(t.iterates, tp.iterates), 1e-8,
                "broyden.pcg_coincidence")
        rep.add(f"{label} angle to PCG direction [rad]", max(t.info["angle"]), angle_tol,
                "broyden.collinearity")
        gm = np.array(t.info["gamma_measured"])
        gr = np.array(t.info["gamma_recurrence"])
        rep.add(f"{label} measured gamma vs recurrence", np.max(np.abs(gm - gr) / np.abs(gr)), 1e-6,
                "broyden.gamma_recurrence")
        rep.add(f"{label} gamma > 0", 0.0 if gm.min() > 0 else 1.0, 0.0, "broyden.gamma_recurrence",
                detail=f"min gamma {gm.min():.3e}")
        if sched == "bfgs":
            rep.add("bfgs |gamma - 1|", np.max(np.abs(gm - 1.0)), 1e-10, "broyden.closed_forms")
        if sched == "dfp":
            rho = t.info["rho"]
            step = [gamma_next(gm[k], 0.0, rho[k], rho[k + 1]) for k in range(len(gm) - 1)]
            err = max((_rel(gm[k + 1], step[k]) for k in range(len(step))), default=0.0)
            rep.add("dfp one-step closed form", err, 1e-6, "broyden.closed_forms")
    _, t = broyden_solve(model, schedule="sr1", rtol=rtol, maxit=K, shadow=True)
    gm = t.info["gamma_measured"]
    closed = t.info["gamma_sr1"]
    m = min(len(gm) - 1, len(closed))
    err = max((_rel(gm[k + 1], closed[k]) for k in range(m)), default=0.0)
    rep.add("sr1 closed form with PCG step length", err, 1e-6, "broyden.closed_forms",
            detail=f"{m} steps, status {t.status}")
    return rep


def suite_steplen(n=20, kappa=100.0, seed=0, spectrum="linear", rtol=1e-10,
                  pairs=((0.0, 0.5), (0.5, 1.0), (0.0, 1.0)), slack=1e-12):
    rep = Report("steplen", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    A, b, model = _instance(n, kappa, seed, spectrum)
    K = min(n, 40)
    runs = {}
    for phi in sorted({p for pair in pairs for p in pair}):
        runs[phi] = broyden_solve(model, schedule=phi, rtol=rtol, maxit=K, shadow=True)[1]
    for p1, p2 in pairs:
        a1, a2 = runs[p1].column("alpha")[1:], runs[p2].column("alpha")[1:]
        k = min(len(a1), len(a2))
        excess = float(np.max(a2[:k] - a1[:k])) if k else 0.0
        rep.add(f"alpha(phi={p2}) <= alpha(phi={p1}) + {slack:g}", max(excess, 0.0), slack,
                "broyden.steplength_ordering", detail=f"max excess {excess:.2e}")
    for phi, t in runs.items():
        ap = np.array(t.info["alpha_pcg"])
        a = t.column("alpha")[1:]
        k = min(len(ap), len(a))
        excess = float(np.max(ap[:k] - a[:k])) if k else 0.0
        rep.add(f"alpha_PCG <= alpha(phi={phi}) + {slack:g}", max(excess, 0.0), slack,
                "broyden.steplength_ordering", detail=f"max excess {excess:.2e}")
        rep.add(f"alpha_PCG > 0 (phi={phi})", 0.0 if ap.min() > 0 else 1.0, 0.0,
                "broyden.steplength_ordering")
    return rep


def suite_secant(n=20, kappa=100.0, seed=0, spectrum="linear", rtol=1e-10, maxit=None):
    rep = Report("secant", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    _, _, model = _instance(n, kappa, seed, spectrum)
    maxit = min(n, 40) if maxit is None else maxit
    for sched in ("bfgs", "dfp", 0.5, "sr1"):
        _, t = broyden_solve(model, schedule=sched, rtol=rtol, maxit=maxit, keep_history=True)
        H = t.info["H"]
        pairs = t.info["pairs"][:len(t.info["phi"])]
        err = max((float(np.linalg.norm(H @ y - s) / np.linalg.norm(s)) for s, y in pairs), default=0.0)
        rep.add(f"phi={sched} hereditary secant over {len(pairs)} updates", err, 1e-8,
                "broyden.hereditary_secant")
        sym = float(np.linalg.norm(H - H.T) / np.linalg.norm(H))
        rep.add(f"phi={sched} H symmetric", sym, 1e-12, "broyden.symmetry")
    return rep


def suite_lbfgs_cg(n=20, kappa=100.0, seed=0, spectrum="linear", rtol=1e-10, memories=None):
    rep = Report("lbfgs-cg", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    A, b, model = _instance(n, kappa, seed, spectrum)
    K = min(n, 40)
    _, tp = pcg_solve(A, b, rtol=rtol, maxit=K, keep_history=True)
    for m in memories or (1, 5, n):
        _, t = lbfgs_solve(model, m, rtol=rtol, maxit=K, keep_history=True)
        rep.add(f"LBFGS({m}) iterates vs PCG", rel_iterate_error(t.iterates, tp.iterates), 1e-8,
                "limited_memory.lbfgs_pcg_coincidence")
        rep.add(f"LBFGS({m}) directions vs PCG", rel_iterate_error(
            [None] + t.directions, [None] + tp.directions[:len(t.directions)]), 1e-8,
            "limited_memory.lbfgs_pcg_coincidence")
        a, ap = t.column("alpha")[1:], tp.column("alpha")[1:]
        k = min(len(a), len(ap))
        rep.add(f"LBFGS({m}) step lengths vs PCG", float(np.max(np.abs(a[:k] - ap[:k]) / ap[:k])), 1e-8,
                "limited_memory.lbfgs_pcg_coincidence")
    # two-loop operator against dense BFGS along the same trajectory, m >= k
    _, t = broyden_solve(model, schedule="bfgs", rtol=rtol, maxit=min(n, 10), keep_history=True)
    mem = LbfgsMemory(n, n)
    H = np.eye(n)
    worst = 0.0
    for s, y in t.info["pairs"][:len(t.info["phi"])]:
        lbfgs_push(mem, s, y)
        H = broyden_update(H, s, y, 1.0)
        D = np.column_stack([lbfgs_apply(mem, e) for e in np.eye(n)])
        worst = max(worst, float(np.linalg.norm(D - H) / np.linalg.norm(H)))
    rep.add("two-loop operator vs dense BFGS (m >= k)", worst, 1e-9, "limited_memory.lbfgs_dense_match")
    # storage and per-iteration cost accounting
    m = 5
    lb, ls = LbfgsMemory(n, m), Lsr1Memory(n, m)
    rng = np.random.default_rng(seed)
    for _ in range(m):
        s = rng.standard_normal(n)
        lbfgs_push(lb, s, A @ s)
        lsr1_push(ls, s, A @ s)
    lb.mults = ls.mults = 0
    s = rng.standard_normal(n)
    lbfgs_apply(lb, s)
    lbfgs_push(lb, s, A @ s)
    lsr1_apply(ls, s)
    lsr1_push(ls, s, A @ s)
    ok = lb.stored_vectors() == 2 + 2 * m and ls.stored_vectors() == 2 + m
    rep.add("stored vectors 2+2m (LBFGS) and 2+m (LSR1)", 0.0 if ok else 1.0, 0.0,
            "limited_memory.memory_accounting")
    expected = 4 * m * n + n
    rep.add("LBFGS multiplications per iteration = 4mn+n", abs(lb.mults - expected), 0.0,
            "limited_memory.memory_accounting", detail=f"{lb.mults} vs {expected}")
    rep.add("LSR1 multiplications per iteration = 4mn+n", abs(ls.mults - expected), 0.0,
            "limited_memory.memory_accounting", detail=f"{ls.mults} vs {expected}")
    return rep


def suite_diom_identities(n=20, kappa=100.0, seed=0, spectrum="linear", rtol=1e-10, memories=None):
    rep = Report("diom-identities", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    A, b, _ = _instance(n, kappa, seed, spectrum)
    K = min(n, 40)
    _, tp = pcg_solve(A, b, rtol=rtol, maxit=K, keep_history=True)
    _, tf = fom_solve(A, b, rtol=rtol, maxit=K, keep_history=True)
    rep.add("FOM iterates vs PCG", rel_iterate_error(tf.iterates, tp.iterates), 1e-8,
            "krylov.pcg_fom_diom_coincidence")
    rep.add("FOM residual identity", tf.info["residual_gap"], 1e-8, "krylov.residual_identity")
    Adense = A.dense()
    for m in memories or (1, 5, n):
        _, td = diom_solve(A, b, m=m, rtol=rtol, maxit=K, keep_history=True, refresh=1)
        rep.add(f"DIOM({m}) iterates vs PCG", rel_iterate_error(td.iterates, tp.iterates), 1e-8,
                "krylov.pcg_fom_diom_coincidence")
        gaps = [g for _, g in td.info["refresh_gaps"]]
        rep.add(f"DIOM({m}) residual identity at refresh", max(gaps, default=0.0), 1e-8,
                "krylov.residual_identity")
        r = diom_identity_report(td, tp)
        rep.add(f"DIOM({m}) |u_(k+1,k+1) alpha_k - 1|", r["u_alpha"], 1e-7, "krylov.diom_identities")
        rep.add(f"DIOM({m}) sign(zeta_k) = (-1)^(k-1)", 0.0 if r["zeta_signs"] else 1.0, 0.0,
                "krylov.diom_identities")
        rep.add(f"DIOM({m}) sign(g_k'p_(k+1)) = (-1)^(k-1)", 0.0 if r["descent_signs"] else 1.0, 0.0,
                "krylov.diom_identities")
        rep.add(f"DIOM({m}) g_0'p_1 = -beta/u_11", r["g0p1"], 1e-8, "krylov.diom_identities")
        rep.add(f"DIOM({m}) zeta u p reproduces PCG direction", r["direction"], 1e-7,
                "krylov.diom_identities")
        u = td.column("u_kk")[1:]
        rep.add(f"DIOM({m}) u_kk > 0", 0.0 if np.all(u > 0) else 1.0, 0.0, "krylov.diom_identities")
        P = td.directions
        worst = 0.0
        for i in range(len(P)):
            for j in range(max(0, i - m), i):
                Api, Apj = Adense @ P[i], Adense @ P[j]
                den = math.sqrt(float(P[i] @ Api) * float(P[j] @ Apj))
                worst = max(worst, abs(float(P[i] @ Apj)) / den)
        rep.add(f"DIOM({m}) window A-conjugacy", worst, 1e-8, "krylov.diom_conjugacy")
        # window orthogonality of the incomplete Arnoldi basis
        basis = ArnoldiBasis(b / np.linalg.norm(b), window=m + 1)
        V = {1: basis[1]}
        norm_err, orth = abs(np.linalg.norm(V[1]) - 1.0), 0.0
        for k in range(1, K):
            st = arnoldi_step(A, basis, k)
            if st.happy_breakdown:
                break
            V[k + 1] = st.v_next
            norm_err = max(norm_err, abs(float(np.linalg.norm(st.v_next)) - 1.0))
            for i in range(max(1, k + 1 - m), k + 1):
                orth = max(orth, abs(float(V[i] @ V[k + 1])))
        rep.add(f"Arnoldi window {m}: unit basis vectors", norm_err, 1e-12, "krylov.window_orthogonality")
        rep.add(f"Arnoldi window {m}: within-window orthogonality", orth, 1e-8,
                "krylov.window_orthogonality")
    return rep


def suite_quadratic_termination(n=30, kappa=1e3, seed=0, spectrum="linear", rtol=1e-10):
    rep = Report("quadratic-termination", dict(n=n, kappa=kappa, seed=seed, spectrum=spectrum))
    A, b, model = _instance(n, kappa, seed, spectrum)
    rep.add("operator symmetric and linear", 0.0 if check_operator(A) else 1.0, 0.0)
    runs = {
        "cg": pcg_solve(A, b, rtol=rtol, maxit=n)[1],
        "bfgs": broyden_solve(model, schedule="bfgs", rtol=rtol, maxit=n)[1],
        "dfp": broyden_solve(model, schedule="dfp", rtol=rtol, maxit=n)[1],
        "fom": fom_solve(A, b, rtol=rtol, maxit=n)[1],
    }
    for name, t in runs.items():
        inv = "krylov.quadratic_termination" if name in ("cg", "fom") else "broyden.quadratic_termination"
        rep.add(f"{name} residual within n={n} iterations", t.records[-1].rel_res, rtol, inv,
                detail=f"{t.iterations} iterations, {t.status}")
    _, t = broyden_solve(model, schedule="sr1", rtol=0.0, atol=0.0, maxit=n)
    if "breakdown" in t.info and t.info["breakdown"][0] < n - 1:
        rep.add("sr1 ||H_n A - I||", math.nan, 1e-6, "broyden.quadratic_termination",
                detail=f"breakdown at update {t.info['breakdown'][0]}; not applicable", passed=True)
    else:
        H = t.info["H"]
        err = float(np.linalg.norm(H @ A.dense() - np.eye(n)))
        rep.add("sr1 ||H_n A - I||", err, 1e-6, "broyden.quadratic_termination",
                detail=f"{len(t.info['phi'])} updates")
    return rep


def suite_tr_monotonicity(models=100, size=10, seed=0, rtol=1e-10):
    rep = Report("tr-monotonicity", dict(models=models, size=size, seed=seed))
    rng = np.random.default_rng(seed)
    bound = {s: 0.0 for s in SUBSOLVERS}
    neg_dec = {s: 0.0 for s in SUBSOLVERS}
    qmono = {s: 0.0 for s in SUBSOLVERS}
    nmono = {s: 0.0 for s in SUBSOLVERS}
    qrec = {s: 0.0 for s in SUBSOLVERS}
    coincide = {s: 0.0 for s in SUBSOLVERS}
    n = size
    for trial in range(models):
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        ev = rng.uniform(0.1, 2.0, n)
        indefinite = trial % 2 == 1
        if indefinite:
            ev[: rng.integers(1, 4)] *= -1.0
        A = (Q * ev) @ Q.T
        b = rng.standard_normal(n)
        delta = float(rng.uniform(0.1, 3.0))
        model = QuadraticModel.from_matrix(A, b)
        if not indefinite:
            _, tp = pcg_solve(A, b, rtol=rtol, maxit=2 * n, keep_history=True)
        for name, solver in SUBSOLVERS.items():
            res = solver(model, delta, rtol=rtol, keep_iterates=True)
            bound[name] = max(bound[name], float(np.linalg.norm(res.x)) / delta - 1.0)
            neg_dec[name] = max(neg_dec[name], -res.decrease if res.iterations else 0.0)
            q = np.array([0.5 * x @ A @ x - b @ x for x in res.iterates])
            scale = max(1.0, float(np.max(np.abs(q))))
            qmono[name] = max(qmono[name], float(np.max(np.diff(q), initial=-np.inf)) / scale)
            nmono[name] = max(nmono[name], float(np.max(-np.diff(res.norms), initial=-np.inf)) / delta)
            qrec[name] = max(qrec[name], float(np.max(np.abs(q - np.array(res.q_path)))) / scale)
            if not indefinite:
                free = solver(model, math.inf, rtol=rtol, maxit=2 * n, keep_iterates=True)
                coincide[name] = max(coincide[name], rel_iterate_error(free.iterates, tp.iterates))
    for name in SUBSOLVERS:
        rep.add(f"{name}: ||x|| <= Delta (1 + 1e-12)", max(bound[name], 0.0), 1e-12, "trust_region.bounds")
        rep.add(f"{name}: model decrease >= 0", max(neg_dec[name], 0.0), 0.0, "trust_region.bounds")
        rep.add(f"{name}: q nonincreasing along the path", max(qmono[name], 0.0), 1e-12,
                "trust_region.inner_monotonicity")
        rep.add(f"{name}: ||x_k|| nondecreasing", max(nmono[name], 0.0), 1e-12,
                "trust_region.inner_monotonicity")
        rep.add(f"{name}: recurrence model values match q(x_k)", qrec[name], 1e-8,
                "trust_region.inner_monotonicity")
        rep.add(f"{name}: Delta = inf reproduces PCG on SPD models", coincide[name], 1e-8,
                "trust_region.infinite_radius")
    f, g, h = rosenbrock_functions()
    for name in SUBSOLVERS:
        res = tr_newton(f, g, h, np.array([-1.2, 1.0]), TrustRegionConfig(), name)
        fs = [e["f"] for e in res.log] + [res.f]
        rises = max((fs[i + 1] - fs[i] for i in range(len(fs) - 1)), default=0.0)
        rep.add(f"{name}: outer f nonincreasing (Rosenbrock)", max(rises, 0.0), 0.0,
                "trust_region.outer_monotonicity", detail=f"{res.status} in {res.outer_iterations}")
    return rep


SUITES: dict[str, Callable[..., Report]] = {
    "gamma": suite_gamma,
    "steplen": suite_steplen,
    "secant": suite_secant,
    "lbfgs-cg": suite_lbfgs_cg,
    "diom-identities": suite_diom_identities,
    "quadratic-termination": suite_quadratic_termination,
    "tr-monotonicity": suite_tr_monotonicity,
}


def verify(suite: str, **params) -> Report:
    """Run one suite; unknown suites raise ``KeyError``."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    return SUITES[suite](**params)
