"""Newton-homotopy solver for the anisotropic capillary L_p-Minkowski
equation  det(tau[s]) = f s^{p-1}  with the capillary Robin boundary
condition.

The continuation path replaces f by f_t = (1-t) + t f and marches t from 0
to 1 with adaptive steps and a damped Newton corrector.  For p = 1 the
discrete Jacobian has the exact horizontal-translation kernel, so each
Newton solve is a bordered system enforcing the orthogonality gauge; the
data is compatibility-projected first.  For 1 < p < n+1 iterates are
restricted to even functions (symmetric norms, w0 <= 0, even data).  The
p = n+1 eigenvalue pair (s, eta) is solved in the translated-norm
formulation, where the continuation start (s~, eta) = (1, 1) is exact, under
the normalization  int s dmu_F = int l dmu_F.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bodies import (CapBody, from_tilde, is_even, kernel_component,
                     kernel_project, even_symmetrize, tilde_metric)
from .domain import MetricData, integrate
from .errors import (AdmissibilityLost, ConditionFailed, ConfigError,
                     NoConvergence, NotSymmetricNorm,
                     ProjectionBreaksPositivity)


@dataclass
class SolveSpec:
    md: MetricData
    p: float
    f: np.ndarray                  # nodal positive data (in the formulation
                                   # the solve runs in; see `formulation`)
    formulation: str = "shat"      # "shat" | "stilde"
    even_restricted: bool = False
    t_step: float = 0.1
    t_floor: float = 1e-4
    newton_tol: float = 1e-10
    max_newton: int = 40
    tau_floor_scale: float = 1e-8
    check_condition: bool = True
    initial: object = None         # optional nodal start (s-hat variables)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        if self.f.shape != (self.md.ntotal,):
            raise ConfigError("f must be nodal on the cap grid")
        if np.any(self.f <= 0):
            raise ConfigError("f must be positive")
        if self.formulation not in ("shat", "stilde"):
            raise ConfigError(f"unknown formulation {self.formulation!r}")

    @property
    def cap(self):
        return self.md.grid.cap


@dataclass
class SolveResult:
    body: CapBody
    eta: float | None
    converged: bool
    trace: list
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# residual / linearization (spec-level operations)
# ---------------------------------------------------------------------------

def _working(spec: SolveSpec):
    """Metric and data of the formulation the solve runs in."""
    if spec.formulation == "shat":
        return spec.md, spec.f
    tmd = tilde_metric(spec.md)
    return tmd, spec.f * spec.md.ell ** (spec.p - 1)


def _det_and_cof(tau):
    n = tau.shape[-1]
    if n == 1:
        det = tau[:, 0, 0]
        cof = np.ones_like(tau)
        return det, cof
    det = tau[:, 0, 0] * tau[:, 1, 1] - tau[:, 0, 1] ** 2
    cof = np.empty_like(tau)
    cof[:, 0, 0] = tau[:, 1, 1]
    cof[:, 1, 1] = tau[:, 0, 0]
    cof[:, 0, 1] = cof[:, 1, 0] = -tau[:, 0, 1]
    return det, cof


def _homotopy_data(md, p, t, f):
    """f_t = (1-t) l^{1-p} + t f in the working formulation.

    The t = 0 data is the one solved exactly by the cap itself (s = l),
    which for p = 1, and in the translated form where l = 1, is the
    constant-1 start of the continuity method."""
    f0 = np.ones(md.ntotal) if p == 1.0 else md.ell ** (1.0 - p)
    return (1.0 - t) * f0 + t * f


def _residual_fields(md, f, p, s, t):
    tau = md.ops.tau(s)
    det, _ = _det_and_cof(tau)
    ft = _homotopy_data(md, p, t, f)
    r_int = det - ft if p == 1.0 else det - ft * s ** (p - 1.0)
    r_bnd = md.ops.robin_vertical(s)
    return r_int, r_bnd, tau


def residual(spec: SolveSpec, body_or_field, t=1.0):
    """Interior and boundary residuals of the homotopy problem at time t."""
    md, f = _working(spec)
    s = body_or_field.s if isinstance(body_or_field, CapBody) else \
        np.asarray(body_or_field, float)
    if spec.formulation == "stilde" and isinstance(body_or_field, CapBody):
        s = s / spec.md.ell
    r_int, r_bnd, _ = _residual_fields(md, f, spec.p, s, t)
    return {"interior": r_int[md.grid.interior], "boundary": r_bnd,
            "interior_full": r_int}


def _jacobian(md, f, p, s, t, tau, eta=None, nexp=None):
    """Dense Jacobian with boundary rows replaced by the Robin functional."""
    Nt = md.ntotal
    n = md.grid.n
    _, cof = _det_and_cof(tau)
    S = md.ops.tau_sparse()
    if n == 1:
        stot = S[(0, 0)].copy()
        trace_w = np.ones(Nt)
    else:
        stot = (sp.diags(cof[:, 0, 0]) @ S[(0, 0)]
                + sp.diags(cof[:, 1, 1]) @ S[(1, 1)]
                + sp.diags(2.0 * cof[:, 0, 1]) @ S[(0, 1)])
        trace_w = cof[:, 0, 0] + cof[:, 1, 1]
    J = stot.toarray()
    B, P = md.basis, md.proj
    J -= (stot @ B) @ P
    J += np.outer(trace_w, P[0])
    ft = _homotopy_data(md, p, t, f)
    if eta is not None:
        J[np.arange(Nt), np.arange(Nt)] -= eta * ft * nexp * s ** (nexp - 1.0)
    elif p != 1.0:
        J[np.arange(Nt), np.arange(Nt)] -= (p - 1.0) * ft * s ** (p - 2.0)
    bm = md.grid.boundary
    J[bm] = md.ops.robin_matrix()
    return J


def linearize(spec: SolveSpec, body_or_field, t=1.0):
    """The discrete linearized operator (dense), Robin rows included."""
    md, f = _working(spec)
    s = body_or_field.s if isinstance(body_or_field, CapBody) else \
        np.asarray(body_or_field, float)
    if spec.formulation == "stilde" and isinstance(body_or_field, CapBody):
        s = s / spec.md.ell
    _, _, tau = _residual_fields(md, f, spec.p, s, t)
    return _jacobian(md, f, spec.p, s, t, tau)


def linearized_p1_operator(md: MetricData, s):
    """L_s(v) = G^{ij} tau_ij[v] as a dense matrix (interior rows only
    carry the operator; no boundary replacement).  Test/diagnostic use."""
    tau = md.ops.tau(np.asarray(s, float))
    _, cof = _det_and_cof(tau)
    S = md.ops.tau_sparse()
    n = md.grid.n
    if n == 1:
        stot = S[(0, 0)].copy()
        trace_w = np.ones(md.ntotal)
    else:
        stot = (sp.diags(cof[:, 0, 0]) @ S[(0, 0)]
                + sp.diags(cof[:, 1, 1]) @ S[(1, 1)]
                + sp.diags(2.0 * cof[:, 0, 1]) @ S[(0, 1)])
        trace_w = cof[:, 0, 0] + cof[:, 1, 1]
    J = stot.toarray()
    J -= (stot @ md.basis) @ md.proj
    J += np.outer(trace_w, md.proj[0])
    return J


# ---------------------------------------------------------------------------
# compatibility projection (p = 1)
# ---------------------------------------------------------------------------

def compat_project(md: MetricData, f):
    """Remove the kernel-function component of f (solvability of p = 1).

    Returns (projected f, defect coefficients); raises if positivity is lost.
    """
    f = np.asarray(f, dtype=float)
    c = kernel_component(md, f)
    fp = f - md.kernel @ c
    if fp.min() <= 0:
        raise ProjectionBreaksPositivity(
            f"projected data loses positivity (min {fp.min():.3e})")
    return fp, c


# ---------------------------------------------------------------------------
# Newton corrector
# ---------------------------------------------------------------------------

class _NewtonOutcome:
    def __init__(self, s, converged, iters, residuals, admissibility_hit,
                 eta=None):
        self.s = s
        self.converged = converged
        self.iters = iters
        self.residuals = residuals
        self.admissibility_hit = admissibility_hit
        self.eta = eta


def _supnorm(r_int, r_bnd, interior):
    return max(np.abs(r_int[interior]).max(), np.abs(r_bnd).max()
               if len(r_bnd) else 0.0)


def _newton(md, f, p, s0, t, spec, kernel_cols=None, symmetrize=None,
            eta_mode=False, norm_row=None, norm_target=None, eta0=None):
    """Damped Newton corrector at fixed homotopy time t.

    kernel_cols: bordered columns/rows for the p=1 translation kernel.
    eta_mode: solve det(tau) = eta f_t s^n with the normalization row.
    """
    Nt = md.ntotal
    interior = md.grid.interior
    bm = md.grid.boundary
    s = s0.copy()
    eta = eta0
    nexp = md.grid.n if eta_mode else None
    residuals = []
    admissibility_hit = False
    nonmonotone_budget = 5

    def full_residual(sv, etav):
        tau = md.ops.tau(sv)
        det, _ = _det_and_cof(tau)
        ft = _homotopy_data(md, p, t, f)
        if eta_mode:
            r_int = det - etav * ft * sv ** nexp
        elif p == 1.0:
            r_int = det - ft
        else:
            r_int = det - ft * sv ** (p - 1.0)
        R = np.where(interior, r_int, 0.0)
        R[bm] = md.ops.robin_matrix() @ sv
        return R, tau

    floor = None
    for it in range(spec.max_newton):
        if eta_mode:
            # dilation gauge: rescaling is an exact symmetry of the system,
            # so enforce the normalization multiplicatively each cycle
            s = s * (norm_target / (norm_row @ s))
            tau0 = md.ops.tau(s)
            det0, _ = _det_and_cof(tau0)
            ft = _homotopy_data(md, p, t, f)
            eta = integrate(md, det0) / integrate(md, ft * s ** nexp)
        R, tau = full_residual(s, eta)
        rn = _supnorm(R, R[bm], interior)
        residuals.append(rn)
        if floor is None:
            tr = np.trace(tau, axis1=1, axis2=2) / md.grid.n
            floor = spec.tau_floor_scale * max(1.0, float(np.abs(tr).mean()))
        if rn < spec.newton_tol:
            return _NewtonOutcome(s, True, it, residuals, admissibility_hit,
                                  eta)
        J = _jacobian(md, f, p, s, t, tau, eta=eta if eta_mode else None,
                      nexp=nexp)
        rhs = -R
        if kernel_cols is not None:
            nk = kernel_cols.shape[1]
            A = np.zeros((Nt + nk, Nt + nk))
            A[:Nt, :Nt] = J
            A[:Nt, Nt:] = kernel_cols
            A[Nt:, :Nt] = (md.weights[:, None] * kernel_cols).T
            b = np.concatenate([rhs, -(md.weights[:, None] * kernel_cols).T @ s])
            sol = np.linalg.solve(A, b)
            delta = sol[:Nt]
        elif eta_mode:
            A = np.zeros((Nt + 1, Nt + 1))
            A[:Nt, :Nt] = J
            ft = _homotopy_data(md, p, t, f)
            col = np.where(interior, -ft * s ** nexp, 0.0)
            A[:Nt, Nt] = col
            A[Nt, :Nt] = norm_row
            b = np.concatenate([rhs, [norm_target - norm_row @ s]])
            sol = np.linalg.solve(A, b)
            delta, deta = sol[:Nt], sol[Nt]
        else:
            delta = np.linalg.solve(J, rhs)
        if symmetrize is not None:
            delta = symmetrize(delta)
        # Armijo on the sup-norm residual with admissibility guards; a small
        # nonmonotone budget lets the quadratic full step through when the
        # monotone search would trap the iteration (Newton may overshoot
        # once before entering its quadratic basin)
        alpha = 1.0
        accepted = False
        fallback = None
        for _ in range(30):
            s_try = s + alpha * delta
            eta_try = eta + alpha * deta if eta_mode else eta
            if (p != 1.0 or eta_mode) and s_try.min() <= 0:
                alpha *= 0.5
                continue
            tau_try = md.ops.tau(s_try)
            ev_min = float(np.linalg.eigvalsh(tau_try).min())
            if ev_min <= floor:
                admissibility_hit = True
                alpha *= 0.5
                continue
            R_try, _ = full_residual(s_try, eta_try)
            rn_try = _supnorm(R_try, R_try[bm], interior)
            if fallback is None and rn_try <= 20.0 * rn:
                fallback = (s_try, eta_try)
            if rn_try <= (1.0 - 1e-4 * alpha) * rn:
                s, eta = s_try, eta_try
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if fallback is not None and nonmonotone_budget > 0:
                nonmonotone_budget -= 1
                s, eta = fallback
                continue
            return _NewtonOutcome(s, False, it + 1, residuals,
                                  admissibility_hit, eta)
    R, _ = full_residual(s, eta)
    rn = _supnorm(R, R[bm], interior)
    residuals.append(rn)
    return _NewtonOutcome(s, rn < spec.newton_tol, spec.max_newton,
                          residuals, admissibility_hit, eta)


# ---------------------------------------------------------------------------
# homotopy drivers
# ---------------------------------------------------------------------------

def _march(md, f, p, s0, spec, kernel_cols=None, symmetrize=None,
           eta_mode=False, norm_row=None, norm_target=None):
    trace = []
    s = s0.copy()
    eta = 1.0 if eta_mode else None
    t = 0.0
    step = spec.t_step
    out = _newton(md, f, p, s, 0.0, spec, kernel_cols, symmetrize,
                  eta_mode, norm_row, norm_target, eta)
    if not out.converged:
        raise NoConvergence("Newton failed at the homotopy start t = 0")
    s = out.s
    if out.eta is not None:
        eta = out.eta
    trace.append({"t": 0.0, "iterations": out.iters,
                  "residuals": out.residuals})
    admissibility_blame = False
    while t < 1.0:
        t_try = min(1.0, t + step)
        out = _newton(md, f, p, s, t_try, spec, kernel_cols, symmetrize,
                      eta_mode, norm_row, norm_target, eta)
        if out.converged:
            s = out.s
            if out.eta is not None:
                eta = out.eta
            t = t_try
            trace.append({"t": t, "iterations": out.iters,
                          "residuals": out.residuals})
            step = min(2.0 * step, 0.5, 1.0 - t if t < 1.0 else step)
            admissibility_blame = False
            continue
        admissibility_blame = out.admissibility_hit
        step *= 0.5
        if step < spec.t_floor:
            if admissibility_blame:
                raise AdmissibilityLost(
                    f"tau positivity floor hit at t = {t_try:.4f}")
            raise NoConvergence(f"homotopy stalled at t = {t_try:.4f}")
    return s, eta, trace


def _check_hypotheses(spec: SolveSpec):
    cap = spec.cap
    cond = None
    if spec.check_condition:
        cond = cap.condition_check()
        if not cond["holds"]:
            raise ConditionFailed(
                "the boundary-convexity condition fails "
                f"(margin {cond['margin']:.3e}); the a-priori estimates "
                "backing the continuation method require it")
    if 1.0 < spec.p < spec.md.grid.n + 1:
        if not cap.norm.symmetric:
            raise NotSymmetricNorm(
                "1 < p < n+1 requires a symmetric Wulff shape")
        if cap.w0 > 0:
            raise ConfigError("1 < p < n+1 requires w0 <= 0")
        if not is_even(spec.md, spec.f, tol=1e-8):
            raise ConfigError("1 < p < n+1 requires even data f")
    return cond


def solve_homotopy(spec: SolveSpec) -> SolveResult:
    """Continuation solve of det(tau[s]) = f s^{p-1} (p != n+1)."""
    if spec.p == spec.md.grid.n + 1:
        return solve_eigen(spec)
    cond = _check_hypotheses(spec)
    md, f = _working(spec)
    diagnostics = {"condition": cond, "formulation": spec.formulation}
    kernel_cols = None
    symmetrize = None
    if spec.p == 1.0:
        f, defect = compat_project(md, f)
        diagnostics["compatibility_defect_removed"] = defect.tolist()
        kernel_cols = md.kernel
    if spec.even_restricted or 1.0 < spec.p < spec.md.grid.n + 1:
        refl = spec.md.grid.reflect
        if refl is None:
            raise NotSymmetricNorm("even restriction requires a symmetric norm")
        def symmetrize(v):
            return 0.5 * (v + v[refl])
    if spec.initial is not None:
        s0 = np.asarray(spec.initial, float).copy()
        if spec.formulation == "stilde":
            s0 = s0 / spec.md.ell
    else:
        s0 = md.ell.copy() if spec.formulation == "shat" else np.ones(md.ntotal)
    s, _, trace = _march(md, f, spec.p, s0, spec, kernel_cols, symmetrize)
    if spec.formulation == "stilde":
        body = from_tilde(spec.md, s)
    else:
        body = CapBody(spec.md, s)
    if spec.p == 1.0:
        body = kernel_project(body)
        body.report = body._admissibility_report()
        base = spec.md
        diagnostics["kernel_gauge"] = [
            float(integrate(base, base.kernel[:, a] * body.s))
            for a in range(base.grid.n)]
    tau = body.tau()
    diagnostics["tau_min_eigenvalue"] = tau.eig_min
    diagnostics["final_residual"] = trace[-1]["residuals"][-1]
    if spec.p > spec.md.grid.n + 1:
        diagnostics["c0_bounds"] = c0_diagnostics(spec, body)
    return SolveResult(body=body, eta=None, converged=True, trace=trace,
                       diagnostics=diagnostics)


def solve_eigen(spec: SolveSpec) -> SolveResult:
    """p = n+1 eigenvalue problem det(tau~[s~]) = eta f~ s~^n, solved in the
    translated formulation under the normalization int s dmu_F = int l dmu_F;
    eta is refreshed from the integral ratio each Newton cycle."""
    n = spec.md.grid.n
    if spec.p != n + 1:
        raise ConfigError("solve_eigen requires p = n+1")
    cond = _check_hypotheses(spec)
    if spec.formulation == "stilde":
        tmd = tilde_metric(spec.md)
        f_t = spec.f
    else:
        tmd = tilde_metric(spec.md)
        f_t = spec.f * spec.md.ell ** n
    # normalization row: int u l dmu_F(base) = int l dmu_F(base)
    norm_row = spec.md.weights * spec.md.ell
    norm_target = float(norm_row @ np.ones(tmd.ntotal))
    symmetrize = None
    if spec.even_restricted:
        refl = spec.md.grid.reflect
        if refl is None:
            raise NotSymmetricNorm("even restriction requires a symmetric norm")
        def symmetrize(v):
            return 0.5 * (v + v[refl])
    if spec.initial is not None:
        u0 = np.asarray(spec.initial, float) / spec.md.ell
    else:
        u0 = np.ones(tmd.ntotal)
    u, eta, trace = _march(tmd, f_t, spec.p, u0, spec, None, symmetrize,
                           eta_mode=True, norm_row=norm_row,
                           norm_target=norm_target)
    body = from_tilde(spec.md, u)
    diagnostics = {"condition": cond, "formulation": "stilde",
                   "eta": float(eta),
                   "normalization": {"target": norm_target,
                                     "achieved": float(norm_row @ u)},
                   "tau_min_eigenvalue": body.tau().eig_min,
                   "final_residual": trace[-1]["residuals"][-1]}
    return SolveResult(body=body, eta=float(eta), converged=True, trace=trace,
                       diagnostics=diagnostics)


def c0_diagnostics(spec: SolveSpec, result_body: CapBody):
    """Two-sided height bound for p > n+1 (report only)."""
    n = spec.md.grid.n
    p = spec.p
    if p <= n + 1:
        return {"applicable": False}
    ell = spec.md.ell
    f = spec.f if spec.formulation == "shat" else \
        spec.f / spec.md.ell ** (p - 1)
    q = p - n - 1.0
    lower = ell.min() ** q / (f.max() * ell.max() ** (p - 1))
    upper = ell.max() ** q / (f.min() * ell.min() ** (p - 1))
    sq = result_body.s ** q
    ok = bool(sq.min() >= lower * (1 - 1e-9) and sq.max() <= upper * (1 + 1e-9))
    return {"applicable": True, "lower": float(lower), "upper": float(upper),
            "observed_min": float(sq.min()), "observed_max": float(sq.max()),
            "holds": ok,
            "slack": float(min(sq.min() - lower, upper - sq.max()))}
