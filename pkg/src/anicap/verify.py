"""Runnable invariant suite: one entry per module invariant, each returning
a pass/fail row with the measured slack.  Used by the `verify` subcommand
and by the test suite."""
from __future__ import annotations

import time

import numpy as np

from . import bodies, measures as ms, solver
from .domain import (assemble_metric, build_grid, covariant_gradient,
                     gauss_formula_residual, integrate)
from .errors import FormMismatch
from .norms import MinkowskiNorm, fd_oracle_jet, sphere_sample
from .wulff import build_cap


class SuiteContext:
    def __init__(self, norm, w0, n, resolution, seed=0, corrupt_q=False):
        self.norm = norm
        self.w0 = w0
        self.n = n
        self.resolution = resolution
        self.rng = np.random.default_rng(seed)
        self.cap = build_cap(norm, w0)
        self.grid = build_grid(self.cap, resolution)
        self.md = assemble_metric(self.cap, self.grid, corrupt_q=corrupt_q)
        coarse = (resolution // 2 if n == 1
                  else (resolution[0] // 2, resolution[1] // 2))
        self.grid_c = build_grid(self.cap, coarse)
        self.md_c = assemble_metric(self.cap, self.grid_c, corrupt_q=corrupt_q)
        self._u_cache = {}

    def chart_u(self, md=None):
        md = md or self.md
        key = id(md)
        if key not in self._u_cache:
            if md.grid.n == 1:
                th = md.grid.coords[0]
                self._u_cache[key] = (th - th[0]) / (th[-1] - th[0])
            else:
                self._u_cache[key] = md.grid.coords[0]
        return self._u_cache[key]

    def random_body(self, md=None, even=False, amp=0.04, translate=True):
        """Random admissible body: c*l + kernel translate + Robin-compatible
        radial bumps (even bumps use the doubled frequency on curves)."""
        md = md or self.md
        u = self.chart_u(md)
        for _ in range(20):
            c = self.rng.uniform(0.8, 1.3)
            s = c * md.ell
            if translate and not even:
                s = s + md.kernel @ self.rng.uniform(-0.15, 0.15, md.grid.n)
            for m in range(1, 4):
                freq = 2 * m if (even and md.grid.n == 1) else m
                s = s + md.ell * self.rng.uniform(-amp, amp) / (m * m) \
                    * np.cos(freq * np.pi * u)
            body = bodies.CapBody(md, s)
            if body.admissible:
                return body
            amp *= 0.5
        raise RuntimeError("could not draw an admissible random body")


def _row(name, passed, value, tol, detail=""):
    return {"name": name, "passed": bool(passed), "value": float(value),
            "tolerance": float(tol), "detail": detail}


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def check_norm_homogeneity(ctx):
    rng = ctx.rng
    y = rng.standard_normal((100, ctx.norm.dim))
    lam = rng.uniform(0.3, 3.0, 100)
    f = ctx.norm.value(y)
    err = np.abs(ctx.norm.value(y * lam[:, None]) - lam * f) / f
    d = np.abs(ctx.norm.dual_value(y * lam[:, None])
               - lam * ctx.norm.dual_value(y))
    err = max(err.max(), (d / np.maximum(ctx.norm.dual_value(y), 1e-30)).max())
    return _row("norm/homogeneity", err < 1e-12, err, 1e-12)


def check_norm_duality_roundtrip(ctx):
    xs = sphere_sample(ctx.norm.dim, 100, ctx.rng)
    z = ctx.norm.grad(xs)
    dj = ctx.norm.dual_jet(z)
    e1 = np.abs(dj.value - 1.0).max()
    e2 = np.abs(dj.grad - xs / ctx.norm.value(xs)[:, None]).max()
    ok = e1 < 1e-8 and e2 < 1e-6
    return _row("norm/duality_roundtrip", ok, max(e1, e2), 1e-6)


def check_norm_g_positive(ctx):
    y = ctx.rng.standard_normal((1000, ctx.norm.dim))
    ev = np.linalg.eigvalsh(ctx.norm.dual_jet(y).G).min()
    return _row("norm/G_positive_definite", ev > 0, ev, 0.0,
                "smallest eigenvalue of G over 1000 samples")


def check_norm_oracle(ctx, npts=2):
    worst_g = worst_q = 0.0
    for _ in range(npts):
        y = ctx.rng.standard_normal(ctx.norm.dim)
        y *= ctx.rng.uniform(0.5, 2.0) / np.linalg.norm(y)
        oj = fd_oracle_jet(ctx.norm, y)
        dj = ctx.norm.dual_jet(y)
        worst_g = max(worst_g, np.abs(oj.G - dj.G).max())
        worst_q = max(worst_q, np.abs(oj.Q - dj.Q).max())
    ok = worst_g < 1e-6 and worst_q < 1e-4
    return _row("norm/jet_vs_fd_oracle", ok, max(worst_g, worst_q), 1e-4,
                f"G defect {worst_g:.2e}, Q defect {worst_q:.2e}")


def check_norm_isotropic_collapse(ctx):
    iso = MinkowskiNorm("isotropic", ctx.norm.dim)
    y = ctx.rng.standard_normal((1000, ctx.norm.dim))
    xs = y / np.linalg.norm(y, axis=1, keepdims=True)
    dj = iso.dual_jet(y)
    err = max(np.abs(dj.G - np.eye(ctx.norm.dim)).max(),
              np.abs(dj.Q).max(),
              np.abs(iso.cahn_hoffman(xs) - xs).max())
    return _row("norm/isotropic_collapse", err < 1e-10, err, 1e-10)


def check_norm_symmetry_flags(ctx):
    xs = sphere_sample(ctx.norm.dim, 1000)
    v = ctx.norm.value(xs)
    err = 0.0
    if ctx.norm.even_horizontal:
        xf = xs.copy()
        xf[:, :-1] *= -1
        err = max(err, np.abs(ctx.norm.value(xf) - v).max())
    if ctx.norm.even_vertical:
        xf = xs.copy()
        xf[:, -1] *= -1
        err = max(err, np.abs(ctx.norm.value(xf) - v).max())
    return _row("norm/symmetry_flags", err < 1e-12, err, 1e-12,
                f"horizontal={ctx.norm.even_horizontal}, "
                f"vertical={ctx.norm.even_vertical}")


def check_wulff_ef(ctx):
    err = abs(ctx.cap.EF[-1] - 1.0)
    return _row("wulff/ef_inner_product", err < 1e-12, err, 1e-12)


def check_wulff_translation(ctx):
    xs = ctx.cap.interior_preimages(256, ctx.rng)
    z = ctx.norm.cahn_hoffman(xs)
    xi = z + ctx.w0 * ctx.cap.EF
    err = np.abs(ctx.norm.dual_value(xi - ctx.w0 * ctx.cap.EF) - 1.0).max()
    return _row("wulff/translation_consistency", err < 1e-10, err, 1e-10)


def check_wulff_ftilde(ctx):
    ys = ctx.rng.standard_normal((128, ctx.norm.dim))
    e1 = np.abs(ctx.cap.tnorm.value(ys) - ctx.norm.value(ys)
                - ctx.w0 * ys @ ctx.cap.EF).max()
    e2 = np.abs(ctx.cap.tnorm.hess(ys) - ctx.norm.hess(ys)).max()
    ok = e1 < 1e-12 and e2 < 1e-8
    return _row("wulff/ftilde_identity", ok, max(e1, e2), 1e-8)


def check_wulff_capillary_boundary(ctx):
    xb = ctx.cap.boundary_preimages(64 if ctx.n == 2 else 2)
    z = ctx.norm.cahn_hoffman(xb)
    err = np.abs(-z[:, -1] - ctx.w0).max()
    return _row("wulff/capillary_boundary_condition", err < 1e-8, err, 1e-8)


def check_wulff_curvatures_one(ctx):
    tau = ctx.md.ops.tau(ctx.md.ell)
    ev = np.linalg.eigvalsh(tau[ctx.grid.interior])
    err = np.abs(ev - 1.0).max()
    return _row("wulff/cap_principal_curvatures_one", err < 1e-4, err, 1e-4)


def check_wulff_condition(ctx):
    try:
        out = ctx.cap.condition_check(n_samples=360)
    except FormMismatch:
        return _row("wulff/condition_two_forms", False, np.inf, 0.0,
                    "forms disagree")
    return _row("wulff/condition_two_forms", True, out["margin"], 0.0,
                f"holds={out['holds']}")


def check_domain_metric(ctx):
    detg = np.linalg.det(ctx.md.g)
    wmin = ctx.md.weights.min()
    sym = np.abs(ctx.md.Qchart - ctx.md.Qchart.transpose(0, 2, 1, 3)).max() \
        + np.abs(ctx.md.Qchart - ctx.md.Qchart.transpose(0, 1, 3, 2)).max()
    ok = detg.min() > 0 and wmin > 0 and sym < 1e-12
    return _row("domain/metric_data", ok, min(detg.min(), wmin), 0.0,
                f"Q symmetry defect {sym:.2e}")


def check_domain_gauss(ctx):
    r_f = gauss_formula_residual(ctx.md)
    r_c = gauss_formula_residual(ctx.md_c)
    ok = r_f < 1e-10 or r_f < r_c / 2.0
    return _row("domain/gauss_formula_residual", ok, r_f, r_c / 2.0,
                f"coarse {r_c:.2e} -> fine {r_f:.2e}")


def check_domain_metric_compat(ctx):
    def compat(md):
        worst = 0.0
        g = md.grid
        for k in range(g.n):
            D = g.d1[k]
            for i in range(g.n):
                for j in range(g.n):
                    dk = D @ md.g[:, i, j]
                    pred = np.einsum("bm,bm->b", md.christoffel[:, :, k, i],
                                     md.g[:, :, j]) \
                        + np.einsum("bm,bm->b", md.christoffel[:, :, k, j],
                                    md.g[:, :, i])
                    worst = max(worst, np.abs((dk - pred)[g.interior]).max())
        return worst
    r_f, r_c = compat(ctx.md), compat(ctx.md_c)
    ok = r_f < 1e-10 or r_f < r_c / 1.8
    return _row("domain/metric_compatibility", ok, r_f, r_c / 1.8,
                f"coarse {r_c:.2e} -> fine {r_f:.2e}")


def check_domain_q_symmetrization(ctx):
    def defect(md):
        g = md.grid
        n = g.n
        if np.abs(md.Qchart).max() < 1e-12:
            return 0.0
        covQ = np.zeros((md.ntotal, n, n, n, n))  # [i, j, k, l]
        dQ = np.zeros_like(covQ)
        for i in range(n):
            D = g.d1[i]
            for j in range(n):
                for k in range(n):
                    for ll in range(n):
                        dQ[:, i, j, k, ll] = D @ md.Qchart[:, j, k, ll]
        G = md.christoffel
        covQ = dQ - np.einsum("bmij,bmkl->bijkl", G, md.Qchart) \
            - np.einsum("bmik,bjml->bijkl", G, md.Qchart) \
            - np.einsum("bmil,bjkm->bijkl", G, md.Qchart)
        anti = covQ - covQ.transpose(0, 2, 1, 3, 4)
        return float(np.abs(anti[g.interior]).max())
    r_f, r_c = defect(ctx.md), defect(ctx.md_c)
    ok = r_f < 1e-10 or r_f < r_c / 1.3
    return _row("domain/q_symmetrization", ok, r_f, max(r_c / 1.3, 1e-10),
                f"coarse {r_c:.2e} -> fine {r_f:.2e}")


def check_domain_quadrature(ctx):
    total = integrate(ctx.md, np.ones(ctx.md.ntotal))
    if ctx.norm.family == "isotropic":
        if ctx.n == 1:
            exact = ctx.cap.theta_plus - ctx.cap.theta_minus
            tol = 1e-6
        else:
            exact = 2 * np.pi * (1 + ctx.w0)
            tol = 1e-3 * abs(exact)
        err = abs(total - exact)
        return _row("domain/quadrature", err < tol, err, tol,
                    f"measure {total:.8f} vs exact {exact:.8f}")
    coarse = integrate(ctx.md_c, np.ones(ctx.md_c.ntotal))
    err = abs(total - coarse) / abs(total)
    return _row("domain/quadrature", err < 5e-3, err, 5e-3,
                "two-level agreement of the total measure")


def check_domain_robin_forms(ctx):
    body = ctx.random_body()
    out = ctx.md.ops.robin_forms(body.s)
    dev = out["mutual_deviation"] / max(1.0, np.abs(body.s).max())
    return _row("domain/robin_three_forms", dev < 1e-10, dev, 1e-10)


def check_domain_operator_order(ctx):
    e_c = _operator_error(ctx, ctx.md_c)
    e_f = _operator_error(ctx, ctx.md)
    ratio = ctx.grid_c.h[0] / ctx.grid.h[0]
    order = np.log2(e_c / e_f) / np.log2(ratio)
    ok = 1.7 <= order <= 2.3
    return _row("domain/operator_order", ok, order, 2.0,
                f"errors {e_c:.2e} -> {e_f:.2e}")


def _operator_error(ctx, md):
    """Hessian error on a manufactured field with an exact covariant
    Hessian: f = a G(z)(z, v) products are in the exact span, so use the
    squared kernel function whose tau is computable from exact gradients:
    tau[k^2] = 2 grad k (x) grad k + 2 k tau[k] - k^2 ... use instead the
    analytic identity via reconstruct: for f = k1^2, grad and Hessian
    follow from the exact basis gradients."""
    k = md.kernel[:, 0]
    f = k * k
    # exact: Hess(k^2) = 2 (grad k (x) grad k) + 2 k Hess(k);
    # Hess(k) = tau[k] - k I + Q(grad k)/2 = -k I + Q(grad k)/2 exactly
    gk = md.basis_grad_fr[:, 1, :]
    n = md.grid.n
    hess_k = -k[:, None, None] * np.eye(n)[None] \
        + 0.5 * np.einsum("bacr,br->bac", md.Qfr, gk)
    exact_hess = 2 * np.einsum("ba,bc->bac", gk, gk) \
        + 2 * k[:, None, None] * hess_k
    exact_tau = exact_hess + f[:, None, None] * np.eye(n)[None] \
        - 0.5 * np.einsum("bacr,br->bac",
                          md.Qfr, 2 * k[:, None] * gk)
    num = md.ops.tau(f)
    mask = md.grid.interior
    if md.grid.n == 2:
        mask = mask & (md.grid.coords[0] > 0.15)
    return float(np.abs((num - exact_tau)[mask]).max())


def check_body_roundtrip(ctx):
    body = ctx.random_body()
    X = body.reconstruct()
    h = ctx.grid.node_spacing()
    sup = bodies.support_of_points(ctx.md, X)
    err = np.abs(sup - body.s).max()
    tol = 10.0 * h * h + 1e-12  # discrete-hull sagitta with margin
    return _row("body/reconstruction_roundtrip", err < tol, err, tol)


def check_body_translation(ctx):
    body = ctx.random_body()
    X = body.reconstruct()
    a = ctx.rng.uniform(-0.2, 0.2, ctx.n)
    X2 = body.translated(a).reconstruct()
    shift = np.zeros(ctx.norm.dim)
    shift[:ctx.n] = a
    err = np.abs(X2 - (X + shift)).max()
    return _row("body/translation_equivariance", err < 1e-10, err, 1e-10)


def _op_roundoff(ctx):
    """Roundoff floor of the tau operators: eps times their 1/h^2 norm."""
    return 500 * np.finfo(float).eps / min(ctx.grid.h) ** 2


def check_body_scaling(ctx):
    body = ctx.random_body()
    c = 1.7
    t1 = ctx.md.ops.tau(c * body.s)
    t0 = ctx.md.ops.tau(body.s)
    e1 = np.abs(t1 - c * t0).max()
    d1 = np.linalg.det(t1)
    e2 = np.abs(d1 - c**ctx.n * np.linalg.det(t0)).max()
    tol = _op_roundoff(ctx) * max(1, np.abs(body.s).max())
    ok = e1 < tol and e2 < ctx.n * tol
    return _row("body/scaling", ok, max(e1, e2), tol)


def check_body_tau_linearity(ctx):
    v1 = ctx.random_body().s
    v2 = ctx.random_body().s
    a, b = 0.7, -0.4
    t = ctx.md.ops.tau(a * v1 + b * v2)
    err = np.abs(t - a * ctx.md.ops.tau(v1) - b * ctx.md.ops.tau(v2)).max()
    tol = _op_roundoff(ctx) * max(np.abs(v1).max(), np.abs(v2).max())
    return _row("body/tau_linearity", err < tol, err, tol)


def check_body_kernel_identity(ctx):
    md = ctx.md
    worst_tau = 0.0
    body = ctx.random_body()
    d0 = body.det_tau()
    worst_det = 0.0
    for a in range(ctx.n):
        worst_tau = max(worst_tau, np.abs(md.ops.tau(md.kernel[:, a])).max())
        d1 = bodies.CapBody(md, body.s + 0.3 * md.kernel[:, a],
                            check=False).det_tau()
        worst_det = max(worst_det, np.abs(d1 - d0).max())
    tol = max(1e-10, _op_roundoff(ctx))
    ok = worst_tau < tol and worst_det < tol
    return _row("body/kernel_identity", ok, max(worst_tau, worst_det), tol)


def check_body_psum_closure(ctx):
    ok = True
    worst = np.inf
    for p in (1.0, 2.0, 4.0):
        K = ctx.random_body()
        L = ctx.random_body()
        S = bodies.psum(0.6, K, 0.7, L, p)
        ok = ok and S.admissible
        worst = min(worst, S.tau().eig_min)
    return _row("body/psum_admissibility_closure", ok, worst, 0.0,
                "min tau eigenvalue over p in {1,2,4}")


def check_body_tilde(ctx):
    body = ctx.random_body()
    out = bodies.to_tilde(body)
    tmd = out["metric"]
    bm = ctx.grid.boundary
    gradt = covariant_gradient(tmd, out["stilde"])
    # g~-conormal at boundary nodes
    worst_n = 0.0
    worst_t = 0.0
    frames = tmd.ops._boundary_frames()
    for i, fr in enumerate(frames):
        muF = fr["mu_F"]
        gz = tmd.Gz[bm][i]
        worst_n = max(worst_n, abs(gradt[bm][i] @ gz @ muF))
    taut = out["tau"][bm]
    if ctx.n == 2:
        worst_t = np.abs(taut[:, 0, 1]).max()
    h = max(ctx.grid.h)
    ok = worst_n < 10 * h and worst_t < 10 * h and out["positivity_agrees"]
    return _row("body/tilde_boundary", ok, max(worst_n, worst_t), 10 * h,
                "grad~ normal and tau~_alpha-n at the boundary")


def check_body_even_symmetrize(ctx):
    if not ctx.norm.symmetric:
        return _row("body/even_symmetrize", True, 0.0, 0.0, "skipped: "
                    "norm not symmetric")
    md = ctx.md
    f = ctx.random_body().s
    g1 = bodies.even_symmetrize(f, md)
    g2 = bodies.even_symmetrize(g1, md)
    e1 = np.abs(g1 - g2).max()
    e2 = np.abs(g1 - g1[md.grid.reflect]).max()
    kodd = bodies.even_symmetrize(md.kernel[:, 0], md)
    e3 = np.abs(kodd).max()
    ok = e1 == 0.0 and e2 == 0.0 and e3 < 1e-12
    return _row("body/even_symmetrize", ok, max(e1, e2, e3), 1e-12)


def check_measures_vchain(ctx):
    cb = bodies.cap_body_of_cap(ctx.md)
    qs = [ms.quermassintegral(cb, k) for k in range(-1, ctx.n + 1)]
    spread = (max(qs) - min(qs)) / abs(max(qs))
    return _row("measures/v_chain_at_cap", spread < 1e-3, spread, 1e-3,
                f"values {[round(q, 8) for q in qs]}")


def check_measures_minkowski_formula(ctx, samples=100_000):
    body = ctx.random_body()
    lhs = integrate(ctx.md, body.s * body.det_tau())
    vol, se = ms.mc_volume(body, samples, seed=int(ctx.rng.integers(1 << 30)))
    err = abs(lhs - (ctx.n + 1) * vol)
    tol = max((ctx.n + 1) * 3 * se, 1e-3 * abs(lhs))
    return _row("measures/minkowski_formula", err < tol, err, tol,
                f"int s det tau = {lhs:.6f}, (n+1) Vol_MC = {(ctx.n+1)*vol:.6f}")


def check_measures_w_identity(ctx):
    K = bodies.CapBody(ctx.md, 1.2 * ctx.md.ell, check=False)
    worst = 0.0
    for (p, k) in ((1, 0), (2, 0), (2, 1))[: (3 if ctx.n == 2 else 2)]:
        W = ms.mixed_quermassintegral(K, K, p, k)
        Vk = ms.quermassintegral(K, k - 1)
        worst = max(worst, abs(W - (ctx.n + 1 - k) / p * Vk) / abs(W))
    L = ctx.random_body()
    W = ms.mixed_quermassintegral(K, L, 2, 0)
    fd = []
    for t in (1e-2, 1e-3):
        S = bodies.psum(1.0, K, t, L, 2)
        fd.append((ms.quermassintegral(S, -1) - ms.quermassintegral(K, -1)) / t)
    ext = fd[1] + (fd[1] - fd[0]) * (1e-3 / (1e-2 - 1e-3))
    fd_err = abs(ext - W) / abs(W)
    ok = worst < 1e-6 and fd_err < 1e-3
    return _row("measures/mixed_quermassintegral", ok, max(worst, fd_err),
                1e-3, f"identity {worst:.2e}, FD {fd_err:.2e}")


def check_measures_variational(ctx):
    body = ctx.random_body()
    u = ctx.chart_u()
    speed = ctx.md.ell * (1.0 + 0.3 * np.cos(2 * np.pi * u))
    worst = 0.0
    for k in range(-1, ctx.n):
        out = ms.variational_check(body, speed, k, dt=1e-3)
        worst = max(worst, out["relerr"])
    return _row("measures/variational_formula", worst < 1e-3, worst, 1e-3)


def check_measures_inequalities(ctx):
    even = ctx.norm.symmetric
    K = ctx.random_body(even=even)
    L = ctx.random_body(even=even)
    scale = ms.volume(K)
    slacks = {
        "minkowski_p2": ms.minkowski_inequality_slack(K, L, 2),
        "inradius_ratio": ms.volume_inradius_slack(K),
        "diskant": ms.capillary_v1_slack(K),
        "isoperimetric": ms.isoperimetric_slack(K),
    }
    if even:
        for p in (1, 2):
            for t in (0.25, 0.5):
                slacks[f"brunn_minkowski_p{p}_t{t}"] = \
                    ms.brunn_minkowski_slack(K, L, p, t)
    worst = min(slacks.values())
    return _row("measures/inequality_slacks", worst > -1e-3 * scale, worst,
                -1e-3 * scale, str({k: f"{v:.2e}" for k, v in slacks.items()}))


def check_measures_compat(ctx):
    if not ctx.norm.symmetric:
        body = ctx.random_body()
        d = ms.compatibility_defect(body)
        h2 = max(ctx.grid.h) ** 2
        return _row("measures/compatibility", d < 50 * h2, d, 50 * h2,
                    "non-symmetric norm: O(h^2) quadrature tolerance")
    body = ctx.random_body(even=True)
    d = ms.compatibility_defect(body)
    return _row("measures/compatibility", d < 1e-8, d, 1e-8)


def check_solver_trivial(ctx):
    spec = solver.SolveSpec(ctx.md, 1.0, np.ones(ctx.md.ntotal))
    res = solver.solve_homotopy(spec)
    body = bodies.kernel_project(res.body)
    err = np.abs(body.s - ctx.md.ell).max()
    return _row("solver/trivial_solve", err < 1e-6, err, 1e-6)


def check_solver_self_adjoint(ctx):
    body = ctx.random_body()
    L = solver.linearized_p1_operator(ctx.md, body.s)
    w = ctx.md.weights
    worst = 0.0
    for _ in range(5):
        v1 = ctx.random_body().s
        v2 = ctx.random_body().s
        lhs = w @ (v2 * (L @ v1))
        rhs = w @ (v1 * (L @ v2))
        nv = np.sqrt(w @ v1**2) * np.sqrt(w @ v2**2)
        worst = max(worst, abs(lhs - rhs) / nv)
    if ctx.n == 1 and (ctx.resolution if isinstance(ctx.resolution, int)
                       else 0) >= 800:
        return _row("solver/self_adjointness", worst < 1e-6, worst, 1e-6)
    # coarser grids: require the defect to vanish under refinement instead
    Lc = solver.linearized_p1_operator(ctx.md_c, ctx.random_body(ctx.md_c).s)
    wc = ctx.md_c.weights
    worst_c = 0.0
    for _ in range(3):
        v1 = ctx.random_body(ctx.md_c).s
        v2 = ctx.random_body(ctx.md_c).s
        nv = np.sqrt(wc @ v1**2) * np.sqrt(wc @ v2**2)
        worst_c = max(worst_c, abs(wc @ (v2 * (Lc @ v1))
                                   - wc @ (v1 * (Lc @ v2))) / nv)
    ok = worst < max(worst_c / 1.8, 1e-10)
    return _row("solver/self_adjointness", ok, worst, worst_c / 1.8,
                f"defect {worst_c:.2e} -> {worst:.2e} under refinement "
                "(the 1e-6 absolute form is checked at the acceptance "
                "resolution)")


def check_solver_jacobian(ctx):
    body = ctx.random_body()
    spec = solver.SolveSpec(ctx.md, 2.5, np.ones(ctx.md.ntotal),
                            check_condition=False)
    md, f = solver._working(spec)
    J = solver._jacobian(md, f, 2.5, body.s, 0.7,
                         ctx.md.ops.tau(body.s))
    v = ctx.random_body().s - ctx.md.ell
    eps = 1e-6

    def resvec(sv):
        r_int, _, _ = solver._residual_fields(md, f, 2.5, sv, 0.7)
        R = np.where(ctx.grid.interior, r_int, 0.0)
        R[ctx.grid.boundary] = md.ops.robin_matrix() @ sv
        return R
    fd = (resvec(body.s + eps * v) - resvec(body.s - eps * v)) / (2 * eps)
    err = np.abs(J @ v - fd).max() / max(1.0, np.abs(fd).max())
    return _row("solver/jacobian_directional", err < 5e-5, err, 5e-5)


def check_solver_quadratic_tail(ctx):
    u = ctx.chart_u()
    f = 1.0 + 0.4 * np.cos(np.pi * u) ** 2
    spec = solver.SolveSpec(ctx.md, ctx.n + 2.0, f, t_step=1.0)
    res = solver.solve_homotopy(spec)
    tail_ok = True
    detail = []
    for stage in res.trace:
        rs = stage["residuals"]
        for a, b in zip(rs, rs[1:]):
            if 1e-10 < a < 1e-3:
                tail_ok = tail_ok and (b <= max(100.0 * a * a, 1e-14))
                detail.append((a, b))
    return _row("solver/newton_quadratic_tail", tail_ok,
                float(len(detail)), 0.0, f"pairs checked: {len(detail)}")


ALL_CHECKS = [
    check_norm_homogeneity, check_norm_duality_roundtrip,
    check_norm_g_positive, check_norm_oracle, check_norm_isotropic_collapse,
    check_norm_symmetry_flags,
    check_wulff_ef, check_wulff_translation, check_wulff_ftilde,
    check_wulff_capillary_boundary, check_wulff_curvatures_one,
    check_wulff_condition,
    check_domain_metric, check_domain_gauss, check_domain_metric_compat,
    check_domain_q_symmetrization, check_domain_quadrature,
    check_domain_robin_forms, check_domain_operator_order,
    check_body_roundtrip, check_body_translation, check_body_scaling,
    check_body_tau_linearity, check_body_kernel_identity,
    check_body_psum_closure, check_body_tilde, check_body_even_symmetrize,
    check_measures_vchain, check_measures_minkowski_formula,
    check_measures_w_identity, check_measures_variational,
    check_measures_inequalities, check_measures_compat,
    check_solver_trivial, check_solver_self_adjoint, check_solver_jacobian,
    check_solver_quadratic_tail,
]


def run_suite(norm, w0, n, resolution, seed=0, corrupt_q=False, checks=None):
    """Run the invariant suite; returns (rows, all_passed)."""
    ctx = SuiteContext(norm, w0, n, resolution, seed, corrupt_q)
    rows = []
    for fn in (checks or ALL_CHECKS):
        t0 = time.time()
        try:
            row = fn(ctx)
        except Exception as exc:  # a failed invariant must not kill the run
            row = _row(fn.__name__, False, np.inf, 0.0,
                       f"{type(exc).__name__}: {exc}")
        row["seconds"] = round(time.time() - t0, 3)
        rows.append(row)
    return rows, all(r["passed"] for r in rows)
