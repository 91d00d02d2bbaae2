"""Quermassintegrals, capillary area measures, mixed quermassintegrals,
volumes, inradius and the inequality / variational-formula checks.

All bulk quantities are quadratures over the cap against dmu_F, with the
surface measure of the body pulled back through det tau.  The Monte-Carlo
volume is an independent containment-test oracle.
"""
from __future__ import annotations

from math import comb

import numpy as np
from scipy.optimize import linprog

from .bodies import CapBody, cap_body_of_cap, kernel_component, psum
from .domain import integrate
from .errors import NotAdmissible, NotPositive


def _sigma(tau_vals, k):
    """Elementary symmetric polynomial sigma_k of the tau eigenvalues."""
    n = tau_vals.shape[-1]
    if k == 0:
        return np.ones(tau_vals.shape[0])
    if n == 1:
        return tau_vals[:, 0, 0]
    if k == 1:
        return np.trace(tau_vals, axis1=1, axis2=2)
    return np.linalg.det(tau_vals)


def hk_curvature(body: CapBody, k):
    """Normalized anisotropic k-th mean curvature at the reconstructed
    points: sigma_{n-k}(tau) / (binom(n,k) sigma_n(tau)); H_0 = 1."""
    body.require_admissible()
    n = body.grid.n
    if not 0 <= k <= n:
        raise ValueError("k out of range")
    t = body.tau().values
    return _sigma(t, n - k) / (comb(n, k) * _sigma(t, n))


def det_tau(body: CapBody):
    return body.det_tau()


def quermassintegral(body: CapBody, k):
    """V_{k+1, w0}(body) for -1 <= k <= n (k = -1 is the enclosed volume).

    k = -1: divergence-form volume  (1/(n+1)) int s det(tau) dmu_F;
    otherwise the bulk curvature integral pulled back to the cap,
    (1/((n+1) binom(n,k))) int l sigma_{n-k}(tau) dmu_F.
    """
    body.require_admissible()
    md = body.md
    n = body.grid.n
    if not -1 <= k <= n:
        raise ValueError("k out of range")
    t = body.tau().values
    if k == -1:
        return integrate(md, body.s * _sigma(t, n)) / (n + 1)
    return integrate(md, md.ell * _sigma(t, n - k)) / ((n + 1) * comb(n, k))


def volume(body: CapBody):
    return quermassintegral(body, -1)


def area_measure_density(body: CapBody, p, k):
    """Density of dS_{p,k} with respect to dmu_F: s^{1-p} sigma_{n-k}(tau).

    For (p, k) = (1, 0) also returns the capillary area measure density in
    the Hausdorff normalization, F(nu) l det(tau), and the consistency
    ratio of the two normalizations (the support function of the cap over
    F(nu), i.e. l, times F(nu)).
    """
    body.require_admissible()
    n = body.grid.n
    if p != 1 and body.s.min() <= 0:
        raise NotPositive("p != 1 requires a positive support function")
    t = body.tau().values
    dens = body.s ** (1.0 - p) * _sigma(t, n - k)
    out = {"wrt_mu_F": dens}
    if p == 1 and k == 0:
        md = body.md
        hdens = md.Fnu * md.ell * _sigma(t, n)
        out["m_omega_wrt_hausdorff"] = hdens
        out["normalization_ratio"] = md.Fnu * md.ell
        out["consistent"] = bool(np.allclose(hdens, dens * md.Fnu * md.ell,
                                             rtol=1e-12, atol=1e-12))
    return out


def mixed_quermassintegral(K: CapBody, L: CapBody, p, k):
    """W_{p,k,w0}(K, L) by its integral representation."""
    K.require_admissible()
    L.require_admissible()
    n = K.grid.n
    if p != 1 and (K.s.min() <= 0 or L.s.min() <= 0):
        raise NotPositive("p != 1 requires bodies with positive support")
    t = K.tau().values
    integrand = L.s**p * K.s ** (1.0 - p) * _sigma(t, n - k)
    return (n - k + 1) / (p * (n + 1) * comb(n, k)) * integrate(K.md, integrand)


def bottom_area(body: CapBody):
    """(n)-volume of the bottom face enclosed by the reconstructed boundary."""
    X = body.reconstruct()
    bd = X[body.grid.boundary]
    if body.grid.n == 1:
        return float(abs(bd[1][0] - bd[0][0]))
    # boundary ring is ordered by phi; shoelace in the plane
    x, y = bd[:, 0], bd[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def anisotropic_area(body: CapBody):
    """|Sigma|_F = int det(tau) dmu_F."""
    body.require_admissible()
    return integrate(body.md, body.det_tau())


# ---------------------------------------------------------------------------
# inradius
# ---------------------------------------------------------------------------

def _translation_margin(body: CapBody, t):
    """max over horizontal y of min_nodes (s - t*l - sum y_a k_a)."""
    md = body.md
    gap = body.s - t * md.ell
    n = body.grid.n
    # maximize m subject to m + sum y_a k_a(i) <= gap_i
    c = np.zeros(n + 1)
    c[0] = -1.0
    A = np.concatenate([np.ones((md.ntotal, 1)), md.kernel], axis=1)
    res = linprog(c, A_ub=A, b_ub=gap, bounds=[(None, None)] * (n + 1),
                  method="highs")
    if not res.success:
        return -np.inf
    return -res.fun


def inradius(body: CapBody, tol=1e-6):
    """r(Sigma) = sup{t : t C_{w0} + y inside the body, y horizontal},
    by bisection over t with a translation search at each trial."""
    body.require_admissible()
    hi = float((body.s / body.md.ell).max()) + 1e-9
    lo = 0.0
    if _translation_margin(body, hi) >= 0:
        return hi
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if _translation_margin(body, mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Monte-Carlo volume oracle
# ---------------------------------------------------------------------------

def mc_volume(body: CapBody, samples=1_000_000, seed=0, chunk=65536):
    """Monte-Carlo volume by the support-function containment test
    G(T^{-1}xi)(T^{-1}xi, y) <= s(xi) for all nodes, y_{n+1} >= 0.

    Returns (volume, standard_error).
    """
    body.require_admissible()
    md = body.md
    X = body.reconstruct()
    lo = X.min(axis=0).copy()
    hi = X.max(axis=0).copy()
    lo[-1] = 0.0
    margin = 1e-9 * (np.abs(hi - lo).max() + 1)
    lo[:-1] -= margin
    hi += margin
    box = float(np.prod(hi - lo))
    v = np.einsum("bij,bj->bi", md.Gz, md.zhat)   # rows G(z) z
    rng = np.random.default_rng(seed)
    inside = 0
    done = 0
    nblock = 1024
    while done < samples:
        m = min(chunk, samples - done)
        y = rng.uniform(lo, hi, size=(m, md.grid.cap.dim))
        act = np.arange(m)
        # node-blocked support test with early pruning
        for j0 in range(0, md.ntotal, nblock):
            vals = y[act] @ v[j0:j0 + nblock].T
            good = np.all(vals <= body.s[None, j0:j0 + nblock] + 1e-12, axis=1)
            act = act[good]
            if len(act) == 0:
                break
        inside += len(act)
        done += m
    p = inside / samples
    vol = box * p
    se = box * np.sqrt(max(p * (1 - p), 1e-30) / samples)
    return vol, se


# ---------------------------------------------------------------------------
# variational formula
# ---------------------------------------------------------------------------

def variational_check(body: CapBody, speed, k, dt=1e-3):
    """Two-sided finite difference of V_{k+1} under s -> s + t*speed versus
    the first-variation integral (n-k)/(n+1) int speed H^F_{k+1} dmu_F(Sigma).

    Returns dict with lhs (FD derivative), rhs (integral), relerr.
    """
    body.require_admissible()
    md = body.md
    n = body.grid.n
    speed = np.asarray(speed, float)
    plus = CapBody(md, body.s + dt * speed, check=False)
    minus = CapBody(md, body.s - dt * speed, check=False)
    for b in (plus, minus):
        if b.tau().eig_min <= 0:
            raise NotAdmissible("evolution speed too large: tau lost positivity")
        b.report = {"admissible": True, "tau_min_eigenvalue": b.tau().eig_min}
    lhs = (quermassintegral(plus, k) - quermassintegral(minus, k)) / (2 * dt)
    t = body.tau().values
    if k == n:
        rhs = 0.0
    else:
        rhs = (n - k) / ((n + 1) * comb(n, k + 1)) \
            * integrate(md, speed * _sigma(t, n - k - 1))
    scale = max(abs(lhs), abs(rhs), 1e-14)
    return {"lhs": lhs, "rhs": rhs, "relerr": abs(lhs - rhs) / scale}


# ---------------------------------------------------------------------------
# inequality slacks
# ---------------------------------------------------------------------------

def minkowski_inequality_slack(K: CapBody, L: CapBody, p):
    """Slack of (1/(n+1)) int s_L^p s_K^{1-p} sigma_n(tau_K) dmu_F
    >= Vol(K)^{(n+1-p)/(n+1)} Vol(L)^{p/(n+1)}."""
    n = K.grid.n
    t = K.tau().values
    lhs = integrate(K.md, L.s**p * K.s ** (1.0 - p) * _sigma(t, n)) / (n + 1)
    rhs = volume(K) ** ((n + 1 - p) / (n + 1)) * volume(L) ** (p / (n + 1))
    return lhs - rhs


def brunn_minkowski_slack(K: CapBody, L: CapBody, p, t):
    """Slack of Vol((1-t) K +_p t L)^{p/(n+1)} >=
    (1-t) Vol(K)^{p/(n+1)} + t Vol(L)^{p/(n+1)}."""
    n = K.grid.n
    S = psum(1 - t, K, t, L, p)
    lhs = volume(S) ** (p / (n + 1))
    rhs = (1 - t) * volume(K) ** (p / (n + 1)) + t * volume(L) ** (p / (n + 1))
    return lhs - rhs


def volume_inradius_slack(body: CapBody):
    """Slack of r(Sigma) <= Vol(Sigma)/V_{1,w0}(Sigma).

    Mixed-volume monotonicity gives r V(Sigma..Sigma, C) =
    V(Sigma..Sigma, r C + y) <= Vol(Sigma) whenever r C + y fits inside the
    body, with equality exactly at scaled caps.
    """
    return volume(body) / quermassintegral(body, 0) - inradius(body)


def capillary_v1_slack(body: CapBody):
    """Slack of V_1^{(n+1)/n} - Vol(Sigma) Vol(C)^{1/n}
    >= [V_1^{1/n} - r Vol(C)^{1/n}]^{n+1}."""
    n = body.grid.n
    v1 = quermassintegral(body, 0)
    vol = volume(body)
    cap_body = cap_body_of_cap(body.md)
    volc = volume(cap_body)
    r = inradius(body)
    lhs = v1 ** ((n + 1) / n) - vol * volc ** (1.0 / n)
    rhs = (v1 ** (1.0 / n) - r * volc ** (1.0 / n)) ** (n + 1)
    return lhs - rhs


def isoperimetric_slack(body: CapBody):
    """Slack of |Sigma_hat|^{n/(n+1)} A_2 <= |Sigma|_F + w0 |bottom face|,
    A_2 evaluated on the cap."""
    md = body.md
    w0 = body.cap.w0
    cb = cap_body_of_cap(md)
    a2 = (anisotropic_area(cb) + w0 * bottom_area(cb)) \
        / volume(cb) ** (body.grid.n / (body.grid.n + 1))
    lhs = volume(body) ** (body.grid.n / (body.grid.n + 1)) * a2
    rhs = anisotropic_area(body) + w0 * bottom_area(body)
    return rhs - lhs


def compatibility_defect(body: CapBody):
    """max_alpha |int G(z)(z, E_alpha) det(tau) dmu_F| (exact zero in the
    continuum), normalized by int det(tau) dmu_F."""
    md = body.md
    dt = body.det_tau()
    vals = np.array([integrate(md, md.kernel[:, a] * dt)
                     for a in range(body.grid.n)])
    return float(np.abs(vals).max() / abs(integrate(md, dt)))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def measure_report(body: CapBody, mc_samples=200_000, seed=0):
    """Full MeasureReport for one body."""
    body.require_admissible()
    n = body.grid.n
    qs = {f"V_{k + 1}": quermassintegral(body, k) for k in range(-1, n + 1)}
    vol_div = qs["V_0"]
    vol_mc, se = mc_volume(body, mc_samples, seed)
    dens = area_measure_density(body, 1, 0)
    rep = {
        "quermassintegrals": qs,
        "volume_divergence_form": vol_div,
        "volume_monte_carlo": vol_mc,
        "volume_mc_standard_error": se,
        "volumes_agree": bool(abs(vol_div - vol_mc)
                              <= max(3 * se, 1e-3 * abs(vol_div))),
        "inradius": inradius(body),
        "anisotropic_area": anisotropic_area(body),
        "bottom_face_area": bottom_area(body),
        "compatibility_defect": compatibility_defect(body),
        "inequality_slacks": {
            "volume_over_v1_vs_inradius": volume_inradius_slack(body),
            "capillary_v1": capillary_v1_slack(body),
            "isoperimetric": isoperimetric_slack(body),
        },
        "density_summary": {k: {"min": float(np.min(v)), "max": float(np.max(v))}
                            for k, v in dens.items() if isinstance(v, np.ndarray)},
    }
    return rep


def density_fields(body: CapBody, p=1, k=0):
    """Nodal density fields for CSV export."""
    dens = area_measure_density(body, p, k)
    return {key: val for key, val in dens.items() if isinstance(val, np.ndarray)}
