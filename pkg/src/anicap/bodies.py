"""Capillary convex bodies as nodal capillary support functions.

A body is the nodal restriction of its capillary support function s to a cap
grid; the tau tensor, reconstruction through the inverse capillary Gauss
map, p-sums, the translated-norm reparametrization, kernel projection and
even symmetrization all act on that representation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import MetricData, assemble_metric, build_grid
from .errors import NotAdmissible, NotPositive, NotSymmetricNorm


@dataclass
class TauField:
    values: np.ndarray        # (Nt, n, n), orthonormal frame
    eig_min: float
    eig_max: float

    @property
    def positive(self):
        return self.eig_min > 0


class CapBody:
    """A capillary convex body given by nodal support-function values."""

    def __init__(self, md: MetricData, s, check=True):
        self.md = md
        self.grid = md.grid
        self.cap = md.grid.cap
        self.s = np.asarray(s, dtype=float).copy()
        if self.s.shape != (md.ntotal,):
            raise ValueError("support values must be nodal")
        self._tau = None
        self.report = self._admissibility_report() if check else None

    # -- admissibility -----------------------------------------------------
    def _admissibility_report(self):
        t = self.tau()
        rb = self.md.ops.robin_forms(self.s)
        scale = float(np.abs(self.s).max()) or 1.0
        h = max(self.grid.h)
        tol = max(1e-8, 20.0 * h * h) * scale
        return {
            "tau_min_eigenvalue": t.eig_min,
            "tau_max_eigenvalue": t.eig_max,
            "robin_residual_max": float(np.abs(rb["vertical"]).max()),
            "robin_tolerance": tol,
            "s_min": float(self.s.min()),
            "admissible": bool(t.eig_min > 0
                               and np.abs(rb["vertical"]).max() < tol),
        }

    @property
    def admissible(self):
        if self.report is None:
            self.report = self._admissibility_report()
        return self.report["admissible"]

    def require_admissible(self):
        if not self.admissible:
            raise NotAdmissible(f"body fails admissibility: {self.report}")

    # -- core fields ---------------------------------------------------------
    def tau(self) -> TauField:
        if self._tau is None:
            vals = self.md.ops.tau(self.s)
            ev = np.linalg.eigvalsh(vals)
            self._tau = TauField(vals, float(ev.min()), float(ev.max()))
        return self._tau

    def det_tau(self):
        return np.linalg.det(self.tau().values)

    def reconstruct(self):
        """Surface points X(xi) = grad s + s * T^{-1} xi (Nt, d)."""
        self.require_admissible()
        return self.md.ops.gradient(self.s) + self.s[:, None] * self.md.zhat

    def scaled(self, c):
        return CapBody(self.md, c * self.s, check=False)

    def translated(self, a):
        """Horizontal translation by sum a_alpha E_alpha."""
        a = np.atleast_1d(np.asarray(a, float))
        return CapBody(self.md, self.s + self.md.kernel @ a, check=False)


def cap_body_of_cap(md: MetricData, c=1.0) -> CapBody:
    """The body c * C_{w0} itself (support function c * l)."""
    return CapBody(md, c * md.ell, check=False)


def support_of_points(md: MetricData, pts):
    """Nodal capillary support function of a point cloud:
    s(xi) = max_X G(T^{-1}xi)(T^{-1}xi, X)."""
    v = np.einsum("bij,bj->bi", md.Gz, md.zhat)    # G(z) z per node (Nt, d)
    return (v @ np.asarray(pts, float).T).max(axis=1)


# ---------------------------------------------------------------------------
# p-sums
# ---------------------------------------------------------------------------

def psum(a, K: CapBody, b, L: CapBody, p=1.0) -> CapBody:
    """Capillary p-sum: support function (a s_K^p + b s_L^p)^{1/p}."""
    if a < 0 or b < 0 or (a == 0 and b == 0):
        raise ValueError("coefficients must be nonnegative, not both zero")
    if K.md is not L.md:
        raise ValueError("bodies must share a grid")
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return CapBody(K.md, a * K.s + b * L.s)
    if K.s.min() <= 0 or L.s.min() <= 0:
        raise NotPositive("p > 1 requires positive support functions")
    return CapBody(K.md, (a * K.s**p + b * L.s**p) ** (1.0 / p))


def pointcloud_psum_oracle(a, K_pts, b, L_pts, p=1.0, t_grid=33):
    """Sampled point set of a K +~_p b L (test oracle for psum).

    p = 1 bypasses the t-grid and emits pairwise sums a X1 + b X2; p > 1
    uses {a^{1/p}(1-t)^{1/q} X1 + b^{1/p} t^{1/q} X2} over a uniform t-grid,
    q the Hoelder conjugate.
    """
    K_pts = np.asarray(K_pts, float)
    L_pts = np.asarray(L_pts, float)
    if p == 1:
        out = (a * K_pts[:, None, :] + b * L_pts[None, :, :]).reshape(-1, K_pts.shape[1])
        return out
    q = p / (p - 1.0)
    ts = np.linspace(0.0, 1.0, int(t_grid))
    c1 = a ** (1.0 / p) * (1.0 - ts) ** (1.0 / q)
    c2 = b ** (1.0 / p) * ts ** (1.0 / q)
    pieces = [(c1[i] * K_pts[:, None, :] + c2[i] * L_pts[None, :, :]).reshape(-1, K_pts.shape[1])
              for i in range(len(ts))]
    return np.concatenate(pieces, axis=0)


def oracle_psum_support(md: MetricData, a, K_pts, b, L_pts, p=1.0, t_grid=33):
    """Nodal support function of the oracle point set, evaluated without
    materializing the pairwise combinations (max separates over the sum)."""
    hK = support_of_points(md, K_pts)
    hL = support_of_points(md, L_pts)
    if p == 1:
        return a * hK + b * hL
    q = p / (p - 1.0)
    ts = np.linspace(0.0, 1.0, int(t_grid))
    c1 = a ** (1.0 / p) * (1.0 - ts) ** (1.0 / q)
    c2 = b ** (1.0 / p) * ts ** (1.0 / q)
    return np.max(c1[:, None] * hK[None, :] + c2[:, None] * hL[None, :], axis=0)


# ---------------------------------------------------------------------------
# translated-norm reparametrization
# ---------------------------------------------------------------------------

_TILDE_CACHE = {}


def tilde_metric(md: MetricData) -> MetricData:
    """Metric data of the same grid for the free-boundary F~ problem."""
    key = id(md)
    if key not in _TILDE_CACHE:
        cap = md.grid.cap
        tcap = cap.tilde_cap()
        tgrid = build_grid(tcap, md.grid.shape if md.grid.n == 2
                           else md.grid.shape[0])
        assert np.abs(tgrid.xi - md.grid.xi).max() < 1e-9
        _TILDE_CACHE[key] = assemble_metric(tcap, tgrid)
    return _TILDE_CACHE[key]


def to_tilde(body: CapBody):
    """s~ = s / l with the tau~ field of the translated-norm problem.

    Positivity of tau~ must agree with positivity of tau.
    """
    tmd = tilde_metric(body.md)
    stilde = body.s / body.md.ell
    tau_t = tmd.ops.tau(stilde)
    ev = np.linalg.eigvalsh(tau_t)
    agree = (float(ev.min()) > 0) == (body.tau().eig_min > 0)
    return {
        "stilde": stilde,
        "metric": tmd,
        "tau": tau_t,
        "tau_min_eigenvalue": float(ev.min()),
        "positivity_agrees": bool(agree),
    }


def from_tilde(md: MetricData, stilde) -> CapBody:
    return CapBody(md, np.asarray(stilde, float) * md.ell)


# ---------------------------------------------------------------------------
# kernel projection / symmetrization
# ---------------------------------------------------------------------------

def kernel_component(md: MetricData, field):
    """Coefficients of the L^2(dmu_F) projection onto the horizontal
    kernel functions G(z)(z, E_alpha)."""
    k = md.kernel
    gram = (k * md.weights[:, None]).T @ k
    rhs = (k * md.weights[:, None]).T @ np.asarray(field, float)
    return np.linalg.solve(gram, rhs)


def kernel_project(body: CapBody) -> CapBody:
    """Remove the horizontal-translation component so the orthogonality
    integrals vanish; pointwise det tau is unchanged."""
    c = kernel_component(body.md, body.s)
    return CapBody(body.md, body.s - body.md.kernel @ c, check=False)


def even_symmetrize(body_or_field, md: MetricData | None = None):
    """Average a nodal field (or body) with its horizontal reflection."""
    if isinstance(body_or_field, CapBody):
        md = body_or_field.md
        field = body_or_field.s
        wrap = True
    else:
        if md is None:
            raise ValueError("pass the metric when symmetrizing a raw field")
        field = np.asarray(body_or_field, float)
        wrap = False
    perm = md.grid.reflect
    if perm is None:
        raise NotSymmetricNorm("even symmetrization requires a symmetric norm")
    out = 0.5 * (field + field[perm])
    return CapBody(md, out, check=False) if wrap else out


def is_even(md: MetricData, field, tol=1e-10):
    perm = md.grid.reflect
    if perm is None:
        raise NotSymmetricNorm("evenness is defined for symmetric norms only")
    f = np.asarray(field, float)
    return bool(np.abs(f - f[perm]).max() <= tol * max(1.0, np.abs(f).max()))
