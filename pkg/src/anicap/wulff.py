"""Wulff shapes, the capillary Wulff cap, boundary frames and the
boundary-convexity condition.

The cap C_{w0} is the translate by w0*E^F of the part of the unit Wulff
shape above the level x_{n+1} = -w0.  Its spherical preimage
A = {x in S^n : <DF(x), E_{n+1}> >= -w0} is charted from the point of A
maximizing <DF(x), E_{n+1}>: by an angle theta for curves, by polar
coordinates (rho, phi) with rho = 1 on the level set for surfaces.  All
chart derivatives of the sphere map (up to second order, including the
implicit derivatives of the boundary angle alpha_max(phi)) are computed in
closed form so that the intrinsic geometry downstream is exact.
"""
from __future__ import annotations

import numpy as np

from .errors import (ChartFailure, FormMismatch, InvalidContactAngle,
                     NotBoundaryPoint, PointOffCap)
from .norms import MinkowskiNorm, TranslatedNorm, tangent_basis


def e_f_vector(norm: MinkowskiNorm, w0: float):
    """The translation direction: parallel to Psi(+-E_{n+1}) with unit
    inner product against E_{n+1}."""
    d = norm.dim
    Eup = np.zeros(d)
    Eup[-1] = 1.0
    lo, hi = -norm.value(Eup)[0], norm.value(-Eup)[0]
    if not (lo < w0 < hi):
        raise InvalidContactAngle(
            f"omega_0={w0} outside admissible interval ({lo:.6g}, {hi:.6g})")
    if w0 == 0.0:
        return Eup
    if w0 < 0:
        v = norm.cahn_hoffman(Eup)[0] / norm.value(Eup)[0]
    else:
        v = -norm.cahn_hoffman(-Eup)[0] / norm.value(-Eup)[0]
    assert abs(v[-1] - 1.0) < 1e-12
    return v


class WulffShape:
    """The level set {F^0(y - center) = r0}, parametrized by Psi."""

    def __init__(self, norm: MinkowskiNorm, center=None, r0: float = 1.0):
        self.norm = norm
        self.center = np.zeros(norm.dim) if center is None else np.asarray(center, float)
        if r0 <= 0:
            raise ValueError("r0 must be positive")
        self.r0 = float(r0)

    def point(self, x):
        """Surface point with outward normal x."""
        return self.center + self.r0 * self.norm.cahn_hoffman(x)

    def membership_residual(self, y):
        y = np.atleast_2d(np.asarray(y, float))
        return self.norm.dual_value(y - self.center) - self.r0


class CapillaryCap:
    """The capillary Wulff cap C_{w0} with its chart and boundary data."""

    def __init__(self, norm: MinkowskiNorm, w0: float):
        self.norm = norm
        self.w0 = float(w0)
        self.dim = norm.dim
        self.n = norm.dim - 1
        self.EF = e_f_vector(norm, w0)
        self.tnorm = TranslatedNorm(norm, w0 * self.EF)
        self._setup_pole()
        if self.n == 1:
            self.theta_minus = -self._cross_angle(-self.tpole[0])
            self.theta_plus = self._cross_angle(self.tpole[0])
        self._alpha_cache = {}

    # -- spherical preimage ------------------------------------------------
    def psi_vertical(self, x):
        """<DF(x), E_{n+1}>; the cap preimage is {psi >= -w0}."""
        return self.norm.value_and_grad(x)[1][:, -1]

    def _setup_pole(self):
        d = self.dim
        Eup = np.zeros(d)
        Eup[-1] = 1.0
        if self.norm.symmetric:
            # E_{n+1} is a critical point of psi by parity; use it exactly
            self.pole = Eup
        else:
            from .norms import sphere_sample
            xs = sphere_sample(d, 8192)
            x = xs[int(np.argmax(self.psi_vertical(xs)))]
            step = 0.2
            val = self.psi_vertical(x[None])[0]
            for _ in range(300):
                H = self.norm.hess(x[None])[0]
                g = H[-1] - (H[-1] @ x) * x  # spherical gradient of psi
                if np.linalg.norm(g) < 1e-13:
                    break
                moved = False
                for _ in range(40):
                    xt = x + step * g
                    xt /= np.linalg.norm(xt)
                    vt = self.psi_vertical(xt[None])[0]
                    if vt > val:
                        x, val, moved = xt, vt, True
                        step *= 1.5
                        break
                    step *= 0.5
                if not moved:
                    break
            self.pole = x
        if self.psi_vertical(self.pole[None])[0] <= -self.w0:
            raise ChartFailure("chart pole is not inside the spherical preimage")
        if self.norm.symmetric:
            self.tpole = np.eye(d)[: d - 1]
        else:
            self.tpole = tangent_basis(self.pole)[0]

    def _psi_along(self, alphas, dvec):
        x = np.cos(alphas)[:, None] * self.pole + np.sin(alphas)[:, None] * dvec
        return self.psi_vertical(x)

    def _cross_angle(self, dvec, n_scan=256):
        """First angle from the pole along direction dvec where psi = -w0.

        Rejects meridians on which psi is not monotone up to the crossing
        (the star-shapedness requirement of the chart).
        """
        dvec = np.atleast_2d(dvec)
        out = np.zeros(len(dvec))
        grid = np.linspace(0.0, np.pi, n_scan)
        for b in range(len(dvec)):
            vals = self._psi_along(grid, dvec[b]) + self.w0
            idx = np.where(vals <= 0.0)[0]
            if len(idx) == 0:
                raise ChartFailure("meridian never reaches the boundary level set")
            k = idx[0]
            if np.any(np.diff(vals[:k]) > 1e-12):
                raise ChartFailure("psi not monotone along meridian (chart not star-shaped)")
            lo, hi = grid[k - 1], grid[k]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if self._psi_along(np.array([mid]), dvec[b])[0] + self.w0 > 0:
                    lo = mid
                else:
                    hi = mid
            out[b] = 0.5 * (lo + hi)
        return out if len(out) > 1 else float(out[0])

    # -- n=2 polar chart machinery ------------------------------------------
    def _dvec(self, phi):
        phi = np.atleast_1d(phi)
        return (np.cos(phi)[:, None] * self.tpole[0]
                + np.sin(phi)[:, None] * self.tpole[1])

    def alpha_max(self, phi):
        """Boundary polar angle per azimuth, with first/second derivatives.

        Returns (alpha, dalpha, ddalpha); derivatives by implicit
        differentiation of <DF(x(alpha, phi)), E_{n+1}> = -w0.
        """
        phi = np.atleast_1d(np.asarray(phi, float))
        key = (round(float(phi[0]), 14), len(phi), round(float(phi[-1]), 14))
        if key in self._alpha_cache:
            return self._alpha_cache[key]
        dv = self._dvec(phi)
        dpv = (-np.sin(phi)[:, None] * self.tpole[0]
               + np.cos(phi)[:, None] * self.tpole[1])
        al = np.array([self._cross_angle(dv[b]) for b in range(len(phi))])
        ca, sa = np.cos(al)[:, None], np.sin(al)[:, None]
        x = ca * self.pole + sa * dv
        x_a = -sa * self.pole + ca * dv
        x_p = sa * dpv
        x_aa = -x
        x_ap = ca * dpv
        x_pp = -sa * dv
        j = self.norm.jet(x)
        Ed = np.zeros(self.dim)
        Ed[-1] = 1.0
        HE = np.einsum("bij,j->bi", j.hess, Ed)        # D2F(x) E_d
        TE = np.einsum("bijk,k->bij", j.third, Ed)     # D3F(x)(.,.,E_d)
        psi_a = np.einsum("bi,bi->b", HE, x_a)
        psi_p = np.einsum("bi,bi->b", HE, x_p)
        psi_aa = np.einsum("bij,bi,bj->b", TE, x_a, x_a) + np.einsum("bi,bi->b", HE, x_aa)
        psi_ap = np.einsum("bij,bi,bj->b", TE, x_a, x_p) + np.einsum("bi,bi->b", HE, x_ap)
        psi_pp = np.einsum("bij,bi,bj->b", TE, x_p, x_p) + np.einsum("bi,bi->b", HE, x_pp)
        da = -psi_p / psi_a
        dda = -(psi_aa * da**2 + 2 * psi_ap * da + psi_pp) / psi_a
        res = (al, da, dda)
        self._alpha_cache[key] = res
        return res

    def sphere_chart(self, *coords):
        """Sphere map of the chart with first/second chart derivatives.

        n=1: coords = (theta,), theta in [theta_minus, theta_plus].
        n=2: coords = (rho, phi), rho in (0, 1], rho = 1 on the boundary.
        Returns dict with x (B,d), dx (B,n,d), ddx (B,n,n,d).
        """
        if self.n == 1:
            (theta,) = coords
            theta = np.atleast_1d(np.asarray(theta, float))
            t = self.tpole[0]
            ct, st = np.cos(theta)[:, None], np.sin(theta)[:, None]
            x = ct * self.pole + st * t
            dx = (-st * self.pole + ct * t)[:, None, :]
            ddx = (-x)[:, None, None, :]
            return {"x": x, "dx": dx, "ddx": ddx}
        rho, phi = coords
        rho = np.atleast_1d(np.asarray(rho, float))
        phi = np.atleast_1d(np.asarray(phi, float))
        al, da, dda = self.alpha_max(phi)
        a = rho * al
        a_r = al
        a_p = rho * da
        a_rp = da
        a_pp = rho * dda
        dv = self._dvec(phi)
        dpv = (-np.sin(phi)[:, None] * self.tpole[0]
               + np.cos(phi)[:, None] * self.tpole[1])
        ca, sa = np.cos(a)[:, None], np.sin(a)[:, None]
        x = ca * self.pole + sa * dv
        x_a = -sa * self.pole + ca * dv          # d/d alpha
        x_f = sa * dpv                            # d/d phi at fixed alpha
        x_aa = -x
        x_af = ca * dpv
        x_ff = -sa * dv
        B, d = x.shape
        dx = np.zeros((B, 2, d))
        dx[:, 0] = a_r[:, None] * x_a
        dx[:, 1] = a_p[:, None] * x_a + x_f
        ddx = np.zeros((B, 2, 2, d))
        ddx[:, 0, 0] = (a_r**2)[:, None] * x_aa
        cross = (a_rp[:, None] * x_a + (a_r * a_p)[:, None] * x_aa
                 + a_r[:, None] * x_af)
        ddx[:, 0, 1] = ddx[:, 1, 0] = cross
        ddx[:, 1, 1] = (a_pp[:, None] * x_a + (a_p**2)[:, None] * x_aa
                        + 2 * a_p[:, None] * x_af + x_ff)
        return {"x": x, "dx": dx, "ddx": ddx}

    def embed(self, sphere_data):
        """Cap embedding xi = Psi(x) + w0 E^F with chart derivatives."""
        x, dx, ddx = sphere_data["x"], sphere_data["dx"], sphere_data["ddx"]
        j = self.norm.jet(x)
        xi = j.grad + self.w0 * self.EF
        dxi = np.einsum("bij,baj->bai", j.hess, dx)
        ddxi = np.einsum("bijk,baj,bck->baci", j.third, dx, dx) \
            + np.einsum("bij,bacj->baci", j.hess, ddx)
        return {"x": x, "xi": xi, "dxi": dxi, "ddxi": ddxi}

    # -- pointwise geometric quantities --------------------------------------
    def ell_at_x(self, x):
        """l = 1 + w0 G(z)(E^F, z) = F~(x)/F(x) at sphere preimages x."""
        x = np.atleast_2d(np.asarray(x, float))
        return 1.0 + self.w0 * (x @ self.EF) / self.norm.value(x)

    def kernel_basis_at_x(self, x):
        """G(z)(z, E_beta) = x_beta / F(x): columns beta = 1..n+1, (B, d)."""
        x = np.atleast_2d(np.asarray(x, float))
        return x / self.norm.value(x)[:, None]

    def normal_of_point(self, xi, tol_scale=1e-8):
        """Sphere preimage x of a cap point; raises PointOffCap off the cap."""
        xi = np.atleast_2d(np.asarray(xi, float))
        zhat = xi - self.w0 * self.EF
        dj = self.norm.dual_jet(zhat)
        res = np.abs(dj.value - 1.0)
        tol = tol_scale * (1.0 + np.linalg.norm(xi, axis=1))
        if np.any(res > tol):
            raise PointOffCap(f"membership residual {res.max():.3e} exceeds tolerance")
        x = dj.grad / np.linalg.norm(dj.grad, axis=1, keepdims=True)
        return x

    def ell(self, xi):
        """The capillary support function of the cap itself at points xi."""
        xi = np.asarray(xi, float)
        single = xi.ndim == 1
        x = self.normal_of_point(xi)
        out = self.ell_at_x(x)
        return float(out[0]) if single else out

    def boundary_frame(self, xi, tol=1e-8):
        """Frames {nu, mu, mu_F, e_n} at a boundary point."""
        xi = np.asarray(xi, float)
        if abs(xi[-1]) > tol * (1 + np.linalg.norm(xi)):
            raise NotBoundaryPoint(f"xi_{self.dim} = {xi[-1]:.3e} is not on the plane")
        x = self.normal_of_point(xi[None])[0]
        return self.frames_at_boundary_x(x)

    def frames_at_boundary_x(self, x):
        nu = x
        H = self.norm.hess(x[None])[0]
        T = tangent_basis(x[None])[0]           # basis of T_x S^n = T_z W
        if self.n == 1:
            mu = T[0]
            if mu[-1] > 0:
                mu = -mu
            tb = np.zeros((0, self.dim))
        else:
            # boundary tangent: the horizontal direction of T_z W
            A = T.copy()
            # solve for combination with zero vertical component
            c = np.array([A[1, -1], -A[0, -1]])
            tb_vec = c[0] * A[0] + c[1] * A[1]
            tb_vec /= np.linalg.norm(tb_vec)
            tb = tb_vec[None, :]
            mu = A[0] - (A[0] @ tb_vec) * tb_vec
            nrm = np.linalg.norm(mu)
            if nrm < 1e-13:
                mu = A[1] - (A[1] @ tb_vec) * tb_vec
                nrm = np.linalg.norm(mu)
            mu /= nrm
            if mu[-1] > 0:
                mu = -mu
        muF = H @ mu
        F = self.norm.value(x[None])[0]
        e_n = np.sqrt(F) * muF / np.sqrt(muF @ mu)
        return {"nu": nu, "mu": mu, "mu_F": muF, "e_n": e_n, "boundary_tangents": tb}

    # -- boundary samples -----------------------------------------------------
    def boundary_preimages(self, m):
        """m sphere preimages of boundary points."""
        if self.n == 1:
            return np.stack([
                np.cos(self.theta_minus) * self.pole + np.sin(self.theta_minus) * self.tpole[0],
                np.cos(self.theta_plus) * self.pole + np.sin(self.theta_plus) * self.tpole[0],
            ])
        phi = np.arange(m) * (2 * np.pi / m)
        al, _, _ = self.alpha_max(phi)
        return (np.cos(al)[:, None] * self.pole
                + np.sin(al)[:, None] * self._dvec(phi))

    def interior_preimages(self, m, rng=None):
        """m sphere preimages of interior points (quasi-uniform in chart)."""
        rng = rng or np.random.default_rng(0)
        if self.n == 1:
            t = rng.uniform(0.02, 0.98, m)
            th = self.theta_minus + t * (self.theta_plus - self.theta_minus)
            return self.sphere_chart(th)["x"]
        rho = np.sqrt(rng.uniform(0.001, 0.96, m))
        phi = rng.uniform(0, 2 * np.pi, m)
        return self.sphere_chart(rho, phi)["x"]

    # -- the boundary-convexity condition ------------------------------------
    def condition_check(self, n_samples=720, tol=1e-10):
        """Both forms of the strict boundary-convexity inequality.

        Form A is the contact-constant inequality against
        Q(z)(Y,Y,mu_F) <E_{n+1},mu> F(nu) / G(z)(Y,Y) over boundary points z
        and slice-tangent directions Y; form B is the sign of the translated
        cubic tensor Q~ contracted on the boundary frame.  Returns a dict
        with `holds`, worst-case margins, and the per-form data; raises
        FormMismatch if the two verdicts disagree at any sampled point.
        """
        m = 2 if self.n == 1 else n_samples
        xs = self.boundary_preimages(m)
        margins_a = np.zeros(len(xs))
        qtilde = np.zeros(len(xs))
        hhat = np.zeros(len(xs))
        for b, x in enumerate(xs):
            fr = self.frames_at_boundary_x(x)
            z = self.norm.cahn_hoffman(x[None])[0]
            dj = self.norm.dual_jet_at_normal(x[None])
            G, Q = dj.G[0], dj.Q[0]
            if self.n == 1:
                Y = fr["mu"]  # the only tangent direction of T_z W
            else:
                Y = fr["boundary_tangents"][0]
            F = self.norm.value(x[None])[0]
            qyym = np.einsum("i,j,k,ijk->", Y, Y, fr["mu_F"], Q)
            gyy = Y @ G @ Y
            rhs = qyym * (fr["mu"][-1]) * F / gyy
            margins_a[b] = rhs - self.w0
            # form B: translated tensor on the g~-orthonormal frame
            djt = self.tnorm.dual_jet_at_normal(x[None])
            Gt, Qt = djt.G[0], djt.Q[0]
            en = fr["e_n"]
            Ft = self.tnorm.value(x[None])[0]
            muF = fr["mu_F"]
            ent = np.sqrt(Ft) * muF / np.sqrt(muF @ fr["mu"])
            if self.n == 1:
                ea = ent
            else:
                ea = Y / np.sqrt(Y @ Gt @ Y)
            qtilde[b] = np.einsum("i,j,k,ijk->", ea, ea, ent, Qt)
            hhat[b] = -0.5 * qtilde[b]
        margins_b = -qtilde
        verdict_a = margins_a > 0
        verdict_b = margins_b > 0
        definite = (np.abs(margins_a) > tol) & (np.abs(margins_b) > tol)
        if np.any(verdict_a[definite] != verdict_b[definite]):
            raise FormMismatch("contact-constant and translated-tensor forms disagree")
        holds = bool(np.all(verdict_a) and np.all(verdict_b))
        return {
            "holds": holds,
            "margin": float(min(margins_a.min(), margins_b.min())),
            "margin_contact_form": float(margins_a.min()),
            "margin_tensor_form": float(margins_b.min()),
            "boundary_second_fundamental_min": float(hhat.min()),
        }

    def tilde_cap(self):
        """The same cap viewed as the free-boundary (w = 0) cap of F~.

        C_{w0} = W~ intersected with the upper half space, so the
        s~-reparametrized problem is the w=0 problem for the translated
        norm.  The chart (pole, meridian crossings) is shared, which makes
        the node sets of both formulations identical.
        """
        tc = object.__new__(CapillaryCap)
        tc.norm = self.tnorm
        tc.w0 = 0.0
        tc.dim = self.dim
        tc.n = self.n
        tc.EF = np.eye(self.dim)[-1]
        tc.tnorm = self.tnorm
        tc.pole = self.pole
        tc.tpole = self.tpole
        if self.n == 1:
            tc.theta_minus = self.theta_minus
            tc.theta_plus = self.theta_plus
        tc._alpha_cache = self._alpha_cache  # identical level set
        return tc

    # -- sampled invariant validation ----------------------------------------
    def validate(self, m=512, seed=0):
        """Sampled checks of the construction; raises on failure."""
        assert abs(self.EF[-1] - 1.0) < 1e-12
        xs = self.interior_preimages(m, np.random.default_rng(seed))
        z = self.norm.cahn_hoffman(xs)
        xi = z + self.w0 * self.EF
        # translation consistency and membership
        resid = np.abs(self.norm.dual_value(xi - self.w0 * self.EF) - 1.0)
        assert resid.max() < 1e-9, f"membership residual {resid.max():.2e}"
        assert np.all(xi[:, -1] > -1e-12), "cap not contained in the upper half space"
        assert np.all(self.ell_at_x(xs) > 0), "l must be positive on the cap"
        # F~ = F + w0 <E^F, .> pointwise and D2F~ = D2F
        ys = np.random.default_rng(seed + 1).standard_normal((64, self.dim))
        ft = self.tnorm.value(ys)
        assert np.allclose(ft, self.norm.value(ys) + self.w0 * ys @ self.EF,
                           rtol=0, atol=1e-12)
        assert np.allclose(self.tnorm.hess(ys), self.norm.hess(ys),
                           rtol=0, atol=1e-10)
        # capillary boundary condition <Psi(nu), -E_{n+1}> = w0
        xb = self.boundary_preimages(32 if self.n == 2 else 2)
        zb = self.norm.cahn_hoffman(xb)
        assert np.abs(zb[:, -1] + self.w0).max() < 1e-9
        xib = zb + self.w0 * self.EF
        assert np.abs(xib[:, -1]).max() < 1e-9
        return True


def build_cap(norm: MinkowskiNorm, w0: float, validate=True) -> CapillaryCap:
    cap = CapillaryCap(norm, w0)
    if validate:
        cap.validate()
    return cap
