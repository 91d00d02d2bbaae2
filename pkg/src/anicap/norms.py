"""Minkowski norms, their dual norms and derivative tensors.

Families are closed-form only: isotropic F(y)=|y|, ellipsoidal
F(y)=sqrt(y^T M y), and ellipsoidal times (1 + eps * even polynomial of
y/|y|).  The derivative data of the dual norm (the metric tensor G and the
cubic tensor Q, i.e. second and third derivatives of (1/2)(F^0)^2) are
obtained exactly through the Legendre relation: grad(1/2 (F^0)^2) is the
inverse map of grad(1/2 F^2), so

    G(zeta) = H(y)^{-1},
    Q(zeta)_{ijk} = - G_ia G_jb G_kc T_abc(y),      y = Phi^{-1}(zeta),

with H, T the second and third derivatives of (1/2)F^2 (computed by
forward-mode jets) and Phi = grad(1/2 F^2) inverted by a damped Newton
iteration.  At points of the Wulff shape the inverse point is known in
closed form (y = x/F(x) for zeta = DF(x)), so no iteration is needed there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint, NonConvexNorm
from .jets import Jet3, coordinate_jets

_ZERO_TOL = 1e-14


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def sphere_sample(dim, m, rng=None):
    """m roughly uniform points on the unit sphere of R^dim (dim in {2,3})."""
    if dim == 2:
        t = (np.arange(m) + 0.5) * (2.0 * np.pi / m)
        if rng is not None:
            t = t + rng.uniform(0, 2 * np.pi)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        # Fibonacci lattice
        i = np.arange(m) + 0.5
        z = 1.0 - 2.0 * i / m
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = np.pi * (1.0 + np.sqrt(5.0)) * i
        if rng is not None:
            phi = phi + rng.uniform(0, 2 * np.pi)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError(f"unsupported ambient dimension {dim}")


def tangent_basis(x):
    """Orthonormal basis of the tangent space of S^{d-1} at unit vectors x.

    Returns an array (B, d-1, d) of row vectors.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, d = x.shape
    if d == 2:
        t = np.stack([-x[:, 1], x[:, 0]], axis=1)
        return t[:, None, :]
    # d == 3: pick the axis least aligned with x, project, complete
    e = np.zeros((B, 3))
    e[np.arange(B), np.argmin(np.abs(x), axis=1)] = 1.0
    t1 = e - x * np.einsum("bi,bi->b", e, x)[:, None]
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(x, t1)
    return np.stack([t1, t2], axis=1)


def _symmetrize_batch(h):
    return 0.5 * (h + np.swapaxes(h, -1, -2))


@dataclass
class DualJet:
    """Derivative data of (1/2)(F^0)^2 at a point y."""
    y: np.ndarray          # (B, d)
    value: np.ndarray      # F^0(y), (B,)
    grad: np.ndarray       # DF^0(y), (B, d)
    G: np.ndarray          # Hessian of (1/2)(F^0)^2, (B, d, d)
    Q: np.ndarray          # third derivative, (B, d, d, d)


# ---------------------------------------------------------------------------
# norm families
# ---------------------------------------------------------------------------

class MinkowskiNorm:
    """Smooth, 1-homogeneous, uniformly convex norm on R^dim.

    Parameters
    ----------
    family : "isotropic" | "ellipsoidal" | "perturbed"
    dim : ambient dimension n+1 (2 or 3)
    matrix : SPD matrix for the ellipsoidal part (ignored for isotropic)
    eps, harmonics : perturbation amplitude and list of (coef, powers)
        monomial terms in x = y/|y| for the perturbed family
    """

    def __init__(self, family="isotropic", dim=2, matrix=None, eps=0.0,
                 harmonics=None, validate=True, _skip_linear=None):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        self.family = family
        self.dim = dim
        if family == "isotropic":
            self.M = np.eye(dim)
        else:
            self.M = np.asarray(matrix, dtype=float)
            if self.M.shape != (dim, dim) or not np.allclose(self.M, self.M.T):
                raise ValueError("matrix must be a symmetric dim x dim array")
            if np.any(np.linalg.eigvalsh(self.M) <= 0):
                raise NonConvexNorm("ellipsoidal matrix is not positive definite")
        self.eps = float(eps) if family == "perturbed" else 0.0
        self.harmonics = [(float(c), tuple(int(p) for p in pw))
                          for c, pw in (harmonics or [])] if family == "perturbed" else []
        if family == "perturbed":
            for _, pw in self.harmonics:
                if len(pw) != dim:
                    raise ValueError("harmonic powers must have one entry per coordinate")
        self.Minv = np.linalg.inv(self.M)
        # linear offset used by translated norms; zero here
        self.linear = np.zeros(dim) if _skip_linear is None else np.asarray(_skip_linear, float)
        self.even_horizontal, self.even_vertical = self._declared_symmetry()
        if validate:
            self._validate()

    # -- symmetry --------------------------------------------------------
    def _declared_symmetry(self):
        d = self.dim
        horiz = np.allclose(self.M[: d - 1, d - 1], 0.0)
        vert = horiz  # for a symmetric matrix the same off-block governs both
        for _, pw in self.harmonics:
            if sum(pw[: d - 1]) % 2 != 0:
                horiz = False
            if pw[d - 1] % 2 != 0:
                vert = False
        if np.any(np.abs(self.linear[: d - 1]) > 0):
            horiz = False
        if abs(self.linear[d - 1]) > 0:
            vert = False
        return horiz, vert

    def _validate(self, m=10_000, seed=0):
        rng = np.random.default_rng(seed)
        xs = sphere_sample(self.dim, m)
        vals = self.value(xs)
        if np.any(vals <= 0):
            raise NonConvexNorm("norm is not positive on the sphere")
        ev = np.linalg.eigvalsh(self.a_f(xs))
        self.af_min_eigenvalue = float(ev.min())
        if self.af_min_eigenvalue <= 0:
            raise NonConvexNorm(
                f"A_F loses positivity (min eigenvalue {self.af_min_eigenvalue:.3e})")
        # verify the declared symmetries on reflected pairs
        flip_h = xs.copy()
        flip_h[:, : self.dim - 1] *= -1
        flip_v = xs.copy()
        flip_v[:, self.dim - 1] *= -1
        if self.even_horizontal:
            assert np.allclose(self.value(flip_h), vals, atol=1e-12)
        if self.even_vertical:
            assert np.allclose(self.value(flip_v), vals, atol=1e-12)
        # spot-check homogeneity
        lam = rng.uniform(0.5, 2.0, size=16)
        ys = rng.standard_normal((16, self.dim))
        assert np.allclose(self.value(ys * lam[:, None]), lam * self.value(ys),
                           rtol=1e-12, atol=1e-14)

    @property
    def symmetric(self):
        """Both reflection symmetries of Definition of symmetric Wulff shapes."""
        return self.even_horizontal and self.even_vertical

    # -- primal norm -----------------------------------------------------
    def _pert_factor(self, x):
        p = np.zeros(x.shape[0])
        for c, pw in self.harmonics:
            term = np.full(x.shape[0], c)
            for i, e in enumerate(pw):
                if e:
                    term = term * x[:, i] ** e
            p += term
        return 1.0 + self.eps * p

    def value(self, y):
        """F(y), vectorized; F(0)=0."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q = np.sqrt(np.einsum("bi,ij,bj->b", y, self.M, y))
        out = q + y @ self.linear
        if self.eps:
            r = np.linalg.norm(y, axis=1)
            safe = r > 0
            x = np.where(safe[:, None], y / np.where(safe, r, 1.0)[:, None], 0.0)
            out = q * np.where(safe, self._pert_factor(x), 1.0) + y @ self.linear
        return out

    def jet(self, y):
        """Jet3 of F at points y (exact derivatives up to third order)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        f = Jet3.quadratic_form(y, self.M).sqrt()
        if self.eps:
            rinv = Jet3.quadratic_form(y, np.eye(self.dim)).sqrt().reciprocal()
            coords = coordinate_jets(y)
            xj = [c * rinv for c in coords]
            B = y.shape[0]
            p = Jet3.constant(0.0, B, self.dim)
            for c, pw in self.harmonics:
                term = Jet3.constant(c, B, self.dim)
                for i, e in enumerate(pw):
                    if e:
                        term = term * xj[i].power(e)
                p = p + term
            f = f * (p * self.eps + 1.0)
        if np.any(self.linear):
            f = f + Jet3.linear_form(y, self.linear)
        return f

    def grad(self, y):
        return self.value_and_grad(y)[1]

    def value_and_grad(self, y):
        """Closed-form F and DF (no jet machinery; used in hot loops)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        My = y @ self.M.T
        q = np.sqrt(np.einsum("bi,bi->b", y, My))
        if not self.eps:
            return q + y @ self.linear, My / q[:, None] + self.linear
        r = np.linalg.norm(y, axis=1)
        x = y / r[:, None]
        p = np.zeros(len(y))
        dp = np.zeros_like(y)
        for c, pw in self.harmonics:
            mono = np.full(len(y), c)
            for i, e in enumerate(pw):
                if e:
                    mono = mono * x[:, i] ** e
            p += mono
            for i, e in enumerate(pw):
                if e:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        dp[:, i] += np.where(x[:, i] != 0, e * mono / x[:, i], 0.0)
                    if np.any(x[:, i] == 0):  # recompute degenerate entries directly
                        idx = np.where(x[:, i] == 0)[0]
                        if e == 1:
                            m2 = np.full(len(idx), c)
                            for ii, ee in enumerate(pw):
                                if ee and ii != i:
                                    m2 = m2 * x[idx, ii] ** ee
                            dp[idx, i] += m2
        fac = 1.0 + self.eps * p
        # D(p(y/|y|)) = (I - x x^T)/|y| applied to dp
        dp_amb = (dp - x * np.einsum("bi,bi->b", dp, x)[:, None]) / r[:, None]
        grad = My / q[:, None] * fac[:, None] + q[:, None] * self.eps * dp_amb
        return q * fac + y @ self.linear, grad + self.linear

    def hess(self, y):
        return self.jet(y).hess

    def cahn_hoffman(self, x):
        """Psi(x) = DF(x) for |x| = 1; maps normals to Wulff-shape points."""
        return self.grad(x)

    def a_f(self, x):
        """D^2 F restricted to the tangent space, in an orthonormal frame."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        T = tangent_basis(x)
        H = self.hess(x)
        A = np.einsum("bai,bij,bcj->bac", T, H, T)
        return _symmetrize_batch(A)

    def a_f_checked(self, x):
        A = self.a_f(x)
        if np.any(np.linalg.eigvalsh(A) <= 0):
            raise NonConvexNorm("A_F not positive definite at query point")
        return A

    # -- Legendre machinery ------------------------------------------------
    def half_f2_jet(self, y):
        """Jet3 of (1/2)F(y)^2."""
        f = self.jet(y)
        return f * f * 0.5

    def legendre_invert(self, zeta, tol=1e-14, max_iter=60):
        """Solve grad(1/2 F^2)(y) = zeta by damped Newton (batched)."""
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        scale = np.linalg.norm(zeta, axis=1)
        if np.any(scale < _ZERO_TOL):
            raise DegeneratePoint("Legendre inversion at zero vector")
        d0 = zeta @ self.Minv.T
        phi0 = self.half_f2_jet(d0).grad
        y = d0 * (scale / np.linalg.norm(phi0, axis=1))[:, None]
        for _ in range(max_iter):
            j = self.half_f2_jet(y)
            res = zeta - j.grad
            rn = np.linalg.norm(res, axis=1)
            if np.all(rn <= tol * scale):
                break
            step = np.linalg.solve(j.hess, res[..., None])[..., 0]
            # backtracking on the residual norm
            alpha = np.ones(len(y))
            for _ in range(30):
                y_try = y + alpha[:, None] * step
                rn_try = np.linalg.norm(zeta - self.half_f2_jet(y_try).grad, axis=1)
                bad = rn_try > (1.0 - 0.25 * alpha) * rn
                if not np.any(bad):
                    break
                alpha[bad] *= 0.5
            y = y + alpha[:, None] * step
        return y

    def _dual_jet_from_primal_point(self, zeta, y):
        """Assemble the dual jet at zeta from its Legendre-inverse point y."""
        j = self.half_f2_jet(y)
        fvals = self.value(y)
        G = np.linalg.inv(j.hess)
        Q = -np.einsum("bpi,bqj,brk,bpqr->bijk", G, G, G, j.third)
        return DualJet(y=np.atleast_2d(zeta), value=fvals,
                       grad=y / fvals[:, None], G=_symmetrize_batch(G), Q=Q)

    def dual_jet(self, zeta):
        """F^0, DF^0, G and Q at points zeta != 0."""
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        B, d = zeta.shape
        nz = np.linalg.norm(zeta, axis=1)
        if np.any(nz < _ZERO_TOL):
            raise DegeneratePoint("dual jet requested at zero vector")
        if self.family == "isotropic" and not np.any(self.linear):
            G = np.broadcast_to(np.eye(d), (B, d, d)).copy()
            return DualJet(zeta, nz, zeta / nz[:, None], G, np.zeros((B, d, d, d)))
        if self.family == "ellipsoidal" and not np.any(self.linear):
            v = np.sqrt(np.einsum("bi,ij,bj->b", zeta, self.Minv, zeta))
            G = np.broadcast_to(self.Minv, (B, d, d)).copy()
            return DualJet(zeta, v, (zeta @ self.Minv.T) / v[:, None], G,
                           np.zeros((B, d, d, d)))
        y = self.legendre_invert(zeta)
        return self._dual_jet_from_primal_point(zeta, y)

    def dual_jet_at_normal(self, x):
        """Dual jet at zeta = DF(x) for unit normals x (no iteration needed)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.family in ("isotropic", "ellipsoidal") and not np.any(self.linear):
            return self.dual_jet(self.cahn_hoffman(x))
        y = x / self.value(x)[:, None]
        zeta = self.grad(x)
        return self._dual_jet_from_primal_point(zeta, y)

    # -- dual norm value ---------------------------------------------------
    def dual_value(self, zeta, n_scan=4096, n_starts=4, tol=1e-12):
        """F^0(zeta) = sup <y,zeta>/F(y); numeric sup for perturbed families."""
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        B, d = zeta.shape
        nz = np.linalg.norm(zeta, axis=1)
        out = np.zeros(B)
        if self.family == "isotropic" and not np.any(self.linear):
            return nz
        if self.family == "ellipsoidal" and not np.any(self.linear):
            return np.sqrt(np.einsum("bi,ij,bj->b", zeta, self.Minv, zeta))
        xs = sphere_sample(d, n_scan)
        fx = self.value(xs)
        for b in range(B):
            if nz[b] < _ZERO_TOL:
                out[b] = 0.0
                continue
            ratio = xs @ zeta[b] / fx
            order = np.argsort(ratio)[::-1][:n_starts]
            best = -np.inf
            for idx in order:
                val, _ = self._ascend_ratio(zeta[b], xs[idx], tol)
                best = max(best, val)
            out[b] = best
        return out

    def _ascend_ratio(self, zeta, x0, tol, max_iter=200):
        """Projected gradient ascent of <x,zeta>/F(x) on the sphere.

        Returns (max value, maximizer).
        """
        x = x0 / np.linalg.norm(x0)
        sc = np.linalg.norm(zeta)
        val = x @ zeta / self.value(x[None])[0]
        step = 1.0
        for _ in range(max_iter):
            F, dF = self.value_and_grad(x[None])
            F, dF = F[0], dF[0]
            g = (zeta - val * dF) / F
            g = g - (g @ x) * x
            if np.linalg.norm(g) < tol * sc:
                break
            improved = False
            for _ in range(40):
                x_try = x + step * g
                x_try /= np.linalg.norm(x_try)
                v_try = x_try @ zeta / self.value(x_try[None])[0]
                if v_try > val:
                    x, val = x_try, v_try
                    improved = True
                    step *= 1.3
                    break
                step *= 0.5
            if not improved:
                break
        return val, x

    # -- construction-style reporting --------------------------------------
    def describe(self):
        return {
            "family": self.family,
            "dim": self.dim,
            "matrix": self.M.tolist(),
            "eps": self.eps,
            "harmonics": [{"coef": c, "powers": list(p)} for c, p in self.harmonics],
            "even_horizontal": bool(self.even_horizontal),
            "even_vertical": bool(self.even_vertical),
            "af_min_eigenvalue": getattr(self, "af_min_eigenvalue", None),
        }


class TranslatedNorm(MinkowskiNorm):
    """Support function of a translated Wulff shape: F~(y) = F(y) + <c, y>.

    The translate must keep the origin inside the shape (true for the
    capillary translation omega_0 * E^F_{n+1} with admissible omega_0).
    D^2 F~ = D^2 F, so A_F is unchanged.
    """

    def __init__(self, base: MinkowskiNorm, offset, validate=True):
        self._base = base
        super().__init__(family=base.family, dim=base.dim,
                         matrix=base.M if base.family != "isotropic" else None,
                         eps=base.eps if base.family == "perturbed" else 0.0,
                         harmonics=base.harmonics if base.family == "perturbed" else None,
                         validate=False, _skip_linear=np.asarray(offset, float))
        if validate:
            self._validate()

    @property
    def base(self):
        return self._base


def eval_norm(norm: MinkowskiNorm, y):
    """Module-level alias for F(y) (scalar for a single point)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    v = norm.value(y)
    return float(v[0]) if single else v


def dual_norm(norm: MinkowskiNorm, zeta):
    zeta = np.asarray(zeta, dtype=float)
    single = zeta.ndim == 1
    v = norm.dual_value(zeta)
    return float(v[0]) if single else v


# ---------------------------------------------------------------------------
# finite-difference oracle (tests only)
# ---------------------------------------------------------------------------

class _DualHalfSquare:
    """Scalar map zeta -> (1/2) F^0(zeta)^2 with brute-force sup fallback."""

    def __init__(self, norm: MinkowskiNorm):
        self.norm = norm
        self.closed = norm.family in ("isotropic", "ellipsoidal") \
            and not np.any(norm.linear)
        self._warm = None

    def __call__(self, zeta):
        if self.closed:
            v = self.norm.dual_value(zeta[None])[0]
            return 0.5 * v * v
        v = self._sup(zeta)
        return 0.5 * v * v

    def _sup(self, zeta):
        norm = self.norm
        if self._warm is None:
            xs = sphere_sample(norm.dim, 4096)
            ratio = xs @ zeta / norm.value(xs)
            x0 = xs[int(np.argmax(ratio))]
        else:
            x0 = self._warm
        val, x = norm._ascend_ratio(zeta, x0, tol=1e-13)
        self._warm = x
        return val


def _d1_4th(f, y, e, h):
    return (-f(y + 2 * h * e) + 8 * f(y + h * e)
            - 8 * f(y - h * e) + f(y - 2 * h * e)) / (12 * h)


def fd_oracle_jet(norm: MinkowskiNorm, y):
    """DualJet computed exclusively by central differences of (1/2)(F^0)^2.

    Independent oracle for MinkowskiNorm.dual_jet; test use only.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("fd_oracle_jet operates on a single point")
    scale = np.linalg.norm(y)
    if scale < _ZERO_TOL:
        raise DegeneratePoint("oracle jet at zero vector")
    d = y.shape[0]
    g = _DualHalfSquare(norm)
    eps = np.finfo(float).eps
    h2 = eps ** 0.25 * scale
    h3 = eps ** 0.2 * scale
    eye = np.eye(d)

    value = np.sqrt(2.0 * g(y))
    grad = np.array([_d1_4th(g, y, eye[i], h2) for i in range(d)])

    def hess_at(z, h):
        H = np.zeros((d, d))
        for i in range(d):
            def di(w, i=i):
                return _d1_4th(g, w, eye[i], h)
            for j in range(i, d):
                H[i, j] = H[j, i] = _d1_4th(di, z, eye[j], h)
        return H

    G = hess_at(y, h2)
    Q = np.zeros((d, d, d))
    for k in range(d):
        Hp = hess_at(y + h3 * eye[k], h2)
        Hm = hess_at(y - h3 * eye[k], h2)
        Q[:, :, k] = (Hp - Hm) / (2 * h3)
    return DualJet(y=y[None], value=np.array([value]),
                   grad=(grad / value)[None], G=G[None], Q=Q[None])
