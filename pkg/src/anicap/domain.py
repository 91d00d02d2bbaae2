"""Discretization of the capillary cap: grids, intrinsic metric data,
covariant differential operators, the Robin boundary functional and
quadrature for the anisotropic area measure.

The geometry (metric, Christoffel symbols, chart components of the cubic
tensor, quadrature Jacobians) is evaluated in closed form at the nodes; only
field derivatives use finite-difference stencils.  The stencil operators are
corrected to be exact on the span W = {1, k_1, ..., k_{n+1}} of Wulff-ball
capillary support functions (k_beta = G(z)(z, E_beta) = x_beta/F(x)), whose
continuum images under tau, the gradient and the Robin functional are known
in closed form.  The correction is linear (an L^2(dmu_F) projection), keeps
second-order consistency for generic fields, and makes scaled/translated
Wulff caps exact discrete solutions of the Minkowski problem, mirroring the
structure of the continuum theory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SingularMetric
from .wulff import CapillaryCap


# ---------------------------------------------------------------------------
# stencil matrices
# ---------------------------------------------------------------------------

def _d1_matrix(N, h, periodic=False):
    if periodic:
        off = np.ones(N) / (2 * h)
        D = sp.diags([off[:-1], -off[:-1]], [1, -1], format="lil")
        D[0, N - 1] = -1.0 / (2 * h)
        D[N - 1, 0] = 1.0 / (2 * h)
        return D.tocsr()
    D = sp.lil_matrix((N, N))
    for i in range(1, N - 1):
        D[i, i + 1] = 1.0 / (2 * h)
        D[i, i - 1] = -1.0 / (2 * h)
    D[0, 0], D[0, 1], D[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    D[N - 1, N - 1], D[N - 1, N - 2], D[N - 1, N - 3] = 1.5 / h, -2.0 / h, 0.5 / h
    return D.tocsr()


def _d2_matrix(N, h, periodic=False):
    if periodic:
        on = np.ones(N)
        D = sp.diags([on[:-1], -2 * on, on[:-1]], [1, 0, -1], format="lil") / h**2
        D[0, N - 1] = 1.0 / h**2
        D[N - 1, 0] = 1.0 / h**2
        return D.tocsr()
    D = sp.lil_matrix((N, N))
    for i in range(1, N - 1):
        D[i, i - 1], D[i, i], D[i, i + 1] = 1.0 / h**2, -2.0 / h**2, 1.0 / h**2
    c = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    D[0, 0:4] = c
    D[N - 1, N - 4:N] = c[::-1]
    return D.tocsr()


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass
class CapGrid:
    cap: CapillaryCap
    n: int
    shape: tuple
    coords: tuple                 # (theta,) or (rho, phi), flat nodal arrays
    x: np.ndarray                 # sphere preimages (Nt, d)
    xi: np.ndarray                # cap points (Nt, d)
    dxi: np.ndarray               # chart partials (Nt, n, d)
    ddxi: np.ndarray              # chart second partials (Nt, n, n, d)
    boundary: np.ndarray          # bool mask (Nt,)
    h: tuple                      # chart spacings
    d1: list                      # first-derivative csr matrices per direction
    d2: dict                      # {(i,j): csr} second-derivative matrices
    reflect: np.ndarray | None    # node permutation of xi -> xi_bar

    @property
    def ntotal(self):
        return self.xi.shape[0]

    @property
    def interior(self):
        return ~self.boundary

    def node_spacing(self):
        """Largest Euclidean distance between chart-adjacent nodes."""
        if self.n == 1:
            return float(np.linalg.norm(np.diff(self.xi, axis=0), axis=1).max())
        Nr, Np = self.shape
        pts = self.xi.reshape(Nr, Np, -1)
        dr = np.linalg.norm(pts[1:] - pts[:-1], axis=2).max()
        dp = np.linalg.norm(pts - np.roll(pts, 1, axis=1), axis=2).max()
        return float(max(dr, dp))


def build_grid(cap: CapillaryCap, resolution) -> CapGrid:
    """Boundary-fitted chart grid.

    resolution: node count N >= 16 for n=1, or (Nrho, Nphi) each >= 16 for
    n=2.  Nphi is rounded up to an even count so that the horizontal
    reflection maps nodes to nodes on symmetric norms.  The n=2 radial grid
    is offset half a cell from the chart pole; the boundary ring sits exactly
    on rho = 1.
    """
    if cap.n == 1:
        N = int(resolution)
        if N < 16:
            raise ValueError("resolution must be at least 16")
        theta = np.linspace(cap.theta_minus, cap.theta_plus, N)
        h = theta[1] - theta[0]
        sd = cap.sphere_chart(theta)
        emb = cap.embed(sd)
        boundary = np.zeros(N, bool)
        boundary[0] = boundary[-1] = True
        d1 = [_d1_matrix(N, h)]
        d2 = {(0, 0): _d2_matrix(N, h)}
        reflect = np.arange(N)[::-1].copy() if cap.norm.symmetric else None
        grid = CapGrid(cap, 1, (N,), (theta,), sd["x"], emb["xi"], emb["dxi"],
                       emb["ddxi"], boundary, (h,), d1, d2, reflect)
    else:
        Nr, Np = (resolution if isinstance(resolution, (tuple, list))
                  else (int(resolution), int(resolution)))
        if Nr < 16 or Np < 16:
            raise ValueError("resolution must be at least 16x16")
        Np += Np % 2
        hr = 1.0 / (Nr - 0.5)
        rho1 = (np.arange(Nr) + 0.5) * hr
        hphi = 2 * np.pi / Np
        phi1 = np.arange(Np) * hphi
        R, P = np.meshgrid(rho1, phi1, indexing="ij")
        rho, phi = R.ravel(), P.ravel()
        sd = cap.sphere_chart(rho, phi)
        emb = cap.embed(sd)
        boundary = np.zeros(Nr * Np, bool)
        boundary[(Nr - 1) * Np:] = True
        Ir, Ip = sp.identity(Nr, format="csr"), sp.identity(Np, format="csr")
        Dr = sp.kron(_d1_matrix(Nr, hr), Ip, format="csr")
        Dp = sp.kron(Ir, _d1_matrix(Np, hphi, periodic=True), format="csr")
        d1 = [Dr, Dp]
        d2 = {(0, 0): sp.kron(_d2_matrix(Nr, hr), Ip, format="csr"),
              (0, 1): sp.kron(_d1_matrix(Nr, hr),
                              _d1_matrix(Np, hphi, periodic=True), format="csr"),
              (1, 1): sp.kron(Ir, _d2_matrix(Np, hphi, periodic=True), format="csr")}
        reflect = None
        if cap.norm.symmetric:
            idx = np.arange(Nr * Np).reshape(Nr, Np)
            reflect = np.roll(idx, Np // 2, axis=1).ravel()
        grid = CapGrid(cap, 2, (Nr, Np), (rho, phi), sd["x"], emb["xi"],
                       emb["dxi"], emb["ddxi"], boundary, (hr, hphi), d1, d2,
                       reflect)
    assert np.abs(grid.xi[grid.boundary][:, -1]).max() < 1e-9
    assert np.all(grid.xi[grid.interior][:, -1] > 0)
    return grid


# ---------------------------------------------------------------------------
# metric data
# ---------------------------------------------------------------------------

@dataclass
class MetricData:
    grid: CapGrid
    g: np.ndarray                # chart metric (Nt, n, n)
    ginv: np.ndarray
    christoffel: np.ndarray      # Gamma^k_{ij} -> (Nt, n, n, n), order [k,i,j]
    Qchart: np.ndarray           # Q in chart components, totally symmetric
    A3: np.ndarray               # A_{ijk} = -Q_{ijk}/2
    frame: np.ndarray            # E[b,a,i]: e_a = E[a,i] d_i
    Qfr: np.ndarray              # frame components of Q
    weights: np.ndarray          # quadrature weights for dmu_F
    ell: np.ndarray              # l at nodes
    Fnu: np.ndarray              # F(nu) at nodes
    Gz: np.ndarray               # ambient metric G at T^{-1}xi (Nt, d, d)
    zhat: np.ndarray             # T^{-1} xi = Psi(x) (Nt, d)
    basis: np.ndarray            # W-span nodal values (Nt, d+1): [1, k_beta]
    basis_grad: np.ndarray       # exact embedded gradients (Nt, d+1, d)
    basis_grad_fr: np.ndarray    # frame components of those gradients (Nt, d+1, n)
    proj: np.ndarray             # projection coefficient map ((d+1), Nt)
    kernel: np.ndarray           # horizontal kernel functions (Nt, n)
    ops: object = field(default=None, repr=False)

    @property
    def ntotal(self):
        return self.grid.ntotal


def assemble_metric(cap: CapillaryCap, grid: CapGrid, corrupt_q=False) -> MetricData:
    """Exact nodal metric data; raises SingularMetric if det g <= 0."""
    x, dxi, ddxi = grid.x, grid.dxi, grid.ddxi
    dj = cap.norm.dual_jet_at_normal(x)
    G, Q = dj.G, dj.Q
    n = grid.n
    g = np.einsum("bai,bij,bcj->bac", dxi, G, dxi)
    if np.any(np.linalg.det(g) <= 0):
        raise SingularMetric("chart metric lost positivity")
    ginv = np.linalg.inv(g)
    Qc = np.einsum("bijk,bai,bcj,bdk->bacd", Q, dxi, dxi, dxi)
    if corrupt_q:
        Qc = Qc + 0.05  # test hook: breaks the Gauss-formula identity
    proj2 = np.einsum("bijd,bde,bme->bijm", ddxi, G, dxi)
    Gamma = np.einsum("bkm,bijm->bkij", ginv, proj2 + 0.5 * Qc)
    # orthonormal frame by Gram-Schmidt of the chart basis under g
    E = np.zeros_like(g)
    E[:, 0, 0] = 1.0 / np.sqrt(g[:, 0, 0])
    if n == 2:
        c = g[:, 0, 1] / g[:, 0, 0]
        nrm = np.sqrt(np.maximum(g[:, 1, 1] - c * g[:, 0, 1], 1e-300))
        E[:, 1, 0] = -c / nrm
        E[:, 1, 1] = 1.0 / nrm
    Qfr = np.einsum("bijk,bai,bcj,bdk->bacd", Qc, E, E, E)
    Fv = cap.norm.value(x)
    if n == 1:
        (N,) = grid.shape
        h = grid.h[0]
        w1 = np.full(N, h)
        w1[0] = w1[-1] = h / 2
        weights = w1 * Fv * np.linalg.norm(dxi[:, 0, :], axis=1)
    else:
        Nr, Np = grid.shape
        hr, hphi = grid.h
        wr = np.full(Nr, hr)
        wr[-1] = hr / 2
        w2 = np.repeat(wr, Np) * hphi
        cr = np.cross(dxi[:, 0, :], dxi[:, 1, :])
        weights = w2 * Fv * np.linalg.norm(cr, axis=1)
    ell = cap.ell_at_x(x)
    d = cap.dim
    kb = cap.kernel_basis_at_x(x)
    basis = np.concatenate([np.ones((grid.ntotal, 1)), kb], axis=1)
    zhat = grid.xi - cap.w0 * cap.EF
    basis_grad = np.zeros((grid.ntotal, d + 1, d))
    for beta in range(d):
        eb = np.zeros(d)
        eb[beta] = 1.0
        # grad k_beta = E_beta - k_beta z  (point body E_beta: X = grad s + s z)
        basis_grad[:, beta + 1, :] = eb[None, :] - kb[:, beta:beta + 1] * zhat
    # frame components of the basis gradients: for a g-orthonormal frame,
    # coefficient a = g(grad, e_a) = E[a,i] * (covariant component i)
    cov = np.einsum("bmd,bde,bje->bmj", basis_grad, G, dxi)
    basis_grad_fr = np.einsum("bai,bmi->bma", E, cov)
    gram = (basis * weights[:, None]).T @ basis
    proj = np.linalg.solve(gram, (basis * weights[:, None]).T)
    md = MetricData(grid, g, ginv, Gamma, Qc, -0.5 * Qc, E, Qfr, weights, ell,
                    Fv, G, zhat, basis, basis_grad, basis_grad_fr, proj,
                    kb[:, : d - 1])
    md.ops = CapOperators(cap, grid, md)
    return md


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

class CapOperators:
    """Linear discrete operators on nodal scalar fields, exactness-corrected
    on the Wulff-ball span (see module docstring)."""

    def __init__(self, cap, grid, md: MetricData):
        self.cap = cap
        self.grid = grid
        self.md = md
        self.n = grid.n

    # -- raw stencils -------------------------------------------------
    def chart_grad(self, v):
        return np.stack([D @ v for D in self.grid.d1], axis=1)

    def chart_second(self, v):
        n = self.n
        out = np.zeros((self.grid.ntotal, n, n))
        for (i, j), D in self.grid.d2.items():
            out[:, i, j] = out[:, j, i] = D @ v
        return out

    def _hessian_raw(self, v):
        dv = self.chart_grad(v)
        H = self.chart_second(v) - np.einsum("bkij,bk->bij", self.md.christoffel, dv)
        E = self.md.frame
        return np.einsum("bai,bcj,bij->bac", E, E, H)

    def _grad_frame_raw(self, v):
        return np.einsum("bai,bi->ba", self.md.frame, self.chart_grad(v))

    def _grad_embedded_raw(self, v):
        dv = self.chart_grad(v)
        return np.einsum("bij,bj,bid->bd", self.md.ginv, dv, self.grid.dxi)

    def _tau_raw(self, v):
        gradfr = self._grad_frame_raw(v)
        return (self._hessian_raw(v) + v[:, None, None] * np.eye(self.n)[None]
                - 0.5 * np.einsum("bacr,br->bac", self.md.Qfr, gradfr))

    # -- W-span projection ------------------------------------------------
    def split_w(self, v):
        c = self.md.proj @ v
        return c, v - self.md.basis @ c

    # -- corrected operators -----------------------------------------------
    def gradient(self, v):
        """Embedded covariant gradient (Nt, d)."""
        c, rem = self.split_w(v)
        return self._grad_embedded_raw(rem) \
            + np.einsum("m,bmd->bd", c, self.md.basis_grad)

    def gradient_frame(self, v):
        c, rem = self.split_w(v)
        return self._grad_frame_raw(rem) \
            + np.einsum("m,bma->ba", c, self.md.basis_grad_fr)

    def tau(self, v):
        """Discrete tau tensor in the orthonormal frame (Nt, n, n)."""
        c, rem = self.split_w(v)
        return self._tau_raw(rem) + c[0] * np.eye(self.n)[None]

    def hessian(self, v):
        """Frame components of the covariant Hessian, from tau and gradient:
        Hess[v] = tau[v] - v I + (1/2) Q(grad v, ., .)."""
        gfr = self.gradient_frame(v)
        return (self.tau(v) - v[:, None, None] * np.eye(self.n)[None]
                + 0.5 * np.einsum("bacr,br->bac", self.md.Qfr, gfr))

    # -- tau as sparse matrices + low-rank correction data -------------------
    def tau_sparse(self):
        """Uncorrected sparse matrices S[(a,b)] with (S v) = tau_raw(v)_ab.

        The corrected operator is S (I - B proj) + delta_ab (1 x proj[0]).
        """
        if hasattr(self, "_tau_sp"):
            return self._tau_sp
        Nt, n = self.grid.ntotal, self.n
        E, Gm, Qfr = self.md.frame, self.md.christoffel, self.md.Qfr
        mats = {}
        for a in range(n):
            for b in range(a, n):
                M = sp.csr_matrix((Nt, Nt))
                for i in range(n):
                    for j in range(n):
                        key = (min(i, j), max(i, j))
                        coef = E[:, a, i] * E[:, b, j]
                        M = M + sp.diags(coef) @ self.grid.d2[key]
                        for k in range(n):
                            M = M - sp.diags(coef * Gm[:, k, i, j]) @ self.grid.d1[k]
                for cx in range(n):
                    for k in range(n):
                        M = M - sp.diags(0.5 * Qfr[:, a, b, cx]
                                         * E[:, cx, k]) @ self.grid.d1[k]
                if a == b:
                    M = M + sp.identity(Nt, format="csr")
                mats[(a, b)] = M.tocsr()
        self._tau_sp = mats
        return mats

    # -- Robin boundary functional -------------------------------------------
    def _boundary_frames(self):
        if not hasattr(self, "_bframes"):
            xb = self.grid.x[self.grid.boundary]
            self._bframes = [self.cap.frames_at_boundary_x(x) for x in xb]
        return self._bframes

    def robin_forms(self, v):
        """Residuals of the three equivalent Robin forms at boundary nodes."""
        w0 = self.cap.w0
        bm = self.grid.boundary
        gv = self.gradient(v)[bm]
        vb = np.asarray(v, float)[bm]
        frames = self._boundary_frames()
        mu = np.array([f["mu"] for f in frames])
        muF = np.array([f["mu_F"] for f in frames])
        Gz = self.md.Gz[bm]
        Fb = self.md.Fnu[bm]
        mu_v = mu[:, -1]
        vertical = gv[:, -1] - w0 * vb
        mu_form = np.einsum("bd,bd->b", gv, mu) - w0 * vb / mu_v
        conormal = np.einsum("bd,bde,be->b", gv, Gz, muF) - w0 * vb / (Fb * mu_v)
        dev = max(np.abs(vertical - mu_v * mu_form).max(),
                  np.abs(vertical - (Fb * mu_v) * conormal).max())
        return {"vertical": vertical, "conormal_F": conormal, "mu": mu_form,
                "mutual_deviation": float(dev)}

    def robin_matrix(self):
        """Corrected dense rows (Nb, Nt) of the vertical Robin functional
        <grad v, E_{n+1}> - w0 v."""
        if hasattr(self, "_robin_mat"):
            return self._robin_mat
        Nt = self.grid.ntotal
        bidx = np.where(self.grid.boundary)[0]
        coef = np.einsum("bij,bid->bjd", self.md.ginv, self.grid.dxi)
        raw = np.zeros((len(bidx), Nt))
        for j in range(self.n):
            raw += (sp.diags(coef[:, j, -1]) @ self.grid.d1[j])[bidx].toarray()
        raw[np.arange(len(bidx)), bidx] -= self.cap.w0
        B, P = self.md.basis, self.md.proj
        vals = self.md.basis[self.grid.boundary]
        grads = self.md.basis_grad[self.grid.boundary]
        exact = grads[:, :, -1] - self.cap.w0 * vals
        rows = raw - (raw @ B - exact) @ P
        self._robin_mat = rows
        return rows

    def robin_vertical(self, v):
        return self.robin_matrix() @ v


# ---------------------------------------------------------------------------
# module-level operation wrappers
# ---------------------------------------------------------------------------

def covariant_hessian(md: MetricData, v):
    return md.ops.hessian(np.asarray(v, float))


def covariant_gradient(md: MetricData, v):
    return md.ops.gradient(np.asarray(v, float))


def tau_apply(md: MetricData, v):
    return md.ops.tau(np.asarray(v, float))


def robin_residual(cap, md: MetricData, v):
    return md.ops.robin_forms(np.asarray(v, float))


def integrate(md: MetricData, v):
    """Integral of a nodal field against dmu_F."""
    return float(md.weights @ np.asarray(v, float))


def gauss_formula_residual(md: MetricData):
    """Worst interior-node residual of the Gauss decomposition of dd xi.

    The stencil second partials of the embedding must match
    -g_{ij} z + Gamma^k_{ij} d_k xi - (1/2) g^{kl} Q_{ijl} d_k xi  to O(h^2).
    """
    grid = md.grid
    res = 0.0
    for i in range(grid.n):
        for j in range(i, grid.n):
            D = grid.d2[(i, j)]
            num = np.stack([D @ grid.xi[:, c] for c in range(grid.cap.dim)], axis=1)
            rhs = -md.g[:, i, j, None] * md.zhat \
                + np.einsum("bk,bkd->bd", md.christoffel[:, :, i, j], grid.dxi) \
                - 0.5 * np.einsum("bkl,bl,bkd->bd", md.ginv,
                                  md.Qchart[:, i, j, :], grid.dxi)
            err = np.linalg.norm((num - rhs)[grid.interior], axis=1)
            res = max(res, float(err.max()))
    return res
