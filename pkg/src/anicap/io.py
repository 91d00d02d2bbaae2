"""Geometry and field exports: delimited text plus OBJ meshes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .bodies import CapBody
from .domain import MetricData


def write_solution_csv(path, md: MetricData, s, header="s"):
    grid = md.grid
    if grid.n == 1:
        cols = np.column_stack([grid.coords[0], s])
        names = "theta," + header
    else:
        cols = np.column_stack([grid.coords[0], grid.coords[1], s])
        names = "rho,phi," + header
    np.savetxt(path, cols, delimiter=",", header=names, comments="")


def read_solution_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data[:, -1]


def write_curve_csv(path, pts):
    """Polyline of a reconstructed curve (n=1)."""
    np.savetxt(path, pts, delimiter=",", header="x,y", comments="")


def write_surface_obj(path, md: MetricData, pts):
    """Quad-fan OBJ mesh over the (rho, phi) grid, pole point included."""
    grid = md.grid
    Nr, Np = grid.shape
    P = np.asarray(pts, float).reshape(Nr, Np, 3)
    cap = grid.cap
    pole = cap.norm.cahn_hoffman(cap.pole[None])[0] + cap.w0 * cap.EF
    lines = ["# anicap surface export"]
    lines.append(f"v {pole[0]!r} {pole[1]!r} {pole[2]!r}")
    for r in range(Nr):
        for p in range(Np):
            q = P[r, p]
            lines.append(f"v {q[0]!r} {q[1]!r} {q[2]!r}")

    def vid(r, p):
        return 2 + r * Np + (p % Np)

    for p in range(Np):  # pole fan
        lines.append(f"f 1 {vid(0, p)} {vid(0, p + 1)}")
    for r in range(Nr - 1):
        for p in range(Np):
            lines.append(f"f {vid(r, p)} {vid(r + 1, p)} "
                         f"{vid(r + 1, p + 1)} {vid(r, p + 1)}")
    Path(path).write_text("\n".join(lines) + "\n")


def export_cap_geometry(outdir, md: MetricData):
    """Sampled cap itself: CSV polyline (n=1) or OBJ mesh (n=2)."""
    outdir = Path(outdir)
    if md.grid.n == 1:
        write_curve_csv(outdir / "cap.csv", md.grid.xi)
        return "cap.csv"
    write_surface_obj(outdir / "cap.obj", md, md.grid.xi)
    return "cap.obj"


def export_body_surface(outdir, body: CapBody, stem="surface"):
    outdir = Path(outdir)
    X = body.reconstruct()
    if body.grid.n == 1:
        name = f"{stem}.csv"
        write_curve_csv(outdir / name, X)
    else:
        name = f"{stem}.obj"
        write_surface_obj(outdir / name, body.md, X)
    return name


def write_metric_csv(path, md: MetricData):
    """Debug dump of the nodal metric data."""
    grid = md.grid
    n = grid.n
    cols = [grid.xi[:, i] for i in range(grid.cap.dim)]
    names = [f"xi{i+1}" for i in range(grid.cap.dim)]
    for i in range(n):
        for j in range(i, n):
            cols.append(md.g[:, i, j])
            names.append(f"g_{i}{j}")
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                cols.append(md.Qchart[:, i, j, k])
                names.append(f"Q_{i}{j}{k}")
    cols.append(md.weights)
    names.append("weight_mu_F")
    cols.append(md.ell)
    names.append("ell")
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=",".join(names), comments="")
