"""Figure rendering for the report path.

All figures are written to files (Agg backend); nothing opens a window.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .bodies import CapBody
from .domain import MetricData

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 130,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
})


def plot_solution(outdir, md: MetricData, body: CapBody, title="solution"):
    outdir = Path(outdir)
    path = outdir / "solution.png"
    grid = md.grid
    if grid.n == 1:
        X = body.reconstruct()
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
        ax1.plot(grid.xi[:, 0], grid.xi[:, 1], "k--", lw=1, label="cap")
        ax1.plot(X[:, 0], X[:, 1], "C0-", lw=1.6, label="body")
        ax1.axhline(0.0, color="0.6", lw=0.8)
        ax1.set_aspect("equal")
        ax1.legend(loc="best")
        ax1.set_title(title)
        th = grid.coords[0]
        ax2.plot(th, md.ell, "k--", lw=1, label="l")
        ax2.plot(th, body.s, "C0-", lw=1.6, label="s")
        ax2.set_xlabel("theta")
        ax2.legend(loc="best")
    else:
        X = body.reconstruct()
        Nr, Np = grid.shape
        P = X.reshape(Nr, Np, 3)
        P = np.concatenate([P, P[:, :1]], axis=1)  # close the seam
        fig = plt.figure(figsize=(9, 4))
        ax1 = fig.add_subplot(121, projection="3d")
        ax1.plot_surface(P[..., 0], P[..., 1], P[..., 2], cmap="viridis",
                         linewidth=0, antialiased=True, alpha=0.95)
        ax1.set_title(title)
        ax2 = fig.add_subplot(122)
        S = body.s.reshape(Nr, Np)
        im = ax2.pcolormesh(grid.coords[1].reshape(Nr, Np),
                            grid.coords[0].reshape(Nr, Np), S, shading="auto")
        fig.colorbar(im, ax=ax2, label="s")
        ax2.set_xlabel("phi")
        ax2.set_ylabel("rho")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path.name


def plot_residual_history(outdir, trace):
    outdir = Path(outdir)
    path = outdir / "residuals.png"
    fig, ax = plt.subplots()
    for stage in trace:
        r = np.asarray(stage["residuals"], float)
        ax.semilogy(np.arange(len(r)), np.maximum(r, 1e-17), "o-", ms=3,
                    label=f"t = {stage['t']:.3f}")
    ax.set_xlabel("Newton iteration")
    ax.set_ylabel("sup-norm residual")
    if len(trace) <= 8:
        ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path.name


def plot_density(outdir, md: MetricData, field, name="density"):
    outdir = Path(outdir)
    path = outdir / f"{name}.png"
    grid = md.grid
    fig, ax = plt.subplots()
    if grid.n == 1:
        ax.plot(grid.coords[0], field, "C0-")
        ax.set_xlabel("theta")
        ax.set_ylabel(name)
    else:
        Nr, Np = grid.shape
        im = ax.pcolormesh(grid.coords[1].reshape(Nr, Np),
                           grid.coords[0].reshape(Nr, Np),
                           np.asarray(field).reshape(Nr, Np), shading="auto")
        fig.colorbar(im, ax=ax, label=name)
        ax.set_xlabel("phi")
        ax.set_ylabel("rho")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path.name


def plot_bodies(outdir, md: MetricData, named_bodies, name="bodies"):
    """Overlay of reconstructed bodies (n=1) or their support fields (n=2)."""
    outdir = Path(outdir)
    path = outdir / f"{name}.png"
    grid = md.grid
    if grid.n == 1:
        fig, ax = plt.subplots()
        ax.plot(grid.xi[:, 0], grid.xi[:, 1], "k--", lw=0.8, label="cap")
        for label, body in named_bodies:
            X = body.reconstruct()
            ax.plot(X[:, 0], X[:, 1], lw=1.4, label=label)
        ax.set_aspect("equal")
        ax.axhline(0.0, color="0.6", lw=0.8)
        ax.legend(loc="best", fontsize=7)
    else:
        fig, axes = plt.subplots(1, len(named_bodies),
                                 figsize=(4 * len(named_bodies), 3.4))
        axes = np.atleast_1d(axes)
        Nr, Np = grid.shape
        for ax, (label, body) in zip(axes, named_bodies):
            im = ax.pcolormesh(grid.coords[1].reshape(Nr, Np),
                               grid.coords[0].reshape(Nr, Np),
                               body.s.reshape(Nr, Np), shading="auto")
            fig.colorbar(im, ax=ax)
            ax.set_title(label, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path.name
