"""Figure rendering for run reports.

Every run that emits a delimited table also renders the matching
matplotlib figures next to it: convergence history, final mesh, and an
indicator map.  Everything goes straight to files (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np


def _triangulation(mesh):
    return mtri.Triangulation(
        mesh.coords[:, 0], mesh.coords[:, 1], mesh.triangles
    )


def plot_mesh(mesh, path, title=None):
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    tri = _triangulation(mesh)
    ax.tripcolor(
        tri, facecolors=(mesh.subdomain > 0).astype(float),
        cmap="coolwarm", alpha=0.25, vmin=-0.2, vmax=1.2,
    )
    ax.triplot(tri, color="0.3", lw=0.4)
    ax.set_aspect("equal")
    ax.set_title(title or f"mesh: {mesh.num_vertices} vertices, "
                          f"{mesh.num_triangles} triangles")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_solution(mesh, values, path, title="discrete solution"):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    tri = _triangulation(mesh)
    im = ax.tripcolor(tri, np.asarray(values), shading="gouraud", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_indicators(mesh, indicators, path, title="error indicators"):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    tri = _triangulation(mesh)
    eta = indicators.eta_total
    im = ax.tripcolor(tri, facecolors=eta, cmap="magma")
    fig.colorbar(im, ax=ax, label="eta_T")
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_convergence(table, path, title="convergence history"):
    rows = list(table)
    dof = np.array([r.dof for r in rows], dtype=float)
    e_l2 = np.array([r.e_l2 for r in rows])
    e_h1 = np.array([r.e_h1 for r in rows])
    eta = np.array([r.eta for r in rows])
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(dof, e_h1, "o-", label="H1 error")
    ax.loglog(dof, e_l2, "s-", label="L2 error")
    ax.loglog(dof, eta, "^--", label="estimator")
    # first-order reference slope in DoF^(-1/2)
    ref = e_h1[0] * (dof / dof[0]) ** -0.5
    ax.loglog(dof, ref, ":", color="0.5", label="slope 1 in DoF^(-1/2)")
    ax.set_xlabel("DoF")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_coercivity(rows, path):
    lev = [r["level"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    ax1.plot(lev, [r["kr"] for r in rows], "o-", label="K_R (discrete)")
    ax1.axhline(rows[0]["kr_expected"], color="0.5", ls="--", label="reflection bound")
    ax1.set_xlabel("level")
    ax1.set_title("lifting contrast")
    ax1.legend()
    ax2.plot(lev, [r["alpha_min"] for r in rows], "s-")
    ax2.axhline(0.0, color="0.5", ls="--")
    ax2.set_xlabel("level")
    ax2.set_title("coercivity constant")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
