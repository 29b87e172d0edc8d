"""Figure output: joint-space heatmaps, error bars, histograms, PCA ellipsoids.

matplotlib is imported lazily with the Agg backend so the numerical modules
never pay for it.
"""

from __future__ import annotations

import numpy as np

DIST_CMAP = "viridis"        # perceptually uniform, 0..10 mm
DIFF_CMAP = "RdBu"           # diverging, red = joint-space reduction
_META = {"Software": None}   # keep PNG bytes free of version strings


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _face_values(mesh, m):
    v = np.where(m.valid, np.nan_to_num(m.values), np.nan)
    fv = v[mesh.triangles].mean(axis=1)
    return np.ma.masked_invalid(fv)


def joint_heatmaps(fossa, planned, measured, diff, path, dist_scale=(0.0, 10.0),
                   diff_limit: float = 2.0, title: str = "") -> None:
    """Three top-view panels of the fossa: planned, measured and diff maps."""
    plt = _plt()
    import matplotlib.tri as mtri

    tri = mtri.Triangulation(fossa.vertices[:, 0], fossa.vertices[:, 1], fossa.triangles)
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6), constrained_layout=True)
    panels = ((planned, "planned", DIST_CMAP, dist_scale),
              (measured, "measured", DIST_CMAP, dist_scale),
              (diff, "diff (measured - planned)", DIFF_CMAP, (-diff_limit, diff_limit)))
    for ax, (m, label, cmap, (lo, hi)) in zip(axes, panels):
        pc = ax.tripcolor(tri, facecolors=_face_values(fossa, m), cmap=cmap, vmin=lo, vmax=hi)
        ax.set_title(label)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(pc, ax=ax, shrink=0.8, label="mm")
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=90, metadata=_META)
    plt.close(fig)


def joint_errorbars(summary, path, ylabel: str = "diff [mm]") -> None:
    """Per-measurement mean +- std grouped by splint, one panel per pooled group.

    ``summary`` needs ``rows`` (dicts with side, splint_id, mu_mm, sigma_mm),
    ``pooled`` (group -> (n, mu, sigma)) and ``splints(group)``.
    """
    plt = _plt()
    sides = list(summary.pooled)
    fig, axes = plt.subplots(len(sides), 1, figsize=(8, 3.2 * len(sides)), squeeze=False,
                             constrained_layout=True)
    for ax, side in zip(axes[:, 0], sides):
        rows = [r for r in summary.rows if r["side"] == side]
        splints = summary.splints(side)
        xs, labels = [], []
        for k, sid in enumerate(splints):
            group = [r for r in rows if r["splint_id"] == sid]
            offs = np.linspace(-0.25, 0.25, len(group)) if len(group) > 1 else [0.0]
            for off, r in zip(offs, group):
                ax.errorbar(k + off, r["mu_mm"], yerr=r["sigma_mm"], fmt="o", ms=4,
                            capsize=2, color="C0")
            xs.append(k)
            labels.append(sid)
        _, mu, sigma = summary.pooled[side]
        ax.axhspan(mu - sigma, mu + sigma, color="C1", alpha=0.2, label="pooled mean +- std")
        ax.axhline(mu, color="C1", lw=1)
        ax.axhline(0.0, color="k", lw=0.8, ls="--", label="zero error")
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(ylabel)
        ax.set_title(f"{side} joint" if side in ("left", "right") else side)
        ax.legend(fontsize=7, loc="upper right")
    fig.savefig(path, dpi=90, metadata=_META)
    plt.close(fig)


def histogram_plot(hist, path, xlabel: str = "", title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(4.5, 3.2), constrained_layout=True)
    widths = np.diff(hist.edges)
    if len(widths) == 1 and widths[0] == 0:
        widths = np.array([1e-3])
    ax.bar(hist.edges[:-1], hist.counts, width=widths, align="edge", color="C0",
           edgecolor="white")
    ax.axvline(hist.mean, color="C3", ls="--", label=f"mean {hist.mean:.3f}")
    ax.axvline(hist.median, color="C2", ls="--", label=f"median {hist.median:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=90, metadata=_META)
    plt.close(fig)


def ellipsoid_plot(ellipsoid, points, mahal, path, unit: str = "") -> None:
    """95% ellipsoid with the samples, plus projections onto the PC planes.

    Points are colored by Mahalanobis distance.
    """
    plt = _plt()
    pts = np.asarray(points, dtype=float)
    fig = plt.figure(figsize=(12, 3.4), constrained_layout=True)
    ax = fig.add_subplot(1, 4, 1, projection="3d")
    s = ellipsoid.surface_points()
    ax.plot_wireframe(s[..., 0], s[..., 1], s[..., 2], color="0.6", lw=0.4)
    ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], c=mahal, cmap="plasma", s=12)
    ax.set_title(f"{ellipsoid.space} 95% ellipsoid")
    local = (pts - ellipsoid.center) @ ellipsoid.eigenvectors
    t = np.linspace(0, 2 * np.pi, 100)
    for k, (i, j) in enumerate(((0, 1), (0, 2), (1, 2))):
        a = fig.add_subplot(1, 4, k + 2)
        sc = a.scatter(local[:, i], local[:, j], c=mahal, cmap="plasma", s=12)
        a.plot(ellipsoid.r95[i] * np.cos(t), ellipsoid.r95[j] * np.sin(t), color="0.4", lw=0.8)
        a.set_xlabel(f"PC{i + 1} {unit}")
        a.set_ylabel(f"PC{j + 1} {unit}")
        a.set_aspect("equal", adjustable="datalim")
    fig.colorbar(sc, ax=a, label="Mahalanobis")
    fig.savefig(path, dpi=90, metadata=_META)
    plt.close(fig)
