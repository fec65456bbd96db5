"""Deterministic SVG figures: bird's-eye overlays and posterior heatmaps.

Polylines carry SVG ids (``gid``) so tests and downstream tools can find
them: ``est-camera``, ``est-ped-<id>``, ``gt-camera``, ``gt-ped-<id>``.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import datasets  # noqa: E402
from .errors import EmptyDataset  # noqa: E402

_RC = {"svg.hashsalt": "birdify", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return Path(path)


def _polyline(ax, track, gid, **kw):
    frames = sorted(track)
    pts = np.array([track[f][:2] for f in frames], float).reshape(-1, 2)
    (line,) = ax.plot(pts[:, 0], pts[:, 1], **kw)
    line.set_gid(gid)
    return line


def overlay(path, est_camera=None, est_peds=None, gt_camera=None, gt_peds=None, title=None):
    """Estimated (solid) over ground-truth (grey) trajectories, one polyline each."""
    est_camera, est_peds = est_camera or {}, est_peds or {}
    gt_camera, gt_peds = gt_camera or {}, gt_peds or {}
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 6))
        for pid in sorted(gt_peds):
            _polyline(ax, gt_peds[pid], f"gt-ped-{pid}", color="0.75", lw=1.0)
        if gt_camera:
            _polyline(ax, gt_camera, "gt-camera", color="0.4", lw=1.5, ls="--")
        cmap = plt.get_cmap("tab20")
        for n, pid in enumerate(sorted(est_peds)):
            _polyline(ax, est_peds[pid], f"est-ped-{pid}", color=cmap(n % 20), lw=1.2)
        if est_camera:
            _polyline(ax, est_camera, "est-camera", color="red", lw=2.0)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
    return _save(fig, path)


def heatmap(path, xs, ys, prob, truth=None, title=None):
    """Camera posterior over a position grid."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4.5))
        if len(xs) and len(ys):
            dx = (xs[1] - xs[0]) / 2 if len(xs) > 1 else 0.5
            dy = (ys[1] - ys[0]) / 2 if len(ys) > 1 else 0.5
            im = ax.imshow(prob, origin="lower", cmap="viridis", interpolation="nearest",
                           extent=(xs[0] - dx, xs[-1] + dx, ys[0] - dy, ys[-1] + dy))
            im.set_gid("posterior")
            fig.colorbar(im, ax=ax, label="p")
        if truth is not None:
            (m,) = ax.plot([truth[0]], [truth[1]], marker="^", color="red", ls="none")
            m.set_gid("gt-camera")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
    return _save(fig, path)


def _maybe(loader, path):
    try:
        return loader(path) if Path(path).exists() else {}
    except EmptyDataset:
        return {}


def plot_sequence(seq) -> list:
    """Overlay plus one heatmap per ``posterior_<f>.csv`` found in ``seq``."""
    seq = Path(seq)
    gt_peds = _maybe(datasets.load_trajectories, seq / "trajectories.csv")
    gt_cam = _maybe(datasets.load_camera, seq / "camera_gt.csv")
    est_cam = _maybe(datasets.load_camera, seq / "est_camera.csv")
    est_peds = _maybe(datasets.load_trajectories, seq / "est_pedestrians.csv")
    observer = None
    if gt_cam and gt_peds:
        # the observer's own track is drawn as the camera, not as a pedestrian
        for pid, tr in gt_peds.items():
            if all(f in tr and np.allclose(tr[f], gt_cam[f][:2]) for f in gt_cam):
                observer = pid
                break
    gt_others = {p: t for p, t in gt_peds.items() if p != observer}
    out = [overlay(seq / "overlay.svg", est_cam, est_peds, gt_cam, gt_others, title=seq.name)]
    for post in sorted(seq.glob("posterior_*.csv")):
        f = int(post.stem.split("_")[1])
        xs, ys, prob = datasets.load_posterior(post)
        truth = gt_cam.get(f)
        out.append(heatmap(post.with_suffix(".svg"), xs, ys, prob, truth, title=f"frame {f}"))
    return out
