"""Trajectory errors for the observer and the pedestrians it reconstructs.

Trajectories are plain mappings: the camera as ``{frame: (x, y[, theta])}``
and pedestrians as ``{id: {frame: (x, y)}}``. Pedestrian errors are taken
over the (id, frame) pairs present in the estimate; ground-truth entries
the estimate never covered are only counted in ``coverage``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IdMismatch, LengthMismatch


def _aligned(est, gt):
    if isinstance(est, dict):
        if set(est) != set(gt):
            raise LengthMismatch(f"frame sets differ: {sorted(set(est) ^ set(gt))[:5]}")
        keys = sorted(est)
        return [est[k] for k in keys], [gt[k] for k in keys]
    if len(est) != len(gt):
        raise LengthMismatch(f"{len(est)} estimated vs {len(gt)} ground-truth frames")
    return list(est), list(gt)


def translation_errors(est, gt) -> np.ndarray:
    e, g = _aligned(est, gt)
    if not e:
        return np.zeros(0)
    e = np.array([np.asarray(p, float)[:2] for p in e])
    g = np.array([np.asarray(p, float)[:2] for p in g])
    return np.linalg.norm(e - g, axis=1)


def translation_error(est, gt) -> float:
    """Mean observer position error in metres."""
    errs = translation_errors(est, gt)
    return float(errs.mean()) if len(errs) else 0.0


def angle_difference(a, b):
    """Geodesic distance on SO(2), in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a, float) - np.asarray(b, float) + math.pi, 2 * math.pi) - math.pi)
    return d


def rotation_errors(est, gt) -> np.ndarray:
    e, g = _aligned(est, gt)
    return angle_difference(np.array(e, float).reshape(-1), np.array(g, float).reshape(-1))


def rotation_error(est, gt) -> float:
    """Mean absolute heading error in radians."""
    errs = rotation_errors(est, gt)
    return float(errs.mean()) if len(errs) else 0.0


def _matched_pairs(est, gt):
    pairs = []
    for pid in sorted(est):
        if pid not in gt:
            raise IdMismatch(f"pedestrian {pid} not in ground truth")
        for f in sorted(est[pid]):
            if f not in gt[pid]:
                raise IdMismatch(f"pedestrian {pid} has no ground truth at frame {f}")
            pairs.append((pid, f))
    return pairs


def absolute_localization_errors(est, gt) -> np.ndarray:
    pairs = _matched_pairs(est, gt)
    if not pairs:
        return np.zeros(0)
    e = np.array([np.asarray(est[p][f], float) for p, f in pairs])
    g = np.array([np.asarray(gt[p][f], float) for p, f in pairs])
    return np.linalg.norm(e - g, axis=1)


def absolute_localization_error(est, gt) -> float:
    errs = absolute_localization_errors(est, gt)
    return float(errs.mean()) if len(errs) else 0.0


def relative_localization_errors(est, gt, est_camera, gt_camera) -> np.ndarray:
    pairs = _matched_pairs(est, gt)
    out = []
    for p, f in pairs:
        if f not in est_camera or f not in gt_camera:
            raise IdMismatch(f"camera missing at frame {f}")
        re = np.asarray(est[p][f], float) - np.asarray(est_camera[f], float)[:2]
        rg = np.asarray(gt[p][f], float) - np.asarray(gt_camera[f], float)[:2]
        out.append(np.linalg.norm(re - rg))
    return np.array(out)


def relative_localization_error(est, gt, est_camera, gt_camera) -> float:
    """Mean error of pedestrian positions relative to the observer."""
    errs = relative_localization_errors(est, gt, est_camera, gt_camera)
    return float(errs.mean()) if len(errs) else 0.0


@dataclass
class SequenceErrors:
    dt: float
    dr: float
    dx: float
    dx_rel: float
    per_frame: dict = field(default_factory=dict)  # name -> np.ndarray per-frame means
    counts: dict = field(default_factory=dict)

    def std(self, name):
        v = self.per_frame.get(name, np.zeros(0))
        return float(np.std(v)) if len(v) else 0.0


def _per_frame_mean(errs, frames):
    out = {}
    for e, f in zip(errs, frames):
        out.setdefault(f, []).append(e)
    return np.array([np.mean(out[f]) for f in sorted(out)])


def evaluate_sequence(est_camera, gt_camera, est_peds, gt_peds) -> SequenceErrors:
    """All four errors for one sequence.

    ``*_camera`` map frame -> (x, y, theta); only frames present in
    ``est_camera`` are scored. Per-frame series feed the reported std.
    """
    frames = sorted(est_camera)
    missing = [f for f in frames if f not in gt_camera]
    if missing:
        raise LengthMismatch(f"no ground-truth camera at frames {missing[:5]}")
    ec = {f: est_camera[f] for f in frames}
    gc = {f: gt_camera[f] for f in frames}
    t_err = translation_errors({f: ec[f][:2] for f in frames}, {f: gc[f][:2] for f in frames})
    r_err = rotation_errors({f: ec[f][2] for f in frames}, {f: gc[f][2] for f in frames})
    pairs = _matched_pairs(est_peds, gt_peds)
    pf = [f for _, f in pairs]
    a_err = absolute_localization_errors(est_peds, gt_peds)
    r_rel = relative_localization_errors(est_peds, gt_peds, ec, gc)
    gt_pairs = sum(len([f for f in fr if f in ec]) for fr in gt_peds.values())
    mean = lambda a: float(a.mean()) if len(a) else 0.0  # noqa: E731
    return SequenceErrors(
        dt=mean(t_err), dr=mean(r_err), dx=mean(a_err), dx_rel=mean(r_rel),
        per_frame={"dt": t_err, "dr": r_err, "dx": _per_frame_mean(a_err, pf),
                   "dx_rel": _per_frame_mean(r_rel, pf)},
        counts={"frames": len(frames), "pairs": len(pairs), "gt_pairs": gt_pairs,
                "coverage": len(pairs) / gt_pairs if gt_pairs else 1.0})


COLUMNS = (("dr", "Δr [rad]"), ("dt", "Δt [m]"), ("dx_rel", "Δx̃ [m]"), ("dx", "Δx [m]"))


def format_table(rows) -> str:
    """Table of ``(name, SequenceErrors)`` rows, ``mean ± per-frame std`` per cell."""
    header = ["sequence"] + [label for _, label in COLUMNS]
    lines = [header]
    for name, err in rows:
        lines.append([name] + [f"{getattr(err, key):.3f} ± {err.std(key):.3f}" for key, _ in COLUMNS])
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    out = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in lines]
    out.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n# ± is the standard deviation over frames\n"
