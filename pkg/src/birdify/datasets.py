"""Reading, writing and synthesising trajectory and observation data.

File formats
------------
trajectories  CSV, header ``frame,id,x,y``
observations  JSON lines, keys ``frame,id,u,v,l`` (optional ``size``)
bootstrap     JSON ``{"camera": [[frame, x, y, theta], ...],
              "pedestrians": {"<id>": [[frame, x, y], ...]}}``
camera        CSV, header ``frame,x,y,theta``
posterior     CSV, header ``x,y,p``; rows sum to one
ETH/UCY       whitespace separated ``frame id x y`` rows, no header
tracker       CSV ``frame,id,x1,y1,x2,y2`` or MOT-challenge rows
              ``frame,id,left,top,width,height,...``
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateExtent, EmptyDataset, ObserverNotFound, ParseError
from .geometry import (CameraIntrinsics, CameraPose, CameraRig, DetectionState, HeightPrior,
                       RelativePosition, normalize_angle, project, world_to_camera)
from .solver import Bootstrap


@dataclass(frozen=True)
class TrajectoryRecord:
    frame_index: int
    pedestrian_id: int
    x: float
    y: float


@dataclass(frozen=True)
class ObservationRecord:
    frame_index: int
    pedestrian_id: int
    u: float
    v: float
    l: float
    size: float | None = None

    def to_detection(self) -> DetectionState:
        return DetectionState(self.u, self.v, self.l, self.pedestrian_id, self.frame_index)


# -- low-level io ------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _number(path, line, column, text, kind=float):
    try:
        v = kind(text)
    except (TypeError, ValueError):
        raise ParseError(path, line, column, f"not a number: {text!r}") from None
    if kind is float and not math.isfinite(v):
        raise ParseError(path, line, column, f"non-finite value {text!r}")
    return v


def _int(path, line, column, text):
    v = _number(path, line, column, text, float)
    if v != int(v):
        raise ParseError(path, line, column, f"not an integer: {text!r}")
    return int(v)


def _read_csv(path, columns):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyDataset(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    missing = [c for c in columns if c not in header]
    if missing:
        raise ParseError(path, 1, missing[0], "missing column")
    idx = [header.index(c) for c in columns]
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ParseError(path, n, columns[0], f"expected {len(header)} fields, got {len(row)}")
        out.append((n, [row[i].strip() for i in idx]))
    return out


# -- trajectories ------------------------------------------------------------

def _group(records):
    trajs: dict = {}
    for r in sorted(records, key=lambda r: (r.pedestrian_id, r.frame_index)):
        trajs.setdefault(r.pedestrian_id, {})[r.frame_index] = np.array([r.x, r.y])
    return trajs


def load_trajectories(path, format: str = "csv") -> dict:
    """Trajectories as ``{id: {frame: xy}}`` with ids and frames sorted."""
    path = Path(path)
    records = []
    seen = set()
    if format == "csv":
        for n, (f, i, x, y) in _read_csv(path, ("frame", "id", "x", "y")):
            records.append(TrajectoryRecord(_int(path, n, "frame", f), _int(path, n, "id", i),
                                            _number(path, n, "x", x), _number(path, n, "y", y)))
            key = (records[-1].frame_index, records[-1].pedestrian_id)
            if key in seen:
                raise ParseError(path, n, "frame", f"duplicate (frame, id) {key}")
            seen.add(key)
    elif format == "ethucy":
        with open(path) as fh:
            for n, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) < 4:
                    raise ParseError(path, n, "frame", f"expected 4 fields, got {len(parts)}")
                rec = TrajectoryRecord(_int(path, n, "frame", parts[0]), _int(path, n, "id", parts[1]),
                                       _number(path, n, "x", parts[2]), _number(path, n, "y", parts[3]))
                key = (rec.frame_index, rec.pedestrian_id)
                if key in seen:
                    raise ParseError(path, n, "frame", f"duplicate (frame, id) {key}")
                seen.add(key)
                records.append(rec)
    else:
        raise ValueError(f"unknown trajectory format {format!r}")
    if not records:
        raise EmptyDataset(f"{path} has no trajectory rows")
    return _group(records)


def reindex_frames(trajs: dict) -> dict:
    """Map the sorted distinct frame numbers onto 0, 1, 2, ... (ETH/UCY step by 10)."""
    frames = sorted({f for fr in trajs.values() for f in fr})
    remap = {f: i for i, f in enumerate(frames)}
    return {pid: {remap[f]: xy for f, xy in fr.items()} for pid, fr in trajs.items()}


def trajectory_rows(trajs: dict):
    rows = [(f, pid, float(xy[0]), float(xy[1])) for pid, fr in trajs.items() for f, xy in fr.items()]
    return sorted(rows, key=lambda r: (r[0], r[1]))


def save_trajectories(trajs: dict, path):
    atomic_write(path, _csv_text(("frame", "id", "x", "y"), trajectory_rows(trajs)))


def frames_to_trajectories(frames) -> dict:
    trajs: dict = {}
    for fr in frames:
        for p in fr.pedestrians:
            trajs.setdefault(p.pedestrian_id, {})[fr.frame_index] = np.array(p.position, float)
    return {pid: trajs[pid] for pid in sorted(trajs)}


# -- scene normalisation -------------------------------------------------------

@dataclass(frozen=True)
class SceneNormalization:
    source_min: tuple
    source_max: tuple
    target: tuple
    scale: float
    offset: tuple

    def apply(self, xy):
        return np.asarray(xy, float) * self.scale + np.asarray(self.offset)

    def invert(self, xy):
        return (np.asarray(xy, float) - np.asarray(self.offset)) / self.scale


def normalize_scene(trajs: dict, target=(-8.0, 8.0)):
    """Isotropically scale and centre the scene so its larger extent spans ``target``."""
    pts = np.array([xy for fr in trajs.values() for xy in fr.values()], float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyDataset("no positions to normalise")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    if not extent > 1e-12:
        raise DegenerateExtent("scene has zero extent")
    scale = (target[1] - target[0]) / extent
    centre_t = 0.5 * (target[0] + target[1])
    offset = centre_t - scale * 0.5 * (lo + hi)
    norm = SceneNormalization(tuple(lo), tuple(hi), tuple(target), scale, tuple(offset))
    out = {pid: {f: norm.apply(xy) for f, xy in fr.items()} for pid, fr in trajs.items()}
    return out, norm


# -- camera / observations / bootstrap io ------------------------------------

def save_camera(camera: dict, path):
    rows = []
    for f in sorted(camera):
        c = camera[f]
        x, y, th = (c.x, c.y, c.theta) if isinstance(c, CameraPose) else c
        rows.append((f, float(x), float(y), float(th)))
    atomic_write(path, _csv_text(("frame", "x", "y", "theta"), rows))


def load_camera(path) -> dict:
    path = Path(path)
    out = {}
    for n, (f, x, y, th) in _read_csv(path, ("frame", "x", "y", "theta")):
        out[_int(path, n, "frame", f)] = np.array([_number(path, n, "x", x), _number(path, n, "y", y),
                                                   _number(path, n, "theta", th)])
    return dict(sorted(out.items()))


def save_observations(observations: dict, path):
    lines = []
    for f in sorted(observations):
        for d in sorted(observations[f], key=lambda d: d.pedestrian_id):
            lines.append(json.dumps({"frame": int(f), "id": int(d.pedestrian_id), "u": float(d.u),
                                     "v": float(d.v), "l": float(d.l)}))
    atomic_write(path, "".join(line + "\n" for line in lines))


def load_observations(path) -> dict:
    """Observations as ``{frame: [DetectionState, ...]}`` sorted by frame then id."""
    path = Path(path)
    recs = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, n, "-", f"invalid JSON: {exc.msg}") from None
            vals = {}
            for key in ("frame", "id", "u", "v", "l"):
                if key not in obj:
                    raise ParseError(path, n, key, "missing key")
                vals[key] = (_int if key in ("frame", "id") else _number)(path, n, key, obj[key])
            if vals["l"] <= 0:
                raise ParseError(path, n, "l", "apparent height must be positive")
            recs.append(ObservationRecord(vals["frame"], vals["id"], vals["u"], vals["v"], vals["l"],
                                          obj.get("size")))
    out: dict = {}
    for r in sorted(recs, key=lambda r: (r.frame_index, r.pedestrian_id)):
        out.setdefault(r.frame_index, []).append(r.to_detection())
    return out


def save_bootstrap(boot: Bootstrap, path):
    obj = {"camera": [[int(f), float(p.x), float(p.y), float(p.theta)] for f, p in sorted(boot.camera.items())],
           "pedestrians": {str(pid): [[int(f), float(xy[0]), float(xy[1])] for f, xy in sorted(fr.items())]
                           for pid, fr in sorted(boot.pedestrians.items())}}
    atomic_write(path, json.dumps(obj, indent=1) + "\n")


def load_bootstrap(path) -> Bootstrap:
    path = Path(path)
    with open(path) as fh:
        obj = json.load(fh)
    cam = {}
    for row in obj.get("camera", []):
        f, x, y, th = row
        cam[int(f)] = CameraPose(float(x), float(y), float(th))
    peds = {}
    for pid, rows in obj.get("pedestrians", {}).items():
        peds[int(pid)] = {int(f): np.array([float(x), float(y)]) for f, x, y in rows}
    for v in [c.as_array() for c in cam.values()] + [xy for fr in peds.values() for xy in fr.values()]:
        if not np.all(np.isfinite(v)):
            raise ParseError(path, 0, "-", "non-finite bootstrap coordinate")
    return Bootstrap(cam, peds)


def load_tracker_boxes(path, format: str = "xyxy") -> dict:
    """Tracker boxes mapped to detections: ``u, v`` = box centre, ``l`` = box height."""
    path = Path(path)
    recs = []
    if format == "xyxy":
        for n, (f, i, x1, y1, x2, y2) in _read_csv(path, ("frame", "id", "x1", "y1", "x2", "y2")):
            x1, y1, x2, y2 = (_number(path, n, c, v) for c, v in zip(("x1", "y1", "x2", "y2"), (x1, y1, x2, y2)))
            recs.append((_int(path, n, "frame", f), _int(path, n, "id", i), x1, y1, x2, y2))
    elif format == "mot":
        with open(path, newline="") as fh:
            for n, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) < 6:
                    raise ParseError(path, n, "frame", f"expected >= 6 fields, got {len(row)}")
                f, i = _int(path, n, "frame", row[0]), _int(path, n, "id", row[1])
                left, top, w, h = (_number(path, n, c, v) for c, v in zip(("left", "top", "width", "height"), row[2:6]))
                recs.append((f, i, left, top, left + w, top + h))
    else:
        raise ValueError(f"unknown tracker format {format!r}")
    out: dict = {}
    for f, i, x1, y1, x2, y2 in sorted(recs):
        if y2 - y1 <= 0:
            raise ParseError(path, 0, "y2", f"non-positive box height for id {i} at frame {f}")
        out.setdefault(f, []).append(DetectionState((x1 + x2) / 2, (y1 + y2) / 2, y2 - y1, i, f))
    if not out:
        raise EmptyDataset(f"{path} has no boxes")
    return out


def save_posterior(grid, path):
    rows = [(float(x), float(y), float(grid.prob[iy, ix]))
            for iy, y in enumerate(grid.ys) for ix, x in enumerate(grid.xs)]
    atomic_write(path, _csv_text(("x", "y", "p"), rows))


def load_posterior(path):
    path = Path(path)
    rows = [(_number(path, n, "x", x), _number(path, n, "y", y), _number(path, n, "p", p))
            for n, (x, y, p) in _read_csv(path, ("x", "y", "p"))]
    xs = np.array(sorted({r[0] for r in rows}))
    ys = np.array(sorted({r[1] for r in rows}))
    prob = np.zeros((len(ys), len(xs)))
    for x, y, p in rows:
        prob[np.searchsorted(ys, y), np.searchsorted(xs, x)] = p
    return xs, ys, prob


# -- observation synthesis -----------------------------------------------------

@dataclass
class Synthesis:
    observations: dict  # frame -> [DetectionState]
    bootstrap: Bootstrap
    camera: dict  # frame -> np.array([x, y, theta])
    heights: dict  # id -> sampled height
    observer_id: int


def observer_headings(track: dict, initial_heading: float = 0.0) -> dict:
    """Heading of a walking observer: direction of its velocity over a two-frame window.

    Stationary frames keep the previous heading.
    """
    frames = sorted(track)
    out = {}
    heading = initial_heading
    for n, f in enumerate(frames):
        a = track[frames[max(n - 1, 0)]]
        b = track[frames[min(n + 1, len(frames) - 1)]]
        v = np.asarray(b, float) - np.asarray(a, float)
        if np.hypot(*v) > 1e-9:
            heading = float(np.arctan2(v[0], v[1]))
        out[f] = normalize_angle(heading)
    return out


def _visible(z, kind, fov_deg, near):
    if kind == "perspective":
        if z[1] <= near:
            return False
        half = math.radians(min(fov_deg, 179.999)) / 2 if fov_deg is not None else None
        return half is None or abs(math.atan2(z[0], z[1])) <= half
    if np.hypot(*z) <= near:
        return False
    if fov_deg is None or fov_deg >= 360:
        return True
    return abs(math.atan2(z[0], z[1])) <= math.radians(fov_deg) / 2


def _segments(frames):
    segs, cur = [], []
    for f in frames:
        if cur and f != cur[-1] + 1:
            segs.append(cur)
            cur = []
        cur.append(f)
    if cur:
        segs.append(cur)
    return segs


def synthesize_observations(trajs: dict, observer_id, rig: CameraRig, intrinsics: CameraIntrinsics,
                            prior: HeightPrior, fov_deg: float | None = 360.0, seed: int = 0,
                            initial_heading: float = 0.0, near: float = 0.5,
                            occlusion: bool = False, aspect: float = 0.41) -> Synthesis:
    """Render what an observer walking along ``trajs[observer_id]`` would detect.

    Heights are drawn once per track. With a perspective rig a field of view
    of 180 degrees or more means the whole half-plane in front of the camera.
    ``fov_deg=None`` falls back to the image bounds. Bootstrap positions are
    emitted for the first two frames of every visible stretch of every track.
    """
    if observer_id not in trajs:
        raise ObserverNotFound(observer_id)
    rng = np.random.default_rng(seed)
    others = [pid for pid in sorted(trajs) if pid != observer_id]
    draws = rng.normal(prior.mean, prior.std, size=len(others)) if prior.std > 0 else np.full(len(others), prior.mean)
    heights = {pid: float(h) for pid, h in zip(others, np.maximum(draws, 0.5))}
    track = trajs[observer_id]
    heads = observer_headings(track, initial_heading)
    frames = sorted(track)
    camera = {f: np.array([track[f][0], track[f][1], heads[f]], float) for f in frames}
    observations: dict = {f: [] for f in frames}
    seen: dict = {}
    for f in frames:
        pose_xy, th = camera[f][:2], camera[f][2]
        dets = []
        for pid in others:
            if f not in trajs[pid]:
                continue
            z = world_to_camera(trajs[pid][f], pose_xy, th)
            if not _visible(z, rig.projection, fov_deg, near):
                continue
            d = project(RelativePosition(float(z[0]), float(z[1])), intrinsics, heights[pid], rig.projection)
            if fov_deg is None and not d.in_view:
                continue
            dets.append((float(np.hypot(*z)), DetectionState(d.u, d.v, d.l, pid, f)))
        if occlusion:
            dets = _drop_occluded(dets, aspect, rig.projection, intrinsics)
        observations[f] = [d for _, d in sorted(dets, key=lambda t: t[1].pedestrian_id)]
        for d in observations[f]:
            seen.setdefault(d.pedestrian_id, []).append(f)
    boot_peds: dict = {}
    for pid, fs in seen.items():
        for seg in _segments(fs):
            for f in seg[:2]:
                boot_peds.setdefault(pid, {})[f] = np.asarray(trajs[pid][f], float).copy()
    boot_cam = {f: CameraPose(*camera[f]) for f in frames[:2]}
    return Synthesis(observations, Bootstrap(boot_cam, dict(sorted(boot_peds.items()))), camera,
                     heights, observer_id)


def _drop_occluded(dets, aspect, kind, intr):
    """Drop the farther of two detections whose image intervals overlap by more than 70%."""
    order = sorted(dets, key=lambda t: t[0])
    kept = []
    for dist, d in order:
        w = aspect * d.l
        occluded = False
        for _, k in kept:
            wk = aspect * k.l
            du = abs(d.u - k.u)
            if kind == "cylindrical":
                du = min(du, intr.width - du)
            overlap = max(0.0, min(du + w / 2, wk / 2) - max(du - w / 2, -wk / 2))
            if overlap > 0.7 * w:
                occluded = True
                break
        if not occluded:
            kept.append((dist, d))
    return kept


def ground_truth_estimated_part(trajs: dict, result_peds: dict) -> dict:
    """Ground truth restricted to the (id, frame) pairs present in an estimate."""
    return {pid: {f: trajs[pid][f] for f in fr} for pid, fr in result_peds.items()}
