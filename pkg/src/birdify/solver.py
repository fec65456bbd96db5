"""Cascaded per-frame MAP estimation of observer and pedestrian positions.

Each frame is solved in two stages. The observer's ego-motion is found by
gradient descent on the camera energy with every pedestrian pinned to a
single height hypothesis; then, with the pose fixed, every pedestrian picks
one of ``S`` height hypotheses along its viewing ray by min-sum message
passing over the pairwise interaction graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .crowd import (MODELS, InteractionModel, SocialForceParams, desired_forces, motion_unary,
                    second_difference)
from .errors import (InsufficientHistory, MissingBootstrap, NoDetections, NonMonotonicFrames,
                     SearchSpaceTooLarge)
from .geometry import (CameraIntrinsics, CameraPose, DetectionState, EgoMotion, HeightPrior,
                       ProjectionKind, apply_ego_motion, camera_to_world, ray_directions,
                       world_to_camera)

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class BirdifyConfig:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics.default)
    projection: ProjectionKind = "perspective"
    prior: HeightPrior = field(default_factory=HeightPrior)
    num_samples: int | None = None  # None: cover +-4 sigma_h at spacing delta
    delta: float = 0.01
    mp_max_iter: int = 50
    mp_damping: float = 0.5
    mp_tol: float = 1e-9
    gd_step: float = 0.05
    gd_max_iter: int = 200
    gd_tol: float = 1e-6
    model: InteractionModel = "socialforce"
    params: SocialForceParams = field(default_factory=SocialForceParams)
    epsilon: float | None = None
    aspect: float = 0.41  # bounding-box width / height
    max_selected: int | None = None
    ego_prior: Literal["none", "crowd"] = "none"
    ego_height: Literal["resolved", "prior"] = "resolved"
    pair_cutoff: float | None = 6.0
    refine_heights: bool = True  # continuous height polish around the chosen candidate

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown interaction model {self.model!r}")
        if self.ego_prior not in ("none", "crowd"):
            raise ValueError(f"unknown ego prior mode {self.ego_prior!r}")
        if self.ego_height not in ("resolved", "prior"):
            raise ValueError(f"unknown ego height mode {self.ego_height!r}")
        if min(self.mp_max_iter, self.gd_max_iter) < 1:
            raise ValueError("iteration caps must be >= 1")
        if not (self.mp_tol > 0 and self.gd_tol > 0 and self.gd_step > 0 and self.delta > 0):
            raise ValueError("tolerances and step sizes must be positive")
        if not 0 <= self.mp_damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if self.num_samples is not None and self.prior.std > 0:
            if self.num_samples < 3 or self.num_samples % 2 == 0:
                raise ValueError("num_samples must be odd and >= 3")

    @property
    def samples(self) -> int:
        if self.prior.std == 0:
            return 1
        if self.num_samples is not None:
            return self.num_samples
        half = math.ceil(4.0 * self.prior.std / self.delta - 1e-9)
        return 2 * min(half, 50) + 1

    def candidate_heights(self) -> np.ndarray:
        S = self.samples
        return self.prior.mean + self.delta * (np.arange(S) - (S - 1) / 2)


@dataclass
class CandidateSet:
    pedestrian_id: int
    heights: np.ndarray
    positions: np.ndarray  # (S, 2) world frame
    nll: np.ndarray


@dataclass
class History:
    """Two previous frames: camera poses and world positions, oldest first."""

    camera: tuple  # (CameraPose at t-2, CameraPose at t-1)
    tracks: dict  # id -> (xy at t-2, xy at t-1)
    heights: dict = field(default_factory=dict)  # id -> last resolved height


@dataclass
class FrameEstimate:
    frame_index: int
    pose: CameraPose
    positions: dict  # id -> np.ndarray(2,)
    heights: dict  # id -> resolved height
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EgoResult:
    motion: EgoMotion
    energy: float
    gradient: np.ndarray
    iterations: int
    status: str  # converged | max_iter | stalled | no_detections


@dataclass
class Bootstrap:
    camera: dict  # frame -> CameraPose
    pedestrians: dict  # id -> {frame: (x, y)}


# -- observation model -----------------------------------------------------

def observation_nll(h, prior: HeightPrior):
    """Negative log height likelihood, dropping the normalising constant.

    A zero ``std`` means a point mass at the mean; every height then costs 0
    and only the mean is ever sampled.
    """
    h = np.asarray(h, float)
    if prior.std == 0:
        out = np.zeros_like(h)
    else:
        out = (h - prior.mean) ** 2 / (2.0 * prior.std**2)
    return float(out) if out.ndim == 0 else out


def sample_candidates(s: DetectionState, pose: CameraPose, cfg: BirdifyConfig) -> CandidateSet:
    heights = cfg.candidate_heights()
    ray = ray_directions(s.u, s.l, cfg.intrinsics, cfg.projection)
    pos = camera_to_world(heights[:, None] * ray[None, :], (pose.x, pose.y), pose.theta)
    return CandidateSet(s.pedestrian_id, heights, pos, observation_nll(heights, cfg.prior))


def select_neighbors(detections: Sequence[DetectionState], epsilon: float | None,
                     aspect: float = 0.41, max_selected: int | None = None) -> list:
    """Detections whose box area ``aspect * l**2`` is at least ``epsilon``.

    ``max_selected`` additionally keeps only the largest boxes. Input order
    is preserved; an empty result is allowed.
    """
    dets = list(detections)
    if epsilon is not None:
        dets = [d for d in dets if aspect * d.l * d.l >= epsilon]
    if max_selected is not None and len(dets) > max_selected:
        order = sorted(range(len(dets)), key=lambda i: (-dets[i].l, i))[:max_selected]
        keep = set(order)
        dets = [d for i, d in enumerate(dets) if i in keep]
    return dets


# -- per-frame problem -----------------------------------------------------

@dataclass
class _Problem:
    ids: list
    rays: np.ndarray  # (K, 2) camera-frame position per metre of height
    prev: np.ndarray  # (K, 2)
    prev2: np.ndarray  # (K, 2)
    f_p: np.ndarray | None  # (K, 2) desired forces
    ego_h: np.ndarray  # (K,) heights used while estimating ego-motion
    cam_prev: CameraPose
    cam_prev2: CameraPose
    cam_f_p: np.ndarray | None  # camera's own desired force (crowd prior)


def _build_problem(detections, history: History, cfg: BirdifyConfig) -> _Problem:
    if len(history.camera) != 2:
        raise InsufficientHistory("camera history needs two poses")
    ids, rays, prev, prev2, ego_h = [], [], [], [], []
    for d in detections:
        tr = history.tracks.get(d.pedestrian_id)
        if tr is None:
            raise InsufficientHistory(f"pedestrian {d.pedestrian_id} has no history")
        ids.append(d.pedestrian_id)
        rays.append(ray_directions(d.u, d.l, cfg.intrinsics, cfg.projection))
        prev2.append(tr[0])
        prev.append(tr[1])
        h = cfg.prior.mean
        if cfg.ego_height == "resolved" and cfg.prior.std > 0:
            h = history.heights.get(d.pedestrian_id, h)
        ego_h.append(h)
    K = len(ids)
    prev = np.array(prev, float).reshape(K, 2)
    prev2 = np.array(prev2, float).reshape(K, 2)
    cam2, cam1 = history.camera
    f_p = cam_f_p = None
    p = cfg.params
    if cfg.model == "socialforce":
        vel = (prev - prev2) / p.dt
        if cfg.ego_prior == "crowd":
            cpos = np.vstack([prev, cam1.position])
            cvel = np.vstack([vel, (cam1.position - cam2.position) / p.dt])
            allf = desired_forces(cpos, cvel, p.eta, p.radius)
            f_p, cam_f_p = allf[:K], allf[K]
        else:
            f_p = desired_forces(prev, vel, p.eta, p.radius)
    return _Problem(ids, np.array(rays, float).reshape(K, 2), prev, prev2, f_p,
                    np.array(ego_h, float), cam1, cam2, cam_f_p)


def _pose_after(prob: _Problem, d) -> tuple:
    return (prob.cam_prev.x + d[0], prob.cam_prev.y + d[1]), prob.cam_prev.theta + d[2]


def _ego_energy_grad(prob: _Problem, d, cfg: BirdifyConfig, with_grad=True):
    """Camera energy and its gradient in (dx, dy, dtheta)."""
    dt = cfg.params.dt
    xy, theta = _pose_after(prob, d)
    z = prob.rays * prob.ego_h[:, None]
    x = camera_to_world(z, xy, theta)
    acc = second_difference(x, prob.prev, prob.prev2, dt)
    c, s = math.cos(theta), math.sin(theta)
    # d x / d theta of R^T z
    dxdth = np.stack([-s * z[:, 0] + c * z[:, 1], -c * z[:, 0] - s * z[:, 1]], axis=-1)
    g = np.zeros(3)
    if cfg.model == "constvel":
        e = float(np.sum(acc * acc))
        if with_grad:
            dedx = 2.0 * acc / dt**2
    else:
        r = prob.f_p - acc
        n = np.linalg.norm(r, axis=1)
        e = float(np.sum(n))
        if with_grad:
            safe = np.where(n > 0, n, 1.0)
            dedx = np.where(n[:, None] > 0, -r / safe[:, None], 0.0) / dt**2
    gscale = 0.0
    if with_grad and len(x):
        g[:2] = dedx.sum(axis=0)
        g[2] = float(np.sum(dedx * dxdth))
        gscale = float(np.sum(np.linalg.norm(dedx, axis=1)))
    if cfg.ego_prior == "crowd":
        p0 = np.asarray(xy)
        a0 = second_difference(p0, prob.cam_prev.position, prob.cam_prev2.position, dt)
        if cfg.model == "constvel":
            e += float(a0 @ a0)
            g[:2] += 2.0 * a0 / dt**2
            gscale += float(np.linalg.norm(2.0 * a0)) / dt**2
        else:
            r0 = prob.cam_f_p - a0
            n0 = float(np.linalg.norm(r0))
            e += n0
            if n0 > 0:
                g[:2] += -r0 / n0 / dt**2
                gscale += 1.0 / dt**2
    if with_grad:
        return e, g, gscale
    return e, g


def _ego_constant_terms(prob: _Problem, cfg: BirdifyConfig, d) -> float:
    """Terms of the camera energy that do not move with the ego-motion."""
    e = float(np.sum(observation_nll(prob.ego_h, cfg.prior))) if cfg.prior.std > 0 else 0.0
    if cfg.model == "socialforce" and len(prob.ids) > 1:
        xy, theta = _pose_after(prob, d)
        x = camera_to_world(prob.rays * prob.ego_h[:, None], xy, theta)
        diff = x[:, None, :] - x[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        mag = kernels._INV_SQRT_2PI / math.sqrt(cfg.params.sigma2) * np.exp(
            -r * r / (2 * cfg.params.sigma2)) * r / cfg.params.sigma2
        e += float(np.sum(np.triu(mag, 1)))
    return e


def ego_energy(d: EgoMotion, detections: Sequence[DetectionState], history: History,
               cfg: BirdifyConfig) -> float:
    """Camera energy of ego-motion ``d`` with pedestrians at their ego-stage heights."""
    prob = _build_problem(detections, history, cfg)
    arr = d.as_array()
    return _ego_energy_grad(prob, arr, cfg, with_grad=False)[0] + _ego_constant_terms(prob, cfg, arr)


def ego_energy_gradient(d: EgoMotion, detections, history: History, cfg: BirdifyConfig) -> np.ndarray:
    prob = _build_problem(detections, history, cfg)
    return _ego_energy_grad(prob, d.as_array(), cfg)[1]


def _descend(prob: _Problem, cfg: BirdifyConfig, d0=None) -> EgoResult:
    """Preconditioned gradient descent with Armijo backtracking.

    The heading coordinate is scaled by the RMS pedestrian range so that a
    unit step moves the scene by roughly a metre in every coordinate.
    """
    z = prob.rays * prob.ego_h[:, None]
    L = max(1.0, float(np.sqrt(np.mean(np.sum(z * z, axis=1))))) if len(z) else 1.0
    scale = np.array([1.0, 1.0, 1.0 / L])
    d = np.zeros(3) if d0 is None else np.asarray(d0, float).copy()
    e, g, gscale = _ego_energy_grad(prob, d, cfg)
    # tolerance is relative to the summed size of the per-term gradients,
    # the floating-point floor of the total
    gtol = cfg.gd_tol * max(1.0, gscale)
    step = cfg.gd_step
    status = "max_iter"
    it = 0
    while it < cfg.gd_max_iter:
        gq = g * scale
        gn = float(np.linalg.norm(gq))
        if gn < gtol:
            status = "converged"
            break
        it += 1
        while True:
            cand = d - step * gq * scale
            e_new, g_new, _ = _ego_energy_grad(prob, cand, cfg)
            if e_new <= e - 1e-4 * step * gn * gn:
                break
            step *= 0.5
            if step < 1e-18:
                break
        if step < 1e-18:
            status = "stalled"
            break
        # Barzilai-Borwein trial step for the next iteration
        s_q = (cand - d) / scale
        y_q = (g_new - g) * scale
        sy = float(s_q @ y_q)
        step = float(s_q @ s_q) / sy if sy > 0 else 2.0 * step
        d, e, g = cand, e_new, g_new
    return EgoResult(EgoMotion(*map(float, d)), e, g, it, status)


def estimate_ego_motion(detections: Sequence[DetectionState], history: History,
                        cfg: BirdifyConfig) -> EgoResult:
    """Ego-motion from the previous pose, starting at zero motion."""
    if not detections:
        raise NoDetections("no detections with history in this frame")
    prob = _build_problem(detections, history, cfg)
    res = _descend(prob, cfg)
    res.energy += _ego_constant_terms(prob, cfg, res.motion.as_array())
    return res


# -- localisation ----------------------------------------------------------

def _candidates(prob: _Problem, pose: CameraPose, cfg: BirdifyConfig):
    heights = cfg.candidate_heights()
    z = heights[None, :, None] * prob.rays[:, None, :]
    return heights, camera_to_world(z, (pose.x, pose.y), pose.theta)


def _unary(prob: _Problem, cand, heights, cfg: BirdifyConfig):
    f_p = None if prob.f_p is None else prob.f_p[:, None, :]
    u = motion_unary(cand, prob.prev[:, None, :], prob.prev2[:, None, :], cfg.model,
                     cfg.params.dt, f_p)
    return u + observation_nll(heights, cfg.prior)[None, :]


def _edges(cand, cfg: BirdifyConfig):
    K = cand.shape[0]
    if cfg.model != "socialforce" or K < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    ei, ej = np.triu_indices(K, 1)
    if cfg.pair_cutoff is not None:
        # drop pairs whose candidate sets never come within the cutoff
        centre = cand.mean(axis=1)
        spread = np.linalg.norm(cand - centre[:, None, :], axis=2).max(axis=1)
        gap = np.linalg.norm(centre[ei] - centre[ej], axis=1) - spread[ei] - spread[ej]
        keep = gap <= cfg.pair_cutoff
        ei, ej = ei[keep], ej[keep]
    return ei.astype(np.int64), ej.astype(np.int64)


def _frame_graph(detections, pose, history, cfg):
    prob = _build_problem(detections, history, cfg)
    heights, cand = _candidates(prob, pose, cfg)
    unary = _unary(prob, cand, heights, cfg)
    ei, ej = _edges(cand, cfg)
    pair = kernels.gaussian_force_table(cand, ei, ej, cfg.params.sigma2)
    return prob, heights, cand, unary, ei, ej, pair


def _estimate_from_labels(frame_index, pose, prob, heights, cand, labels, diag):
    positions = {i: cand[k, labels[k]].copy() for k, i in enumerate(prob.ids)}
    hs = {i: float(heights[labels[k]]) for k, i in enumerate(prob.ids)}
    return FrameEstimate(frame_index, pose, positions, hs, diag)


def _localize(detections, pose, history, cfg, frame_index):
    prob, heights, cand, unary, ei, ej, pair = _frame_graph(detections, pose, history, cfg)
    if len(prob.ids) == 0:
        est = FrameEstimate(frame_index, pose, {}, {}, {"mp_iterations": 0, "mp_converged": True,
                                                         "localization_energy": 0.0})
        return est, prob, heights, cand, np.zeros(0, np.int64), ei, ej
    labels, _, it, conv = kernels.minsum(unary, ei, ej, pair, cfg.mp_damping, cfg.mp_tol,
                                         cfg.mp_max_iter)
    energy = kernels.labeling_energy(labels, unary, ei, ej, pair)
    diag = {"mp_iterations": it, "mp_converged": conv, "localization_energy": float(energy),
            "edges": int(len(ei))}
    est = _estimate_from_labels(frame_index, pose, prob, heights, cand, labels, diag)
    return est, prob, heights, cand, labels, ei, ej


def localize_pedestrians(detections: Sequence[DetectionState], pose: CameraPose, history: History,
                         cfg: BirdifyConfig, frame_index: int = -1) -> FrameEstimate:
    """Per-pedestrian candidate choice by damped synchronous min-sum."""
    return _localize(detections, pose, history, cfg, frame_index)[0]


def brute_force_localize(detections: Sequence[DetectionState], pose: CameraPose, history: History,
                         cfg: BirdifyConfig, frame_index: int = -1) -> FrameEstimate:
    """Exact joint minimiser by enumerating all ``S**K`` assignments."""
    K, S = len(detections), cfg.samples
    if S**K > BRUTE_FORCE_LIMIT:
        raise SearchSpaceTooLarge(f"{S}**{K} joint states exceed {BRUTE_FORCE_LIMIT}")
    prob, heights, cand, unary, ei, ej, pair = _frame_graph(detections, pose, history, cfg)
    labels = kernels.brute_force(unary, ei, ej, pair)
    energy = kernels.labeling_energy(labels, unary, ei, ej, pair) if K else 0.0
    return _estimate_from_labels(frame_index, pose, prob, heights, cand, labels,
                                 {"localization_energy": float(energy)})


def localization_energy(estimate: FrameEstimate, detections, history: History,
                        cfg: BirdifyConfig) -> float:
    """Energy of the assignment in ``estimate`` under the frame graph at its pose."""
    prob, heights, cand, unary, ei, ej, pair = _frame_graph(detections, estimate.pose, history, cfg)
    labels = [int(np.argmin(np.abs(heights - estimate.heights[i]))) for i in prob.ids]
    return float(kernels.labeling_energy(np.array(labels), unary, ei, ej, pair))


def _refine(prob: _Problem, pose: CameraPose, cand, hs, labels, ei, ej, cfg: BirdifyConfig):
    """Polish each chosen height continuously within one grid step.

    One Gauss-Seidel sweep in index order; neighbours enter through the
    pairwise force magnitude at their current positions. Returns refined
    positions (K, 2) and heights (K,).
    """
    K = len(prob.ids)
    h = hs[labels].astype(float)
    x = cand[np.arange(K), labels].copy()
    if K == 0 or cfg.prior.std <= 0:
        return x, h
    nbrs = [[] for _ in range(K)]
    for a, b in zip(ei, ej):
        nbrs[a].append(b)
        nbrs[b].append(a)
    dt, s2 = cfg.params.dt, cfg.params.sigma2
    scale = kernels._INV_SQRT_2PI / math.sqrt(s2) / s2
    lo, hi = hs[0], hs[-1]

    def pos(k, hk):
        return camera_to_world(prob.rays[k] * hk, (pose.x, pose.y), pose.theta)

    for k in range(K):
        f_p = None if prob.f_p is None else prob.f_p[k]
        others = x[nbrs[k]]

        def energy(hk):
            xk = pos(k, hk)
            e = float(motion_unary(xk, prob.prev[k], prob.prev2[k], cfg.model, dt, f_p))
            e += float(observation_nll(hk, cfg.prior))
            if len(others):
                r = np.linalg.norm(others - xk, axis=1)
                e += float(np.sum(scale * np.exp(-r * r / (2 * s2)) * r))
            return e

        a, b = max(lo, h[k] - cfg.delta), min(hi, h[k] + cfg.delta)
        res = minimize_scalar(energy, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-7})
        if res.fun < energy(h[k]):
            h[k] = float(res.x)
            x[k] = pos(k, h[k])
    return x, h


# -- sequences -------------------------------------------------------------

@dataclass
class BirdifyResult:
    camera: dict  # frame -> CameraPose (bootstrap frames included)
    pedestrians: dict  # id -> {frame: np.ndarray(2,)} estimated positions only
    frames: list  # FrameEstimate per estimated frame
    given: dict = field(default_factory=dict)  # id -> {frame: xy} bootstrap positions used


def _height_from_position(d: DetectionState, xy, pose: CameraPose, cfg: BirdifyConfig):
    z = world_to_camera(np.asarray(xy, float), (pose.x, pose.y), pose.theta)
    depth = z[1] if cfg.projection == "perspective" else float(np.hypot(*z))
    if depth <= 0:
        return None
    return float(depth * d.l / cfg.intrinsics.focal_length)


def birdify_sequence(observations: Mapping[int, Sequence[DetectionState]], cfg: BirdifyConfig,
                     bootstrap: Bootstrap) -> BirdifyResult:
    """Run the cascade over a whole sequence.

    ``observations`` maps frame index to that frame's detections. The camera
    pose must be bootstrapped for the first two frames and each track for
    the first two frames of every visible stretch.
    """
    frames = list(observations.keys())
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise NonMonotonicFrames("frame indices must be strictly increasing")
    cam_frames = sorted(bootstrap.camera)
    if len(cam_frames) < 2:
        raise MissingBootstrap("camera")
    f0 = cam_frames[0]
    if cam_frames[1] != f0 + 1:
        raise MissingBootstrap("camera", f0 + 1)
    last = max(frames[-1] if frames else f0 + 1, f0 + 1)
    camera = {f0: bootstrap.camera[f0], f0 + 1: bootstrap.camera[f0 + 1]}
    world: dict = {}
    heights: dict = {}
    given: dict = {}
    out_peds: dict = {}
    estimates = []

    def record_given(d, f):
        xy = np.asarray(bootstrap.pedestrians[d.pedestrian_id][f], float)
        world.setdefault(d.pedestrian_id, {})[f] = xy
        given.setdefault(d.pedestrian_id, {})[f] = xy
        if cfg.ego_height == "resolved":
            h = _height_from_position(d, xy, camera[f], cfg)
            if h is not None:
                heights[d.pedestrian_id] = h

    for f in (f0, f0 + 1):
        for d in observations.get(f, ()):
            if f in bootstrap.pedestrians.get(d.pedestrian_id, {}):
                record_given(d, f)

    for f in range(f0 + 2, last + 1):
        dets = list(observations.get(f, ()))
        boot_now, tracked = [], []
        for d in dets:
            pid = d.pedestrian_id
            if f in bootstrap.pedestrians.get(pid, {}):
                boot_now.append(d)
            elif f - 1 in world.get(pid, {}) and f - 2 in world.get(pid, {}):
                tracked.append(d)
            else:
                raise MissingBootstrap(pid, f)
        hist = History((camera[f - 2], camera[f - 1]),
                       {d.pedestrian_id: (world[d.pedestrian_id][f - 2], world[d.pedestrian_id][f - 1])
                        for d in tracked},
                       dict(heights))
        selected = select_neighbors(tracked, cfg.epsilon, cfg.aspect, cfg.max_selected)
        diag = {"frame": f, "model": cfg.model, "detections": len(dets), "tracked": len(tracked),
                "selected": len(selected)}
        if selected:
            ego = estimate_ego_motion(selected, hist, cfg)
            pose = apply_ego_motion(camera[f - 1], ego.motion)
        else:
            prev_motion = camera[f - 1].as_array() - camera[f - 2].as_array()
            ego = EgoResult(EgoMotion(*map(float, prev_motion)), float("nan"), np.zeros(3), 0,
                            "no_detections")
            pose = apply_ego_motion(camera[f - 1], ego.motion)
        diag.update(ego_energy=ego.energy, ego_iterations=ego.iterations, ego_status=ego.status,
                    ego_gradient_norm=float(np.linalg.norm(ego.gradient)))
        camera[f] = pose
        est, prob, hs, cand, labels, ei, ej = _localize(selected, pose, hist, cfg, f)
        diag.update(est.diagnostics)
        if cfg.refine_heights and selected:
            xr, hr = _refine(prob, pose, cand, hs, labels, ei, ej, cfg)
            for k, pid in enumerate(prob.ids):
                est.positions[pid], est.heights[pid] = xr[k], float(hr[k])
        rest = [d for d in tracked if not any(d is s for s in selected)]
        if rest:
            # unselected pedestrians are placed by their unary terms alone
            prob = _build_problem(rest, hist, cfg)
            hs, cand = _candidates(prob, pose, cfg)
            labels = np.argmin(_unary(prob, cand, hs, cfg), axis=1)
            xr, hr = cand[np.arange(len(labels)), labels], hs[labels]
            if cfg.refine_heights:
                none = np.zeros(0, np.int64)
                xr, hr = _refine(prob, pose, cand, hs, labels, none, none, cfg)
            for k, pid in enumerate(prob.ids):
                est.positions[pid] = np.array(xr[k])
                est.heights[pid] = float(hr[k])
        for pid, xy in est.positions.items():
            world.setdefault(pid, {})[f] = xy
            out_peds.setdefault(pid, {})[f] = xy
            if cfg.ego_height == "resolved":
                heights[pid] = est.heights[pid]
        for d in boot_now:
            record_given(d, f)
        est.diagnostics = diag
        estimates.append(est)
    return BirdifyResult(camera, out_peds, estimates, given)


# -- diagnostics -----------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    center: tuple
    half_width: float = 0.5
    n: int = 21
    heading_range: float = 0.2
    temperature: float = 1.0


@dataclass
class PosteriorGrid:
    xs: np.ndarray
    ys: np.ndarray
    prob: np.ndarray  # (len(ys), len(xs))
    headings: np.ndarray

    def entropy(self) -> float:
        p = self.prob[self.prob > 0]
        return float(-np.sum(p * np.log(p)))

    def argmax(self):
        iy, ix = np.unravel_index(int(np.argmax(self.prob)), self.prob.shape)
        return float(self.xs[ix]), float(self.ys[iy])


def _cell_energy(prob: _Problem, cfg: BirdifyConfig, xy, theta, heights):
    z = heights[None, :, None] * prob.rays[:, None, :]
    cand = camera_to_world(z, xy, theta)
    e = float(np.sum(_unary(prob, cand, heights, cfg).min(axis=1)))
    if cfg.ego_prior == "crowd":
        a0 = second_difference(np.asarray(xy, float), prob.cam_prev.position,
                               prob.cam_prev2.position, cfg.params.dt)
        e += float(a0 @ a0) if cfg.model == "constvel" else float(np.linalg.norm(prob.cam_f_p - a0))
    return e


def posterior_grid(detections: Sequence[DetectionState], history: History, cfg: BirdifyConfig,
                   grid: GridSpec) -> PosteriorGrid:
    """``exp(-E / T)`` over a grid of camera positions, normalised to sum 1.

    At each cell the heading is optimised and every pedestrian takes its
    best height hypothesis, so the field shows how well the observed crowd
    pins down the observer position.
    """
    n = max(1, int(grid.n))
    if n == 1:
        xs, ys = np.array([grid.center[0]], float), np.array([grid.center[1]], float)
    else:
        xs = np.linspace(grid.center[0] - grid.half_width, grid.center[0] + grid.half_width, n)
        ys = np.linspace(grid.center[1] - grid.half_width, grid.center[1] + grid.half_width, n)
    prob = _build_problem(detections, history, cfg)
    heights = cfg.candidate_heights()
    th0 = prob.cam_prev.theta
    coarse = th0 + np.linspace(-grid.heading_range, grid.heading_range, 41)
    step = coarse[1] - coarse[0]
    energy = np.empty((len(ys), len(xs)))
    best_th = np.empty_like(energy)
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            vals = [_cell_energy(prob, cfg, (x, y), t, heights) for t in coarse]
            j = int(np.argmin(vals))
            res = minimize_scalar(lambda t: _cell_energy(prob, cfg, (x, y), t, heights),
                                  bounds=(coarse[j] - step, coarse[j] + step), method="bounded",
                                  options={"xatol": 1e-7})
            if res.fun < vals[j]:
                energy[iy, ix], best_th[iy, ix] = res.fun, res.x
            else:
                energy[iy, ix], best_th[iy, ix] = vals[j], coarse[j]
    w = np.exp(-(energy - energy.min()) / grid.temperature)
    return PosteriorGrid(xs, ys, w / w.sum(), best_th)


# -- ground-plane baselines --------------------------------------------------

def baseline_extrapolate(history: Sequence[Mapping[int, np.ndarray]], model: InteractionModel,
                         params: SocialForceParams | None = None) -> dict:
    """Predict the next positions from two frames ``(t-2, t-1)`` without any observation.

    ``constvel`` extrapolates linearly; ``socialforce`` takes one simulator
    step from the velocities implied by the history.
    """
    params = params or SocialForceParams()
    if len(history) != 2:
        raise InsufficientHistory(f"need 2 history frames, got {len(history)}")
    h2, h1 = history
    ids = [i for i in h1 if i in h2]
    if len(ids) != len(h1):
        raise InsufficientHistory("every pedestrian needs two history positions")
    if not ids:
        return {}
    p1 = np.array([h1[i] for i in ids], float).reshape(-1, 2)
    p2 = np.array([h2[i] for i in ids], float).reshape(-1, 2)
    if model == "constvel":
        nxt = 2.0 * p1 - p2
    elif model == "socialforce":
        from .crowd import crowd_forces

        vel = (p1 - p2) / params.dt
        sf = replace(params, desired="neighbors")
        vel = vel + crowd_forces(p1, vel, p1, np.zeros(len(ids)), sf) * params.dt
        nxt = p1 + vel * params.dt
    else:
        raise ValueError(f"unknown interaction model {model!r}")
    return {i: nxt[k] for k, i in enumerate(ids)}


def baseline_sequence(bootstrap: Bootstrap, frames: Mapping[int, Sequence[int]],
                      model: InteractionModel, params: SocialForceParams | None = None) -> dict:
    """Roll :func:`baseline_extrapolate` forward from the bootstrap positions.

    ``frames`` maps each frame to the ids to report there. Returns
    id -> {frame: xy} for non-bootstrap entries only.
    """
    params = params or SocialForceParams()
    state: dict = {pid: {f: np.asarray(xy, float) for f, xy in fr.items()}
                   for pid, fr in bootstrap.pedestrians.items()}
    out: dict = {}
    for f in sorted(frames):
        active = {}
        for pid, fr in state.items():
            if f - 1 in fr and f - 2 in fr and f not in fr:
                active[pid] = (fr[f - 2], fr[f - 1])
        if active:
            ids = sorted(active)
            pred = baseline_extrapolate(({i: active[i][0] for i in ids}, {i: active[i][1] for i in ids}),
                                        model, params)
            for pid, xy in pred.items():
                state[pid][f] = xy
        for pid in frames[f]:
            if f in state.get(pid, {}) and f not in bootstrap.pedestrians.get(pid, {}):
                out.setdefault(pid, {})[f] = state[pid][f]
    return out
