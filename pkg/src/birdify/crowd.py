"""Pedestrian interaction models and a social-force crowd simulator.

The same force definitions drive the simulator and the motion-prior
energies used by the optimiser. Positions are metres on the ground plane,
velocities m/s, forces are accelerations (unit mass).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .errors import InsufficientHistory

InteractionModel = Literal["constvel", "socialforce"]
MODELS = ("constvel", "socialforce")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PedestrianState:
    position: tuple
    velocity: tuple
    pedestrian_id: int
    height: float = 1.70
    goal: tuple = (0.0, 0.0)
    preferred_speed: float = 1.34

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("height must be positive")
        if not all(math.isfinite(v) for v in self.velocity):
            raise ValueError("velocity must be finite")


@dataclass(frozen=True)
class SocialForceParams:
    eta: float = 0.5
    sigma2: float = 1.0
    radius: float = 3.0
    dt: float = 0.1
    mass: float = 1.0
    # 'neighbors': desired velocity is the mean neighbour velocity.
    # 'goal': desired velocity points at the goal with the preferred speed.
    desired: Literal["neighbors", "goal"] = "neighbors"
    # all pairs interact up to this many pedestrians, radius-limited above
    all_pairs_max: int = 60
    pair_radius: float = 4.0

    def __post_init__(self):
        if not (self.eta > 0 and self.sigma2 > 0 and self.dt > 0):
            raise ValueError("eta, sigma2 and dt must be positive")
        if self.desired not in ("neighbors", "goal"):
            raise ValueError(f"unknown desired-velocity mode {self.desired!r}")


@dataclass(frozen=True)
class CrowdFrame:
    frame_index: int
    pedestrians: tuple

    def __post_init__(self):
        ids = [p.pedestrian_id for p in self.pedestrians]
        if len(set(ids)) != len(ids):
            raise ValueError("pedestrian ids must be unique within a frame")

    @property
    def ids(self):
        return [p.pedestrian_id for p in self.pedestrians]

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.pedestrians], dtype=float).reshape(-1, 2)

    def velocities(self) -> np.ndarray:
        return np.array([p.velocity for p in self.pedestrians], dtype=float).reshape(-1, 2)

    def by_id(self):
        return {p.pedestrian_id: p for p in self.pedestrians}


@dataclass(frozen=True)
class ScenarioConfig:
    k: int = 20
    length: int = 20
    bounds: tuple = (-8.0, 8.0)
    corner_size: float = 4.0
    speed_mean: float = 1.34
    speed_std: float = 0.26
    seed: int = 0
    params: SocialForceParams = field(default_factory=SocialForceParams)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        lo, hi = self.bounds
        if not hi - lo > 2 * self.corner_size > 0:
            raise ValueError("field bounds must exceed twice the corner size")


# -- model pieces ----------------------------------------------------------

def constvel_energy(x, history: Sequence, dt: float = 1.0) -> float:
    """Squared deviation from linear extrapolation of the last two positions.

    ``history`` is ``(x_{t-2}, x_{t-1})``, oldest first. With ``dt`` other
    than 1 the deviation is expressed as an acceleration.
    """
    if len(history) != 2:
        raise InsufficientHistory(f"need 2 history positions, got {len(history)}")
    a = (np.asarray(x, float) - 2.0 * np.asarray(history[1], float) + np.asarray(history[0], float)) / dt**2
    return float(a @ a)


def gaussian_potential(r2, sigma2):
    return (_INV_SQRT_2PI / math.sqrt(sigma2)) * np.exp(-np.asarray(r2) / (2.0 * sigma2))


def pairwise_force(xi, xk, sigma2: float = 1.0) -> np.ndarray:
    """Reciprocal force on ``xi`` from ``xk``: minus the gradient of the Gaussian potential."""
    d = np.asarray(xi, float) - np.asarray(xk, float)
    return gaussian_potential(d @ d, sigma2) * d / sigma2


def pairwise_force_magnitude(r, sigma2: float = 1.0):
    r = np.asarray(r, float)
    return gaussian_potential(r * r, sigma2) * r / sigma2


def neighbor_mean_velocity(pos, vel, radius):
    """Mean velocity of the other pedestrians within ``radius``; own velocity if none."""
    pos = np.asarray(pos, float).reshape(-1, 2)
    vel = np.asarray(vel, float).reshape(-1, 2)
    d = pos[:, None, :] - pos[None, :, :]
    near = np.einsum("ijk,ijk->ij", d, d) <= radius * radius
    np.fill_diagonal(near, False)
    n = near.sum(axis=1)
    w = vel.copy()
    has = n > 0
    w[has] = (near[has].astype(float) @ vel) / n[has, None]
    return w


def desired_forces(pos, vel, eta, radius):
    """Vectorised desired force ``(w_k - v_k) / eta`` for every pedestrian."""
    vel = np.asarray(vel, float).reshape(-1, 2)
    return (neighbor_mean_velocity(pos, vel, radius) - vel) / eta


def desired_force(k: PedestrianState, neighbors: Sequence[PedestrianState], eta: float,
                  radius: float = 3.0) -> np.ndarray:
    pos = np.array([k.position] + [n.position for n in neighbors], dtype=float).reshape(-1, 2)
    vel = np.array([k.velocity] + [n.velocity for n in neighbors], dtype=float).reshape(-1, 2)
    return desired_forces(pos, vel, eta, radius)[0]


def reciprocal_forces(pos, sigma2, radius=None):
    """Summed pairwise forces on each pedestrian (K, 2)."""
    pos = np.asarray(pos, float).reshape(-1, 2)
    d = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    g = gaussian_potential(r2, sigma2) / sigma2
    np.fill_diagonal(g, 0.0)
    if radius is not None:
        g[r2 > radius * radius] = 0.0
    return np.einsum("ij,ijk->ik", g, d)


def crowd_forces(pos, vel, goals, pref_speed, params: SocialForceParams):
    pos = np.asarray(pos, float).reshape(-1, 2)
    vel = np.asarray(vel, float).reshape(-1, 2)
    if params.desired == "goal":
        to_goal = np.asarray(goals, float).reshape(-1, 2) - pos
        dist = np.linalg.norm(to_goal, axis=1, keepdims=True)
        unit = np.divide(to_goal, dist, out=np.zeros_like(to_goal), where=dist > 1e-9)
        f_p = (np.asarray(pref_speed, float)[:, None] * unit - vel) / params.eta
    else:
        f_p = desired_forces(pos, vel, params.eta, params.radius)
    radius = None if len(pos) <= params.all_pairs_max else params.pair_radius
    return (f_p + reciprocal_forces(pos, params.sigma2, radius)) / params.mass


def _integrate(pos, vel, goals, speeds, params):
    acc = crowd_forces(pos, vel, goals, speeds, params)
    vel = vel + acc * params.dt
    pos = pos + vel * params.dt
    return pos, vel


def social_force_step(frame: CrowdFrame, params: SocialForceParams) -> CrowdFrame:
    """One semi-implicit Euler step: ``v += F dt`` then ``x += v dt``."""
    peds = frame.pedestrians
    if not peds:
        return CrowdFrame(frame.frame_index + 1, ())
    pos, vel = _integrate(frame.positions(), frame.velocities(),
                          np.array([p.goal for p in peds], float),
                          np.array([p.preferred_speed for p in peds], float), params)
    out = tuple(replace(p, position=tuple(map(float, pos[i])), velocity=tuple(map(float, vel[i])))
                for i, p in enumerate(peds))
    return CrowdFrame(frame.frame_index + 1, out)


# -- scenario simulation ---------------------------------------------------

def _spawn(config: ScenarioConfig, rng: np.random.Generator):
    lo, hi = config.bounds
    c = config.corner_size
    corners = np.array([[lo, lo], [hi - c, lo], [lo, hi - c], [hi - c, hi - c]])
    which = rng.integers(0, 4, size=config.k)
    start = corners[which] + rng.uniform(0.0, c, size=(config.k, 2))
    goal = corners[3 - which] + rng.uniform(0.0, c, size=(config.k, 2))
    speed = np.clip(rng.normal(config.speed_mean, config.speed_std, size=config.k), 0.3, 2.5)
    heading = goal - start
    vel = speed[:, None] * heading / np.linalg.norm(heading, axis=1, keepdims=True)
    return start, vel, goal, speed


def simulate(config: ScenarioConfig) -> list:
    """Simulate ``config.k`` pedestrians walking corner to opposite corner.

    Frame ``t`` holds the state after ``t`` steps; the sequence is fully
    determined by ``config.seed``.
    """
    rng = np.random.default_rng(config.seed)
    pos, vel, goal, speed = _spawn(config, rng)
    lo, hi = config.bounds
    frames = []
    for t in range(config.length):
        peds = tuple(
            PedestrianState(tuple(map(float, pos[i])), tuple(map(float, vel[i])), i,
                            goal=tuple(map(float, goal[i])), preferred_speed=float(speed[i]))
            for i in range(config.k))
        frames.append(CrowdFrame(t, peds))
        pos, vel = _integrate(pos, vel, goal, speed, config.params)
        pos = np.clip(pos, lo, hi)
    return frames


def frames_to_arrays(frames: Sequence[CrowdFrame]):
    """Stack frames of a fixed crowd into (T, K, 2) positions and the id list."""
    ids = frames[0].ids
    pos = np.stack([f.positions() for f in frames])
    return pos, ids


# -- energies --------------------------------------------------------------

def second_difference(x, prev, prev2, dt):
    return (np.asarray(x, float) - 2.0 * np.asarray(prev, float) + np.asarray(prev2, float)) / dt**2


def motion_unary(x, prev, prev2, model: InteractionModel, dt: float, f_p=None):
    """Per-pedestrian motion energy for positions ``x`` (..., K, 2) or (K, S, 2).

    ``prev`` and ``prev2`` broadcast against ``x``. For the social-force model
    ``f_p`` holds each pedestrian's desired force from the history frame.
    """
    acc = second_difference(x, prev, prev2, dt)
    if model == "constvel":
        return np.einsum("...k,...k->...", acc, acc)
    if model == "socialforce":
        return np.linalg.norm(f_p - acc, axis=-1)
    raise ValueError(f"unknown interaction model {model!r}")


def history_desired_forces(prev, prev2, params: SocialForceParams):
    vel = (np.asarray(prev, float) - np.asarray(prev2, float)) / params.dt
    return desired_forces(prev, vel, params.eta, params.radius)


@dataclass
class InteractionEnergy:
    unary: dict
    pairwise: dict

    @property
    def total(self) -> float:
        return float(sum(self.unary[k] for k in sorted(self.unary))
                     + sum(self.pairwise[p] for p in sorted(self.pairwise)))


def interaction_energy(frame: CrowdFrame, history: Sequence[CrowdFrame], model: InteractionModel,
                       params: SocialForceParams | None = None) -> InteractionEnergy:
    """Unary and pairwise motion-prior terms of ``frame`` given two history frames.

    ``history`` is ``(frame_{t-2}, frame_{t-1})``. Pairwise terms are keyed by
    unordered id pairs ``(i, k)`` with ``i < k``.
    """
    params = params or SocialForceParams()
    if len(history) != 2:
        raise InsufficientHistory(f"need 2 history frames, got {len(history)}")
    h2, h1 = (h.by_id() for h in history)
    ids = frame.ids
    missing = [i for i in ids if i not in h1 or i not in h2]
    if missing:
        raise InsufficientHistory(f"pedestrians {missing} lack history")
    x = frame.positions()
    prev = np.array([h1[i].position for i in ids], float).reshape(-1, 2)
    prev2 = np.array([h2[i].position for i in ids], float).reshape(-1, 2)
    if model == "socialforce":
        f_p = history_desired_forces(prev, prev2, params)
        u = motion_unary(x, prev, prev2, model, params.dt, f_p)
        pw = {}
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                key = (min(ids[a], ids[b]), max(ids[a], ids[b]))
                pw[key] = float(np.linalg.norm(pairwise_force(x[a], x[b], params.sigma2)))
    else:
        u = motion_unary(x, prev, prev2, model, params.dt)
        pw = {}
    return InteractionEnergy({i: float(u[n]) for n, i in enumerate(ids)}, pw)
