"""Command line driver: simulate crowds, render observations, birdify, score, plot.

Every command works on sequence directories ``<out-dir>/seq_XXX``::

    trajectories.csv     ground-truth trajectories (simulate, or supplied)
    observations.jsonl   detections seen by the observer (observe)
    bootstrap.json       given positions for the first frames (observe)
    camera_gt.csv        true observer poses (observe)
    est_camera.csv       estimated observer poses (birdify)
    est_pedestrians.csv  estimated pedestrian positions (birdify)
    diagnostics.jsonl    one record per estimated frame (birdify)
    posterior_<f>.csv    camera posterior grid at frame f (birdify --posterior-frame)
    overlay.svg, posterior_<f>.svg (plot)

Settings come from built-in defaults, then ``--config`` (JSON or YAML), then
flags. All randomness derives from ``--seed``; sequence ``i`` uses ``seed + i``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datasets
from .crowd import ScenarioConfig, SocialForceParams, simulate
from .errors import BirdifyError, ConfigError, EmptyDataset
from .geometry import CameraIntrinsics, CameraRig, HeightPrior
from .metrics import evaluate_sequence, format_table
from .solver import BirdifyConfig, GridSpec, History, birdify_sequence, posterior_grid

DEFAULTS = {
    "seed": 0,
    "k": 20,
    "len": 20,
    "sigma_h": 0.07,
    "model": "socialforce",
    "projection": "perspective",
    "epsilon": None,
    "out_dir": "runs",
    "jobs": 1,
    "sequences": 1,
    "dt": 0.1,
    "desired": "neighbors",
    "observer": 0,
    "fov": 360.0,
    "occlusion": False,
    "max_selected": None,
    "posterior_frame": None,
}

CHOICES = {"model": ("constvel", "socialforce"), "projection": ("perspective", "cylindrical"),
           "desired": ("neighbors", "goal")}


# -- configuration -----------------------------------------------------------

def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix in (".yaml", ".yml"):
            import yaml
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except Exception as exc:  # parser errors differ between json and yaml
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_settings(args) -> dict:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    validate(cfg)
    return cfg


def validate(cfg: dict):
    for key, opts in CHOICES.items():
        if cfg[key] not in opts:
            raise ConfigError(f"{key} must be one of {', '.join(opts)}, got {cfg[key]!r}")
    for key in ("k", "len", "jobs", "sequences"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool) or cfg[key] < 1:
            raise ConfigError(f"{key} must be a positive integer, got {cfg[key]!r}")
    if cfg["len"] < 3:
        raise ConfigError("len must be at least 3 frames")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {cfg['seed']!r}")
    for key in ("sigma_h", "dt", "fov"):
        if not isinstance(cfg[key], (int, float)) or not math.isfinite(cfg[key]):
            raise ConfigError(f"{key} must be a finite number")
    if cfg["sigma_h"] < 0 or cfg["dt"] <= 0 or cfg["fov"] <= 0:
        raise ConfigError("sigma_h must be >= 0, dt and fov > 0")
    if cfg["epsilon"] is not None and not cfg["epsilon"] > 0:
        raise ConfigError("epsilon must be positive")
    if cfg["max_selected"] is not None and cfg["max_selected"] < 1:
        raise ConfigError("max_selected must be a positive integer")


def solver_config(cfg: dict) -> BirdifyConfig:
    kind = cfg["projection"]
    return BirdifyConfig(intrinsics=CameraIntrinsics.default(kind), projection=kind,
                         prior=HeightPrior(1.70, float(cfg["sigma_h"])), model=cfg["model"],
                         params=SocialForceParams(dt=float(cfg["dt"])), epsilon=cfg["epsilon"],
                         max_selected=cfg["max_selected"])


# -- sequence directories ----------------------------------------------------

def sequence_dirs(out_dir, need: str) -> list:
    """Existing ``seq_XXX`` directories holding ``need``, in name order."""
    root = Path(out_dir)
    dirs = sorted(p for p in root.glob("seq_*") if p.is_dir() and (p / need).exists())
    if not dirs:
        raise FileNotFoundError(f"no sequence directory under {root} contains {need}")
    return dirs


def _index(seq_dir: Path) -> int:
    try:
        return int(seq_dir.name.split("_", 1)[1])
    except (IndexError, ValueError):
        return 0


def _fan_out(fn, items, cfg):
    if cfg["jobs"] > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            return list(pool.map(fn, items, [cfg] * len(items)))
    return [fn(item, cfg) for item in items]


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


# -- commands ----------------------------------------------------------------

def _simulate_one(i, cfg):
    seq = Path(cfg["out_dir"]) / f"seq_{i:03d}"
    seq.mkdir(parents=True, exist_ok=True)
    params = SocialForceParams(dt=float(cfg["dt"]), desired=cfg["desired"])
    frames = simulate(ScenarioConfig(k=cfg["k"], length=cfg["len"], seed=cfg["seed"] + i, params=params))
    datasets.save_trajectories(datasets.frames_to_trajectories(frames), seq / "trajectories.csv")
    return seq


def cmd_simulate(cfg):
    for seq in _fan_out(_simulate_one, list(range(cfg["sequences"])), cfg):
        print(seq / "trajectories.csv")


def _observe_one(seq, cfg):
    trajs = datasets.load_trajectories(seq / "trajectories.csv")
    kind = cfg["projection"]
    syn = datasets.synthesize_observations(
        trajs, cfg["observer"], CameraRig(projection=kind), CameraIntrinsics.default(kind),
        HeightPrior(1.70, float(cfg["sigma_h"])), float(cfg["fov"]), cfg["seed"] + _index(seq),
        occlusion=bool(cfg["occlusion"]))
    datasets.save_observations(syn.observations, seq / "observations.jsonl")
    datasets.save_bootstrap(syn.bootstrap, seq / "bootstrap.json")
    datasets.save_camera(syn.camera, seq / "camera_gt.csv")
    return seq


def cmd_observe(cfg):
    for seq in _fan_out(_observe_one, sequence_dirs(cfg["out_dir"], "trajectories.csv"), cfg):
        print(seq / "observations.jsonl")


def _birdify_one(seq, cfg):
    obs = datasets.load_observations(seq / "observations.jsonl")
    boot = datasets.load_bootstrap(seq / "bootstrap.json")
    scfg = solver_config(cfg)
    res = birdify_sequence(obs, scfg, boot)
    datasets.save_camera(res.camera, seq / "est_camera.csv")
    datasets.save_trajectories(res.pedestrians, seq / "est_pedestrians.csv")
    lines = [json.dumps({k: _jsonable(v) for k, v in est.diagnostics.items()}, sort_keys=True)
             for est in res.frames]
    datasets.atomic_write(seq / "diagnostics.jsonl", "".join(line + "\n" for line in lines))
    f = cfg["posterior_frame"]
    if f is not None:
        write_posterior(seq, f, obs, res, scfg)
    return seq


def write_posterior(seq, f, obs, res, scfg):
    """Camera posterior at frame ``f`` given the estimated history."""
    if f - 2 not in res.camera or f not in obs:
        raise ConfigError(f"posterior frame {f} needs two earlier estimated frames")
    world = {}
    for src in (res.given, res.pedestrians):
        for pid, fr in src.items():
            world.setdefault(pid, {}).update(fr)
    dets = [d for d in obs[f] if {f - 1, f - 2} <= set(world.get(d.pedestrian_id, {}))]
    hist = History((res.camera[f - 2], res.camera[f - 1]),
                   {d.pedestrian_id: (world[d.pedestrian_id][f - 2], world[d.pedestrian_id][f - 1])
                    for d in dets})
    centre = res.camera[f].position
    grid = posterior_grid(dets, hist, replace(scfg, ego_height="prior"), GridSpec(tuple(centre)))
    datasets.save_posterior(grid, seq / f"posterior_{f}.csv")


def cmd_birdify(cfg):
    for seq in _fan_out(_birdify_one, sequence_dirs(cfg["out_dir"], "observations.jsonl"), cfg):
        print(seq / "est_camera.csv")


def evaluate_dir(seq):
    trajs = datasets.load_trajectories(seq / "trajectories.csv")
    gt_cam = datasets.load_camera(seq / "camera_gt.csv")
    est_cam = datasets.load_camera(seq / "est_camera.csv")
    boot = datasets.load_bootstrap(seq / "bootstrap.json")
    est_cam = {f: p for f, p in est_cam.items() if f not in boot.camera}
    try:
        est_peds = datasets.load_trajectories(seq / "est_pedestrians.csv")
    except EmptyDataset:
        est_peds = {}
    return evaluate_sequence(est_cam, gt_cam, est_peds, trajs)


def cmd_evaluate(cfg):
    rows = [(seq.name, evaluate_dir(seq)) for seq in sequence_dirs(cfg["out_dir"], "est_camera.csv")]
    table = format_table(rows)
    datasets.atomic_write(Path(cfg["out_dir"]) / "metrics.txt", table)
    sys.stdout.write(table)


def cmd_plot(cfg):
    from . import plotting
    for seq in sequence_dirs(cfg["out_dir"], "trajectories.csv"):
        for path in plotting.plot_sequence(seq):
            print(path)


COMMANDS = {"simulate": cmd_simulate, "observe": cmd_observe, "birdify": cmd_birdify,
            "evaluate": cmd_evaluate, "plot": cmd_plot}

HELP = {"simulate": "simulate social-force crowds into trajectories.csv",
        "observe": "render the observer's detections, bootstrap and true camera poses",
        "birdify": "reconstruct camera and pedestrian trajectories from detections",
        "evaluate": "print the error table for every estimated sequence",
        "plot": "write bird's-eye overlays and posterior heatmaps as SVG"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="birdify", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="JSON or YAML settings file; unknown keys are rejected")
        p.add_argument("--seed", type=int, help="base random seed (default 0)")
        p.add_argument("--k", type=int, help="number of simulated pedestrians (default 20)")
        p.add_argument("--len", type=int, help="frames per sequence (default 20)")
        p.add_argument("--sigma-h", dest="sigma_h", type=float,
                       help="std of pedestrian heights in metres (default 0.07)")
        p.add_argument("--model", choices=CHOICES["model"], help="interaction model (default socialforce)")
        p.add_argument("--projection", choices=CHOICES["projection"],
                       help="camera model (default perspective)")
        p.add_argument("--epsilon", type=float, help="minimum box size for neighbour selection")
        p.add_argument("--out-dir", dest="out_dir", help="root of the seq_XXX directories (default runs)")
        p.add_argument("--jobs", type=int, help="sequences processed in parallel (default 1)")
        if name == "simulate":
            p.add_argument("--sequences", type=int, help="number of sequences to simulate (default 1)")
        if name == "birdify":
            p.add_argument("--posterior-frame", dest="posterior_frame", type=int,
                           help="also write the camera posterior grid at this frame")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_settings(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"birdify {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (BirdifyError, OSError) as exc:
        print(f"birdify {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
