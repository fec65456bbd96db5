import math

import numpy as np
import pytest
from _scenes import scenario

from birdify.errors import DegenerateExtent, EmptyDataset, ObserverNotFound, ParseError
from birdify.geometry import (CameraIntrinsics, CameraPose, CameraRig, HeightPrior, inverse_project,
                              world_to_camera)
from birdify.solver import Bootstrap, GridSpec, posterior_grid
from birdify.datasets import (load_bootstrap, load_camera, load_observations, load_posterior,
                              load_tracker_boxes, load_trajectories, normalize_scene, observer_headings,
                              reindex_frames, save_bootstrap, save_camera, save_observations,
                              save_posterior, save_trajectories, synthesize_observations)

TRAJS = {3: {0: np.array([0.5, 1.25]), 1: np.array([0.6, 1.5])},
         7: {1: np.array([-2.0, 4.0]), 2: np.array([-2.1, 4.2])}}


def same_trajs(a, b):
    assert list(a) == list(b)
    for pid in a:
        assert list(a[pid]) == list(b[pid])
        for f in a[pid]:
            assert np.array_equal(a[pid][f], b[pid][f])


class TestTrajectoryIO:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "t.csv"
        save_trajectories(TRAJS, p)
        same_trajs(load_trajectories(p), TRAJS)
        assert p.read_text().splitlines()[0] == "frame,id,x,y"

    def test_round_trip_is_exact_for_awkward_floats(self, tmp_path, rng):
        trajs = {0: {f: rng.normal(size=2) * 1e3 for f in range(5)}}
        save_trajectories(trajs, tmp_path / "t.csv")
        same_trajs(load_trajectories(tmp_path / "t.csv"), trajs)

    def test_empty_sequence_writes_header(self, tmp_path):
        save_trajectories({}, tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == "frame,id,x,y\n"
        with pytest.raises(EmptyDataset):
            load_trajectories(tmp_path / "e.csv")

    def test_parse_error_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("frame,id,x,y\n0,1,0.0,1.0\n1,1,abc,1.0\n")
        with pytest.raises(ParseError) as info:
            load_trajectories(p)
        assert info.value.line == 3 and info.value.column == "x"
        assert ":3:" in str(info.value)

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
    def test_non_finite_rejected(self, tmp_path, bad):
        p = tmp_path / "nan.csv"
        p.write_text(f"frame,id,x,y\n0,1,{bad},1.0\n")
        with pytest.raises(ParseError):
            load_trajectories(p)

    def test_duplicate_rows_rejected(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text("frame,id,x,y\n0,1,0,0\n0,1,1,1\n")
        with pytest.raises(ParseError):
            load_trajectories(p)

    def test_ethucy_matches_csv(self, tmp_path):
        (tmp_path / "a.csv").write_text("frame,id,x,y\n10,2,1.5,-3.25\n0,1,0.0,2.0\n10,1,0.5,2.0\n")
        (tmp_path / "a.txt").write_text("0\t1\t0.0\t2.0\n10  1  0.5  2.0\n\n10\t2\t1.5\t-3.25\n")
        same_trajs(load_trajectories(tmp_path / "a.txt", "ethucy"), load_trajectories(tmp_path / "a.csv"))

    def test_reindex(self):
        out = reindex_frames({1: {0: 0, 10: 1}, 2: {20: 2}})
        assert out == {1: {0: 0, 1: 1}, 2: {2: 2}}


class TestNormalization:
    def test_scale_half(self):
        trajs = {0: {0: np.array([0.0, 0.0]), 1: np.array([32.0, 10.0])}}
        out, norm = normalize_scene(trajs)
        assert norm.scale == pytest.approx(0.5)
        assert out[0][0] == pytest.approx([-8.0, -2.5])
        assert out[0][1] == pytest.approx([8.0, 2.5])

    def test_identity(self):
        trajs = {0: {0: np.array([-8.0, -8.0]), 1: np.array([8.0, 8.0])}}
        out, norm = normalize_scene(trajs)
        assert norm.scale == 1.0 and norm.offset == (0.0, 0.0)

    def test_invert(self, rng):
        trajs = {i: {f: rng.uniform(-40, 90, 2) for f in range(4)} for i in range(5)}
        out, norm = normalize_scene(trajs)
        for i in trajs:
            for f in trajs[i]:
                assert np.abs(norm.invert(out[i][f]) - trajs[i][f]).max() < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateExtent):
            normalize_scene({0: {0: np.ones(2), 1: np.ones(2)}})


class TestOtherIO:
    def test_camera_round_trip(self, tmp_path):
        cam = {0: CameraPose(1.0, 2.0, 0.3), 1: (1.1, 2.2, -3.0)}
        save_camera(cam, tmp_path / "c.csv")
        back = load_camera(tmp_path / "c.csv")
        assert np.array_equal(back[0], [1.0, 2.0, 0.3]) and np.array_equal(back[1], [1.1, 2.2, -3.0])

    def test_observation_round_trip(self, tmp_path):
        _, syn, _ = scenario(k=6, length=5, sigma=0.07, seed=1)
        save_observations(syn.observations, tmp_path / "o.jsonl")
        back = load_observations(tmp_path / "o.jsonl")
        for f, dets in syn.observations.items():
            if dets:
                assert [(d.u, d.v, d.l, d.pedestrian_id) for d in back[f]] == \
                       [(d.u, d.v, d.l, d.pedestrian_id) for d in dets]

    def test_observation_errors(self, tmp_path):
        p = tmp_path / "o.jsonl"
        p.write_text('{"frame": 0, "id": 1, "u": 1, "v": 2, "l": 3}\n{"frame": 0, "id": 2, "u": 1, "v": 2, "l": 0}\n')
        with pytest.raises(ParseError) as info:
            load_observations(p)
        assert info.value.line == 2
        p.write_text('{"frame": 0, "id": 1, "u": NaN, "v": 2, "l": 3}\n')
        with pytest.raises(ParseError):
            load_observations(p)

    def test_bootstrap_round_trip(self, tmp_path):
        boot = Bootstrap({0: CameraPose(0, 0, 0.1), 1: CameraPose(0, 0.1, 0.1)},
                         {4: {0: np.array([1.0, 5.0]), 1: np.array([1.0, 5.1])}})
        save_bootstrap(boot, tmp_path / "b.json")
        back = load_bootstrap(tmp_path / "b.json")
        assert back.camera == boot.camera
        same_trajs(back.pedestrians, boot.pedestrians)

    def test_tracker_boxes(self, tmp_path):
        (tmp_path / "b.csv").write_text("frame,id,x1,y1,x2,y2\n0,5,100,200,140,300\n")
        d = load_tracker_boxes(tmp_path / "b.csv")[0][0]
        assert (d.u, d.v, d.l, d.pedestrian_id) == (120.0, 250.0, 100.0, 5)
        (tmp_path / "m.txt").write_text("0,5,100,200,40,100,1,-1,-1,-1\n")
        m = load_tracker_boxes(tmp_path / "m.txt", "mot")[0][0]
        assert (m.u, m.v, m.l) == (d.u, d.v, d.l)

    def test_posterior_sums_to_one(self, tmp_path):
        trajs, syn, cfg = scenario(k=10, seed=2)
        from _scenes import true_history
        dets, hist, pose = true_history(trajs, syn, 6)
        grid = posterior_grid(dets, hist, cfg, GridSpec(tuple(pose.position), 0.5, 9))
        save_posterior(grid, tmp_path / "p.csv")
        xs, ys, prob = load_posterior(tmp_path / "p.csv")
        assert abs(prob.sum() - 1.0) < 1e-9
        assert np.array_equal(prob, grid.prob)


class TestSynthesis:
    def test_zero_sigma_heights(self):
        _, syn, _ = scenario(k=10, length=5)
        assert set(syn.heights.values()) == {1.70}

    def test_cylindrical_full_circle_sees_everyone(self):
        trajs, syn, _ = scenario(k=12, length=6, kind="cylindrical")
        for f, dets in syn.observations.items():
            present = {p for p in trajs if p != 0 and f in trajs[p]}
            far = {p for p in present if np.hypot(*(trajs[p][f] - trajs[0][f])) > 0.5}
            assert {d.pedestrian_id for d in dets} == far

    def test_deterministic(self):
        a = scenario(k=10, length=6, sigma=0.07, seed=3)[1]
        b = scenario(k=10, length=6, sigma=0.07, seed=3)[1]
        assert a.heights == b.heights
        for f in a.observations:
            assert [(d.u, d.v, d.l) for d in a.observations[f]] == [(d.u, d.v, d.l) for d in b.observations[f]]

    @pytest.mark.parametrize("kind", ["perspective", "cylindrical"])
    def test_inverse_projection_reproduces_truth(self, kind):
        trajs, syn, _ = scenario(k=10, length=6, kind=kind)
        intr = CameraIntrinsics.default(kind)
        for f, dets in syn.observations.items():
            cam = syn.camera[f]
            for d in dets:
                z = inverse_project(d.u, d.l, 1.70, intr, kind)
                truth = world_to_camera(trajs[d.pedestrian_id][f], cam[:2], cam[2])
                assert np.abs(np.asarray(z, float).reshape(-1)[:2] - truth).max() < 1e-9

    def test_bootstrap_covers_first_two_visible_frames(self):
        trajs, syn, _ = scenario(k=10, length=8)
        for pid, fr in syn.bootstrap.pedestrians.items():
            first = min(f for f, dets in syn.observations.items() if any(d.pedestrian_id == pid for d in dets))
            assert first in fr and first + 1 in fr
            assert np.array_equal(fr[first], trajs[pid][first])
        assert sorted(syn.bootstrap.camera) == [0, 1]

    def test_observer_heading_is_velocity_direction(self):
        track = {0: np.array([0.0, 0.0]), 1: np.array([1.0, 0.0]), 2: np.array([1.0, 0.0]), 3: np.array([1.0, 0.0])}
        h = observer_headings(track, initial_heading=0.3)
        assert h[0] == pytest.approx(math.pi / 2)
        assert h[3] == h[2]

    def test_missing_observer(self):
        with pytest.raises(ObserverNotFound):
            synthesize_observations(TRAJS, 99, CameraRig(), CameraIntrinsics.default(), HeightPrior())
