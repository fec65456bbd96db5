import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birdify.errors import IdMismatch, LengthMismatch
from birdify.metrics import (absolute_localization_error, angle_difference, evaluate_sequence,
                             format_table, relative_localization_error, rotation_error,
                             rotation_errors, translation_error)

CAM = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (2.0, 0.5)}


def shift(track, dx, dy=0.0):
    return {f: (p[0] + dx, p[1] + dy) for f, p in track.items()}


class TestTranslation:
    def test_identity(self):
        assert translation_error(CAM, CAM) == 0.0

    def test_constant_offset(self):
        assert translation_error(shift(CAM, 0.1), CAM) == pytest.approx(0.1)

    def test_two_frame_mean(self):
        gt = {0: (0, 0), 1: (0, 0)}
        assert translation_error({0: (0.1, 0), 1: (0, 0.3)}, gt) == pytest.approx(0.2)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            translation_error({0: (0, 0)}, CAM)
        with pytest.raises(LengthMismatch):
            translation_error([(0, 0)], [(0, 0), (1, 1)])


class TestRotation:
    def test_examples(self):
        assert rotation_error([0.3, -1.0], [0.3, -1.0]) == 0.0
        assert rotation_error([0.1, 1.1], [0.0, 1.0]) == pytest.approx(0.1)
        assert rotation_error([math.pi - 0.05], [-math.pi + 0.05]) == pytest.approx(0.1)

    @given(st.floats(-20, 20), st.floats(-20, 20))
    def test_range_and_symmetry(self, a, b):
        d = float(angle_difference(a, b))
        assert 0.0 <= d <= math.pi + 1e-12
        assert d == pytest.approx(float(angle_difference(b, a)), abs=1e-9)

    def test_mismatch(self):
        with pytest.raises(LengthMismatch):
            rotation_errors([0.0], [0.0, 0.1])


GT = {1: {0: (3.0, 4.0), 1: (3.5, 4.0)}, 2: {0: (-1.0, 2.0), 1: (-1.0, 2.5)}}


class TestLocalization:
    def test_absolute_examples(self):
        assert absolute_localization_error(GT, GT) == 0.0
        one = {1: GT[1]}
        moved = {1: {0: (3.5, 4.0), 1: (3.5, 4.0)}}
        assert absolute_localization_error(moved, one) == pytest.approx(0.25)
        every = {p: shift(tr, 0.0, 0.3) for p, tr in GT.items()}
        assert absolute_localization_error(every, GT) == pytest.approx(0.3)

    def test_relative_examples(self):
        cam = {0: (0.0, 0.0), 1: (0.2, 0.1)}
        assert relative_localization_error(GT, GT, cam, cam) == 0.0
        est = {p: shift(tr, 1.2, -0.7) for p, tr in GT.items()}
        assert relative_localization_error(est, GT, shift(cam, 1.2, -0.7), cam) == pytest.approx(0.0, abs=1e-12)
        assert relative_localization_error(GT, GT, shift(cam, 0.2), cam) == pytest.approx(0.2)

    @settings(max_examples=50)
    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_relative_translation_invariant(self, dx, dy):
        est = {1: {0: (3.1, 4.2), 1: (3.4, 3.9)}, 2: {0: (-1.1, 2.0), 1: (-0.8, 2.4)}}
        cam = {0: (0.1, 0.0), 1: (0.2, 0.3)}
        gcam = {0: (0.0, 0.0), 1: (0.25, 0.2)}
        base = relative_localization_error(est, GT, cam, gcam)
        moved = relative_localization_error({p: shift(t, dx, dy) for p, t in est.items()}, GT,
                                            shift(cam, dx, dy), gcam)
        assert moved == pytest.approx(base, abs=1e-9)

    def test_id_mismatch(self):
        with pytest.raises(IdMismatch):
            absolute_localization_error({9: {0: (0, 0)}}, GT)
        with pytest.raises(IdMismatch):
            absolute_localization_error({1: {5: (0, 0)}}, GT)
        with pytest.raises(IdMismatch):
            relative_localization_error(GT, GT, {0: (0, 0)}, {0: (0, 0), 1: (0, 0)})


class TestSequence:
    def test_coverage_and_per_frame(self):
        gt_cam = {0: (0, 0, 0.0), 1: (0.1, 0, 0.0), 2: (0.2, 0, 0.0)}
        est_cam = {1: (0.1, 0, 0.02), 2: (0.3, 0, 0.0)}
        gt_p = {1: {f: (1.0, 5.0 + f) for f in range(3)}, 2: {f: (-2.0, 4.0) for f in range(3)}}
        est_p = {1: {1: (1.0, 6.0), 2: (1.0, 7.4)}}
        err = evaluate_sequence(est_cam, gt_cam, est_p, gt_p)
        assert err.counts == {"frames": 2, "pairs": 2, "gt_pairs": 4, "coverage": 0.5}
        assert err.dt == pytest.approx(0.05)
        assert err.dr == pytest.approx(0.01)
        assert err.dx == pytest.approx(0.2)
        assert err.dx_rel == pytest.approx(np.mean([0.0, math.hypot(0.1, 0.4)]))
        assert len(err.per_frame["dt"]) == len(err.per_frame["dx"]) == 2
        assert err.std("dx") == pytest.approx(0.2)
        for v in (err.dt, err.dr, err.dx, err.dx_rel):
            assert v >= 0

    def test_missing_gt_camera(self):
        with pytest.raises(LengthMismatch):
            evaluate_sequence({5: (0, 0, 0)}, {0: (0, 0, 0)}, {}, {})

    def test_table_layout(self):
        err = evaluate_sequence({0: (0, 0, 0.0)}, {0: (0, 0, 0.0)}, {}, {})
        text = format_table([("seq_000", err)])
        lines = text.splitlines()
        assert lines[0].split()[0] == "sequence" and "Δr" in lines[0] and "Δx" in lines[0]
        assert lines[2].startswith("seq_000") and lines[2].count("±") == 4
        assert "standard deviation over frames" in text
