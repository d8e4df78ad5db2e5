import numpy as np
import pytest

from helpers import make_frame
from tubeloc.model import (
    Box,
    Config,
    Frame,
    Proposal,
    Tube,
    ValidationError,
    Video,
    interpolate_tube,
    key_frames,
)


class TestBox:
    def test_rejects_zero_width(self):
        with pytest.raises(ValidationError):
            Box(0, 0, 0, 10)

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Box(float("nan"), 0, 1, 1)

    def test_intersection_area(self):
        a = Box(0, 0, 10, 10)
        b = Box(5, 0, 10, 10)
        assert a.intersection_area(b) == 50.0
        assert a.intersection_area(Box(20, 20, 5, 5)) == 0.0

    def test_contains_point_inclusive(self):
        b = Box(0, 0, 10, 10)
        assert b.contains_point(0, 0)
        assert b.contains_point(10, 10)
        assert not b.contains_point(10.0001, 5)


def _video(length: int) -> Video:
    frames = {t: make_frame("v", t) for t in range(length)}
    return Video("v", length, frames)


class TestKeyFrames:
    def test_length_100_stride_20(self):
        assert key_frames(_video(100), 20) == [0, 20, 40, 60, 80]

    def test_short_video(self):
        assert key_frames(_video(5), 20) == [0]

    def test_length_41(self):
        assert key_frames(_video(41), 20) == [0, 20, 40]

    def test_strictly_increasing_below_length(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            length = int(rng.integers(1, 200))
            stride = int(rng.integers(1, 40))
            kfs = key_frames(_video(length), stride)
            assert kfs[0] == 0
            assert all(b > a for a, b in zip(kfs, kfs[1:]))
            assert all(k < length for k in kfs)

    def test_invalid_stride(self):
        with pytest.raises(ValidationError):
            key_frames(_video(10), 0)


def _tube_video(boxes_by_kf: dict[int, Box], length: int) -> tuple[Tube, Video]:
    frames = {}
    for t in range(length):
        proposals = []
        if t in boxes_by_kf:
            proposals = [Proposal(7, boxes_by_kf[t], np.array([1.0]))]
        frames[t] = Frame("v", t, 1000.0, 1000.0, proposals, np.zeros(2))
    tube = Tube("v", {kf: 7 for kf in boxes_by_kf})
    return tube, Video("v", length, frames)


class TestInterpolateTube:
    def test_linear_midpoint(self):
        tube, video = _tube_video({0: Box(0, 0, 10, 10), 20: Box(20, 0, 10, 10)}, 21)
        boxes = interpolate_tube(tube, video)
        assert boxes[10] == Box(10, 0, 10, 10)

    def test_identical_boxes_constant(self):
        box = Box(5, 5, 8, 8)
        tube, video = _tube_video({0: box, 20: box}, 21)
        boxes = interpolate_tube(tube, video)
        assert all(boxes[t] == box for t in range(21))

    def test_single_key_frame_replicates(self):
        box = Box(1, 2, 3, 4)
        tube, video = _tube_video({0: box}, 9)
        boxes = interpolate_tube(tube, video)
        assert len(boxes) == 9
        assert all(b == box for b in boxes.values())

    def test_key_frames_exact_and_tail_copies(self):
        a, b = Box(0, 0, 10, 10), Box(40, 20, 30, 12)
        tube, video = _tube_video({0: a, 20: b}, 30)
        boxes = interpolate_tube(tube, video)
        assert boxes[0] == a
        assert boxes[20] == b
        assert all(boxes[t] == b for t in range(21, 30))

    def test_missing_proposal_rejected(self):
        tube, video = _tube_video({0: Box(0, 0, 1, 1)}, 5)
        bad = Tube("v", {0: 99})
        with pytest.raises(ValidationError):
            interpolate_tube(bad, video)


class TestConfig:
    def test_defaults_valid(self):
        Config().validate()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("alpha", -0.1),
            ("lambda_", -1.0),
            ("theta", -1.0),
            ("theta", 0.0),
            ("k_neighbors", 0),
            ("p_tubes", 0),
            ("keyframe_stride", 0),
        ],
    )
    def test_invalid_values(self, field, value):
        config = Config()
        setattr(config, field, value)
        with pytest.raises(ValidationError):
            config.validate()

    def test_dict_round_trip_uses_lambda_key(self):
        config = Config(lambda_=3.5, k_neighbors=4)
        data = config.to_dict()
        assert data["lambda"] == 3.5
        assert "lambda_" not in data
        assert Config.from_dict(data) == config

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            Config.from_dict({"bogus": 1})
