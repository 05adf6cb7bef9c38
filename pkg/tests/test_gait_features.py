"""Tests for gait_features.py - relative distances and the RDF vector."""

import math

import numpy as np
import pytest

from _common import (
    JOINT_COUNT,
    ContractError,
    InsufficientDataError,
    InvalidFrameError,
    JointId,
    TrackingState,
)
from gait_features import (
    DISTANCE_NAMES,
    MEAN_NAMES,
    RDF_NAMES,
    STD_NAMES,
    FeatureVector,
    distance_series,
    mean_features,
    rdf,
    relative_distances,
    std_features,
)
from skeleton import joint_position
from tests.builders import make_frame, make_sequence, random_pose, static_sequence


def naive_distances(frame) -> list[float]:
    """Line-by-line reading of the eleven distance definitions."""

    def p(j: int):
        return joint_position(frame, j)

    return [
        abs(p(17).x - p(18).x),
        abs(p(5).x - p(6).x),
        abs(p(9).x - p(10).x),
        abs(p(1).x - (p(17).x + p(18).x) / 2),
        abs(p(11).x - (p(17).x + p(18).x) / 2),
        abs(p(7).x - p(8).x),
        abs(p(3).x - p(4).x),
        abs(p(1).y - (p(19).y + p(20).y) / 2),
        abs(p(1).y - (p(15).y + p(16).y) / 2),
        abs(p(19).y - p(20).y),
        abs(p(9).z - p(10).z),
    ]


class TestRelativeDistances:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_naive_oracle(self, seed) -> None:
        frame = make_frame(random_pose(seed, scale=2.0))
        got = relative_distances(frame)
        assert got._fields == DISTANCE_NAMES
        np.testing.assert_allclose(got, naive_distances(frame), rtol=0, atol=1e-12)

    def test_non_negative(self) -> None:
        assert min(relative_distances(make_frame(random_pose(3)))) >= 0

    def test_untracked_frame_rejected(self) -> None:
        states = np.full(JOINT_COUNT, TrackingState.TRACKED)
        states[JointId.HEAD.row] = TrackingState.NOT_TRACKED
        with pytest.raises(InvalidFrameError):
            relative_distances(make_frame(states=states))

    def test_inferred_joint_used_as_reported(self) -> None:
        states = np.full(JOINT_COUNT, TrackingState.TRACKED)
        states[JointId.ANKLE_RIGHT.row] = TrackingState.INFERRED
        frame = make_frame(random_pose(4), states)
        assert relative_distances(frame).dx1 == pytest.approx(naive_distances(frame)[0])


class TestFeatureLayout:
    def test_dimensions(self) -> None:
        assert len(MEAN_NAMES) == 10
        assert len(STD_NAMES) == 10
        assert len(RDF_NAMES) == 20

    def test_mean_and_std_blocks_are_asymmetric(self) -> None:
        assert MEAN_NAMES == (
            "mean_dx1", "mean_dx2", "mean_dx3", "mean_dx4", "mean_dx5",
            "mean_dx6", "mean_dy1", "mean_dy2", "mean_dy3", "mean_dz1",
        )  # fmt: skip
        assert STD_NAMES == (
            "std_dx1", "std_dx2", "std_dx3", "std_dx4", "std_dx5",
            "std_dx6", "std_dx7", "std_dy1", "std_dy2", "std_dy3",
        )  # fmt: skip
        assert RDF_NAMES == MEAN_NAMES + STD_NAMES


class TestRdf:
    def test_two_frame_example(self) -> None:
        poses = np.zeros((2, JOINT_COUNT, 3))
        poses[0, JointId.ANKLE_RIGHT.row, 0] = 1.0
        poses[1, JointId.ANKLE_RIGHT.row, 0] = 3.0
        vector = rdf(make_sequence(poses))
        assert vector["mean_dx1"] == pytest.approx(2.0)
        assert vector["std_dx1"] == pytest.approx(math.sqrt(2))

    def test_static_sequence_has_zero_std(self) -> None:
        seq = static_sequence(random_pose(8), 5)
        np.testing.assert_allclose(std_features(seq).values, 0.0, atol=1e-12)
        expected = np.array(naive_distances(seq.frames[0]))
        np.testing.assert_allclose(
            mean_features(seq).values,
            expected[[DISTANCE_NAMES.index(n[5:]) for n in MEAN_NAMES]],
            atol=1e-12,
        )

    def test_blocks_concatenate(self) -> None:
        seq = make_sequence(np.stack([random_pose(i) for i in range(6)]))
        vector = rdf(seq)
        assert vector.names == RDF_NAMES
        np.testing.assert_array_equal(
            vector.values,
            np.concatenate([mean_features(seq).values, std_features(seq).values]),
        )

    def test_matches_naive_statistics(self) -> None:
        seq = make_sequence(np.stack([random_pose(i) for i in range(7)]))
        series = np.array([naive_distances(f) for f in seq.frames])
        vector = rdf(seq)
        for name in MEAN_NAMES:
            col = DISTANCE_NAMES.index(name.removeprefix("mean_"))
            assert vector[name] == pytest.approx(series[:, col].mean(), abs=1e-12)
        for name in STD_NAMES:
            col = DISTANCE_NAMES.index(name.removeprefix("std_"))
            assert vector[name] == pytest.approx(series[:, col].std(ddof=1), abs=1e-12)

    def test_invalid_frames_are_ignored(self) -> None:
        poses = np.stack([random_pose(i) for i in range(4)])
        states = np.full((4, JOINT_COUNT), TrackingState.TRACKED)
        states[2, JointId.FOOT_LEFT.row] = TrackingState.NOT_TRACKED
        with_gap = make_sequence(poses, states=states)
        without = make_sequence(poses[[0, 1, 3]])
        np.testing.assert_allclose(rdf(with_gap).values, rdf(without).values)
        assert distance_series(with_gap).shape == (3, 11)

    @pytest.mark.parametrize("n_frames", [0, 1])
    def test_too_few_valid_frames(self, n_frames) -> None:
        poses = np.array([random_pose(i) for i in range(n_frames)]).reshape(n_frames, JOINT_COUNT, 3)
        seq = make_sequence(poses)
        with pytest.raises(InsufficientDataError):
            rdf(seq)

    @pytest.mark.parametrize("seed", range(10))
    def test_translation_invariant(self, seed) -> None:
        rng = np.random.default_rng(seed)
        poses = rng.uniform(-1, 1, (8, JOINT_COUNT, 3))
        shift = rng.uniform(-5, 5, 3)
        np.testing.assert_allclose(
            rdf(make_sequence(poses + shift)).values,
            rdf(make_sequence(poses)).values,
            rtol=0,
            atol=1e-9,
        )


class TestFeatureVector:
    def test_lookup_select_concat(self) -> None:
        a = FeatureVector(("a", "b"), [1.0, 2.0])
        b = FeatureVector(("c",), [3.0])
        joined = a.concat(b)
        assert joined.names == ("a", "b", "c")
        assert joined["c"] == 3.0
        assert joined.select(["c", "a"]).values.tolist() == [3.0, 1.0]
        assert len(joined) == joined.dimension == 3

    def test_values_read_only(self) -> None:
        vector = FeatureVector(("a",), [1.0])
        with pytest.raises(ValueError, match="read-only"):
            vector.values[0] = 2.0

    @pytest.mark.parametrize(
        ("names", "values"),
        [(("a",), [1.0, 2.0]), (("a", "a"), [1.0, 2.0])],
    )
    def test_invalid(self, names, values) -> None:
        with pytest.raises(ContractError):
            FeatureVector(names, values)
