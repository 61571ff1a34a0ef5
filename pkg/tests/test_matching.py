"""Tests for kNN matching, landmark rejection, and correspondence clustering."""

import numpy as np
import pytest

from avitrack.errors import DimensionMismatchError, NoLandmarksError
from avitrack.matching import (
    KEPT,
    REJECTED,
    FeatureMatch,
    Keypoint,
    cluster_correspondences,
    knn_match,
    reject_by_landmark,
)
from avitrack.voronoi import LandmarkSet, nearest_landmark


def _kp(camera_id, descriptor, x=10.0, y=10.0, det=0, frame=0):
    return Keypoint(
        camera_id=camera_id,
        frame=frame,
        detection_index=det,
        position=np.array([x, y], dtype=float),
        descriptor=np.asarray(descriptor, dtype=float),
    )


class TestKnnMatch:
    def test_single_identical_descriptor_matches_without_ratio(self):
        """With one candidate the ratio test cannot run; the match is kept."""
        matches = knn_match([_kp("a", [1.0, 2.0])], [_kp("b", [1.0, 2.0])])
        assert len(matches) == 1
        assert matches[0].descriptor_distance == 0.0

    def test_ratio_below_threshold_kept(self):
        """d1=0.5, d2=1.0: 0.5 < 0.75 so the candidate is emitted."""
        a = [_kp("a", [0.0])]
        b = [_kp("b", [0.5]), _kp("b", [1.0])]
        matches = knn_match(a, b)
        assert len(matches) == 1
        assert matches[0].index_b == 0
        assert matches[0].descriptor_distance == pytest.approx(0.5)

    def test_ratio_above_threshold_dropped(self):
        """d1=0.8, d2=0.9: 0.89 >= 0.75 so no candidate."""
        a = [_kp("a", [0.0])]
        b = [_kp("b", [0.8]), _kp("b", [-0.9])]
        assert knn_match(a, b) == []

    def test_exact_tie_fails_ratio_test(self):
        """Two equidistant best candidates are ambiguous and dropped."""
        a = [_kp("a", [0.0])]
        b = [_kp("b", [0.5]), _kp("b", [-0.5]), _kp("b", [4.0])]
        assert knn_match(a, b, ratio=0.9) == []

    def test_deterministic_on_random_input(self):
        rng = np.random.default_rng(44)
        a = [_kp("a", rng.normal(size=8)) for _ in range(30)]
        b = [_kp("b", rng.normal(size=8)) for _ in range(30)]
        first = knn_match(a, b)
        second = knn_match(a, b)
        assert [(m.index_a, m.index_b) for m in first] == [
            (m.index_a, m.index_b) for m in second
        ]

    def test_descriptor_length_mismatch_raises(self):
        with pytest.raises(DimensionMismatchError):
            knn_match([_kp("a", [1.0, 2.0])], [_kp("b", [1.0, 2.0, 3.0])])

    def test_k_below_two_rejected_when_ratio_applies(self):
        a = [_kp("a", [0.0])]
        b = [_kp("b", [0.5]), _kp("b", [1.0])]
        with pytest.raises(ValueError, match="k must be"):
            knn_match(a, b, k=1)

    def test_empty_sides_give_no_matches(self):
        assert knn_match([], [_kp("b", [1.0])]) == []
        assert knn_match([_kp("a", [1.0])], []) == []


class TestRejectByLandmark:
    @pytest.fixture
    def landmarks(self) -> LandmarkSet:
        landmarks = LandmarkSet({"a": (200, 200), "b": (200, 200)})
        landmarks.add("a", 4, (50.0, 50.0))
        landmarks.add("a", 7, (150.0, 150.0))
        landmarks.add("b", 4, (60.0, 40.0))
        landmarks.add("b", 7, (140.0, 160.0))
        return landmarks

    def _match(self, pos_a, pos_b):
        return FeatureMatch(
            keypoint_a=_kp("a", [0.0], x=pos_a[0], y=pos_a[1]),
            keypoint_b=_kp("b", [0.0], x=pos_b[0], y=pos_b[1]),
            index_a=0,
            index_b=0,
            descriptor_distance=0.0,
        )

    def test_agreeing_landmarks_kept(self, landmarks):
        decided, _ = reject_by_landmark([self._match((40, 40), (70, 50))], landmarks)
        assert decided[0].verdict == KEPT
        assert decided[0].landmark_a == 4
        assert decided[0].landmark_b == 4

    def test_disagreeing_landmarks_rejected(self, landmarks):
        decided, _ = reject_by_landmark([self._match((40, 40), (150, 150))], landmarks)
        assert decided[0].verdict == REJECTED
        assert (decided[0].landmark_a, decided[0].landmark_b) == (4, 7)

    def test_stats_cover_frames(self, landmarks):
        matches = [
            self._match((40, 40), (70, 50)),       # kept
            self._match((40, 40), (150, 150)),     # rejected
        ]
        _, stats = reject_by_landmark(matches, landmarks)
        assert stats.total == 2
        assert stats.rejected == 1
        assert stats.per_frame_pct == {0: 50.0}

    def test_missing_landmarks_raise(self):
        empty = LandmarkSet({"a": (200, 200), "b": (200, 200)})
        with pytest.raises(NoLandmarksError):
            reject_by_landmark([self._match((1, 1), (2, 2))], empty)

    def test_verdicts_match_brute_force_recomputation(self, landmarks):
        """Kept set equals an exhaustive nearest-site recomputation."""
        rng = np.random.default_rng(13)
        matches = [
            self._match(rng.uniform(0, 200, 2), rng.uniform(0, 200, 2))
            for _ in range(200)
        ]
        decided, _ = reject_by_landmark(matches, landmarks)
        for match in decided:
            expected_a = nearest_landmark(landmarks, "a", match.keypoint_a.position)
            expected_b = nearest_landmark(landmarks, "b", match.keypoint_b.position)
            expected = KEPT if expected_a == expected_b else REJECTED
            assert match.verdict == expected


class TestClusterCorrespondences:
    def _matches(self, rows):
        """rows: list of (det_a, det_b, distance) kept matches."""
        out = []
        for det_a, det_b, dist in rows:
            out.append(
                FeatureMatch(
                    keypoint_a=_kp("a", [0.0], det=det_a),
                    keypoint_b=_kp("b", [0.0], det=det_b),
                    index_a=0,
                    index_b=0,
                    descriptor_distance=dist,
                    verdict=KEPT,
                )
            )
        return out

    def test_min_support_drops_singletons(self):
        matches = self._matches(
            [(0, 1, 0.1), (0, 1, 0.2), (0, 1, 0.3), (0, 2, 0.1)]
        )
        chosen = cluster_correspondences(matches, min_support=2)
        assert [(c.detection_index_a, c.detection_index_b) for c in chosen] == [(0, 1)]
        assert chosen[0].support == 3

    def test_no_kept_matches_empty(self):
        assert cluster_correspondences([]) == []
        rejected = self._matches([(0, 1, 0.1)])
        rejected = [
            FeatureMatch(
                keypoint_a=m.keypoint_a, keypoint_b=m.keypoint_b,
                index_a=0, index_b=0,
                descriptor_distance=m.descriptor_distance, verdict=REJECTED,
            )
            for m in rejected
        ]
        assert cluster_correspondences(rejected) == []

    def test_one_to_one_with_distance_tiebreak(self):
        """Equal support resolves by mean distance; losers are excluded."""
        matches = self._matches(
            [(0, 1, 0.3), (0, 1, 0.3), (1, 1, 0.5), (1, 1, 0.5)]
        )
        chosen = cluster_correspondences(matches, min_support=2)
        assert [(c.detection_index_a, c.detection_index_b) for c in chosen] == [(0, 1)]

    def test_one_to_one_on_random_groups(self):
        rng = np.random.default_rng(3)
        rows = [
            (int(rng.integers(0, 6)), int(rng.integers(0, 6)), float(rng.uniform()))
            for _ in range(300)
        ]
        chosen = cluster_correspondences(self._matches(rows), min_support=2)
        lefts = [c.detection_index_a for c in chosen]
        rights = [c.detection_index_b for c in chosen]
        assert len(lefts) == len(set(lefts))
        assert len(rights) == len(set(rights))

    def test_greedy_prefers_higher_support(self):
        matches = self._matches(
            [(0, 1, 0.9), (0, 1, 0.9), (0, 1, 0.9), (1, 1, 0.1), (1, 1, 0.1)]
        )
        chosen = cluster_correspondences(matches, min_support=2)
        assert (chosen[0].detection_index_a, chosen[0].detection_index_b) == (0, 1)
