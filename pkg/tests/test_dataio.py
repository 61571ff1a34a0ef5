"""Tests for strict file ingestion and lossless round trips."""

import json

import numpy as np
import pytest

from avitrack import dataio
from avitrack.errors import IngestError
from avitrack.matching import Detection
from avitrack.synthworld import SceneConfig, generate


@pytest.fixture
def bundle_dir(tmp_path):
    bundle = generate(
        SceneConfig(
            duration_s=0.3, seed=2, camera_count=3, bird_count=2,
            image_size=(640, 360), focal_px=360.0, descriptor_length=8,
        )
    )
    out = tmp_path / "bundle"
    bundle.write(out)
    return out, bundle


class TestRoundTrips:
    def test_detections(self, bundle_dir):
        out, bundle = bundle_dir
        loaded = dataio.read_detections(out / "detections.csv")
        assert loaded == sorted(
            bundle.detections, key=lambda d: (d.camera_id, d.frame, d.index)
        )

    def test_keypoints(self, bundle_dir):
        out, bundle = bundle_dir
        loaded = dataio.read_keypoints(out / "keypoints.csv")
        assert len(loaded) == len(bundle.keypoints)
        by_key = {}
        for kp in bundle.keypoints:
            by_key.setdefault(
                (kp.camera_id, kp.frame, kp.detection_index), []
            ).append(kp)
        for kp in loaded:
            group = by_key[(kp.camera_id, kp.frame, kp.detection_index)]
            assert any(
                np.array_equal(kp.position, other.position)
                and np.array_equal(kp.descriptor, other.descriptor)
                for other in group
            )

    def test_calibration(self, bundle_dir):
        out, bundle = bundle_dir
        loaded = dataio.read_calibration(out / "calibration.json")
        assert set(loaded) == set(bundle.cameras)
        for cam_id, cam in bundle.cameras.items():
            got = loaded[cam_id]
            np.testing.assert_allclose(got.rotation, cam.rotation, atol=1e-12)
            np.testing.assert_allclose(got.translation, cam.translation, atol=1e-15)
            assert got.fx == cam.fx and got.image_size == cam.image_size

    def test_landmarks(self, bundle_dir):
        out, bundle = bundle_dir
        sizes = {cid: cam.image_size for cid, cam in bundle.cameras.items()}
        loaded = dataio.read_landmarks(out / "landmarks.csv", sizes)
        for camera_id in loaded.cameras():
            for (gid_a, pos_a), (gid_b, pos_b) in zip(
                loaded.entries(camera_id), bundle.landmark_set.entries(camera_id)
            ):
                assert gid_a == gid_b
                np.testing.assert_array_equal(pos_a, pos_b)

    def test_truth_and_labels(self, bundle_dir):
        out, bundle = bundle_dir
        positions = dataio.read_truth(out / "truth.csv")
        assert set(positions) == set(bundle.truth_positions)
        for frame in positions:
            for identity, point in positions[frame].items():
                np.testing.assert_array_equal(
                    point, bundle.truth_positions[frame][identity]
                )
        labels = dataio.read_match_truth(out / "match_truth.csv")
        assert labels == bundle.detection_identities

    def test_observations_and_tracks(self, tmp_path):
        obs = [(0, 0, np.array([1.0, 2.0, 3.0]), 0.5, 0.25)]
        dataio.write_observations(tmp_path / "o.csv", obs)
        loaded = dataio.read_observations(tmp_path / "o.csv")
        assert loaded[0][0] == 0
        np.testing.assert_array_equal(loaded[0][2], obs[0][2])

        rows = [(0, 1, "tentative", np.array([0.1, 0.2, 0.3]))]
        dataio.write_tracks(tmp_path / "t.csv", rows)
        back = dataio.read_tracks(tmp_path / "t.csv")
        assert back[0][:3] == (0, 1, "tentative")
        np.testing.assert_array_equal(back[0][3], rows[0][3])


class TestStrictness:
    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="not found"):
            dataio.read_detections(tmp_path / "nope.csv")

    def test_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("camera,frame\n")
        with pytest.raises(IngestError, match="header"):
            dataio.read_detections(path)

    def test_wrong_column_count_names_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            ",".join(dataio.DETECTIONS_HEADER) + "\ncam0,0,0,1.0,2.0,3.0\n"
        )
        with pytest.raises(IngestError, match="d.csv:2"):
            dataio.read_detections(path)

    def test_non_integer_frame_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            ",".join(dataio.DETECTIONS_HEADER)
            + "\ncam0,1.5,0,1.0,2.0,3.0,4.0,0.9\n"
        )
        with pytest.raises(IngestError, match="not an integer"):
            dataio.read_detections(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            ",".join(dataio.DETECTIONS_HEADER) + "\ncam0,0,0,1.0,2.0,3.0,inf,0.9\n"
        )
        with pytest.raises(IngestError, match="not finite"):
            dataio.read_detections(path)

    def test_degenerate_box_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            ",".join(dataio.DETECTIONS_HEADER) + "\ncam0,0,0,5.0,2.0,3.0,4.0,0.9\n"
        )
        with pytest.raises(IngestError, match="degenerate box"):
            dataio.read_detections(path)

    def test_duplicate_detection_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        row = "cam0,0,0,1.0,2.0,3.0,4.0,0.9\n"
        path.write_text(",".join(dataio.DETECTIONS_HEADER) + "\n" + row + row)
        with pytest.raises(IngestError, match="duplicate"):
            dataio.read_detections(path)

    def test_six_distortion_coefficients_rejected(self, tmp_path):
        doc = [
            {
                "id": "cam0",
                "image_size": [640, 360],
                "K": [[360.0, 0.0, 320.0], [0.0, 360.0, 180.0], [0.0, 0.0, 1.0]],
                "dist": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "rvec": [0.0, 0.0, 0.0],
                "tvec": [0.0, 0.0, 0.0],
            }
        ]
        path = tmp_path / "calib.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(IngestError, match="5 distortion coefficients"):
            dataio.read_calibration(path)

    def test_landmark_outside_frame_rejected(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text(
            ",".join(dataio.LANDMARKS_HEADER) + "\ncam0,1,700.0,100.0\n"
        )
        with pytest.raises(IngestError, match="outside"):
            dataio.read_landmarks(path, {"cam0": (640, 360)})

    def test_keypoints_need_descriptor_columns(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("camera_id,frame,detection_index,x_px,y_px\n")
        with pytest.raises(IngestError, match="descriptor"):
            dataio.read_keypoints(path)

    def test_bad_track_status_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(
            ",".join(dataio.TRACKS_HEADER) + "\n0,1,zombie,1.0,2.0,3.0\n"
        )
        with pytest.raises(IngestError, match="status"):
            dataio.read_tracks(path)


class TestFloatFormatting:
    def test_repr_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        detections = [
            Detection(
                camera_id="cam0", frame=0, index=i,
                x_min=float(v[0]), y_min=float(v[1]),
                x_max=float(v[0] + abs(v[2]) + 1), y_max=float(v[1] + abs(v[3]) + 1),
                confidence=float(abs(v[4]) % 1),
            )
            for i, v in enumerate(rng.normal(size=(20, 5)) * 100)
        ]
        path = tmp_path / "d.csv"
        dataio.write_detections(path, detections)
        assert dataio.read_detections(path) == detections
