"""End-to-end pipeline: ingest, mask, match, reject, reconstruct, track, report.

Per-frame work (masking through reconstruction) is pure and can fan out
over a process pool; results are merged in frame order so the output is
identical for any parallelism degree. Tracking is sequential by nature.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import dataio
from .camera import CameraModel
from .errors import ConfigError, IngestError
from .mask import build_frame_mask, gate_keypoints, read_pgm
from .matching import (
    Correspondence,
    Detection,
    FeatureMatch,
    Keypoint,
    cluster_correspondences,
    knn_match,
    reject_by_landmark,
)
from .metrics import GroundTruth, keypoint_stats, rejection_stats, tracking_metrics
from .reconstruction import Observation3D, reconstruct_frame, reconstruction_stats
from .tracking import TrackerConfig, render_trajectories, run_tracker
from .voronoi import LandmarkSet, build_bounded_diagram, render_overlay

logger = logging.getLogger(__name__)

STAGES = ("voronoi-overlay", "match", "reconstruct", "track", "all")


@dataclass
class PipelineConfig:
    """All paths, stage toggles, and tunables for one pipeline run."""

    detections_path: str = ""
    keypoints_path: str = ""
    landmarks_path: str = ""
    calibration_path: str = ""
    frames_dir: str = ""
    truth_path: str = ""
    match_truth_path: str = ""
    output_dir: str = "out"

    camera_pairs: list[list[str]] | None = None
    use_mask: bool = False
    fusion: str = "all-pairs"  # or "pairwise"
    stage: str = "all"

    knn_k: int = 2
    ratio: float = 0.75
    min_support: int = 2
    landmark_anchor: str = "keypoint"
    fuse_radius_m: float = 0.15
    gate_m: float = 0.5
    jerk_sigma: float = 20.0
    meas_sigma_m: float = 0.05
    confirm_hits: int = 3
    max_misses: int = 15
    association: str = "greedy"
    canny_low: float = 50.0
    canny_high: float = 150.0
    fps: float = 30.0
    reproj_threshold_px: float = 25.0
    gap_tolerance_frames: int = 0
    validate_bounds: bool = False
    aviary_size: list[float] = field(default_factory=lambda: [4.0, 3.4, 2.0])
    parallelism: int = 1

    def validate(self) -> None:
        if self.fusion not in ("all-pairs", "pairwise"):
            raise ConfigError(f"fusion must be all-pairs or pairwise, got {self.fusion!r}")
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if not 0 < self.ratio < 1:
            raise ConfigError(f"ratio must be in (0, 1), got {self.ratio}")
        if self.knn_k < 2:
            raise ConfigError(f"knn_k must be >= 2, got {self.knn_k}")
        if self.min_support < 1:
            raise ConfigError(f"min_support must be >= 1, got {self.min_support}")
        if self.gate_m <= 0 or self.fuse_radius_m <= 0:
            raise ConfigError("gate_m and fuse_radius_m must be positive")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.landmark_anchor not in ("keypoint", "detection_center"):
            raise ConfigError(f"unknown landmark_anchor {self.landmark_anchor!r}")
        if not (0 <= self.canny_low <= self.canny_high <= 255):
            raise ConfigError("canny thresholds must satisfy 0 <= low <= high <= 255")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise IngestError(path, f"invalid JSON: {exc}")
        return cls.from_dict(doc, source=path)

    @classmethod
    def from_dict(cls, doc: dict, source="<config>") -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise IngestError(source, f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)

    def for_bundle_dir(self, bundle_dir) -> "PipelineConfig":
        """Fill unset input paths from a dataset bundle directory layout."""
        bundle = Path(bundle_dir)
        updates = {}
        defaults = {
            "detections_path": bundle / "detections.csv",
            "keypoints_path": bundle / "keypoints.csv",
            "landmarks_path": bundle / "landmarks.csv",
            "calibration_path": bundle / "calibration.json",
        }
        for name, candidate in defaults.items():
            if not getattr(self, name):
                updates[name] = str(candidate)
        for name, candidate in (
            ("truth_path", bundle / "truth.csv"),
            ("match_truth_path", bundle / "match_truth.csv"),
            ("frames_dir", bundle / "frames"),
        ):
            if not getattr(self, name) and candidate.exists():
                updates[name] = str(candidate)
        return replace(self, **{k: str(v) for k, v in updates.items()})


@dataclass
class _FramePayload:
    frame: int
    keypoints: dict[str, list[Keypoint]]
    detections: dict[tuple[str, int, int], Detection]
    pairs: list[tuple[str, str]]
    landmarks: LandmarkSet
    cameras: dict[str, CameraModel]
    config: PipelineConfig


@dataclass
class FrameResult:
    frame: int
    matches: list[FeatureMatch]
    correspondences: dict[tuple[str, str], list[Correspondence]]
    observations: list[Observation3D]


def _process_frame(payload: _FramePayload) -> FrameResult:
    cfg = payload.config
    matches_all: list[FeatureMatch] = []
    correspondences: dict[tuple[str, str], list[Correspondence]] = {}
    for cam_a, cam_b in payload.pairs:
        kps_a = payload.keypoints.get(cam_a, [])
        kps_b = payload.keypoints.get(cam_b, [])
        if not kps_a or not kps_b:
            continue
        candidates = knn_match(kps_a, kps_b, k=cfg.knn_k, ratio=cfg.ratio)
        decided, _ = reject_by_landmark(
            candidates,
            payload.landmarks,
            anchor=cfg.landmark_anchor,
            detections=payload.detections,
        )
        matches_all.extend(decided)
        correspondences[(cam_a, cam_b)] = cluster_correspondences(
            decided, min_support=cfg.min_support
        )

    bounds = None
    if cfg.validate_bounds:
        bounds = (np.zeros(3), np.asarray(cfg.aviary_size, dtype=float))
    observations = reconstruct_frame(
        payload.frame,
        correspondences,
        payload.detections,
        payload.cameras,
        fuse_radius=cfg.fuse_radius_m,
        fuse=cfg.fusion == "all-pairs",
        bounds=bounds,
    )
    return FrameResult(
        frame=payload.frame,
        matches=matches_all,
        correspondences=correspondences,
        observations=observations,
    )


def _apply_mask_stage(
    config: PipelineConfig,
    keypoints: list[Keypoint],
    detections: list[Detection],
) -> list[Keypoint]:
    """Gate keypoints to mask-on pixels built from the per-frame PGM files."""
    frames_dir = Path(config.frames_dir)
    boxes: dict[tuple[str, int], list] = {}
    for det in detections:
        boxes.setdefault((det.camera_id, det.frame), []).append(det.box)

    grouped: dict[tuple[str, int], list[Keypoint]] = {}
    for kp in keypoints:
        grouped.setdefault((kp.camera_id, kp.frame), []).append(kp)

    gated: list[Keypoint] = []
    for key in sorted(grouped):
        camera_id, frame = key
        pgm = dataio.frame_path(frames_dir, camera_id, frame)
        if not pgm.exists():
            raise IngestError(pgm, "frame file missing for mask stage")
        gray = read_pgm(pgm)
        mask = build_frame_mask(
            gray, boxes.get(key, []), low=config.canny_low, high=config.canny_high
        )
        gated.extend(gate_keypoints(mask, grouped[key]))
    return gated


def _default_pairs(camera_ids: list[str]) -> list[tuple[str, str]]:
    ordered = sorted(camera_ids)
    return [
        (ordered[i], ordered[j])
        for i in range(len(ordered))
        for j in range(i + 1, len(ordered))
    ]


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the configured stages and write outputs; returns the report."""
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info("ingesting calibration from %s", config.calibration_path)
    cameras = dataio.read_calibration(config.calibration_path)
    image_sizes = {cam_id: cam.image_size for cam_id, cam in cameras.items()}
    landmarks = dataio.read_landmarks(config.landmarks_path, image_sizes)

    for camera_id in landmarks.cameras():
        diagram = build_bounded_diagram(landmarks, camera_id)
        (out_dir / f"voronoi_{camera_id}.svg").write_text(render_overlay(diagram))
    logger.info("wrote Voronoi overlays for %d cameras", len(landmarks.cameras()))
    if config.stage == "voronoi-overlay":
        return {}

    detections = dataio.read_detections(config.detections_path)
    keypoints = dataio.read_keypoints(config.keypoints_path)
    if config.use_mask:
        if not config.frames_dir:
            raise ConfigError("use_mask requires frames_dir")
        before = len(keypoints)
        keypoints = _apply_mask_stage(config, keypoints, detections)
        logger.info("mask stage kept %d of %d keypoints", len(keypoints), before)

    detection_table = {(d.camera_id, d.frame, d.index): d for d in detections}
    keypoints_by_frame: dict[int, dict[str, list[Keypoint]]] = {}
    for kp in keypoints:
        key = (kp.camera_id, kp.frame, kp.detection_index)
        if key not in detection_table:
            raise IngestError(
                config.keypoints_path,
                f"keypoint references missing detection {key}",
            )
        keypoints_by_frame.setdefault(kp.frame, {}).setdefault(
            kp.camera_id, []
        ).append(kp)

    if config.camera_pairs is not None:
        pairs = [tuple(p) for p in config.camera_pairs]
        for pair in pairs:
            if len(pair) != 2 or pair[0] not in cameras or pair[1] not in cameras:
                raise ConfigError(f"bad camera pair {pair!r}")
    else:
        pairs = _default_pairs(list(cameras))

    detections_by_frame: dict[int, dict[tuple[str, int, int], Detection]] = {}
    for key, det in detection_table.items():
        detections_by_frame.setdefault(det.frame, {})[key] = det

    frames = sorted(set(keypoints_by_frame) | set(detections_by_frame))
    payloads = [
        _FramePayload(
            frame=frame,
            keypoints=keypoints_by_frame.get(frame, {}),
            detections=detections_by_frame.get(frame, {}),
            pairs=pairs,
            landmarks=landmarks,
            cameras=cameras,
            config=config,
        )
        for frame in frames
    ]

    logger.info(
        "processing %d frames over %d camera pairs (parallelism %d)",
        len(frames), len(pairs), config.parallelism,
    )
    if config.parallelism > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(_process_frame, payloads, chunksize=8))
    else:
        results = [_process_frame(p) for p in payloads]

    all_matches = [m for r in results for m in r.matches]
    observations = [obs for r in results for obs in r.observations]

    truth = None
    if config.truth_path and config.match_truth_path:
        truth = GroundTruth(
            positions=dataio.read_truth(config.truth_path),
            identities=dataio.read_match_truth(config.match_truth_path),
        )

    report: dict = {}
    counts: dict[str, dict[int, int]] = {}
    for kp in keypoints:
        counts.setdefault(kp.camera_id, {}).setdefault(kp.frame, 0)
        counts[kp.camera_id][kp.frame] += 1
    if frames:
        interval = list(range(frames[0], frames[-1] + 1))
        report["table2"] = keypoint_stats(counts, interval)
    if all_matches:
        report["table3"] = rejection_stats(all_matches, truth)

    _write_correspondences(out_dir / "correspondences.csv", results)
    if config.stage == "match":
        dataio.write_metrics(out_dir / "metrics.json", report)
        return report

    if observations:
        report["table4"] = reconstruction_stats(
            observations, all_matches, cameras, threshold_px=config.reproj_threshold_px
        )
    obs_rows = []
    for result in results:
        for hint, obs in enumerate(result.observations):
            cams_sorted = sorted(obs.reprojection_errors)
            err_a = obs.reprojection_errors[cams_sorted[0]] if cams_sorted else 0.0
            err_b = (
                obs.reprojection_errors[cams_sorted[1]]
                if len(cams_sorted) > 1
                else err_a
            )
            obs_rows.append((result.frame, hint, obs.position, err_a, err_b))
    dataio.write_observations(out_dir / "observations.csv", obs_rows)
    if config.stage == "reconstruct":
        dataio.write_metrics(out_dir / "metrics.json", report)
        return report

    tracker_config = TrackerConfig(
        dt=1.0 / config.fps,
        jerk_sigma=config.jerk_sigma,
        meas_sigma=config.meas_sigma_m,
        gate=config.gate_m,
        confirm_hits=config.confirm_hits,
        max_misses=config.max_misses,
        association=config.association,
    )
    observations_by_frame: dict[int, list[np.ndarray]] = {}
    for result in results:
        observations_by_frame[result.frame] = [
            obs.position for obs in result.observations
        ]
    track_rows = run_tracker(observations_by_frame, tracker_config)
    dataio.write_tracks(out_dir / "tracks.csv", track_rows)
    (out_dir / "trajectories.svg").write_text(render_trajectories(track_rows))
    logger.info("tracked %d row(s) over %d frame(s)",
                len(track_rows), len(observations_by_frame))

    if truth is not None:
        report["table5"] = tracking_metrics(
            track_rows,
            truth,
            fps=config.fps,
            gate=config.gate_m,
            gap_tolerance_frames=config.gap_tolerance_frames,
        )
    dataio.write_metrics(out_dir / "metrics.json", report)
    return report


def _write_correspondences(path, results: list[FrameResult]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "frame", "camera_a", "camera_b",
                "detection_index_a", "detection_index_b",
                "support", "mean_descriptor_distance",
            ]
        )
        for result in results:
            for (cam_a, cam_b) in sorted(result.correspondences):
                for corr in result.correspondences[(cam_a, cam_b)]:
                    writer.writerow(
                        [
                            result.frame, cam_a, cam_b,
                            corr.detection_index_a, corr.detection_index_b,
                            corr.support, repr(corr.mean_descriptor_distance),
                        ]
                    )
