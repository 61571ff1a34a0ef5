"""Evaluation metrics: keypoint counts, rejection quality, tracking quality."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, MissingLabelsError
from .matching import FeatureMatch, KEPT

DEFAULT_HORIZONS_S = (10.0, 30.0, 60.0)
DEFAULT_TRACK_GATE_M = 0.5


@dataclass
class GroundTruth:
    """Truth positions per frame and detection-to-identity labels.

    ``positions[frame][identity]`` is the true 3D position; ``identities``
    maps (camera_id, frame, detection_index) to the bird identity that
    produced the detection.
    """

    positions: dict[int, dict[int, np.ndarray]]
    identities: dict[tuple[str, int, int], int]

    def match_is_correct(self, match: FeatureMatch) -> bool:
        key_a = (
            match.keypoint_a.camera_id,
            match.keypoint_a.frame,
            match.keypoint_a.detection_index,
        )
        key_b = (
            match.keypoint_b.camera_id,
            match.keypoint_b.frame,
            match.keypoint_b.detection_index,
        )
        if key_a not in self.identities or key_b not in self.identities:
            raise MissingLabelsError(f"no identity label for {key_a} or {key_b}")
        return self.identities[key_a] == self.identities[key_b]


def keypoint_stats(
    counts_by_camera_frame: dict[str, dict[int, int]], frames: list[int]
) -> dict:
    """Per-camera keypoint-count statistics over a frame interval.

    Frames without keypoints count as zero. Std is the population standard
    deviation.
    """
    if not frames:
        raise EmptyInputError("keypoint_stats: empty frame interval")
    record = {}
    for camera_id in sorted(counts_by_camera_frame):
        per_frame = counts_by_camera_frame[camera_id]
        counts = np.array([per_frame.get(f, 0) for f in frames], dtype=float)
        record[camera_id] = {
            "min": int(counts.min()),
            "max": int(counts.max()),
            "mean": float(counts.mean()),
            "std": float(counts.std()),
        }
    return record


def rejection_stats(
    matches: list[FeatureMatch], truth: GroundTruth | None = None
) -> dict:
    """Rejection-rate and correctness record for decided matches.

    Always reports the per-frame rejection percentage (mean and std);
    with ground truth, also the ratios of correct kept matches against
    all initial and all kept matches.
    """
    undecided = [m for m in matches if m.verdict is None]
    if undecided:
        raise ValueError(f"{len(undecided)} matches have no verdict")

    per_frame: dict[int, list[bool]] = defaultdict(list)
    for match in matches:
        per_frame[match.keypoint_a.frame].append(match.verdict != KEPT)
    pct = np.array(
        [100.0 * sum(v) / len(v) for _, v in sorted(per_frame.items())]
    )

    record = {
        "avg_rejection_pct": float(pct.mean()) if pct.size else 0.0,
        "std_rejection_pct": float(pct.std()) if pct.size else 0.0,
        "total_initial_matches": len(matches),
        "total_final_matches": sum(1 for m in matches if m.verdict == KEPT),
        "ratio_correct_final_over_initial": None,
        "ratio_correct_final_over_final": None,
    }
    if truth is not None:
        kept = [m for m in matches if m.verdict == KEPT]
        correct_final = sum(1 for m in kept if truth.match_is_correct(m))
        record["ratio_correct_final_over_initial"] = (
            correct_final / len(matches) if matches else None
        )
        record["ratio_correct_final_over_final"] = (
            correct_final / len(kept) if kept else None
        )
    return record


def _match_truth_to_tracks(
    truth_positions: dict[int, dict[int, np.ndarray]],
    track_rows: list[tuple[int, int, str, np.ndarray]],
    gate: float,
) -> dict[int, list[tuple[int, int | None]]]:
    """Per identity, the (frame, matched track id or None) sequence."""
    tracks_by_frame: dict[int, list[tuple[int, np.ndarray]]] = defaultdict(list)
    for frame, track_id, _, position in track_rows:
        tracks_by_frame[frame].append((track_id, np.asarray(position, dtype=float)))

    assignments: dict[int, list[tuple[int, int | None]]] = defaultdict(list)
    for frame in sorted(truth_positions):
        candidates = tracks_by_frame.get(frame, [])
        for identity in sorted(truth_positions[frame]):
            true_pos = np.asarray(truth_positions[frame][identity], dtype=float)
            best_id = None
            best_dist = float("inf")
            for track_id, pos in sorted(candidates, key=lambda c: c[0]):
                dist = float(np.linalg.norm(pos - true_pos))
                if dist <= gate and dist < best_dist:
                    best_id, best_dist = track_id, dist
            assignments[identity].append((frame, best_id))
    return assignments


def tracking_metrics(
    track_rows: list[tuple[int, int, str, np.ndarray]],
    truth: GroundTruth,
    fps: float = 30.0,
    gate: float = DEFAULT_TRACK_GATE_M,
    horizons_s: tuple[float, ...] = DEFAULT_HORIZONS_S,
    gap_tolerance_frames: int = 0,
) -> dict:
    """ID-switch count and track-persistence percentages against truth.

    Each truth identity is matched per frame to its nearest track within
    the gate. An ID switch is a change in the matched track id between an
    identity's consecutive matched frames; unmatched frames are misses and
    never switches. Persistence at horizon T is the share of identities
    that hold one single track id for at least T seconds; matched frames
    must be consecutive up to ``gap_tolerance_frames`` unmatched frames.
    """
    assignments = _match_truth_to_tracks(truth.positions, track_rows, gate)

    switches = 0
    persistence_counts = {h: 0 for h in horizons_s}
    identities = sorted(assignments)
    for identity in identities:
        seq = assignments[identity]
        previous_id = None
        for _, track_id in seq:
            if track_id is None:
                continue
            if previous_id is not None and track_id != previous_id:
                switches += 1
            previous_id = track_id

        # Longest continuous single-id run, allowing short unmatched gaps.
        best_run_frames = 0
        run_id = None
        run_start = None
        last_matched = None
        gap = 0
        for frame, track_id in seq:
            if track_id is None:
                gap += 1
                if run_id is not None and gap > gap_tolerance_frames:
                    best_run_frames = max(best_run_frames, last_matched - run_start + 1)
                    run_id, run_start = None, None
                continue
            if track_id != run_id:
                if run_id is not None:
                    best_run_frames = max(best_run_frames, last_matched - run_start + 1)
                run_id = track_id
                run_start = frame
            gap = 0
            last_matched = frame
        if run_id is not None:
            best_run_frames = max(best_run_frames, last_matched - run_start + 1)

        for horizon in horizons_s:
            if best_run_frames >= horizon * fps:
                persistence_counts[horizon] += 1

    n_frames = len(truth.positions)
    duration_minutes = n_frames / fps / 60.0 if n_frames else 0.0
    n_identities = len(identities)
    record = {
        "total_id_switches": switches,
        "id_switches_per_minute": (
            switches / duration_minutes if duration_minutes > 0 else 0.0
        ),
        "n_identities": n_identities,
    }
    for horizon in horizons_s:
        pct = (
            100.0 * persistence_counts[horizon] / n_identities
            if n_identities
            else 0.0
        )
        record[f"birds_tracked_over_{horizon:g}s_pct"] = pct
    return record
