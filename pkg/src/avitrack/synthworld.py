"""Synthetic aviary scenes with exact ground truth.

Generates a camera rig, landmark layout, bird trajectories, detections,
keypoints with controllable descriptor ambiguity, and truth labels, all
in the same file formats the pipeline ingests. Given one seed the whole
bundle is reproducible bit for bit, which makes it usable as an oracle
for matching, reconstruction, and tracking tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .camera import CameraModel, project_many
from .errors import ConfigError
from .mask import GrayFrame, write_pgm
from .matching import Detection, Keypoint
from .metrics import GroundTruth
from .voronoi import LandmarkSet

MOTION_MODES = ("free", "anchored", "crossing")


@dataclass
class SceneConfig:
    """Knobs for one synthetic scene.

    Descriptors follow an appearance model with three layers: a per-bird
    base vector, a library of ``feature_pool_size`` shared feature
    vectors of which each camera view observes a random 5-15 subset per
    detection, and per-observation Gaussian noise (``descriptor_noise``).
    ``ambiguity`` is the probability that a bird uses the shared base
    instead of its own; at 1.0 all birds look identical and a matcher can
    only tell features apart, not birds. ``motion`` picks free flight,
    per-landmark anchored wandering, or a deterministic two-bird crossing.
    """

    aviary_size: tuple[float, float, float] = (4.0, 3.4, 2.0)  # 27.2 m^3
    image_size: tuple[int, int] = (1920, 1080)
    camera_count: int = 5
    fps: float = 30.0
    duration_s: float = 2.0
    bird_count: int = 5
    landmark_count: int = 6
    landmarks: list[tuple[float, float, float]] | None = None
    pixel_noise: float = 0.0
    descriptor_noise: float = 0.0
    ambiguity: float = 0.0
    descriptor_length: int = 128
    feature_pool_size: int = 40
    feature_scale: float = 0.3
    base_scale: float = 0.6
    body_radius_m: float = 0.15
    keypoints_per_detection: tuple[int, int] = (5, 15)
    focal_px: float | None = None  # default scales with image width
    distortion: tuple[float, float, float, float, float] = (
        0.02, -0.005, 0.0005, -0.0005, 0.0,
    )
    seed: int = 0
    motion: str = "free"
    wander_radius_m: float = 0.3
    max_speed: float = 3.0
    max_accel: float = 4.0
    jerk_burst_rate: float = 0.0
    occlusion: bool = True
    emit_frames: bool = False

    def validate(self) -> None:
        if any(v <= 0 for v in self.aviary_size):
            raise ConfigError(f"aviary_size must be positive, got {self.aviary_size}")
        if self.camera_count < 2:
            raise ConfigError("camera_count must be at least 2")
        if self.bird_count < 1:
            raise ConfigError("bird_count must be at least 1")
        if self.fps <= 0 or self.duration_s <= 0:
            raise ConfigError("fps and duration_s must be positive")
        if not (0.0 <= self.ambiguity <= 1.0):
            raise ConfigError(f"ambiguity must be in [0, 1], got {self.ambiguity}")
        if self.pixel_noise < 0 or self.descriptor_noise < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if self.motion not in MOTION_MODES:
            raise ConfigError(f"motion must be one of {MOTION_MODES}")
        kmin, kmax = self.keypoints_per_detection
        if not (1 <= kmin <= kmax):
            raise ConfigError(
                f"keypoints_per_detection must be an increasing pair, "
                f"got {self.keypoints_per_detection}"
            )
        if self.feature_pool_size < kmax:
            raise ConfigError(
                f"feature_pool_size ({self.feature_pool_size}) must cover the "
                f"largest keypoint count ({kmax})"
            )
        if self.landmarks is None and self.landmark_count < 1:
            raise ConfigError("landmark_count must be at least 1")
        if self.landmarks is not None and len(self.landmarks) == 0:
            raise ConfigError("explicit landmark list may not be empty")
        if self.wander_radius_m <= 0 or self.max_speed <= 0 or self.max_accel <= 0:
            raise ConfigError(
                "wander_radius_m, max_speed, and max_accel must be positive"
            )

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.fps))

    @property
    def effective_focal_px(self) -> float:
        if self.focal_px is not None:
            return self.focal_px
        return 0.546875 * self.image_size[0]  # 1050 px at width 1920


@dataclass
class DatasetBundle:
    """Everything one scene produces, in memory."""

    config: SceneConfig
    cameras: dict[str, CameraModel]
    detections: list[Detection]
    keypoints: list[Keypoint]
    landmark_set: LandmarkSet
    landmarks_3d: np.ndarray
    truth_positions: dict[int, dict[int, np.ndarray]]
    detection_identities: dict[tuple[str, int, int], int]
    frames: dict[tuple[str, int], GrayFrame] = field(default_factory=dict)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dataio.write_calibration(out / "calibration.json", list(self.cameras.values()))
        dataio.write_detections(out / "detections.csv", self.detections)
        dataio.write_keypoints(out / "keypoints.csv", self.keypoints)
        dataio.write_landmarks(out / "landmarks.csv", self.landmark_set)
        dataio.write_truth(out / "truth.csv", self.truth_positions)
        dataio.write_match_truth(out / "match_truth.csv", self.detection_identities)
        if self.frames:
            frames_dir = out / "frames"
            frames_dir.mkdir(exist_ok=True)
            for (camera_id, frame), image in sorted(self.frames.items()):
                write_pgm(dataio.frame_path(frames_dir, camera_id, frame), image)


def _look_at_rotation(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera rotation for a camera at ``eye`` looking at ``target``."""
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ConfigError("camera looks straight along the vertical axis")
    right = right / norm
    down = np.cross(forward, right)
    return np.vstack([right, down, forward])


def build_camera_rig(config: SceneConfig) -> dict[str, CameraModel]:
    """Cameras on a ring around the aviary, all framing the whole box."""
    size = np.asarray(config.aviary_size, dtype=float)
    center = size / 2.0
    radius = math.hypot(size[0], size[1]) / 2.0 + 2.6
    height = 0.62 * size[2]
    w, h = config.image_size
    cameras = {}
    for i in range(config.camera_count):
        angle = 2.0 * math.pi * i / config.camera_count + math.pi / config.camera_count
        eye = np.array(
            [
                center[0] + radius * math.cos(angle),
                center[1] + radius * math.sin(angle),
                height,
            ]
        )
        rotation = _look_at_rotation(eye, center)
        cam = CameraModel(
            cam_id=f"cam{i}",
            fx=config.effective_focal_px,
            fy=config.effective_focal_px,
            cx=w / 2.0,
            cy=h / 2.0,
            dist=np.asarray(config.distortion, dtype=float),
            rotation=rotation,
            translation=-rotation @ eye,
            image_size=(w, h),
        )
        cameras[cam.cam_id] = cam
    return cameras


def _box_corners(size: np.ndarray) -> np.ndarray:
    xs = [0.0, size[0]]
    ys = [0.0, size[1]]
    zs = [0.0, size[2]]
    return np.array([[x, y, z] for x in xs for y in ys for z in zs])


def _check_rig_covers_box(cameras: dict[str, CameraModel], size: np.ndarray) -> None:
    corners = _box_corners(size)
    for cam in cameras.values():
        pixels, in_front = project_many(cam, corners)
        w, h = cam.image_size
        if not np.all(in_front):
            raise ConfigError(f"camera {cam.cam_id} has aviary corners behind it")
        inside = (
            (pixels[:, 0] >= 0)
            & (pixels[:, 0] < w)
            & (pixels[:, 1] >= 0)
            & (pixels[:, 1] < h)
        )
        if not np.all(inside):
            raise ConfigError(
                f"camera {cam.cam_id} does not frame the whole aviary; "
                f"lower focal_px or move cameras back"
            )


def _default_landmarks(
    config: SceneConfig, rng: np.random.Generator
) -> np.ndarray:
    """Well-separated landmark positions in the core of the box."""
    size = np.asarray(config.aviary_size, dtype=float)
    lo = 0.18 * size
    hi = 0.82 * size
    n = config.landmark_count
    core_diag = float(np.linalg.norm(hi - lo))
    min_sep = 0.55 * core_diag / max(1.0, n ** (1.0 / 3.0) + 1.0)
    points: list[np.ndarray] = []
    while len(points) < n:
        for _ in range(200):
            candidate = rng.uniform(lo, hi)
            if all(np.linalg.norm(candidate - p) >= min_sep for p in points):
                points.append(candidate)
                break
        else:
            min_sep *= 0.8
    return np.asarray(points)


class _BirdMotion:
    """Piecewise constant-acceleration flight inside an axis-aligned box."""

    def __init__(
        self,
        lo: np.ndarray,
        hi: np.ndarray,
        rng: np.random.Generator,
        config: SceneConfig,
        position: np.ndarray | None = None,
        velocity: np.ndarray | None = None,
        scripted: bool = False,
    ):
        self.lo = lo
        self.hi = hi
        self.config = config
        self.scripted = scripted
        self.position = (
            position.copy() if position is not None else rng.uniform(lo, hi)
        )
        self.velocity = (
            velocity.copy()
            if velocity is not None
            else rng.uniform(-1.5, 1.5, size=3)
        )
        self.acceleration = np.zeros(3)
        self.segment_left = 0.0
        if not scripted:
            self._new_segment(rng)

    def _new_segment(self, rng: np.random.Generator) -> None:
        self.segment_left = float(rng.uniform(0.5, 2.0))
        self.acceleration = rng.uniform(
            -self.config.max_accel, self.config.max_accel, size=3
        )
        speed = float(np.linalg.norm(self.velocity))
        if speed > self.config.max_speed:
            self.velocity *= self.config.max_speed / speed

    def advance(self, dt: float, rng: np.random.Generator) -> None:
        if not self.scripted:
            if self.segment_left <= 0.0:
                self._new_segment(rng)
            self.segment_left -= dt
            if self.config.jerk_burst_rate > 0.0:
                if rng.uniform() < self.config.jerk_burst_rate:
                    self.velocity += rng.normal(0.0, 1.0, size=3)
        self.position = (
            self.position + self.velocity * dt + 0.5 * self.acceleration * dt * dt
        )
        self.velocity = self.velocity + self.acceleration * dt
        for axis in range(3):
            if self.position[axis] < self.lo[axis]:
                self.position[axis] = 2.0 * self.lo[axis] - self.position[axis]
                self.velocity[axis] = -self.velocity[axis]
                self.acceleration[axis] = -self.acceleration[axis]
            elif self.position[axis] > self.hi[axis]:
                self.position[axis] = 2.0 * self.hi[axis] - self.position[axis]
                self.velocity[axis] = -self.velocity[axis]
                self.acceleration[axis] = -self.acceleration[axis]


def _make_birds(
    config: SceneConfig,
    landmarks_3d: np.ndarray,
    rng: np.random.Generator,
) -> list[_BirdMotion]:
    size = np.asarray(config.aviary_size, dtype=float)
    margin = config.body_radius_m + 0.05
    box_lo = np.full(3, margin)
    box_hi = size - margin

    birds = []
    if config.motion == "anchored":
        if len(landmarks_3d) < config.bird_count:
            raise ConfigError(
                "anchored motion needs at least one landmark per bird"
            )
        for i in range(config.bird_count):
            anchor = np.clip(
                landmarks_3d[i],
                box_lo + config.wander_radius_m,
                box_hi - config.wander_radius_m,
            )
            lo = anchor - config.wander_radius_m
            hi = anchor + config.wander_radius_m
            birds.append(
                _BirdMotion(lo, hi, rng, config, position=anchor.copy())
            )
    elif config.motion == "crossing":
        if config.bird_count < 2:
            raise ConfigError("crossing motion needs at least 2 birds")
        span = box_hi[0] - box_lo[0]
        speed = span / config.duration_s
        mid_y = size[1] / 2.0
        mid_z = size[2] / 2.0
        offset = 0.15
        starts = [
            (np.array([box_lo[0], mid_y - offset, mid_z]), np.array([speed, 0.0, 0.0])),
            (np.array([box_hi[0], mid_y + offset, mid_z]), np.array([-speed, 0.0, 0.0])),
        ]
        for position, velocity in starts:
            birds.append(
                _BirdMotion(
                    box_lo, box_hi, rng, config,
                    position=position, velocity=velocity, scripted=True,
                )
            )
        for _ in range(config.bird_count - 2):
            birds.append(_BirdMotion(box_lo, box_hi, rng, config))
    else:
        for _ in range(config.bird_count):
            birds.append(_BirdMotion(box_lo, box_hi, rng, config))
    return birds


def _base_descriptors(config: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    shared = rng.normal(0.0, config.base_scale, config.descriptor_length)
    bases = np.empty((config.bird_count, config.descriptor_length))
    for i in range(config.bird_count):
        use_shared = rng.uniform() < config.ambiguity
        own = rng.normal(0.0, config.base_scale, config.descriptor_length)
        bases[i] = shared if use_shared else own
    return bases


def _feature_pool(config: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(
        0.0, config.feature_scale,
        (config.feature_pool_size, config.descriptor_length),
    )


def _render_frame(
    config: SceneConfig,
    boxes: list[tuple[float, float, float, float]],
) -> GrayFrame:
    w, h = config.image_size
    pixels = np.full((h, w), 30, dtype=np.uint8)
    for x_min, y_min, x_max, y_max in boxes:
        cx = (x_min + x_max) / 2.0
        cy = (y_min + y_max) / 2.0
        rx = max((x_max - x_min) / 2.0 * 0.8, 1.0)
        ry = max((y_max - y_min) / 2.0 * 0.8, 1.0)
        c0 = max(0, int(math.floor(x_min)))
        c1 = min(w, int(math.ceil(x_max)) + 1)
        r0 = max(0, int(math.floor(y_min)))
        r1 = min(h, int(math.ceil(y_max)) + 1)
        if c1 <= c0 or r1 <= r0:
            continue
        ys, xs = np.mgrid[r0:r1, c0:c1]
        inside = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        pixels[r0:r1, c0:c1][inside] = 215
    return GrayFrame(width=w, height=h, pixels=pixels)


def generate(config: SceneConfig) -> DatasetBundle:
    """Produce one deterministic dataset bundle from a scene config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    size = np.asarray(config.aviary_size, dtype=float)

    cameras = build_camera_rig(config)
    _check_rig_covers_box(cameras, size)
    camera_ids = sorted(cameras)

    if config.landmarks is not None:
        landmarks_3d = np.asarray(config.landmarks, dtype=float).reshape(-1, 3)
        if np.any(landmarks_3d < 0) or np.any(landmarks_3d > size):
            raise ConfigError("explicit landmarks must lie inside the aviary box")
    else:
        landmarks_3d = _default_landmarks(config, rng)

    landmark_set = LandmarkSet(
        {cam_id: cameras[cam_id].image_size for cam_id in camera_ids}
    )
    for cam_id in camera_ids:
        pixels, in_front = project_many(cameras[cam_id], landmarks_3d)
        w, h = cameras[cam_id].image_size
        for gid, (pix, ok) in enumerate(zip(pixels, in_front)):
            if not ok or not (0 <= pix[0] < w and 0 <= pix[1] < h):
                raise ConfigError(
                    f"landmark {gid} does not project inside camera {cam_id}"
                )
            try:
                landmark_set.add(cam_id, gid, pix)
            except ValueError as exc:
                raise ConfigError(str(exc))

    bases = _base_descriptors(config, rng)
    feature_pool = _feature_pool(config, rng)
    birds = _make_birds(config, landmarks_3d, rng)
    dt = 1.0 / config.fps

    detections: list[Detection] = []
    keypoints: list[Keypoint] = []
    truth_positions: dict[int, dict[int, np.ndarray]] = {}
    detection_identities: dict[tuple[str, int, int], int] = {}
    frames: dict[tuple[str, int], GrayFrame] = {}

    kmin, kmax = config.keypoints_per_detection
    for frame in range(config.frame_count):
        if frame > 0:
            for bird in birds:
                bird.advance(dt, rng)
        truth_positions[frame] = {
            identity: bird.position.copy() for identity, bird in enumerate(birds)
        }

        for cam_id in camera_ids:
            cam = cameras[cam_id]
            w, h = cam.image_size
            positions = np.array([bird.position for bird in birds])
            pixels, in_front = project_many(cam, positions)
            depths = cam.camera_frame(positions)[:, 2]

            visible: list[tuple[int, np.ndarray, float, float, float]] = []
            for identity in range(len(birds)):
                if not in_front[identity]:
                    continue
                z = depths[identity]
                half_w = cam.fx * config.body_radius_m / z
                half_h = cam.fy * config.body_radius_m / z
                center = pixels[identity]
                if config.pixel_noise > 0:
                    center = center + rng.normal(0.0, config.pixel_noise, size=2)
                if (
                    center[0] - half_w < 0
                    or center[0] + half_w >= w
                    or center[1] - half_h < 0
                    or center[1] + half_h >= h
                ):
                    continue
                visible.append((identity, center, half_w, half_h, z))

            if config.occlusion and len(visible) > 1:
                survivors = []
                for i, (identity, center, hw, hh, z) in enumerate(visible):
                    draw = rng.uniform()
                    worst = 0.0
                    area = 4.0 * hw * hh
                    for j, (_, c2, hw2, hh2, z2) in enumerate(visible):
                        if j == i or z2 >= z:
                            continue
                        ix = min(center[0] + hw, c2[0] + hw2) - max(
                            center[0] - hw, c2[0] - hw2
                        )
                        iy = min(center[1] + hh, c2[1] + hh2) - max(
                            center[1] - hh, c2[1] - hh2
                        )
                        if ix > 0 and iy > 0:
                            worst = max(worst, ix * iy / area)
                    if draw >= worst:
                        survivors.append((identity, center, hw, hh, z))
                visible = survivors

            boxes_for_render = []
            for det_index, (identity, center, half_w, half_h, _) in enumerate(visible):
                box = (
                    float(center[0] - half_w),
                    float(center[1] - half_h),
                    float(center[0] + half_w),
                    float(center[1] + half_h),
                )
                detections.append(
                    Detection(
                        camera_id=cam_id,
                        frame=frame,
                        index=det_index,
                        x_min=box[0],
                        y_min=box[1],
                        x_max=box[2],
                        y_max=box[3],
                        confidence=float(rng.uniform(0.8, 1.0)),
                    )
                )
                detection_identities[(cam_id, frame, det_index)] = identity
                boxes_for_render.append(box)

                count = int(rng.integers(kmin, kmax + 1))
                offsets = rng.uniform(-0.8, 0.8, size=(count, 2))
                kp_positions = np.column_stack(
                    [
                        center[0] + offsets[:, 0] * half_w,
                        center[1] + offsets[:, 1] * half_h,
                    ]
                )
                if config.pixel_noise > 0:
                    kp_positions = kp_positions + rng.normal(
                        0.0, config.pixel_noise, size=kp_positions.shape
                    )
                kp_positions[:, 0] = np.clip(
                    kp_positions[:, 0], box[0], np.nextafter(box[2], -np.inf)
                )
                kp_positions[:, 1] = np.clip(
                    kp_positions[:, 1], box[1], np.nextafter(box[3], -np.inf)
                )
                slots = rng.choice(config.feature_pool_size, size=count, replace=False)
                noise = rng.standard_normal((count, config.descriptor_length))
                # Quantized to 1e-6: keeps emitted CSVs compact, far below
                # any meaningful descriptor-noise scale.
                descriptors = np.round(
                    bases[identity]
                    + feature_pool[slots]
                    + config.descriptor_noise * noise,
                    6,
                )
                for k in range(count):
                    keypoints.append(
                        Keypoint(
                            camera_id=cam_id,
                            frame=frame,
                            detection_index=det_index,
                            position=kp_positions[k],
                            descriptor=descriptors[k],
                        )
                    )

            if config.emit_frames:
                frames[(cam_id, frame)] = _render_frame(config, boxes_for_render)

    return DatasetBundle(
        config=config,
        cameras=cameras,
        detections=detections,
        keypoints=keypoints,
        landmark_set=landmark_set,
        landmarks_3d=landmarks_3d,
        truth_positions=truth_positions,
        detection_identities=detection_identities,
        frames=frames,
    )


def truth_labels(bundle: DatasetBundle) -> GroundTruth:
    """Ground-truth record for the metrics suite."""
    return GroundTruth(
        positions=bundle.truth_positions,
        identities=dict(bundle.detection_identities),
    )
