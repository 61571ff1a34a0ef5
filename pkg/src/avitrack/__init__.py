"""Multi-view 3D bird tracking with landmark-based match outlier rejection."""

from .camera import CameraModel, project, projection_matrix, refine_calibration
from .matching import (
    Correspondence,
    Detection,
    FeatureMatch,
    Keypoint,
    cluster_correspondences,
    knn_match,
    reject_by_landmark,
)
from .reconstruction import Observation3D, reconstruct_frame, triangulate
from .synthworld import DatasetBundle, SceneConfig, generate, truth_labels
from .tracking import MultiObjectTracker, TrackerConfig, TrackState
from .voronoi import BoundedVoronoi, LandmarkSet, build_bounded_diagram, nearest_landmark

__version__ = "0.1.0"

__all__ = [
    "BoundedVoronoi",
    "CameraModel",
    "Correspondence",
    "DatasetBundle",
    "Detection",
    "FeatureMatch",
    "Keypoint",
    "LandmarkSet",
    "MultiObjectTracker",
    "Observation3D",
    "SceneConfig",
    "TrackState",
    "TrackerConfig",
    "build_bounded_diagram",
    "cluster_correspondences",
    "generate",
    "knn_match",
    "nearest_landmark",
    "project",
    "projection_matrix",
    "reconstruct_frame",
    "refine_calibration",
    "reject_by_landmark",
    "triangulate",
    "truth_labels",
]
