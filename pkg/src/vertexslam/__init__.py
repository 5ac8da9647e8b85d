"""Monocular SLAM simulator: polygonal-mesh vertices act as perfectly
identified image features, driving a capture -> match -> track -> map ->
windowed-refinement pipeline with offline benchmarking and an interactive
live mode."""

from .geometry import MeshModel, SceneSpec, generate_scene, load_mesh
from .projection import (
    CameraIntrinsics,
    CaptureConfig,
    FeatureFrame,
    RigidPose,
    VertexFeature,
    capture_frame,
)
from .slam_core import SlamConfig, SlamMap, SlamSession

__version__ = "0.1.0"
