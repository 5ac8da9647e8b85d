import numpy as np
import pytest

from vertexslam.geometry import MeshModel
from vertexslam.projection import CameraIntrinsics, CaptureConfig, RigidPose


@pytest.fixture
def intrinsics():
    """The oracle camera: 90 deg fov, square kilo-pixel image."""
    return CameraIntrinsics(fov_y_deg=90.0, width_px=1000, height_px=1000,
                            near=0.1, far=100.0)


@pytest.fixture
def capture_cfg():
    return CaptureConfig(z_min=0.1, z_max=100.0)


@pytest.fixture
def unit_cube():
    """Unit cube centered at the origin; ids 0..7 in generation order."""
    corners = [
        (x, y, z)
        for x in (-0.5, 0.5)
        for y in (-0.5, 0.5)
        for z in (-0.5, 0.5)
    ]
    return MeshModel(np.array(corners))


@pytest.fixture
def camera_at_z3():
    """Camera at (0, 0, 3) with identity rotation: looking down -z."""
    return RigidPose(translation=(0.0, 0.0, 3.0))


def random_pose(rng, max_angle=np.pi * 0.9, max_dist=5.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    q = np.concatenate([axis * np.sin(angle / 2.0), [np.cos(angle / 2.0)]])
    t = rng.uniform(-max_dist, max_dist, size=3)
    return RigidPose(q, t)
