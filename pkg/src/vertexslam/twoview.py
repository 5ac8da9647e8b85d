"""Two-view relative geometry for map initialization: normalized 8-point
essential-matrix estimation and its decomposition into pose candidates.

Estimation runs in the y-down/z-forward frame conventional for epipolar
algebra; conversion back to the y-up/-z-forward camera frame is a fixed
axis flip handled in `candidate_poses`.
"""

import numpy as np

from .projection import RigidPose
from . import se3

# maps camera coordinates between the capture frame (y up, -z forward) and
# the epipolar frame (y down, +z forward); involutory
_FLIP = np.diag([1.0, -1.0, -1.0])


def pixels_to_epipolar_norm(pix, intrinsics):
    """Pixels to normalized image coordinates in the epipolar frame."""
    pix = np.atleast_2d(pix)
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    mx = (2.0 * pix[:, 0] / intrinsics.width_px - 1.0) * intrinsics.aspect / f
    my = (2.0 * pix[:, 1] / intrinsics.height_px - 1.0) / f
    return np.column_stack([mx, my])


def _conditioning_transform(x):
    centroid = x.mean(axis=0)
    centered = x - centroid
    rms = np.sqrt(np.mean(np.sum(centered**2, axis=1)))
    if rms < 1e-12:
        return None
    s = np.sqrt(2.0) / rms
    T = np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])
    return T


def estimate_essential(x1, x2):
    """Normalized 8-point estimate of E with x2_h^T E x1_h = 0.

    x1, x2 are (n, 2) normalized image coordinates. Returns None for
    degenerate configurations (too few points or collapsed spread).
    """
    n = len(x1)
    if n < 8:
        return None
    T1 = _conditioning_transform(x1)
    T2 = _conditioning_transform(x2)
    if T1 is None or T2 is None:
        return None
    h1 = np.column_stack([x1, np.ones(n)]) @ T1.T
    h2 = np.column_stack([x2, np.ones(n)]) @ T2.T

    A = np.einsum("ni,nj->nij", h2, h1).reshape(n, 9)
    _, _, vt = np.linalg.svd(A)
    E = vt[-1].reshape(3, 3)
    E = T2.T @ E @ T1
    # project onto the essential manifold: two equal singular values, one zero
    U, s, Vt = np.linalg.svd(E)
    sigma = (s[0] + s[1]) * 0.5
    if sigma < 1e-15:
        return None
    return U @ np.diag([sigma, sigma, 0.0]) @ Vt


def decompose_essential(E):
    """Four (R, t) candidates with x2 = R x1 + t in the epipolar frame."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1 = U @ W @ Vt
    R2 = U @ W.T @ Vt
    t = U[:, 2]
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def candidate_to_pose(R_epi, t_epi):
    """Camera-to-world pose of the second camera, with the first camera's
    frame (capture convention) as the world frame."""
    R = _FLIP @ R_epi @ _FLIP
    t = _FLIP @ t_epi
    # (R, t) is world-to-camera; invert
    return RigidPose(se3.quat_from_matrix(R.T), -(R.T @ t))
