"""Vertex capture: project mesh vertices through model/view/projection to
pixel coordinates with a view-space depth gate, producing feature frames.

Image origin is top-left, so the pixel v axis runs opposite to the
normalized y axis; depth is positive in front of the camera.
"""

from dataclasses import dataclass

import numpy as np

from . import se3


@dataclass(frozen=True)
class CameraIntrinsics:
    fov_y_deg: float = 90.0
    width_px: int = 1000
    height_px: int = 1000
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.fov_y_deg < 180.0:
            raise ValueError(f"fov_y_deg must be in (0, 180), got {self.fov_y_deg}")
        if not 0.0 < self.near < self.far:
            raise ValueError(f"need 0 < near < far, got near={self.near} far={self.far}")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be >= 1 px")

    @property
    def aspect(self):
        return self.width_px / self.height_px

    @property
    def focal_px(self):
        """Vertical focal length in pixels: h/2 / tan(fov_y/2)."""
        return self.height_px * 0.5 / np.tan(np.radians(self.fov_y_deg) * 0.5)


class RigidPose:
    """Camera-to-world rigid transform stored as (unit quaternion, translation)."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=(0.0, 0.0, 0.0, 1.0), translation=(0.0, 0.0, 0.0)):
        q = np.asarray(rotation, dtype=float)
        if q.shape != (4,):
            raise ValueError("rotation must be a 4-vector quaternion (x, y, z, w)")
        self.rotation = se3.quat_normalize(q)
        t = np.asarray(translation, dtype=float)
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("pose components must be finite")
        self.translation = t.copy()

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(se3.quat_from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0)):
        """Camera at `eye` with its -z axis pointing at `target`."""
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        n = np.linalg.norm(forward)
        if n < 1e-12:
            raise ValueError("look_at eye and target coincide")
        forward = forward / n
        side = np.cross(forward, np.asarray(up, dtype=float))
        ns = np.linalg.norm(side)
        if ns < 1e-12:
            raise ValueError("look_at direction parallel to up vector")
        side = side / ns
        cam_up = np.cross(side, forward)
        R = np.column_stack([side, cam_up, -forward])
        return cls(se3.quat_from_matrix(R), eye)

    def rotation_matrix(self):
        return se3.quat_to_matrix(self.rotation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.translation
        return T

    def view_matrix(self):
        """World-to-camera 4x4 (inverse of the camera-to-world transform)."""
        R = self.rotation_matrix()
        V = np.eye(4)
        V[:3, :3] = R.T
        V[:3, 3] = -R.T @ self.translation
        return V

    def inverse(self):
        q_inv = se3.quat_conjugate(self.rotation)
        R_inv = se3.quat_to_matrix(q_inv)
        return RigidPose(q_inv, -(R_inv @ self.translation))

    def compose(self, other):
        """self * other (apply `other` first, then self)."""
        q = se3.quat_multiply(self.rotation, other.rotation)
        t = self.rotation_matrix() @ other.translation + self.translation
        return RigidPose(q, t)

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix().T + self.translation

    def retract(self, xi):
        """Right-multiplicative update: self * exp(xi^)."""
        return RigidPose.from_matrix(self.matrix() @ se3.se3_exp(xi))

    def local_delta(self, other):
        """xi with other = self * exp(xi^)."""
        return se3.se3_log(self.view_matrix() @ other.matrix())

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"RigidPose(q=[{q}], t=[{t}])"


def pose_between(a, b):
    """Relative pose taking a's frame to b's frame: a^-1 * b."""
    return a.inverse().compose(b)


def rotation_angle_between(a, b):
    """Geodesic angle in radians between two poses' rotations."""
    R = a.rotation_matrix().T @ b.rotation_matrix()
    return float(np.linalg.norm(se3.so3_log(R)))


@dataclass(frozen=True)
class CaptureConfig:
    z_min: float = 0.1
    z_max: float = 100.0
    cull_outside_image: bool = True

    def __post_init__(self):
        if not 0.0 < self.z_min < self.z_max:
            raise ValueError(f"need 0 < z_min < z_max, got [{self.z_min}, {self.z_max}]")


@dataclass(frozen=True)
class ProjectionRecord:
    v_clip: np.ndarray
    v_view: np.ndarray
    x_ndc: float
    y_ndc: float
    z: float


@dataclass(frozen=True)
class VertexFeature:
    u: float
    v: float
    id: int
    depth: float


class FeatureFrame:
    """Per-frame vertex observations, stored columnar and sorted by id.

    gt_pose is the ground-truth camera pose the frame was captured from; it
    is carried for evaluation only and must never feed the estimation path.
    """

    __slots__ = ("frame_id", "timestamp", "ids", "pixels", "depths", "gt_pose")

    def __init__(self, frame_id, timestamp, ids, pixels, depths, gt_pose=None):
        ids = np.asarray(ids, dtype=np.int64)
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        depths = np.asarray(depths, dtype=float)
        if not (len(ids) == len(pixels) == len(depths)):
            raise ValueError("ids, pixels and depths must have equal length")
        if len(ids) > 1 and not np.all(np.diff(ids) > 0):
            raise ValueError("feature ids must be strictly increasing within a frame")
        self.frame_id = int(frame_id)
        self.timestamp = float(timestamp)
        self.ids = ids
        self.pixels = pixels
        self.depths = depths
        self.gt_pose = gt_pose

    def __len__(self):
        return len(self.ids)

    @property
    def features(self):
        return [
            VertexFeature(float(u), float(v), int(i), float(d))
            for (u, v), i, d in zip(self.pixels, self.ids, self.depths)
        ]


def perspective_matrix(intrinsics):
    """Symmetric-frustum perspective matrix with clip depth range [-1, 1]."""
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    near, far = intrinsics.near, intrinsics.far
    P = np.zeros((4, 4))
    P[0, 0] = f / intrinsics.aspect
    P[1, 1] = f
    P[2, 2] = -(far + near) / (far - near)
    P[2, 3] = -2.0 * far * near / (far - near)
    P[3, 2] = -1.0
    return P


def project_vertex(p, model, view, proj, intrinsics, cfg, vertex_id):
    """Project one vertex through the literal clip-space pipeline; returns
    (VertexFeature, ProjectionRecord) or None when the vertex is culled
    (behind camera, outside the depth gate, or off the image when bounds
    culling is enabled).

    This scalar path keeps the full homogeneous matrices and doubles as the
    reference implementation for the vectorized capture.
    """
    hom = np.append(np.asarray(p, dtype=float), 1.0)
    v_view = view @ (model @ hom)
    v_clip = proj @ v_view
    depth = -v_view[2]
    w_clip = v_clip[3]
    if w_clip <= 0.0 or not cfg.z_min <= depth <= cfg.z_max:
        return None
    x_ndc = v_clip[0] / w_clip
    y_ndc = v_clip[1] / w_clip
    u = (x_ndc * 0.5 + 0.5) * intrinsics.width_px
    v = (-y_ndc * 0.5 + 0.5) * intrinsics.height_px
    if cfg.cull_outside_image and not (
        0.0 <= u <= intrinsics.width_px and 0.0 <= v <= intrinsics.height_px
    ):
        return None
    record = ProjectionRecord(
        v_clip=v_clip,
        v_view=v_view,
        x_ndc=float(x_ndc),
        y_ndc=float(y_ndc),
        z=float(depth),
    )
    return VertexFeature(float(u), float(v), int(vertex_id), float(depth)), record


_CAPTURE_CHUNK = 1 << 18  # keep per-chunk temporaries inside the cache


def capture_frame(mesh, pose, intrinsics, cfg, frame_id, timestamp):
    """Project every mesh vertex from `pose`; pure in all arguments.

    Output features are sorted by id (mesh ids are contiguous by
    construction, and masking preserves order). Vertices stream through in
    chunks so large meshes stay memory-bandwidth-friendly; the arithmetic is
    algebraically identical to project_vertex with w_view = 1, which holds
    because model transforms are affine.
    """
    view_model = pose.view_matrix() @ mesh.model_transform
    A = view_model[:3, :3]
    b = view_model[:3, 3]
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    fu = intrinsics.width_px * f / (2.0 * intrinsics.aspect)
    fv = intrinsics.height_px * f / 2.0
    cu = intrinsics.width_px * 0.5
    cv = intrinsics.height_px * 0.5

    n = len(mesh.vertices)
    ids_out = []
    pix_out = []
    depth_out = []
    for start in range(0, n, _CAPTURE_CHUNK):
        verts = mesh.vertices[start:start + _CAPTURE_CHUNK]
        cam = verts @ A.T + b
        z = -cam[:, 2]
        keep = (z >= cfg.z_min) & (z <= cfg.z_max)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cu + fu * cam[:, 0] / z
            v = cv - fv * cam[:, 1] / z
        if cfg.cull_outside_image:
            keep &= (u >= 0.0) & (u <= intrinsics.width_px)
            keep &= (v >= 0.0) & (v <= intrinsics.height_px)
        idx = np.flatnonzero(keep)
        ids_out.append(mesh.ids[start + idx])
        pix_out.append(np.column_stack([u[idx], v[idx]]))
        depth_out.append(z[idx])

    return FeatureFrame(
        frame_id=frame_id,
        timestamp=timestamp,
        ids=np.concatenate(ids_out) if ids_out else np.zeros(0, dtype=np.int64),
        pixels=np.vstack(pix_out) if pix_out else np.zeros((0, 2)),
        depths=np.concatenate(depth_out) if depth_out else np.zeros(0),
        gt_pose=pose,
    )


def backproject(u, v, depth, pose, intrinsics):
    """Invert the capture pipeline for a pixel with known view-space depth.

    Returns the world-space position of the observed point (the mesh vertex
    after its model transform).
    """
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    x_ndc = 2.0 * u / intrinsics.width_px - 1.0
    y_ndc = 1.0 - 2.0 * v / intrinsics.height_px
    x_view = x_ndc * depth * intrinsics.aspect / f
    y_view = y_ndc * depth / f
    cam_point = np.array([x_view, y_view, -depth])
    return pose.apply(cam_point)
