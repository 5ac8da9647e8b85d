"""Nonlinear least-squares core: reprojection factors with analytic
Jacobians, a damped Gauss-Newton (Levenberg-Marquardt) solver over dense
normal equations, DLT triangulation, and the motion-only / windowed bundle
adjustment entry points.

Pose updates are right-multiplicative on SE(3); the tangent layout is
(rotation, translation). Derivatives of the pixel model include the v-axis
sign flip of the viewport transform.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LmSettings:
    max_iters: int = 50
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.1
    rel_cost_tol: float = 1e-10
    grad_tol: float = 1e-10

    def __post_init__(self):
        for name in ("max_iters", "initial_damping", "damping_up", "damping_down",
                     "rel_cost_tol", "grad_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"LmSettings.{name} must be positive")


@dataclass
class LmReport:
    status: str  # converged | max_iters | stalled
    iterations: int
    cost_trace: list
    last_step_norm: float = 0.0

    @property
    def converged(self):
        return self.status == "converged"


def _pixel_constants(intrinsics):
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    fu = intrinsics.width_px * f / (2.0 * intrinsics.aspect)
    fv = intrinsics.height_px * f / 2.0
    return fu, fv, intrinsics.width_px * 0.5, intrinsics.height_px * 0.5


def world_to_camera(pose, points):
    """Map world points into the camera frame of a camera-to-world pose."""
    R = pose.rotation_matrix()
    return (np.atleast_2d(points) - pose.translation) @ R


def project_camera_points(pc, intrinsics):
    """Pixel coordinates and depths for camera-frame points.

    Returns (pix (n,2), depth (n,), valid (n,)); invalid lanes (at or behind
    the camera) carry unusable pixel values.
    """
    fu, fv, cu, cv = _pixel_constants(intrinsics)
    z = -pc[:, 2]
    valid = z > 1e-9
    zs = np.where(valid, z, 1.0)
    u = cu + fu * pc[:, 0] / zs
    v = cv - fv * pc[:, 1] / zs
    return np.column_stack([u, v]), z, valid


def _pixel_jacobian_wrt_camera(pc, intrinsics):
    """d(pixel)/d(camera point), shape (n, 2, 3). Assumes positive depth."""
    fu, fv, _, _ = _pixel_constants(intrinsics)
    n = len(pc)
    z = -pc[:, 2]
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = fu / z
    J[:, 0, 2] = fu * pc[:, 0] / z**2
    J[:, 1, 1] = -fv / z
    J[:, 1, 2] = -fv * pc[:, 1] / z**2
    return J


def _batch_skew(v):
    n = len(v)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = -v[:, 2]
    S[:, 0, 2] = v[:, 1]
    S[:, 1, 0] = v[:, 2]
    S[:, 1, 2] = -v[:, 0]
    S[:, 2, 0] = -v[:, 1]
    S[:, 2, 1] = v[:, 0]
    return S


def reprojection_jacobians(pose, points, intrinsics):
    """Residual Jacobians for predicted-pixel factors, vectorized.

    Returns (pix, depth, valid, J_pose (n,2,6), J_point (n,2,3)) where the
    pose Jacobian is taken w.r.t. a right-multiplicative tangent update of
    the camera-to-world pose.
    """
    R = pose.rotation_matrix()
    pc = world_to_camera(pose, points)
    pix, depth, valid = project_camera_points(pc, intrinsics)
    J_cam = _pixel_jacobian_wrt_camera(np.where(valid[:, None], pc, [0, 0, -1.0]), intrinsics)
    # camera-point sensitivities: d pc / d omega = [pc]x, d pc / d nu = -I
    J_pose = np.empty((len(pc), 2, 6))
    J_pose[:, :, :3] = np.einsum("nij,njk->nik", J_cam, _batch_skew(pc))
    J_pose[:, :, 3:] = -J_cam
    J_point = np.einsum("nij,kj->nik", J_cam, R)  # J_cam @ R^T
    return pix, depth, valid, J_pose, J_point


def reprojection_residual(point, pose, measurement, intrinsics):
    """Residual (predicted - measured, pixels) of one observation plus its
    Jacobians w.r.t. the pose tangent (2x6) and the point (2x3).

    Raises ValueError if the point is at or behind the camera.
    """
    pts = np.asarray(point, dtype=float).reshape(1, 3)
    pix, depth, valid, J_pose, J_point = reprojection_jacobians(pose, pts, intrinsics)
    if not valid[0]:
        raise ValueError(f"point at or behind camera (view depth {depth[0]:.3g})")
    r = pix[0] - np.asarray(measurement, dtype=float)
    return r, J_pose[0], J_point[0]


@dataclass(frozen=True)
class ReprojectionFactor:
    kf_index: int
    point_index: int
    measurement: np.ndarray
    weight: float = 1.0


class ReprojectionProblem:
    """Dense-normal-equation problem over keyframe poses and 3D points.

    Poses flagged fixed contribute factors but no columns; points are all
    free unless `optimize_points` is False (motion-only refinement). State is
    the tuple (poses, points) and is never mutated in place.
    """

    def __init__(self, poses, fixed_pose_mask, points, factors, intrinsics,
                 optimize_points=True):
        self.intrinsics = intrinsics
        self.optimize_points = optimize_points
        self.n_poses = len(poses)
        self.fixed = np.asarray(fixed_pose_mask, dtype=bool)
        if len(self.fixed) != self.n_poses:
            raise ValueError("fixed_pose_mask length mismatch")
        self.init_state = (list(poses), np.asarray(points, dtype=float).reshape(-1, 3).copy())
        self.n_points = len(self.init_state[1])

        kf_idx = np.array([f.kf_index for f in factors], dtype=np.int64)
        pt_idx = np.array([f.point_index for f in factors], dtype=np.int64)
        meas = np.array([f.measurement for f in factors], dtype=float).reshape(-1, 2)
        weight = np.array([f.weight for f in factors], dtype=float)
        if len(kf_idx) == 0:
            raise ValueError("need at least one factor")
        if kf_idx.min() < 0 or kf_idx.max() >= self.n_poses:
            raise ValueError("factor references unknown pose")
        if pt_idx.min() < 0 or pt_idx.max() >= self.n_points:
            raise ValueError("factor references unknown point")
        if not np.all(np.isfinite(meas)):
            raise ValueError("non-finite measurement")

        order = np.argsort(kf_idx, kind="stable")
        self._kf_idx = kf_idx[order]
        self._pt_idx = pt_idx[order]
        self._meas = meas[order]
        self._weight = weight[order]
        self._groups = [np.flatnonzero(self._kf_idx == k) for k in range(self.n_poses)]

        self._free_pose_slots = {}
        col = 0
        for k in range(self.n_poses):
            if not self.fixed[k]:
                self._free_pose_slots[k] = col
                col += 6
        self._point_offset = col
        self.dim = col + (3 * self.n_points if optimize_points else 0)
        if self.dim == 0:
            raise ValueError("no free variables")

    def cost_floor(self, n_valid):
        # below an RMS of 1e-9 px the residuals are float noise (pixel values
        # carry ~1e-13 px of precision); treat such costs as converged
        return n_valid * 1e-18

    def cost(self, state):
        poses, points = state
        total = 0.0
        n_valid = 0
        for k, sel in enumerate(self._groups):
            if len(sel) == 0:
                continue
            pc = world_to_camera(poses[k], points[self._pt_idx[sel]])
            pix, _, valid = project_camera_points(pc, self.intrinsics)
            r = (pix - self._meas[sel]) * self._weight[sel, None]
            total += float(np.sum(r[valid] ** 2))
            n_valid += int(np.count_nonzero(valid))
        return total, n_valid

    def linearize(self, state):
        poses, points = state
        H = np.zeros((self.dim, self.dim))
        g = np.zeros(self.dim)
        total = 0.0
        n_valid = 0
        po = self._point_offset
        pt_buf = np.zeros((self.n_points, 3, 3)) if self.optimize_points else None
        g_pt = np.zeros((self.n_points, 3)) if self.optimize_points else None

        for k, sel in enumerate(self._groups):
            if len(sel) == 0:
                continue
            pts_k = self._pt_idx[sel]
            pix, _, valid, J_pose, J_point = reprojection_jacobians(
                poses[k], points[pts_k], self.intrinsics
            )
            w = self._weight[sel]
            r = (pix - self._meas[sel]) * w[:, None]
            J_pose = J_pose * w[:, None, None]
            J_point = J_point * w[:, None, None]
            if not np.all(valid):
                r = r[valid]
                J_pose = J_pose[valid]
                J_point = J_point[valid]
                pts_k = pts_k[valid]
            total += float(np.sum(r**2))
            n_valid += len(r)
            if len(r) == 0:
                continue

            pose_free = not self.fixed[k]
            if pose_free:
                c0 = self._free_pose_slots[k]
                H[c0:c0 + 6, c0:c0 + 6] += np.einsum("nia,nib->ab", J_pose, J_pose)
                g[c0:c0 + 6] += np.einsum("nia,ni->a", J_pose, r)
            if self.optimize_points:
                np.add.at(pt_buf, pts_k, np.einsum("nia,nib->nab", J_point, J_point))
                np.add.at(g_pt, pts_k, np.einsum("nia,ni->na", J_point, r))
                if pose_free:
                    cross = np.einsum("nia,nib->nab", J_pose, J_point)  # (n,6,3)
                    cols = po + (3 * pts_k[:, None] + np.arange(3)[None, :]).ravel()
                    block = cross.transpose(1, 0, 2).reshape(6, -1)
                    # within one keyframe each point appears at most once,
                    # so the column set is unique and += is safe
                    rows = np.arange(c0, c0 + 6)
                    H[rows[:, None], cols[None, :]] += block
                    H[cols[:, None], rows[None, :]] += block.T

        if self.optimize_points:
            ii = np.arange(self.n_points)
            rows = po + 3 * ii[:, None, None] + np.arange(3)[None, :, None]
            cols = po + 3 * ii[:, None, None] + np.arange(3)[None, None, :]
            H[rows, cols] += pt_buf
            g[po:] += g_pt.ravel()
        return H, g, total, n_valid

    def retract(self, state, step):
        poses, points = state
        new_poses = list(poses)
        for k, c0 in self._free_pose_slots.items():
            new_poses[k] = poses[k].retract(step[c0:c0 + 6])
        if self.optimize_points:
            new_points = points + step[self._point_offset:].reshape(-1, 3)
        else:
            new_points = points
        return new_poses, new_points


def solve_lm(problem, state, settings=LmSettings()):
    """Levenberg-Marquardt with additive damping on dense normal equations.

    Steps are accepted only when the cost decreases (and no factor newly
    drops out); the trace over accepted steps is therefore non-increasing.
    Returns (final_state, LmReport).
    """
    cost, n_valid = problem.cost(state)
    if not np.isfinite(cost):
        raise ValueError("non-finite cost at start")
    trace = [cost]
    lam = settings.initial_damping
    report = LmReport(status="max_iters", iterations=0, cost_trace=trace)
    floor = getattr(problem, "cost_floor", lambda n: 0.0)

    if cost <= floor(n_valid):
        report.status = "converged"
        return state, report

    solve_failures = 0
    rejections = 0
    for _ in range(settings.max_iters):
        H, g, cost, n_valid = problem.linearize(state)
        report.iterations += 1
        if cost <= floor(n_valid) or np.max(np.abs(g), initial=0.0) < settings.grad_tol:
            report.status = "converged"
            break
        accepted = False
        while True:
            try:
                step = np.linalg.solve(H + lam * np.eye(problem.dim), -g)
            except np.linalg.LinAlgError:
                lam *= settings.damping_up
                solve_failures += 1
                if solve_failures >= 10:
                    report.status = "stalled"
                    return state, report
                continue
            solve_failures = 0
            candidate = problem.retract(state, step)
            new_cost, new_valid = problem.cost(candidate)
            if np.isfinite(new_cost) and new_cost < cost and new_valid >= n_valid:
                state = candidate
                lam = max(lam * settings.damping_down, 1e-15)
                trace.append(new_cost)
                report.last_step_norm = float(np.linalg.norm(step))
                rejections = 0
                accepted = True
                break
            lam *= settings.damping_up
            rejections += 1
            if rejections >= 10:
                # with large enough damping a nonzero gradient always yields
                # descent; repeated rejection means the cost sits at its
                # floating-point floor, i.e. numerical convergence
                report.status = "converged"
                return state, report
        if accepted and cost - trace[-1] <= settings.rel_cost_tol * max(cost, 1e-300):
            report.status = "converged"
            break
    return state, report


@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray
    depth1: float
    depth2: float
    degenerate: bool


def pixel_to_view_ray(pix, intrinsics):
    """Per-pixel camera-frame ray direction (x/z, y/z, -1) scaled by depth=1."""
    pix = np.atleast_2d(pix)
    f = 1.0 / np.tan(np.radians(intrinsics.fov_y_deg) * 0.5)
    x_ndc = 2.0 * pix[:, 0] / intrinsics.width_px - 1.0
    y_ndc = 1.0 - 2.0 * pix[:, 1] / intrinsics.height_px
    return np.column_stack([
        x_ndc * intrinsics.aspect / f,
        y_ndc / f,
        -np.ones(len(pix)),
    ])


def triangulate_dlt(pose1, pose2, obs1, obs2, intrinsics):
    """Two-view homogeneous DLT; returns per-view depths for cheirality checks."""
    if np.linalg.norm(pose1.translation - pose2.translation) < 1e-12:
        return TriangulationResult(np.zeros(3), 0.0, 0.0, True)
    rays = pixel_to_view_ray(np.array([obs1, obs2]), intrinsics)
    A = np.empty((4, 4))
    for i, (pose, ray) in enumerate(zip((pose1, pose2), rays)):
        W = pose.view_matrix()
        mx, my = ray[0], ray[1]
        # x_c = mx * depth and depth = -z_c give x_c + mx * z_c = 0
        A[2 * i] = W[0] + mx * W[2]
        A[2 * i + 1] = W[1] + my * W[2]
    _, _, vt = np.linalg.svd(A)
    X_hom = vt[-1]
    if abs(X_hom[3]) < 1e-12:
        return TriangulationResult(np.zeros(3), 0.0, 0.0, True)
    X = X_hom[:3] / X_hom[3]
    d1 = -(pose1.view_matrix() @ np.append(X, 1.0))[2]
    d2 = -(pose2.view_matrix() @ np.append(X, 1.0))[2]
    return TriangulationResult(X, float(d1), float(d2), False)


def motion_only_ba(pose_init, pairs, intrinsics, settings=LmSettings()):
    """Refine a single camera pose against fixed 3D points.

    `pairs` is a sequence of (point_xyz, (u, v)) observations; at least 4
    are required. Returns (pose, LmReport).
    """
    if len(pairs) < 4:
        raise ValueError(f"motion-only refinement needs >= 4 pairs, got {len(pairs)}")
    points = np.array([p for p, _ in pairs], dtype=float)
    factors = [
        ReprojectionFactor(kf_index=0, point_index=i, measurement=np.asarray(m, dtype=float))
        for i, (_, m) in enumerate(pairs)
    ]
    problem = ReprojectionProblem(
        poses=[pose_init],
        fixed_pose_mask=[False],
        points=points,
        factors=factors,
        intrinsics=intrinsics,
        optimize_points=False,
    )
    (poses, _), report = solve_lm(problem, problem.init_state, settings)
    return poses[0], report


@dataclass
class WindowedBaReport:
    status: str  # ok | insufficient | stalled
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    n_free_poses: int = 0
    n_points: int = 0
    message: str = ""


def windowed_ba(slam_map, window_kf_ids, intrinsics, settings=LmSettings()):
    """Joint refinement of the newest window keyframes and their points.

    The two oldest keyframes in the window stay constant (they pin the seven
    gauge degrees of freedom); keyframes outside the window that observe
    shared points contribute fixed-pose factors. The map is committed once,
    atomically, and left untouched if the solver stalls.
    """
    window = sorted(window_kf_ids)
    if len(window) < 2:
        return WindowedBaReport(status="insufficient",
                                message="window needs >= 2 keyframes (both anchors)")
    anchored = set(window[:2])

    point_ids = sorted({
        pid for kf_id in window for pid in slam_map.points_seen_by(kf_id)
    })
    if not point_ids:
        return WindowedBaReport(status="insufficient", message="window observes no points")
    pt_slot = {pid: i for i, pid in enumerate(point_ids)}

    kf_ids = sorted({
        kf
        for pid in point_ids
        for kf in slam_map.keyframes_seeing(pid)
    } | set(window))
    kf_slot = {kf: i for i, kf in enumerate(kf_ids)}
    poses = [slam_map.keyframes[k].pose for k in kf_ids]
    fixed = [k not in window or k in anchored for k in kf_ids]
    if all(fixed) and len(point_ids) == 0:
        return WindowedBaReport(status="insufficient", message="no free variables")

    points = np.array([slam_map.points[pid].position for pid in point_ids])
    factors = []
    for pid in point_ids:
        for kf_id in slam_map.keyframes_seeing(pid):
            uv = slam_map.observations[(kf_id, pid)]
            factors.append(ReprojectionFactor(kf_slot[kf_id], pt_slot[pid], np.asarray(uv)))

    problem = ReprojectionProblem(poses, fixed, points, factors, intrinsics)
    (new_poses, new_points), report = solve_lm(problem, problem.init_state, settings)

    out = WindowedBaReport(
        status="ok",
        iterations=report.iterations,
        initial_cost=report.cost_trace[0],
        final_cost=report.cost_trace[-1],
        n_free_poses=sum(1 for f in fixed if not f),
        n_points=len(point_ids),
    )
    if report.status == "stalled":
        out.status = "stalled"
        out.message = "solver stalled; map not modified"
        return out

    pose_updates = {
        kf_id: new_poses[kf_slot[kf_id]]
        for kf_id in window
        if kf_id not in anchored
    }
    point_updates = {pid: new_points[pt_slot[pid]] for pid in point_ids}
    slam_map.commit_adjustment(pose_updates, point_updates)
    return out
