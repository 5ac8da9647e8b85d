"""Quaternion and SO(3)/SE(3) helpers used by pose types and the optimizer.

Conventions: quaternions are (x, y, z, w), unit norm, acting as
p' = R(q) p. Tangent vectors are 6-vectors (omega, nu) with the rotation
part first; retraction is right-multiplicative, T * exp(xi^).
"""

import numpy as np

_SMALL_ANGLE = 1e-8


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_multiply(q1, q2):
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array([
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    ])


def quat_conjugate(q):
    x, y, z, w = q
    return np.array([-x, -y, -z, w])


def quat_to_matrix(q):
    x, y, z, w = quat_normalize(q)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
        [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
        [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
    ])


def quat_from_matrix(R):
    # Shepperd's method: pick the largest diagonal combination for stability.
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return quat_normalize(np.array([x, y, z, w]))


def quat_slerp(q0, q1, alpha):
    """Shortest-arc spherical interpolation; exact at the endpoints."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + alpha * (q1 - q0))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize(
        np.sin((1.0 - alpha) * theta) / s * q0 + np.sin(alpha * theta) / s * q1
    )


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega):
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    S = skew(omega)
    if theta < _SMALL_ANGLE:
        # second-order Taylor keeps the round-trip exact to machine precision
        return np.eye(3) + S + 0.5 * (S @ S)
    # 1 - cos(theta) written as 2 sin^2(theta/2): no cancellation at small theta
    one_minus_cos = 2.0 * np.sin(theta * 0.5) ** 2
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * S
        + (one_minus_cos / theta**2) * (S @ S)
    )


def so3_log(R):
    R = np.asarray(R, dtype=float)
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    cos_theta = (np.trace(R) - 1.0) * 0.5
    sin_theta = 0.5 * np.linalg.norm(vee)
    # atan2 keeps full precision where arccos degrades (|cos| near 1)
    theta = np.arctan2(sin_theta, cos_theta)
    if theta < _SMALL_ANGLE:
        return 0.5 * vee
    if theta > np.pi - 1e-6:
        # near pi the antisymmetric part degenerates; recover axis from the
        # symmetric part instead
        A = (R + np.eye(3)) * 0.5
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
            n = np.linalg.norm(axis)
            if n > 0:
                axis = axis / n
        # fix signs using the antisymmetric residue
        if np.dot(axis, vee) < 0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * np.sin(theta))) * vee


def _so3_left_jacobian(omega):
    theta = np.linalg.norm(omega)
    S = skew(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * S + (S @ S) / 6.0
    one_minus_cos = 2.0 * np.sin(theta * 0.5) ** 2
    return (
        np.eye(3)
        + (one_minus_cos / theta**2) * S
        + ((theta - np.sin(theta)) / theta**3) * (S @ S)
    )


def _so3_left_jacobian_inv(omega):
    theta = np.linalg.norm(omega)
    S = skew(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * S + (S @ S) / 12.0
    half = 0.5 * theta
    cot = half / np.tan(half)
    return np.eye(3) - 0.5 * S + ((1.0 - cot) / theta**2) * (S @ S)


def se3_exp(xi):
    """Exponential map from a (rotation, translation) 6-vector to a 4x4 matrix."""
    xi = np.asarray(xi, dtype=float)
    omega, nu = xi[:3], xi[3:]
    T = np.eye(4)
    T[:3, :3] = so3_exp(omega)
    T[:3, 3] = _so3_left_jacobian(omega) @ nu
    return T


def se3_log(T):
    T = np.asarray(T, dtype=float)
    omega = so3_log(T[:3, :3])
    nu = _so3_left_jacobian_inv(omega) @ T[:3, 3]
    return np.concatenate([omega, nu])
