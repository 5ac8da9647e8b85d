import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vertexslam import se3

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def test_quat_matrix_round_trip_identity():
    q = np.array([0.0, 0.0, 0.0, 1.0])
    assert np.allclose(se3.quat_to_matrix(q), np.eye(3))
    assert np.allclose(se3.quat_from_matrix(np.eye(3)), q)


@given(st.lists(finite, min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 1e-3))
def test_quat_matrix_round_trip(q):
    q = se3.quat_normalize(np.array(q))
    R = se3.quat_to_matrix(q)
    q2 = se3.quat_from_matrix(R)
    # q and -q encode the same rotation
    assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-12
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@given(st.lists(finite, min_size=3, max_size=3))
def test_so3_exp_log_round_trip(w):
    w = np.array(w)
    theta = np.linalg.norm(w)
    if theta >= np.pi:
        w = w / theta * (np.pi - 1e-3)
    R = se3.so3_exp(w)
    assert np.linalg.norm(se3.so3_log(R) - w) < 1e-12 * max(1.0, np.linalg.norm(w))


@settings(max_examples=200)
@given(st.lists(finite, min_size=6, max_size=6))
def test_se3_exp_log_round_trip(xi):
    xi = np.array(xi)
    theta = np.linalg.norm(xi[:3])
    if theta >= np.pi:
        xi[:3] = xi[:3] / theta * (np.pi - 1e-3)
    T = se3.se3_exp(xi)
    assert np.linalg.norm(se3.se3_log(T) - xi) < 1e-12 * max(1.0, np.linalg.norm(xi))


def test_se3_exp_log_small_angle():
    xi = np.array([1e-12, -2e-12, 0.5e-12, 0.3, -0.2, 0.9])
    T = se3.se3_exp(xi)
    assert np.linalg.norm(se3.se3_log(T) - xi) < 1e-12


@pytest.mark.parametrize("theta", [1e-9, 1e-8, 2e-8, 1e-7, 1e-5, 1e-3])
def test_round_trip_across_small_angle_boundary(theta):
    # regression: 1 - cos(theta) must not be formed by direct subtraction,
    # which loses the rotation-translation coupling around theta ~ 1e-8
    xi = np.array([0.0, theta, 0.0, 0.0, 0.0, 1.0])
    T = se3.se3_exp(xi)
    assert np.linalg.norm(se3.se3_log(T) - xi) < 1e-12


def test_slerp_endpoints_and_midpoint():
    q0 = np.array([0.0, 0.0, 0.0, 1.0])
    # 90 degrees about z
    q1 = np.array([0.0, 0.0, np.sin(np.pi / 4), np.cos(np.pi / 4)])
    assert np.allclose(se3.quat_slerp(q0, q1, 0.0), q0)
    assert np.allclose(se3.quat_slerp(q0, q1, 1.0), q1)
    mid = se3.quat_slerp(q0, q1, 0.5)
    expected = np.array([0.0, 0.0, np.sin(np.pi / 8), np.cos(np.pi / 8)])
    assert np.allclose(mid, expected, atol=1e-12)


def test_slerp_takes_shortest_path():
    q0 = np.array([0.0, 0.0, 0.0, 1.0])
    q1 = -np.array([0.0, 0.0, np.sin(0.1), np.cos(0.1)])  # negated representation
    mid = se3.quat_slerp(q0, q1, 0.5)
    R_mid = se3.quat_to_matrix(mid)
    assert np.linalg.norm(se3.so3_log(R_mid)) < 0.11
