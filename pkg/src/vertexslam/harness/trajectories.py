"""Parametric ground-truth camera trajectories.

Deterministic orbit and lissajous paths looking at the scene origin stand
in for a recorded first-person motion, so runs are reproducible without any
recording on disk.
"""

import numpy as np

from ..evaluation import Trajectory, TrajectorySample
from ..projection import RigidPose


def orbit_pose(radius, height, omega, t):
    pos = np.array([radius * np.cos(omega * t), height, radius * np.sin(omega * t)])
    return RigidPose.look_at(pos, (0.0, 0.0, 0.0))


def lissajous_pose(amplitude, rates, height, t):
    ax, ay, az = amplitude
    wx, wy, wz = rates
    pos = np.array([
        ax * np.sin(wx * t),
        height + ay * np.sin(wy * t),
        az * np.cos(wz * t),
    ])
    return RigidPose.look_at(pos, (0.0, 0.0, 0.0))


def generate_trajectory(spec, duration, sample_hz):
    """Sample a trajectory spec at sample_hz for `duration` seconds.

    Produces round(duration * sample_hz) samples at t = i / sample_hz.
    """
    if duration <= 0 or sample_hz <= 0:
        raise ValueError("duration and sample_hz must be positive")
    n = int(round(duration * sample_hz))
    if n < 1:
        raise ValueError("trajectory would hold no samples")
    kind = spec.get("kind", "orbit")
    samples = []
    if kind == "orbit":
        radius = float(spec.get("radius", 2.5))
        height = float(spec.get("height", 0.0))
        omega = float(spec.get("omega", 2.0 * np.pi / 20.0))
        if radius <= 0:
            raise ValueError("orbit radius must be positive (look-at undefined at origin)")
        for i in range(n):
            t = i / sample_hz
            samples.append(TrajectorySample(t, orbit_pose(radius, height, omega, t)))
    elif kind == "lissajous":
        amplitude = (
            float(spec.get("ax", 2.0)),
            float(spec.get("ay", 0.5)),
            float(spec.get("az", 2.0)),
        )
        rates = (
            float(spec.get("wx", 0.4)),
            float(spec.get("wy", 0.9)),
            float(spec.get("wz", 0.5)),
        )
        height = float(spec.get("height", 0.0))
        if min(amplitude) <= 0:
            raise ValueError("lissajous amplitudes must be positive")
        for i in range(n):
            t = i / sample_hz
            samples.append(TrajectorySample(t, lissajous_pose(amplitude, rates, height, t)))
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return Trajectory(samples)
