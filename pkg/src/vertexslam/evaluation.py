"""Trajectory comparison: timestamp association, closed-form Sim(3)
alignment, and absolute trajectory error, plus TUM-style trajectory files
("timestamp tx ty tz qx qy qz qw" per line, '#' comments).

Alignment uses a similarity (not rigid) transform because the monocular map
has free scale.
"""

from dataclasses import dataclass

import numpy as np

from . import se3
from .projection import RigidPose


@dataclass(frozen=True)
class TrajectorySample:
    timestamp: float
    pose: RigidPose


class Trajectory:
    def __init__(self, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("trajectory needs at least one sample")
        ts = np.array([s.timestamp for s in samples])
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        self.samples = samples
        self._timestamps = ts

    def __len__(self):
        return len(self.samples)

    @property
    def timestamps(self):
        return self._timestamps

    def positions(self):
        return np.array([s.pose.translation for s in self.samples])

    def interpolate(self, t):
        """Pose at time t: linear in position, slerp in orientation.

        Clamps outside the covered interval.
        """
        ts = self._timestamps
        if t <= ts[0]:
            return self.samples[0].pose
        if t >= ts[-1]:
            return self.samples[-1].pose
        hi = int(np.searchsorted(ts, t, side="right"))
        lo = hi - 1
        a = self.samples[lo].pose
        b = self.samples[hi].pose
        alpha = (t - ts[lo]) / (ts[hi] - ts[lo])
        pos = (1.0 - alpha) * a.translation + alpha * b.translation
        rot = se3.quat_slerp(a.rotation, b.rotation, alpha)
        return RigidPose(rot, pos)


def serialize_trajectory(traj):
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for s in traj.samples:
        t = s.pose.translation
        q = s.pose.rotation
        lines.append(
            f"{s.timestamp:.9f} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
            f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}"
        )
    return "\n".join(lines) + "\n"


def parse_trajectory(text):
    samples = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"trajectory line {line_no}: expected 8 fields, got {len(parts)}")
        vals = [float(x) for x in parts]
        samples.append(TrajectorySample(vals[0], RigidPose(vals[4:8], vals[1:4])))
    if not samples:
        raise ValueError("trajectory file holds no samples")
    return Trajectory(samples)


def write_trajectory(traj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_trajectory(traj))


def load_trajectory(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectory(fh.read())


def associate_by_timestamp(est, gt, max_dt):
    """Greedy nearest-timestamp pairing; each sample used at most once.

    Candidate pairs within max_dt are taken in ascending |dt| order. Returns
    a list of (est_sample, gt_sample). Raises if nothing overlaps.
    """
    if max_dt < 0:
        raise ValueError("max_dt must be >= 0")
    gt_ts = gt.timestamps
    candidates = []
    for i, s in enumerate(est.samples):
        j = int(np.searchsorted(gt_ts, s.timestamp))
        for k in (j - 1, j, j + 1):
            if 0 <= k < len(gt_ts):
                dt = abs(gt_ts[k] - s.timestamp)
                if dt <= max_dt:
                    candidates.append((dt, i, k))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    used_est = set()
    used_gt = set()
    pairs = []
    for _, i, k in candidates:
        if i in used_est or k in used_gt:
            continue
        used_est.add(i)
        used_gt.add(k)
        pairs.append((est.samples[i], gt.samples[k]))
    if not pairs:
        raise ValueError("no overlapping samples within max_dt")
    pairs.sort(key=lambda p: p[0].timestamp)
    return pairs


@dataclass(frozen=True)
class Sim3Transform:
    scale: float
    rotation: np.ndarray  # 3x3
    translation: np.ndarray

    def apply(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.scale * (pts @ self.rotation.T) + self.translation


def align_sim3(source, target):
    """Least-squares similarity transform minimizing
    sum ||s R p_src + t - p_tgt||^2 (closed form via centroids and SVD,
    with the determinant correction against reflections)."""
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    tgt = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(src) != len(tgt):
        raise ValueError("source/target length mismatch")
    if len(src) < 3:
        raise ValueError(f"Sim(3) alignment needs >= 3 pairs, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_t = tgt.mean(axis=0)
    xs = src - mu_s
    xt = tgt - mu_t
    var_s = float(np.mean(np.sum(xs**2, axis=1)))
    if var_s < 1e-20:
        raise ValueError("degenerate alignment: source points coincide")
    cov = (xt.T @ xs) / len(src)
    U, d, Vt = np.linalg.svd(cov)
    if d[1] < 1e-12 * max(d[0], 1e-300):
        raise ValueError("degenerate alignment: points are collinear")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(d) @ S)) / var_s
    t = mu_t - s * (R @ mu_s)
    return Sim3Transform(s, R, t)


@dataclass
class AteReport:
    rmse: float
    mean: float
    median: float
    max: float
    per_sample_errors: np.ndarray
    timestamps: np.ndarray
    alignment: Sim3Transform
    n_matched: int


def ate_rmse(est, gt, max_dt):
    """Absolute trajectory error: Sim(3)-align estimated positions to ground
    truth, then RMS over translational residuals (rotations unscored)."""
    pairs = associate_by_timestamp(est, gt, max_dt)
    p_est = np.array([a.pose.translation for a, _ in pairs])
    p_gt = np.array([b.pose.translation for _, b in pairs])
    alignment = align_sim3(p_est, p_gt)
    residuals = alignment.apply(p_est) - p_gt
    errors = np.linalg.norm(residuals, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(errors**2))),
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        max=float(np.max(errors)),
        per_sample_errors=errors,
        timestamps=np.array([a.timestamp for a, _ in pairs]),
        alignment=alignment,
        n_matched=len(pairs),
    )


def write_error_csv(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,error\n")
        for t, e in zip(report.timestamps, report.per_sample_errors):
            fh.write(f"{t:.9f},{e:.9e}\n")
