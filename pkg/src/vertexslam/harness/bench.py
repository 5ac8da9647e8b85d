"""Capture-scaling benchmark: median extraction time versus vertex count,
with a linear fit quantifying how close to O(n) the projection stays.
Absolute milliseconds are reported, never asserted; they are hardware facts.
"""

import time
from dataclasses import dataclass

import numpy as np

from ..geometry import SceneSpec, generate_scene
from ..projection import CameraIntrinsics, CaptureConfig, capture_frame
from ..projection import RigidPose


@dataclass
class CaptureBenchRow:
    count: int
    median_ms: float
    p95_ms: float
    features: int


@dataclass
class CaptureBenchReport:
    rows: list
    r_squared: float = None  # None when a fit is undefined (single count)
    slope_ms_per_vertex: float = None
    intercept_ms: float = None

    def csv_text(self):
        lines = ["count,median_ms,p95_ms,features"]
        for r in self.rows:
            lines.append(f"{r.count},{r.median_ms:.6f},{r.p95_ms:.6f},{r.features}")
        return "\n".join(lines) + "\n"


def benchmark_capture(counts, repetitions=11, seed=0, intrinsics=None, capture_cfg=None):
    """Time capture_frame over seeded point clouds of the given sizes."""
    counts = list(counts)
    if any(c <= 0 for c in counts):
        raise ValueError("vertex counts must be positive")
    if counts != sorted(counts):
        raise ValueError("vertex counts must be ascending")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    intrinsics = intrinsics or CameraIntrinsics()
    capture_cfg = capture_cfg or CaptureConfig()
    pose = RigidPose.look_at((0.0, 0.0, 12.0), (0.0, 0.0, 0.0))

    rows = []
    for count in counts:
        mesh = generate_scene(SceneSpec(
            kind="seeded_point_cloud", params={"n": count, "extent": 10.0}, seed=seed,
        ))
        # one warmup projection outside the timed loop
        frame = capture_frame(mesh, pose, intrinsics, capture_cfg, 0, 0.0)
        samples = []
        for rep in range(repetitions):
            t0 = time.perf_counter()
            frame = capture_frame(mesh, pose, intrinsics, capture_cfg, rep, 0.0)
            samples.append((time.perf_counter() - t0) * 1e3)
        rows.append(CaptureBenchRow(
            count=count,
            median_ms=float(np.median(samples)),
            p95_ms=float(np.percentile(samples, 95)),
            features=len(frame),
        ))

    report = CaptureBenchReport(rows=rows)
    if len(rows) >= 2:
        x = np.array([r.count for r in rows], dtype=float)
        y = np.array([r.median_ms for r in rows], dtype=float)
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        report.r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
        report.slope_ms_per_vertex = float(slope)
        report.intercept_ms = float(intercept)
    return report
