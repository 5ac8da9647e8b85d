"""Offline experiment driver.

The clock is simulated: ticks advance at the configured input rate, and a
frame is dropped ("skipped") while the tracker is still busy on the
simulated timeline. Tracker cost on that timeline comes from the
track_delay_s hook (default 0), never from measured wall time, so two runs
with the same config and seed produce identical outputs. Wall-clock timings
are reported but carry no control flow.
"""

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..evaluation import Trajectory, TrajectorySample, ate_rmse, load_trajectory, write_trajectory
from ..geometry import generate_scene
from ..projection import FeatureFrame, capture_frame
from ..slam_core import MODE_TRACKING, MODE_UNINITIALIZED, SlamSession, serialize_map_snapshot
from .trajectories import generate_trajectory


@dataclass
class RunReport:
    ate: object = None                  # AteReport or None
    final_mode: str = MODE_UNINITIALIZED
    frames_total: int = 0
    frames_processed: int = 0
    frames_skipped: int = 0
    frames_lost: int = 0
    n_keyframes: int = 0
    n_points: int = 0
    capture_ms_median: float = 0.0
    capture_ms_p95: float = 0.0
    track_ms_median: float = 0.0
    track_ms_p95: float = 0.0
    artifacts: dict = field(default_factory=dict)

    def flat_items(self):
        items = [
            ("mode", self.final_mode),
            ("frames.total", self.frames_total),
            ("frames.processed", self.frames_processed),
            ("frames.skipped", self.frames_skipped),
            ("frames.lost", self.frames_lost),
            ("map.keyframes", self.n_keyframes),
            ("map.points", self.n_points),
            ("timing.capture_ms_median", f"{self.capture_ms_median:.3f}"),
            ("timing.capture_ms_p95", f"{self.capture_ms_p95:.3f}"),
            ("timing.track_ms_median", f"{self.track_ms_median:.3f}"),
            ("timing.track_ms_p95", f"{self.track_ms_p95:.3f}"),
        ]
        if self.ate is not None:
            items += [
                ("ate.rmse", f"{self.ate.rmse:.9e}"),
                ("ate.mean", f"{self.ate.mean:.9e}"),
                ("ate.median", f"{self.ate.median:.9e}"),
                ("ate.max", f"{self.ate.max:.9e}"),
                ("ate.n_matched", self.ate.n_matched),
            ]
        for name, path in sorted(self.artifacts.items()):
            items.append((f"artifact.{name}", path))
        return items

    def flat_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.flat_items())


def perturb_pixels(frame, rng, sigma):
    """Add seeded Gaussian noise to pixel coordinates; ids stay exact."""
    if sigma <= 0 or len(frame) == 0:
        return frame
    noisy = frame.pixels + rng.normal(0.0, sigma, size=frame.pixels.shape)
    return FeatureFrame(frame.frame_id, frame.timestamp, frame.ids, noisy,
                        frame.depths, gt_pose=frame.gt_pose)


def effective_slam_config(slam_cfg, sigma):
    """Widen the triangulation reprojection gate so noise experiments do not
    reject every candidate point; noise-free behavior is unchanged."""
    if sigma <= 0:
        return slam_cfg
    return replace(slam_cfg, max_reproj_px=max(slam_cfg.max_reproj_px, 3.5 * sigma))


def resolve_trajectory(config):
    if config.trajectory_path:
        return load_trajectory(config.trajectory_path)
    return generate_trajectory(config.trajectory, config.duration_s,
                               config.trajectory_sample_hz)


def _percentiles(values):
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values)
    return float(np.median(arr)), float(np.percentile(arr, 95))


def run_offline(config):
    """Run the capture -> track -> map loop over the configured trajectory.

    Emits est.txt, gt.txt, map.txt, frames.csv and report.txt into
    config.out_dir and returns the RunReport.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    mesh = generate_scene(config.scene)
    n_ticks = int(round(config.duration_s * config.input_fps))
    gt_traj = resolve_trajectory(config) if n_ticks > 0 else None
    slam_cfg = effective_slam_config(config.slam, config.pixel_noise_sigma)
    session = SlamSession(config.intrinsics, slam_cfg)
    rng = np.random.default_rng(config.seed)

    gt_samples = []
    est_samples = []
    csv_rows = []
    capture_ms = []
    track_ms = []
    report = RunReport()
    busy_until = -1.0

    for i in range(n_ticks):
        t = i / config.input_fps
        pose_gt = gt_traj.interpolate(t)
        wall0 = time.perf_counter()
        frame = capture_frame(mesh, pose_gt, config.intrinsics, config.capture, i, t)
        capture_ms.append((time.perf_counter() - wall0) * 1e3)
        frame = perturb_pixels(frame, rng, config.pixel_noise_sigma)
        gt_samples.append(TrajectorySample(t, pose_gt))
        report.frames_total += 1

        if t < busy_until:
            report.frames_skipped += 1
            csv_rows.append((i, t, len(frame), 0, "", 1, 0))
            continue

        wall1 = time.perf_counter()
        result = session.process_frame(frame)
        ms = (time.perf_counter() - wall1) * 1e3
        track_ms.append(ms)
        report.frames_processed += 1
        busy_until = t + config.track_delay_s

        lost = 1 if result.mode == "lost" else 0
        report.frames_lost += lost
        csv_rows.append((i, t, len(frame), result.n_tracked, f"{ms:.3f}", 0, lost))
        for ts, pose in result.init_samples:
            est_samples.append(TrajectorySample(ts, pose))
        if result.mode == MODE_TRACKING and not result.init_samples:
            est_samples.append(TrajectorySample(t, result.pose))

    report.final_mode = session.mode
    report.n_keyframes = session.map.n_keyframes()
    report.n_points = session.map.n_points()
    report.capture_ms_median, report.capture_ms_p95 = _percentiles(capture_ms)
    report.track_ms_median, report.track_ms_p95 = _percentiles(track_ms)

    est_path = os.path.join(config.out_dir, "est.txt")
    gt_path = os.path.join(config.out_dir, "gt.txt")
    map_path = os.path.join(config.out_dir, "map.txt")
    csv_path = os.path.join(config.out_dir, "frames.csv")
    report_path = os.path.join(config.out_dir, "report.txt")

    if est_samples:
        write_trajectory(Trajectory(est_samples), est_path)
    else:
        with open(est_path, "w", encoding="utf-8") as fh:
            fh.write("# timestamp tx ty tz qx qy qz qw\n")
    if gt_samples:
        write_trajectory(Trajectory(gt_samples), gt_path)
    else:
        with open(gt_path, "w", encoding="utf-8") as fh:
            fh.write("# timestamp tx ty tz qx qy qz qw\n")
    with open(map_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_map_snapshot(session.map))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("frame_id,t,captured_features,matched,track_ms,skipped,lost\n")
        for row in csv_rows:
            fid, t, nfeat, matched, ms, skipped, lost = row
            fh.write(f"{fid},{t:.9f},{nfeat},{matched},{ms},{skipped},{lost}\n")

    if est_samples and gt_samples:
        max_dt = 0.5 / config.input_fps
        try:
            report.ate = ate_rmse(Trajectory(est_samples), Trajectory(gt_samples), max_dt)
        except ValueError:
            report.ate = None

    report.artifacts = {
        "est": est_path, "gt": gt_path, "map": map_path,
        "frames": csv_path, "report": report_path,
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.flat_text())
    return report
