import os
import time

import numpy as np
import pytest

from vertexslam.evaluation import load_trajectory, parse_trajectory, serialize_trajectory
from vertexslam.geometry import SceneSpec, generate_scene
from vertexslam.harness.bench import benchmark_capture
from vertexslam.harness.config import (
    RunConfig,
    apply_cli_overrides,
    build_run_config,
    parse_config_text,
)
from vertexslam.harness.driver import run_offline
from vertexslam.harness.trajectories import generate_trajectory
from vertexslam.pipeline import SlamPipeline
from vertexslam.projection import CaptureConfig, capture_frame
from vertexslam.slam_core import SlamConfig


def fast_config(out_dir, **kw):
    defaults = dict(duration_s=4.0, input_fps=30.0, out_dir=str(out_dir), seed=3)
    defaults.update(kw)
    return RunConfig(**defaults)


class TestConfig:
    def test_parse_key_values_and_comments(self):
        text = """
        # a comment
        slam.ba_window = 7
        run.input_fps = 60   # trailing comment
        scene.kind = grid
        scene.n = 4
        scene.spacing = 0.5
        """
        kv = parse_config_text(text)
        cfg = build_run_config(kv)
        assert cfg.slam.ba_window == 7
        assert cfg.input_fps == 60.0
        assert cfg.scene.kind == "grid"
        assert cfg.scene.params == {"n": 4, "spacing": 0.5}

    def test_changing_scene_kind_drops_stale_params(self):
        cfg = build_run_config({"scene.kind": "seeded_point_cloud", "scene.n": "50"})
        assert cfg.scene.params == {"n": 50}

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            build_run_config({"slam.nonsense": "1"})

    def test_bad_line_rejected(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config_text("not a key value")

    def test_cli_overrides_beat_file(self):
        class Args:
            fps = 15.0
            noise_sigma = 0.25
            seed = 9
            duration = 2.0
            out = "elsewhere"
            port = 9000

        cfg = build_run_config({"run.input_fps": "60"})
        cfg = apply_cli_overrides(cfg, Args())
        assert cfg.input_fps == 15.0
        assert cfg.pixel_noise_sigma == 0.25
        assert cfg.seed == 9 and cfg.scene.seed == 9
        assert cfg.duration_s == 2.0
        assert cfg.out_dir == "elsewhere"
        assert cfg.port == 9000

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(input_fps=0.0)
        with pytest.raises(ValueError):
            RunConfig(pixel_noise_sigma=-1.0)
        with pytest.raises(ValueError):
            RunConfig(mode="interactive")


class TestTrajectories:
    def test_orbit_start_pose(self):
        traj = generate_trajectory({"kind": "orbit", "radius": 3.0, "height": 0.0,
                                    "omega": 0.5}, duration=1.0, sample_hz=10.0)
        p0 = traj.samples[0].pose
        assert np.allclose(p0.translation, [3.0, 0.0, 0.0], atol=1e-12)
        forward = -p0.rotation_matrix()[:, 2]
        assert np.allclose(forward, [-1.0, 0.0, 0.0], atol=1e-12)

    def test_sample_count_and_monotone_timestamps(self):
        traj = generate_trajectory({"kind": "orbit"}, duration=20.0, sample_hz=75.0)
        assert len(traj) == 1500
        assert np.all(np.diff(traj.timestamps) > 0)

    def test_serialize_parse_round_trip(self):
        traj = generate_trajectory({"kind": "orbit", "radius": 2.0}, 2.0, 30.0)
        again = parse_trajectory(serialize_trajectory(traj))
        assert len(again) == len(traj)
        for a, b in zip(traj.samples, again.samples):
            assert np.allclose(a.pose.translation, b.pose.translation, atol=1e-9)

    def test_zero_radius_rejected(self):
        with pytest.raises(ValueError, match="radius"):
            generate_trajectory({"kind": "orbit", "radius": 0.0}, 1.0, 10.0)

    def test_lissajous_generates(self):
        traj = generate_trajectory({"kind": "lissajous"}, 2.0, 20.0)
        assert len(traj) == 40

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown trajectory"):
            generate_trajectory({"kind": "spiral"}, 1.0, 10.0)


class TestRunOffline:
    def test_zero_duration_empty_report(self, tmp_path):
        report = run_offline(fast_config(tmp_path, duration_s=0.0))
        assert report.frames_total == 0
        assert report.ate is None
        assert report.final_mode == "uninitialized"
        assert os.path.exists(report.artifacts["report"])

    def test_short_run_tracks_and_reports(self, tmp_path):
        report = run_offline(fast_config(tmp_path))
        assert report.final_mode == "tracking"
        assert report.frames_lost == 0
        assert report.ate is not None
        assert report.ate.rmse < 1e-3
        assert report.n_keyframes >= 2
        assert report.frames_skipped + report.frames_processed == report.frames_total

    def test_artifacts_schema(self, tmp_path):
        report = run_offline(fast_config(tmp_path))
        est = load_trajectory(report.artifacts["est"])
        gt = load_trajectory(report.artifacts["gt"])
        assert len(gt) == report.frames_total
        assert len(est) <= report.frames_total
        with open(report.artifacts["frames"]) as fh:
            header = fh.readline().strip()
            assert header == "frame_id,t,captured_features,matched,track_ms,skipped,lost"
            rows = [line.strip().split(",") for line in fh]
        assert len(rows) == report.frames_total
        report_text = open(report.artifacts["report"]).read()
        assert "ate.rmse = " in report_text
        assert "frames.skipped = 0" in report_text

    def test_determinism_byte_identical(self, tmp_path):
        r1 = run_offline(fast_config(tmp_path / "a", pixel_noise_sigma=0.5))
        r2 = run_offline(fast_config(tmp_path / "b", pixel_noise_sigma=0.5))
        for name in ("est", "map", "gt"):
            a = open(r1.artifacts[name], "rb").read()
            b = open(r2.artifacts[name], "rb").read()
            assert a == b, f"{name} differs between identical runs"

        def rows_without_timing(path):
            out = []
            for line in open(path):
                cells = line.strip().split(",")
                out.append([c for i, c in enumerate(cells) if i != 4])
            return out

        assert rows_without_timing(r1.artifacts["frames"]) == \
            rows_without_timing(r2.artifacts["frames"])

    def test_injected_delay_causes_skipping(self, tmp_path):
        report = run_offline(fast_config(tmp_path, input_fps=75.0, duration_s=3.0,
                                         track_delay_s=0.1))
        assert report.frames_skipped > 0
        assert report.final_mode == "tracking"
        est = load_trajectory(report.artifacts["est"])
        assert len(est) >= report.n_keyframes

    def test_noise_widens_triangulation_gate(self, tmp_path):
        from vertexslam.harness.driver import effective_slam_config
        base = SlamConfig()
        assert effective_slam_config(base, 0.0) is base
        widened = effective_slam_config(base, 2.0)
        assert widened.max_reproj_px == pytest.approx(7.0)

    def test_lissajous_trajectory_runs(self, tmp_path):
        cfg = RunConfig(duration_s=4.0, input_fps=30.0, seed=3,
                        out_dir=str(tmp_path),
                        trajectory={"kind": "lissajous", "ax": 2.0, "ay": 0.4,
                                    "az": 2.0, "wx": 0.4, "wy": 0.9, "wz": 0.5})
        report = run_offline(cfg)
        assert report.final_mode == "tracking"
        assert report.ate.rmse < 1e-3

    def test_trajectory_file_input(self, tmp_path):
        from vertexslam.evaluation import write_trajectory
        traj = generate_trajectory({"kind": "orbit", "radius": 2.5}, 3.0, 120.0)
        traj_path = tmp_path / "path.txt"
        write_trajectory(traj, traj_path)
        cfg = fast_config(tmp_path / "run", duration_s=3.0,
                          trajectory_path=str(traj_path))
        report = run_offline(cfg)
        assert report.final_mode == "tracking"


class TestBenchmark:
    def test_small_counts_report_and_fit(self):
        rep = benchmark_capture([200, 2000, 20000], repetitions=5, seed=0)
        assert [r.count for r in rep.rows] == [200, 2000, 20000]
        assert all(r.median_ms > 0 for r in rep.rows)
        assert rep.r_squared is not None

    def test_single_count_r2_undefined(self):
        rep = benchmark_capture([500], repetitions=3)
        assert rep.r_squared is None

    def test_rejects_unordered_counts(self):
        with pytest.raises(ValueError, match="ascending"):
            benchmark_capture([100, 50])

    def test_csv_text(self):
        rep = benchmark_capture([100], repetitions=2)
        lines = rep.csv_text().splitlines()
        assert lines[0] == "count,median_ms,p95_ms,features"
        assert lines[1].startswith("100,")


class TestThreadedPipeline:
    def _drive(self, pipeline, mesh, intrinsics, seconds, fps=75.0, realtime=True):
        traj = generate_trajectory({"kind": "orbit"}, seconds, fps)
        n = int(seconds * fps)
        t0 = time.perf_counter()
        for i in range(n):
            t = i / fps
            pose = traj.interpolate(t)
            frame = capture_frame(mesh, pose, intrinsics, CaptureConfig(), i, t)
            pipeline.offer_frame(frame)
            if realtime:
                lag = t0 + (i + 1) / fps - time.perf_counter()
                if lag > 0:
                    time.sleep(lag)

    def test_slowed_tracker_skips_but_never_deadlocks(self, intrinsics):
        mesh = generate_scene(SceneSpec(
            "box_room", {"width": 8.0, "height": 3.0, "depth": 8.0, "subdivisions": 10}))
        pipeline = SlamPipeline(intrinsics, SlamConfig(), track_delay_s=0.1).start()
        self._drive(pipeline, mesh, intrinsics, seconds=3.0)
        pipeline.stop(timeout=20.0)
        assert pipeline.frames_skipped > 0
        assert pipeline.frames_processed > 0
        assert pipeline.frames_processed + pipeline.frames_skipped == pipeline.frames_offered
        assert pipeline.kf_queue.qsize() <= 4

    def test_fast_tracker_processes_most_frames(self, intrinsics):
        mesh = generate_scene(SceneSpec(
            "box_room", {"width": 8.0, "height": 3.0, "depth": 8.0, "subdivisions": 10}))
        results = []
        pipeline = SlamPipeline(intrinsics, SlamConfig(), on_result=results.append).start()
        self._drive(pipeline, mesh, intrinsics, seconds=2.0)
        pipeline.stop(timeout=20.0)
        assert pipeline.frames_processed > 0
        assert len(results) == pipeline.frames_processed
        modes = {r.mode for r in results}
        assert "tracking" in modes
