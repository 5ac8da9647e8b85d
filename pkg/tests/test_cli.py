import pytest

from vertexslam.harness.cli import main


def test_run_subcommand(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text(
        "run.duration_s = 3\nrun.input_fps = 30\nrun.seed = 2\n"
    )
    rc = main(["run", "--config", str(config), "--out", str(tmp_path / "out")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "ate.rmse = " in out
    assert "mode = tracking" in out
    assert (tmp_path / "out" / "est.txt").exists()
    assert (tmp_path / "out" / "frames.csv").exists()


def test_bench_capture_subcommand(tmp_path, capsys):
    rc = main(["bench-capture", "--counts", "200,2000", "--repetitions", "3",
               "--out-csv", str(tmp_path / "bench.csv")])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("count,median_ms")
    assert (tmp_path / "bench.csv").exists()


def test_gen_scene_and_eval_round_trip(tmp_path, capsys):
    obj = tmp_path / "scene.obj"
    rc = main(["gen-scene", "--kind", "grid", "--param", "n=3",
               "--param", "spacing=1.0", str(obj)])
    assert rc == 0
    assert "wrote 9 vertices" in capsys.readouterr().out

    traj = tmp_path / "orbit.txt"
    rc = main(["gen-traj", "--kind", "orbit", "--param", "radius=2.0",
               "--duration", "2.0", "--hz", "30", str(traj)])
    assert rc == 0
    assert traj.exists()

    csv = tmp_path / "err.csv"
    rc = main(["eval", str(traj), str(traj), "--max-dt", "0.01", "--csv", str(csv)])
    assert rc == 0
    out = capsys.readouterr().out
    rmse_line = next(line for line in out.splitlines() if line.startswith("ate.rmse"))
    assert float(rmse_line.split("=")[1]) < 1e-9
    assert csv.read_text().startswith("timestamp,error")


def test_gen_scene_invalid_kind(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen-scene", "--kind", "torus", str(tmp_path / "x.obj")])
