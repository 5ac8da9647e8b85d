"""Command-line entry points: offline runs, the live server, the capture
benchmark, scene/trajectory generation, and trajectory evaluation."""

import argparse
import sys

from ..evaluation import ate_rmse, load_trajectory, write_error_csv, write_trajectory
from ..geometry import SceneSpec, generate_scene, save_mesh_obj
from .bench import benchmark_capture
from .config import apply_cli_overrides, build_run_config, load_config_file
from .driver import run_offline
from .service import serve_live
from .trajectories import generate_trajectory


def _load_config(args):
    kv = load_config_file(args.config) if args.config else {}
    cfg = build_run_config(kv)
    return apply_cli_overrides(cfg, args)


def _add_common_flags(p):
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--fps", type=float, metavar="N", help="input frame rate")
    p.add_argument("--noise-sigma", type=float, metavar="PX", help="pixel noise sigma")
    p.add_argument("--seed", type=int, metavar="N", help="run / scene seed")
    p.add_argument("--port", type=int, metavar="N", help="live server port")
    p.add_argument("--duration", type=float, metavar="S", help="run duration in seconds")


def cmd_run(args):
    config = _load_config(args)
    report = run_offline(config)
    sys.stdout.write(report.flat_text())
    return 0


def cmd_serve(args):
    config = _load_config(args)
    serve_live(config, stepped=args.stepped)
    return 0


def cmd_replay_log(args):
    """Replay a JSON-lines client command log through the stepped live
    pipeline (no sockets) and print the resulting map summary."""
    import json

    from .service import run_command_log

    with open(args.log, "r", encoding="utf-8") as fh:
        commands = [json.loads(line) for line in fh if line.strip()]
    config = _load_config(args)
    handler, _ = run_command_log(config, commands)
    slam_map = handler.core.session.map
    print(f"mode = {handler.core.session.mode}")
    print(f"points = {slam_map.n_points()}")
    print(f"keyframes = {slam_map.n_keyframes()}")
    print("point_ids = " + ",".join(str(p) for p in sorted(slam_map.points)))
    return 0


def cmd_bench_capture(args):
    counts = [int(c) for c in args.counts.split(",")]
    report = benchmark_capture(counts, repetitions=args.repetitions, seed=args.seed or 0)
    sys.stdout.write(report.csv_text())
    if report.r_squared is not None:
        sys.stdout.write(f"# linear fit R^2 = {report.r_squared:.6f}\n")
    else:
        sys.stdout.write("# linear fit R^2 undefined (single count)\n")
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(report.csv_text())
    return 0


def cmd_gen_scene(args):
    params = {}
    for pair in (args.param or []):
        key, value = pair.split("=", 1)
        params[key] = value if key == "path" else (
            int(value) if key in ("n", "subdivisions") else float(value)
        )
    mesh = generate_scene(SceneSpec(kind=args.kind, params=params, seed=args.seed or 0))
    save_mesh_obj(mesh, args.out_file)
    print(f"wrote {len(mesh)} vertices to {args.out_file}")
    return 0


def cmd_gen_traj(args):
    spec = {"kind": args.kind}
    for pair in (args.param or []):
        key, value = pair.split("=", 1)
        spec[key] = float(value)
    traj = generate_trajectory(spec, args.duration or 20.0, args.hz)
    write_trajectory(traj, args.out_file)
    print(f"wrote {len(traj)} samples to {args.out_file}")
    return 0


def cmd_eval(args):
    est = load_trajectory(args.est)
    gt = load_trajectory(args.gt)
    report = ate_rmse(est, gt, args.max_dt)
    print(f"ate.rmse = {report.rmse:.9e}")
    print(f"ate.mean = {report.mean:.9e}")
    print(f"ate.median = {report.median:.9e}")
    print(f"ate.max = {report.max:.9e}")
    print(f"ate.n_matched = {report.n_matched}")
    print(f"ate.scale = {report.alignment.scale:.9e}")
    if args.csv:
        write_error_csv(report, args.csv)
        print(f"wrote per-sample errors to {args.csv}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vertexslam",
        description="Monocular SLAM simulator on uniquely-identified mesh-vertex features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="offline capture -> SLAM -> evaluation run")
    _add_common_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="interactive live server")
    _add_common_flags(p_serve)
    p_serve.add_argument("--stepped", action="store_true",
                         help="advance time per steer message (deterministic)")
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay-log",
                              help="replay a client command log offline (stepped)")
    p_replay.add_argument("log", help="JSON-lines file of client messages")
    _add_common_flags(p_replay)
    p_replay.set_defaults(func=cmd_replay_log)

    p_bench = sub.add_parser("bench-capture", help="capture extraction scaling benchmark")
    p_bench.add_argument("--counts", default="600,60000,240000,480000,2000000",
                         help="comma-separated ascending vertex counts")
    p_bench.add_argument("--repetitions", type=int, default=11)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--out-csv", metavar="PATH")
    p_bench.set_defaults(func=cmd_bench_capture)

    p_scene = sub.add_parser("gen-scene", help="generate a scene and write it as OBJ")
    p_scene.add_argument("--kind", required=True,
                         choices=["grid", "box_room", "seeded_point_cloud"])
    p_scene.add_argument("--param", action="append", metavar="KEY=VALUE")
    p_scene.add_argument("--seed", type=int)
    p_scene.add_argument("out_file")
    p_scene.set_defaults(func=cmd_gen_scene)

    p_traj = sub.add_parser("gen-traj", help="generate a trajectory file")
    p_traj.add_argument("--kind", default="orbit", choices=["orbit", "lissajous"])
    p_traj.add_argument("--param", action="append", metavar="KEY=VALUE")
    p_traj.add_argument("--duration", type=float)
    p_traj.add_argument("--hz", type=float, default=75.0)
    p_traj.add_argument("out_file")
    p_traj.set_defaults(func=cmd_gen_traj)

    p_eval = sub.add_parser("eval", help="ATE between two trajectory files")
    p_eval.add_argument("est")
    p_eval.add_argument("gt")
    p_eval.add_argument("--max-dt", type=float, default=0.02)
    p_eval.add_argument("--csv", metavar="PATH", help="write timestamp,error CSV")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
