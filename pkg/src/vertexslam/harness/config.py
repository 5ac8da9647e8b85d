"""Run configuration: a flat "key = value" file format with dotted keys,
overridable from the command line.
"""

from dataclasses import dataclass, field, replace

from ..geometry import SceneSpec
from ..projection import CameraIntrinsics, CaptureConfig
from ..slam_core import SlamConfig

_INT_SCENE_PARAMS = {"n", "subdivisions"}


@dataclass(frozen=True)
class RunConfig:
    scene: SceneSpec = field(default_factory=lambda: SceneSpec(
        kind="box_room",
        params={"width": 8.0, "height": 3.0, "depth": 8.0, "subdivisions": 10},
    ))
    trajectory: dict = field(default_factory=lambda: {
        "kind": "orbit", "radius": 2.5, "height": 0.0, "omega": 0.314159265,
    })
    trajectory_path: str = ""   # when set, overrides the generator spec
    trajectory_sample_hz: float = 240.0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    slam: SlamConfig = field(default_factory=SlamConfig)
    input_fps: float = 75.0
    pixel_noise_sigma: float = 0.0
    duration_s: float = 20.0
    out_dir: str = "out"
    mode: str = "offline"
    port: int = 7434
    seed: int = 0
    track_delay_s: float = 0.0  # test hook: simulated tracker cost per frame
    live_tick_hz: float = 72.0

    def __post_init__(self):
        if self.input_fps <= 0:
            raise ValueError("input_fps must be positive")
        if self.pixel_noise_sigma < 0:
            raise ValueError("pixel_noise_sigma must be >= 0")
        if self.duration_s < 0:
            raise ValueError("duration_s must be >= 0")
        if self.mode not in ("offline", "live"):
            raise ValueError(f"mode must be offline or live, got {self.mode!r}")


def parse_config_text(text):
    """Parse 'key = value' lines with '#' comments into a flat dict."""
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(value, like):
    if isinstance(like, bool):
        return _BOOL[value.lower()]
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


_SIMPLE_KEYS = {
    "run.input_fps": ("input_fps", 0.0),
    "run.pixel_noise_sigma": ("pixel_noise_sigma", 0.0),
    "run.duration_s": ("duration_s", 0.0),
    "run.out_dir": ("out_dir", ""),
    "run.mode": ("mode", ""),
    "run.port": ("port", 0),
    "run.seed": ("seed", 0),
    "run.track_delay_s": ("track_delay_s", 0.0),
    "run.live_tick_hz": ("live_tick_hz", 0.0),
    "trajectory.path": ("trajectory_path", ""),
    "trajectory.sample_hz": ("trajectory_sample_hz", 0.0),
}


def build_run_config(kv):
    """Build a RunConfig from flat dotted keys (e.g. slam.ba_window = 5).

    Unknown keys raise. Changing scene.kind drops the default box_room
    parameters so the generator's own defaults apply.
    """
    cfg = RunConfig()
    scene_kv = {k.split(".", 1)[1]: v for k, v in kv.items() if k.startswith("scene.")}
    traj_kv = {
        k.split(".", 1)[1]: v
        for k, v in kv.items()
        if k.startswith("trajectory.") and k not in ("trajectory.path", "trajectory.sample_hz")
    }

    scene_kind = scene_kv.pop("kind", cfg.scene.kind)
    scene_seed = int(scene_kv.pop("seed", cfg.scene.seed))
    scene_params = dict(cfg.scene.params) if scene_kind == cfg.scene.kind else {}
    for name, value in scene_kv.items():
        if name == "path":
            scene_params[name] = value
        elif name in _INT_SCENE_PARAMS:
            scene_params[name] = int(value)
        else:
            scene_params[name] = float(value)

    traj = dict(cfg.trajectory)
    if "kind" in traj_kv and traj_kv["kind"] != traj["kind"]:
        traj = {"kind": traj_kv.pop("kind")}
    else:
        traj_kv.pop("kind", None)
    for name, value in traj_kv.items():
        traj[name] = float(value)

    updates = {
        "scene": SceneSpec(kind=scene_kind, params=scene_params, seed=scene_seed),
        "trajectory": traj,
    }
    sub_updates = {"intrinsics": {}, "capture": {}, "slam": {}}
    for key, value in kv.items():
        if key.startswith(("scene.", "trajectory.")) and key not in _SIMPLE_KEYS:
            continue
        if key in _SIMPLE_KEYS:
            name, like = _SIMPLE_KEYS[key]
            updates[name] = _coerce(value, like)
        elif key.startswith(("intrinsics.", "capture.", "slam.")):
            section, name = key.split(".", 1)
            proto = {"intrinsics": cfg.intrinsics, "capture": cfg.capture, "slam": cfg.slam}[section]
            if not hasattr(proto, name):
                raise ValueError(f"unknown config key {key!r}")
            sub_updates[section][name] = _coerce(value, getattr(proto, name))
        else:
            raise ValueError(f"unknown config key {key!r}")

    if sub_updates["intrinsics"]:
        updates["intrinsics"] = replace(cfg.intrinsics, **sub_updates["intrinsics"])
    if sub_updates["capture"]:
        updates["capture"] = replace(cfg.capture, **sub_updates["capture"])
    if sub_updates["slam"]:
        updates["slam"] = replace(cfg.slam, **sub_updates["slam"])
    return replace(cfg, **updates)


def apply_cli_overrides(cfg, args):
    """CLI flags beat config-file values."""
    updates = {}
    if getattr(args, "fps", None) is not None:
        updates["input_fps"] = args.fps
    if getattr(args, "noise_sigma", None) is not None:
        updates["pixel_noise_sigma"] = args.noise_sigma
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
        updates["scene"] = replace(cfg.scene, seed=args.seed)
    if getattr(args, "duration", None) is not None:
        updates["duration_s"] = args.duration
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if getattr(args, "port", None) is not None:
        updates["port"] = args.port
    return replace(cfg, **updates) if updates else cfg
