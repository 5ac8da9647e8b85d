"""SLAM state machine: map storage, two-view initialization, per-frame
tracking with a constant-velocity prior, keyframe policy, and mapping
(triangulation plus windowed refinement).

The map supports concurrent access: mutators and readers serialize on an
internal lock, and the version counter increases on every mutation so
observers can detect and diff complete states.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from .association import match_id_arrays, match_to_map
from .optimize import (
    LmSettings,
    motion_only_ba,
    project_camera_points,
    triangulate_dlt,
    windowed_ba,
    world_to_camera,
)
from .projection import RigidPose, pose_between
from .twoview import candidate_to_pose, decompose_essential, estimate_essential, pixels_to_epipolar_norm

MODE_UNINITIALIZED = "uninitialized"
MODE_TRACKING = "tracking"
MODE_LOST = "lost"


@dataclass(frozen=True)
class SlamConfig:
    min_init_matches: int = 50
    min_init_parallax_deg: float = 1.0
    min_tracked_points: int = 20
    kf_tracked_ratio: float = 0.9
    ba_window: int = 5
    min_triangulation_parallax_deg: float = 0.5
    max_reproj_px: float = 1.0

    def __post_init__(self):
        for name in ("min_init_matches", "min_init_parallax_deg", "min_tracked_points",
                     "ba_window", "min_triangulation_parallax_deg", "max_reproj_px"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SlamConfig.{name} must be positive")
        if not 0.0 < self.kf_tracked_ratio <= 1.0:
            raise ValueError("kf_tracked_ratio must be in (0, 1]")


@dataclass
class KeyFrame:
    kf_id: int
    pose: RigidPose
    frame: object  # FeatureFrame


@dataclass
class MapPoint:
    id: int
    position: np.ndarray
    first_kf: int


@dataclass
class TrackResult:
    pose: RigidPose
    n_tracked: int
    lost: bool


@dataclass
class TrackerState:
    mode: str = MODE_UNINITIALIZED
    last_pose: RigidPose = field(default_factory=RigidPose.identity)
    velocity: RigidPose = field(default_factory=RigidPose.identity)
    last_frame: object = None


class SlamMap:
    """Keyframes, map points keyed by vertex id, and their observations."""

    def __init__(self):
        self._lock = threading.RLock()
        self.keyframes = {}
        self.points = {}
        self.observations = {}
        self.version = 0
        self._next_kf_id = 0
        self._obs_by_kf = {}
        self._obs_by_point = {}
        self._point_ids_cache = None
        self._point_versions = {}
        self._kf_versions = {}

    def writer(self):
        return self._lock

    def _bump(self):
        self.version += 1

    def n_keyframes(self):
        with self._lock:
            return len(self.keyframes)

    def n_points(self):
        with self._lock:
            return len(self.points)

    def point_ids(self):
        with self._lock:
            if self._point_ids_cache is None:
                self._point_ids_cache = np.array(sorted(self.points), dtype=np.int64)
            return self._point_ids_cache

    def positions_for_ids(self, ids):
        with self._lock:
            return np.array([self.points[i].position for i in ids], dtype=float)

    def latest_keyframe(self):
        with self._lock:
            if not self.keyframes:
                return None
            return self.keyframes[max(self.keyframes)]

    def add_keyframe(self, pose, frame):
        with self._lock:
            kf_id = self._next_kf_id
            self._next_kf_id += 1
            self.keyframes[kf_id] = KeyFrame(kf_id, pose, frame)
            self._obs_by_kf[kf_id] = []
            self._kf_versions[kf_id] = self.version + 1
            self._bump()
            return kf_id

    def add_point(self, point_id, position, first_kf):
        with self._lock:
            if point_id in self.points:
                raise ValueError(f"map already holds point {point_id}")
            self.points[point_id] = MapPoint(int(point_id), np.asarray(position, dtype=float), first_kf)
            self._obs_by_point[point_id] = []
            self._point_ids_cache = None
            self._point_versions[point_id] = self.version + 1
            self._bump()

    def add_observation(self, kf_id, point_id, uv):
        with self._lock:
            if kf_id not in self.keyframes:
                raise ValueError(f"unknown keyframe {kf_id}")
            if point_id not in self.points:
                raise ValueError(f"unknown map point {point_id}")
            key = (kf_id, point_id)
            if key in self.observations:
                raise ValueError(f"duplicate observation {key}")
            self.observations[key] = np.asarray(uv, dtype=float)
            self._obs_by_kf[kf_id].append(point_id)
            self._obs_by_point[point_id].append(kf_id)
            self._bump()

    def points_seen_by(self, kf_id):
        with self._lock:
            return sorted(self._obs_by_kf.get(kf_id, ()))

    def keyframes_seeing(self, point_id):
        with self._lock:
            return sorted(self._obs_by_point.get(point_id, ()))

    def commit_adjustment(self, pose_updates, point_updates):
        """Apply refined poses/points atomically; one version bump."""
        with self._lock:
            for kf_id, pose in pose_updates.items():
                self.keyframes[kf_id].pose = pose
                self._kf_versions[kf_id] = self.version + 1
            for pid, pos in point_updates.items():
                self.points[pid].position = np.asarray(pos, dtype=float)
                self._point_versions[pid] = self.version + 1
            self._bump()

    def entities_since(self, version):
        """Keyframes and points added or moved after `version` (for deltas)."""
        with self._lock:
            kfs = [self.keyframes[k] for k, v in sorted(self._kf_versions.items()) if v > version]
            pts = [self.points[p] for p, v in sorted(self._point_versions.items()) if v > version]
            return kfs, pts, self.version

    def rms_reprojection_px(self, intrinsics):
        """RMS pixel reprojection error over all observations."""
        with self._lock:
            items = sorted(self.observations.items())
            if not items:
                return 0.0
            total = 0.0
            for (kf_id, pid), uv in items:
                pose = self.keyframes[kf_id].pose
                pc = world_to_camera(pose, self.points[pid].position)
                pix, _, valid = project_camera_points(pc, intrinsics)
                if not valid[0]:
                    return float("inf")
                total += float(np.sum((pix[0] - uv) ** 2))
            return float(np.sqrt(total / len(items)))


def serialize_map_snapshot(slam_map):
    """Text snapshot: 'KF id tx ty tz qx qy qz qw' and 'MP id x y z' lines."""
    lines = []
    with slam_map.writer():
        for kf_id in sorted(slam_map.keyframes):
            kf = slam_map.keyframes[kf_id]
            t = kf.pose.translation
            q = kf.pose.rotation
            lines.append(
                f"KF {kf_id} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
                f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}"
            )
        for pid in sorted(slam_map.points):
            p = slam_map.points[pid].position
            lines.append(f"MP {pid} {p[0]:.9f} {p[1]:.9f} {p[2]:.9f}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class MapSnapshot:
    keyframes: list  # (kf_id, RigidPose)
    points: list     # (id, np.ndarray)


def parse_map_snapshot(text):
    keyframes = []
    points = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "KF" and len(parts) == 9:
            vals = [float(x) for x in parts[2:]]
            keyframes.append((int(parts[1]), RigidPose(vals[3:7], vals[0:3])))
        elif parts[0] == "MP" and len(parts) == 5:
            points.append((int(parts[1]), np.array([float(x) for x in parts[2:]])))
        else:
            raise ValueError(f"map snapshot line {line_no}: bad record {line!r}")
    return MapSnapshot(keyframes, points)


def _parallax_deg(point, c1, c2):
    a = c1 - point
    b = c2 - point
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-15 or nb < 1e-15:
        return 0.0
    cosang = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    return float(np.degrees(np.arccos(cosang)))


def try_initialize(f1, f2, intrinsics, cfg, lm_settings=None):
    """Attempt to bootstrap a map from two frames.

    Estimates the essential matrix over id matches, picks the (R, t)
    decomposition by cheirality, gates on median parallax, anchors scale by
    unit median depth in the first camera, and returns (SlamMap,
    TrackerState) or None on any rejection.
    """
    idx1, idx2, shared = match_id_arrays(f1.ids, f2.ids)
    n = len(shared)
    if n < cfg.min_init_matches:
        return None
    x1 = pixels_to_epipolar_norm(f1.pixels[idx1], intrinsics)
    x2 = pixels_to_epipolar_norm(f2.pixels[idx2], intrinsics)
    E = estimate_essential(x1, x2)
    if E is None:
        return None

    pose1 = RigidPose.identity()
    best = None
    for R_epi, t_epi in decompose_essential(E):
        pose2 = candidate_to_pose(R_epi, t_epi)
        pts = np.empty((n, 3))
        d1 = np.empty(n)
        d2 = np.empty(n)
        ok = np.zeros(n, dtype=bool)
        for i in range(n):
            tri = triangulate_dlt(pose1, pose2, f1.pixels[idx1[i]], f2.pixels[idx2[i]], intrinsics)
            if tri.degenerate:
                continue
            pts[i] = tri.point
            d1[i] = tri.depth1
            d2[i] = tri.depth2
            ok[i] = tri.depth1 > 0 and tri.depth2 > 0
        score = int(np.count_nonzero(ok))
        if best is None or score > best[0]:
            best = (score, pose2, pts, d1, ok)
    score, pose2, pts, d1, ok = best
    if score < max(8, int(0.8 * n)):
        return None

    c1 = pose1.translation
    c2 = pose2.translation
    parallax = np.array([_parallax_deg(pts[i], c1, c2) for i in range(n) if ok[i]])
    if len(parallax) == 0 or float(np.median(parallax)) < cfg.min_init_parallax_deg:
        return None

    scale = float(np.median(d1[ok]))
    if scale <= 0 or not np.isfinite(scale):
        return None
    pts = pts / scale
    pose2 = RigidPose(pose2.rotation, pose2.translation / scale)

    slam_map = SlamMap()
    kf0 = slam_map.add_keyframe(pose1, f1)
    kf1 = slam_map.add_keyframe(pose2, f2)
    for i in np.flatnonzero(ok):
        pid = int(shared[i])
        slam_map.add_point(pid, pts[i], first_kf=kf0)
        slam_map.add_observation(kf0, pid, f1.pixels[idx1[i]])
        slam_map.add_observation(kf1, pid, f2.pixels[idx2[i]])

    state = TrackerState(
        mode=MODE_TRACKING,
        last_pose=pose2,
        velocity=RigidPose.identity(),
        last_frame=f2,
    )
    return slam_map, state


def track_frame(frame, slam_map, state, intrinsics, cfg, lm_settings=None):
    """Estimate the frame pose against the map.

    Predicts with the constant-velocity model, matches by id, refines with
    motion-only bundle adjustment. Mutates `state` on success only.
    """
    if state.mode != MODE_TRACKING:
        raise RuntimeError(f"track_frame called in mode {state.mode!r}")
    pairs = match_to_map(frame, slam_map)
    n = len(pairs)
    if n < max(4, cfg.min_tracked_points):
        return TrackResult(pose=state.last_pose, n_tracked=n, lost=True)
    predicted = state.last_pose.compose(state.velocity)
    pids = [pid for _, pid in pairs]
    points = slam_map.positions_for_ids(pids)
    meas = frame.pixels[[i for i, _ in pairs]]
    pose, report = motion_only_ba(
        predicted,
        list(zip(points, meas)),
        intrinsics,
        lm_settings or LmSettings(),
    )
    if report.status == "stalled":
        return TrackResult(pose=state.last_pose, n_tracked=n, lost=True)
    state.velocity = pose_between(state.last_pose, pose)
    state.last_pose = pose
    state.last_frame = frame
    return TrackResult(pose=pose, n_tracked=n, lost=False)


def need_keyframe(result, slam_map, state, cfg):
    """Keyframe policy: coverage dropped against the last keyframe, or the
    frame brings enough unmapped ids to be worth triangulating."""
    if result.lost:
        return False
    last_kf = slam_map.latest_keyframe()
    if last_kf is None:
        return False
    n_last = len(slam_map.points_seen_by(last_kf.kf_id))
    if result.n_tracked < cfg.kf_tracked_ratio * n_last:
        return True
    frame = state.last_frame
    map_ids = slam_map.point_ids()
    new_ids = len(frame.ids) - int(np.isin(frame.ids, map_ids, assume_unique=True).sum())
    return new_ids >= cfg.min_init_matches


def insert_keyframe_and_map(frame, pose, slam_map, cfg, intrinsics,
                            lm_settings=None, run_ba=True):
    """Add a keyframe, triangulate unmapped matches against the previous
    keyframe, and (optionally) run windowed BA over the recent keyframes.

    Candidate points must pass the parallax gate, cheirality in both views,
    and a reprojection check in both views. Returns the new-point count.
    """
    lm_settings = lm_settings or LmSettings()
    n_new = 0
    with slam_map.writer():
        prev_kf = slam_map.latest_keyframe()
        kf_id = slam_map.add_keyframe(pose, frame)
        if prev_kf is not None:
            idx_prev, idx_new, shared = match_id_arrays(prev_kf.frame.ids, frame.ids)
            existing = slam_map.point_ids()
            unmapped = ~np.isin(shared, existing, assume_unique=True)
            c1 = prev_kf.pose.translation
            c2 = pose.translation
            for i in np.flatnonzero(unmapped):
                obs_prev = prev_kf.frame.pixels[idx_prev[i]]
                obs_new = frame.pixels[idx_new[i]]
                tri = triangulate_dlt(prev_kf.pose, pose, obs_prev, obs_new, intrinsics)
                if tri.degenerate or tri.depth1 <= 0 or tri.depth2 <= 0:
                    continue
                if _parallax_deg(tri.point, c1, c2) < cfg.min_triangulation_parallax_deg:
                    continue
                err_prev = _reproj_error_px(tri.point, prev_kf.pose, obs_prev, intrinsics)
                err_new = _reproj_error_px(tri.point, pose, obs_new, intrinsics)
                if err_prev > cfg.max_reproj_px or err_new > cfg.max_reproj_px:
                    continue
                pid = int(shared[i])
                slam_map.add_point(pid, tri.point, first_kf=kf_id)
                slam_map.add_observation(prev_kf.kf_id, pid, obs_prev)
                slam_map.add_observation(kf_id, pid, obs_new)
                n_new += 1
        # attach observations of already-mapped points to the new keyframe
        seen = set(slam_map.points_seen_by(kf_id))
        for feat_idx, pid in match_to_map(frame, slam_map):
            if pid not in seen:
                slam_map.add_observation(kf_id, pid, frame.pixels[feat_idx])
    if run_ba:
        window = sorted(slam_map.keyframes)[-cfg.ba_window:]
        windowed_ba(slam_map, window, intrinsics, lm_settings)
    return n_new


def _reproj_error_px(point, pose, measurement, intrinsics):
    pc = world_to_camera(pose, point)
    pix, _, valid = project_camera_points(pc, intrinsics)
    if not valid[0]:
        return float("inf")
    return float(np.linalg.norm(pix[0] - measurement))


@dataclass
class FrameResult:
    frame_id: int
    timestamp: float
    mode: str
    pose: RigidPose = None
    n_tracked: int = 0
    keyframe_inserted: bool = False
    new_points: int = 0
    init_samples: list = field(default_factory=list)  # (timestamp, pose) at init


class SlamSession:
    """Synchronous front door: feed frames, get per-frame results.

    Holds the initialization policy (keep the reference frame until parallax
    suffices, re-anchor when overlap collapses). Mapping runs inline when
    `mapping_inline` is true; otherwise keyframe requests are surfaced on the
    result for an external mapping worker.
    """

    def __init__(self, intrinsics, cfg=None, lm_settings=None, mapping_inline=True):
        self.intrinsics = intrinsics
        self.cfg = cfg or SlamConfig()
        self.lm_settings = lm_settings or LmSettings()
        self.mapping_inline = mapping_inline
        self.map = SlamMap()
        self.state = TrackerState()
        self._init_ref = None
        self.pending_keyframe = None  # (frame, pose) when mapping is external

    @property
    def mode(self):
        return self.state.mode

    def process_frame(self, frame):
        if self.state.mode == MODE_UNINITIALIZED:
            return self._process_uninitialized(frame)
        if self.state.mode == MODE_LOST:
            return FrameResult(frame.frame_id, frame.timestamp, MODE_LOST)
        return self._process_tracking(frame)

    def _process_uninitialized(self, frame):
        result = FrameResult(frame.frame_id, frame.timestamp, MODE_UNINITIALIZED)
        if self._init_ref is None:
            self._init_ref = frame
            return result
        _, _, shared = match_id_arrays(self._init_ref.ids, frame.ids)
        if len(shared) < self.cfg.min_init_matches:
            self._init_ref = frame  # overlap collapsed; re-anchor
            return result
        init = try_initialize(self._init_ref, frame, self.intrinsics, self.cfg, self.lm_settings)
        if init is None:
            return result
        self.map, self.state = init
        kf0 = self.map.keyframes[0]
        kf1 = self.map.keyframes[1]
        result.mode = MODE_TRACKING
        result.pose = kf1.pose
        result.n_tracked = self.map.n_points()
        result.init_samples = [
            (kf0.frame.timestamp, kf0.pose),
            (kf1.frame.timestamp, kf1.pose),
        ]
        self._init_ref = None
        return result

    def _process_tracking(self, frame):
        track = track_frame(frame, self.map, self.state, self.intrinsics,
                            self.cfg, self.lm_settings)
        if track.lost:
            self.state.mode = MODE_LOST
            return FrameResult(frame.frame_id, frame.timestamp, MODE_LOST,
                               n_tracked=track.n_tracked)
        result = FrameResult(frame.frame_id, frame.timestamp, MODE_TRACKING,
                             pose=track.pose, n_tracked=track.n_tracked)
        if need_keyframe(track, self.map, self.state, self.cfg):
            if self.mapping_inline:
                result.new_points = insert_keyframe_and_map(
                    frame, track.pose, self.map, self.cfg, self.intrinsics,
                    self.lm_settings,
                )
                result.keyframe_inserted = True
            else:
                self.pending_keyframe = (frame, track.pose)
                result.keyframe_inserted = True
        return result
