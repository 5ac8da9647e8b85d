"""Interactive live mode: a human steers the virtual camera; capture and
SLAM run against the steered pose and map/state updates stream back.

One client at a time over a message-framed channel. Both framings share the
port: a raw TCP client sends newline-delimited JSON, a browser speaks
WebSocket (detected by the HTTP upgrade preamble).

Two clocks: the default wall-clock mode ticks at a fixed rate (72 Hz) with
the threaded tracking/mapping pipeline; stepped mode advances exactly by
each steer's dt and processes synchronously, which makes a command log
replayable bit-for-bit (used by tests).
"""

import base64
import hashlib
import json
import math
import socket
import struct
import threading
import time

import numpy as np

from .. import se3
from ..geometry import generate_scene
from ..pipeline import SlamPipeline
from ..projection import RigidPose, capture_frame
from ..slam_core import SlamSession
from .driver import effective_slam_config, perturb_pixels

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class LiveCamera:
    """First-person ground-truth camera: position plus yaw/pitch (no roll)."""

    def __init__(self, position=(0.0, 0.0, 2.5)):
        self.home = np.asarray(position, dtype=float)
        self.reset()

    def reset(self):
        self.position = self.home.copy()
        self.yaw = 0.0
        self.pitch = 0.0

    def rotation(self):
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        Ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
        Rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
        return Ry @ Rx

    def pose(self):
        return RigidPose(se3.quat_from_matrix(self.rotation()), self.position)

    def integrate(self, move, yaw_rate, pitch_rate, dt):
        self.yaw += yaw_rate * dt
        self.pitch = float(np.clip(self.pitch + pitch_rate * dt, -1.55, 1.55))
        self.position = self.position + self.rotation() @ (np.asarray(move, dtype=float) * dt)


def _pose7(pose):
    t = pose.translation
    q = pose.rotation
    return [float(t[0]), float(t[1]), float(t[2]),
            float(q[0]), float(q[1]), float(q[2]), float(q[3])]


def _validate_steer(msg):
    dt = msg.get("dt")
    if not isinstance(dt, (int, float)) or not math.isfinite(dt) or dt < 0:
        raise ValueError("bad steer")
    move = msg.get("move", [0.0, 0.0, 0.0])
    if not (isinstance(move, (list, tuple)) and len(move) == 3):
        raise ValueError("bad steer")
    move = [float(v) for v in move]
    yaw = float(msg.get("yaw", 0.0))
    pitch = float(msg.get("pitch", 0.0))
    if not all(math.isfinite(v) for v in move + [yaw, pitch, dt]):
        raise ValueError("bad steer")
    return float(dt), move, yaw, pitch


class LiveSessionCore:
    """Transport- and clock-agnostic live state: camera + SLAM + delta cursor."""

    def __init__(self, config):
        self.config = config
        self.mesh = generate_scene(config.scene)
        self.slam_cfg = effective_slam_config(config.slam, config.pixel_noise_sigma)
        self.rng = np.random.default_rng(config.seed)
        self.camera = LiveCamera()
        self.session = SlamSession(config.intrinsics, self.slam_cfg)
        self.sim_time = 0.0
        self.frame_counter = 0
        self.paused = False
        self.last_result = None
        self.last_sent_version = 0

    def reset(self):
        self.camera.reset()
        self.session = SlamSession(self.config.intrinsics, self.slam_cfg)
        self.rng = np.random.default_rng(self.config.seed)
        self.sim_time = 0.0
        self.frame_counter = 0
        self.paused = False
        self.last_result = None
        self.last_sent_version = 0

    def capture(self):
        pose = self.camera.pose()
        frame = capture_frame(self.mesh, pose, self.config.intrinsics,
                              self.config.capture, self.frame_counter, self.sim_time)
        frame = perturb_pixels(frame, self.rng, self.config.pixel_noise_sigma)
        self.frame_counter += 1
        return frame

    def state_message(self):
        result = self.last_result
        slam_map = self.session.map
        mode = self.session.mode
        pose_est = None
        n_tracked = 0
        frame_id = -1
        if result is not None:
            frame_id = result.frame_id
            n_tracked = result.n_tracked
            if result.pose is not None:
                pose_est = _pose7(result.pose)
        return {
            "type": "state",
            "frame_id": frame_id,
            "mode": mode,
            "pose_est": pose_est,
            "pose_gt": _pose7(self.camera.pose()),
            "n_tracked": n_tracked,
            "map_version": slam_map.version,
        }

    def delta_message(self, force=False):
        """Points/keyframes added or moved since the last sent version, or
        None when the map has not changed. `base_version` names the version
        the delta extends so clients can detect lost updates."""
        slam_map = self.session.map
        base = self.last_sent_version
        kfs, pts, version = slam_map.entities_since(base)
        if version == base and not force:
            return None
        self.last_sent_version = version
        return {
            "type": "map_delta",
            "version": version,
            "base_version": base,
            "added_points": [
                [int(p.id), float(p.position[0]), float(p.position[1]), float(p.position[2])]
                for p in pts
            ],
            "added_keyframes": [[int(k.kf_id)] + _pose7(k.pose) for k in kfs],
        }

    def snapshot_messages(self):
        """Full snapshot from version 0 (connect / reset / resync handshake)."""
        self.last_sent_version = 0
        return [self.delta_message(force=True), self.state_message()]


class SteppedLiveHandler:
    """Deterministic request/response handler: each steer advances the clock
    by its dt, captures, tracks and maps synchronously, then reports."""

    def __init__(self, config):
        self.core = LiveSessionCore(config)

    def on_connect(self):
        return self.core.snapshot_messages()

    def handle(self, msg):
        if not isinstance(msg, dict) or "type" not in msg:
            return [{"type": "error", "msg": "bad message: missing type"}]
        kind = msg["type"]
        if kind == "steer":
            try:
                dt, move, yaw, pitch = _validate_steer(msg)
            except ValueError as exc:
                return [{"type": "error", "msg": str(exc)}]
            if self.core.paused:
                return [self.core.state_message()]
            self.core.camera.integrate(move, yaw, pitch, dt)
            self.core.sim_time += dt
            frame = self.core.capture()
            self.core.last_result = self.core.session.process_frame(frame)
            out = []
            delta = self.core.delta_message()
            if delta is not None:
                out.append(delta)
            out.append(self.core.state_message())
            return out
        if kind == "reset":
            self.core.reset()
            return self.core.snapshot_messages()
        if kind == "resync":
            return self.core.snapshot_messages()
        if kind == "pause":
            self.core.paused = bool(msg.get("on", True))
            return [self.core.state_message()]
        return [{"type": "error", "msg": f"bad message: unknown type {kind!r}"}]


def run_command_log(config, commands):
    """Replay a client command log through the stepped handler without any
    transport; returns (handler, list of emitted messages)."""
    handler = SteppedLiveHandler(config)
    emitted = list(handler.on_connect())
    for msg in commands:
        emitted.extend(handler.handle(msg))
    return handler, emitted


# ---------------------------------------------------------------------------
# transports


class NdjsonConn:
    """Newline-delimited JSON over a stream socket."""

    def __init__(self, sock):
        self.sock = sock
        self._buf = b""

    def recv_message(self):
        while b"\n" not in self._buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def send_message(self, text):
        self.sock.sendall(text.encode("utf-8") + b"\n")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class WebSocketConn:
    """Server side of RFC 6455, text frames only, no fragmentation."""

    def __init__(self, sock):
        self.sock = sock
        self._buf = b""
        self._handshake()

    def _read_until(self, marker):
        while marker not in self._buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("socket closed during websocket handshake")
            self._buf += chunk
        head, self._buf = self._buf.split(marker, 1)
        return head

    def _handshake(self):
        request = self._read_until(b"\r\n\r\n").decode("latin-1")
        key = None
        for line in request.split("\r\n"):
            if ":" in line:
                name, value = line.split(":", 1)
                if name.strip().lower() == "sec-websocket-key":
                    key = value.strip()
        if key is None:
            raise ConnectionError("missing Sec-WebSocket-Key")
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_GUID).encode("latin-1")).digest()
        ).decode("latin-1")
        self.sock.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode("latin-1")
        )

    def _read_exact(self, n):
        while len(self._buf) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                return None
            self._buf += chunk
        data, self._buf = self._buf[:n], self._buf[n:]
        return data

    def recv_message(self):
        while True:
            head = self._read_exact(2)
            if head is None:
                return None
            b1, b2 = head
            opcode = b1 & 0x0F
            masked = bool(b2 & 0x80)
            length = b2 & 0x7F
            if length == 126:
                ext = self._read_exact(2)
                if ext is None:
                    return None
                length = struct.unpack(">H", ext)[0]
            elif length == 127:
                ext = self._read_exact(8)
                if ext is None:
                    return None
                length = struct.unpack(">Q", ext)[0]
            mask = self._read_exact(4) if masked else b"\x00" * 4
            if mask is None:
                return None
            payload = self._read_exact(length) if length else b""
            if payload is None:
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
            if opcode == 0x1:
                return payload.decode("utf-8", errors="replace")
            if opcode == 0x8:
                return None
            if opcode == 0x9:  # ping -> pong
                self._send_frame(0xA, payload)
                continue
            # binary / continuation frames are not part of the protocol

    def _send_frame(self, opcode, payload):
        header = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header += bytes([n])
        elif n < 65536:
            header += bytes([126]) + struct.pack(">H", n)
        else:
            header += bytes([127]) + struct.pack(">Q", n)
        self.sock.sendall(header + payload)

    def send_message(self, text):
        self._send_frame(0x1, text.encode("utf-8"))

    def close(self):
        try:
            self._send_frame(0x8, b"")
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


def _wrap_connection(sock):
    # A WebSocket client talks first (HTTP upgrade); a plain TCP client may
    # silently wait for the connect snapshot, so fall back to NDJSON when
    # nothing arrives promptly.
    sock.settimeout(0.5)
    try:
        preview = sock.recv(4, socket.MSG_PEEK)
    except socket.timeout:
        preview = b""
    finally:
        sock.settimeout(None)
    if preview.startswith(b"GET"):
        return WebSocketConn(sock)
    return NdjsonConn(sock)


class LiveServer:
    """Accepts one interactive client at a time on a TCP port.

    Wall-clock mode drives a 72 Hz tick thread feeding the threaded SLAM
    pipeline and streams state at <= 30 Hz; stepped mode answers each
    message synchronously (deterministic).
    """

    STEER_TIMEOUT_S = 0.5

    def __init__(self, config, stepped=False):
        self.config = config
        self.stepped = stepped
        self._server_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server_sock.bind(("127.0.0.1", config.port))
        self._server_sock.listen(1)
        self.port = self._server_sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread = None

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._server_sock.settimeout(0.25)
        try:
            while not self._stop.is_set():
                try:
                    sock, _ = self._server_sock.accept()
                except socket.timeout:
                    continue
                try:
                    conn = _wrap_connection(sock)
                    if self.stepped:
                        self._serve_stepped(conn)
                    else:
                        self._serve_wall_clock(conn)
                except (ConnectionError, OSError):
                    pass
                finally:
                    try:
                        sock.close()
                    except OSError:
                        pass
        finally:
            self._server_sock.close()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)

    def _serve_stepped(self, conn):
        handler = SteppedLiveHandler(self.config)
        for msg in handler.on_connect():
            conn.send_message(json.dumps(msg))
        while not self._stop.is_set():
            raw = conn.recv_message()
            if raw is None:
                break
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError as exc:
                conn.send_message(json.dumps({"type": "error", "msg": f"bad message: {exc.msg}"}))
                continue
            for reply in handler.handle(msg):
                conn.send_message(json.dumps(reply))
        conn.close()

    def _serve_wall_clock(self, conn):
        core = LiveSessionCore(self.config)
        holder = {"pipeline": SlamPipeline(
            self.config.intrinsics, core.slam_cfg,
            on_result=lambda r: self._store_result(core, r),
        ).start()}
        core.session = holder["pipeline"].session
        send_lock = threading.Lock()
        client_gone = threading.Event()
        steer = {"move": [0.0, 0.0, 0.0], "yaw": 0.0, "pitch": 0.0, "at": 0.0}
        steer_lock = threading.Lock()
        reset_requested = threading.Event()

        def send(msg):
            try:
                with send_lock:
                    conn.send_message(json.dumps(msg))
            except OSError:
                client_gone.set()

        def tick_loop():
            dt = 1.0 / self.config.live_tick_hz
            while not client_gone.is_set() and not self._stop.is_set():
                t0 = time.perf_counter()
                if reset_requested.is_set():
                    # drain the old workers, then swap in a fresh pipeline
                    holder["pipeline"].stop()
                    holder["pipeline"] = SlamPipeline(
                        self.config.intrinsics, core.slam_cfg,
                        on_result=lambda r: self._store_result(core, r),
                    ).start()
                    core.session = holder["pipeline"].session
                    core.camera.reset()
                    core.sim_time = 0.0
                    core.frame_counter = 0
                    core.last_result = None
                    core.last_sent_version = 0
                    reset_requested.clear()
                    for msg in core.snapshot_messages():
                        send(msg)
                if not core.paused:
                    with steer_lock:
                        cmd = dict(steer)
                    if time.monotonic() - cmd["at"] > self.STEER_TIMEOUT_S:
                        cmd = {"move": [0.0, 0.0, 0.0], "yaw": 0.0, "pitch": 0.0}
                    core.camera.integrate(cmd["move"], cmd["yaw"], cmd["pitch"], dt)
                    core.sim_time += dt
                    frame = core.capture()
                    holder["pipeline"].offer_frame(frame)
                elapsed = time.perf_counter() - t0
                time.sleep(max(0.0, dt - elapsed))

        def sender_loop():
            period = 1.0 / 30.0
            last_state = None
            while not client_gone.is_set() and not self._stop.is_set():
                state = core.state_message()
                if state != last_state:
                    delta = core.delta_message()
                    if delta is not None:
                        send(delta)
                    send(state)
                    last_state = state
                time.sleep(period)

        for msg in core.snapshot_messages():
            send(msg)
        tick_thread = threading.Thread(target=tick_loop, daemon=True)
        sender_thread = threading.Thread(target=sender_loop, daemon=True)
        tick_thread.start()
        sender_thread.start()
        try:
            while not self._stop.is_set():
                raw = conn.recv_message()
                if raw is None:
                    break
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    send({"type": "error", "msg": f"bad message: {exc.msg}"})
                    continue
                if not isinstance(msg, dict) or "type" not in msg:
                    send({"type": "error", "msg": "bad message: missing type"})
                elif msg["type"] == "steer":
                    try:
                        _, move, yaw, pitch = _validate_steer(msg)
                        with steer_lock:
                            steer.update(move=move, yaw=yaw, pitch=pitch, at=time.monotonic())
                    except ValueError as exc:
                        send({"type": "error", "msg": str(exc)})
                elif msg["type"] == "reset":
                    reset_requested.set()
                elif msg["type"] == "resync":
                    for out in core.snapshot_messages():
                        send(out)
                elif msg["type"] == "pause":
                    core.paused = bool(msg.get("on", True))
                else:
                    send({"type": "error", "msg": f"bad message: unknown type {msg['type']!r}"})
        finally:
            client_gone.set()
            tick_thread.join(timeout=5.0)
            sender_thread.join(timeout=5.0)
            holder["pipeline"].stop()
            conn.close()

    @staticmethod
    def _store_result(core, result):
        core.last_result = result


def serve_live(config, stepped=False):
    """Run the live server until interrupted."""
    server = LiveServer(config, stepped=stepped)
    print(f"live server listening on 127.0.0.1:{server.port} "
          f"({'stepped' if stepped else 'wall-clock'} mode)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
