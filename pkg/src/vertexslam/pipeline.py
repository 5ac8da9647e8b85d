"""Two-worker SLAM pipeline: a tracking thread fed through a capacity-1
mailbox (new frames are dropped, not queued, while tracking is busy) and a
mapping thread fed through a bounded keyframe queue that back-pressures
tracking when full.
"""

import queue
import threading
import time

from .slam_core import SlamSession, insert_keyframe_and_map

_STOP = object()


class FrameMailbox:
    """Single-slot handoff; offer() never blocks, a full slot drops the frame."""

    def __init__(self):
        self._cond = threading.Condition()
        self._slot = None
        self._closed = False

    def offer(self, frame):
        with self._cond:
            if self._closed or self._slot is not None:
                return False
            self._slot = frame
            self._cond.notify()
            return True

    def take(self):
        with self._cond:
            while self._slot is None and not self._closed:
                self._cond.wait()
            if self._slot is None:
                return _STOP
            frame = self._slot
            self._slot = None
            return frame

    def close(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class SlamPipeline:
    """Owns the tracking and mapping threads around a SlamSession.

    `on_result` (if given) runs on the tracking thread after every processed
    frame. `track_delay_s` artificially slows tracking; it exists for
    frame-skipping robustness tests.
    """

    def __init__(self, intrinsics, cfg=None, lm_settings=None,
                 kf_queue_capacity=4, track_delay_s=0.0, on_result=None):
        self.session = SlamSession(intrinsics, cfg, lm_settings, mapping_inline=False)
        self.mailbox = FrameMailbox()
        self.kf_queue = queue.Queue(maxsize=kf_queue_capacity)
        self.track_delay_s = track_delay_s
        self.on_result = on_result
        self.frames_offered = 0
        self.frames_skipped = 0
        self.frames_processed = 0
        self._tracking_thread = threading.Thread(target=self._tracking_loop, daemon=True)
        self._mapping_thread = threading.Thread(target=self._mapping_loop, daemon=True)
        self._started = False

    @property
    def map(self):
        return self.session.map

    def start(self):
        self._tracking_thread.start()
        self._mapping_thread.start()
        self._started = True
        return self

    def offer_frame(self, frame):
        """Non-blocking submit; returns False (and counts a skip) when the
        tracker is still busy with the previous frame."""
        self.frames_offered += 1
        if self.mailbox.offer(frame):
            return True
        self.frames_skipped += 1
        return False

    def _tracking_loop(self):
        while True:
            frame = self.mailbox.take()
            if frame is _STOP:
                break
            result = self.session.process_frame(frame)
            if self.track_delay_s > 0:
                time.sleep(self.track_delay_s)
            self.frames_processed += 1
            if self.session.pending_keyframe is not None:
                self.kf_queue.put(self.session.pending_keyframe)  # back-pressure
                self.session.pending_keyframe = None
            if self.on_result is not None:
                self.on_result(result)
        self.kf_queue.put(_STOP)

    def _mapping_loop(self):
        while True:
            item = self.kf_queue.get()
            if item is _STOP:
                break
            frame, pose = item
            insert_keyframe_and_map(
                frame, pose, self.session.map, self.session.cfg,
                self.session.intrinsics, self.session.lm_settings,
            )

    def stop(self, timeout=30.0):
        """Close the intake and join both workers."""
        self.mailbox.close()
        if self._started:
            self._tracking_thread.join(timeout=timeout)
            self._mapping_thread.join(timeout=timeout)
            if self._tracking_thread.is_alive() or self._mapping_thread.is_alive():
                raise RuntimeError("pipeline threads failed to stop")
