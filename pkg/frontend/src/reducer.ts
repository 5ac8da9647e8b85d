/**
 * Client state and the pure reducer that folds server messages into it.
 *
 * The reducer never mutates its input; replaying a recorded message log
 * (with its recorded receive times) reproduces an identical final state.
 * Map deltas are idempotent by version: a delta at or below the current
 * version is ignored, and a delta whose base version is ahead of the
 * current version signals lost updates, surfacing a resync request in the
 * returned `outgoing` list.
 */

import {
  ClientMessage,
  Pose7,
  ServerMessage,
  TrackerMode,
  validateServerMessage,
} from "./protocol.js";

export type Vec3 = [number, number, number];

export interface KeyframeRecord {
  kfId: number;
  pose: Pose7;
}

export interface ClientState {
  connection: "connecting" | "connected" | "closed";
  errorBanner: string | null;
  mode: TrackerMode;
  frameId: number;
  nTracked: number;
  mapVersion: number;
  poseEst: Pose7 | null;
  poseGt: Pose7 | null;
  points: Map<number, Vec3>;
  keyframes: Map<number, Pose7>;
  estTrail: Vec3[];
  gtTrail: Vec3[];
  pointCountHistory: number[];
  msPerFrame: number | null;
  lastStateAtMs: number | null;
  lastFrameId: number | null;
}

export function initialClientState(): ClientState {
  return {
    connection: "connecting",
    errorBanner: null,
    mode: "uninitialized",
    frameId: -1,
    nTracked: 0,
    mapVersion: 0,
    poseEst: null,
    poseGt: null,
    points: new Map(),
    keyframes: new Map(),
    estTrail: [],
    gtTrail: [],
    pointCountHistory: [],
    msPerFrame: null,
    lastStateAtMs: null,
    lastFrameId: null,
  };
}

export interface ReducerResult {
  state: ClientState;
  outgoing: ClientMessage[];
}

const TRAIL_LIMIT = 20_000;
const HISTORY_LIMIT = 600;

function pushCapped<T>(arr: T[], value: T, limit: number): T[] {
  const out = arr.length >= limit ? arr.slice(arr.length - limit + 1) : arr.slice();
  out.push(value);
  return out;
}

/**
 * Fold one raw (already JSON-decoded or text) server message into the state.
 * `nowMs` is the receive time used only for the ms/frame HUD stat; passing
 * recorded times makes replays exact.
 */
export function applyServerMessage(
  state: ClientState,
  raw: unknown,
  nowMs = 0,
): ReducerResult {
  const msg = typeof raw === "string" ? validateOrError(raw) : validateServerMessage(raw);
  if (typeof msg === "string") {
    return {
      state: { ...state, errorBanner: `bad server message: ${msg}` },
      outgoing: [],
    };
  }
  switch (msg.type) {
    case "state":
      return { state: applyState(state, msg, nowMs), outgoing: [] };
    case "map_delta":
      return applyDelta(state, msg);
    case "error":
      return { state: { ...state, errorBanner: msg.msg }, outgoing: [] };
  }
}

function validateOrError(text: string): ServerMessage | string {
  let decoded: unknown;
  try {
    decoded = JSON.parse(text);
  } catch {
    return "not valid JSON";
  }
  return validateServerMessage(decoded);
}

function applyState(
  state: ClientState,
  msg: Extract<ServerMessage, { type: "state" }>,
  nowMs: number,
): ClientState {
  let msPerFrame = state.msPerFrame;
  if (
    state.lastStateAtMs !== null &&
    state.lastFrameId !== null &&
    msg.frame_id > state.lastFrameId
  ) {
    msPerFrame = (nowMs - state.lastStateAtMs) / (msg.frame_id - state.lastFrameId);
  }
  const estTrail =
    msg.pose_est !== null
      ? pushCapped(state.estTrail, poseToPosition(msg.pose_est), TRAIL_LIMIT)
      : state.estTrail;
  return {
    ...state,
    connection: "connected",
    mode: msg.mode,
    frameId: msg.frame_id,
    nTracked: msg.n_tracked,
    poseEst: msg.pose_est,
    poseGt: msg.pose_gt,
    estTrail,
    gtTrail: pushCapped(state.gtTrail, poseToPosition(msg.pose_gt), TRAIL_LIMIT),
    msPerFrame,
    lastStateAtMs: nowMs,
    lastFrameId: msg.frame_id,
  };
}

function applyDelta(
  state: ClientState,
  msg: Extract<ServerMessage, { type: "map_delta" }>,
): ReducerResult {
  // idempotency by version comes first: anything at or below the applied
  // version is a duplicate or stale, snapshot or not
  if (msg.version <= state.mapVersion && state.connection === "connected") {
    return { state, outgoing: [] };
  }
  const base = msg.base_version ?? 0;
  if (base === 0) {
    // full snapshot (connect / resync reply): rebuild from scratch
    const points = new Map<number, Vec3>();
    const keyframes = new Map<number, Pose7>();
    upsert(points, keyframes, msg);
    return {
      state: {
        ...state,
        connection: "connected",
        points,
        keyframes,
        mapVersion: msg.version,
        pointCountHistory: pushCapped(state.pointCountHistory, points.size, HISTORY_LIMIT),
      },
      outgoing: [],
    };
  }
  if (base > state.mapVersion) {
    // gap: updates between our version and the delta's base were lost
    return { state, outgoing: [{ type: "resync" }] };
  }
  const points = new Map(state.points);
  const keyframes = new Map(state.keyframes);
  upsert(points, keyframes, msg);
  return {
    state: {
      ...state,
      points,
      keyframes,
      mapVersion: msg.version,
      pointCountHistory: pushCapped(state.pointCountHistory, points.size, HISTORY_LIMIT),
    },
    outgoing: [],
  };
}

function upsert(
  points: Map<number, Vec3>,
  keyframes: Map<number, Pose7>,
  msg: Extract<ServerMessage, { type: "map_delta" }>,
): void {
  for (const [id, x, y, z] of msg.added_points) {
    points.set(id, [x, y, z]);
  }
  for (const row of msg.added_keyframes) {
    const [kfId, ...pose] = row;
    keyframes.set(kfId, pose as Pose7);
  }
}

function poseToPosition(pose: Pose7): Vec3 {
  return [pose[0], pose[1], pose[2]];
}

/** Replay a recorded log of (message, receive time) pairs from scratch. */
export function replayLog(
  log: { raw: unknown; atMs: number }[],
): { state: ClientState; outgoing: ClientMessage[] } {
  let state = initialClientState();
  const outgoing: ClientMessage[] = [];
  for (const entry of log) {
    const result = applyServerMessage(state, entry.raw, entry.atMs);
    state = result.state;
    outgoing.push(...result.outgoing);
  }
  return { state, outgoing };
}
