/**
 * Wire types for the live SLAM service and schema validation for inbound
 * messages. The transport is JSON text messages over a WebSocket (the
 * server also accepts newline-delimited JSON on the same port, which the
 * tests use from node).
 */

export type Pose7 = [number, number, number, number, number, number, number];

export type TrackerMode = "uninitialized" | "tracking" | "lost";

export interface StateMessage {
  type: "state";
  frame_id: number;
  mode: TrackerMode;
  pose_est: Pose7 | null;
  pose_gt: Pose7;
  n_tracked: number;
  map_version: number;
}

export interface MapDeltaMessage {
  type: "map_delta";
  version: number;
  /** version this delta extends; a base above the client's current version
   *  means updates were lost and a resync is needed */
  base_version?: number;
  added_points: [number, number, number, number][];
  added_keyframes: [number, ...number[]][];
}

export interface ErrorMessage {
  type: "error";
  msg: string;
}

export type ServerMessage = StateMessage | MapDeltaMessage | ErrorMessage;

export interface SteerMessage {
  type: "steer";
  dt: number;
  move: [number, number, number];
  yaw: number;
  pitch: number;
}

export interface ResetMessage {
  type: "reset";
}

export interface PauseMessage {
  type: "pause";
  on: boolean;
}

export interface ResyncMessage {
  type: "resync";
}

export type ClientMessage = SteerMessage | ResetMessage | PauseMessage | ResyncMessage;

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isPose7(v: unknown): v is Pose7 {
  return Array.isArray(v) && v.length === 7 && v.every(isFiniteNumber);
}

const MODES = new Set(["uninitialized", "tracking", "lost"]);

/**
 * Validate a decoded JSON value against the server message schema.
 * Returns the typed message or an error string (never throws).
 */
export function validateServerMessage(raw: unknown): ServerMessage | string {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    return "message is not an object";
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "state": {
      if (!isFiniteNumber(msg.frame_id)) return "state: bad frame_id";
      if (typeof msg.mode !== "string" || !MODES.has(msg.mode)) return "state: bad mode";
      if (msg.pose_est !== null && !isPose7(msg.pose_est)) return "state: bad pose_est";
      if (!isPose7(msg.pose_gt)) return "state: bad pose_gt";
      if (!isFiniteNumber(msg.n_tracked)) return "state: bad n_tracked";
      if (!isFiniteNumber(msg.map_version)) return "state: bad map_version";
      return msg as unknown as StateMessage;
    }
    case "map_delta": {
      if (!isFiniteNumber(msg.version)) return "map_delta: bad version";
      if (msg.base_version !== undefined && !isFiniteNumber(msg.base_version)) {
        return "map_delta: bad base_version";
      }
      if (!Array.isArray(msg.added_points)) return "map_delta: bad added_points";
      for (const p of msg.added_points) {
        if (!Array.isArray(p) || p.length !== 4 || !p.every(isFiniteNumber)) {
          return "map_delta: bad point row";
        }
      }
      if (!Array.isArray(msg.added_keyframes)) return "map_delta: bad added_keyframes";
      for (const k of msg.added_keyframes) {
        if (!Array.isArray(k) || k.length !== 8 || !k.every(isFiniteNumber)) {
          return "map_delta: bad keyframe row";
        }
      }
      return msg as unknown as MapDeltaMessage;
    }
    case "error": {
      if (typeof msg.msg !== "string") return "error: bad msg";
      return msg as unknown as ErrorMessage;
    }
    default:
      return `unknown message type ${String(msg.type)}`;
  }
}

/** Parse one JSON text frame into a server message or an error string. */
export function parseServerMessage(text: string): ServerMessage | string {
  let decoded: unknown;
  try {
    decoded = JSON.parse(text);
  } catch {
    return "not valid JSON";
  }
  return validateServerMessage(decoded);
}
