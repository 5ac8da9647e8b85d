/**
 * Keyboard/mouse sampling to steer messages.
 *
 * WASD spans the body-frame move vector (forward is -z, matching the
 * capture convention); the combined direction is normalized then scaled by
 * the configured speed, so diagonals are not faster. Mouse deltas become
 * yaw/pitch rates. Idle samples produce no message; the caller is expected
 * to send a single zero-motion message on the transition to idle so the
 * server stops integrating.
 */

import { SteerMessage } from "./protocol.js";

export interface InputSample {
  /** currently held keys, KeyboardEvent.key lowercase */
  keys: ReadonlySet<string>;
  /** accumulated pointer movement since the last tick, px */
  mouseDx: number;
  mouseDy: number;
}

export interface SteerTuning {
  speed: number; // body units per second
  radPerPixel: number;
}

export const DEFAULT_TUNING: SteerTuning = { speed: 1.5, radPerPixel: 0.003 };

export function inputToSteer(
  sample: InputSample,
  dt: number,
  tuning: SteerTuning = DEFAULT_TUNING,
): SteerMessage | null {
  if (!(dt > 0) || !Number.isFinite(dt)) {
    throw new Error(`inputToSteer needs a positive finite dt, got ${dt}`);
  }
  let x = 0;
  let z = 0;
  if (sample.keys.has("w")) z -= 1;
  if (sample.keys.has("s")) z += 1;
  if (sample.keys.has("a")) x -= 1;
  if (sample.keys.has("d")) x += 1;

  const norm = Math.hypot(x, z);
  const move: [number, number, number] =
    norm > 0 ? [(x / norm) * tuning.speed, 0, (z / norm) * tuning.speed] : [0, 0, 0];

  // mouse right = turn right = negative yaw about +y; mouse up = pitch up
  const yaw = sample.mouseDx === 0 ? 0 : (-sample.mouseDx * tuning.radPerPixel) / dt;
  const pitch = sample.mouseDy === 0 ? 0 : (-sample.mouseDy * tuning.radPerPixel) / dt;

  if (norm === 0 && sample.mouseDx === 0 && sample.mouseDy === 0) {
    return null;
  }
  return { type: "steer", dt, move, yaw, pitch };
}

export function zeroSteer(dt: number): SteerMessage {
  return { type: "steer", dt, move: [0, 0, 0], yaw: 0, pitch: 0 };
}
