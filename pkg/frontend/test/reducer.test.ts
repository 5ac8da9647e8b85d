import { describe, expect, it } from "vitest";

import {
  applyServerMessage,
  initialClientState,
  replayLog,
  ClientState,
} from "../src/reducer.js";

const snapshot3 = {
  type: "map_delta",
  version: 5,
  base_version: 0,
  added_points: [
    [0, 0.0, 0.0, 1.0],
    [4, 0.5, -0.5, 2.0],
    [9, -1.0, 0.25, 3.0],
  ],
  added_keyframes: [[0, 0, 0, 0, 0, 0, 0, 1]],
};

const stateMsg = (frameId: number, mode = "tracking") => ({
  type: "state",
  frame_id: frameId,
  mode,
  pose_est: [0.1, 0, 0, 0, 0, 0, 1],
  pose_gt: [0.1, 0, 2.5, 0, 0, 0, 1],
  n_tracked: 42,
  map_version: 5,
});

describe("map deltas", () => {
  it("builds the cloud from a version-0 snapshot", () => {
    const { state, outgoing } = applyServerMessage(initialClientState(), snapshot3);
    expect(state.points.size).toBe(3);
    expect(state.points.get(4)).toEqual([0.5, -0.5, 2.0]);
    expect(state.keyframes.size).toBe(1);
    expect(state.mapVersion).toBe(5);
    expect(outgoing).toEqual([]);
  });

  it("is idempotent under duplicate replay", () => {
    const once = applyServerMessage(initialClientState(), snapshot3).state;
    const twice = applyServerMessage(once, snapshot3).state;
    expect(twice).toEqual(once);
  });

  it("ignores stale incremental deltas", () => {
    const base = applyServerMessage(initialClientState(), snapshot3).state;
    const stale = {
      type: "map_delta",
      version: 4,
      base_version: 3,
      added_points: [[99, 0, 0, 0]],
      added_keyframes: [],
    };
    const { state } = applyServerMessage(base, stale);
    expect(state).toEqual(base);
  });

  it("applies contiguous deltas and upserts moved points", () => {
    const base = applyServerMessage(initialClientState(), snapshot3).state;
    const delta = {
      type: "map_delta",
      version: 9,
      base_version: 5,
      added_points: [
        [4, 9.9, 9.9, 9.9], // moved by adjustment
        [12, 1, 2, 3],
      ],
      added_keyframes: [[1, 1, 0, 0, 0, 0, 0, 1]],
    };
    const { state, outgoing } = applyServerMessage(base, delta);
    expect(outgoing).toEqual([]);
    expect(state.points.size).toBe(4);
    expect(state.points.get(4)).toEqual([9.9, 9.9, 9.9]);
    expect(state.keyframes.size).toBe(2);
    expect(state.pointCountHistory).toEqual([3, 4]);
  });

  it("requests a resync on a version gap", () => {
    const base = applyServerMessage(initialClientState(), snapshot3).state;
    const gap = {
      type: "map_delta",
      version: 20,
      base_version: 12, // we are at 5; 5 < 12 means lost updates
      added_points: [[30, 0, 0, 0]],
      added_keyframes: [],
    };
    const { state, outgoing } = applyServerMessage(base, gap);
    expect(outgoing).toEqual([{ type: "resync" }]);
    expect(state.points.size).toBe(3); // unchanged until the snapshot arrives
  });
});

describe("state messages", () => {
  it("updates pose, HUD fields and trails", () => {
    const base = applyServerMessage(initialClientState(), snapshot3).state;
    const { state } = applyServerMessage(base, stateMsg(10), 1000);
    expect(state.mode).toBe("tracking");
    expect(state.nTracked).toBe(42);
    expect(state.estTrail).toEqual([[0.1, 0, 0]]);
    expect(state.gtTrail).toEqual([[0.1, 0, 2.5]]);
    const next = applyServerMessage(state, stateMsg(20), 1100).state;
    expect(next.msPerFrame).toBeCloseTo(10, 9); // 100 ms over 10 frames
  });

  it("skips the estimated trail while uninitialized", () => {
    const msg = {
      ...stateMsg(1, "uninitialized"),
      pose_est: null,
    };
    const { state } = applyServerMessage(initialClientState(), msg);
    expect(state.estTrail).toEqual([]);
    expect(state.gtTrail.length).toBe(1);
  });
});

describe("schema violations", () => {
  it.each([
    ["not json at all", "{nonsense"],
    ["missing type", JSON.stringify({ hello: 1 })],
    ["bad mode", JSON.stringify({ ...stateMsg(1), mode: "confused" })],
    ["bad pose", JSON.stringify({ ...stateMsg(1), pose_gt: [1, 2] })],
    ["bad point row", JSON.stringify({ ...snapshot3, added_points: [[1, 2]] })],
    ["non-finite", JSON.stringify({ ...stateMsg(1), n_tracked: null })],
  ])("turns %s into an error banner without crashing", (_label, raw) => {
    const before = applyServerMessage(initialClientState(), snapshot3).state;
    const { state, outgoing } = applyServerMessage(before, raw);
    expect(state.errorBanner).toMatch(/bad server message/);
    expect(state.points).toEqual(before.points); // cloud untouched
    expect(outgoing).toEqual([]);
  });

  it("surfaces server error messages in the banner", () => {
    const { state } = applyServerMessage(initialClientState(), {
      type: "error",
      msg: "bad steer",
    });
    expect(state.errorBanner).toBe("bad steer");
  });
});

/** Small deterministic generator for the replay test. */
function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

function recordedLog(n: number): { raw: unknown; atMs: number }[] {
  const rand = lcg(7);
  const log: { raw: unknown; atMs: number }[] = [{ raw: snapshot3, atMs: 0 }];
  let version = 5;
  let frame = 0;
  for (let i = 1; i < n; i++) {
    const atMs = i * 13;
    const roll = rand();
    if (roll < 0.55) {
      frame += 1 + Math.floor(rand() * 3);
      log.push({ raw: stateMsg(frame), atMs });
    } else if (roll < 0.85) {
      const base = version;
      version += 1 + Math.floor(rand() * 4);
      log.push({
        raw: {
          type: "map_delta",
          version,
          base_version: base,
          added_points: [[Math.floor(rand() * 500), rand(), rand(), rand() * 3]],
          added_keyframes:
            rand() < 0.3 ? [[Math.floor(rand() * 40), rand(), 0, 0, 0, 0, 0, 1]] : [],
        },
        atMs,
      });
    } else if (roll < 0.93) {
      // duplicate of the last delta-or-snapshot; must be a no-op
      log.push({ raw: snapshot3, atMs });
    } else {
      log.push({ raw: `{broken json ${i}`, atMs });
    }
  }
  return log;
}

describe("recorded log replay", () => {
  it("500 messages replay to an identical final state", () => {
    const log = recordedLog(500);
    const a = replayLog(log);
    const b = replayLog(log);
    expect(a.state).toEqual(b.state);
    expect(a.outgoing).toEqual(b.outgoing);
    expect(a.state.points.size).toBeGreaterThan(50);
    expect(a.state.errorBanner).toMatch(/bad server message/); // broken entries seen
  });

  it("replay is insensitive to recomputation from intermediate states", () => {
    const log = recordedLog(500);
    const direct = replayLog(log);
    let state: ClientState = initialClientState();
    for (const entry of log) {
      state = applyServerMessage(state, entry.raw, entry.atMs).state;
    }
    expect(state).toEqual(direct.state);
  });
});
