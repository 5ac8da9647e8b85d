/**
 * End-to-end steering round trip against the real live server.
 *
 * Spawns the Python server in stepped mode, drives 5 seconds of forward
 * motion over plain TCP (newline-delimited JSON), and checks that the map
 * point count never decreases after initialization and that the final set
 * of point ids matches an offline replay of the same command log.
 */

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { applyServerMessage, initialClientState, ClientState } from "../src/reducer.js";

const PYTHON = process.env.VERTEXSLAM_PYTHON ?? "python3";
const SEED = "4";

const forwardSteer = {
  type: "steer",
  dt: 1 / 75,
  move: [0, 0, -0.8],
  yaw: 0,
  pitch: 0,
};

let server: ReturnType<typeof spawn>;
let port: number;

beforeAll(async () => {
  server = spawn(PYTHON, [
    "-m", "vertexslam", "serve", "--stepped", "--port", "0", "--seed", SEED,
  ]);
  port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error("server did not announce a port")), 20_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/listening on 127\.0\.0\.1:(\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(Number(match[1]));
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
}, 30_000);

afterAll(() => {
  server?.kill();
});

class LineClient {
  private socket: net.Socket;
  private buffer = "";
  private queue: string[] = [];
  private waiter: ((line: string) => void) | null = null;

  constructor(portNum: number) {
    this.socket = net.connect(portNum, "127.0.0.1");
    this.socket.on("data", (chunk) => {
      this.buffer += chunk.toString();
      let idx: number;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        if (this.waiter) {
          const w = this.waiter;
          this.waiter = null;
          w(line);
        } else {
          this.queue.push(line);
        }
      }
    });
  }

  ready(): Promise<void> {
    return new Promise((resolve, reject) => {
      this.socket.once("connect", resolve);
      this.socket.once("error", reject);
    });
  }

  send(msg: unknown): void {
    this.socket.write(JSON.stringify(msg) + "\n");
  }

  next(timeoutMs = 15_000): Promise<string> {
    if (this.queue.length > 0) {
      return Promise.resolve(this.queue.shift()!);
    }
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error("timed out waiting for server message")), timeoutMs);
      this.waiter = (line) => {
        clearTimeout(timer);
        resolve(line);
      };
    });
  }

  close(): void {
    this.socket.destroy();
  }
}

describe("steering round trip", () => {
  it(
    "5 s of forward motion grows the map monotonically and matches the offline replay",
    async () => {
      const commands = Array.from({ length: Math.round(5 * 75) }, () => forwardSteer);

      const client = new LineClient(port);
      await client.ready();
      let state: ClientState = initialClientState();
      // connect handshake: snapshot + state
      state = applyServerMessage(state, await client.next()).state;
      state = applyServerMessage(state, await client.next()).state;

      const counts: number[] = [];
      let initialized = false;
      for (const cmd of commands) {
        client.send(cmd);
        // per steer, the stepped server replies with optional map_delta then state
        for (;;) {
          const raw = await client.next();
          const parsed = JSON.parse(raw);
          state = applyServerMessage(state, parsed).state;
          if (parsed.type === "state") break;
          expect(parsed.type).toBe("map_delta");
        }
        if (state.mode === "tracking") initialized = true;
        if (initialized) counts.push(state.points.size);
      }
      client.close();

      expect(initialized).toBe(true);
      expect(counts.length).toBeGreaterThan(0);
      expect(counts[counts.length - 1]!).toBeGreaterThan(0);
      for (let i = 1; i < counts.length; i++) {
        expect(counts[i]!).toBeGreaterThanOrEqual(counts[i - 1]!);
      }

      // offline replay of the identical command log through the CLI
      const dir = mkdtempSync(join(tmpdir(), "steerlog-"));
      const logPath = join(dir, "forward.jsonl");
      writeFileSync(logPath, commands.map((c) => JSON.stringify(c)).join("\n") + "\n");
      const replay = spawnSync(
        PYTHON,
        ["-m", "vertexslam", "replay-log", logPath, "--seed", SEED],
        { encoding: "utf-8", timeout: 120_000 },
      );
      expect(replay.status).toBe(0);
      const idLine = replay.stdout.split("\n").find((l) => l.startsWith("point_ids = "));
      expect(idLine).toBeDefined();
      const offlineIds = idLine!
        .slice("point_ids = ".length)
        .split(",")
        .filter((s) => s.length > 0)
        .map(Number)
        .sort((a, b) => a - b);
      const liveIds = [...state.points.keys()].sort((a, b) => a - b);
      expect(liveIds).toEqual(offlineIds);
    },
    120_000,
  );
});
