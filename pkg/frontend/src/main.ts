/**
 * Entry point: WebSocket connection, input capture with pointer lock, the
 * fixed client tick that emits steer messages, and the render loop.
 */

import { inputToSteer, zeroSteer } from "./input.js";
import { applyServerMessage, initialClientState, ClientState } from "./reducer.js";
import { ClientMessage } from "./protocol.js";
import { renderScene } from "./render.js";

const TICK_HZ = 60;

function serverUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const host = params.get("host") ?? window.location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "7434";
  return `ws://${host}:${port}/`;
}

function start(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("2d canvas context unavailable");
  }

  let state: ClientState = initialClientState();
  const heldKeys = new Set<string>();
  let mouseDx = 0;
  let mouseDy = 0;
  let lastSentWasZero = true;
  let paused = false;

  const socket = new WebSocket(serverUrl());
  const send = (msg: ClientMessage) => {
    if (socket.readyState === WebSocket.OPEN) {
      socket.send(JSON.stringify(msg));
    }
  };

  socket.onmessage = (event) => {
    const result = applyServerMessage(state, String(event.data), performance.now());
    state = result.state;
    for (const out of result.outgoing) {
      send(out);
    }
  };
  socket.onclose = () => {
    state = { ...state, connection: "closed", errorBanner: "connection closed" };
  };
  socket.onerror = () => {
    state = { ...state, errorBanner: "websocket error" };
  };

  canvas.addEventListener("click", () => canvas.requestPointerLock());
  window.addEventListener("keydown", (e) => {
    const key = e.key.toLowerCase();
    if (key === "r") {
      send({ type: "reset" });
      state = initialClientState();
      return;
    }
    if (key === "p") {
      paused = !paused;
      send({ type: "pause", on: paused });
      return;
    }
    heldKeys.add(key);
  });
  window.addEventListener("keyup", (e) => heldKeys.delete(e.key.toLowerCase()));
  window.addEventListener("mousemove", (e) => {
    if (document.pointerLockElement === canvas) {
      mouseDx += e.movementX;
      mouseDy += e.movementY;
    }
  });

  window.setInterval(() => {
    const dt = 1 / TICK_HZ;
    const steer = inputToSteer({ keys: heldKeys, mouseDx, mouseDy }, dt);
    mouseDx = 0;
    mouseDy = 0;
    if (steer !== null) {
      send(steer);
      lastSentWasZero = false;
    } else if (!lastSentWasZero) {
      // one zero-motion message on the idle transition stops the camera
      send(zeroSteer(dt));
      lastSentWasZero = true;
    }
  }, 1000 / TICK_HZ);

  const draw = () => {
    renderScene(ctx, state, canvas.width, canvas.height);
    requestAnimationFrame(draw);
  };
  requestAnimationFrame(draw);
}

window.addEventListener("DOMContentLoaded", start);
