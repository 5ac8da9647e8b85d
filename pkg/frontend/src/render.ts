/**
 * Canvas renderer for the live session.
 *
 * Two overlaid passes share the screen: world-frame content (the
 * ground-truth trail) is projected from the ground-truth pose, while
 * map-frame content (points, keyframes, estimated trail) is projected from
 * the estimated pose. Because both poses describe the same physical
 * camera in their respective frames, the sparse map visually overlays the
 * scene without any client-side alignment; point positions are rendered
 * exactly as the server sent them.
 */

import { ClientState, Vec3 } from "./reducer.js";
import { Pose7 } from "./protocol.js";

interface ViewBasis {
  r: [Vec3, Vec3, Vec3]; // world-to-camera rotation rows
  t: Vec3;               // camera position
}

function quatToRows(qx: number, qy: number, qz: number, qw: number): [Vec3, Vec3, Vec3] {
  // rows of R^T for the camera-to-world quaternion = world-to-camera rotation
  const xx = qx * qx, yy = qy * qy, zz = qz * qz;
  const xy = qx * qy, xz = qx * qz, yz = qy * qz;
  const wx = qw * qx, wy = qw * qy, wz = qw * qz;
  return [
    [1 - 2 * (yy + zz), 2 * (xy + wz), 2 * (xz - wy)],
    [2 * (xy - wz), 1 - 2 * (xx + zz), 2 * (yz + wx)],
    [2 * (xz + wy), 2 * (yz - wx), 1 - 2 * (xx + yy)],
  ];
}

function viewFromPose(pose: Pose7): ViewBasis {
  const [tx, ty, tz, qx, qy, qz, qw] = pose;
  return { r: quatToRows(qx, qy, qz, qw), t: [tx, ty, tz] };
}

function project(
  view: ViewBasis,
  p: Vec3,
  width: number,
  height: number,
  focal: number,
): [number, number, number] | null {
  const dx = p[0] - view.t[0];
  const dy = p[1] - view.t[1];
  const dz = p[2] - view.t[2];
  const cx = view.r[0][0] * dx + view.r[0][1] * dy + view.r[0][2] * dz;
  const cy = view.r[1][0] * dx + view.r[1][1] * dy + view.r[1][2] * dz;
  const cz = view.r[2][0] * dx + view.r[2][1] * dy + view.r[2][2] * dz;
  const depth = -cz;
  if (depth < 1e-3) return null;
  return [
    width / 2 + (focal * cx) / depth,
    height / 2 - (focal * cy) / depth,
    depth,
  ];
}

function drawTrail(
  ctx: CanvasRenderingContext2D,
  view: ViewBasis,
  trail: Vec3[],
  color: string,
  width: number,
  height: number,
  focal: number,
): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  let pen = false;
  for (const p of trail) {
    const s = project(view, p, width, height, focal);
    if (s === null) {
      pen = false;
      continue;
    }
    if (pen) {
      ctx.lineTo(s[0], s[1]);
    } else {
      ctx.moveTo(s[0], s[1]);
      pen = true;
    }
  }
  ctx.stroke();
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  state: ClientState,
  width: number,
  height: number,
): void {
  ctx.fillStyle = "#101014";
  ctx.fillRect(0, 0, width, height);
  const focal = height / 2; // 90 degree vertical fov, matching the capture camera

  if (state.poseGt !== null) {
    drawTrail(ctx, viewFromPose(state.poseGt), state.gtTrail, "#3fae5a", width, height, focal);
  }

  if (state.poseEst !== null) {
    const view = viewFromPose(state.poseEst);
    ctx.fillStyle = "#e8e8f0";
    for (const p of state.points.values()) {
      const s = project(view, p, width, height, focal);
      if (s === null) continue;
      const size = Math.min(5, Math.max(1.5, 4.0 / s[2]));
      ctx.fillRect(s[0] - size / 2, s[1] - size / 2, size, size);
    }
    ctx.fillStyle = "#f0a030";
    for (const pose of state.keyframes.values()) {
      const s = project(view, [pose[0], pose[1], pose[2]], width, height, focal);
      if (s === null) continue;
      ctx.fillRect(s[0] - 3, s[1] - 3, 6, 6);
    }
    drawTrail(ctx, view, state.estTrail, "#e04545", width, height, focal);
  }

  drawHud(ctx, state, width, height);
}

function drawHud(
  ctx: CanvasRenderingContext2D,
  state: ClientState,
  width: number,
  height: number,
): void {
  ctx.font = "13px monospace";
  ctx.fillStyle = "#d8d8e0";
  const lines = [
    `mode: ${state.mode}`,
    `tracked: ${state.nTracked}`,
    `points: ${state.points.size}  keyframes: ${state.keyframes.size}`,
    `map version: ${state.mapVersion}`,
    state.msPerFrame !== null ? `ms/frame: ${state.msPerFrame.toFixed(1)}` : "ms/frame: -",
    "WASD move, mouse look (click canvas), R reset, P pause",
  ];
  lines.forEach((line, i) => ctx.fillText(line, 12, 22 + i * 18));

  if (state.errorBanner !== null) {
    ctx.fillStyle = "#b03030";
    ctx.fillRect(0, height - 28, width, 28);
    ctx.fillStyle = "#fff";
    ctx.fillText(state.errorBanner, 12, height - 9);
  }

  // running point-count history sparkline
  const history = state.pointCountHistory;
  if (history.length >= 2) {
    const w = 180;
    const h = 40;
    const x0 = width - w - 12;
    const y0 = 12;
    const peak = Math.max(...history, 1);
    ctx.strokeStyle = "#5080d0";
    ctx.beginPath();
    history.forEach((count, i) => {
      const x = x0 + (i / (history.length - 1)) * w;
      const y = y0 + h - (count / peak) * h;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = "#9ab";
    ctx.fillText(`${history[history.length - 1]} pts`, x0, y0 + h + 14);
  }
}
