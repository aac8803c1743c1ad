/**
 * Teleop client wiring: websocket stream in, commands out, canvas views.
 *
 * Server address comes from URL query parameters (?host=...&port=...),
 * defaulting to the page's own host and port 8765. The event loop is the
 * only thread; network callbacks just mutate the telemetry buffer and the
 * joystick state, and a requestAnimationFrame loop redraws.
 */

import { VirtualJoystick } from "./joystick.js";
import { CommandThrottle, mapStickToCommand } from "./mapping.js";
import { parseFrame, SchemaError, type StateFrame } from "./protocol.js";
import { GEOMETRY, skeletonPoints, type SkeletonPoints, type Vec3 } from "./skeleton.js";
import { drawBar, drawSparkline } from "./sparkline.js";
import { TelemetryBuffer } from "./telemetry.js";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? window.location.hostname ?? "127.0.0.1";
const port = params.get("port") ?? "8765";
const url = `ws://${host}:${port}/session`;

const telemetry = new TelemetryBuffer(600);
const banner = document.getElementById("banner") as HTMLDivElement;
const statusEl = document.getElementById("status") as HTMLSpanElement;
const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

let ws: WebSocket | null = null;
let yawSlider = 0;

const throttle = new CommandThrottle((cmd) => {
  if (ws !== null && ws.readyState === WebSocket.OPEN) {
    ws.send(JSON.stringify({ type: "command", ...cmd, ts: performance.now() / 1000 }));
  }
}, 50); // <= 20 Hz regardless of input event rate

const joystick = new VirtualJoystick(
  document.getElementById("stick-base")!,
  document.getElementById("stick-knob")!,
  (x, y) => throttle.push(mapStickToCommand({ x, y, yaw: yawSlider })),
);

const slider = document.getElementById("yaw") as HTMLInputElement;
slider.addEventListener("input", () => {
  yawSlider = parseFloat(slider.value);
  throttle.push(mapStickToCommand({ x: joystick.x, y: joystick.y, yaw: yawSlider }));
});

document.getElementById("reset")!.addEventListener("click", () => {
  ws?.send(JSON.stringify({ type: "reset" }));
});

function showBanner(text: string): void {
  banner.textContent = text;
  banner.style.display = text ? "block" : "none";
}

function connect(): void {
  statusEl.textContent = `connecting to ${url}`;
  ws = new WebSocket(url);
  ws.onopen = () => {
    statusEl.textContent = `connected to ${url}`;
    showBanner("");
  };
  ws.onclose = () => {
    statusEl.textContent = "disconnected, retrying";
    setTimeout(connect, 1000);
  };
  ws.onmessage = (event) => {
    let msg: unknown;
    try {
      msg = JSON.parse(event.data as string);
    } catch {
      showBanner("unreadable message from server");
      return;
    }
    const kind = (msg as { type?: string }).type;
    if (kind === "frame") {
      try {
        telemetry.push(parseFrame(msg));
        showBanner("");
      } catch (err) {
        if (err instanceof SchemaError) {
          showBanner(`frame schema mismatch: ${err.message}`);
          return; // stream continues
        }
        throw err;
      }
    } else if (kind === "error") {
      showBanner(`server: ${(msg as { message?: string }).message}`);
    }
  };
}

// ------------------------------------------------------------------ drawing

const SIDE = { x0: 20, y0: 20, w: 360, h: 320, scale: 220 };
const TOP = { x0: 400, y0: 20, w: 220, h: 320, scale: 220 };

function project(p: Vec3, view: "side" | "top", center: Vec3): [number, number] {
  if (view === "side") {
    // x right, z up
    return [
      SIDE.x0 + SIDE.w / 2 + (p[0] - center[0]) * SIDE.scale,
      SIDE.y0 + SIDE.h - 20 - p[2] * SIDE.scale,
    ];
  }
  // top view: x up the screen, y to the left
  return [
    TOP.x0 + TOP.w / 2 - (p[1] - center[1]) * TOP.scale,
    TOP.y0 + TOP.h / 2 - (p[0] - center[0]) * TOP.scale,
  ];
}

function drawSkeleton(points: SkeletonPoints, frame: StateFrame): void {
  for (const view of ["side", "top"] as const) {
    const box = view === "side" ? SIDE : TOP;
    ctx.strokeStyle = "#333";
    ctx.strokeRect(box.x0, box.y0, box.w, box.h);
    ctx.fillStyle = "#888";
    ctx.font = "11px monospace";
    ctx.fillText(view, box.x0 + 4, box.y0 + 13);
    const center = points.base;
    if (view === "side") {
      // ground line at z = 0
      const [, gy] = project([center[0], 0, 0], view, center);
      ctx.strokeStyle = "#444";
      ctx.beginPath();
      ctx.moveTo(box.x0, gy);
      ctx.lineTo(box.x0 + box.w, gy);
      ctx.stroke();
    }
    const seg = (a: Vec3, b: Vec3, color: string) => {
      ctx.strokeStyle = color;
      ctx.lineWidth = 2;
      ctx.beginPath();
      const [ax, ay] = project(a, view, center);
      const [bx, by] = project(b, view, center);
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    };
    seg(points.base, points.head, "#ccc");
    for (const [leg, color, swing] of [
      [points.left, "#5af", frame.segment === "FLIGHT_LEFT"],
      [points.right, "#fa5", frame.segment === "FLIGHT_RIGHT"],
    ] as const) {
      const c = swing ? "#fff" : color;
      seg(points.base, leg.hip, c);
      seg(leg.hip, leg.knee, c);
      seg(leg.knee, leg.ankle, c);
      seg(leg.heel, leg.toe, c);
      seg(leg.ankle, leg.heel, c);
    }
    ctx.lineWidth = 1;
  }
}

function drawPhaseStrip(frame: StateFrame): void {
  const x0 = 20;
  const y0 = 360;
  const w = 600;
  const h = 18;
  const bounds = [0, 0.35 / 2.2, 1.1 / 2.2, 1.45 / 2.2, 1];
  const colors = ["#464", "#a63", "#464", "#36a"];
  for (let i = 0; i < 4; i++) {
    ctx.fillStyle = colors[i];
    ctx.fillRect(x0 + bounds[i] * w, y0, (bounds[i + 1] - bounds[i]) * w, h);
  }
  ctx.fillStyle = "#fff";
  ctx.fillRect(x0 + frame.phi * w - 1, y0 - 2, 3, h + 4);
  ctx.fillStyle = "#888";
  ctx.font = "10px monospace";
  ctx.fillText(`phase ${frame.segment} phi=${frame.phi.toFixed(3)}`, x0, y0 + h + 12);
}

function draw(): void {
  requestAnimationFrame(draw);
  const frame = telemetry.latest();
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (frame === undefined) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for frames", 40, 40);
    return;
  }
  const points = skeletonPoints(frame.base_pos, frame.base_quat, frame.q);
  drawSkeleton(points, frame);
  drawPhaseStrip(frame);

  drawBar(ctx, frame.fz[0], 1200, 640, 20, 26, 120, "#5af", "Fz L");
  drawBar(ctx, frame.fz[1], 1200, 676, 20, 26, 120, "#fa5", "Fz R");
  // sparklines: tracking terms, height penalty, total
  const rows: Array<[string, string]> = [
    ["r1", "#6c6"], ["r2", "#6cc"], ["r10", "#cc6"], ["r17", "#c66"], ["total", "#fff"],
  ];
  rows.forEach(([key, color], i) => {
    drawSparkline(ctx, telemetry.series((f) => f.rewards[key]), 20, 400 + i * 54,
      600, 48, color, key);
  });
  const info = [
    `t=${frame.t.toFixed(2)}s episode=${frame.episode} status=${frame.status}`,
    `cmd=[${frame.command.map((v) => v.toFixed(2)).join(", ")}]`,
    `base z=${frame.base_pos[2].toFixed(3)} realtime=${frame.realtime_ratio.toFixed(2)}x`,
  ];
  ctx.fillStyle = "#ccc";
  info.forEach((line, i) => ctx.fillText(line, 640, 180 + 14 * i));
}

connect();
draw();
