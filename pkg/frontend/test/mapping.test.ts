import { describe, expect, it, vi } from "vitest";

import {
  clampCommand,
  CommandThrottle,
  COMMAND_RANGES,
  mapStickToCommand,
} from "../src/mapping.js";

describe("mapStickToCommand", () => {
  it("maps the centered stick to a zero command", () => {
    expect(mapStickToCommand({ x: 0, y: 0, yaw: 0 })).toEqual({ vx: 0, vy: 0, wz: 0 });
  });

  it("maps full forward to the 1.0 m/s range maximum", () => {
    expect(mapStickToCommand({ x: 0, y: 1, yaw: 0 }).vx).toBe(1.0);
  });

  it("maps full back to the -0.3 m/s range minimum", () => {
    expect(mapStickToCommand({ x: 0, y: -1, yaw: 0 }).vx).toBe(-0.3);
  });

  it("is piecewise linear through the center", () => {
    expect(mapStickToCommand({ x: 0, y: 0.5, yaw: 0 }).vx).toBeCloseTo(0.5, 12);
    expect(mapStickToCommand({ x: 0, y: -0.5, yaw: 0 }).vx).toBeCloseTo(-0.15, 12);
  });

  it("maps lateral stick and yaw slider onto their ranges", () => {
    const cmd = mapStickToCommand({ x: 1, y: 0, yaw: -1 });
    expect(cmd.vy).toBe(-0.3); // stick right strafes right (robot +y is left)
    expect(cmd.wz).toBe(-0.5);
  });

  it("never leaves the command ranges for any stick input", () => {
    for (const x of [-1, -0.3, 0, 0.7, 1]) {
      for (const y of [-1, -0.2, 0, 0.4, 1]) {
        for (const yaw of [-1, 0, 1]) {
          const c = mapStickToCommand({ x, y, yaw });
          expect(c.vx).toBeGreaterThanOrEqual(COMMAND_RANGES.vx[0]);
          expect(c.vx).toBeLessThanOrEqual(COMMAND_RANGES.vx[1]);
          expect(c.vy).toBeGreaterThanOrEqual(COMMAND_RANGES.vy[0]);
          expect(c.vy).toBeLessThanOrEqual(COMMAND_RANGES.vy[1]);
          expect(c.wz).toBeGreaterThanOrEqual(COMMAND_RANGES.wz[0]);
          expect(c.wz).toBeLessThanOrEqual(COMMAND_RANGES.wz[1]);
        }
      }
    }
  });
});

describe("clampCommand", () => {
  it("mirrors the server clamp", () => {
    expect(clampCommand({ vx: 2, vy: -1, wz: 0.2 })).toEqual({ vx: 1.0, vy: -0.3, wz: 0.2 });
  });

  it("is idempotent", () => {
    const once = clampCommand({ vx: 5, vy: 5, wz: 5 });
    expect(clampCommand(once)).toEqual(once);
  });
});

describe("CommandThrottle", () => {
  it("limits the send rate to the configured interval", () => {
    let t = 0;
    const sent: number[] = [];
    const timers: Array<{ at: number; fn: () => void }> = [];
    const throttle = new CommandThrottle(
      (cmd) => sent.push(cmd.vx),
      50,
      () => t,
      (fn, ms) => {
        timers.push({ at: t + ms, fn });
        return 0 as never;
      },
    );
    // 100 pushes over one second of fake time at 10 ms spacing
    for (let i = 0; i < 100; i++) {
      throttle.push({ vx: i, vy: 0, wz: 0 });
      t += 10;
      for (const timer of timers.splice(0)) {
        if (timer.at <= t) timer.fn();
        else timers.push(timer);
      }
    }
    // a 50 ms interval over 1 s allows at most 21 sends (20 Hz + the first)
    expect(sent.length).toBeLessThanOrEqual(21);
    expect(sent.length).toBeGreaterThanOrEqual(19);
  });

  it("delivers the newest value, not the oldest", () => {
    let t = 0;
    const sent: number[] = [];
    let pendingTimer: (() => void) | null = null;
    const throttle = new CommandThrottle(
      (cmd) => sent.push(cmd.vx),
      50,
      () => t,
      (fn) => {
        pendingTimer = fn;
        return 0 as never;
      },
    );
    throttle.push({ vx: 1, vy: 0, wz: 0 }); // sent immediately
    t += 10;
    throttle.push({ vx: 2, vy: 0, wz: 0 }); // queued
    t += 10;
    throttle.push({ vx: 3, vy: 0, wz: 0 }); // replaces the queued value
    t += 40;
    pendingTimer!();
    expect(sent).toEqual([1, 3]);
  });
});
