/**
 * Stick-to-command mapping and client-side clamping.
 *
 * The forward axis is asymmetric: full forward is 1.0 m/s but full back is
 * only -0.3 m/s, so the stick maps piecewise-linearly with the center at
 * zero. The clamp mirrors the server's ranges so the UI never requests
 * something the server would reject anyway.
 */

export interface JoystickState {
  x: number; // right positive, [-1, 1]
  y: number; // forward positive, [-1, 1]
  yaw: number; // slider, [-1, 1], left (counter-clockwise) positive
}

export const COMMAND_RANGES = {
  vx: [-0.3, 1.0] as const,
  vy: [-0.3, 0.3] as const,
  wz: [-0.5, 0.5] as const,
};

export interface Command {
  vx: number;
  vy: number;
  wz: number;
}

export function clampCommand(cmd: Command): Command {
  const clip = (v: number, [lo, hi]: readonly [number, number]) =>
    Math.min(hi, Math.max(lo, v));
  return {
    vx: clip(cmd.vx, COMMAND_RANGES.vx),
    vy: clip(cmd.vy, COMMAND_RANGES.vy),
    wz: clip(cmd.wz, COMMAND_RANGES.wz),
  };
}

export function mapStickToCommand(stick: JoystickState): Command {
  const { x, y, yaw } = stick;
  const vx = y >= 0 ? y * COMMAND_RANGES.vx[1] : -y * COMMAND_RANGES.vx[0];
  // stick right strafes right; the robot's +y axis points left.
  // adding 0 squashes the -0 that -x produces at center
  const vy = -x * COMMAND_RANGES.vy[1] + 0;
  const wz = yaw * COMMAND_RANGES.wz[1] + 0;
  return clampCommand({ vx: vx + 0, vy, wz });
}

/**
 * Rate limiter for outgoing commands: at most one send per interval,
 * always flushing the newest value (latest-wins, trailing edge).
 */
export class CommandThrottle {
  private last = -Infinity;
  private pending: Command | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly send: (cmd: Command) => void,
    private readonly intervalMs = 50,
    private readonly now: () => number = () => performance.now(),
    private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> =
      (fn, ms) => setTimeout(fn, ms),
  ) {}

  push(cmd: Command): void {
    const t = this.now();
    if (t - this.last >= this.intervalMs) {
      this.last = t;
      this.send(cmd);
      return;
    }
    this.pending = cmd;
    if (this.timer === null) {
      const wait = this.intervalMs - (t - this.last);
      this.timer = this.schedule(() => this.flush(), wait);
    }
  }

  private flush(): void {
    this.timer = null;
    if (this.pending !== null) {
      this.last = this.now();
      const cmd = this.pending;
      this.pending = null;
      this.send(cmd);
    }
  }
}
