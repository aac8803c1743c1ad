/**
 * Wire types shared with the teleop server. Field names are pinned by the
 * server's schema files (striderl/schemas/*.json); renaming anything here
 * breaks the protocol.
 */

export const FRAME_VERSION = 1;

export type GaitSegment =
  | "DOUBLE_SUPPORT_A"
  | "FLIGHT_RIGHT"
  | "DOUBLE_SUPPORT_B"
  | "FLIGHT_LEFT";

export interface StateFrame {
  type: "frame";
  v: number;
  t: number;
  base_pos: [number, number, number];
  base_quat: [number, number, number, number]; // w, x, y, z
  q: number[]; // 12 joint angles, left leg then right
  fz: [number, number]; // left, right vertical foot force
  segment: GaitSegment;
  phi: number;
  command: [number, number, number];
  rewards: Record<string, number>; // r1..r17 and total
  episode: number;
  status: "running" | "terminated" | "truncated";
  drift: number;
  realtime_ratio: number;
}

export interface CommandMessage {
  type: "command";
  vx: number;
  vy: number;
  wz: number;
  ts: number;
}

export interface HelloMessage {
  type: "hello";
  v: number;
  version: string;
  checkpoint: string | null;
  rate_hz: number;
}

const SEGMENTS = new Set([
  "DOUBLE_SUPPORT_A",
  "FLIGHT_RIGHT",
  "DOUBLE_SUPPORT_B",
  "FLIGHT_LEFT",
]);

const REWARD_KEYS = [...Array.from({ length: 17 }, (_, i) => `r${i + 1}`), "total"];

export class SchemaError extends Error {}

function requireNumberArray(value: unknown, length: number, name: string): number[] {
  if (!Array.isArray(value) || value.length !== length) {
    throw new SchemaError(`${name}: expected array of ${length} numbers`);
  }
  for (const x of value) {
    if (typeof x !== "number" || !Number.isFinite(x)) {
      throw new SchemaError(`${name}: non-finite entry`);
    }
  }
  return value as number[];
}

/** Validate an incoming message as a StateFrame; throws SchemaError. */
export function parseFrame(raw: unknown): StateFrame {
  if (typeof raw !== "object" || raw === null) {
    throw new SchemaError("frame: not an object");
  }
  const msg = raw as Record<string, unknown>;
  if (msg.type !== "frame") throw new SchemaError("frame: wrong type tag");
  if (msg.v !== FRAME_VERSION) throw new SchemaError(`frame: version ${msg.v}`);
  if (typeof msg.t !== "number") throw new SchemaError("frame: t");
  requireNumberArray(msg.base_pos, 3, "base_pos");
  requireNumberArray(msg.base_quat, 4, "base_quat");
  requireNumberArray(msg.q, 12, "q");
  requireNumberArray(msg.fz, 2, "fz");
  requireNumberArray(msg.command, 3, "command");
  if (!SEGMENTS.has(msg.segment as string)) throw new SchemaError("frame: segment");
  if (typeof msg.phi !== "number" || msg.phi < 0 || msg.phi >= 1) {
    throw new SchemaError("frame: phi");
  }
  const rewards = msg.rewards as Record<string, unknown>;
  if (typeof rewards !== "object" || rewards === null) {
    throw new SchemaError("frame: rewards");
  }
  for (const key of REWARD_KEYS) {
    if (typeof rewards[key] !== "number") throw new SchemaError(`frame: rewards.${key}`);
  }
  if (typeof msg.episode !== "number") throw new SchemaError("frame: episode");
  if (!["running", "terminated", "truncated"].includes(msg.status as string)) {
    throw new SchemaError("frame: status");
  }
  if (typeof msg.drift !== "number" || typeof msg.realtime_ratio !== "number") {
    throw new SchemaError("frame: timing fields");
  }
  return msg as unknown as StateFrame;
}

export function makeCommand(vx: number, vy: number, wz: number, ts: number): CommandMessage {
  return { type: "command", vx, vy, wz, ts };
}
