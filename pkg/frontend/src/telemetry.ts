/**
 * Bounded history of StateFrames for the strip charts: a ring buffer of the
 * last N frames (12 s at 50 Hz by default). Timestamps restart from zero on
 * every episode, so an episode change clears the buffer; within an episode
 * out-of-order frames are dropped.
 */

import type { StateFrame } from "./protocol.js";

export class TelemetryBuffer {
  private frames: StateFrame[] = [];
  private episode = -1;

  constructor(readonly capacity = 600) {}

  push(frame: StateFrame): void {
    if (frame.episode !== this.episode) {
      this.frames = [];
      this.episode = frame.episode;
    } else {
      const last = this.frames[this.frames.length - 1];
      if (last !== undefined && frame.t <= last.t) return;
    }
    this.frames.push(frame);
    if (this.frames.length > this.capacity) {
      this.frames.splice(0, this.frames.length - this.capacity);
    }
  }

  get length(): number {
    return this.frames.length;
  }

  latest(): StateFrame | undefined {
    return this.frames[this.frames.length - 1];
  }

  /** Snapshot of the buffered frames, oldest first. */
  all(): readonly StateFrame[] {
    return this.frames;
  }

  series(pick: (f: StateFrame) => number): number[] {
    return this.frames.map(pick);
  }
}
