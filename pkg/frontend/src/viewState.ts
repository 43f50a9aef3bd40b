/**
 * Client-side view model.  The UI never mutates simulation state locally:
 * every on-screen position originates from a server `state` broadcast, and
 * rendering only ever moves forward in version numbers.
 *
 * Broadcasts can arrive faster than the display refreshes, so incoming
 * frames overwrite a single pending slot instead of queueing — the render
 * loop always draws the newest frame and memory use stays constant at any
 * broadcast rate.
 */

import type {
  ControlResultMessage,
  ErrorMessage,
  ServerMessage,
  StateMessage,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connected" | "error";

export const H_RANGE: readonly [number, number] = [0.001, 0.1];
export const MU_RANGE: readonly [number, number] = [0, 0.05];

export interface Point2 {
  x: number;
  y: number;
}

function clamp(value: number, [lo, hi]: readonly [number, number]): number {
  return Math.min(hi, Math.max(lo, value));
}

export class ViewState {
  status: ConnectionStatus = "disconnected";
  /** Positions of the most recently *rendered* frame (flat x,y,z triples). */
  positions: number[] | null = null;
  /** Version of the most recently rendered frame; monotone non-decreasing. */
  version = 0;
  selectedVertex: number | null = null;
  dragVector: [number, number, number] = [0, 0, 0];
  sliderH = 0.01;
  sliderMu = 0;
  sketch: Point2[] = [];
  lastControlReply: ControlResultMessage | null = null;
  lastError: ErrorMessage | null = null;

  /** Newest unrendered broadcast, if any (the one-deep frame-drop buffer). */
  private pendingFrame: StateMessage | null = null;
  private droppedFrames = 0;

  /** Route one server message into the view model. */
  ingest(msg: ServerMessage): void {
    switch (msg.type) {
      case "state":
        if (msg.version <= this.version) return; // stale broadcast: discard
        if (this.pendingFrame !== null && msg.version > this.pendingFrame.version) {
          this.droppedFrames += 1;
        }
        if (this.pendingFrame === null || msg.version > this.pendingFrame.version) {
          this.pendingFrame = msg;
        }
        break;
      case "control_result":
        this.lastControlReply = msg;
        break;
      case "error":
        // Surface the error but keep the sketch so the user can edit and
        // resubmit it.
        this.lastError = msg;
        break;
      case "ok":
        break;
    }
  }

  /**
   * Called once per display refresh: adopt the newest pending frame, if any.
   * Returns true when there is something new to draw.
   */
  renderTick(): boolean {
    if (this.pendingFrame === null) return false;
    this.positions = this.pendingFrame.positions;
    this.version = this.pendingFrame.version;
    this.pendingFrame = null;
    return true;
  }

  /** Frames superseded before they were ever drawn. */
  get framesDropped(): number {
    return this.droppedFrames;
  }

  /** At most one frame is ever buffered, regardless of broadcast rate. */
  get queuedFrames(): number {
    return this.pendingFrame === null ? 0 : 1;
  }

  setSliderH(value: number): number {
    this.sliderH = clamp(value, H_RANGE);
    return this.sliderH;
  }

  setSliderMu(value: number): number {
    this.sliderMu = clamp(value, MU_RANGE);
    return this.sliderMu;
  }

  clearSketch(): void {
    this.sketch = [];
  }
}
