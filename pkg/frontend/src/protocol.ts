/**
 * Wire protocol for the koopdyn session service: each frame is a 4-byte
 * big-endian length prefix followed by one UTF-8 JSON object.
 *
 * This module is transport-agnostic (plain Uint8Array in, messages out) so
 * the same codec serves a Node TCP socket, a WebSocket bridge, or a test
 * harness feeding arbitrary chunk boundaries.
 */

export interface LoadMessage {
  type: "load";
  model?: string;
  mesh?: string;
  display_stride?: number;
}

export interface ForceMessage {
  type: "force";
  vertex: number;
  vec: [number, number, number];
}

export interface SetHMessage {
  type: "set_h";
  h: number;
}

export interface SetDampingMessage {
  type: "set_damping";
  mu: number;
}

export interface StepMessage {
  type: "step";
  n: number;
}

export interface ControlMessage {
  type: "control";
  targets: Array<[number, [number, number, number]]>;
  horizon: number;
}

export interface ResetMessage {
  type: "reset";
}

export type ClientMessage =
  | LoadMessage
  | ForceMessage
  | SetHMessage
  | SetDampingMessage
  | StepMessage
  | ControlMessage
  | ResetMessage;

export interface StateMessage {
  type: "state";
  version: number;
  positions: number[];
}

export interface OkMessage {
  type: "ok";
}

export interface ControlKeyframe {
  step: number;
  positions: number[];
}

export interface ControlResultMessage {
  type: "control_result";
  pressures: number[];
  keyframes: ControlKeyframe[];
}

export interface ErrorMessage {
  type: "error";
  code: "usage" | "data" | "numerical";
  detail: string;
}

export type ServerMessage =
  | StateMessage
  | OkMessage
  | ControlResultMessage
  | ErrorMessage;

const HEADER_BYTES = 4;

/** Encode one message as a length-prefixed frame. */
export function encodeFrame(msg: ClientMessage | ServerMessage): Uint8Array {
  const payload = new TextEncoder().encode(JSON.stringify(msg));
  const frame = new Uint8Array(HEADER_BYTES + payload.length);
  new DataView(frame.buffer).setUint32(0, payload.length, false);
  frame.set(payload, HEADER_BYTES);
  return frame;
}

/**
 * Incremental frame decoder.  Feed it byte chunks as they arrive (in any
 * split: one byte at a time, several frames at once); it returns every
 * complete message and buffers the remainder.  Buffered bytes never exceed
 * one partial frame plus whatever arrived in the current chunk.
 */
export class FrameDecoder {
  private buffer = new Uint8Array(0);

  push(chunk: Uint8Array): ServerMessage[] {
    const joined = new Uint8Array(this.buffer.length + chunk.length);
    joined.set(this.buffer, 0);
    joined.set(chunk, this.buffer.length);

    const out: ServerMessage[] = [];
    let offset = 0;
    while (joined.length - offset >= HEADER_BYTES) {
      const view = new DataView(joined.buffer, joined.byteOffset + offset);
      const length = view.getUint32(0, false);
      if (joined.length - offset - HEADER_BYTES < length) break;
      const payload = joined.subarray(
        offset + HEADER_BYTES,
        offset + HEADER_BYTES + length,
      );
      out.push(JSON.parse(new TextDecoder().decode(payload)) as ServerMessage);
      offset += HEADER_BYTES + length;
    }
    this.buffer = joined.slice(offset);
    return out;
  }

  /** Bytes held back waiting for the rest of a frame. */
  get pendingBytes(): number {
    return this.buffer.length;
  }
}
