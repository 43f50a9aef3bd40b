/**
 * Node TCP client for the session service, used by scripted replays and the
 * integration suite.  A browser build would talk through a WebSocket-to-TCP
 * bridge with the same `FrameDecoder`; nothing else in this package touches
 * Node APIs.
 */

import { Socket, createConnection } from "node:net";

import {
  type ClientMessage,
  type ServerMessage,
  FrameDecoder,
  encodeFrame,
} from "./protocol.js";

export class SessionClient {
  private readonly decoder = new FrameDecoder();
  private readonly inbox: ServerMessage[] = [];
  private waiter: ((msg: ServerMessage) => void) | null = null;
  private failure: Error | null = null;

  private constructor(private readonly socket: Socket) {
    socket.on("data", (chunk: Buffer) => {
      for (const msg of this.decoder.push(chunk)) {
        if (this.waiter !== null) {
          const resolve = this.waiter;
          this.waiter = null;
          resolve(msg);
        } else {
          this.inbox.push(msg);
        }
      }
    });
    socket.on("error", (err: Error) => {
      this.failure = err;
    });
  }

  static connect(host: string, port: number): Promise<SessionClient> {
    return new Promise((resolve, reject) => {
      const socket = createConnection({ host, port }, () =>
        resolve(new SessionClient(socket)),
      );
      socket.once("error", reject);
    });
  }

  send(msg: ClientMessage): void {
    if (this.failure) throw this.failure;
    this.socket.write(encodeFrame(msg));
  }

  /** Next server message, in arrival order. */
  receive(timeoutMs = 30_000): Promise<ServerMessage> {
    if (this.failure) return Promise.reject(this.failure);
    const queued = this.inbox.shift();
    if (queued !== undefined) return Promise.resolve(queued);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.waiter = null;
        reject(new Error(`no server message within ${timeoutMs} ms`));
      }, timeoutMs);
      this.waiter = (msg) => {
        clearTimeout(timer);
        resolve(msg);
      };
    });
  }

  /** Send one message and await its single reply. */
  async request(msg: ClientMessage): Promise<ServerMessage> {
    this.send(msg);
    return this.receive();
  }

  close(): void {
    this.socket.destroy();
  }
}
