// WebSocket shell around the pure reducer. The socket is injected so the
// same class runs on a browser WebSocket and on the `ws` client in tests.

import type { Command } from "./types.js";
import { parseMessage } from "./types.js";
import type { ConsoleState } from "./reducer.js";
import { initialState, reduce } from "./reducer.js";

const SOCKET_OPEN = 1;

export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  addEventListener(
    type: "open" | "close" | "message",
    listener: (ev: { data?: unknown }) => void,
  ): void;
}

export class NotConnectedError extends Error {
  constructor() {
    super("not connected to a gateway");
    this.name = "NotConnectedError";
  }
}

export const commands = {
  startCondition: (condition: string): Command => ({ cmd: "start_condition", condition }),
  stop: (): Command => ({ cmd: "stop" }),
  markOn: (code: number): Command => {
    if (!Number.isInteger(code) || code < 1) {
      throw new RangeError(`mark code must be a positive integer, got ${code}`);
    }
    return { cmd: "mark_on", code };
  },
  markOff: (): Command => ({ cmd: "mark_off" }),
  status: (): Command => ({ cmd: "status" }),
};

export class ConsoleApp {
  state: ConsoleState = initialState();
  private sock: SocketLike | null = null;

  constructor(
    private makeSocket: (url: string) => SocketLike,
    private onChange: (state: ConsoleState) => void = () => {},
  ) {}

  connect(url: string): void {
    const sock = this.makeSocket(url);
    this.sock = sock;
    sock.addEventListener("open", () => this.dispatch({ type: "connected" }));
    sock.addEventListener("close", () => this.dispatch({ type: "disconnected" }));
    sock.addEventListener("message", (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg !== null) this.dispatch(msg);
    });
    // An injected socket may already be open; "open" will not fire again.
    if (sock.readyState === SOCKET_OPEN) this.dispatch({ type: "connected" });
  }

  sendCommand(cmd: Command): void {
    if (this.sock === null || this.sock.readyState !== SOCKET_OPEN) {
      throw new NotConnectedError();
    }
    this.sock.send(JSON.stringify(cmd));
  }

  close(): void {
    this.sock?.close();
  }

  private dispatch(ev: Parameters<typeof reduce>[1]): void {
    this.state = reduce(this.state, ev);
    this.onChange(this.state);
  }
}
