// Session state: a pure reducer over incoming messages. Rendering keys off
// this store; replaying the same message history reproduces the same view.

import {
  Command,
  FrameMessage,
  GraphDelta,
  MetaMessage,
  PROTOCOL_VERSION,
  ServerMessage,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface PendingCommand {
  kind: Command["type"];
  sentAt: number; // frame t when sent, -1 before the first frame
  volume_ml?: number;
  s_goal?: number;
  baselineTarget?: number;
}

export interface SessionView {
  status: ConnectionStatus;
  readOnly: boolean;
  banner: string | null;
  meta: MetaMessage | null;
  latest: FrameMessage | null;
  history: FrameMessage[];
  graph: GraphDelta[];
  outcome: DoneOutcome | null;
  errors: string[];
  pending: PendingCommand[];
  paused: boolean;
}

export interface DoneOutcome {
  success: boolean;
  final_fill_fraction: number;
  spilled: boolean;
  steps: number;
}

export const HISTORY_LIMIT = 600;

export function initialView(): SessionView {
  return {
    status: "connecting",
    readOnly: false,
    banner: null,
    meta: null,
    latest: null,
    history: [],
    graph: [],
    outcome: null,
    errors: [],
    pending: [],
    paused: false,
  };
}

export class SessionStore {
  view: SessionView = initialView();
  private listeners: Array<(v: SessionView) => void> = [];

  onChange(fn: (v: SessionView) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.view);
  }

  setStatus(status: ConnectionStatus): void {
    this.view.status = status;
    if (status !== "connected") this.view.banner = status === "disconnected" ? "disconnected — reconnecting" : null;
    this.emit();
  }

  /** True when a command of this kind may be sent right now. */
  canSend(kind: Command["type"]): boolean {
    if (this.view.status !== "connected" || this.view.readOnly) return false;
    if (this.view.paused) return kind === "resume" || kind === "reset";
    return true;
  }

  noteSent(cmd: Command): void {
    const entry: PendingCommand = { kind: cmd.type, sentAt: this.view.latest?.t ?? -1 };
    if (cmd.type === "inject") {
      entry.volume_ml = cmd.volume_ml;
      entry.baselineTarget = this.view.latest?.sim.target_ml ?? 0;
    }
    if (cmd.type === "set_goal") entry.s_goal = cmd.s_goal;
    if (cmd.type === "pause") this.view.paused = true;
    if (cmd.type === "resume") this.view.paused = false;
    this.view.pending.push(entry);
    this.emit();
  }

  apply(msg: ServerMessage): void {
    if (msg.v !== PROTOCOL_VERSION) {
      this.view.readOnly = true;
      this.view.banner = `protocol version ${msg.v} does not match ${PROTOCOL_VERSION}: read-only`;
      this.emit();
      return;
    }
    switch (msg.type) {
      case "meta": {
        this.view.meta = msg;
        // The server re-announces meta after set_goal and reset.
        this.view.pending = this.view.pending.filter((p) => {
          if (p.kind === "set_goal") return p.s_goal !== msg.s_goal;
          if (p.kind === "reset") return false;
          return true;
        });
        break;
      }
      case "frame": {
        if (this.view.latest && msg.t < this.view.latest.t) {
          // a reset restarted time: clear run-scoped state
          this.view.history = [];
          this.view.graph = [];
          this.view.outcome = null;
        }
        if (this.view.latest && msg.t === this.view.latest.t) break; // never reorder
        this.view.latest = msg;
        this.view.history.push(msg);
        if (this.view.history.length > HISTORY_LIMIT) this.view.history.shift();
        if (msg.graph_delta) this.view.graph.push(msg.graph_delta);
        this.view.pending = this.view.pending.filter((p) => !reflected(p, msg));
        break;
      }
      case "done":
        this.view.outcome = msg.outcome;
        break;
      case "error":
        this.view.errors.push(msg.detail);
        this.view.pending = [];
        break;
    }
    this.emit();
  }
}

function reflected(p: PendingCommand, frame: FrameMessage): boolean {
  switch (p.kind) {
    case "inject":
      return (
        p.baselineTarget !== undefined &&
        p.volume_ml !== undefined &&
        frame.sim.target_ml >= p.baselineTarget + 0.5 * p.volume_ml
      );
    case "pause":
    case "resume":
      return true; // applied at the next step boundary; optimistic
    default:
      return false; // set_goal and reset clear on the echoed meta
  }
}
