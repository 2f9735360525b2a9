// Wire protocol for the live pouring session. Every message carries a
// version field; the console goes read-only on a mismatch.

export const PROTOCOL_VERSION = 1;

export interface SimSnapshot {
  source_ml: number;
  target_ml: number;
  spilled_ml: number;
  tilt_deg: number;
  flow: number;
}

export interface CtrlSnapshot {
  phase: number;
  state: number;
  probs_phase: number[];
  probs_state: number[];
  omega: number;
  theta: number;
}

export interface GraphDelta {
  t: number;
  phase: number;
  state: number;
  phase_prob: number;
  state_prob: number;
}

export interface MetaMessage {
  v: number;
  type: "meta";
  scene_id: number;
  capacity_ml: number;
  n_states: number;
  s_goal: number;
  lambda: number;
  speed_factor: number;
}

export interface FrameMessage {
  v: number;
  type: "frame";
  t: number;
  sim: SimSnapshot;
  ctrl: CtrlSnapshot;
  graph_delta: GraphDelta | null;
}

export interface DoneMessage {
  v: number;
  type: "done";
  outcome: {
    success: boolean;
    final_fill_fraction: number;
    spilled: boolean;
    steps: number;
  };
}

export interface ErrorMessage {
  v: number;
  type: "error";
  detail: string;
}

export type ServerMessage = MetaMessage | FrameMessage | DoneMessage | ErrorMessage;

export type Command =
  | { v: number; type: "inject"; kind: "add_liquid" | "add_ice"; volume_ml: number }
  | { v: number; type: "set_goal"; s_goal: number }
  | { v: number; type: "pause" }
  | { v: number; type: "resume" }
  | { v: number; type: "reset"; scene_id?: number };

// Omit distributed over the union; plain Omit would collapse it to the
// common fields only.
type EachWithout<T, K extends keyof never> = T extends unknown ? Omit<T, K> : never;
export type CommandBody = EachWithout<Command, "v">;

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  if (typeof msg.type !== "string" || typeof msg.v !== "number") return null;
  switch (msg.type) {
    case "meta":
      return typeof msg.capacity_ml === "number" && typeof msg.n_states === "number"
        ? (msg as unknown as MetaMessage)
        : null;
    case "frame":
      return typeof msg.t === "number" && typeof msg.sim === "object" && typeof msg.ctrl === "object"
        ? (msg as unknown as FrameMessage)
        : null;
    case "done":
      return typeof msg.outcome === "object" ? (msg as unknown as DoneMessage) : null;
    case "error":
      return typeof msg.detail === "string" ? (msg as unknown as ErrorMessage) : null;
    default:
      return null; // unknown types are tolerated upstream by ignoring them
  }
}
