// View-model builders: pure functions from session state to plain data the
// DOM layer paints. Kept free of document access so they test in node.

import { GraphDelta, MetaMessage } from "./protocol.js";
import { SessionView } from "./session.js";

export const LOW_CONFIDENCE_FLOOR = 0.5;
export const PHASE_NAMES = ["approaching", "pouring", "slowing down", "leaving"];

export interface GaugeView {
  fraction: number; // 0..1 of capacity
  label: string;
  spilled: boolean;
}

export function gaugeView(view: SessionView): GaugeView {
  const frame = view.latest;
  const capacity = view.meta?.capacity_ml ?? 0;
  if (!frame || capacity <= 0) return { fraction: 0, label: "–", spilled: false };
  const fraction = Math.max(0, Math.min(1, frame.sim.target_ml / capacity));
  return {
    fraction,
    label: `${frame.sim.target_ml.toFixed(1)} / ${capacity.toFixed(0)} ml`,
    spilled: frame.sim.spilled_ml > 0,
  };
}

export interface BarView {
  index: number;
  probability: number;
  chosen: boolean;
}

export function probabilityBars(probs: number[], chosen: number): BarView[] {
  return probs.map((p, index) => ({ index, probability: p, chosen: index === chosen }));
}

export interface GraphNodeView {
  t: number;
  phase: number;
  state: number;
  stateProb: number;
  lowConfidence: boolean;
  skipFromPrevious: boolean; // flagged edge: states jumped by more than one
  isGoal: boolean;
}

export function graphLane(nodes: GraphDelta[], meta: MetaMessage | null): GraphNodeView[] {
  const goal = meta?.s_goal ?? -1;
  return nodes.map((node, i) => ({
    t: node.t,
    phase: node.phase,
    state: node.state,
    stateProb: node.state_prob,
    lowConfidence: node.state_prob < LOW_CONFIDENCE_FLOOR,
    skipFromPrevious: i > 0 && node.state - nodes[i - 1].state > 1,
    isGoal: node.state === goal,
  }));
}

export interface StatusLineView {
  text: string;
  tone: "ok" | "warn" | "bad";
}

export function statusLine(view: SessionView): StatusLineView {
  if (view.banner) return { text: view.banner, tone: "bad" };
  if (view.status !== "connected") return { text: view.status, tone: "warn" };
  if (view.outcome) {
    const o = view.outcome;
    return {
      text: `done: ${o.success ? "success" : "failure"} (fill ${(o.final_fill_fraction * 100).toFixed(1)}%${o.spilled ? ", spilled" : ""})`,
      tone: o.success ? "ok" : "bad",
    };
  }
  if (view.paused) return { text: "paused", tone: "warn" };
  const frame = view.latest;
  if (!frame) return { text: "waiting for frames", tone: "warn" };
  const pending = view.pending.length ? ` | pending: ${view.pending.map((p) => p.kind).join(",")}` : "";
  return {
    text: `t=${frame.t} ${PHASE_NAMES[frame.ctrl.phase] ?? "?"} s=${frame.ctrl.state}` + pending,
    tone: "ok",
  };
}
