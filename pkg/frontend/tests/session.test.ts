import { describe, expect, it } from "vitest";

import { FrameMessage, MetaMessage, parseServerMessage } from "../src/protocol.js";
import { SessionStore } from "../src/session.js";

function meta(overrides: Partial<MetaMessage> = {}): MetaMessage {
  return {
    v: 1, type: "meta", scene_id: 2, capacity_ml: 120, n_states: 8,
    s_goal: 8, lambda: 0.2, speed_factor: 1, ...overrides,
  };
}

function frame(t: number, overrides: Record<string, unknown> = {}): FrameMessage {
  return {
    v: 1, type: "frame", t,
    sim: { source_ml: 100, target_ml: t * 0.5, spilled_ml: 0, tilt_deg: 20, flow: 5 },
    ctrl: { phase: 1, state: 1, probs_phase: [0, 1, 0, 0], probs_state: [0, 1, 0, 0, 0, 0, 0, 0, 0, 0], omega: 1, theta: 20 },
    graph_delta: null,
    ...overrides,
  } as FrameMessage;
}

describe("protocol parsing", () => {
  it("parses valid messages and rejects junk", () => {
    expect(parseServerMessage(JSON.stringify(meta()))?.type).toBe("meta");
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "frame" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ v: 1, type: "mystery" }))).toBeNull();
  });
});

describe("session store", () => {
  it("keeps frames in order and never reorders", () => {
    const s = new SessionStore();
    s.setStatus("connected");
    s.apply(meta());
    s.apply(frame(1));
    s.apply(frame(2));
    s.apply(frame(2)); // duplicate t ignored
    expect(s.view.history.map((f) => f.t)).toEqual([1, 2]);
    expect(s.view.latest?.t).toBe(2);
  });

  it("collects graph nodes in received order", () => {
    const s = new SessionStore();
    s.apply(meta());
    s.apply(frame(1, { graph_delta: { t: 1, phase: 0, state: 0, phase_prob: 1, state_prob: 1 } }));
    s.apply(frame(5, { graph_delta: { t: 5, phase: 1, state: 2, phase_prob: 0.9, state_prob: 0.8 } }));
    expect(s.view.graph.map((n) => n.state)).toEqual([0, 2]);
  });

  it("goes read-only on protocol version mismatch", () => {
    const s = new SessionStore();
    s.setStatus("connected");
    s.apply({ ...meta(), v: 99 });
    expect(s.view.readOnly).toBe(true);
    expect(s.view.banner).toContain("version");
    expect(s.canSend("inject")).toBe(false);
  });

  it("blocks commands while paused except resume and reset", () => {
    const s = new SessionStore();
    s.setStatus("connected");
    s.apply(meta());
    s.noteSent({ v: 1, type: "pause" });
    expect(s.view.paused).toBe(true);
    expect(s.canSend("inject")).toBe(false);
    expect(s.canSend("set_goal")).toBe(false);
    expect(s.canSend("resume")).toBe(true);
    expect(s.canSend("reset")).toBe(true);
  });

  it("clears pending inject once a frame reflects the volume", () => {
    const s = new SessionStore();
    s.setStatus("connected");
    s.apply(meta());
    s.apply(frame(1, { sim: { source_ml: 100, target_ml: 10, spilled_ml: 0, tilt_deg: 20, flow: 5 } }));
    s.noteSent({ v: 1, type: "inject", kind: "add_liquid", volume_ml: 20 });
    expect(s.view.pending).toHaveLength(1);
    s.apply(frame(2, { sim: { source_ml: 100, target_ml: 12, spilled_ml: 0, tilt_deg: 20, flow: 5 } }));
    expect(s.view.pending).toHaveLength(1); // not reflected yet
    s.apply(frame(3, { sim: { source_ml: 100, target_ml: 31, spilled_ml: 0, tilt_deg: 20, flow: 5 } }));
    expect(s.view.pending).toHaveLength(0);
  });

  it("clears pending set_goal on the echoed meta", () => {
    const s = new SessionStore();
    s.setStatus("connected");
    s.apply(meta());
    s.noteSent({ v: 1, type: "set_goal", s_goal: 3 });
    expect(s.view.pending).toHaveLength(1);
    s.apply(meta({ s_goal: 3 }));
    expect(s.view.pending).toHaveLength(0);
  });

  it("replaying the same history reproduces the same view", () => {
    const messages = [
      meta(),
      frame(1),
      frame(2, { graph_delta: { t: 2, phase: 1, state: 1, phase_prob: 0.9, state_prob: 0.9 } }),
      { v: 1, type: "done", outcome: { success: true, final_fill_fraction: 0.93, spilled: false, steps: 400 } } as const,
    ];
    const a = new SessionStore();
    const b = new SessionStore();
    for (const m of messages) a.apply(m as never);
    for (const m of messages) b.apply(m as never);
    expect(JSON.stringify(a.view)).toBe(JSON.stringify(b.view));
  });

  it("a frame with smaller t marks a reset and clears run state", () => {
    const s = new SessionStore();
    s.apply(meta());
    s.apply(frame(50, { graph_delta: { t: 50, phase: 1, state: 2, phase_prob: 1, state_prob: 1 } }));
    s.apply({ v: 1, type: "done", outcome: { success: true, final_fill_fraction: 0.9, spilled: false, steps: 50 } });
    s.apply(frame(1));
    expect(s.view.graph).toHaveLength(0);
    expect(s.view.outcome).toBeNull();
    expect(s.view.history.map((f) => f.t)).toEqual([1]);
  });
});
