// Page bootstrap: paint the session view into the DOM and wire the buttons.

import { connectLive } from "./client.js";
import { gaugeView, graphLane, probabilityBars, statusLine } from "./render.js";
import { SessionStore } from "./session.js";

const params = new URLSearchParams(window.location.search);
const endpoint =
  params.get("ws") ?? window.location.origin.replace(/^http/, "ws") + "/ws";

const store = new SessionStore();
const conn = connectLive(endpoint, store);

const el = (id: string) => document.getElementById(id)!;

function paintBars(container: HTMLElement, probs: number[], chosen: number) {
  const bars = probabilityBars(probs, chosen);
  container.innerHTML = bars
    .map(
      (b) =>
        `<div class="bar${b.chosen ? " chosen" : ""}" style="height:${Math.round(b.probability * 60) + 2}px" title="${b.index}: ${b.probability.toFixed(2)}"></div>`
    )
    .join("");
}

store.onChange((view) => {
  const status = statusLine(view);
  const statusEl = el("status");
  statusEl.textContent = status.text;
  statusEl.className = status.tone;

  const gauge = gaugeView(view);
  el("gauge-fill").style.height = `${Math.round(gauge.fraction * 100)}%`;
  el("gauge-label").textContent = gauge.label + (gauge.spilled ? "  (spilled!)" : "");

  if (view.latest) {
    el("tilt").textContent = `${view.latest.sim.tilt_deg.toFixed(1)} deg, flow ${view.latest.sim.flow.toFixed(1)} ml/s`;
    paintBars(el("phase-bars"), view.latest.ctrl.probs_phase, view.latest.ctrl.phase);
    paintBars(el("state-bars"), view.latest.ctrl.probs_state, view.latest.ctrl.state);
  }

  const lane = graphLane(view.graph, view.meta);
  el("graph").innerHTML = lane
    .map((n, i) => {
      const edge = i > 0 ? `<span class="edge${n.skipFromPrevious ? " skip" : ""}"></span>` : "";
      const cls = ["node", n.lowConfidence ? "lowconf" : "", n.isGoal ? "goal" : ""].join(" ");
      return `${edge}<span class="${cls}" title="t=${n.t} p=${n.stateProb.toFixed(2)}">c${n.phase}·s${n.state}</span>`;
    })
    .join("");

  (el("inject") as HTMLButtonElement).disabled = !store.canSend("inject");
  (el("goal") as HTMLButtonElement).disabled = !store.canSend("set_goal");
  (el("pause") as HTMLButtonElement).disabled = !store.canSend("pause");
  (el("resume") as HTMLButtonElement).disabled = !store.canSend("resume");

  const errs = el("errors");
  errs.textContent = view.errors.slice(-3).join(" | ");
});

el("inject").addEventListener("click", () => {
  const volume = Number((el("inject-volume") as HTMLInputElement).value) || 20;
  conn.send({ type: "inject", kind: "add_liquid", volume_ml: volume });
});
el("goal").addEventListener("click", () => {
  const goal = Number((el("goal-state") as HTMLInputElement).value) || 3;
  conn.send({ type: "set_goal", s_goal: goal });
});
el("pause").addEventListener("click", () => conn.send({ type: "pause" }));
el("resume").addEventListener("click", () => conn.send({ type: "resume" }));
el("reset").addEventListener("click", () => conn.send({ type: "reset" }));
