"""Step the pouring simulator open-loop and watch the physics.

A fixed tilt script: tilt forward, hold, then return. Prints the fill
trajectory and writes the full trace as CSV.
"""

from pourlearn import ScenarioConfig, ground_truth_labels, init_scenario, step
from pourlearn.sim import export_trace_csv

cfg = ScenarioConfig()
print(f"capacity {cfg.target_capacity_ml} ml, N={cfg.n_states}, "
      f"state resolution {cfg.state_resolution_ml:.1f} ml")

commands = [18.0] * 45 + [0.5] * 225 + [-14.0] * 90
state = init_scenario(cfg)
trace = [state]
flows = []
for om in commands:
    flows.append(state.flow_ml_per_s)
    state = step(state, cfg, om)
    trace.append(state)
    if state.t % 40 == 0:
        phase, label = ground_truth_labels(state, cfg, flows)
        print(f"t={state.t:4d}  tilt={state.tilt_deg:5.1f} deg  flow={state.flow_ml_per_s:5.2f} ml/s  "
              f"target={state.target_ml:6.2f} ml  phase={phase} state={label}")

final = trace[-1]
balance = final.source_ml + final.target_ml + final.spilled_ml
print(f"\nfinal: target {final.target_ml:.2f} ml, spilled {final.spilled_ml:.2f} ml")
print(f"volume balance: {balance:.9f} ml (source initially {cfg.source_initial_ml} ml)")

export_trace_csv(trace, cfg, "open_loop_trace.csv")
print("trace written to open_loop_trace.csv")
