"""Goal manipulation, failure prediction, and failure tracing.

Shows the expected-graph surgery for a reduced pour target, the offline
pre-deployment check catching a corrupted scene, and the skip report with
the probabilities the skipped states ever received.
"""

from dataclasses import replace

import numpy as np

from pourlearn import ExpertPolicy, NoiseConfig, TrainConfig, default_catalog
from pourlearn.controller import StepRecord
from pourlearn.graph import (
    build_graph,
    canonical_graph,
    manipulate_goal,
    predict_failure,
    trace_failure,
)
from pourlearn.harness import (
    build_stack,
    determined_sequence,
    generate_demos,
    run_expert_trial,
    s_goal_for_target,
)

catalog = default_catalog()
rng = np.random.default_rng(42)
pool = generate_demos(catalog, catalog.ids("seen")[:8], 3, ExpertPolicy(), NoiseConfig(), rng)
stack, _ = build_stack(pool, TrainConfig(epochs=40), np.random.default_rng(7))
n = stack.model.n_states

# --- goal manipulation: pour 90 ml into a 150 ml container -------------------
scene28 = catalog.get(28).config
goal = s_goal_for_target(90.0, scene28)
expected = manipulate_goal(n, goal)
print(f"target 90 ml of {scene28.target_capacity_ml:.0f} ml -> goal state {goal}")
print(f"expected chain: {expected.states()} (skipping {list(expected.skipped_states)})\n")

# --- failure prediction: clean vs corrupted observations ---------------------
scene = catalog.get(3).config
corrupted = replace(NoiseConfig(), fill_bias=5.0 / n)
for title, record_noise in [("clean scene", NoiseConfig()), ("corrupted scene", corrupted)]:
    _, frames, _ = run_expert_trial(
        scene, ExpertPolicy(), NoiseConfig(), np.random.default_rng(3),
        record_noise=record_noise,
    )
    candidate = determined_sequence(stack.model, frames, lam=0.2)
    verdict = predict_failure(candidate, canonical_graph(n))
    print(f"{title}: predicted_fail={verdict.predicted_fail}")
    for criterion, t, detail in verdict.violations[:3]:
        print(f"  criterion {criterion} at t={t}: {detail}")
print()

# --- failure tracing: which states were skipped, how sure was the model ------
_, frames, _ = run_expert_trial(
    scene, ExpertPolicy(), NoiseConfig(), np.random.default_rng(3), record_noise=corrupted
)
candidate = determined_sequence(stack.model, frames, lam=0.2)
records = [
    StepRecord(
        t=i,
        probs_phase=tuple(stack.model.predict_phase(fr.obs)),
        probs_state=tuple(stack.model.predict_state(fr.obs)),
        phase=c, state=s, omega_raw=0.0, omega_clamped=0.0, theta=fr.theta,
    )
    for i, (fr, (c, s)) in enumerate(zip(frames, candidate))
]
report = trace_failure(build_graph(records), canonical_graph(n))
print("failure tracing on the corrupted recording:")
for line in report.summary_lines()[:8]:
    print(" ", line)
