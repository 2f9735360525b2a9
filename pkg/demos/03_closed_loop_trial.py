"""Run the learned controller end to end and print its logical graph.

Three variants of one scene: the standard pour, a pre-filled container
(Situation A), and a mid-pour injection (Situation B).
"""

import numpy as np
from dataclasses import replace

from pourlearn import ExpertPolicy, NoiseConfig, PourEvent, TrainConfig, default_catalog
from pourlearn.controller import run_trial
from pourlearn.graph import build_graph
from pourlearn.harness import build_stack, generate_demos

catalog = default_catalog()
rng = np.random.default_rng(42)
pool = generate_demos(catalog, catalog.ids("seen")[:8], 3, ExpertPolicy(), NoiseConfig(), rng)
stack, _ = build_stack(pool, TrainConfig(epochs=40), np.random.default_rng(7))

scene = catalog.get(2).config
ctrl = stack.controller_config(lam=0.2)


def show(title, scenario, events=()):
    outcome, trace = run_trial(
        scenario, list(events), ctrl, stack.envelope, stack.model,
        NoiseConfig(), np.random.default_rng(5),
    )
    graph = build_graph(trace.records, meta={"title": title})
    chain = " -> ".join(f"(c{c},s{s})" for c, s in graph.node_pairs())
    print(f"{title}:")
    print(f"  success={outcome.success} fill={outcome.final_fill_fraction:.3f} "
          f"spilled={outcome.spilled} steps={outcome.steps}")
    print(f"  {chain}\n")


show("standard pour", scene)

k = scene.state_resolution_ml
show("situation A (starts at state 3)", replace(scene, initial_target_ml=3.65 * k))
show("situation B (inject two states mid-pour)", scene,
     [PourEvent("add_liquid", 2 * k, at_step=200)])
