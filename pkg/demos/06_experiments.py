"""A reduced version of the four experiment families with CSV reports.

The full-size runs (100 performance trials, 10 trials per adaptability and
manipulability case) live in the acceptance suite; this script keeps the
counts small so it runs in about a minute.
"""

import numpy as np

from pourlearn import ExpertPolicy, NoiseConfig, TrainConfig, default_catalog
from pourlearn.harness import (
    AdaptabilityCase,
    build_stack,
    generate_demos,
    run_experiment_adaptability,
    run_experiment_failure_prediction,
    run_experiment_manipulability,
    run_experiment_performance,
)

catalog = default_catalog()
rng = np.random.default_rng(42)
pool = generate_demos(catalog, catalog.ids("seen"), 2, ExpertPolicy(), NoiseConfig(), rng)
stack, _ = build_stack(pool, TrainConfig(epochs=40), np.random.default_rng(7))
noise = NoiseConfig()

perf = run_experiment_performance(
    stack, catalog, [17, 18, 19, 20, 21, 22, 23, 24], 4, noise, np.random.default_rng(1)
)
d = perf.to_dict()
print(f"performance: overall {d['overall']['rate']:.2f} "
      f"(seen {d['seen']['rate']:.2f}, unseen {d['unseen']['rate']:.2f})")
perf.save_csv("report_performance.csv")

adapt = run_experiment_adaptability(
    stack, catalog,
    [AdaptabilityCase(scene_id=18, situation="A", k=2),
     AdaptabilityCase(scene_id=17, situation="A", k=5),
     AdaptabilityCase(scene_id=19, situation="B", k1=3, k2=5)],
    5, noise, np.random.default_rng(2),
)
for row in adapt.rows:
    print(f"adaptability {row.detail}: {row.successes}/{row.trials}")
adapt.save_csv("report_adaptability.csv")

manip = run_experiment_manipulability(
    stack, catalog, [(28, 90.0), (12, 70.0)], 5, noise, np.random.default_rng(3)
)
for row in manip.rows:
    print(f"manipulability target {row.detail['target_ml']:.0f} ml (goal {row.detail['s_goal']}): "
          f"{row.successes}/{row.trials} within one state {row.detail['within_one_state']}")
manip.save_csv("report_manipulability.csv")

fp = run_experiment_failure_prediction(
    stack, catalog, clean_scene_ids=[16, 17, 18, 20], corrupted_scene_ids=[24],
    fill_bias=5.0 / stack.model.n_states, noise=noise, rng=np.random.default_rng(4),
)
print(f"failure prediction accuracy: {fp.accuracy:.2f}")
print("reports written: report_performance.csv, report_adaptability.csv, report_manipulability.csv")
