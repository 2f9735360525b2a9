"""Collect scripted demonstrations and train the three hierarchies.

Uses a reduced pool so it finishes in well under a minute; the full-size
pool (20 scenes x 4 trials) is what the tests and the CLI use.
"""

import numpy as np

from pourlearn import ExpertPolicy, NoiseConfig, TrainConfig, default_catalog
from pourlearn.harness import build_stack, generate_demos
from pourlearn.perception import action_mse, classification_accuracy

catalog = default_catalog()
rng = np.random.default_rng(42)
scenes = catalog.ids("seen")[:8]
pool = generate_demos(catalog, scenes, 3, ExpertPolicy(), NoiseConfig(), rng)
print(f"collected {len(pool)} demonstrations, {pool.frame_count()} frames")

stack, heldout = build_stack(pool, TrainConfig(epochs=40), np.random.default_rng(7))
o1, o2, o3 = heldout.datasets()
print(f"held-out phase accuracy: {classification_accuracy(stack.model, o1, 'phase'):.4f}")
print(f"held-out state accuracy: {classification_accuracy(stack.model, o2, 'state'):.4f}")
print(f"held-out action MSE:     {action_mse(stack.model, o3):.5f} (normalized)")

print("\nsafety envelope (per-state angular velocity bounds):")
for s, (lo, hi) in enumerate(stack.envelope.omega_bounds, start=1):
    print(f"  state {s}: [{lo:7.2f}, {hi:7.2f}] deg/s")
print(f"approach speed {stack.omega_approach:.2f} deg/s, leave speed {stack.omega_leave:.2f} deg/s")

stack.model.save("model_demo.json")
print("checkpoint written to model_demo.json")
