"""Build and cache the artifacts the live console tests serve against.

Trains a reduced stack (enough for a competent controller) and writes
model.json / deploy.json plus a serve config into frontend/.artifacts.
Skips work when the artifacts already exist.
"""

import json
import sys
from pathlib import Path

import numpy as np

from pourlearn.catalog import default_catalog
from pourlearn.expert import ExpertPolicy
from pourlearn.harness import build_stack, generate_demos
from pourlearn.perception import NoiseConfig, TrainConfig

ART = Path(__file__).resolve().parent.parent / ".artifacts"


def main() -> int:
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8931
    ART.mkdir(exist_ok=True)
    config_path = ART / "serve_config.json"
    if not (ART / "model.json").exists() or not (ART / "deploy.json").exists():
        catalog = default_catalog()
        rng = np.random.default_rng(42)
        pool = generate_demos(
            catalog, catalog.ids("seen")[:10], 3, ExpertPolicy(), NoiseConfig(), rng
        )
        stack, _ = build_stack(pool, TrainConfig(epochs=40), np.random.default_rng(7))
        stack.model.save(ART / "model.json")
        (ART / "deploy.json").write_text(json.dumps({
            "envelope": json.loads(stack.envelope.to_json()),
            "omega_approach": stack.omega_approach,
            "omega_leave": stack.omega_leave,
        }))
    config_path.write_text(json.dumps({
        "artifacts_dir": str(ART),
        "serve": {"scene_id": 2, "host": "127.0.0.1", "port": port, "speed_factor": 1.0},
    }))
    print(f"artifacts ready in {ART} (port {port})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
