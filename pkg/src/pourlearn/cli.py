"""Command-line driver.

Subcommands cover the whole workflow: demo-gen, train, tune-lambda, run,
experiment {performance|adaptability|manipulability|failure-prediction},
and serve.  Each takes a JSON config file (every section optional; defaults
are sensible) plus --seed, and reads/writes artifacts in one directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .catalog import ScenarioCatalog, default_catalog
from .controller import SafetyEnvelope, export_records_jsonl, run_trial
from .expert import ExpertPolicy
from .graph import build_graph, export_lambda_sweep_csv, tune_lambda
from .harness import (
    AdaptabilityCase,
    DemoPool,
    TrainedStack,
    build_stack,
    generate_demos,
    run_experiment_adaptability,
    run_experiment_failure_prediction,
    run_experiment_manipulability,
    run_experiment_performance,
    run_expert_trial,
)
from .perception import (
    HierarchyModel,
    NoiseConfig,
    TrainConfig,
    classification_accuracy,
    action_mse,
    export_loss_curves_csv,
)
from .sim import PourEvent, export_trace_csv

DEFAULT_LAMBDA_GRID = [0.0, 0.1, 0.2, 0.3, 0.4]


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _noise(cfg: dict) -> NoiseConfig:
    return NoiseConfig(**cfg.get("noise", {}))


def _training(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg.get("training", {}))


def _catalog(cfg: dict) -> ScenarioCatalog:
    if "catalog" in cfg:
        return ScenarioCatalog.from_json(json.dumps(cfg["catalog"]))
    return default_catalog()


def _artifacts(cfg: dict) -> Path:
    d = Path(cfg.get("artifacts_dir", "artifacts"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _lambda(cfg: dict) -> float:
    return float(cfg.get("controller", {}).get("lambda", 0.2))


def _load_stack(art: Path) -> TrainedStack:
    model = HierarchyModel.load(art / "model.json")
    with open(art / "deploy.json") as fh:
        deploy = json.load(fh)
    return TrainedStack(
        model=model,
        envelope=SafetyEnvelope.from_json(json.dumps(deploy["envelope"])),
        omega_approach=deploy["omega_approach"],
        omega_leave=deploy["omega_leave"],
    )


def cmd_demo_gen(cfg: dict, seed: int) -> int:
    art = _artifacts(cfg)
    catalog = _catalog(cfg)
    demo_cfg = cfg.get("demo", {})
    scene_ids = demo_cfg.get("scene_ids", catalog.ids("seen"))
    trials = demo_cfg.get("trials_per_scene", 4)
    rng = np.random.default_rng(seed)
    pool = generate_demos(catalog, scene_ids, trials, ExpertPolicy(), _noise(cfg), rng)
    pool.save(art / "demos.npz")
    print(f"saved {len(pool)} demos ({pool.frame_count()} frames) to {art / 'demos.npz'}")
    return 0


def cmd_train(cfg: dict, seed: int) -> int:
    art = _artifacts(cfg)
    pool = DemoPool.load(art / "demos.npz")
    rng = np.random.default_rng(seed)
    stack, test_pool = build_stack(pool, _training(cfg), rng)
    stack.model.save(art / "model.json")
    export_loss_curves_csv(stack.model, art / "loss_curves.csv")
    with open(art / "deploy.json", "w") as fh:
        json.dump({
            "envelope": json.loads(stack.envelope.to_json()),
            "omega_approach": stack.omega_approach,
            "omega_leave": stack.omega_leave,
        }, fh, indent=2)
    o1, o2, o3 = test_pool.datasets()
    print(f"held-out phase accuracy:  {classification_accuracy(stack.model, o1, 'phase'):.4f}")
    print(f"held-out state accuracy:  {classification_accuracy(stack.model, o2, 'state'):.4f}")
    print(f"held-out action MSE:      {action_mse(stack.model, o3):.6f} (normalized)")
    print(f"artifacts written to {art}")
    return 0


def cmd_tune_lambda(cfg: dict, seed: int) -> int:
    art = _artifacts(cfg)
    catalog = _catalog(cfg)
    stack = _load_stack(art)
    scene_id = cfg.get("tune", {}).get("scene_id", catalog.ids("seen")[0])
    grid = cfg.get("tune", {}).get("grid", DEFAULT_LAMBDA_GRID)
    rng = np.random.default_rng(seed)
    _, frames, _ = run_expert_trial(catalog.get(scene_id).config, ExpertPolicy(), _noise(cfg), rng)
    stream = [stack.model.predict_state(fr.obs) for fr in frames]
    result = tune_lambda(stream, grid, stack.model.n_states)
    export_lambda_sweep_csv(result, art / "lambda_sweep.csv")
    for e in result.entries:
        print(f"lambda={e.lam:.2f}  oscillation={e.oscillation_count}  skipped={e.skipped_count}")
    print(f"recommended lambda: {result.recommended}")
    return 0


def cmd_run(cfg: dict, seed: int) -> int:
    art = _artifacts(cfg)
    catalog = _catalog(cfg)
    stack = _load_stack(art)
    run_cfg = cfg.get("run", {})
    scene_id = run_cfg.get("scene_id", catalog.ids("seen")[0])
    events = [PourEvent(**e) for e in run_cfg.get("events", [])]
    s_goal = run_cfg.get("s_goal")
    ctrl = stack.controller_config(_lambda(cfg), s_goal=s_goal)
    rng = np.random.default_rng(seed)
    outcome, trace = run_trial(
        catalog.get(scene_id).config, events, ctrl, stack.envelope, stack.model,
        _noise(cfg), rng,
    )
    export_trace_csv(trace.sim_frames, trace.scenario, art / "trace.csv")
    export_records_jsonl(trace.records, art / "records.jsonl")
    g = build_graph(trace.records, meta={"scene_id": scene_id, "lambda": ctrl.lam, "s_goal": ctrl.s_goal})
    (art / "graph.json").write_text(g.to_json())
    (art / "graph.dot").write_text(g.to_dot())
    with open(art / "outcome.json", "w") as fh:
        json.dump({
            "success": outcome.success,
            "final_fill_fraction": outcome.final_fill_fraction,
            "spilled": outcome.spilled,
            "steps": outcome.steps,
            "reason": outcome.reason,
        }, fh, indent=2)
    states = [n.state for n in g.nodes]
    print(f"outcome: success={outcome.success} fill={outcome.final_fill_fraction:.3f} "
          f"spilled={outcome.spilled} steps={outcome.steps}")
    print(f"visited states: {states}")
    return 0


def cmd_experiment(kind: str, cfg: dict, seed: int) -> int:
    art = _artifacts(cfg)
    catalog = _catalog(cfg)
    stack = _load_stack(art)
    noise = _noise(cfg)
    lam = _lambda(cfg)
    rng = np.random.default_rng(seed)
    exp_cfg = cfg.get("experiment", {}).get(kind.replace("-", "_"), {})

    if kind == "performance":
        seen = exp_cfg.get("seen_scene_ids", catalog.ids("seen")[-4:])
        unseen = exp_cfg.get("unseen_scene_ids", catalog.ids("unseen")[:4])
        scenes = seen + unseen
        trials = exp_cfg.get("trials", [13] * 4 + [12] * 4)
        report = run_experiment_performance(stack, catalog, scenes, trials, noise, rng, lam)
    elif kind == "adaptability":
        cases = [AdaptabilityCase(**c) for c in exp_cfg.get("cases", [])] or [
            AdaptabilityCase(scene_id=17, situation="A", k=5),
            AdaptabilityCase(scene_id=18, situation="A", k=2),
            AdaptabilityCase(scene_id=19, situation="A", k=3),
            AdaptabilityCase(scene_id=7, situation="B", k1=2, k2=3),
            AdaptabilityCase(scene_id=19, situation="B", k1=3, k2=5),
        ]
        report = run_experiment_adaptability(
            stack, catalog, cases, exp_cfg.get("trials_per_case", 10), noise, rng, lam
        )
    elif kind == "manipulability":
        cases = exp_cfg.get("cases") or [[28, 90.0], [12, 70.0], [12, 110.0], [2, 90.0], [2, 108.0]]
        report = run_experiment_manipulability(
            stack, catalog, [tuple(c) for c in cases],
            exp_cfg.get("trials_per_case", 10), noise, rng, lam,
        )
    elif kind == "failure-prediction":
        clean = exp_cfg.get("clean_scene_ids", catalog.ids("seen")[-5:] + catalog.ids("unseen")[:3])
        corrupted = exp_cfg.get("corrupted_scene_ids", [catalog.ids("seen")[0], catalog.ids("unseen")[3]])
        bias_states = exp_cfg.get("fill_bias_states", 3.0)
        bias = bias_states / stack.model.n_states
        report = run_experiment_failure_prediction(
            stack, catalog, clean, corrupted, bias, noise, rng, lam
        )
        with open(art / "report_failure_prediction.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        print(f"prediction accuracy: {report.accuracy:.2f}")
        for s in report.sessions:
            print(f"  scene {s.scene_id}: corrupted={s.corrupted} "
                  f"predicted_success={s.predicted_success} actual={s.actual_success}")
        return 0
    else:
        raise ValueError(f"unknown experiment {kind!r}")

    stem = f"report_{kind.replace('-', '_')}"
    report.save_csv(art / f"{stem}.csv")
    report.save_json(art / f"{stem}.json")
    trials, succ, rate = report.aggregate()
    print(f"{kind}: {succ}/{trials} successes (rate {rate:.2f})")
    for row in report.rows:
        extra = " ".join(f"{k}={v}" for k, v in row.detail.items())
        print(f"  scene {row.scene_id} [{row.tag}]: {row.successes}/{row.trials} {extra}")
    return 0


def cmd_serve(cfg: dict, seed: int) -> int:
    import uvicorn

    from .service import create_app

    art = _artifacts(cfg)
    catalog = _catalog(cfg)
    stack = _load_stack(art)
    serve_cfg = cfg.get("serve", {})
    app = create_app(
        stack,
        catalog,
        scene_id=serve_cfg.get("scene_id", catalog.ids("seen")[0]),
        noise=_noise(cfg),
        lam=_lambda(cfg),
        seed=seed,
        speed_factor=serve_cfg.get("speed_factor", 1.0),
    )
    uvicorn.run(
        app,
        host=serve_cfg.get("host", "127.0.0.1"),
        port=serve_cfg.get("port", 8765),
        log_level="warning",
    )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pourlearn", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("demo-gen", "train", "tune-lambda", "run", "serve"):
        sub.add_parser(name)
    exp = sub.add_parser("experiment")
    exp.add_argument(
        "kind",
        choices=["performance", "adaptability", "manipulability", "failure-prediction"],
    )
    args = parser.parse_args(argv)
    cfg = load_config(args.config)

    if args.command == "demo-gen":
        return cmd_demo_gen(cfg, args.seed)
    if args.command == "train":
        return cmd_train(cfg, args.seed)
    if args.command == "tune-lambda":
        return cmd_tune_lambda(cfg, args.seed)
    if args.command == "run":
        return cmd_run(cfg, args.seed)
    if args.command == "experiment":
        return cmd_experiment(args.kind, cfg, args.seed)
    if args.command == "serve":
        return cmd_serve(cfg, args.seed)
    return 2


if __name__ == "__main__":
    sys.exit(main())
