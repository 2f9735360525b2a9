"""Deterministic discrete-time pouring dynamics.

The world is one source container tilted about a single wrist axis above a
target container.  Liquid flows once the tilt exceeds a threshold that rises
as the source empties; flow is linear in the excess tilt.  Everything is
pure state-in/state-out: ``step`` and ``inject_event`` return new states and
never mutate, so trials can run in parallel without sharing anything.

Volume is conserved exactly: at every step

    source + target + spilled == source_initial + target_initial + injected

up to floating-point roundoff (checked at 1e-9 relative in the tests).

Task stages are labeled with four phases and a discretized fill state:

    phase 0  approaching   nothing has flowed yet
    phase 1  pouring       liquid is going in, container below the full band
    phase 2  slowing down  fill has reached the full band, flow still alive
    phase 3  leaving       flow has stopped after pouring

State labels are 0..N+1 where state s covers the fill band [s*k, (s+1)*k)
with resolution k = capacity / N; the full band (fill >= required_fill)
maps to state N and the terminal no-more-flow condition to N+1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace, asdict
from typing import Iterable, Sequence

CONTAINER_CLASSES = ("small", "medium", "big")

# Success rule: no spilling and at least this fraction of capacity poured.
DEFAULT_REQUIRED_FILL = 0.9


def container_class_for(capacity_ml: float) -> str:
    """Size class implied by capacity: big above 150 ml, small below 100 ml."""
    if capacity_ml > 150.0:
        return "big"
    if capacity_ml < 100.0:
        return "small"
    return "medium"


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one pouring scene."""

    target_capacity_ml: float = 100.0
    source_initial_ml: float = 140.0
    initial_target_ml: float = 0.0
    n_states: int = 8
    container_class: str = "medium"
    timestep_s: float = 0.04
    flow_gain: float = 1.2           # ml/s per degree beyond threshold
    flow_threshold_deg: float = 25.0
    threshold_slope_deg: float = 4.0  # extra tilt needed when source is empty
    max_safe_flow_ml_per_s: float | None = None  # splash spill above this rate; off by default
    required_fill: float = DEFAULT_REQUIRED_FILL
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_states < 2:
            raise ValueError("n_states must be >= 2")
        if self.target_capacity_ml <= 0:
            raise ValueError("target_capacity_ml must be > 0")
        if not 0 <= self.initial_target_ml < self.target_capacity_ml:
            raise ValueError("initial_target_ml must be in [0, target_capacity_ml)")
        if self.source_initial_ml <= 0:
            raise ValueError("source_initial_ml must be > 0")
        if self.timestep_s <= 0:
            raise ValueError("timestep_s must be > 0")
        if self.flow_gain < 0:
            raise ValueError("flow_gain must be >= 0")
        if self.container_class not in CONTAINER_CLASSES:
            raise ValueError(f"container_class must be one of {CONTAINER_CLASSES}")
        expected = container_class_for(self.target_capacity_ml)
        if self.container_class != expected:
            raise ValueError(
                f"container_class {self.container_class!r} inconsistent with "
                f"capacity {self.target_capacity_ml} ml (expected {expected!r})"
            )
        if not 0 < self.required_fill <= 1:
            raise ValueError("required_fill must be in (0, 1]")

    @property
    def state_resolution_ml(self) -> float:
        """Volume per fill state, k = capacity / N."""
        return self.target_capacity_ml / self.n_states

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, doc: str) -> "ScenarioConfig":
        return cls(**json.loads(doc))


@dataclass(frozen=True)
class SimState:
    """Ground-truth world state at one timestep."""

    t: int
    source_ml: float
    target_ml: float
    spilled_ml: float
    tilt_deg: float
    flow_ml_per_s: float
    injected_ml: float

    def conservation_error(self, cfg: ScenarioConfig) -> float:
        """Relative volume-balance error against the scenario totals."""
        total = self.source_ml + self.target_ml + self.spilled_ml
        expected = cfg.source_initial_ml + cfg.initial_target_ml + self.injected_ml
        return abs(total - expected) / max(expected, 1.0)


@dataclass(frozen=True)
class PourEvent:
    """Mid-trial disturbance: extra liquid or ice dropped into the target."""

    kind: str  # "add_liquid" | "add_ice"
    volume_ml: float
    at_step: int

    def __post_init__(self):
        if self.kind not in ("add_liquid", "add_ice"):
            raise ValueError("kind must be add_liquid or add_ice")
        if self.volume_ml <= 0:
            raise ValueError("volume_ml must be > 0")
        if self.at_step < 0:
            raise ValueError("at_step must be >= 0")


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    final_fill_fraction: float
    spilled: bool
    steps: int
    reason: str = ""


def init_scenario(cfg: ScenarioConfig) -> SimState:
    """Fresh state: level pose, no flow, target pre-filled per the scenario."""
    cfg.validate()
    return SimState(
        t=0,
        source_ml=cfg.source_initial_ml,
        target_ml=cfg.initial_target_ml,
        spilled_ml=0.0,
        tilt_deg=0.0,
        flow_ml_per_s=0.0,
        injected_ml=0.0,
    )


def effective_threshold_deg(cfg: ScenarioConfig, source_ml: float) -> float:
    """Tilt at which flow starts; rises as the source container empties."""
    depletion = 1.0 - source_ml / cfg.source_initial_ml
    return cfg.flow_threshold_deg + cfg.threshold_slope_deg * depletion


def step(state: SimState, cfg: ScenarioConfig, commanded_omega: float) -> SimState:
    """Advance one timestep under angular velocity ``commanded_omega`` (deg/s).

    Tilt integrates unclamped (clamping belongs to the controller); flow is
    linear in the tilt excess over the depletion-dependent threshold, capped
    by what is left in the source. Liquid beyond the target capacity spills.
    """
    if not math.isfinite(commanded_omega):
        raise ValueError("commanded_omega must be finite")
    dt = cfg.timestep_s
    tilt = state.tilt_deg + commanded_omega * dt
    threshold = effective_threshold_deg(cfg, state.source_ml)
    rate = cfg.flow_gain * max(0.0, tilt - threshold)
    transfer = min(rate * dt, state.source_ml)
    source = state.source_ml - transfer

    splash = 0.0
    if cfg.max_safe_flow_ml_per_s is not None and rate > cfg.max_safe_flow_ml_per_s:
        # Excess over the safe rate splashes past the target container.
        splash = min(transfer, (rate - cfg.max_safe_flow_ml_per_s) * dt)

    into_target = transfer - splash
    room = cfg.target_capacity_ml - state.target_ml
    overflow = max(0.0, into_target - room)
    target = state.target_ml + into_target - overflow
    spilled = state.spilled_ml + overflow + splash

    return SimState(
        t=state.t + 1,
        source_ml=source,
        target_ml=target,
        spilled_ml=spilled,
        tilt_deg=tilt,
        flow_ml_per_s=transfer / dt,
        injected_ml=state.injected_ml,
    )


def inject_event(state: SimState, ev: PourEvent, cfg: ScenarioConfig) -> SimState:
    """Drop extra volume into the target; overflow routes to spillage.

    Ice is treated as instantaneously displaced volume, so both event kinds
    share the arithmetic.
    """
    room = cfg.target_capacity_ml - state.target_ml
    overflow = max(0.0, ev.volume_ml - room)
    return replace(
        state,
        target_ml=state.target_ml + ev.volume_ml - overflow,
        spilled_ml=state.spilled_ml + overflow,
        injected_ml=state.injected_ml + ev.volume_ml,
    )


def fill_level(target_ml: float, cfg: ScenarioConfig) -> int:
    """Discretized fill state in 0..N.

    Levels 0..N-1 are floor(target/k) bands; the full band N begins at the
    required-fill fraction (a container at 92% reads as "full" the way a
    human labeler would call it, even though floor(0.92*N) < N).
    """
    if target_ml >= cfg.required_fill * cfg.target_capacity_ml:
        return cfg.n_states
    return min(int(target_ml / cfg.state_resolution_ml), cfg.n_states - 1)


def ground_truth_labels(
    state: SimState,
    cfg: ScenarioConfig,
    flow_history: Sequence[float] = (),
) -> tuple[int, int]:
    """(phase, state) labels for one frame.

    ``flow_history`` is the sequence of past flow rates; it decides whether
    anything has flowed yet. Phase gates the state label: pouring frames
    report at least state 1, the full band reports N, and once flow has
    ended the terminal label N+1 is forced, matching the canonical
    0,1,...,N,N+1 transition chain of a successful trial.
    """
    n = cfg.n_states
    level = fill_level(state.target_ml, cfg)
    has_flowed = state.flow_ml_per_s > 0.0 or any(f > 0.0 for f in flow_history)
    if not has_flowed:
        return 0, level
    if level >= n:
        if state.flow_ml_per_s > 0.0:
            return 2, n
        return 3, n + 1
    # Below the full band the task is still pouring, even across momentary
    # flow stalls. The state stays the plain fill level so that the state
    # classes mean the same thing in every phase.
    return 1, min(level, n - 1)


PHASE_STATE_PAIRS = {
    0: lambda s, n: 0 <= s <= n,
    1: lambda s, n: 0 <= s <= n - 1,
    2: lambda s, n: s == n,
    3: lambda s, n: s == n + 1,
}


def labels_consistent(phase: int, state_label: int, n_states: int) -> bool:
    """True when the (phase, state) pair is in the correspondence map."""
    check = PHASE_STATE_PAIRS.get(phase)
    return check is not None and check(state_label, n_states)


def judge_trial(
    trace: Sequence[SimState],
    cfg: ScenarioConfig,
    required_fill: float | None = None,
) -> TrialOutcome:
    """Success iff nothing spilled and the final fill reaches the target fraction."""
    if not trace:
        raise ValueError("trace must be non-empty")
    need = cfg.required_fill if required_fill is None else required_fill
    final = trace[-1]
    fill = final.target_ml / cfg.target_capacity_ml
    spilled = final.spilled_ml > 0.0
    success = (not spilled) and fill >= need
    return TrialOutcome(
        success=success,
        final_fill_fraction=fill,
        spilled=spilled,
        steps=final.t,
    )


TRACE_CSV_COLUMNS = (
    "t", "source_ml", "target_ml", "spilled_ml", "tilt_deg", "flow",
    "phase_gt", "state_gt",
)


def export_trace_csv(trace: Iterable[SimState], cfg: ScenarioConfig, path) -> None:
    """Write the simulator trace with ground-truth labels as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_COLUMNS)
        flows: list[float] = []
        for s in trace:
            phase, label = ground_truth_labels(s, cfg, flows)
            writer.writerow([
                s.t, f"{s.source_ml:.6f}", f"{s.target_ml:.6f}",
                f"{s.spilled_ml:.6f}", f"{s.tilt_deg:.6f}",
                f"{s.flow_ml_per_s:.6f}", phase, label,
            ])
            flows.append(s.flow_ml_per_s)
