"""Online decision core: thresholded transitions, safety clamps, control loop.

Phase and state decisions use a hysteresis rule: the candidate is the argmax
over the non-regressing classes (ties break toward the earlier class), and
it is accepted only when its probability leads the previous choice's by at
least lambda.  Determined sequences are therefore non-decreasing.

Velocity and angle commands are clamped into per-state / per-phase envelopes
extracted from demonstration statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .perception import HierarchyModel, NoiseConfig, Observation, observe
from .sim import (
    ScenarioConfig,
    effective_threshold_deg,
    init_scenario,
    inject_event,
    judge_trial,
    step,
)

DEFAULT_LAMBDA = 0.2
DEFAULT_STEP_CAP = 3000
HOME_TOLERANCE_DEG = 1.0
# A trial is also over once the goal state is reached, the stream is dead,
# and the tilt sits at or below the flow threshold for this long: nothing
# can change the poured volume anymore, whatever the phase head thinks.
GOAL_SETTLED_STEPS = 25


@dataclass(frozen=True)
class ControllerConfig:
    lam: float = DEFAULT_LAMBDA
    s_goal: int = 8
    omega_approach: float = 18.0
    omega_leave: float = -12.0
    timestep_s: float = 0.04

    def __post_init__(self):
        if not 0 <= self.lam < 0.5:
            raise ValueError("lambda must be in [0, 0.5)")
        if self.s_goal < 1:
            raise ValueError("s_goal must be >= 1")

    def for_n_states(self, n: int) -> "ControllerConfig":
        if not 1 <= self.s_goal <= n:
            raise ValueError(f"s_goal must be in [1, {n}]")
        return self


@dataclass(frozen=True)
class SafetyEnvelope:
    """Per-state angular-velocity bounds and per-phase tilt bounds."""

    omega_bounds: tuple  # ((lo, hi), ...) indexed by state-1, states 1..N
    theta_bounds: tuple  # ((lo, hi), ...) indexed by phase, phases 0..3

    def __post_init__(self):
        for lo, hi in list(self.omega_bounds) + list(self.theta_bounds):
            if lo > hi:
                raise ValueError("envelope bounds must satisfy lo <= hi")
        if len(self.theta_bounds) != 4:
            raise ValueError("theta bounds must cover phases 0..3")

    @property
    def n_states(self) -> int:
        return len(self.omega_bounds)

    def to_json(self) -> str:
        return json.dumps({
            "omega_bounds": [list(b) for b in self.omega_bounds],
            "theta_bounds": [list(b) for b in self.theta_bounds],
        })

    @classmethod
    def from_json(cls, doc: str) -> "SafetyEnvelope":
        d = json.loads(doc)
        return cls(
            omega_bounds=tuple(tuple(b) for b in d["omega_bounds"]),
            theta_bounds=tuple(tuple(b) for b in d["theta_bounds"]),
        )


@dataclass(frozen=True)
class ControllerState:
    prev_phase: int = 0
    prev_state: int = 0
    prev_theta: float = 0.0
    t: int = 0


@dataclass(frozen=True)
class StepRecord:
    """Everything one control step decided, for explanation and export."""

    t: int
    probs_phase: tuple
    probs_state: tuple
    phase: int
    state: int
    omega_raw: float
    omega_clamped: float
    theta: float


# -- transition determination -------------------------------------------


def candidate_phase(probs, prev: int) -> int:
    """Highest-probability phase among {prev, prev+1}.

    Phases are strictly sequential, so the candidate never looks further
    than one step ahead; a pre-filled container that superficially
    resembles a finished pour must not teleport the task to "leaving".
    Ties break toward the earlier phase.
    """
    return _masked_argmax(probs, prev, min(prev + 1, 3))


def determine_phase(probs, prev: int, lam: float) -> int:
    return _determine(probs, prev, min(prev + 1, 3), lam)


def determine_state(probs, prev: int, lam: float, n_states: int) -> int:
    """State decision over classes prev..N (never N+1).

    Unlike phases, forward jumps of several states are allowed: pre-filled
    containers and mid-pour injections legitimately skip fill states.
    """
    return _determine(probs, prev, n_states, lam)


def _masked_argmax(probs, lo: int, hi: int) -> int:
    best = lo
    best_p = probs[lo]
    for c in range(lo + 1, hi + 1):
        if probs[c] > best_p:  # strict: ties go to the earlier class
            best = c
            best_p = probs[c]
    return best


def _determine(probs, prev: int, hi: int, lam: float) -> int:
    cand = _masked_argmax(probs, prev, hi)
    if cand == prev:
        return prev
    return cand if probs[cand] - probs[prev] >= lam else prev


# -- safety clamps --------------------------------------------------------


def clamp_velocity(omega_prime: float, s: int, env: SafetyEnvelope) -> float:
    if not 1 <= s <= env.n_states:
        raise ValueError(f"state {s} outside envelope range 1..{env.n_states}")
    lo, hi = env.omega_bounds[s - 1]
    if omega_prime <= lo:
        return lo
    if omega_prime >= hi:
        return hi
    return omega_prime


def clamp_angle(theta_prime: float, c: int, env: SafetyEnvelope) -> float:
    if not 0 <= c <= 3:
        raise ValueError(f"phase {c} outside envelope range 0..3")
    lo, hi = env.theta_bounds[c]
    if theta_prime <= lo:
        return lo
    if theta_prime >= hi:
        return hi
    return theta_prime


# -- envelope extraction --------------------------------------------------


def extract_envelope(demos, n_states: int, margin: float = 0.05) -> SafetyEnvelope:
    """Min/max statistics over demonstration frames, widened by ``margin``.

    ``demos`` is an iterable of demonstrations whose frames expose
    ``state``, ``phase``, ``omega`` and ``theta`` attributes.  Every state
    1..N and phase 0..3 must be covered by at least one frame.
    """
    omega_by_state = {s: [] for s in range(1, n_states + 1)}
    theta_by_phase = {c: [] for c in range(4)}
    n_demos = 0
    for demo in demos:
        n_demos += 1
        for fr in demo.frames:
            if 1 <= fr.state <= n_states:
                omega_by_state[fr.state].append(fr.omega)
            theta_by_phase[fr.phase].append(fr.theta)
    if n_demos == 0:
        raise ValueError("demo set is empty")
    for s, vals in omega_by_state.items():
        if not vals:
            raise ValueError(f"no demonstration frames for state {s}")
    for c, vals in theta_by_phase.items():
        if not vals:
            raise ValueError(f"no demonstration frames for phase {c}")

    def widen(vals):
        lo, hi = min(vals), max(vals)
        return lo - margin * abs(lo), hi + margin * abs(hi)

    return SafetyEnvelope(
        omega_bounds=tuple(widen(omega_by_state[s]) for s in range(1, n_states + 1)),
        theta_bounds=tuple(widen(theta_by_phase[c]) for c in range(4)),
    )


def extract_constant_speeds(demos) -> tuple[float, float]:
    """Least-squares constant fits (means) of omega over phase-0 / phase-3 frames."""
    approach, leave = [], []
    for demo in demos:
        for fr in demo.frames:
            if fr.phase == 0:
                approach.append(fr.omega)
            elif fr.phase == 3:
                leave.append(fr.omega)
    if not approach:
        raise ValueError("no phase-0 frames in demos")
    if not leave:
        raise ValueError("no phase-3 frames in demos")
    return float(np.mean(approach)), float(np.mean(leave))


# -- the control step and trial loop --------------------------------------


def control_step(
    ctrl: ControllerState,
    cfg: ControllerConfig,
    env: SafetyEnvelope,
    model: HierarchyModel,
    obs: Observation,
) -> tuple[float, float, ControllerState, StepRecord]:
    """One decision: determine phase/state, pick omega, clamp, integrate angle."""
    n = model.n_states
    probs_phase = model.predict_phase(obs)
    probs_state = model.predict_state(obs)
    omega_raw = model.predict_action(obs)

    c = determine_phase(probs_phase, ctrl.prev_phase, cfg.lam)
    s = ctrl.prev_state
    if c == 0:
        omega = cfg.omega_approach
    elif c in (1, 2):
        s = determine_state(probs_state, min(ctrl.prev_state, n), cfg.lam, n)
        # Goal reached: clamp as if at the last state, which forces the
        # slow-down envelope. Early frames may still sit at state 0, where
        # no envelope exists; the first pouring envelope applies there.
        clamp_state = n if s >= cfg.s_goal else max(s, 1)
        omega = clamp_velocity(omega_raw, clamp_state, env)
    else:
        omega = cfg.omega_leave
        s = n + 1  # leaving corresponds to the terminal state label
    theta = clamp_angle(ctrl.prev_theta + omega * cfg.timestep_s, c, env)
    new_ctrl = ControllerState(prev_phase=c, prev_state=s, prev_theta=theta, t=ctrl.t + 1)
    record = StepRecord(
        t=ctrl.t,
        probs_phase=tuple(float(p) for p in probs_phase),
        probs_state=tuple(float(p) for p in probs_state),
        phase=c,
        state=s,
        omega_raw=float(omega_raw),
        omega_clamped=float(omega),
        theta=float(theta),
    )
    return omega, theta, new_ctrl, record


@dataclass
class TrialTrace:
    """Paired control records and simulator frames for one trial."""

    records: list = field(default_factory=list)
    sim_frames: list = field(default_factory=list)
    scenario: ScenarioConfig | None = None
    lam: float = DEFAULT_LAMBDA
    s_goal: int = 0


def run_trial(
    scenario: ScenarioConfig,
    events,
    cfg: ControllerConfig,
    env: SafetyEnvelope,
    model: HierarchyModel,
    noise: NoiseConfig,
    rng: np.random.Generator,
    step_cap: int = DEFAULT_STEP_CAP,
    required_fill: float | None = None,
):
    """Closed loop: observe, decide, actuate, until the pour completes.

    The simulator is driven with the velocity that realizes the clamped
    angle command, so safety clamps bind on the actual plant. Events fire
    at the start of their step. Returns (TrialOutcome, TrialTrace).
    """
    cfg = cfg.for_n_states(model.n_states)
    state = init_scenario(scenario)
    ctrl = ControllerState(prev_theta=state.tilt_deg)
    trace = TrialTrace(scenario=scenario, lam=cfg.lam, s_goal=cfg.s_goal)
    trace.sim_frames.append(state)
    pending = sorted(events, key=lambda e: e.at_step)
    home = state.tilt_deg
    timed_out = True
    settled = 0

    for t in range(step_cap):
        while pending and pending[0].at_step <= t:
            state = inject_event(state, pending.pop(0), scenario)
        obs = observe(state, scenario, noise, rng)
        _, theta, ctrl, record = control_step(ctrl, cfg, env, model, obs)
        realized_omega = (theta - trace.sim_frames[-1].tilt_deg) / scenario.timestep_s
        state = step(state, scenario, realized_omega)
        trace.records.append(record)
        trace.sim_frames.append(state)
        if record.phase == 3 and abs(state.tilt_deg - home) <= HOME_TOLERANCE_DEG:
            timed_out = False
            break
        if (
            record.state >= cfg.s_goal
            and state.flow_ml_per_s == 0.0
            and state.tilt_deg <= effective_threshold_deg(scenario, state.source_ml) + 0.5
        ):
            settled += 1
            if settled >= GOAL_SETTLED_STEPS:
                timed_out = False
                break
        else:
            settled = 0

    outcome = judge_trial(trace.sim_frames, scenario, required_fill)
    if timed_out:
        outcome = replace(outcome, success=False, reason="timeout")
    return outcome, trace


def export_records_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({
                "t": r.t,
                "probs_phase": list(r.probs_phase),
                "probs_state": list(r.probs_state),
                "phase": r.phase,
                "state": r.state,
                "omega_raw": r.omega_raw,
                "omega_clamped": r.omega_clamped,
                "theta": r.theta,
            }) + "\n")


def export_records_csv(records, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if not records:
            return
        n_phase = len(records[0].probs_phase)
        n_state = len(records[0].probs_state)
        writer.writerow(
            ["t"]
            + [f"p_phase_{i}" for i in range(n_phase)]
            + [f"p_state_{i}" for i in range(n_state)]
            + ["phase", "state", "omega_raw", "omega_clamped", "theta"]
        )
        for r in records:
            writer.writerow(
                [r.t]
                + [f"{p:.6f}" for p in r.probs_phase]
                + [f"{p:.6f}" for p in r.probs_state]
                + [r.phase, r.state, f"{r.omega_raw:.6f}", f"{r.omega_clamped:.6f}", f"{r.theta:.6f}"]
            )
