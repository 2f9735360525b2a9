"""Scripted demonstrator standing in for a teleoperating human.

The expert tracks a target flow rate that tapers as the container fills.
Corrections are decisive, the way a human pours: inside a small flow-error
deadband the wrist holds still, beyond it the correction grows
proportionally.  That keeps the command a crisp, identifiable function of
observable quantities (fill, flow) while producing the wide per-state
velocity statistics the safety envelope needs; a timid micro-servoing
demonstrator leaves the learned controller unable to recover from any flow
sag, because recovery-sized commands would sit outside everything the
demonstrations contain.

Entering the full band the expert retreats briskly, proportionally to the
remaining flow, then eases the container home once the stream dies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .sim import ScenarioConfig, SimState


@dataclass(frozen=True)
class ExpertPolicy:
    approach_speed: float = 20.0       # forward tilt-rate cap, deg/s
    pour_rate_hi: float = 16.0         # target flow at empty, ml/s
    pour_rate_lo: float = 13.0         # target flow entering the last fill state, ml/s
    pour_rate_end: float = 10.5        # target flow at the full band edge, ml/s
    deadband_ml: float = 2.5           # flow error tolerated without correcting
    correction_gain: float = 2.0       # deg/s per ml/s of flow error beyond the deadband
    retreat_base: float = 7.0          # slow-down retreat floor, deg/s
    retreat_flow_gain: float = 0.5     # extra retreat per ml/s of live flow
    retreat_tail_gain: float = 6.0     # extra snap per ml/s the dying stream is under 4
    leave_speed: float = 15.0          # homing rate cap, deg/s
    home_gain: float = 0.35            # homing rate per degree of tilt
    home_base: float = 2.0

    def target_rate_ml(self, fill: float, cfg: ScenarioConfig) -> float:
        """Desired flow in ml/s while below the full band.

        Rates are absolute, not capacity-scaled: the command must stay a
        function of observable quantities, and capacity is not one of them.
        The extra taper across the last state is the careful final approach.
        """
        full = cfg.required_fill
        taper_start = full * (cfg.n_states - 1) / cfg.n_states
        if fill < taper_start:
            return self.pour_rate_hi - (self.pour_rate_hi - self.pour_rate_lo) * (
                fill / taper_start
            )
        frac = (fill - taper_start) / (full - taper_start)
        return self.pour_rate_lo - (self.pour_rate_lo - self.pour_rate_end) * frac

    def act(self, state: SimState, cfg: ScenarioConfig) -> float:
        """Commanded angular velocity for one frame."""
        fill = state.target_ml / cfg.target_capacity_ml
        flow = state.flow_ml_per_s
        if fill >= cfg.required_fill:
            if flow > 0.0:
                # Slow down: kill the stream, snapping the dying tail shut.
                # Lingering at a trickle would flood the data with
                # full-band low-flow frames and drag the learned band
                # boundary down the flow axis.
                return -(
                    self.retreat_base
                    + self.retreat_flow_gain * flow
                    + self.retreat_tail_gain * max(0.0, 4.0 - flow)
                )
            if state.tilt_deg <= 0.5:
                return 0.0
            return -min(self.leave_speed, self.home_gain * state.tilt_deg + self.home_base)
        err = self.target_rate_ml(fill, cfg) - flow
        magnitude = max(0.0, abs(err) - self.deadband_ml)
        omega = self.correction_gain * magnitude * (1.0 if err >= 0 else -1.0)
        return max(-self.leave_speed, min(self.approach_speed, omega))

    def jittered(self, rng) -> "ExpertPolicy":
        """A per-demonstration variation of this policy.

        Demonstrators are never perfectly repeatable; mild tempo and gain
        variation keeps the data from collapsing onto one razor-thin
        manifold without creating contradictory command modes.
        """

        def vary(value: float, rel: float) -> float:
            return value * (1.0 + rng.uniform(-rel, rel))

        tempo = rng.uniform(0.92, 1.08)
        return replace(
            self,
            approach_speed=vary(self.approach_speed, 0.08),
            pour_rate_hi=tempo * vary(self.pour_rate_hi, 0.05),
            pour_rate_lo=tempo * vary(self.pour_rate_lo, 0.04),
            pour_rate_end=tempo * vary(self.pour_rate_end, 0.04),
            deadband_ml=vary(self.deadband_ml, 0.20),
            correction_gain=vary(self.correction_gain, 0.15),
            retreat_base=vary(self.retreat_base, 0.10),
            retreat_flow_gain=vary(self.retreat_flow_gain, 0.15),
            retreat_tail_gain=vary(self.retreat_tail_gain, 0.15),
            home_gain=vary(self.home_gain, 0.15),
            home_base=vary(self.home_base, 0.20),
        )

    def session(self, rng, pause_prob: float = 0.65) -> "SessionPolicy":
        """Rollout behavior for one demonstration: a jittered copy, often
        with stop-and-go interruptions mid-pour.

        The interruptions matter beyond realism: restarting a pour into an
        already-filled container is exactly what adapting to a pre-filled
        target requires, and without such segments nothing in the data says
        what to do there.  They reach into the last fill state on purpose,
        so the full-band boundary does not hinge on the flow value.
        """
        pauses = ()
        if rng.random() < pause_prob:
            # One interruption anywhere early, one late: restarts close to
            # the full band are the scarce and valuable kind.
            pauses = (rng.uniform(0.12, 0.70), rng.uniform(0.80, 0.885))
        return SessionPolicy(self.jittered(rng), pauses)


class SessionPolicy:
    """Stateful wrapper driving one demonstration rollout.

    While an interruption is shutting the stream, ``interrupting`` is True;
    those frames record the operator's pause intent rather than a pouring
    decision, and the action view of the dataset leaves them out.
    """

    def __init__(self, policy: ExpertPolicy, pauses=()):
        self.policy = policy
        self.pauses = list(pauses)
        self.interrupting = False

    def act(self, state: SimState, cfg: ScenarioConfig) -> float:
        fill = state.target_ml / cfg.target_capacity_ml
        self.interrupting = False
        if self.pauses and fill >= self.pauses[0] and fill < cfg.required_fill:
            if state.flow_ml_per_s > 1.0:
                self.interrupting = True
                return -12.0
            # Stream is down to a dribble: resume immediately. A held stall
            # would make low flow mid-pour ambiguous between "about to pour
            # again" and "done", and it must mean the former; restart frames
            # are also the only mid-fill coverage of a barely-live stream.
            self.pauses.pop(0)
        return self.policy.act(state, cfg)
