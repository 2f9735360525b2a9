"""Logical-graph traces: the explainable face of a pouring run.

A trace compresses the per-step (phase, state) decisions into dwell nodes,
each tagged with the probability the classifier gave the chosen class when
the dwell began.  On top of that live the analysis tools: failure
prediction against an expected graph, failure tracing (which states were
skipped and how much probability they ever got), goal manipulation, and
the lambda sweep used to tune the transition threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .controller import determine_state

LOW_CONFIDENCE_FLOOR = 0.5


@dataclass(frozen=True)
class GraphNode:
    t: int
    phase: int
    state: int
    phase_prob: float
    state_prob: float
    dwell: int = 1  # number of consecutive steps spent in this node


@dataclass
class LogicalGraphTrace:
    nodes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # Full per-step state-probability rows; kept so skipped states can be
    # traced back to the probability they were ever assigned.
    state_prob_history: list = field(default_factory=list)

    def node_states(self) -> list[int]:
        return [n.state for n in self.nodes]

    def node_pairs(self) -> list[tuple[int, int]]:
        return [(n.phase, n.state) for n in self.nodes]

    def expand(self) -> list[tuple[int, int]]:
        """Undo compression: the full per-step (phase, state) stream."""
        out = []
        for n in self.nodes:
            out.extend([(n.phase, n.state)] * n.dwell)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "meta": self.meta,
            "nodes": [
                {
                    "t": n.t, "phase": n.phase, "state": n.state,
                    "phase_prob": n.phase_prob, "state_prob": n.state_prob,
                    "dwell": n.dwell,
                }
                for n in self.nodes
            ],
        })

    @classmethod
    def from_json(cls, doc: str) -> "LogicalGraphTrace":
        d = json.loads(doc)
        trace = cls(meta=d.get("meta", {}))
        trace.nodes = [GraphNode(**n) for n in d["nodes"]]
        return trace

    def to_dot(self) -> str:
        """Graphviz rendering of the node chain; skip edges are dashed."""
        lines = ["digraph pour {", "  rankdir=LR;"]
        for i, n in enumerate(self.nodes):
            lines.append(
                f'  n{i} [label="c={n.phase} s={n.state}\\np={n.state_prob:.2f}"];'
            )
        for i in range(1, len(self.nodes)):
            a, b = self.nodes[i - 1], self.nodes[i]
            style = ' [style=dashed color=red]' if b.state - a.state > 1 else ""
            lines.append(f"  n{i-1} -> n{i}{style};")
        lines.append("}")
        return "\n".join(lines)


def build_graph(records, meta: dict | None = None) -> LogicalGraphTrace:
    """Compress a StepRecord stream into dwell nodes."""
    records = list(records)
    if not records:
        raise ValueError("record stream is empty")
    trace = LogicalGraphTrace(meta=dict(meta or {}))
    trace.state_prob_history = [r.probs_state for r in records]
    current: GraphNode | None = None
    for r in records:
        if current is not None and (r.phase, r.state) == (current.phase, current.state):
            current = GraphNode(
                t=current.t, phase=current.phase, state=current.state,
                phase_prob=current.phase_prob, state_prob=current.state_prob,
                dwell=current.dwell + 1,
            )
            trace.nodes[-1] = current
            continue
        current = GraphNode(
            t=r.t,
            phase=r.phase,
            state=r.state,
            phase_prob=float(r.probs_phase[r.phase]),
            state_prob=float(r.probs_state[r.state]) if r.state < len(r.probs_state) else 0.0,
            dwell=1,
        )
        trace.nodes.append(current)
    return trace


@dataclass(frozen=True)
class ExpectedGraph:
    """The (phase, state) chain a run is supposed to follow."""

    sequence: tuple          # ((phase, state), ...) strictly increasing states
    skipped_states: tuple = ()

    def __post_init__(self):
        states = [s for _, s in self.sequence]
        if any(b <= a for a, b in zip(states, states[1:])):
            raise ValueError("expected graph states must be strictly increasing")

    def states(self) -> list[int]:
        return [s for _, s in self.sequence]


def canonical_graph(n_states: int) -> ExpectedGraph:
    """The standard top-up chain 0,1,...,N,N+1."""
    return manipulate_goal(n_states, n_states)


def manipulate_goal(n_states: int, s_goal: int) -> ExpectedGraph:
    """Expected graph when pouring stops at ``s_goal``.

    Pouring covers states 1..s_goal, states strictly between s_goal and N
    are skipped, then the slow-down (N) and leaving (N+1) nodes follow.
    """
    if not 1 <= s_goal <= n_states:
        raise ValueError(f"s_goal must be in [1, {n_states}]")
    last_pour = min(s_goal, n_states - 1)
    seq = [(0, 0)]
    seq.extend((1, s) for s in range(1, last_pour + 1))
    seq.append((2, n_states))
    seq.append((3, n_states + 1))
    skipped = tuple(range(last_pour + 1, n_states))
    return ExpectedGraph(sequence=tuple(seq), skipped_states=skipped)


@dataclass(frozen=True)
class FailureVerdict:
    predicted_fail: bool
    violations: tuple  # ((criterion_id, t, detail), ...)

    def to_json(self) -> str:
        return json.dumps({
            "predicted_fail": self.predicted_fail,
            "violations": [
                {"criterion": c, "t": t, "detail": d} for c, t, d in self.violations
            ],
        })


def predict_failure(candidate, expected: ExpectedGraph, expected_sequence=None) -> FailureVerdict:
    """Screen a predicted (phase, state) sequence against three criteria.

    1. Irreversibility: phase or state decreases (vs the time-aligned
       expectation when ``expected_sequence`` is given, else within the
       candidate itself).
    2. Phase context: the phase chain must not skip a phase going forward.
    3. State jumps larger than 3 between consecutive steps, unless the jump
       lands at or beyond the slow-down state N.
    """
    candidate = list(candidate)
    if not candidate:
        raise ValueError("candidate sequence is empty")
    n_states = max(expected.states()) - 1  # terminal node is N+1
    violations = []

    reference = candidate
    if expected_sequence is not None:
        expected_sequence = list(expected_sequence)
        if len(expected_sequence) != len(candidate):
            raise ValueError("expected_sequence must align with candidate length")
        reference = expected_sequence

    for t in range(len(candidate) - 1):
        c_next, s_next = candidate[t + 1]
        c_ref, s_ref = reference[t]
        if c_next < c_ref or s_next < s_ref:
            violations.append((1, t + 1, f"regression to (c={c_next}, s={s_next}) from (c={c_ref}, s={s_ref})"))

    phases = [c for c, _ in candidate]
    for t, (a, b) in enumerate(zip(phases, phases[1:])):
        if b > a + 1:
            violations.append((2, t + 1, f"phase skip {a} -> {b}"))

    for t in range(len(candidate) - 1):
        s_prev = candidate[t][1]
        s_next = candidate[t + 1][1]
        if s_next - s_prev > 3 and s_next < n_states:
            violations.append((3, t + 1, f"state jump {s_prev} -> {s_next}"))

    violations.sort(key=lambda v: (v[1], v[0]))
    return FailureVerdict(predicted_fail=bool(violations), violations=tuple(violations))


@dataclass(frozen=True)
class SkipFinding:
    state: int
    peak_probability: float


@dataclass(frozen=True)
class FailureTraceReport:
    skipped: tuple          # (SkipFinding, ...) expected states never visited
    low_confidence: tuple   # ((t, phase, state, prob), ...) shaky dwell nodes

    def summary_lines(self) -> list[str]:
        lines = []
        for s in self.skipped:
            lines.append(
                f"state {s.state} skipped; peak assigned probability {s.peak_probability:.3f}"
            )
        for t, phase, state, prob in self.low_confidence:
            lines.append(
                f"low confidence at t={t}: chose (c={phase}, s={state}) with p={prob:.3f}"
            )
        return lines


def trace_failure(
    trace: LogicalGraphTrace,
    expected: ExpectedGraph,
    confidence_floor: float = LOW_CONFIDENCE_FLOOR,
) -> FailureTraceReport:
    """Explain a run: which expected states were skipped, and where the
    classifier was unsure about the state it chose.

    Skipped states that the goal manipulation already removes on purpose
    are not reported.
    """
    visited = set(trace.node_states())
    skipped = []
    for s in expected.states():
        if s in visited or s in expected.skipped_states:
            continue
        peak = 0.0
        for probs in trace.state_prob_history:
            if s < len(probs):
                peak = max(peak, float(probs[s]))
        skipped.append(SkipFinding(state=s, peak_probability=peak))
    low = tuple(
        (n.t, n.phase, n.state, n.state_prob)
        for n in trace.nodes
        if n.state_prob < confidence_floor
    )
    return FailureTraceReport(skipped=tuple(skipped), low_confidence=low)


# -- lambda tuning ---------------------------------------------------------


@dataclass(frozen=True)
class LambdaSweepEntry:
    lam: float
    sequence: tuple          # determined state at every step
    transitions: tuple       # (from, to) accepted transitions
    oscillation_count: int
    skipped_count: int


@dataclass(frozen=True)
class LambdaSweepResult:
    entries: tuple
    recommended: float | None

    def entry_for(self, lam: float) -> LambdaSweepEntry:
        for e in self.entries:
            if e.lam == lam:
                return e
        raise KeyError(lam)


def replay_states(prob_stream, lam: float, n_states: int, start: int = 0) -> list[int]:
    """Run the state-transition rule over a recorded probability stream."""
    prev = start
    out = []
    for probs in prob_stream:
        prev = determine_state(probs, prev, lam, n_states)
        out.append(prev)
    return out


def tune_lambda(prob_stream, grid, n_states: int) -> LambdaSweepResult:
    """Score thresholds on a recorded stream and recommend one.

    Oscillation counts the steps where the determination sits above the
    stream's instantaneous argmax: a premature, ratcheted-in transition
    keeps disagreeing with the evidence, which is how threshold-too-low
    shows up once regressions are masked out.  Skips count the states
    bypassed by accepted transitions.  Recommended is the smallest lambda
    with neither, or None.
    """
    prob_stream = [np.asarray(p, dtype=float) for p in prob_stream]
    if not prob_stream:
        raise ValueError("probability stream is empty")
    grid = sorted(grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(not 0 <= g < 0.5 for g in grid):
        raise ValueError("grid values must be in [0, 0.5)")

    raw_argmax = [int(p.argmax()) for p in prob_stream]
    entries = []
    for lam in grid:
        seq = replay_states(prob_stream, lam, n_states)
        transitions = []
        prev = 0
        for s in seq:
            if s != prev:
                transitions.append((prev, s))
                prev = s
        oscillation = sum(1 for s, a in zip(seq, raw_argmax) if s > a)
        skipped = sum(b - a - 1 for a, b in transitions)
        entries.append(LambdaSweepEntry(
            lam=lam,
            sequence=tuple(seq),
            transitions=tuple(transitions),
            oscillation_count=oscillation,
            skipped_count=skipped,
        ))
    recommended = None
    for e in entries:
        if e.oscillation_count == 0 and e.skipped_count == 0:
            recommended = e.lam
            break
    return LambdaSweepResult(entries=tuple(entries), recommended=recommended)


def export_lambda_sweep_csv(result: LambdaSweepResult, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "oscillation_count", "skipped_count", "n_transitions"])
        for e in result.entries:
            writer.writerow([e.lam, e.oscillation_count, e.skipped_count, len(e.transitions)])
