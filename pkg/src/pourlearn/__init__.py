"""Pouring imitation: simulator, hierarchical perception, safe control, explanations."""

from .catalog import CatalogEntry, ScenarioCatalog, default_catalog
from .controller import (
    ControllerConfig,
    ControllerState,
    SafetyEnvelope,
    StepRecord,
    candidate_phase,
    clamp_angle,
    clamp_velocity,
    control_step,
    determine_phase,
    determine_state,
    extract_constant_speeds,
    extract_envelope,
    run_trial,
)
from .expert import ExpertPolicy
from .graph import (
    ExpectedGraph,
    FailureVerdict,
    LogicalGraphTrace,
    build_graph,
    canonical_graph,
    manipulate_goal,
    predict_failure,
    trace_failure,
    tune_lambda,
)
from .harness import (
    AdaptabilityCase,
    Demo,
    DemoFrame,
    DemoPool,
    ExperimentReport,
    TrainedStack,
    build_stack,
    generate_demos,
    run_experiment_adaptability,
    run_experiment_failure_prediction,
    run_experiment_manipulability,
    run_experiment_performance,
)
from .nets import cross_entropy, mse, softmax
from .perception import (
    HierarchyModel,
    LabeledDataset,
    NoiseConfig,
    Observation,
    TrainConfig,
    observe,
    train,
)
from .sim import (
    PourEvent,
    ScenarioConfig,
    SimState,
    TrialOutcome,
    ground_truth_labels,
    init_scenario,
    inject_event,
    judge_trial,
    step,
)

__version__ = "0.1.0"
