"""Observations and the three trainable task hierarchies.

The simulator state is flattened into a 4-feature observation (fill
fraction, tilt, flow rate, has-flowed indicator), optionally corrupted by
Gaussian noise and indicator flips.  On top of those features sit three
small networks:

    phase head    4-way classifier over the task phases
    state head    (N+2)-way classifier over the fill states
    action head   scalar regressor for the wrist angular velocity

The phase and state networks share their first hidden layer: the state
network is initialized from the trained phase network's weights, and after
the state network is trained that layer is frozen as the embedding that
feeds the action head.  Training runs staged in that order, each stage with
Adam on mini-batches (defaults: learning rate 1e-4, batch 20).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nets import (
    Adam,
    Mlp,
    classification_loss_and_grad,
    cross_entropy,
    flat_grads,
    mse,
    regression_loss_and_grad,
    softmax,
)
from .sim import ScenarioConfig, SimState

N_FEATURES = 4
FEATURE_NAMES = ("fill_fraction", "tilt_deg", "flow_ml_per_s", "has_flowed")
N_PHASES = 4
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Observation:
    fill_fraction_noisy: float
    tilt_noisy: float
    flow_noisy: float
    has_flowed_noisy: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.fill_fraction_noisy,
            self.tilt_noisy,
            self.flow_noisy,
            self.has_flowed_noisy,
        ])


@dataclass(frozen=True)
class NoiseConfig:
    """Observation corruption; the defaults are the nominal test condition.

    The has-flowed indicator stays clean by default: it stands in for
    visual evidence (a visible stream, the arm's pose) that is essentially
    unmistakable, and the phase hierarchy must be able to anchor on it to
    generalize to containers that start non-empty.
    """

    sigma_fill: float = 0.02
    sigma_tilt: float = 0.8
    sigma_flow: float = 0.4
    flip_prob: float = 0.0
    fill_bias: float = 0.0  # used to corrupt scenes in failure-prediction studies
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_fill, self.sigma_tilt, self.sigma_flow) < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(sigma_fill=0.0, sigma_tilt=0.0, sigma_flow=0.0, flip_prob=0.0)


def observe(
    state: SimState,
    cfg: ScenarioConfig,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> Observation:
    """Noisy feature vector for one frame.

    The has-flowed indicator is read off the source container (anything
    missing from it must have flowed) and flipped with ``flip_prob``.
    """
    fill = state.target_ml / cfg.target_capacity_ml
    has_flowed = 1.0 if state.source_ml < cfg.source_initial_ml else 0.0
    # Zero sigmas draw exact zeros, so the rng stream is consumed identically
    # under every noise configuration.
    return Observation(
        fill_fraction_noisy=fill + noise.fill_bias + rng.normal(0.0, noise.sigma_fill),
        tilt_noisy=state.tilt_deg + rng.normal(0.0, noise.sigma_tilt),
        flow_noisy=state.flow_ml_per_s + rng.normal(0.0, noise.sigma_flow),
        has_flowed_noisy=1.0 - has_flowed if rng.random() < noise.flip_prob else has_flowed,
    )


@dataclass
class LabeledDataset:
    """One training view over the demonstration pool.

    ``role`` names which head consumes it (phase / state / action); the
    label column is selected accordingly.
    """

    features: np.ndarray          # (n, 4) raw observation rows
    phase_labels: np.ndarray      # (n,) int
    state_labels: np.ndarray      # (n,) int
    omega_labels: np.ndarray      # (n,) float deg/s
    n_states: int
    role: str = "phase"

    def __post_init__(self):
        n = self.features.shape[0]
        if n == 0:
            raise ValueError("dataset is empty")
        if self.features.shape != (n, N_FEATURES):
            raise ValueError(f"features must be (n, {N_FEATURES})")
        if not (len(self.phase_labels) == len(self.state_labels) == len(self.omega_labels) == n):
            raise ValueError("label columns must match feature rows")
        if self.phase_labels.min() < 0 or self.phase_labels.max() >= N_PHASES:
            raise ValueError("phase labels out of range")
        if self.state_labels.min() < 0 or self.state_labels.max() > self.n_states + 1:
            raise ValueError("state labels out of range")
        if not np.all(np.isfinite(self.omega_labels)):
            raise ValueError("omega labels must be finite")

    def __len__(self) -> int:
        return self.features.shape[0]

    def with_role(self, role: str) -> "LabeledDataset":
        return LabeledDataset(
            self.features, self.phase_labels, self.state_labels,
            self.omega_labels, self.n_states, role,
        )

    def labels_for_role(self) -> np.ndarray:
        if self.role == "phase":
            return self.phase_labels
        if self.role == "state":
            return self.state_labels
        return self.omega_labels


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 20
    epochs: int = 40
    hidden_width: int = 32

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class TrainingDiverged(RuntimeError):
    def __init__(self, stage: str, epoch: int):
        super().__init__(f"non-finite loss while training {stage} at epoch {epoch}")
        self.stage = stage
        self.epoch = epoch


@dataclass
class HierarchyModel:
    """The trained stack: shared embedding plus three heads."""

    n_states: int
    hidden_width: int
    feat_mean: np.ndarray | None = None
    feat_std: np.ndarray | None = None
    phase_net: Mlp | None = None            # features -> 4 phase scores
    state_net: Mlp | None = None            # features -> N+2 state scores
    action_head: Mlp | None = None          # embedding -> omega (normalized)
    omega_scale: float = 1.0
    loss_history: dict = field(default_factory=dict)
    trained: bool = False

    # -- feature plumbing ------------------------------------------------

    def _check_trained(self):
        if not self.trained:
            raise RuntimeError("model has not been trained")

    def normalize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.feat_mean) / self.feat_std

    def _rows(self, obs) -> np.ndarray:
        if isinstance(obs, Observation):
            feats = obs.as_array().reshape(1, -1)
        else:
            feats = np.asarray(obs, dtype=float)
            if feats.ndim == 1:
                feats = feats.reshape(1, -1)
        if not np.all(np.isfinite(feats)):
            raise ValueError("observation features must be finite")
        return self.normalize(feats)

    def embed(self, obs) -> np.ndarray:
        """Shared embedding f(.): the state network's first hidden layer."""
        self._check_trained()
        return self.state_net.forward(self._rows(obs), upto=1)

    # -- heads -----------------------------------------------------------

    def predict_phase(self, obs) -> np.ndarray:
        self._check_trained()
        probs = softmax(self.phase_net.forward(self._rows(obs)))
        return probs[0] if isinstance(obs, Observation) or np.asarray(obs).ndim == 1 else probs

    def predict_state(self, obs) -> np.ndarray:
        self._check_trained()
        probs = softmax(self.state_net.forward(self._rows(obs)))
        return probs[0] if isinstance(obs, Observation) or np.asarray(obs).ndim == 1 else probs

    def predict_action(self, obs) -> float | np.ndarray:
        self._check_trained()
        out = self.action_head.forward(self.embed(obs)).ravel() * self.omega_scale
        return float(out[0]) if isinstance(obs, Observation) or np.asarray(obs).ndim == 1 else out

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        self._check_trained()
        def dump(net: Mlp):
            return [
                {"w": l.w.tolist(), "b": l.b.tolist(), "tanh": l.tanh}
                for l in net.layers
            ]
        return {
            "version": CHECKPOINT_VERSION,
            "n_states": self.n_states,
            "hidden_width": self.hidden_width,
            "features": list(FEATURE_NAMES),
            "feat_mean": self.feat_mean.tolist(),
            "feat_std": self.feat_std.tolist(),
            "omega_scale": self.omega_scale,
            "phase_net": dump(self.phase_net),
            "state_net": dump(self.state_net),
            "action_head": dump(self.action_head),
            "loss_history": self.loss_history,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, doc: dict) -> "HierarchyModel":
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        model = cls(n_states=doc["n_states"], hidden_width=doc["hidden_width"])
        rng = np.random.default_rng(0)

        def load(layer_docs):
            sizes = [len(layer_docs[0]["w"])] + [len(d["w"][0]) for d in layer_docs]
            net = Mlp(sizes, rng)
            for layer, d in zip(net.layers, layer_docs):
                layer.w = np.array(d["w"])
                layer.b = np.array(d["b"])
                layer.tanh = d["tanh"]
            return net

        model.phase_net = load(doc["phase_net"])
        model.state_net = load(doc["state_net"])
        model.action_head = load(doc["action_head"])
        model.feat_mean = np.array(doc["feat_mean"])
        model.feat_std = np.array(doc["feat_std"])
        model.omega_scale = doc["omega_scale"]
        model.loss_history = doc.get("loss_history", {})
        model.trained = True
        return model

    @classmethod
    def load(cls, path) -> "HierarchyModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _train_stage(net, x, labels, loss_and_grad, cfg, rng, stage):
    opt = Adam(net.params(), cfg.learning_rate)
    n = x.shape[0]
    epoch_losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(net, x[idx], labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(stage, epoch)
            opt.update(flat_grads(grads))
            total += loss
            batches += 1
        epoch_losses.append(total / batches)
    return epoch_losses


def train(
    phase_data: LabeledDataset,
    state_data: LabeledDataset,
    action_data: LabeledDataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> HierarchyModel:
    """Train the full stack, staged.

    Order matters: the phase net trains first; the state net starts from the
    phase net's shared-layer weights; the embedding is then frozen out of
    the state net, the action features are mapped through it once, and only
    the action head trains on those.
    """
    n_states = state_data.n_states
    model = HierarchyModel(n_states=n_states, hidden_width=cfg.hidden_width)
    feats = phase_data.features
    model.feat_mean = feats.mean(axis=0)
    model.feat_std = np.maximum(feats.std(axis=0), 1e-8)

    h = cfg.hidden_width
    model.phase_net = Mlp([N_FEATURES, h, N_PHASES], rng)
    model.state_net = Mlp([N_FEATURES, h, h, n_states + 2], rng)
    model.action_head = Mlp([h, h, 1], rng)

    x1 = (phase_data.features - model.feat_mean) / model.feat_std
    history_f1 = _train_stage(
        model.phase_net, x1, phase_data.phase_labels,
        classification_loss_and_grad, cfg, rng, "phase",
    )

    # Warm-start the state net's shared layer from the trained phase net.
    model.state_net.layers[0].copy_from(model.phase_net.layers[0])
    x2 = (state_data.features - model.feat_mean) / model.feat_std
    history_f2 = _train_stage(
        model.state_net, x2, state_data.state_labels,
        classification_loss_and_grad, cfg, rng, "state",
    )

    # Embed the action dataset once through the frozen shared layer.
    x3 = (action_data.features - model.feat_mean) / model.feat_std
    embedded = model.state_net.forward(x3, upto=1)
    model.omega_scale = max(float(np.abs(action_data.omega_labels).max()), 1e-8)
    targets = action_data.omega_labels / model.omega_scale
    history_f3 = _train_stage(
        model.action_head, embedded, targets,
        regression_loss_and_grad, cfg, rng, "action",
    )

    model.loss_history = {"phase": history_f1, "state": history_f2, "action": history_f3}
    model.trained = True
    return model


def export_loss_curves_csv(model: HierarchyModel, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "loss"])
        for stage, losses in model.loss_history.items():
            for epoch, loss in enumerate(losses):
                writer.writerow([stage, epoch, f"{loss:.8f}"])


def classification_accuracy(model: HierarchyModel, data: LabeledDataset, head: str) -> float:
    """Fraction of frames whose predicted class matches the label."""
    if head == "phase":
        probs = model.predict_phase(data.features)
        labels = data.phase_labels
    else:
        probs = model.predict_state(data.features)
        labels = data.state_labels
    return float((probs.argmax(axis=1) == labels).mean())


def action_mse(model: HierarchyModel, data: LabeledDataset) -> float:
    """Held-out MSE of the action head in normalized velocity units."""
    pred = model.predict_action(data.features) / model.omega_scale
    return mse(pred, data.omega_labels / model.omega_scale)
