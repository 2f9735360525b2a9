import json

import numpy as np
import pytest

from pourlearn.catalog import default_catalog
from pourlearn.expert import ExpertPolicy
from pourlearn.harness import generate_demos
from pourlearn.perception import (
    HierarchyModel,
    LabeledDataset,
    NoiseConfig,
    Observation,
    TrainConfig,
    TrainingDiverged,
    classification_accuracy,
    export_loss_curves_csv,
    observe,
    train,
)
from pourlearn.sim import ScenarioConfig, SimState, init_scenario


def mid_pour_state():
    return SimState(t=50, source_ml=100.0, target_ml=40.0, spilled_ml=0.0,
                    tilt_deg=35.0, flow_ml_per_s=9.0, injected_ml=0.0)


# -- observe ---------------------------------------------------------------

def test_zero_noise_equals_ground_truth():
    cfg = ScenarioConfig()
    obs = observe(mid_pour_state(), cfg, NoiseConfig.zero(), np.random.default_rng(0))
    assert obs.fill_fraction_noisy == pytest.approx(0.40)
    assert obs.tilt_noisy == pytest.approx(35.0)
    assert obs.flow_noisy == pytest.approx(9.0)
    assert obs.has_flowed_noisy == 1.0


def test_has_flowed_reads_source_depletion():
    cfg = ScenarioConfig()
    fresh = init_scenario(cfg)
    obs = observe(fresh, cfg, NoiseConfig.zero(), np.random.default_rng(0))
    assert obs.has_flowed_noisy == 0.0


def test_noise_std_statistics():
    cfg = ScenarioConfig()
    noise = NoiseConfig(sigma_fill=0.02, sigma_tilt=0.0, sigma_flow=0.0, flip_prob=0.0)
    rng = np.random.default_rng(123)
    state = mid_pour_state()
    fills = np.array([
        observe(state, cfg, noise, rng).fill_fraction_noisy for _ in range(10_000)
    ])
    assert 0.017 <= fills.std() <= 0.023
    assert fills.mean() == pytest.approx(0.40, abs=0.002)


def test_indicator_flip_rate():
    cfg = ScenarioConfig()
    noise = NoiseConfig(flip_prob=0.25)
    rng = np.random.default_rng(5)
    state = mid_pour_state()
    vals = [observe(state, cfg, noise, rng).has_flowed_noisy for _ in range(4000)]
    flipped = sum(1 for v in vals if v == 0.0)
    assert 0.2 < flipped / len(vals) < 0.3


def test_fixed_seed_identical_stream():
    cfg = ScenarioConfig()
    noise = NoiseConfig()
    a = [observe(mid_pour_state(), cfg, noise, np.random.default_rng(9)) for _ in range(1)]
    b = [observe(mid_pour_state(), cfg, noise, np.random.default_rng(9)) for _ in range(1)]
    assert a == b


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(sigma_fill=-0.1)
    with pytest.raises(ValueError):
        NoiseConfig(flip_prob=1.5)


# -- datasets ----------------------------------------------------------------

def small_pool(noise=None, scenes=(1, 2, 4, 8), trials=2, seed=0):
    catalog = default_catalog()
    rng = np.random.default_rng(seed)
    return generate_demos(
        catalog, list(scenes), trials, ExpertPolicy(),
        noise or NoiseConfig.zero(), rng,
    )


def test_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(
            features=np.zeros((0, 4)), phase_labels=np.zeros(0, int),
            state_labels=np.zeros(0, int), omega_labels=np.zeros(0), n_states=6,
        )
    with pytest.raises(ValueError):
        LabeledDataset(
            features=np.zeros((2, 4)), phase_labels=np.array([0, 9]),
            state_labels=np.zeros(2, int), omega_labels=np.zeros(2), n_states=6,
        )


def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert cfg.learning_rate == pytest.approx(1e-4)
    assert cfg.batch_size == 20
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


# -- training ------------------------------------------------------------------

SMALL_EPOCHS = 240


@pytest.fixture(scope="module")
def trained_small():
    # Zero-noise pool: long training drives the boundaries essentially to
    # the label geometry, which the separability bound below relies on.
    pool = small_pool()
    o1, o2, o3 = pool.datasets()
    model = train(o1, o2, o3, TrainConfig(epochs=SMALL_EPOCHS), np.random.default_rng(1))
    return pool, model


def test_separable_data_high_phase_accuracy(trained_small):
    pool, model = trained_small
    o1, _, _ = pool.datasets()
    assert classification_accuracy(model, o1, "phase") >= 0.99


def test_training_loss_decreases(trained_small):
    _, model = trained_small
    for stage in ("phase", "state", "action"):
        losses = model.loss_history[stage]
        assert losses[-1] <= losses[0]
        assert all(np.isfinite(losses))


def test_predictions_normalized_and_finite(trained_small):
    _, model = trained_small
    rng = np.random.default_rng(3)
    for _ in range(20):
        obs = Observation(*rng.normal(size=4))
        pp = model.predict_phase(obs)
        ps = model.predict_state(obs)
        assert pp.shape == (4,) and ps.shape == (model.n_states + 2,)
        assert pp.sum() == pytest.approx(1.0, abs=1e-6)
        assert ps.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.isfinite(model.predict_action(obs))


def test_zero_noise_trivial_inputs(trained_small):
    pool, model = trained_small
    cfg = default_catalog().get(1).config
    empty = observe(init_scenario(cfg), cfg, NoiseConfig.zero(), np.random.default_rng(0))
    assert model.predict_phase(empty).argmax() == 0
    done = SimState(t=300, source_ml=cfg.source_initial_ml - 95, target_ml=93.0,
                    spilled_ml=0.0, tilt_deg=8.0, flow_ml_per_s=0.0, injected_ml=0.0)
    obs = observe(done, cfg, NoiseConfig.zero(), np.random.default_rng(0))
    assert model.predict_phase(obs).argmax() == 3


def test_untrained_model_rejects():
    model = HierarchyModel(n_states=6, hidden_width=8)
    with pytest.raises(RuntimeError):
        model.predict_phase(Observation(0.0, 0.0, 0.0, 0.0))


def test_shared_layer_inheritance(monkeypatch):
    # Capture the state net's first layer the moment its training stage
    # begins: it must equal the trained phase net's first layer exactly.
    import pourlearn.perception as perception

    captured = {}
    real_stage = perception._train_stage

    def spy(net, x, labels, loss_and_grad, cfg, rng, stage):
        if stage == "state" and "w" not in captured:
            captured["w"] = net.layers[0].w.copy()
            captured["b"] = net.layers[0].b.copy()
        return real_stage(net, x, labels, loss_and_grad, cfg, rng, stage)

    monkeypatch.setattr(perception, "_train_stage", spy)
    pool = small_pool(scenes=(1, 2), trials=1)
    o1, o2, o3 = pool.datasets()
    model = perception.train(o1, o2, o3, TrainConfig(epochs=4), np.random.default_rng(2))
    assert np.array_equal(captured["w"], model.phase_net.layers[0].w)
    assert np.array_equal(captured["b"], model.phase_net.layers[0].b)


def test_embedding_identity(trained_small):
    # f(.) identity: the standalone embedding equals the state net's hidden
    # layer output bit for bit.
    pool, model = trained_small
    _, _, o3 = pool.datasets()
    feats = o3.features[:50]
    emb = model.embed(feats)
    direct = np.tanh(model.normalize(feats) @ model.state_net.layers[0].w
                     + model.state_net.layers[0].b)
    assert np.array_equal(emb, direct)


def test_training_reproducible():
    pool = small_pool()
    o1, o2, o3 = pool.datasets()
    m1 = train(o1, o2, o3, TrainConfig(epochs=5), np.random.default_rng(7))
    m2 = train(o1, o2, o3, TrainConfig(epochs=5), np.random.default_rng(7))
    for a, b in zip(m1.state_net.params(), m2.state_net.params()):
        assert np.array_equal(a, b)
    for a, b in zip(m1.action_head.params(), m2.action_head.params()):
        assert np.array_equal(a, b)


def test_divergence_aborts_with_stage():
    # Adam's normalized updates shrug off merely-large learning rates; an
    # absurd one overflows the weights to non-finite within a step or two.
    pool = small_pool(scenes=(1,), trials=1)
    o1, o2, o3 = pool.datasets()
    with np.errstate(invalid="ignore", over="ignore"), pytest.raises(TrainingDiverged) as err:
        train(o1, o2, o3, TrainConfig(learning_rate=1e308, epochs=3), np.random.default_rng(0))
    assert err.value.epoch >= 0


def test_checkpoint_roundtrip(tmp_path, trained_small):
    _, model = trained_small
    path = tmp_path / "model.json"
    model.save(path)
    back = HierarchyModel.load(path)
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(5, 4))
    assert np.allclose(model.predict_state(feats), back.predict_state(feats))
    assert np.allclose(model.predict_action(feats), back.predict_action(feats))
    doc = json.loads(path.read_text())
    assert doc["version"] == 1
    assert doc["features"] == list(("fill_fraction", "tilt_deg", "flow_ml_per_s", "has_flowed"))


def test_checkpoint_rejects_unknown_version(tmp_path, trained_small):
    _, model = trained_small
    doc = model.to_dict()
    doc["version"] = 99
    with pytest.raises(ValueError):
        HierarchyModel.from_dict(doc)


def test_loss_curves_csv(tmp_path, trained_small):
    _, model = trained_small
    path = tmp_path / "loss.csv"
    export_loss_curves_csv(model, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "stage,epoch,loss"
    assert len(lines) == 1 + 3 * SMALL_EPOCHS
