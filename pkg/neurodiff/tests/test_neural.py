import numpy as np
import pytest

from neurodiff.error_handler import ConfigError, ShapeError, TrainingDivergedError
from neurodiff.neural import (
    AdamState,
    MlpArch,
    TrainConfig,
    adam_step,
    backward,
    bce_loss,
    evaluate_accuracy,
    forward,
    init_model,
    numerical_gradient,
    predict,
    softmax_ce_loss,
    train
)
from neurodiff.utils.seeding import philox


def _toy_batch(seed, batch=6, input_dim=5, t=3):
    rng = philox(seed)
    features = rng.normal(size=(batch, input_dim))
    targets = np.eye(t)[rng.integers(0, t, size=batch)]
    return features, targets


def _relative_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


def test_presets():
    assert MlpArch.preset('proposed', 4).layer_shapes == [(64, 128), (128, 1024), (1024, 4)]
    assert MlpArch.preset('baksi', 4).hidden_dims == (128, 1024, 1024)
    with pytest.raises(ConfigError):
        MlpArch.preset('resnet', 4)
    with pytest.raises(ConfigError):
        MlpArch(64, (0,), 4)


def test_init_is_seeded_and_bounded():
    arch = MlpArch(64, (16, 8), 4)
    a, b = init_model(arch, seed=1), init_model(arch, seed=1)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.weights[0], init_model(arch, seed=2).weights[0])
    assert np.abs(a.weights[0]).max() <= np.sqrt(6 / 64) + 1e-6
    assert np.abs(a.weights[-1]).max() <= np.sqrt(3 / 8) + 1e-6
    assert all(not b.any() for b in a.biases)
    assert a.dtype == np.float32


def test_forward_shapes_and_range():
    model = init_model(MlpArch(64, (16,), 4), seed=0)
    out = forward(model, np.zeros((7, 64)))
    assert out.shape == (7, 4)
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ShapeError):
        forward(model, np.zeros((7, 63)))


@pytest.mark.parametrize('loss', ['bce', 'softmax'])
def test_forward_stays_inside_unit_interval_for_large_logits(loss):
    model = init_model(MlpArch(64, (16,), 4), seed=0, loss=loss)
    for w in model.weights:
        w[:] = 5.0
    model.weights[-1][:, 0] = -5.0
    out = forward(model, np.ones((3, 64)) * 10)
    assert out.dtype == np.float32
    assert np.all((out > 0) & (out < 1))


def test_predict_ties_go_to_lowest_index():
    model = init_model(MlpArch(4, (3,), 4), seed=0)
    for w in model.weights:
        w[:] = 0
    assert predict(model, np.ones((5, 4))).tolist() == [0] * 5


def test_losses():
    y = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert bce_loss(y, y) < 1e-6
    assert bce_loss(np.full_like(y, 0.5), y) == pytest.approx(np.log(2))
    assert softmax_ce_loss(np.full_like(y, 0.5), y) == pytest.approx(np.log(2))
    with pytest.raises(ShapeError):
        bce_loss(np.zeros((2, 3)), y)


@pytest.mark.parametrize('loss', ['bce', 'softmax'])
def test_gradients_match_finite_differences(loss):
    failures = 0
    probes = 0
    for seed in range(10):
        model = init_model(MlpArch(5, (4, 3), 3), seed=seed, dtype=np.float64, loss=loss)
        rng = philox(seed, 99)
        for b in model.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        features, targets = _toy_batch(seed)
        analytic = backward(model, features, targets)
        numeric = numerical_gradient(model, features, targets)
        for a, n in zip(analytic, numeric):
            probes += a.size
            mask = np.abs(a) + np.abs(n) > 1e-5
            if mask.any() and _relative_error(a[mask], n[mask]) >= 1e-4:
                failures += 1
    assert probes >= 100
    assert failures == 0


@pytest.mark.parametrize('loss', ['bce', 'softmax'])
def test_gradient_vanishes_when_targets_equal_outputs(loss):
    model = init_model(MlpArch(5, (4, 3), 3), seed=5, dtype=np.float64, loss=loss)
    features, _ = _toy_batch(5)
    targets = forward(model, features)
    for grad in backward(model, features, targets):
        assert np.allclose(grad, 0.0, atol=1e-12)


@pytest.mark.parametrize('loss', ['bce', 'softmax'])
def test_gradient_of_duplicated_batch_matches_single_batch(loss):
    model = init_model(MlpArch(5, (4, 3), 3), seed=6, dtype=np.float64, loss=loss)
    features, targets = _toy_batch(6)
    single = backward(model, features, targets)
    doubled = backward(model, np.vstack([features, features]), np.vstack([targets, targets]))
    for a, b in zip(single, doubled):
        assert np.allclose(a, b, atol=1e-12)


def test_adam_step_with_zero_gradient_keeps_parameters():
    model = init_model(MlpArch(5, (4,), 3), seed=7, dtype=np.float64)
    before = [p.copy() for p in model.parameters()]
    zeros = [np.zeros_like(p) for p in model.parameters()]
    adam_step(model, zeros, AdamState.fresh(model), lr=0.01)
    assert all(np.array_equal(old, new) for old, new in zip(before, model.parameters()))


def test_adam_step_moves_against_gradient():
    model = init_model(MlpArch(5, (4,), 3), seed=3, dtype=np.float64)
    features, targets = _toy_batch(3)
    before = [p.copy() for p in model.parameters()]
    grads = backward(model, features, targets)
    state = AdamState.fresh(model)
    adam_step(model, grads, state, lr=0.01)
    assert state.step == 1
    for old, new, g in zip(before, model.parameters(), grads):
        moved = np.abs(g) > 1e-4
        # the first bias-corrected Adam step is lr * sign(g)
        assert np.allclose((old - new)[moved], 0.01 * np.sign(g[moved]), rtol=1e-3)


def test_adam_rejects_mismatched_gradients():
    model = init_model(MlpArch(5, (4,), 3), seed=3)
    with pytest.raises(ShapeError):
        adam_step(model, [np.zeros(1)], AdamState.fresh(model), lr=0.01)


def _separable_data(seed, n=600):
    rng = philox(seed)
    labels = rng.integers(0, 4, size=n)
    features = rng.integers(0, 2, size=(n, 64)).astype(np.float32)
    features[:, :4] = np.eye(4)[labels]
    return features, np.eye(4, dtype=np.float32)[labels], labels


def test_training_learns_separable_problem():
    x, y, labels = _separable_data(0)
    model = init_model(MlpArch(64, (32,), 4), seed=0)
    config = TrainConfig(epochs=10, batch_size=50, learning_rate=0.01, seed=1)
    model, report = train(model, (x[:400], y[:400]), (x[400:], y[400:]), config)
    assert len(report.val_accuracy) == 10
    assert report.final_accuracy == report.val_accuracy[-1]
    assert report.final_accuracy > 0.95
    assert report.min_val_accuracy <= report.max_val_accuracy
    assert evaluate_accuracy(model, x[400:], labels[400:]) == report.final_accuracy


def test_training_is_deterministic():
    x, y, _ = _separable_data(1, n=300)
    config = TrainConfig(epochs=2, batch_size=32, seed=4)
    arch = MlpArch(64, (16,), 4)
    _, first = train(init_model(arch, seed=2), (x[:200], y[:200]), (x[200:], y[200:]), config)
    _, second = train(init_model(arch, seed=2), (x[:200], y[:200]), (x[200:], y[200:]), config)
    assert first.train_loss == second.train_loss
    assert first.val_accuracy == second.val_accuracy


def test_training_reports_divergence():
    x, y, _ = _separable_data(2, n=100)
    model = init_model(MlpArch(64, (8,), 4), seed=0)
    model.weights[0][0, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        train(model, (x, y), (x, y), TrainConfig(epochs=1, batch_size=10))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.5)
    assert TrainConfig().batch_size == 100
