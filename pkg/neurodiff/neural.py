"""From-scratch multilayer perceptron trained with Adam.

Hidden layers use ReLU. The default output layer is a per-component sigmoid
trained with binary cross-entropy against one-hot targets; `loss="softmax"`
switches to softmax with categorical cross-entropy. Predictions are the argmax
of the outputs, ties going to the lowest class index.

Weight initialisation (seeded, Philox stream per layer):
    hidden layers  U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))
    output layer   U(-sqrt(3 / fan_in), +sqrt(3 / fan_in))
    biases         0
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import expit, softmax

from .config import ADAM_DEFAULTS, MODEL_PRESETS, TRAINING_DEFAULTS
from .error_handler import ConfigError, ErrorCode, ShapeError, TrainingDivergedError
from .utils.seeding import philox

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7
EVAL_CHUNK = 4096


@dataclass(frozen=True)
class MlpArch:
    input_dim: int = 64
    hidden_dims: Tuple[int, ...] = MODEL_PRESETS['proposed']
    output_dim: int = 4

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ConfigError(f"All layer widths must be >= 1, got {dims}", ErrorCode.INVALID_CONFIG)
        object.__setattr__(self, 'hidden_dims', tuple(int(d) for d in self.hidden_dims))

    @classmethod
    def preset(cls, name: str, t: int, input_dim: int = 64) -> 'MlpArch':
        try:
            return cls(input_dim, MODEL_PRESETS[name], t)
        except KeyError:
            raise ConfigError(
                f"Unknown model preset '{name}', expected one of {sorted(MODEL_PRESETS)}",
                ErrorCode.INVALID_CONFIG
            ) from None

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        d = self.dims
        return [(d[i], d[i + 1]) for i in range(len(d) - 1)]


@dataclass
class MlpModel:
    arch: MlpArch
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    init_seed: int
    loss: str = 'bce'

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self, dtype=None) -> 'MlpModel':
        dtype = dtype or self.dtype
        return MlpModel(
            arch=self.arch,
            weights=[w.astype(dtype, copy=True) for w in self.weights],
            biases=[b.astype(dtype, copy=True) for b in self.biases],
            init_seed=self.init_seed,
            loss=self.loss
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameters())


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = ADAM_DEFAULTS['beta1']
    beta2: float = ADAM_DEFAULTS['beta2']
    eps: float = ADAM_DEFAULTS['eps']

    @classmethod
    def fresh(cls, model: MlpModel) -> 'AdamState':
        params = model.parameters()
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


class TrainConfig(BaseModel):
    learning_rate: float = Field(TRAINING_DEFAULTS['learning_rate'], gt=0)
    epochs: int = Field(TRAINING_DEFAULTS['epochs'], gt=0)
    batch_size: int = Field(TRAINING_DEFAULTS['batch_size'], gt=0)
    val_fraction: float = Field(TRAINING_DEFAULTS['val_fraction'], gt=0, lt=1)
    seed: int = Field(0, ge=0)
    loss: Literal['bce', 'softmax'] = TRAINING_DEFAULTS['loss']
    dtype: Literal['float32', 'float64'] = TRAINING_DEFAULTS['dtype']


@dataclass
class TrainReport:
    train_loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    final_accuracy: float = 0.0
    wall_time: float = 0.0
    failed: bool = False
    failure: Optional[Dict[str, Any]] = None

    @property
    def min_val_accuracy(self) -> float:
        return min(self.val_accuracy) if self.val_accuracy else 0.0

    @property
    def max_val_accuracy(self) -> float:
        return max(self.val_accuracy) if self.val_accuracy else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'train_loss': self.train_loss,
            'train_accuracy': self.train_accuracy,
            'val_accuracy': self.val_accuracy,
            'final_accuracy': self.final_accuracy,
            'wall_time': self.wall_time,
            'failed': self.failed,
            'failure': self.failure
        }


def init_model(arch: MlpArch, seed: int, dtype=np.float32, loss: str = 'bce') -> MlpModel:
    weights, biases = [], []
    shapes = arch.layer_shapes
    for layer, (fan_in, fan_out) in enumerate(shapes):
        scale = 3.0 if layer == len(shapes) - 1 else 6.0
        limit = np.sqrt(scale / fan_in)
        rng = philox(seed, layer)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(arch=arch, weights=weights, biases=biases, init_seed=seed, loss=loss)


def _check_features(model: MlpModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != model.arch.input_dim:
        raise ShapeError(
            f"Expected features of shape (B, {model.arch.input_dim}), got {features.shape}",
            ErrorCode.SHAPE_MISMATCH
        )
    return features.astype(model.dtype, copy=False)


def _output(model: MlpModel, logits: np.ndarray) -> np.ndarray:
    if model.loss == 'softmax':
        return softmax(logits, axis=1)
    return expit(logits)


def _forward_cache(model: MlpModel, features: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Layer inputs (post-activation) and the output-layer logits"""
    activations = [features]
    a = features
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i == last:
            return activations, z
        a = np.maximum(z, 0)
        activations.append(a)
    raise ShapeError("Model has no layers", ErrorCode.INVALID_ARCH)


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Batch of t outputs per input row, each strictly inside (0, 1)"""
    features = _check_features(model, features)
    _, logits = _forward_cache(model, features)
    out = _output(model, logits)
    # float32 expit reaches exactly 1.0 for logits above ~17
    return np.clip(out, PROB_EPS, 1.0 - PROB_EPS).astype(model.dtype, copy=False)


def predict(model: MlpModel, features: np.ndarray) -> np.ndarray:
    features = _check_features(model, features)
    preds = [np.argmax(forward(model, features[s:s + EVAL_CHUNK]), axis=1)
             for s in range(0, features.shape[0], EVAL_CHUNK)]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def bce_loss(predictions: np.ndarray, targets: np.ndarray, eps: float = PROB_EPS) -> float:
    """Mean over batch and components of the binary cross-entropy"""
    p = np.clip(np.asarray(predictions, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"Prediction shape {p.shape} != target shape {y.shape}", ErrorCode.SHAPE_MISMATCH)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def softmax_ce_loss(predictions: np.ndarray, targets: np.ndarray, eps: float = PROB_EPS) -> float:
    """Mean over batch of the categorical cross-entropy"""
    p = np.clip(np.asarray(predictions, dtype=np.float64), eps, 1.0)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"Prediction shape {p.shape} != target shape {y.shape}", ErrorCode.SHAPE_MISMATCH)
    return float(-np.mean(np.sum(y * np.log(p), axis=1)))


def loss_value(model: MlpModel, features: np.ndarray, targets: np.ndarray) -> float:
    outputs = forward(model, features)
    if model.loss == 'softmax':
        return softmax_ce_loss(outputs, targets)
    return bce_loss(outputs, targets)


def _loss_and_gradients(model: MlpModel, features: np.ndarray,
                        targets: np.ndarray) -> Tuple[float, np.ndarray, List[np.ndarray]]:
    features = _check_features(model, features)
    targets = np.asarray(targets, dtype=model.dtype)
    activations, logits = _forward_cache(model, features)
    outputs = _output(model, logits)
    batch = features.shape[0]

    if model.loss == 'softmax':
        loss = softmax_ce_loss(outputs, targets)
        delta = (outputs - targets) / batch
    else:
        loss = bce_loss(outputs, targets)
        delta = (outputs - targets) / (batch * outputs.shape[1])

    grads_w: List[np.ndarray] = [None] * len(model.weights)
    grads_b: List[np.ndarray] = [None] * len(model.weights)
    for i in reversed(range(len(model.weights))):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (activations[i] > 0)

    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend([gw, gb])
    return loss, outputs, grads


def backward(model: MlpModel, features: np.ndarray, targets: np.ndarray) -> List[np.ndarray]:
    """Analytic gradients of the training loss, ordered like model.parameters()"""
    return _loss_and_gradients(model, features, targets)[2]


def numerical_gradient(model: MlpModel, features: np.ndarray, targets: np.ndarray,
                       h: float = 1e-5) -> List[np.ndarray]:
    """Central finite differences in float64"""
    probe = model.copy(dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    grads = []
    for param in probe.parameters():
        grad = np.zeros_like(param)
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + h
            plus = loss_value(probe, features, targets)
            flat[j] = saved - h
            minus = loss_value(probe, features, targets)
            flat[j] = saved
            gflat[j] = (plus - minus) / (2 * h)
        grads.append(grad)
    return grads


def adam_step(model: MlpModel, gradients: Sequence[np.ndarray], state: AdamState,
              lr: float) -> Tuple[MlpModel, AdamState]:
    params = model.parameters()
    if len(gradients) != len(params):
        raise ShapeError("Gradient list does not match model parameters", ErrorCode.SHAPE_MISMATCH)

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param, grad, m, v in zip(params, gradients, state.m, state.v):
        if grad.shape != param.shape:
            raise ShapeError(f"Gradient shape {grad.shape} != parameter shape {param.shape}",
                             ErrorCode.SHAPE_MISMATCH)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return model, state


def evaluate_accuracy(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        raise ShapeError("Cannot evaluate accuracy on an empty set", ErrorCode.SHAPE_MISMATCH)
    return float(np.mean(predict(model, features) == labels))


def train(model: MlpModel, train_data: Tuple[np.ndarray, np.ndarray],
          val_data: Tuple[np.ndarray, np.ndarray], config: TrainConfig) -> Tuple[MlpModel, TrainReport]:
    """Mini-batch Adam over shuffled batches; validation accuracy after every epoch.

    Raises TrainingDivergedError when the loss or parameters become non-finite.
    """
    x_train, y_train = train_data
    x_val, y_val = val_data
    x_train = _check_features(model, x_train)
    y_train = np.asarray(y_train, dtype=model.dtype)
    val_labels = np.argmax(y_val, axis=1)
    n = x_train.shape[0]
    if n == 0:
        raise ShapeError("Training set is empty", ErrorCode.SHAPE_MISMATCH)

    state = AdamState.fresh(model)
    report = TrainReport()
    rng = philox(config.seed)
    started = time.perf_counter()

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses, correct = [], 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, outputs, grads = _loss_and_gradients(model, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"Non-finite loss at epoch {epoch + 1}, step {state.step + 1}",
                                            ErrorCode.NON_FINITE_LOSS)
            correct += int(np.sum(np.argmax(outputs, axis=1) == np.argmax(y_train[idx], axis=1)))
            losses.append(loss * idx.shape[0])
            adam_step(model, grads, state, config.learning_rate)

        if not model.is_finite():
            raise TrainingDivergedError(f"Non-finite parameters after epoch {epoch + 1}", ErrorCode.NON_FINITE_LOSS)

        report.train_loss.append(float(np.sum(losses) / n))
        report.train_accuracy.append(correct / n)
        report.val_accuracy.append(evaluate_accuracy(model, x_val, val_labels))
        logger.debug(f"Epoch {epoch + 1}/{config.epochs}: loss={report.train_loss[-1]:.5f} "
                     f"acc={report.train_accuracy[-1]:.4f} val_acc={report.val_accuracy[-1]:.4f}")

    report.final_accuracy = report.val_accuracy[-1]
    report.wall_time = time.perf_counter() - started
    logger.info(f"Training finished: val_acc={report.final_accuracy:.4f} "
                f"(min {report.min_val_accuracy:.4f}, max {report.max_val_accuracy:.4f}) in {report.wall_time:.1f}s")
    return model, report
