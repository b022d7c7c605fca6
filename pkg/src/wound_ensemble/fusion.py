"""Score-level fusion: feature vector construction and the MLP meta-classifier.

For C wound classes the fused feature is
``[A_0, ..., A_{C-2}, B_0, ..., B_{C-1}]``: the whole-image scores minus the
last (redundant, since they sum to one) entry, followed by the sliding-window
averaged scores. The head is a plain numpy MLP of widths
``[2C-1, 8, 7, C]`` with ReLU hidden units, softmax output, cross-entropy
loss and Adam.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .labels import ClassLabel, LabelSpace, label
from .rng import rng_for
from .scorer.base import ClassScores, softmax
from .slidewin import ClassifierBOutput

HIDDEN = (8, 7)


@dataclass(frozen=True)
class FusionFeature:
    values: np.ndarray = field(compare=False)
    label_space: LabelSpace

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (2 * len(self.label_space) - 1,):
            raise ConfigError(f"fusion feature must have {2 * len(self.label_space) - 1} entries, got {v.shape}")
        object.__setattr__(self, "values", v)


def build_feature(scores_a: ClassScores, output_b: ClassifierBOutput) -> FusionFeature:
    if scores_a.label_space != output_b.wound_space:
        raise ConfigError(
            f"classifier A scores over {scores_a.label_space.codes} but classifier B over {output_b.wound_space.codes}"
        )
    values = np.concatenate([scores_a.scores[:-1], np.asarray(output_b.avg_wound_scores, dtype=np.float64)])
    return FusionFeature(values, scores_a.label_space)


@dataclass(frozen=True)
class FusionTrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class MLPHead:
    label_space: LabelSpace
    weights: list[np.ndarray]  # weights[i] has shape (fan_in, fan_out)
    biases: list[np.ndarray]
    activation: str = "relu"
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "label_space": list(self.label_space.codes),
            "activation": self.activation,
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],  # row-major, (fan_in, fan_out)
            "biases": [b.tolist() for b in self.biases],
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MLPHead":
        head = cls(
            LabelSpace.of(data["label_space"]),
            [np.asarray(w, dtype=np.float64) for w in data["weights"]],
            [np.asarray(b, dtype=np.float64) for b in data["biases"]],
            data.get("activation", "relu"),
            int(data.get("seed", 0)),
            list(data.get("loss_history", [])),
        )
        if head.layer_sizes != list(data["layer_sizes"]):
            raise ConfigError(f"layer_sizes {data['layer_sizes']} disagree with weight shapes {head.layer_sizes}")
        return head

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "MLPHead":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_head(label_space: LabelSpace, seed: int = 0, hidden: Sequence[int] = HIDDEN) -> MLPHead:
    """He-uniform weights (limit sqrt(6 / fan_in)); biases uniform in +-1/sqrt(fan_in)."""
    c = len(label_space)
    sizes = [2 * c - 1, *hidden, c]
    rng = rng_for(seed, "mlp-init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        # nonzero biases keep a zero input off the ReLU kink
        biases.append(rng.uniform(-1, 1, size=fan_out) / math.sqrt(fan_in))
    return MLPHead(label_space, weights, biases, "relu", seed)


def _forward(head: MLPHead, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(head.weights) - 1
    for i, (w, b) in enumerate(zip(head.weights, head.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def _loss_and_grads(head: MLPHead, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    pre, acts = _forward(head, x)
    probs = softmax(pre[-1])
    n = len(y)
    loss = -float(np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw, gb = [None] * len(head.weights), [None] * len(head.weights)
    for i in range(len(head.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ head.weights[i].T) * (pre[i - 1] > 0)
    return loss, gw, gb


def _as_matrix(features: Sequence[FusionFeature] | np.ndarray, space: LabelSpace | None = None) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.atleast_2d(features.astype(np.float64))
    spaces = {f.label_space for f in features}
    if len(spaces) > 1 or (space is not None and spaces and spaces != {space}):
        raise ConfigError("fusion features do not share one label space")
    return np.stack([f.values for f in features])


def train_mlp(
    features: Sequence[FusionFeature],
    labels: Sequence[ClassLabel | str],
    config: FusionTrainConfig = FusionTrainConfig(),
    label_space: LabelSpace | None = None,
) -> MLPHead:
    if len(features) == 0:
        raise TrainingError("no fusion training examples")
    if len(features) != len(labels):
        raise TrainingError(f"{len(features)} features but {len(labels)} labels")
    space = label_space or features[0].label_space
    x = _as_matrix(features, space)
    y = np.array([space.index(label(c)) for c in labels])
    absent = [c for i, c in enumerate(space.codes) if not np.any(y == i)]
    if absent:
        raise TrainingError(f"classes {absent} have no training examples")

    head = init_head(space, config.seed)
    params = head.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    for epoch in range(config.epochs):
        order = rng_for(config.seed, "mlp-shuffle", epoch).permutation(len(y))
        total = 0.0
        for i in range(0, len(y), config.batch_size):
            idx = order[i : i + config.batch_size]
            loss, gw, gb = _loss_and_grads(head, x[idx], y[idx])
            total += loss * len(idx)
            grads = [g for pair in zip(gw, gb) for g in pair]
            step += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                m_hat = mi / (1 - beta1**step)
                v_hat = vi / (1 - beta2**step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        head.loss_history.append(total / len(y))
        if not math.isfinite(head.loss_history[-1]):
            raise TrainingError(f"fusion loss diverged at epoch {epoch + 1}")
    return head


def predict(head: MLPHead, feature: FusionFeature | np.ndarray) -> ClassScores:
    values = feature.values if isinstance(feature, FusionFeature) else np.asarray(feature, dtype=np.float64)
    if values.shape != (head.layer_sizes[0],):
        raise ConfigError(f"feature length {values.shape} does not match head input width {head.layer_sizes[0]}")
    pre, _ = _forward(head, values[None, :])
    return ClassScores(softmax(pre[-1])[0], head.label_space)


def predict_batch(head: MLPHead, features: Sequence[FusionFeature]) -> list[ClassScores]:
    return [predict(head, f) for f in features]


def gradient_check(head: MLPHead, feature: FusionFeature | np.ndarray, label_: ClassLabel | str, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Relative error is ``|a - n| / max(|a| + |n|, 1e-8)`` per parameter, so
    parameters whose true gradient is exactly zero (dead ReLU paths)
    compare on an absolute scale.
    """
    values = feature.values if isinstance(feature, FusionFeature) else np.asarray(feature, dtype=np.float64)
    x = values[None, :]
    y = np.array([head.label_space.index(label(label_))])
    _, gw, gb = _loss_and_grads(head, x, y)
    analytic = [g for pair in zip(gw, gb) for g in pair]
    worst = 0.0
    for p, g in zip(head.params(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = _loss_and_grads(head, x, y)[0]
            flat[j] = orig - step
            lm = _loss_and_grads(head, x, y)[0]
            flat[j] = orig
            num = (lp - lm) / (2 * step)
            err = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), 1e-8)
            worst = max(worst, err)
    return worst
