"""Convolutional backbones and the fine-tuning loop (PyTorch).

Two backbones are registered:

``alexnet``
    torchvision AlexNet with its last fully connected layer replaced by one
    sized to the label space. With ``pretrained=True`` the ImageNet weights
    are fetched into ``$WOUND_ENSEMBLE_CACHE`` (or torch's default hub dir).
``small_cnn``
    a three-block CNN with global max+mean pooling, small enough to train
    on one CPU core in seconds. Used for desk-scale runs and tests.
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn

from ..errors import ConfigError, InputError, TrainingError
from ..imaging import as_rgb, resize_bilinear
from ..labels import label
from ..rng import derive_seed, rng_for
from .base import ClassScores, ImageScorer, ScorerConfig, TrainingHistory, softmax

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CACHE_ENV = "WOUND_ENSEMBLE_CACHE"


class SmallCNN(nn.Module):
    def __init__(self, num_classes: int, width: int = 16):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(width, width * 2, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(width * 2, width * 2, 3, padding=1), nn.ReLU(),
        )
        self.classifier = nn.Linear(width * 4, num_classes)

    def forward(self, x):
        f = self.features(x)
        pooled = torch.cat([f.amax(dim=(2, 3)), f.mean(dim=(2, 3))], dim=1)
        return self.classifier(pooled)


def _small_cnn(num_classes: int, pretrained: bool) -> nn.Module:
    if pretrained:
        raise ConfigError("small_cnn has no pretrained weights; set pretrained=false")
    return SmallCNN(num_classes)


def _alexnet(num_classes: int, pretrained: bool) -> nn.Module:
    from torchvision.models import AlexNet_Weights, alexnet

    if pretrained and os.environ.get(CACHE_ENV):
        torch.hub.set_dir(os.environ[CACHE_ENV])
    model = alexnet(weights=AlexNet_Weights.IMAGENET1K_V1 if pretrained else None)
    last = model.classifier[-1]
    model.classifier[-1] = nn.Linear(last.in_features, num_classes)
    return model


BACKBONES: dict[str, Callable[[int, bool], nn.Module]] = {
    "alexnet": _alexnet,
    "small_cnn": _small_cnn,
}
NORMALIZATION = {
    "alexnet": (IMAGENET_MEAN, IMAGENET_STD),
    "small_cnn": ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5)),
}


def build_backbone(config: ScorerConfig) -> nn.Module:
    try:
        factory = BACKBONES[config.backbone]
    except KeyError:
        raise ConfigError(f"unknown backbone {config.backbone!r}; known: {sorted(BACKBONES)}") from None
    return factory(len(config.label_space), config.pretrained)


def _prepare(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    px = np.asarray(pixels)
    if px.size == 0:
        raise InputError("empty image")
    return resize_bilinear(as_rgb(px), size)


def _to_tensor(batch_u8: np.ndarray, backbone: str) -> torch.Tensor:
    mean, std = NORMALIZATION[backbone]
    x = torch.from_numpy(np.ascontiguousarray(batch_u8)).permute(0, 3, 1, 2).float().div_(255.0)
    m = torch.tensor(mean).view(1, 3, 1, 1)
    s = torch.tensor(std).view(1, 3, 1, 1)
    return (x - m) / s


class TorchScorer(ImageScorer):
    def __init__(self, model: nn.Module, config: ScorerConfig, history: TrainingHistory | None = None):
        self.model = model.eval()
        self.config = config
        self.label_space = config.label_space
        self.history = history or TrainingHistory()

    def logits(self, pixels: np.ndarray) -> np.ndarray:
        x = _to_tensor(_prepare(pixels, self.config.input_size)[None], self.config.backbone)
        with torch.no_grad():
            return self.model(x)[0].double().numpy()

    def score(self, pixels: np.ndarray) -> ClassScores:
        return ClassScores(softmax(self.logits(pixels)), self.label_space)

    # score_batch deliberately stays per-image: batched convolutions are not
    # bit-identical to single-image ones on every CPU kernel.


def _samples(items: Iterable) -> tuple[list[np.ndarray], list[str]]:
    pixels, codes = [], []
    for it in items:
        if isinstance(it, tuple):
            px, lab = it
        else:
            px, lab = it.pixels, it.label
        pixels.append(px)
        codes.append(label(lab).code)
    return pixels, codes


def _encode(items, config: ScorerConfig) -> tuple[np.ndarray, np.ndarray]:
    pixels, codes = _samples(items)
    bad = sorted({c for c in codes if c not in config.label_space})
    if bad:
        raise ConfigError(f"labels {bad} are outside the scorer label space {config.label_space.codes}")
    if not pixels:
        return np.zeros((0, *config.input_size, 3), np.uint8), np.zeros(0, np.int64)
    x = np.stack([_prepare(p, config.input_size) for p in pixels])
    y = np.array([config.label_space.index(c) for c in codes], dtype=np.int64)
    return x, y


def _accuracy(model: nn.Module, x: np.ndarray, y: np.ndarray, backbone: str, batch: int = 256) -> float:
    if len(y) == 0:
        return float("nan")
    correct = 0
    model.eval()
    with torch.no_grad():
        for i in range(0, len(y), batch):
            pred = model(_to_tensor(x[i : i + batch], backbone)).argmax(dim=1).numpy()
            correct += int((pred == y[i : i + batch]).sum())
    return correct / len(y)


def fine_tune(
    config: ScorerConfig,
    train: Sequence,
    val: Sequence = (),
    log: Callable[[str], None] | None = None,
) -> TorchScorer:
    """Train ``config.backbone`` with Adam + cross-entropy on labelled images.

    ``train``/``val`` hold ``(pixels, label)`` pairs or objects with
    ``.pixels``/``.label`` (e.g. PatchRecord). Every image is resized to
    ``config.input_size`` once up front.
    """
    x_tr, y_tr = _encode(train, config)
    if len(y_tr) == 0:
        raise InputError("training set is empty")
    x_val, y_val = _encode(val, config)

    torch.manual_seed(derive_seed(config.seed, "torch-init") % (2**63))
    model = build_backbone(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss(reduction="sum")
    history = TrainingHistory()
    y_all = torch.from_numpy(y_tr)
    for epoch in range(config.epochs):
        model.train()
        order = rng_for(config.seed, "shuffle", epoch).permutation(len(y_tr))
        total = 0.0
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(_to_tensor(x_tr[idx], config.backbone)), y_all[idx])
            (loss / len(idx)).backward()
            opt.step()
            total += float(loss.detach())
        train_loss = total / len(y_tr)
        if not np.isfinite(train_loss):
            raise TrainingError(f"training loss diverged at epoch {epoch + 1}")
        history.append(train_loss, _accuracy(model, x_val, y_val, config.backbone))
        if log:
            last = history.epochs[-1]
            log(f"epoch {last.epoch}/{config.epochs} loss {last.train_loss:.4f} val_acc {last.val_accuracy:.4f}")
    return TorchScorer(model, config, history)
