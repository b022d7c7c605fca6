"""Image scorers: the abstraction, trainable torch backbones and the colour mock.

A saved scorer is a directory holding ``config.json``, ``history.csv`` and a
backend-specific blob named by ``config.json["weights"]`` (``weights.pt``
for torch, ``mock_rule.csv`` for the mock).
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError
from ..labels import LabelSpace
from .base import ClassScores, EpochRecord, ImageScorer, ScorerConfig, TrainingHistory, softmax
from .mock import MockScorer, NoisyScorer, make_mock_scorer, read_mock_rule, write_mock_rule


def fine_tune(*args, **kwargs):
    from .torch_backend import fine_tune as _fine_tune

    return _fine_tune(*args, **kwargs)


def score(scorer: ImageScorer, pixels) -> ClassScores:
    return scorer.score(pixels)


def save_scorer(scorer: ImageScorer, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = scorer.base if isinstance(scorer, NoisyScorer) else scorer
    if isinstance(base, MockScorer):
        meta = {
            "backend": "mock",
            "label_space": list(base.label_space.codes),
            "reduce": base.reduce,
            "weights": "mock_rule.csv",
        }
        if isinstance(scorer, NoisyScorer):
            meta["noise"] = {"rate": scorer.rate, "seed": scorer.seed}
        write_mock_rule(base.rule, directory / "mock_rule.csv")
    else:
        import torch

        meta = {"backend": "torch", **scorer.config.to_dict(), "weights": "weights.pt"}
        torch.save(scorer.model.state_dict(), directory / "weights.pt")
    (directory / "config.json").write_text(json.dumps(meta, indent=2))
    scorer.history.write_csv(directory / "history.csv")
    return directory


def load_scorer(directory: str | Path) -> ImageScorer:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "config.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scorer artifact {directory}: {exc}") from exc
    backend = meta.pop("backend", None)
    weights = meta.pop("weights")
    if backend == "mock":
        scorer = MockScorer(LabelSpace.of(meta["label_space"]), read_mock_rule(directory / weights), meta["reduce"])
        if "noise" in meta:
            scorer = NoisyScorer(scorer, meta["noise"]["rate"], meta["noise"]["seed"])
        return scorer
    if backend == "torch":
        import torch

        from .torch_backend import TorchScorer, build_backbone

        config = ScorerConfig.from_dict(meta)
        # weights come from the blob; never download pretrained ones here
        model = build_backbone(config.replace(pretrained=False))
        model.load_state_dict(torch.load(directory / weights, map_location="cpu"))
        return TorchScorer(model, config, TrainingHistory.read_csv(directory / "history.csv"))
    raise ConfigError(f"unknown scorer backend {backend!r} in {directory}")


__all__ = [
    "ClassScores",
    "EpochRecord",
    "ImageScorer",
    "MockScorer",
    "NoisyScorer",
    "ScorerConfig",
    "TrainingHistory",
    "fine_tune",
    "load_scorer",
    "make_mock_scorer",
    "read_mock_rule",
    "save_scorer",
    "score",
    "softmax",
    "write_mock_rule",
]
