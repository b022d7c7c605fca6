from .config import ExperimentConfig, PatchSettings, desk_config
from .pipeline import (
    ClassifierResult,
    RoundResult,
    RoundRunner,
    run_crossval,
    run_pipeline,
    summarize,
)
from .reporting import write_report
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "ClassifierResult",
    "ExperimentConfig",
    "PatchSettings",
    "RoundResult",
    "RoundRunner",
    "SyntheticSpec",
    "desk_config",
    "generate_synthetic",
    "run_crossval",
    "run_pipeline",
    "summarize",
    "write_report",
]
