"""Ensemble wound-image classifier.

A whole-image CNN scorer and a 3x3 sliding-window patch scorer are fused at
score level by a small MLP. See ``wound_ensemble.harness`` for the experiment
pipeline and ``wound_ensemble.cli`` for the command line.
"""

from .labels import ClassLabel, LabelSpace

__version__ = "0.1.0"
__all__ = ["ClassLabel", "LabelSpace", "__version__"]
