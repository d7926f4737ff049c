"""Sequential classifier training for multitemporal SVM classification.

Earlier classifiers of each class pair are extrapolated to a new sensing
date and the prediction is fine-tuned with a few labelled samples.
"""
from .core import (
    ClassifierParams,
    LabeledDataset,
    PairHistory,
    SctError,
    TimedClassifier,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierParams",
    "LabeledDataset",
    "PairHistory",
    "SctError",
    "TimedClassifier",
    "__version__",
]
