"""Online Bayesian imbalanced learning.

Calibrated likelihood-ratio ensembles trained on rebalanced datasets, with
online prior and threshold adaptation on unlabeled streams, plus a shift
simulator with oracle-regret accounting.
"""

__version__ = "0.1.0"

from .bayes import (CostStructure, PriorPair, combined_threshold,
                    cost_sensitive_loss, lr_from_output, lr_from_posterior,
                    posterior_from_output, relative_lr_error_bound)
from .data import LabeledDataset
from .mlp import CalibratedScorer, NetworkConfig, TrainingConfig, train
from .ensemble import EnsembleConfig, LikelihoodRatioEnsemble, train_ensemble
from .adapter import AdapterConfig, AdapterState
from .simulate import GaussianProblem, PriorTrajectory, StreamScenario

__all__ = [
    "AdapterConfig", "AdapterState", "CalibratedScorer", "CostStructure",
    "EnsembleConfig", "GaussianProblem", "LabeledDataset",
    "LikelihoodRatioEnsemble", "NetworkConfig", "PriorPair", "PriorTrajectory",
    "StreamScenario", "TrainingConfig", "combined_threshold",
    "cost_sensitive_loss", "lr_from_output", "lr_from_posterior",
    "posterior_from_output", "relative_lr_error_bound", "train",
    "train_ensemble", "__version__",
]
