"""Spiking networks whose synapses learn by maximizing proper scoring rules."""

from .network import DynamicsConfig, Network, Projection, SleepConfig, Topology
from .scoring import Regularizer, ScoringConfig, reward, score

__all__ = [
    "DynamicsConfig",
    "Network",
    "Projection",
    "Regularizer",
    "ScoringConfig",
    "SleepConfig",
    "Topology",
    "reward",
    "score",
]
__version__ = "0.1.0"
