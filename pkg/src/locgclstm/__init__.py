"""Short-term traffic flow forecasting with a location-masked graph convolution
feeding stacked LSTMs, built on a small numpy autodiff tape.

Public surface re-exports the pieces most callers need; the submodules hold
the full API (autodiff, graph, recurrent, encoding, data, model, training,
metrics, baselines, cli).
"""

from .autodiff import GradientTape, ParameterSet, Tensor, backward
from .gradcheck import finite_difference_gradient
from .graph import LocationMask, RoadGraph, gcn_forward, location_support, normalized_support
from .metrics import MetricsReport, evaluate
from .model import LocGCLSTM
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "GradientTape",
    "ParameterSet",
    "backward",
    "finite_difference_gradient",
    "RoadGraph",
    "LocationMask",
    "normalized_support",
    "location_support",
    "gcn_forward",
    "MetricsReport",
    "evaluate",
    "LocGCLSTM",
    "TrainConfig",
    "train",
    "__version__",
]
