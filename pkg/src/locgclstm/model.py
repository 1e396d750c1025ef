"""Full forecaster assembly: masked graph convolution over nodes at every
lag step, a stacked LSTM over the resulting per-node sequences (weights
shared across nodes), and a linear head mapping each node's final hidden
state to the twelve prediction horizons.

Inputs are standardized feature blocks; ``predict`` standardizes raw blocks
and returns predictions in raw flow units.
"""

from __future__ import annotations

import numpy as np

from .autodiff import ParameterSet, Tensor
from .encoding import StandardizationParams, zscore_apply
from .errors import ContractError, ShapeMismatchError
from .graph import GCNLayerParams, LocationMask, RoadGraph, gcn_forward, location_support
from .recurrent import DenseHead, LSTMCellParams, dense_forward, lstm_sequence

__all__ = ["LocGCLSTM"]


class LocGCLSTM:
    """Parameter bundle plus forward passes for the masked GCN + LSTM stack.

    ``use_gcn=False`` is the LSTM-only ablation: the spatial layer is
    bypassed and each node's raw feature sequence feeds the LSTM directly.
    """

    def __init__(
        self,
        graph: RoadGraph,
        feature_count: int,
        gcn_units: int = 128,
        gcn_steps: int = 1,
        lstm_units: int = 256,
        lstm_layers: int = 2,
        horizon: int = 12,
        normalization_mode: str = "dynamic",
        use_gcn: bool = True,
        rng: np.random.Generator | None = None,
    ):
        if lstm_layers < 1:
            raise ContractError(f"need at least one recurrent layer, got {lstm_layers}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.graph = graph
        self.feature_count = feature_count
        self.horizon = horizon
        self.use_gcn = use_gcn
        self.normalization_mode = normalization_mode
        self.gcn_units = gcn_units
        self.gcn_steps = gcn_steps
        self.lstm_units = lstm_units
        self.lstm_layer_count = lstm_layers
        if use_gcn:
            self.mask = LocationMask.initialized(graph.node_count, rng)
            self.gcn = GCNLayerParams.initialized(
                feature_count,
                gcn_units,
                rng,
                steps=gcn_steps,
                normalization_mode=normalization_mode,
            )
            lstm_input = gcn_units
        else:
            self.mask = None
            self.gcn = None
            lstm_input = feature_count
        self.lstm_layers = []
        width = lstm_input
        for _ in range(lstm_layers):
            self.lstm_layers.append(LSTMCellParams.initialized(width, lstm_units, rng))
            width = lstm_units
        self.head = DenseHead.initialized(lstm_units, horizon, rng)
        self.input_standardization: StandardizationParams | None = None
        self.flow_standardization: StandardizationParams | None = None

    # ---- parameters --------------------------------------------------------

    def parameters(self) -> ParameterSet:
        params = ParameterSet()
        if self.use_gcn:
            params.add("mask.w", self.mask.weights)
            params.add("gcn.w", self.gcn.weight)
        for i, layer in enumerate(self.lstm_layers):
            for name, tensor in layer.named_tensors(f"lstm{i}"):
                params.add(name, tensor)
        for name, tensor in self.head.named_tensors("head"):
            params.add(name, tensor)
        return params

    def lstm_bias_names(self) -> list[str]:
        return [
            f"lstm{i}.b_{g}"
            for i in range(len(self.lstm_layers))
            for g in ("f", "i", "c", "o")
        ]

    # ---- forward -----------------------------------------------------------

    def forward_standardized(self, x_std: np.ndarray) -> Tensor:
        """Standardized blocks (..., N, L, F) -> standardized flow (..., N, H)."""
        x_std = np.asarray(x_std, dtype=np.float64)
        if x_std.shape[-3] != self.graph.node_count or x_std.shape[-1] != self.feature_count:
            raise ShapeMismatchError(
                f"forward: block {x_std.shape} vs N={self.graph.node_count}, "
                f"F={self.feature_count}"
            )
        lags = x_std.shape[-2]
        support = (
            location_support(self.graph, self.mask, self.normalization_mode)
            if self.use_gcn
            else None
        )
        steps = []
        for t in range(lags):
            x_t = Tensor(np.ascontiguousarray(x_std[..., t, :]))  # (..., N, F)
            steps.append(
                gcn_forward(x_t, support, self.gcn) if self.use_gcn else x_t
            )
        hidden = lstm_sequence(steps, self.lstm_layers)  # (..., N, units)
        return dense_forward(hidden, self.head)  # (..., N, H)

    def set_standardization(
        self, inputs: StandardizationParams, flow: StandardizationParams
    ) -> None:
        self.input_standardization = inputs
        self.flow_standardization = flow

    def standardize_inputs(self, x_raw: np.ndarray) -> np.ndarray:
        if self.input_standardization is None:
            raise ContractError("standardization not fitted; train first")
        return zscore_apply(x_raw, self.input_standardization)

    def standardize_targets(self, y_raw: np.ndarray) -> np.ndarray:
        p = self.flow_standardization
        return (np.asarray(y_raw, dtype=np.float64) - p.mean[0]) / p.std[0]

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        """Raw feature blocks (..., N, L, F) -> raw flow predictions (..., N, H)."""
        z = self.forward_standardized(self.standardize_inputs(x_raw)).data
        p = self.flow_standardization
        return z * p.std[0] + p.mean[0]

    # ---- persistence hooks ---------------------------------------------------

    def architecture(self) -> dict:
        return {
            "node_count": self.graph.node_count,
            "feature_count": self.feature_count,
            "gcn_units": self.gcn_units,
            "gcn_steps": self.gcn_steps,
            "lstm_units": self.lstm_units,
            "lstm_layers": self.lstm_layer_count,
            "horizon": self.horizon,
            "normalization_mode": self.normalization_mode,
            "use_gcn": self.use_gcn,
        }

    @classmethod
    def from_architecture(cls, arch: dict, graph: RoadGraph) -> "LocGCLSTM":
        return cls(
            graph=graph,
            feature_count=arch["feature_count"],
            gcn_units=arch["gcn_units"],
            gcn_steps=arch["gcn_steps"],
            lstm_units=arch["lstm_units"],
            lstm_layers=arch["lstm_layers"],
            horizon=arch["horizon"],
            normalization_mode=arch["normalization_mode"],
            use_gcn=arch["use_gcn"],
            rng=np.random.default_rng(0),
        )
