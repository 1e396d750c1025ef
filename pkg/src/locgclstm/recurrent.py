"""Stacked LSTM cells and the linear multi-horizon output head.

The cell follows the standard three-gate formulation: for input x_t and the
previous state (h, C),

    f = sigmoid(h V_f + x W_f + b_f)         forget gate
    i = sigmoid(h V_i + x W_i + b_i)         input gate
    c~ = tanh  (h V_C + x W_C + b_C)         candidate state
    C' = f * C + i * c~
    o = sigmoid(h V_o + x W_o + b_o)         output gate
    h' = o * tanh(C')

No peepholes; the output head is purely linear. States and inputs may be
single vectors (H,) / (F,) or batches (..., H) / (..., F); the weights are
shared across whatever leading batch axes are present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ContractError, ShapeMismatchError

__all__ = [
    "LSTMCellParams",
    "LSTMState",
    "DenseHead",
    "lstm_cell_step",
    "lstm_sequence",
    "dense_forward",
]

GATES = ("f", "i", "c", "o")


class LSTMCellParams:
    """Per-gate recurrent matrix V (H x H), input matrix W (F x H), bias (H,)."""

    def __init__(self, recurrent: dict, input_w: dict, bias: dict):
        self.recurrent = {g: as_tensor(recurrent[g]) for g in GATES}
        self.input_w = {g: as_tensor(input_w[g]) for g in GATES}
        self.bias = {g: as_tensor(bias[g]) for g in GATES}
        h = self.recurrent["f"].data.shape[0]
        f_in = self.input_w["f"].data.shape[0]
        for g in GATES:
            if self.recurrent[g].data.shape != (h, h):
                raise ShapeMismatchError(
                    f"recurrent weight {g}: {self.recurrent[g].data.shape} != ({h}, {h})"
                )
            if self.input_w[g].data.shape != (f_in, h):
                raise ShapeMismatchError(
                    f"input weight {g}: {self.input_w[g].data.shape} != ({f_in}, {h})"
                )
            if self.bias[g].data.shape != (h,):
                raise ShapeMismatchError(
                    f"bias {g}: {self.bias[g].data.shape} != ({h},)"
                )
        self.hidden_size = h
        self.input_size = f_in

    @classmethod
    def initialized(
        cls, input_size: int, hidden_size: int, rng: np.random.Generator
    ) -> "LSTMCellParams":
        rb = 1.0 / np.sqrt(hidden_size)
        ib = 1.0 / np.sqrt(input_size)
        recurrent = {
            g: Tensor(rng.uniform(-rb, rb, size=(hidden_size, hidden_size)))
            for g in GATES
        }
        input_w = {
            g: Tensor(rng.uniform(-ib, ib, size=(input_size, hidden_size)))
            for g in GATES
        }
        bias = {g: Tensor(np.zeros(hidden_size)) for g in GATES}
        return cls(recurrent, input_w, bias)

    def named_tensors(self, prefix: str):
        for g in GATES:
            yield f"{prefix}.v_{g}", self.recurrent[g]
            yield f"{prefix}.w_{g}", self.input_w[g]
            yield f"{prefix}.b_{g}", self.bias[g]


@dataclass
class LSTMState:
    """Hidden and cell vectors (or batches of them)."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, hidden_size: int, batch_shape: tuple = ()) -> "LSTMState":
        shape = tuple(batch_shape) + (hidden_size,)
        return cls(h=Tensor(np.zeros(shape)), c=Tensor(np.zeros(shape)))


def _gate(x, state: LSTMState, params: LSTMCellParams, g: str) -> Tensor:
    pre = ad.add(
        ad.add(ad.matmul(state.h, params.recurrent[g]), ad.matmul(x, params.input_w[g])),
        params.bias[g],
    )
    return pre


def lstm_cell_step(x, state: LSTMState, params: LSTMCellParams) -> LSTMState:
    """Advance one time step; returns the new state."""
    x = as_tensor(x)
    if x.data.shape[-1] != params.input_size:
        raise ShapeMismatchError(
            f"lstm_cell_step: input width {x.data.shape} vs expected {params.input_size}"
        )
    f = ad.sigmoid(_gate(x, state, params, "f"))
    i = ad.sigmoid(_gate(x, state, params, "i"))
    c_tilde = ad.tanh(_gate(x, state, params, "c"))
    c = ad.add(ad.multiply(f, state.c), ad.multiply(i, c_tilde))
    o = ad.sigmoid(_gate(x, state, params, "o"))
    h = ad.multiply(o, ad.tanh(c))
    return LSTMState(h=h, c=c)


def lstm_sequence(steps, layers) -> Tensor:
    """Run a stack of cells over a sequence; return the top layer's final h.

    ``steps`` is a sequence of per-time-step inputs (each (F,) or (..., F));
    layer l consumes the hidden sequence of layer l-1. Intermediate states
    are discarded. Initial states are zero.
    """
    steps = [as_tensor(s) for s in steps]
    if not steps:
        raise ContractError("lstm_sequence: empty input sequence")
    if not layers:
        raise ContractError("lstm_sequence: no layers")
    batch_shape = steps[0].data.shape[:-1]
    inputs = steps
    final_h = None
    for layer in layers:
        state = LSTMState.zeros(layer.hidden_size, batch_shape)
        outputs = []
        for x in inputs:
            state = lstm_cell_step(x, state, layer)
            outputs.append(state.h)
        inputs = outputs
        final_h = state.h
    return final_h


class DenseHead:
    """Linear map from the final hidden state to the prediction horizons."""

    def __init__(self, weight, bias):
        self.weight = as_tensor(weight)
        self.bias = as_tensor(bias)
        if self.weight.data.ndim != 2:
            raise ShapeMismatchError(f"head weight must be 2-D, got {self.weight.data.shape}")
        if self.bias.data.shape != (self.weight.data.shape[1],):
            raise ShapeMismatchError(
                f"head bias {self.bias.data.shape} vs weight {self.weight.data.shape}"
            )

    @classmethod
    def initialized(
        cls, hidden_size: int, horizon: int, rng: np.random.Generator
    ) -> "DenseHead":
        bound = 1.0 / np.sqrt(hidden_size)
        return cls(
            Tensor(rng.uniform(-bound, bound, size=(hidden_size, horizon))),
            Tensor(np.zeros(horizon)),
        )

    @property
    def horizon(self) -> int:
        return self.weight.data.shape[1]

    def named_tensors(self, prefix: str):
        yield f"{prefix}.w", self.weight
        yield f"{prefix}.b", self.bias


def dense_forward(h, head: DenseHead) -> Tensor:
    h = as_tensor(h)
    if h.data.shape[-1] != head.weight.data.shape[0]:
        raise ShapeMismatchError(
            f"dense_forward: hidden width {h.data.shape} vs weight {head.weight.data.shape}"
        )
    return ad.add(ad.matmul(h, head.weight), head.bias)
