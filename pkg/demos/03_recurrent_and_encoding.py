#!/usr/bin/env python3
"""The temporal half: gated memory cells, cyclic time features, z-scores."""

import numpy as np

from locgclstm.autodiff import Tensor
from locgclstm.encoding import CalendarConfig, trig_encode, zscore_apply, zscore_fit, zscore_invert
from locgclstm.recurrent import GATES, LSTMCellParams, LSTMState, lstm_cell_step, lstm_sequence

# a scalar cell with unit weights makes every gate value easy to follow
cell = LSTMCellParams(
    recurrent={g: Tensor([[1.0]]) for g in GATES},
    input_w={g: Tensor([[1.0]]) for g in GATES},
    bias={g: Tensor([0.0]) for g in GATES},
)
state = LSTMState.zeros(1)
print("scalar cell fed x=1 from a zero state:")
state = lstm_cell_step(Tensor([1.0]), state, cell)
print(f"  h = {float(state.h.data[0]):.6f}, C = {float(state.c.data[0]):.6f}")
print("  (gates sigmoid(1) = 0.731059, candidate tanh(1) = 0.761594)")

final = lstm_sequence([Tensor([1.0]), Tensor([0.5]), Tensor([-1.0])], [cell])
print(f"three-step sequence final hidden: {float(final.data[0]):.6f}")

cfg = CalendarConfig(moment_num=288, hour_num=168)
print("\ncyclic encoding of a day (five-minute slots):")
for slot in (0, 72, 144, 216):
    ms, mc, hs, hc = trig_encode(slot, 0, cfg)
    print(f"  slot {slot:3d} -> moment (sin, cos) = ({ms:+.3f}, {mc:+.3f})")

rng = np.random.default_rng(1)
flows = rng.normal(35.0, 12.0, size=(200, 1))
params = zscore_fit(flows)
z = zscore_apply(flows, params)
print(f"\nz-scores: mean {z.mean():+.2e}, std {z.std():.6f}")
print(f"round-trip error: {np.max(np.abs(zscore_invert(z, params) - flows)):.2e}")
