#!/usr/bin/env python3
"""Tape-based gradients from first principles.

Builds a tiny computation on the float64 tensor type, runs the reverse pass,
and confirms the result against central finite differences.
"""

import numpy as np

from locgclstm import autodiff as ad
from locgclstm.autodiff import GradientTape, ParameterSet, Tensor, backward
from locgclstm.gradcheck import finite_difference_gradient, max_relative_error

rng = np.random.default_rng(0)

# two parameters and one fixed input
w = Tensor(rng.uniform(-1, 1, size=(3, 2)))
b = Tensor(np.zeros(2))
x = np.array([[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]])
params = ParameterSet({"w": w, "b": b})

print("forward: loss = mean(sigmoid(x @ w + b)^2)")
with GradientTape() as tape:
    logits = ad.add(ad.matmul(Tensor(x), w), b)
    activated = ad.sigmoid(logits)
    loss = ad.reduce_mean(ad.multiply(activated, activated))
print(f"  recorded {len(tape)} primitive operations, loss = {loss.item():.6f}")

backward(loss, tape, params)
print(f"  dloss/dw =\n{params.grad('w')}")
print(f"  dloss/db = {params.grad('b')}")


def objective(p):
    with GradientTape() as t:
        out = ad.sigmoid(ad.add(ad.matmul(Tensor(x), p["w"]), p["b"]))
        return ad.reduce_mean(ad.multiply(out, out)).item()


numeric = finite_difference_gradient(objective, params, h=1e-6)
err = max_relative_error({n: params.grad(n) for n in params.names()}, numeric)
print(f"  worst relative error vs central finite differences: {err:.2e}")

# gradients accumulate when a tensor fans out
a = Tensor(3.0)
p2 = ParameterSet({"a": a})
with GradientTape() as tape:
    z = ad.add(ad.multiply(a, a), a)  # a^2 + a
backward(z, tape, p2)
print(f"d(a^2 + a)/da at a=3: {p2.grad('a')} (expected 7)")
