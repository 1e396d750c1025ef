"""Road-network graph, normalized propagation supports, and the learnable
location mask.

Conventions
-----------
The adjacency is binary and directed with a zero diagonal; opposite
directions of one road are distinct nodes. Internally ``A[i, j] == 1`` means
node j feeds node i, so row i of a support matrix holds the weights with
which node i gathers from its upstream nodes (and from itself via the added
self-loop).

Two supports are available:

* ``normalized_support`` — classical propagation: each row of (A + I) divided
  by its degree, so rows sum to one.
* ``location_support`` — the masked variant: the elementwise absolute value
  of a trainable N x N mask reweights (A + I) before normalization, letting
  training discover how strongly each upstream node actually influences its
  downstream neighbor. Because only |mask| enters, flipping signs of mask
  entries never changes the forward pass.

``normalization_mode``:

* ``dynamic`` (default) — divide by the row sums of the masked matrix itself;
  rows stay exactly stochastic for any non-degenerate mask, and gradients
  flow through the normalizer.
* ``static`` — divide by the plain (A + I) row degrees; row sums then vary
  with the mask.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ContractError, ShapeMismatchError, ValidationError

__all__ = [
    "RoadGraph",
    "LocationMask",
    "GCNLayerParams",
    "normalized_support",
    "location_support",
    "gcn_forward",
    "load_adjacency",
]

DEGENERACY_EPS = 1e-12


class RoadGraph:
    """Node count plus a binary directed adjacency with zero diagonal."""

    def __init__(self, adjacency):
        a = np.asarray(adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"adjacency must be square, got {a.shape}")
        if not np.all((a == 0.0) | (a == 1.0)):
            raise ValidationError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0.0):
            raise ValidationError("adjacency diagonal must be all zero (no self-loops)")
        self.adjacency = a
        self.node_count = a.shape[0]

    def with_self_loops(self) -> np.ndarray:
        return self.adjacency + np.eye(self.node_count)

    def __eq__(self, other):
        return isinstance(other, RoadGraph) and np.array_equal(
            self.adjacency, other.adjacency
        )

    def __repr__(self):
        return f"RoadGraph(n={self.node_count}, edges={int(self.adjacency.sum())})"


class LocationMask:
    """Trainable N x N influence mask; only its absolute value is ever used."""

    def __init__(self, weights):
        w = as_tensor(weights)
        if w.data.ndim != 2 or w.data.shape[0] != w.data.shape[1]:
            raise ValidationError(f"mask must be square, got {w.data.shape}")
        self.weights = w

    @classmethod
    def initialized(cls, node_count: int, rng: np.random.Generator) -> "LocationMask":
        # start strictly away from zero: an all-zero mask would kill every row
        return cls(Tensor(rng.uniform(0.5, 1.5, size=(node_count, node_count))))

    @property
    def node_count(self) -> int:
        return self.weights.data.shape[0]


@dataclass
class GCNLayerParams:
    """Feature-mixing weight plus propagation depth for one convolution layer."""

    weight: Tensor
    steps: int = 1
    normalization_mode: str = "dynamic"

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        if self.steps < 1:
            raise ContractError(f"propagation steps must be >= 1, got {self.steps}")
        if self.normalization_mode not in ("dynamic", "static"):
            raise ValidationError(
                f"unknown normalization mode {self.normalization_mode!r}"
            )

    @classmethod
    def initialized(
        cls,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        steps: int = 1,
        normalization_mode: str = "dynamic",
    ) -> "GCNLayerParams":
        bound = 1.0 / np.sqrt(in_features)
        w = Tensor(rng.uniform(-bound, bound, size=(in_features, out_features)))
        return cls(weight=w, steps=steps, normalization_mode=normalization_mode)


def normalized_support(graph: RoadGraph) -> np.ndarray:
    """Row-normalized (A + I): entry (i, j) is 1/deg(i) where j feeds i."""
    a_loop = graph.with_self_loops()
    degree = a_loop.sum(axis=1, keepdims=True)  # >= 1 thanks to the self-loop
    return a_loop / degree


def location_support(
    graph: RoadGraph, mask: LocationMask, mode: str = "dynamic"
) -> Tensor:
    """Masked, normalized propagation operator (differentiable in the mask)."""
    if mask.node_count != graph.node_count:
        raise ShapeMismatchError(
            f"location_support: mask {mask.weights.data.shape} vs "
            f"adjacency {graph.adjacency.shape}"
        )
    if mode not in ("dynamic", "static"):
        raise ValidationError(f"unknown normalization mode {mode!r}")
    a_loop = graph.with_self_loops()
    masked = ad.multiply(ad.absolute(mask.weights), a_loop)
    if mode == "dynamic":
        row_sums = ad.reduce_sum(masked, axis=1, keepdims=True)
        low = np.flatnonzero(row_sums.data.ravel() < DEGENERACY_EPS)
        if low.size:
            raise ValidationError(
                f"degenerate masked row for node {int(low[0])}: "
                f"row sum {row_sums.data.ravel()[low[0]]:.3e} below {DEGENERACY_EPS}"
            )
        return ad.divide(masked, row_sums)
    degree = a_loop.sum(axis=1, keepdims=True)
    return ad.divide(masked, degree)


def gcn_forward(x, support, params: GCNLayerParams) -> Tensor:
    """Propagate-and-mix: repeat (support @ H @ W) ``steps`` times from H = x.

    ``x`` may be (N, F) or batched (..., N, F); the support broadcasts over
    leading axes. With steps > 1 the weight is reused, so it must be square.
    """
    w = params.weight
    if params.steps > 1 and w.data.shape[0] != w.data.shape[1]:
        raise ShapeMismatchError(
            f"gcn_forward: steps={params.steps} needs a square weight, "
            f"got {w.data.shape}"
        )
    h = as_tensor(x)
    if h.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatchError(
            f"gcn_forward: input features {h.data.shape} vs weight {w.data.shape}"
        )
    support = as_tensor(support)
    for _ in range(params.steps):
        h = ad.matmul(ad.matmul(support, h), w)
    return h


def load_adjacency(path, orientation: str = "out", node_count: int | None = None) -> RoadGraph:
    """Read adjacency from CSV: either an edge list with header ``src,dst``
    or a dense 0/1 matrix.

    ``orientation`` states what the file encodes. ``out`` (default): an edge
    row ``src,dst`` means src feeds dst, and a dense entry (i, j) = 1 means
    i feeds j — both are transposed into the internal row-gathers convention.
    ``in``: the file is already receiver-major and is taken as-is (an edge
    row then means ``dst`` feeds ``src``).

    Self-loops in the input are rejected.
    """
    if orientation not in ("in", "out"):
        raise ValidationError(f"unknown adjacency orientation {orientation!r}")
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValidationError(f"{path}: empty adjacency file")
    header = [cell.strip().lower() for cell in rows[0]]
    if header == ["src", "dst"]:
        edges = []
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                src, dst = (int(cell) for cell in row)
            except ValueError:
                raise ValidationError(
                    f"{path}:{lineno}: malformed edge row {row!r}"
                ) from None
            if src == dst:
                raise ValidationError(f"{path}:{lineno}: self-loop on node {src}")
            if src < 0 or dst < 0:
                raise ValidationError(f"{path}:{lineno}: negative node id")
            edges.append((src, dst))
        n = node_count if node_count is not None else (
            max((max(e) for e in edges), default=-1) + 1
        )
        if n <= 0:
            raise ValidationError(f"{path}: no nodes")
        a = np.zeros((n, n))
        for src, dst in edges:
            if src >= n or dst >= n:
                raise ValidationError(
                    f"{path}: edge ({src},{dst}) outside node range 0..{n - 1}"
                )
            if orientation == "out":
                a[dst, src] = 1.0  # src feeds dst
            else:
                a[src, dst] = 1.0
        return RoadGraph(a)
    # dense matrix file
    try:
        dense = np.array([[float(cell) for cell in row] for row in rows])
    except ValueError:
        raise ValidationError(f"{path}: neither an edge list nor a numeric matrix") from None
    if np.any(np.diag(dense) != 0.0):
        raise ValidationError(f"{path}: dense adjacency has self-loops on the diagonal")
    if node_count is not None and dense.shape[0] != node_count:
        raise ValidationError(
            f"{path}: adjacency is {dense.shape[0]} nodes, expected {node_count}"
        )
    return RoadGraph(dense.T if orientation == "out" else dense)
