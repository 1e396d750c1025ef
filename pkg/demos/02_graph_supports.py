#!/usr/bin/env python3
"""Propagation supports on a toy road network.

Shows the classical degree-normalized operator, then the trainable masked
variant: the absolute value of the mask reweights each upstream link, the
rows stay stochastic in dynamic mode, and sign flips never matter.
"""

import numpy as np

from locgclstm.graph import (
    LocationMask,
    RoadGraph,
    location_support,
    normalized_support,
)

# nodes 2 and 3 feed node 0; node 0 feeds node 1
a = np.zeros((4, 4))
a[0, 2] = a[0, 3] = 1.0
a[1, 0] = 1.0
graph = RoadGraph(a)
print("adjacency (row gathers from columns):")
print(graph.adjacency)

print("\nclassical support D^-1 (A + I):")
print(normalized_support(graph))

mask = LocationMask(np.ones((4, 4)))
mask.weights.data[0, 2] = 2.0  # node 2 should matter twice as much to node 0
support = location_support(graph, mask, "dynamic")
print("\nmasked support with |mask[0,2]| = 2 (dynamic normalization):")
print(support.data)
print("row sums:", support.data.sum(axis=1))

mask.weights.data[0, 2] = -2.0  # only the magnitude enters
flipped = location_support(graph, mask, "dynamic")
print("\nafter flipping that entry's sign, max abs change:",
      np.max(np.abs(flipped.data - support.data)))

static = location_support(graph, mask, "static")
print("\nstatic normalization (divide by plain degrees) row sums:",
      static.data.sum(axis=1))
