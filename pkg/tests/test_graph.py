"""Supports, the learnable mask, and convolution propagation properties."""

import numpy as np
import pytest

from locgclstm import autodiff as ad
from locgclstm.autodiff import GradientTape, ParameterSet, Tensor, backward
from locgclstm.errors import ContractError, ShapeMismatchError, ValidationError
from locgclstm.gradcheck import finite_difference_gradient, max_relative_error
from locgclstm.graph import (
    GCNLayerParams,
    LocationMask,
    RoadGraph,
    gcn_forward,
    load_adjacency,
    location_support,
    normalized_support,
)


def ones_mask(n):
    return LocationMask(np.ones((n, n)))


def test_roadgraph_rejects_self_loops_and_nonbinary():
    with pytest.raises(ValidationError):
        RoadGraph(np.eye(2))
    with pytest.raises(ValidationError):
        RoadGraph([[0.0, 0.5], [0.0, 0.0]])
    with pytest.raises(ValidationError):
        RoadGraph(np.zeros((2, 3)))


def test_normalized_support_single_node():
    assert np.array_equal(normalized_support(RoadGraph([[0.0]])), [[1.0]])


def test_normalized_support_mutual_edge():
    g = RoadGraph([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(normalized_support(g), [[0.5, 0.5], [0.5, 0.5]])


def test_isolated_node_row_is_identity_row():
    g = RoadGraph([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    s = normalized_support(g)
    assert np.array_equal(s[2], [0.0, 0.0, 1.0])
    assert np.array_equal(s[0], [1.0, 0.0, 0.0])


def test_rows_always_sum_to_one():
    rng = np.random.default_rng(99)
    for _ in range(20):
        n = int(rng.integers(1, 12))
        a = (rng.random((n, n)) < 0.35).astype(float)
        np.fill_diagonal(a, 0.0)
        s = normalized_support(RoadGraph(a))
        assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_all_ones_mask_reduces_to_classical_support():
    rng = np.random.default_rng(14)
    for mode in ("dynamic", "static"):
        n = 5
        a = (rng.random((n, n)) < 0.4).astype(float)
        np.fill_diagonal(a, 0.0)
        g = RoadGraph(a)
        s = location_support(g, ones_mask(n), mode)
        assert np.allclose(s.data, normalized_support(g), atol=1e-15)


def test_mask_sign_never_matters():
    rng = np.random.default_rng(21)
    n = 6
    a = (rng.random((n, n)) < 0.4).astype(float)
    np.fill_diagonal(a, 0.0)
    g = RoadGraph(a)
    w = rng.uniform(0.2, 2.0, size=(n, n))
    for mode in ("dynamic", "static"):
        base = location_support(g, LocationMask(w), mode).data
        flips = rng.random((n, n)) < 0.5
        flipped = np.where(flips, -w, w)
        assert np.allclose(
            location_support(g, LocationMask(flipped), mode).data, base, atol=1e-15
        )


def test_upstream_pair_hand_normalization():
    # nodes 2 and 3 feed node 0; |mask| row 0 is (1, -, 2, 1) on the
    # surviving positions, so the dynamic row normalizes by 1 + 2 + 1 = 4
    a = np.zeros((4, 4))
    a[0, 2] = 1.0
    a[0, 3] = 1.0
    g = RoadGraph(a)
    w = np.ones((4, 4))
    w[0, 2] = 2.0
    s = location_support(g, LocationMask(w), "dynamic")
    assert np.allclose(s.data[0], [0.25, 0.0, 0.5, 0.25], atol=1e-15)


def test_dynamic_rows_stochastic_for_random_masks():
    rng = np.random.default_rng(31)
    for _ in range(50):
        n = int(rng.integers(1, 16))
        a = (rng.random((n, n)) < 0.3).astype(float)
        np.fill_diagonal(a, 0.0)
        mask = LocationMask(rng.uniform(-3, 3, size=(n, n)) + 0.05)
        s = location_support(RoadGraph(a), mask, "dynamic")
        assert np.allclose(s.data.sum(axis=1), 1.0, atol=1e-12)


def test_sparsity_pattern_preserved():
    rng = np.random.default_rng(44)
    n = 7
    a = (rng.random((n, n)) < 0.3).astype(float)
    np.fill_diagonal(a, 0.0)
    g = RoadGraph(a)
    pattern = g.with_self_loops() != 0
    for mode in ("dynamic", "static"):
        s = location_support(g, LocationMask(rng.uniform(0.5, 1.5, (n, n))), mode)
        assert np.array_equal(s.data != 0, pattern)


def test_degenerate_masked_row_raises_naming_node():
    a = np.zeros((3, 3))
    a[1, 0] = 1.0
    w = np.ones((3, 3))
    w[1, 0] = 0.0
    w[1, 1] = 0.0  # node 1's whole surviving row vanishes
    with pytest.raises(ValidationError, match="node 1"):
        location_support(RoadGraph(a), LocationMask(w), "dynamic")


def test_gcn_identity_passthrough():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    p = GCNLayerParams(weight=Tensor(np.eye(2)), steps=1)
    out = gcn_forward(Tensor(x), np.eye(2), p)
    assert np.array_equal(out.data, x)


def test_gcn_two_node_hand_example():
    support = np.array([[0.5, 0.5], [0.5, 0.5]])
    x = np.array([[2.0], [4.0]])
    p = GCNLayerParams(weight=Tensor([[3.0]]), steps=1)
    out = gcn_forward(Tensor(x), support, p)
    assert np.allclose(out.data, [[9.0], [9.0]])


def test_gcn_rejects_zero_steps_and_nonsquare_multistep():
    with pytest.raises(ContractError):
        GCNLayerParams(weight=Tensor(np.eye(2)), steps=0)
    p = GCNLayerParams(weight=Tensor(np.ones((2, 3))), steps=2)
    with pytest.raises(ShapeMismatchError):
        gcn_forward(Tensor(np.ones((4, 2))), np.eye(4), p)


def test_locality_respects_hop_distance():
    # chain 2 -> 1 -> 0; with one step, node 0 cannot see node 2
    a = np.zeros((3, 3))
    a[0, 1] = 1.0
    a[1, 2] = 1.0
    g = RoadGraph(a)
    s = normalized_support(g)
    x = np.zeros((3, 1))
    p1 = GCNLayerParams(weight=Tensor([[1.0]]), steps=1)
    p2 = GCNLayerParams(weight=Tensor([[1.0]]), steps=2)
    base1 = gcn_forward(Tensor(x), s, p1).data.copy()
    base2 = gcn_forward(Tensor(x), s, p2).data.copy()
    bumped = x.copy()
    bumped[2, 0] = 10.0
    out1 = gcn_forward(Tensor(bumped), s, p1).data
    out2 = gcn_forward(Tensor(bumped), s, p2).data
    assert out1[0, 0] == base1[0, 0]  # 2 hops away: unreachable in one step
    assert out1[1, 0] != base1[1, 0]
    assert out2[0, 0] != base2[0, 0]  # reachable in two


def test_mask_gradient_matches_finite_differences():
    """The mask must actually train: dLoss/dmask vs the FD oracle."""
    rng = np.random.default_rng(77)
    n, f_in, f_out = 4, 3, 2
    a = (rng.random((n, n)) < 0.5).astype(float)
    np.fill_diagonal(a, 0.0)
    g = RoadGraph(a)
    x = rng.uniform(-1, 1, size=(n, f_in))
    target = rng.uniform(-1, 1, size=(n, f_out))
    mask_w = Tensor(rng.uniform(0.5, 1.5, size=(n, n)))
    gcn_w = Tensor(rng.uniform(-0.5, 0.5, size=(f_in, f_out)))
    params = ParameterSet({"mask": mask_w, "w": gcn_w})

    for mode in ("dynamic", "static"):

        def program(p):
            with GradientTape() as tape:
                support = location_support(g, LocationMask(p["mask"]), mode)
                out = gcn_forward(
                    Tensor(x), support, GCNLayerParams(weight=p["w"], steps=1)
                )
                diff = ad.subtract(out, target)
                loss = ad.reduce_mean(ad.multiply(diff, diff))
            return loss, tape

        loss, tape = program(params)
        backward(loss, tape, params)
        analytic = {name: params.grad(name) for name in params.names()}
        numeric = finite_difference_gradient(
            lambda p: program(p)[0].item(), params, h=1e-6
        )
        assert max_relative_error(analytic, numeric) < 1e-5, mode


def test_gcn_input_gradient_flows():
    g = RoadGraph([[0.0, 1.0], [0.0, 0.0]])
    x = Tensor([[1.0], [2.0]])
    params = ParameterSet({"x": x})
    with GradientTape() as tape:
        out = gcn_forward(
            x, normalized_support(g), GCNLayerParams(weight=Tensor([[1.5]]), steps=1)
        )
        loss = ad.reduce_sum(out)
    backward(loss, tape, params)
    assert np.any(params.grad("x") != 0)


def test_load_adjacency_edge_list(tmp_path):
    path = tmp_path / "adj.csv"
    path.write_text("src,dst\n2,0\n3,0\n")
    g = load_adjacency(path)
    assert g.node_count == 4
    assert g.adjacency[0, 2] == 1.0 and g.adjacency[0, 3] == 1.0
    assert g.adjacency.sum() == 2

    g_in = load_adjacency(path, orientation="in")
    assert g_in.adjacency[2, 0] == 1.0 and g_in.adjacency[3, 0] == 1.0


def test_load_adjacency_dense_matrix(tmp_path):
    path = tmp_path / "dense.csv"
    path.write_text("0,1,0\n0,0,0\n1,0,0\n")  # entry (i,j): i feeds j
    g = load_adjacency(path)  # default "out" transposes to receiver-major
    assert g.adjacency[1, 0] == 1.0 and g.adjacency[0, 2] == 1.0


def test_load_adjacency_rejects_self_loops(tmp_path):
    edges = tmp_path / "bad.csv"
    edges.write_text("src,dst\n1,1\n")
    with pytest.raises(ValidationError, match="self-loop"):
        load_adjacency(edges)
    dense = tmp_path / "bad_dense.csv"
    dense.write_text("1,0\n0,0\n")
    with pytest.raises(ValidationError):
        load_adjacency(dense)
