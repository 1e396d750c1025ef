"""Shared toy datasets for CLI and acceptance tests."""

import numpy as np
import pytest


def write_toy_dataset(
    directory,
    nodes=2,
    steps=48,
    missing_cells=(),
    start="2024-07-01T00:00:00",
    edges=((1, 0),),
    weather=False,
    seed=123,
):
    """Write a small flow CSV plus an edge-list adjacency; returns the paths.

    ``edges`` are (src, dst) meaning src feeds dst, matching the default
    ingest orientation.
    """
    from datetime import datetime, timedelta

    rng = np.random.default_rng(seed)
    t0 = datetime.fromisoformat(start)
    flow_path = directory / "flow.csv"
    header = "timestamp,node_id,flow" + (",weather" if weather else "")
    lines = [header]
    labels = ["sunny", "rain", "fog"]
    for step in range(steps):
        stamp = (t0 + timedelta(minutes=5 * step)).isoformat()
        for node in range(nodes):
            value = f"{20 + 10 * np.sin(step / 7 + node) + rng.normal(0, 0.5):.3f}"
            if (step, node) in missing_cells:
                value = ""
            row = f"{stamp},{node},{value}"
            if weather:
                row += f",{labels[(step // 12) % 3]}"
            lines.append(row)
    flow_path.write_text("\n".join(lines) + "\n")
    adj_path = directory / "adjacency.csv"
    adj_path.write_text("src,dst\n" + "\n".join(f"{s},{d}" for s, d in edges) + "\n")
    return flow_path, adj_path


@pytest.fixture
def toy_dataset(tmp_path):
    return write_toy_dataset(tmp_path)
