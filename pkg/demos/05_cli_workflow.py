#!/usr/bin/env python3
"""The command-line workflow, driven in-process.

Writes a synthetic dataset to a scratch directory, then runs the same
subcommands a shell user would: prepare -> train -> evaluate -> compare.
"""

import tempfile
from pathlib import Path

from locgclstm.cli import main
from locgclstm.synthetic import SyntheticSpec, write_chain_csv

scratch = Path(tempfile.mkdtemp(prefix="locgclstm-demo-"))
flow, adjacency, _ = write_chain_csv(scratch, SyntheticSpec(days=4))
print(f"wrote {flow.name} and {adjacency.name} under {scratch}")

prep = scratch / "prep"
assert main(["prepare", "--flow", str(flow), "--adjacency", str(adjacency),
             "--out-dir", str(prep), "--stride", "6"]) == 0

run = scratch / "run"
assert main(["train", "--cache", str(prep / "cache.bin"), "--out-dir", str(run),
             "--epochs", "8", "--batch-size", "16", "--lr-max", "2e-3",
             "--lr-min", "2e-4", "--calra-cycles", "1", "--gcn-units", "8",
             "--units", "16", "--seed", "3"]) == 0

ev = scratch / "eval"
assert main(["evaluate", "--cache", str(prep / "cache.bin"),
             "--checkpoint", str(run / "checkpoint_best.bin"),
             "--out-dir", str(ev), "--per-road", "--chart", "--seed", "3"]) == 0

cmp_dir = scratch / "compare"
assert main(["compare", "--cache", str(prep / "cache.bin"),
             "--models", "lr,persistence", "--out-dir", str(cmp_dir),
             "--seed", "3"]) == 0

print("\nartifacts:")
for path in sorted(scratch.rglob("*")):
    if path.is_file():
        print(f"  {path.relative_to(scratch)}")
