#!/usr/bin/env python3
"""Regenerate the golden CLI fixtures under tests/golden/.

The fixtures pin the CLI's byte-level output: a small synthetic stack, the
selection produced by a fixed flag set, and a SHA256 manifest over both.
Regenerate only when the formats or the generator change deliberately.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from hiprune.cli import main

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

SYNTH_SPEC = {
    "rows": 6,
    "cols": 6,
    "layers": 4,
    "heads": 2,
    "seed": 20250810,
    "object_block": [2, 2, 2, 2],
    "object_layers": [1, 3],
    "object_gain": 6.0,
    "deep_dispersion": True,
}

PRUNE_FLAGS = [
    "--budget", "12",
    "--object-layer", "2",
    "--alpha", "0.42",
    "--scheme", "cross4",
    "--boundary-mode", "paper_intersect",
]


def run(argv) -> None:
    code = main(argv)
    if code != 0:
        raise SystemExit(f"fixture command failed ({code}): {argv}")


def main_() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    spec_path = GOLDEN / "small.synth.json"
    spec_path.write_text(json.dumps(SYNTH_SPEC, indent=2) + "\n", encoding="utf-8")

    stack_path = GOLDEN / "small.atns"
    run(["synth", "--spec", str(spec_path), "--out", str(stack_path)])

    selection_path = GOLDEN / "small.selection.json"
    run(["prune", "--stack", str(stack_path), *PRUNE_FLAGS, "--out", str(selection_path)])

    names = ["small.synth.json", "small.atns", "small.json", "small.selection.json"]
    lines = []
    for name in names:
        digest = hashlib.sha256((GOLDEN / name).read_bytes()).hexdigest()
        lines.append(f"{digest}  {name}")
    (GOLDEN / "SHA256SUMS").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(names) + 1} fixture files to {GOLDEN}")


if __name__ == "__main__":
    main_()
