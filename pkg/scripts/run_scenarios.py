#!/usr/bin/env python3
"""Replay every shipped scenario and exit nonzero if any expect fails.

The CI-facing equivalent of the live demonstrations: each scenario drives the
full agent loop against the simulator with a scripted provider.
"""

import sys
from pathlib import Path

from cellops.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

if __name__ == "__main__":
    worst = 0
    for path in sorted(SCENARIOS.glob("*.yaml")):
        print(f"=== {path.name} ===")
        worst = max(worst, main(["scenario", str(path)]))
    sys.exit(worst)
