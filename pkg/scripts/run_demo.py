#!/usr/bin/env python3
"""Run the full pipeline over the bundled fixture corpus.

Produces a participant-weighted cloud per condition, one contrast cloud,
and one frequency-baseline cloud under runs/demo/, entirely offline.

Usage: python3 scripts/run_demo.py
"""

from __future__ import annotations

import sys
from pathlib import Path

from conceptcloud.cli import main

REPO = Path(__file__).resolve().parents[1]
CONFIG = REPO / "fixtures" / "run_config.json"
CONDITIONS = ["dual_phone", "insta", "logitech", "obsbot", "solo_phone"]


def run() -> int:
    base = ["--config", str(CONFIG), "--run-id", "demo"]
    for condition in CONDITIONS:
        for stage in (
            ["elicit", "--condition", condition],
            ["map", "--condition", condition],
            ["cloud", "--condition", condition],
            ["freq", "--condition", condition, "--top-k", "20"],
        ):
            code = main(base + stage)
            if code != 0:
                return code
    code = main(base + ["diff", "--a", "insta", "--b", "logitech", "--margin", "1"])
    if code != 0:
        return code
    print("\nartifacts under runs/demo/: vocab/, tables/, clouds/, log/")
    return 0


if __name__ == "__main__":
    sys.exit(run())
