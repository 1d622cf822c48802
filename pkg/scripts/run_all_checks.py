#!/usr/bin/env python3
"""Run the three verification suites back to back with the bundled configs."""

import sys
from pathlib import Path

from voterdyn.cli import main

HERE = Path(__file__).resolve().parent


def run() -> int:
    worst = 0
    for command, config in (
        ("fclt-check", "fclt_experiment.ini"),
        ("graphon-check", "graphon_experiment.ini"),
        ("two-way-table", "table_experiment.ini"),
    ):
        print(f"==> voterdyn {command} --config {config}")
        code = main([command, "--config", str(HERE / config)])
        print(f"<== exit {code}\n")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run())
