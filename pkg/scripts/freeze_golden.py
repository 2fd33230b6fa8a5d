"""Freeze the expected CLI outputs for the shipped scenarios.

    python3 scripts/freeze_golden.py

Runs every (command, scenario) pair of ``GOLDEN`` through the CLI and stores
the resulting ``report.json`` under ``tests/fixtures/golden/``.  The test
suite reruns the same commands and compares numbers with a tolerance.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from hidden_reach.cli import run

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = [
    ("calibrate", "paper_sec4_case1"),
    ("calibrate", "paper_sec4_case2"),
    ("bound", "paper_sec4_case1"),
    ("bound", "paper_sec4_case2"),
    ("synthesize", "paper_sec4_synth"),
    ("simulate", "paper_sec4_case1"),
]
SEED = 7


def produce(command: str, scenario: str, out: Path) -> dict:
    code = run([command, str(ROOT / "scenarios" / f"{scenario}.json"), "--out", str(out), "--seed", str(SEED)])
    if code != 0:
        raise SystemExit(f"{command} {scenario} exited with {code}")
    return json.loads((out / "report.json").read_text())


def main() -> None:
    dest = ROOT / "tests" / "fixtures" / "golden"
    dest.mkdir(parents=True, exist_ok=True)
    for command, scenario in GOLDEN:
        with tempfile.TemporaryDirectory() as tmp:
            report = produce(command, scenario, Path(tmp))
        path = dest / f"{scenario}_{command}.json"
        path.write_text(json.dumps(report, indent=2) + "\n")
        print(f"wrote {path.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
