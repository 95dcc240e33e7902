"""Regenerate the frozen CLI reports in this directory.

Run from anywhere:

    python3 tests/fixtures/regen_goldens.py

Each golden is the raw stdout of one CLI invocation, run with this
directory as the working directory so the workspace path in the
report stays relative.  Tests compare byte for byte, so regenerate
only when an intentional change lands, and eyeball the diff.
"""

import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent

GOLDENS = {
    "golden_invariants_adjsets.json": [
        "invariants", "demo.mer", "--mer", "AdjSets",
        "--max", "2", "--tuple-len", "1",
    ],
    "golden_ydlept_adjsets.json": [
        "ydlept-test", "demo.mer", "--mer", "AdjSets",
        "--max", "3", "--tuple-len", "2",
    ],
}


def regenerate() -> None:
    for name, argv in GOLDENS.items():
        proc = subprocess.run(
            [sys.executable, "-m", "merlab.cli", *argv],
            capture_output=True,
            cwd=HERE,
        )
        if proc.returncode != 0:
            raise SystemExit(f"{name}: {proc.stderr.decode()}")
        (HERE / name).write_bytes(proc.stdout)
        print(f"wrote {name} ({len(proc.stdout)} bytes)")


if __name__ == "__main__":
    regenerate()
