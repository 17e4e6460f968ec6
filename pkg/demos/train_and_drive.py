"""End-to-end pipeline through the command line: collect, train, drive.

    python3 demos/train_and_drive.py [workdir] [steps]

Collects expert data on seeds 0-1, trains for ``steps`` Adam steps (default
150, a few minutes on one core) and drives the result closed-loop next to the
always-stop baseline.  The overfit run in the acceptance suite uses 8 seeds
and 500 steps.
"""

import sys
from pathlib import Path

from spatialfuse.cli import main as cli


def run(*argv):
    print("$ spatialfuse " + " ".join(argv), flush=True)
    code = cli(list(argv))
    if code:
        raise SystemExit(code)


def main(work: str = "demo_run", steps: int = 150):
    root = Path(work)
    run("gen-data", "--seeds", "0:2", "--out", str(root / "data"))
    run("train", "--set", f"data_dir={root / 'data'}", "--out", str(root / "run"),
        "--set", f"steps={steps}", "--set", "log_every=25")
    run("eval", "--checkpoint", str(root / "run" / "final.sfse"), "--seeds", "0:2", "--out", str(root))
    run("eval", "--stop", "--seeds", "0:2", "--out", str(root))
    print(f"reports in {root}/eval_model_0_2.txt and {root}/eval_stop_0_2.txt")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo_run", int(sys.argv[2]) if len(sys.argv) > 2 else 150)
