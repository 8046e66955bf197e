"""
Demo pipeline runner for PoseLift
Synthesizes a dataset, trains the four variants, evaluates them, compares against the
original and renders one triptych. Any arguments are passed straight to the CLI instead.
"""

import argparse
import sys
from pathlib import Path

from cli.main import main as cli_main

VARIANTS = ("original", "v1", "v2", "v3")
WEIGHTS_FILE = Path(__file__).parent / "core" / "data" / "joint_weights.json"


def run_demo(workdir: Path, n: int, epochs: int, linear_size: int, seed: int) -> int:
    data = workdir / "synthetic.csv"
    steps = [["synth", "--n", str(n), "--seed", str(seed), "--out", str(data)]]
    for variant in VARIANTS:
        steps.append([
            "train", "--data", str(data), "--variant", variant, "--epochs", str(epochs),
            "--linear-size", str(linear_size), "--seed", str(seed), "--out", str(workdir / variant),
        ])
        steps.append([
            "eval", "--checkpoint", str(workdir / variant / "checkpoint.json"), "--data", str(data),
            "--subjects", "S6,S7", "--weights-file", str(WEIGHTS_FILE),
            "--out", str(workdir / f"table_{variant}.csv"),
        ])
    steps.append([
        "compare", "--baseline", str(workdir / "table_original.csv"),
        "--candidate", *[str(workdir / f"table_{v}.csv") for v in VARIANTS[1:]],
        "--out", str(workdir / "comparison.csv"),
    ])
    steps.append([
        "render", "--checkpoint", str(workdir / "v3" / "checkpoint.json"), "--data", str(data),
        "--index", "0", "--out", str(workdir / "triptych_v3.svg"),
    ])

    for step in steps:
        print(f"\n▶️  poselift {' '.join(step)}")
        code = cli_main(step + ["--log-dir", str(workdir / "logs")])
        if code != 0:
            print(f"❌ Step '{step[0]}' failed with exit code {code}")
            return code
    print(f"\n🎉 Demo finished, outputs in {workdir}")
    return 0


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] in ("synth", "train", "eval", "compare", "render", "verify"):
        sys.exit(cli_main(sys.argv[1:]))

    parser = argparse.ArgumentParser(description="Run the PoseLift demo pipeline")
    parser.add_argument("--workdir", default="runs/demo")
    parser.add_argument("--n", type=int, default=2100)
    parser.add_argument("--epochs", type=int, default=150)
    parser.add_argument("--linear-size", type=int, default=1024)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print("🦴 Starting PoseLift demo pipeline...")
    print("=" * 50)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    sys.exit(run_demo(workdir, args.n, args.epochs, args.linear_size, args.seed))
