"""Run every shipped config through the CLI and collect outputs under one directory.

Usage: python3 scripts/run_all_experiments.py [--output-dir out] [--threads 1]
"""

import argparse
import sys
from pathlib import Path

import yaml

from derdava.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_all(output_dir: Path, threads: int) -> int:
    worst = 0
    for path in sorted(CONFIGS.glob("*.yaml")):
        command = "experiment" if "experiment" in yaml.safe_load(path.read_text()) else "value"
        target = output_dir / path.stem
        print(f"== {command} {path.name} -> {target}", flush=True)
        code = main([command, str(path), "--threads", str(threads), "--output-dir", str(target)])
        if code:
            print(f"!! {path.name} exited with {code}", file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", type=Path, default=Path("out"))
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    sys.exit(run_all(args.output_dir, args.threads))
