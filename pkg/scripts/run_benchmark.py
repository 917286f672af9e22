#!/usr/bin/env python3
"""Run the shipped combustion benchmark and print the headline numbers.

Usage: python scripts/run_benchmark.py [configs/combustion-1d.json] [outdir]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wiedlab.config import load_config
from wiedlab.runner import run_experiment


def main(config="configs/combustion-1d.json", out="runs/combustion-1d"):
    cfg = load_config(config)
    manifest = run_experiment(cfg, out=out)
    print(f"artifacts: {len(manifest['artifacts'])} under {out}")
    print(f"config hash: {manifest['config_hash'][:12]}")
    print(f"s exponent: {manifest['s_exponent']}, "
          f"tail weight: {manifest['tail_weight']:.2e}")
    print(f"wall clock: {manifest['wallclock_s']:.1f}s")
    conv = Path(out) / "reports" / "convergence.csv"
    print(conv.read_text().strip())


if __name__ == "__main__":
    main(*sys.argv[1:])
