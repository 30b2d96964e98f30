#!/usr/bin/env python3
"""Regenerate the committed sample CSVs by running tiny seeded experiments.

The render tests consume these files; rerunning this script reproduces
them byte-for-byte (fixed seeds, deterministic writers).
"""

import shutil
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parents[1] / "src"))

from metastab.experiments import run_experiment  # noqa: E402

CONFIGS = {
    "sweep": {
        "experiment": "transition-sweep",
        "system": {"N": 24, "delta": 0.45},
        "beta_grid": [2.0, 3.0, 4.0, 5.0],
        "ensemble": 24,
        "horizon_mult": 2.0,
        "reference_N": 48,
        "seed": 3,
    },
    "bifurcation": {
        "experiment": "bifurcation",
        "system": {"N": 96},
        "delta_grid": [round(0.09 + 0.01 * k, 10) for k in range(34)],
        "seed": 0,
    },
    "single": {
        "experiment": "single-trajectory",
        "system": {"N": 24, "delta": 0.45, "beta": 2.0},
        "horizon": 200.0,
        "record_dt": 0.5,
        "compare_ensemble": 8,
        "reference_N": 24,
        "seed": 4,
    },
    "ergodicity": {
        "experiment": "ergodicity",
        "system": {"N": 32, "delta": 0.1, "beta": 20.0},
        "horizon": 60.0,
        "seeds": 4,
        "record_dt": 0.25,
        "seed": 1,
    },
}


def main():
    for name, cfg in CONFIGS.items():
        out = HERE / name
        if out.exists():
            shutil.rmtree(out)
        run_experiment(dict(cfg), out)
        print("wrote", out)


if __name__ == "__main__":
    main()
