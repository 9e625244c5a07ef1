#!/usr/bin/env python3
"""Weight-loss correlation table across uncertainty estimators.

Trains quality-aware fusion once per seed on the shared noisy-exposure
dataset, then calibrates each uncertainty estimator (energy, confidence,
Dempster-Shafer) on the same checkpoints and tabulates the Pearson
correlation between per-sample fusion weights and per-modality losses on a
noise-degraded held-out split. Also dumps the per-sample weight and loss
CSVs the table is computed from, so the numbers can be re-derived offline.

Usage:
    python scripts/run_correlation_table.py [--workdir artifacts/correlation]
                                            [--seeds 0-2] [--jobs 4]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from qmf.cli import main as qmf_main

REPO_ROOT = Path(__file__).resolve().parents[1]
BASE_CONFIG = REPO_ROOT / "scripts" / "configs" / "robustness_base.json"

CORRELATE_CONFIG = {
    "version": 1,
    "val_fraction": 0.25,
    "model": {"architecture": "mlp1", "hidden": 32, "init_scale": 1.0},
    "train": {
        "epochs": 20,
        "batch_size": 128,
        "learning_rate": 0.005,
        "reg_strength": 0.1,
        "alpha_scale": 0.5,
        "clamp_weights": True,
        "normalize_weights": True,
    },
    "method": "qmf-energy",
    "noise": {"kind": "gaussian", "variance": 6.0, "target_modalities": [0],
              "sample_fraction": 0.6},
}


def run(workdir: Path, seeds: str, jobs: int) -> int:
    base_dir = workdir / "base"
    out_dir = workdir / "table"
    workdir.mkdir(parents=True, exist_ok=True)

    rc = qmf_main(["generate", "--config", str(BASE_CONFIG), "--out", str(base_dir)])
    if rc != 0:
        return rc
    cfg = dict(CORRELATE_CONFIG, dataset_path=str(base_dir))
    cfg_path = workdir / "correlate_config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    rc = qmf_main(["correlate", "--config", str(cfg_path), "--out", str(out_dir),
                   "--seeds", seeds, "--jobs", str(jobs)])
    if rc != 0:
        return rc

    rows = json.loads((out_dir / "correlations.json").read_text(encoding="utf-8"))["rows"]
    print("\nper-estimator Pearson r(weight, loss), noisy modality (0):")
    for row in rows:
        if row["modality"] == 0:
            r = row["pearson_r"]
            print(f"  seed {row['seed']:>3} {row['estimator']:<11} "
                  + ("n/a" if r is None else f"{r:+.4f}"))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="artifacts/correlation")
    parser.add_argument("--seeds", default="0-2")
    parser.add_argument("--jobs", type=int, default=4)
    args = parser.parse_args(argv)
    return run(Path(args.workdir), args.seeds, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
