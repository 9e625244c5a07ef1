#!/usr/bin/env python3
"""Noise-robustness sweep: dynamic fusion vs static fusion vs unimodal models.

Protocol. The base dataset has one strong, "hot" modality (large margins,
hence large logits) and one weak but reliable modality; 15% of its rows carry
Gaussian noise on the hot modality so the trained networks meet noisy inputs
during training without becoming fully noise-proof. All four methods train on
identical splits; evaluation then injects Gaussian noise at variance 0 / 5 /
10 into the hot modality on half of the held-out rows.

Read-out, over the seed set:
  * accuracy drop (variance 0 -> 10) of dynamic fusion vs static fusion,
  * dynamic fusion's mean accuracy at variance 10 vs the best unimodal mean,
  * per-method monotone degradation across the grid (0.5-point slack).

Usage:
    python scripts/run_robustness_sweep.py [--workdir artifacts/robustness]
                                           [--seeds 0-9] [--jobs 4]

Exits 0 when all three read-outs hold, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from qmf.cli import main as qmf_main

REPO_ROOT = Path(__file__).resolve().parents[1]
BASE_CONFIG = REPO_ROOT / "scripts" / "configs" / "robustness_base.json"

SWEEP_CONFIG = {
    "version": 1,
    "val_fraction": 0.25,
    "model": {"architecture": "mlp1", "hidden": 32, "init_scale": 1.0},
    "train": {
        "epochs": 20,
        "batch_size": 128,
        "learning_rate": 0.005,
        "reg_strength": 0.1,
        "alpha_scale": 1.0,
        "clamp_weights": True,
        "normalize_weights": True,
    },
    "methods": ["qmf-energy", "static-late", "unimodal-0", "unimodal-1"],
    "noise": [
        {"kind": "gaussian", "variance": 5.0, "target_modalities": [0], "sample_fraction": 0.5},
        {"kind": "gaussian", "variance": 10.0, "target_modalities": [0], "sample_fraction": 0.5},
    ],
}

GRID = (0.0, 5.0, 10.0)
MONOTONE_SLACK = 0.005  # half a point of statistical slack


def run(workdir: Path, seeds: str, jobs: int) -> int:
    base_dir = workdir / "base"
    out_dir = workdir / "sweep"
    workdir.mkdir(parents=True, exist_ok=True)

    rc = qmf_main(["generate", "--config", str(BASE_CONFIG), "--out", str(base_dir)])
    if rc != 0:
        return rc

    cfg = dict(SWEEP_CONFIG, dataset_path=str(base_dir))
    cfg_path = workdir / "sweep_config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    rc = qmf_main(["sweep", "--config", str(cfg_path), "--out", str(out_dir),
                   "--seeds", seeds, "--jobs", str(jobs)])
    if rc != 0:
        return rc

    rows = json.loads((out_dir / "metrics.json").read_text(encoding="utf-8"))["rows"]
    acc = {(r["method"], r["noise_param"]): r for r in rows}

    q0 = np.array(acc[("qmf-energy", 0.0)]["accuracies"])
    q10 = np.array(acc[("qmf-energy", 10.0)]["accuracies"])
    s0 = np.array(acc[("static-late", 0.0)]["accuracies"])
    s10 = np.array(acc[("static-late", 10.0)]["accuracies"])
    drop_dynamic = q0.mean() - q10.mean()
    drop_static = s0.mean() - s10.mean()
    best_unimodal = max(acc[("unimodal-0", 10.0)]["mean_acc"],
                        acc[("unimodal-1", 10.0)]["mean_acc"])

    print("\nmean accuracy by method and noise variance:")
    for method in cfg["methods"]:
        vals = " ".join(f"{acc[(method, p)]['mean_acc']:.4f}" for p in GRID)
        print(f"  {method:<12} {vals}")

    ok_drop = drop_dynamic < drop_static
    ok_bar = q10.mean() >= best_unimodal
    ok_mono = all(
        acc[(m, GRID[i + 1])]["mean_acc"] <= acc[(m, GRID[i])]["mean_acc"] + MONOTONE_SLACK
        for m in cfg["methods"] for i in range(len(GRID) - 1)
    )
    print(f"\ndrop 0->10: dynamic {drop_dynamic * 100:.2f}pp vs static {drop_static * 100:.2f}pp "
          f"-> {'ok' if ok_drop else 'FAIL'}")
    print(f"at variance 10: dynamic {q10.mean():.4f} vs best unimodal {best_unimodal:.4f} "
          f"-> {'ok' if ok_bar else 'FAIL'}")
    print(f"monotone degradation (all methods, {MONOTONE_SLACK * 100:.1f}pt slack) "
          f"-> {'ok' if ok_mono else 'FAIL'}")
    return 0 if (ok_drop and ok_bar and ok_mono) else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="artifacts/robustness")
    parser.add_argument("--seeds", default="0-9")
    parser.add_argument("--jobs", type=int, default=4)
    args = parser.parse_args(argv)
    return run(Path(args.workdir), args.seeds, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
