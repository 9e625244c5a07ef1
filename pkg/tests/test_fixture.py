"""The committed fixture dataset: integrity and training behavior."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from qmf import data
from qmf.cli import main
from qmf.data import SyntheticSpec

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURE_DIR = REPO_ROOT / "tests" / "fixtures" / "dataset_small"
FIXTURE_CONFIG = REPO_ROOT / "scripts" / "configs" / "fixture.json"
TRAIN_CONFIG = REPO_ROOT / "scripts" / "configs" / "fixture_train.json"

# recorded at fixture creation (scripts/pilots/fixture.json); changing the
# fixture on disk or the generator's draw order breaks this on purpose
FIXTURE_CHECKSUM = "65b0adf6954609754bda3e4dae37d10a40e46d5d1300542e26bd85ecb6b44e83"


def test_committed_fixture_matches_recorded_checksum():
    assert data.checksum(FIXTURE_DIR) == FIXTURE_CHECKSUM


def test_regeneration_reproduces_the_committed_fixture(tmp_path):
    spec = SyntheticSpec.from_dict(
        json.loads(FIXTURE_CONFIG.read_text(encoding="utf-8"))["synthetic"])
    regen = tmp_path / "regen"
    data.save(data.generate(spec), regen)
    assert data.checksum(regen) == FIXTURE_CHECKSUM


def test_fixture_loads_with_expected_shape():
    ds = data.load(FIXTURE_DIR)
    assert ds.num_modalities == 2
    assert ds.num_classes == 3
    assert ds.num_samples == 400
    assert ds.meta.dims == (6, 6)


def test_training_on_fixture_exceeds_95_percent(tmp_path):
    cfg = json.loads(TRAIN_CONFIG.read_text(encoding="utf-8"))
    cfg["dataset_path"] = str(FIXTURE_DIR)
    cfg_path = tmp_path / "train.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = json.loads((out / "metrics.json").read_text(encoding="utf-8"))["rows"]
    assert rows[0]["mean_acc"] > 0.95
