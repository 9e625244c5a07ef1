"""Per-modality classifiers: a linear map and a one-hidden-layer relu net.

Models are plain values (dicts of immutable Matrices); the training loop
replaces parameters wholesale after each optimizer step. `forward` records
onto a tape for gradient computation; `predict_logits` is the pure-numpy
mirror used for evaluation, and the two are kept in lockstep by tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio, rng
from .diffcore import Matrix, Tape, Var, add_bias, matmul, relu
from .errors import ConfigError, DimensionError, FormatError

ARCHITECTURES = ("linear", "mlp1")


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "mlp1"
    hidden: int = 32
    init_scale: float = 1.0
    init_seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.architecture == "mlp1" and self.hidden < 1:
            raise ConfigError(f"hidden width must be >= 1, got {self.hidden}")
        if self.init_scale < 0:
            raise ConfigError(f"init_scale must be >= 0, got {self.init_scale}")

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "hidden": self.hidden,
            "init_scale": self.init_scale,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                architecture=str(d.get("architecture", "mlp1")),
                hidden=int(d.get("hidden", 32)),
                init_scale=float(d.get("init_scale", 1.0)),
                init_seed=int(d.get("init_seed", 0)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad model config: {e}") from e


@dataclass
class UnimodalModel:
    architecture: str
    params: dict[str, Matrix]
    modality: int
    input_dim: int
    classes: int
    hidden: int = 0


def _uniform(stream, rows: int, cols: int, scale: float, fan_in: int) -> Matrix:
    a = scale / np.sqrt(fan_in)
    return Matrix(stream.uniform(-a, a, size=(rows, cols)))


def init(config: ModelConfig, input_dim: int, classes: int, modality: int = 0,
         seed: int | None = None) -> UnimodalModel:
    """Fresh model. Weights ~ U(-a, a) with a = init_scale / sqrt(fan_in); biases zero.

    `seed` overrides config.init_seed so a training run can key every
    modality's init off its own run seed.
    """
    if input_dim < 1:
        raise ConfigError(f"input_dim must be >= 1, got {input_dim}")
    if classes < 1:
        raise ConfigError(f"classes must be >= 1, got {classes}")
    s = config.init_seed if seed is None else seed
    stream = rng.stream(f"model-init/modality{modality}/{config.architecture}", s)
    if config.architecture == "linear":
        params = {
            "W": _uniform(stream, input_dim, classes, config.init_scale, input_dim),
            "b": Matrix(np.zeros((1, classes))),
        }
        hidden = 0
    else:
        h = config.hidden
        params = {
            "W1": _uniform(stream, input_dim, h, config.init_scale, input_dim),
            "b1": Matrix(np.zeros((1, h))),
            "W2": _uniform(stream, h, classes, config.init_scale, h),
            "b2": Matrix(np.zeros((1, classes))),
        }
        hidden = h
    return UnimodalModel(config.architecture, params, modality, input_dim, classes, hidden)


def forward(model: UnimodalModel, tape: Tape, x: Var) -> tuple[Var, dict[str, Var]]:
    """Record the model's logits for x on the tape.

    Returns (logits, param_vars); the caller reads gradients off the
    param vars after backward().
    """
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"expected {model.input_dim} input columns, got {x.shape[1]}")
    pvars = {name: tape.leaf(mat) for name, mat in model.params.items()}
    if model.architecture == "linear":
        logits = add_bias(matmul(x, pvars["W"]), pvars["b"])
    else:
        hidden = relu(add_bias(matmul(x, pvars["W1"]), pvars["b1"]))
        logits = add_bias(matmul(hidden, pvars["W2"]), pvars["b2"])
    return logits, pvars


def predict_logits(model: UnimodalModel, x: np.ndarray) -> np.ndarray:
    """Pure-numpy forward pass (no tape); same arithmetic as `forward`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"expected (n, {model.input_dim}) inputs, got {x.shape}")
    p = model.params
    if model.architecture == "linear":
        return x @ p["W"].array + p["b"].array
    h = np.maximum(x @ p["W1"].array + p["b1"].array, 0.0)
    return h @ p["W2"].array + p["b2"].array


def l2_param_norm(model: UnimodalModel) -> float:
    """Frobenius norm over weight matrices; biases are excluded."""
    total = 0.0
    for name, mat in model.params.items():
        if name.startswith("W"):
            total += float((mat.array ** 2).sum())
    return float(np.sqrt(total))


def save_model(model: UnimodalModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "architecture": model.architecture,
        "modality": model.modality,
        "input_dim": model.input_dim,
        "classes": model.classes,
        "hidden": model.hidden,
        "params": {name: f"param_{name}.csv" for name in sorted(model.params)},
    }
    csvio.write_json(directory / "manifest.json", manifest)
    for name, mat in model.params.items():
        csvio.write_float_matrix(directory / f"param_{name}.csv", mat.array)


def load_model(directory: str | Path) -> UnimodalModel:
    directory = Path(directory)
    manifest = csvio.read_json(directory / "manifest.json")
    if manifest.get("version") != 1:
        raise FormatError(f"unsupported model version {manifest.get('version')!r}")
    try:
        architecture = str(manifest["architecture"])
        modality = int(manifest["modality"])
        input_dim = int(manifest["input_dim"])
        classes = int(manifest["classes"])
        hidden = int(manifest["hidden"])
        files = dict(manifest["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"model manifest missing or malformed field: {e}") from e
    if architecture not in ARCHITECTURES:
        raise FormatError(f"unknown architecture {architecture!r} in manifest")
    expected = {"linear": {"W": (input_dim, classes), "b": (1, classes)},
                "mlp1": {"W1": (input_dim, hidden), "b1": (1, hidden),
                         "W2": (hidden, classes), "b2": (1, classes)}}[architecture]
    if set(files) != set(expected):
        raise FormatError(f"manifest params {sorted(files)} do not match {sorted(expected)}")
    params = {
        name: Matrix(csvio.read_float_matrix(directory / files[name], expected_shape=shape))
        for name, shape in expected.items()
    }
    return UnimodalModel(architecture, params, modality, input_dim, classes, hidden)
