"""Per-sample uncertainty estimators over classifier logits.

Three estimators share one output type: an energy score (temperature-scaled
negative log-sum-exp, so flatter predictions score as more uncertain),
one minus the top softmax probability, and an evidential score K / S where
S accumulates softplus evidence per class. The diagnostic at the bottom
measures whether an estimator's scores track per-sample losses, which is
the premise dynamic weighting relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Var, logsumexp_rows, scale
from .errors import ConfigError, DegenerateInputError, DimensionError

ESTIMATORS = ("energy", "confidence", "dst")


@dataclass(frozen=True)
class UncertaintyScore:
    """One scalar per sample; larger means less trustworthy."""

    values: np.ndarray  # shape (n,)
    kind: str
    modality: int
    temperature: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionError(f"scores must be 1-D, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _check_logits(logits: np.ndarray, min_classes: int = 1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise DimensionError(f"logits must be (n, k) with n >= 1, got shape {z.shape}")
    if z.shape[1] < min_classes:
        raise DimensionError(f"need at least {min_classes} classes, got {z.shape[1]}")
    return z


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]


def energy_score(logits: np.ndarray, temperature: float = 1.0, modality: int = 0) -> UncertaintyScore:
    """-T * log sum_k exp(z_k / T). Flat logits give the highest values."""
    t = float(temperature)
    if not t > 0.0:
        raise ConfigError(f"temperature must be positive, got {t}")
    z = _check_logits(logits)
    return UncertaintyScore(-t * _logsumexp(z / t), "energy", modality, t)


def energy_score_var(logits: Var, temperature: float = 1.0) -> Var:
    """Tape-recorded energy score, (n, 1); used where weights need gradients.

    logsumexp_rows already applies the temperature scaling, so only the sign
    is flipped here.
    """
    return scale(logsumexp_rows(logits, temperature), -1.0)


def confidence_uncertainty(logits: np.ndarray, modality: int = 0) -> UncertaintyScore:
    """1 - max softmax probability; lies in [0, 1 - 1/K]."""
    z = _check_logits(logits, min_classes=2)
    top = np.exp(z.max(axis=1) - _logsumexp(z))
    return UncertaintyScore(1.0 - top, "confidence", modality)


def dst_uncertainty(logits: np.ndarray, modality: int = 0) -> UncertaintyScore:
    """Evidential K / S with per-class evidence softplus(z_k) and S = sum_k (evidence_k + 1).

    Lies in (0, 1]; all-zero logits give 1 / (1 + ln 2).
    """
    z = _check_logits(logits, min_classes=2)
    evidence = np.logaddexp(0.0, z)  # softplus, overflow-safe
    s = (evidence + 1.0).sum(axis=1)
    return UncertaintyScore(z.shape[1] / s, "dst", modality)


def estimate(kind: str, logits: np.ndarray, temperature: float = 1.0,
             modality: int = 0) -> UncertaintyScore:
    if kind == "energy":
        return energy_score(logits, temperature, modality)
    if kind == "confidence":
        return confidence_uncertainty(logits, modality)
    if kind == "dst":
        return dst_uncertainty(logits, modality)
    raise ConfigError(f"unknown estimator {kind!r}, expected one of {ESTIMATORS}")


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    """Plain Pearson correlation; rejects constant inputs."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"inputs must have equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise DegenerateInputError(f"need at least 2 samples, got {a.size}")
    da = a - a.mean()
    db = b - b.mean()
    ssa = float(da @ da)
    ssb = float(db @ db)
    if ssa == 0.0 or ssb == 0.0:
        raise DegenerateInputError("correlation undefined for a constant input")
    return float((da @ db) / np.sqrt(ssa * ssb))


def assumption1_diagnostic(score: UncertaintyScore | np.ndarray, losses: np.ndarray) -> float:
    """Pearson correlation between uncertainty scores and per-sample losses.

    Dynamic weighting only pays off when this is positive for the modality
    in question, so it is measured rather than assumed.
    """
    values = score.values if isinstance(score, UncertaintyScore) else np.asarray(score)
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if values.size < 3:
        raise DegenerateInputError(f"need at least 3 samples, got {values.size}")
    return pearson_r(values, losses)
