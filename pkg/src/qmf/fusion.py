"""Decision-level fusion: per-sample modality weights applied to logits.

Dynamic weights are affine in the uncertainty score, w = alpha * u + beta
with alpha < 0, so less trustworthy modalities contribute less. `calibrate`
picks beta to hit a target mean weight exactly on a sample of scores; with
alpha < 0 that also flips the sign of the weight-loss correlation relative
to the uncertainty-loss correlation, which is what the bound bench checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .uncertainty import UncertaintyScore

MODES = ("static", "dynamic")

# rows whose weights sum to no more than this fall back to uniform when normalizing
DEGENERATE_ROW_SUM = 1e-9


@dataclass(frozen=True)
class WeightPolicy:
    """How per-sample fusion weights are produced.

    static: constant per-modality weights, each >= 0.
    dynamic: w_m(x) = alpha_m * u_m(x) + beta_m with alpha_m < 0. beta may be
    any real; calibration against score samples with negative mean will push
    it below zero, and the mean-weight target is what is actually pinned.
    clamp_nonneg zeroes negative weights; normalize rescales each row to sum
    to one afterwards (degenerate rows fall back to uniform 1/M).
    """

    mode: str
    static_weights: tuple[float, ...] | None = None
    alpha: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    normalize: bool = False
    clamp_nonneg: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown policy mode {self.mode!r}, expected one of {MODES}")
        if self.mode == "static":
            if not self.static_weights:
                raise ConfigError("static policy requires static_weights")
            w = tuple(float(v) for v in self.static_weights)
            if any(v < 0 for v in w):
                raise ConfigError(f"static weights must be >= 0, got {w}")
            object.__setattr__(self, "static_weights", w)
        else:
            if self.alpha is None or self.beta is None:
                raise ConfigError("dynamic policy requires alpha and beta")
            a = tuple(float(v) for v in self.alpha)
            b = tuple(float(v) for v in self.beta)
            if len(a) != len(b):
                raise ConfigError(f"alpha and beta lengths differ: {len(a)} vs {len(b)}")
            if any(v >= 0 for v in a):
                raise ConfigError(f"alpha must be strictly negative, got {a}")
            object.__setattr__(self, "alpha", a)
            object.__setattr__(self, "beta", b)

    @property
    def num_modalities(self) -> int:
        return len(self.static_weights if self.mode == "static" else self.alpha)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "static_weights": list(self.static_weights) if self.static_weights else None,
            "alpha": list(self.alpha) if self.alpha else None,
            "beta": list(self.beta) if self.beta else None,
            "normalize": self.normalize,
            "clamp_nonneg": self.clamp_nonneg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightPolicy":
        return cls(
            mode=d["mode"],
            static_weights=tuple(d["static_weights"]) if d.get("static_weights") else None,
            alpha=tuple(d["alpha"]) if d.get("alpha") else None,
            beta=tuple(d["beta"]) if d.get("beta") else None,
            normalize=bool(d.get("normalize", False)),
            clamp_nonneg=bool(d.get("clamp_nonneg", False)),
        )


def uniform_static(num_modalities: int, normalize: bool = False) -> WeightPolicy:
    return WeightPolicy("static", static_weights=(1.0 / num_modalities,) * num_modalities,
                        normalize=normalize)


@dataclass(frozen=True)
class FusionWeights:
    """Per-sample per-modality weights, shape (n, M)."""

    weights: np.ndarray
    policy: WeightPolicy

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"weights must be 2-D, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class FusedPrediction:
    fused_logits: np.ndarray  # (n, k)
    labels: np.ndarray        # argmax per row, ties broken toward the lowest index


def normalize_rows(w: np.ndarray) -> np.ndarray:
    """Rescale rows to sum to one; rows with sum <= 1e-9 become uniform."""
    w = np.asarray(w, dtype=np.float64)
    sums = w.sum(axis=1, keepdims=True)
    degenerate = sums[:, 0] <= DEGENERATE_ROW_SUM
    safe = np.where(degenerate[:, None], 1.0, sums)
    out = w / safe
    out[degenerate] = 1.0 / w.shape[1]
    return out


def _finish(raw: np.ndarray, policy: WeightPolicy) -> FusionWeights:
    w = raw
    if policy.clamp_nonneg:
        w = np.maximum(w, 0.0)
    if policy.normalize:
        w = normalize_rows(w)
    return FusionWeights(w, policy)


def compute_weights(policy: WeightPolicy,
                    uncertainties: Sequence[UncertaintyScore | np.ndarray] | None = None,
                    num_samples: int | None = None) -> FusionWeights:
    """Materialize the policy's weights.

    Static mode needs num_samples (or uncertainties to take the count from);
    dynamic mode needs one uncertainty vector per modality.
    """
    m = policy.num_modalities
    if policy.mode == "static":
        if num_samples is None:
            if uncertainties is None:
                raise ConfigError("static weights need num_samples or score vectors")
            first = uncertainties[0]
            num_samples = (first.values if isinstance(first, UncertaintyScore) else np.asarray(first)).shape[0]
        raw = np.tile(np.asarray(policy.static_weights), (num_samples, 1))
        return _finish(raw, policy)

    if uncertainties is None or len(uncertainties) != m:
        got = 0 if uncertainties is None else len(uncertainties)
        raise ConfigError(f"dynamic policy needs {m} score vectors, got {got}")
    cols = []
    n = None
    for j, u in enumerate(uncertainties):
        v = u.values if isinstance(u, UncertaintyScore) else np.asarray(u, dtype=np.float64).ravel()
        if n is None:
            n = v.shape[0]
        elif v.shape[0] != n:
            raise DimensionError(f"modality {j} has {v.shape[0]} scores, expected {n}")
        cols.append(policy.alpha[j] * v + policy.beta[j])
    return _finish(np.column_stack(cols), policy)


def calibrate(u_samples: Sequence[np.ndarray | UncertaintyScore],
              w_target: Sequence[float],
              alpha: Sequence[float]) -> tuple[float, ...]:
    """beta_m = w_target_m - alpha_m * mean(u_m): sample-mean weight hits the target exactly."""
    if not (len(u_samples) == len(w_target) == len(alpha)):
        raise ConfigError("u_samples, w_target and alpha must have one entry per modality")
    betas = []
    for u, wt, a in zip(u_samples, w_target, alpha):
        a = float(a)
        if a >= 0:
            raise ConfigError(f"alpha must be strictly negative, got {a}")
        v = u.values if isinstance(u, UncertaintyScore) else np.asarray(u, dtype=np.float64).ravel()
        if v.size == 0:
            raise ConfigError("cannot calibrate against an empty score sample")
        betas.append(float(wt) - a * float(v.mean()))
    return tuple(betas)


def default_alpha(u_samples: Sequence[np.ndarray | UncertaintyScore],
                  alpha_scale: float = 0.5) -> tuple[float, ...]:
    """alpha_m = -alpha_scale / (std(u_m) + 1e-8), population std."""
    if alpha_scale <= 0:
        raise ConfigError(f"alpha_scale must be positive, got {alpha_scale}")
    out = []
    for u in u_samples:
        v = u.values if isinstance(u, UncertaintyScore) else np.asarray(u, dtype=np.float64).ravel()
        out.append(-alpha_scale / (float(v.std()) + 1e-8))
    return tuple(out)


def fuse(weights: FusionWeights, logits: Sequence[np.ndarray]) -> FusedPrediction:
    """fused = sum_m w_m * logits_m, rows weighted per sample; argmax labels."""
    w = weights.weights
    if len(logits) != w.shape[1]:
        raise DimensionError(f"got {len(logits)} logit blocks for {w.shape[1]} weight columns")
    fused = None
    for j, z in enumerate(logits):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] != w.shape[0]:
            raise DimensionError(f"modality {j} logits must be ({w.shape[0]}, k), got {z.shape}")
        term = w[:, j:j + 1] * z
        fused = term if fused is None else fused + term
    labels = np.argmax(fused, axis=1)  # first occurrence wins ties, i.e. lowest class index
    return FusedPrediction(fused, labels)
