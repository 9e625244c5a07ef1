"""Empirical bench for the generalization-bound decomposition of weighted fusion.

For two-class problems with per-modality linear scorers constrained to an
L2 ball, the fused predictor's expected logistic loss is bounded by

    sum_m E(w_m) * train_loss_m          (loss term)
  + sum_m E(w_m) * rademacher_m          (capacity term)
  + sum_m Cov(w_m, loss_m)               (weight-loss covariance term)
  + M * sqrt(ln(1/delta) / (2 N))        (confidence term)

The covariance term vanishes for any constant (static) weighting and is
negative when weights anti-correlate with per-sample loss, which is exactly
what calibrated dynamic weighting buys. Everything here is measured: the
bench fits projected scorers, estimates each term on the training sample,
estimates the true error on a large fresh evaluation sample, and checks the
two ordering conditions (matched mean weights, non-positive weight-loss
correlation) under which the dynamic bound cannot exceed the static one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import fusion, rng, uncertainty
from .data import MultimodalDataset, SyntheticSpec, generate
from .errors import ConfigError, DegenerateInputError, DimensionError, LabelError

WEIGHT_RULES = ("static", "energy", "oracle")


def _check_pm_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise LabelError(f"labels must be a non-empty 1-D vector, got shape {y.shape}")
    vals = np.unique(y)
    if not np.all(np.isin(vals, (-1, 1))):
        raise LabelError(f"two-class labels must be -1 or +1, got values {vals}")
    return y.astype(np.float64)


def logistic_loss(score, y):
    """log(1 + exp(-y * score)) with y in {-1, +1}; overflow-safe.

    Accepts scalars or aligned arrays; returns the same shape.
    """
    s = np.asarray(score, dtype=np.float64)
    y_arr = np.asarray(y)
    if not np.all(np.isin(np.unique(y_arr), (-1, 1))):
        raise LabelError(f"labels must be -1 or +1, got {np.unique(y_arr)}")
    out = np.logaddexp(0.0, -y_arr.astype(np.float64) * s)
    return float(out) if out.ndim == 0 else out


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def fit_linear_scorer(x: np.ndarray, y: np.ndarray, norm_bound: float,
                      steps: int = 300, learning_rate: float = 0.5) -> np.ndarray:
    """Projected full-batch gradient descent on mean logistic loss.

    The scorer is homogeneous (no bias; the generator centers its data) and
    is projected back onto {v : ||v|| <= norm_bound} after every step, so the
    returned vector always lies in the hypothesis ball the capacity term is
    computed for. Deterministic: zero init, full-batch updates.
    """
    if norm_bound <= 0:
        raise ConfigError(f"norm_bound must be positive, got {norm_bound}")
    x = np.asarray(x, dtype=np.float64)
    yv = _check_pm_labels(y)
    if x.ndim != 2 or x.shape[0] != yv.shape[0]:
        raise DimensionError(f"features {x.shape} do not align with {yv.shape[0]} labels")
    n = x.shape[0]
    v = np.zeros(x.shape[1])
    for _ in range(steps):
        s = x @ v
        grad = -(x.T @ (yv * _sigmoid(-yv * s))) / n
        v = v - learning_rate * grad
        nrm = float(np.linalg.norm(v))
        if nrm > norm_bound:
            v *= norm_bound / nrm
    return v


def rademacher_linear(x: np.ndarray, norm_bound: float, num_draws: int = 200,
                      seed: int = 0) -> float:
    """Monte-Carlo empirical Rademacher complexity of the linear L2-ball class.

    For {v : ||v|| <= B} the inner supremum is exact:
    sup_v (1/N) sum_i sigma_i <v, x_i> = (B/N) ||sum_i sigma_i x_i||, so only
    the expectation over sign vectors is sampled. Exactly linear in B for a
    fixed seed.
    """
    if norm_bound <= 0:
        raise ConfigError(f"norm_bound must be positive, got {norm_bound}")
    if num_draws < 1:
        raise ConfigError(f"num_draws must be >= 1, got {num_draws}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise DimensionError(f"features must be a non-empty 2-D array, got shape {x.shape}")
    n = x.shape[0]
    sigma = rng.stream("rademacher", seed).integers(0, 2, size=(num_draws, n)) * 2 - 1
    norms = np.linalg.norm(sigma @ x, axis=1)
    return float(norm_bound / n * norms.mean())


def score_to_logits(scores: np.ndarray) -> np.ndarray:
    """Two-class logit pair (-s/2, +s/2) for a scalar score.

    Softmax of the pair equals sigmoid(s), so cross-entropy on these logits
    is exactly the logistic loss, and the energy score is symmetric in s with
    its maximum at s = 0 (the most ambiguous prediction).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    return np.column_stack([-s / 2.0, s / 2.0])


# ---------------------------------------------------------------------------
# weight rules for the bench


@dataclass(frozen=True)
class WeightRule:
    """How the bench turns scores into per-sample weights.

    static: constant target weights. energy: affine in the energy score of
    the scorer's logit pair, calibrated on the training sample. oracle:
    affine in the per-sample logistic loss itself (clairvoyant; it uses the
    labels of the split it weights, which is legitimate for checking the
    ordering claims but is not a deployable predictor).
    """

    mode: str = "static"
    alpha_scale: float = 0.5
    normalize: bool = False
    clamp_nonneg: bool = False
    targets: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in WEIGHT_RULES:
            raise ConfigError(f"unknown weight rule {self.mode!r}, expected one of {WEIGHT_RULES}")
        if self.alpha_scale <= 0:
            raise ConfigError(f"alpha_scale must be positive, got {self.alpha_scale}")

    def targets_for(self, num_modalities: int) -> tuple[float, ...]:
        if self.targets is None:
            return (1.0 / num_modalities,) * num_modalities
        if len(self.targets) != num_modalities:
            raise ConfigError(
                f"got {len(self.targets)} targets for {num_modalities} modalities")
        return tuple(float(t) for t in self.targets)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "alpha_scale": self.alpha_scale,
            "normalize": self.normalize,
            "clamp_nonneg": self.clamp_nonneg,
            "targets": list(self.targets) if self.targets else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightRule":
        return cls(
            mode=str(d.get("mode", "static")),
            alpha_scale=float(d.get("alpha_scale", 0.5)),
            normalize=bool(d.get("normalize", False)),
            clamp_nonneg=bool(d.get("clamp_nonneg", False)),
            targets=tuple(d["targets"]) if d.get("targets") else None,
        )


def _rule_signal(rule: WeightRule, scores: Sequence[np.ndarray],
                 losses: Sequence[np.ndarray]) -> list[np.ndarray]:
    """The per-modality uncertainty signal the rule weights against."""
    if rule.mode == "energy":
        return [uncertainty.energy_score(score_to_logits(s), 1.0, m).values
                for m, s in enumerate(scores)]
    if rule.mode == "oracle":
        return [np.asarray(l, dtype=np.float64) for l in losses]
    raise ConfigError("static rule has no uncertainty signal")


def rule_weights(rule: WeightRule, train_scores: Sequence[np.ndarray],
                 train_losses: Sequence[np.ndarray],
                 eval_scores: Optional[Sequence[np.ndarray]] = None,
                 eval_losses: Optional[Sequence[np.ndarray]] = None,
                 ) -> tuple[np.ndarray, np.ndarray, fusion.WeightPolicy]:
    """Calibrate on the training sample; weights for train and eval splits.

    Returns (weights_train, weights_eval, policy); eval weights fall back to
    the train weights when no eval split is given.
    """
    m_count = len(train_scores)
    targets = rule.targets_for(m_count)
    if rule.mode == "static":
        policy = fusion.WeightPolicy("static", static_weights=targets,
                                     normalize=rule.normalize,
                                     clamp_nonneg=rule.clamp_nonneg)
        n_train = np.asarray(train_scores[0]).shape[0]
        w_train = fusion.compute_weights(policy, num_samples=n_train).weights
        n_eval = np.asarray(eval_scores[0]).shape[0] if eval_scores is not None else n_train
        w_eval = fusion.compute_weights(policy, num_samples=n_eval).weights
        return w_train, w_eval, policy
    u_train = _rule_signal(rule, train_scores, train_losses)
    alpha = fusion.default_alpha(u_train, rule.alpha_scale)
    beta = fusion.calibrate(u_train, targets, alpha)
    policy = fusion.WeightPolicy("dynamic", alpha=alpha, beta=beta,
                                 normalize=rule.normalize, clamp_nonneg=rule.clamp_nonneg)
    w_train = fusion.compute_weights(policy, u_train).weights
    if eval_scores is None:
        return w_train, w_train, policy
    u_eval = _rule_signal(rule, eval_scores, eval_losses)
    w_eval = fusion.compute_weights(policy, u_eval).weights
    return w_train, w_eval, policy


# ---------------------------------------------------------------------------
# reports


def population_cov(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in covariance (1/N normalization). Exactly 0.0 for a constant input."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"inputs must have equal length, got {a.shape} and {b.shape}")
    if a.max() == a.min() or b.max() == b.min():
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean())


@dataclass(frozen=True)
class ModalityTerms:
    mean_weight: float
    empirical_loss: float
    rademacher: float
    cov_weight_loss: float

    @property
    def loss_term(self) -> float:
        return self.mean_weight * self.empirical_loss

    @property
    def capacity_term(self) -> float:
        return self.mean_weight * self.rademacher

    def to_dict(self) -> dict:
        return {
            "mean_weight": self.mean_weight,
            "empirical_loss": self.empirical_loss,
            "rademacher": self.rademacher,
            "cov_weight_loss": self.cov_weight_loss,
            "loss_term": self.loss_term,
            "capacity_term": self.capacity_term,
        }


@dataclass(frozen=True)
class BoundReport:
    per_modality: tuple[ModalityTerms, ...]
    confidence_term: float
    total_bound: float
    gerror_estimate: float
    delta: float
    num_train: int
    num_modalities: int

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "per_modality": [t.to_dict() for t in self.per_modality],
            "confidence_term": self.confidence_term,
            "total_bound": self.total_bound,
            "gerror_estimate": self.gerror_estimate,
            "delta": self.delta,
            "num_train": self.num_train,
            "num_modalities": self.num_modalities,
        }


def confidence_term(delta: float, num_modalities: int, num_train: int) -> float:
    """M * sqrt(ln(1/delta) / (2N))."""
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if num_train < 1 or num_modalities < 1:
        raise ConfigError("need at least one sample and one modality")
    return num_modalities * float(np.sqrt(np.log(1.0 / delta) / (2.0 * num_train)))


def bound_report(train_scores: Sequence[np.ndarray], train_losses: Sequence[np.ndarray],
                 weights_train: np.ndarray, eval_scores: Sequence[np.ndarray],
                 eval_y: np.ndarray, weights_eval: np.ndarray,
                 rademacher_terms: Sequence[float], delta: float) -> BoundReport:
    """Assemble the bound's terms from measured pieces.

    All expectations on the right-hand side are training-sample estimates;
    the generalization-error estimate is the mean logistic loss of the fused
    score on the (large, fresh) evaluation sample.
    """
    m_count = len(train_scores)
    if not (len(train_losses) == len(eval_scores) == len(rademacher_terms) == m_count):
        raise DimensionError("per-modality inputs must align")
    w_train = np.asarray(weights_train, dtype=np.float64)
    w_eval = np.asarray(weights_eval, dtype=np.float64)
    if w_train.shape[1] != m_count or w_eval.shape[1] != m_count:
        raise DimensionError("weight matrices must have one column per modality")
    n_train = w_train.shape[0]
    yv = _check_pm_labels(eval_y)

    terms = []
    for m in range(m_count):
        terms.append(ModalityTerms(
            mean_weight=float(w_train[:, m].mean()),
            empirical_loss=float(np.asarray(train_losses[m]).mean()),
            rademacher=float(rademacher_terms[m]),
            cov_weight_loss=population_cov(w_train[:, m], train_losses[m]),
        ))
    conf = confidence_term(delta, m_count, n_train)
    total = (sum(t.loss_term for t in terms)
             + sum(t.capacity_term for t in terms)
             + sum(t.cov_weight_loss for t in terms)
             + conf)
    fused_eval = sum(w_eval[:, m] * np.asarray(eval_scores[m]) for m in range(m_count))
    gerror = float(logistic_loss(fused_eval, yv).mean())
    return BoundReport(tuple(terms), conf, float(total), gerror, delta, n_train, m_count)


@dataclass(frozen=True)
class ConditionCheck:
    """The two ordering conditions for dynamic-beats-static, measured.

    mean_gaps: |mean(w_m) - static target| per modality. correlations:
    pearson r(w_m, loss_m) per modality (NaN when the weights are constant,
    which fails the verdict). verdict is True when every gap is within
    tolerance and every correlation is <= tolerance.
    """

    mean_gaps: tuple[float, ...]
    correlations: tuple[float, ...]
    tolerance: float
    verdict: bool

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "mean_gaps": list(self.mean_gaps),
            "correlations": list(self.correlations),
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }


def condition_check(weights: np.ndarray, losses: Sequence[np.ndarray],
                    static_targets: Sequence[float], tolerance: float = 1e-9) -> ConditionCheck:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != len(losses) or len(losses) != len(static_targets):
        raise DimensionError("weights, losses and targets must align per modality")
    gaps = []
    cors = []
    for m in range(w.shape[1]):
        l = np.asarray(losses[m], dtype=np.float64).ravel()
        if l.max() == l.min():
            raise DegenerateInputError(f"modality {m} has a constant loss vector")
        gaps.append(abs(float(w[:, m].mean()) - float(static_targets[m])))
        col = w[:, m]
        if col.max() == col.min():
            cors.append(float("nan"))  # constant weights: correlation undefined
        else:
            cors.append(uncertainty.pearson_r(col, l))
    verdict = all(g <= tolerance for g in gaps) and all(c <= tolerance for c in cors)
    return ConditionCheck(tuple(gaps), tuple(cors), tolerance, bool(verdict))


def convexity_split_check(weights: np.ndarray, scores: Sequence[np.ndarray],
                          y: np.ndarray) -> float:
    """Max over samples of loss(fused) - weighted sum of per-modality losses.

    Requires each weight row to be a convex combination (non-negative, summing
    to one); by convexity of the logistic loss in the score the result should
    never exceed numerical noise.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != len(scores):
        raise DimensionError("weights must have one column per score vector")
    if np.abs(w.sum(axis=1) - 1.0).max() > 1e-9 or w.min() < -1e-12:
        raise ConfigError("weight rows must be convex combinations")
    yv = _check_pm_labels(y)
    smat = np.column_stack([np.asarray(s, dtype=np.float64).ravel() for s in scores])
    fused = (w * smat).sum(axis=1)
    lhs = logistic_loss(fused, yv)
    rhs = (w * np.column_stack([logistic_loss(smat[:, m], yv)
                                for m in range(smat.shape[1])])).sum(axis=1)
    return float((lhs - rhs).max())


# ---------------------------------------------------------------------------
# end-to-end trials


@dataclass(frozen=True)
class BoundBenchConfig:
    """One bench trial: generate data, fit projected scorers, measure the bound."""

    spec: SyntheticSpec                      # two-class; num_samples is the train size
    rule: WeightRule
    eval_samples: int = 100_000
    delta: float = 0.1
    norm_bound: float | tuple[float, ...] = 1.0
    num_draws: int = 200
    scorer_steps: int = 300
    scorer_lr: float = 0.5

    def __post_init__(self):
        if self.spec.num_classes != 2:
            raise ConfigError("the bound bench is a two-class setting")
        if self.eval_samples < 1:
            raise ConfigError(f"eval_samples must be >= 1, got {self.eval_samples}")

    def bounds_for(self, num_modalities: int) -> tuple[float, ...]:
        if np.isscalar(self.norm_bound):
            return (float(self.norm_bound),) * num_modalities
        if len(self.norm_bound) != num_modalities:
            raise ConfigError("need one norm bound per modality")
        return tuple(float(b) for b in self.norm_bound)


@dataclass
class BoundTrialResult:
    report: BoundReport
    condition: ConditionCheck
    dynamic_gerror: float
    static_gerror: float
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "seed": self.seed,
            "report": self.report.to_json_dict(),
            "condition": self.condition.to_json_dict(),
            "dynamic_gerror": self.dynamic_gerror,
            "static_gerror": self.static_gerror,
        }


def _pm(ds: MultimodalDataset) -> np.ndarray:
    return ds.labels * 2.0 - 1.0


def run_bound_trial(cfg: BoundBenchConfig, seed: int) -> BoundTrialResult:
    """Generate train/eval splits, fit scorers, and measure every term.

    The static comparison reuses the same scorers under uniform constant
    weights, so the dynamic-static gap isolates the weighting itself.
    """
    train = generate(dataclasses.replace(cfg.spec, seed=rng.mix(seed, 0)))
    eval_ds = generate(dataclasses.replace(
        cfg.spec, num_samples=cfg.eval_samples, seed=rng.mix(seed, 1)))
    y_train = _pm(train)
    y_eval = _pm(eval_ds)
    m_count = train.num_modalities
    bounds = cfg.bounds_for(m_count)

    scorers = [fit_linear_scorer(x, y_train, bounds[m], cfg.scorer_steps, cfg.scorer_lr)
               for m, x in enumerate(train.arrays())]
    s_train = [x @ v for x, v in zip(train.arrays(), scorers)]
    s_eval = [x @ v for x, v in zip(eval_ds.arrays(), scorers)]
    l_train = [logistic_loss(s, y_train) for s in s_train]
    l_eval = [logistic_loss(s, y_eval) for s in s_eval]

    w_train, w_eval, _ = rule_weights(cfg.rule, s_train, l_train, s_eval, l_eval)
    rad = [rademacher_linear(x, bounds[m], cfg.num_draws, seed=rng.mix(seed, 2 + m))
           for m, x in enumerate(train.arrays())]
    report = bound_report(s_train, l_train, w_train, s_eval, y_eval, w_eval, rad, cfg.delta)

    condition = condition_check(w_train, l_train, cfg.rule.targets_for(m_count))

    static_rule = WeightRule("static", targets=cfg.rule.targets_for(m_count))
    _, w_eval_static, _ = rule_weights(static_rule, s_train, l_train, s_eval, l_eval)
    fused_static = sum(w_eval_static[:, m] * s_eval[m] for m in range(m_count))
    static_gerror = float(logistic_loss(fused_static, y_eval).mean())

    return BoundTrialResult(report, condition, report.gerror_estimate, static_gerror, seed)
