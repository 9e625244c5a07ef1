"""Joint training of per-modality classifiers with uncertainty-weighted fusion.

The overall objective per minibatch is

    CE(fused logits, y) + sum_m CE(logits_m, y) + lambda * ranking penalty,

where fused logits weight each modality per sample by an affine function of
its uncertainty score. The ranking penalty compares weight gaps against gaps
in each sample's historical training loss (a running per-sample mean over
epochs), nudging the weight function to order samples the way their loss
trajectories do. Weights are stop-gradiented inside the fused CE term by
default but stay differentiable inside the penalty; --full-weight-grad lifts
the stop.

Weight calibration (alpha from score dispersion, beta from a mean-weight
target) is refreshed at every epoch boundary from a full forward pass over
the training set, and the final calibration is frozen into the returned
policy for evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import diffcore as dc
from . import fusion, optim, rng, uncertainty
from .data import MultimodalDataset
from .diffcore import Matrix, Tape, Var, backward
from .errors import ConfigError, DivergenceError
from .models import ModelConfig, UnimodalModel, forward, init, predict_logits

POLICY_MODES = ("dynamic", "static")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run. Defaults favor the reference recipe:
    penalty strength 0.1, trajectory window starting at epoch 1 and covering
    the whole run, unit temperatures, Adam at 1e-4."""

    epochs: int = 30
    batch_size: int = 128
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    reg_strength: float = 0.1
    history_start: int = 1
    history_window: Optional[int] = None  # None means the full run
    temperatures: tuple[float, ...] | float = 1.0
    estimator: str = "energy"
    policy_mode: str = "dynamic"
    alpha_scale: float = 0.5
    weight_targets: Optional[tuple[float, ...]] = None  # None means uniform 1/M
    normalize_weights: bool = False
    clamp_weights: bool = False
    full_weight_grad: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.reg_strength < 0:
            raise ConfigError(f"reg_strength must be >= 0, got {self.reg_strength}")
        if self.history_start < 1:
            raise ConfigError(f"history_start must be >= 1, got {self.history_start}")
        if self.history_window is not None and self.history_window < 1:
            raise ConfigError(f"history_window must be >= 1, got {self.history_window}")
        if self.alpha_scale <= 0:
            raise ConfigError(f"alpha_scale must be positive, got {self.alpha_scale}")
        if self.estimator not in uncertainty.ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.policy_mode not in POLICY_MODES:
            raise ConfigError(f"unknown policy_mode {self.policy_mode!r}")
        if self.optimizer not in optim.OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if np.isscalar(self.temperatures):
            if float(self.temperatures) <= 0:
                raise ConfigError(f"temperatures must be positive, got {self.temperatures}")
        else:
            temps = tuple(float(t) for t in self.temperatures)
            if any(t <= 0 for t in temps):
                raise ConfigError(f"temperatures must be positive, got {temps}")
            object.__setattr__(self, "temperatures", temps)
        if self.weight_targets is not None:
            wt = tuple(float(w) for w in self.weight_targets)
            if any(w < 0 for w in wt):
                raise ConfigError(f"weight_targets must be >= 0, got {wt}")
            object.__setattr__(self, "weight_targets", wt)

    def temps_for(self, num_modalities: int) -> tuple[float, ...]:
        if np.isscalar(self.temperatures):
            return (float(self.temperatures),) * num_modalities
        if len(self.temperatures) != num_modalities:
            raise ConfigError(
                f"got {len(self.temperatures)} temperatures for {num_modalities} modalities")
        return self.temperatures

    def targets_for(self, num_modalities: int) -> tuple[float, ...]:
        if self.weight_targets is None:
            return (1.0 / num_modalities,) * num_modalities
        if len(self.weight_targets) != num_modalities:
            raise ConfigError(
                f"got {len(self.weight_targets)} weight targets for {num_modalities} modalities")
        return self.weight_targets

    def to_dict(self) -> dict:
        temps = self.temperatures
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "reg_strength": self.reg_strength,
            "history_start": self.history_start,
            "history_window": self.history_window,
            "temperatures": float(temps) if np.isscalar(temps) else list(temps),
            "estimator": self.estimator,
            "policy_mode": self.policy_mode,
            "alpha_scale": self.alpha_scale,
            "weight_targets": list(self.weight_targets) if self.weight_targets else None,
            "normalize_weights": self.normalize_weights,
            "clamp_weights": self.clamp_weights,
            "full_weight_grad": self.full_weight_grad,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("temperatures", "weight_targets"):
            if isinstance(kwargs.get(key), list):
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"bad train config: {e}") from e


# ---------------------------------------------------------------------------
# per-sample loss trajectories


@dataclass(frozen=True)
class LossHistory:
    """Running mean of each sample's per-modality training loss over epochs.

    Epochs before start_epoch only bootstrap the values (the latest loss is
    stored verbatim); from start_epoch on, each epoch contributes to a running
    mean until `window` epochs have been absorbed, after which the values
    freeze.
    """

    kappa: tuple[np.ndarray, ...]  # one (n,) vector per modality
    contributions: int
    start_epoch: int
    window: int


def init_loss_history(num_modalities: int, num_samples: int, start_epoch: int = 1,
                      window: int = 1) -> LossHistory:
    if start_epoch < 1:
        raise ConfigError(f"start_epoch must be >= 1, got {start_epoch}")
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    kappa = tuple(np.zeros(num_samples) for _ in range(num_modalities))
    return LossHistory(kappa, 0, start_epoch, window)


def update_loss_history(history: LossHistory, epoch: int,
                        per_sample_losses: Sequence[np.ndarray]) -> LossHistory:
    """Fold one epoch's per-sample losses into the history (functional update)."""
    if len(per_sample_losses) != len(history.kappa):
        raise ConfigError(
            f"got {len(per_sample_losses)} loss vectors for {len(history.kappa)} modalities")
    losses = [np.asarray(l, dtype=np.float64) for l in per_sample_losses]
    for l, k in zip(losses, history.kappa):
        if l.shape != k.shape:
            raise ConfigError(f"loss vector shape {l.shape} does not match history {k.shape}")
    if epoch < history.start_epoch:
        return replace(history, kappa=tuple(l.copy() for l in losses))
    c = history.contributions
    if c >= history.window:
        return history
    if c == 0:
        kappa = tuple(l.copy() for l in losses)
    else:
        kappa = tuple((k * c + l) / (c + 1) for k, l in zip(history.kappa, losses))
    return replace(history, kappa=kappa, contributions=c + 1)


# ---------------------------------------------------------------------------
# loss assembly


def per_sample_ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """-log softmax(z)[y] per row, computed max-shifted."""
    z = np.asarray(logits, dtype=np.float64)
    y = dc._check_labels(labels, z.shape[0], z.shape[1])
    m = z.max(axis=1, keepdims=True)
    logsoft = z - m - np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    return -logsoft[np.arange(z.shape[0]), y]


def reg_pair_term(w_i: Var, w_j: Var, kappa_i: float, kappa_j: float) -> Var:
    """max(0, g * (kappa_i - kappa_j) + |w_i - w_j|) for one pair of samples.

    g is +1, 0 or -1 as w_i is greater than, equal to or less than w_j and is
    treated as a constant (no gradient flows through it). The penalty is zero
    whenever the weight gap is anti-ordered against the loss-history gap and
    the history gap dominates.
    """
    if w_i.shape != (1, 1) or w_j.shape != (1, 1):
        raise dc.ShapeError("reg_pair_term expects 1x1 weight vars")
    wi, wj = w_i.array[0, 0], w_j.array[0, 0]
    g = float(np.sign(wi - wj))
    c = g * (float(kappa_i) - float(kappa_j))
    return dc.relu(dc.shift(dc.absolute(dc.sub(w_i, w_j)), c))


def _pair_terms(w: Var, pair_idx: np.ndarray, kappa: np.ndarray) -> Var:
    """Vectorized reg_pair_term over pairs (i, pair_idx[i]); returns (n, 1)."""
    wj = dc.gather_rows(w, pair_idx)
    wv = w.array[:, 0]
    g = np.sign(wv - wv[pair_idx])
    c = (g * (kappa - kappa[pair_idx])).reshape(-1, 1)
    return dc.relu(dc.add(dc.absolute(dc.sub(w, wj)), w.tape.leaf(c)))


class LossParts(NamedTuple):
    total: Var
    fused_ce: Var
    unimodal_ce: list[Var]
    reg: Optional[Var]  # None when the penalty is inactive


def overall_loss(fused_logits: Var, unimodal_logits: Sequence[Var], labels: np.ndarray,
                 weights: Optional[Sequence[Var]] = None,
                 kappa_batch: Optional[Sequence[np.ndarray]] = None,
                 reg_strength: float = 0.0,
                 pairings: Optional[Sequence[np.ndarray]] = None) -> LossParts:
    """Fused CE + per-modality CE + reg_strength * mean pairwise ranking penalty.

    The penalty averages over every sampled pair of every modality. Pass
    `pairings` as one index vector per modality (pairs are (i, pairing[i])).
    """
    fused_ce = dc.softmax_cross_entropy(fused_logits, labels)
    unimodal_ce = [dc.softmax_cross_entropy(z, labels) for z in unimodal_logits]
    total = fused_ce
    for ce in unimodal_ce:
        total = dc.add(total, ce)
    reg = None
    if reg_strength > 0.0 and pairings is not None:
        if weights is None or kappa_batch is None:
            raise ConfigError("ranking penalty needs weights and loss-history values")
        if not (len(weights) == len(kappa_batch) == len(pairings) == len(unimodal_ce)):
            raise ConfigError("weights, kappa_batch and pairings must align with modalities")
        acc = None
        for w, idx, kap in zip(weights, pairings, kappa_batch):
            term = dc.mean(_pair_terms(w, np.asarray(idx, dtype=np.int64), np.asarray(kap)))
            acc = term if acc is None else dc.add(acc, term)
        reg = dc.scale(acc, 1.0 / len(unimodal_ce))
        total = dc.add(total, dc.scale(reg, reg_strength))
    return LossParts(total, fused_ce, unimodal_ce, reg)


def _sattolo(stream, n: int) -> np.ndarray:
    """Uniform cyclic permutation: no fixed points for n >= 2."""
    p = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(stream.integers(0, i))
        p[i], p[j] = p[j], p[i]
    return p


# ---------------------------------------------------------------------------
# the training engine


@dataclass
class TrainReport:
    method: str
    seed: int
    epochs: int
    num_modalities: int
    temperatures: tuple[float, ...]
    train_overall: list[float]
    train_fused_ce: list[float]
    train_unimodal_ce: list[list[float]]  # [epoch][modality]
    train_reg: list[float]
    val_fused_ce: Optional[list[float]]
    val_accuracy: Optional[list[float]]
    policy: fusion.WeightPolicy
    models: list[UnimodalModel]
    wall_clock_seconds: float

    def to_json_dict(self) -> dict:
        # wall clock and model parameters stay out: reports must be
        # byte-identical across same-seed reruns, and checkpoints are
        # serialized separately.
        return {
            "version": 1,
            "method": self.method,
            "seed": self.seed,
            "epochs": self.epochs,
            "num_modalities": self.num_modalities,
            "temperatures": list(self.temperatures),
            "train_overall": self.train_overall,
            "train_fused_ce": self.train_fused_ce,
            "train_unimodal_ce": self.train_unimodal_ce,
            "train_reg": self.train_reg,
            "val_fused_ce": self.val_fused_ce,
            "val_accuracy": self.val_accuracy,
            "policy": self.policy.to_dict(),
        }


def _full_pass(models_list: list[UnimodalModel], arrays: list[np.ndarray], labels: np.ndarray,
               cfg: TrainConfig, temps: tuple[float, ...], epoch: int):
    logits = []
    ces = []
    scores = []
    for m, mdl in enumerate(models_list):
        z = predict_logits(mdl, arrays[m])
        if not np.isfinite(z).all():
            raise DivergenceError(f"non-finite logits in modality {m}", epoch)
        logits.append(z)
        ces.append(per_sample_ce(z, labels))
        scores.append(uncertainty.estimate(cfg.estimator, z, temps[m], m))
    return logits, ces, scores


def _calibrated_policy(cfg: TrainConfig, scores, targets) -> fusion.WeightPolicy:
    alpha = fusion.default_alpha(scores, cfg.alpha_scale)
    beta = fusion.calibrate(scores, targets, alpha)
    return fusion.WeightPolicy("dynamic", alpha=alpha, beta=beta,
                               normalize=cfg.normalize_weights,
                               clamp_nonneg=cfg.clamp_weights)


def _fused_logits_on_tape(tape: Tape, logits_vars: list[Var], weight_vars: list[Var],
                          policy: fusion.WeightPolicy, full_weight_grad: bool) -> Var:
    """Weighted sum of logits rows; mirrors fusion.compute_weights + fusion.fuse.

    Clamping happens on-tape (relu); normalization denominators are treated
    as constants, so no gradient flows through the row sums.
    """
    used = []
    for w in weight_vars:
        wf = dc.relu(w) if policy.clamp_nonneg else w
        used.append(wf if full_weight_grad else dc.stop_gradient(wf))
    fused = None
    for z, w in zip(logits_vars, used):
        term = dc.scale_rows(z, w)
        fused = term if fused is None else dc.add(fused, term)
    if policy.normalize:
        sums = np.column_stack([w.array[:, 0] for w in used]).sum(axis=1)
        degenerate = sums <= fusion.DEGENERATE_ROW_SUM
        inv = np.where(degenerate, 0.0, 1.0 / np.where(degenerate, 1.0, sums))
        fused = dc.scale_rows(fused, tape.leaf(inv.reshape(-1, 1)))
        if degenerate.any():
            unif = None
            for z in logits_vars:
                term = dc.scale(z, 1.0 / len(logits_vars))
                unif = term if unif is None else dc.add(unif, term)
            fused = dc.add(fused, dc.scale_rows(unif, tape.leaf(
                degenerate.astype(np.float64).reshape(-1, 1))))
    return fused


def _train_engine(dataset: MultimodalDataset, model_configs, cfg: TrainConfig, method: str,
                  val_data: Optional[MultimodalDataset] = None) -> TrainReport:
    started = time.perf_counter()
    m_count = dataset.num_modalities
    n = dataset.num_samples
    if isinstance(model_configs, ModelConfig):
        model_configs = [model_configs] * m_count
    model_configs = list(model_configs)
    if len(model_configs) != m_count:
        raise ConfigError(f"got {len(model_configs)} model configs for {m_count} modalities")
    temps = cfg.temps_for(m_count)
    targets = cfg.targets_for(m_count)
    dynamic = cfg.policy_mode == "dynamic"
    arrays = dataset.arrays()
    labels = dataset.labels

    models_list = [init(mc, dataset.meta.dims[m], dataset.num_classes, modality=m, seed=cfg.seed)
                   for m, mc in enumerate(model_configs)]
    optimizer = optim.make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2)
    window = cfg.history_window if cfg.history_window is not None else cfg.epochs
    history = init_loss_history(m_count, n, cfg.history_start, window)

    # epoch-0 pass: bootstrap loss history and the first calibration
    _, ces, scores = _full_pass(models_list, arrays, labels, cfg, temps, 0)
    history = update_loss_history(history, 0, ces)
    if dynamic:
        policy = _calibrated_policy(cfg, scores, targets)
    else:
        policy = fusion.WeightPolicy("static", static_weights=targets,
                                     normalize=cfg.normalize_weights,
                                     clamp_nonneg=cfg.clamp_weights)

    train_overall: list[float] = []
    train_fused: list[float] = []
    train_uni: list[list[float]] = []
    train_reg: list[float] = []
    val_fused: Optional[list[float]] = [] if val_data is not None else None
    val_acc: Optional[list[float]] = [] if val_data is not None else None

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.stream(f"shuffle/epoch{epoch}", cfg.seed).permutation(n)
        sums = np.zeros(3 + m_count)  # overall, fused, reg, then one CE per modality
        try:
            for bi, lo in enumerate(range(0, n, cfg.batch_size)):
                rows = perm[lo:lo + cfg.batch_size]
                yb = labels[rows]
                tape = Tape()
                logits_vars = []
                pvar_maps = []
                for m, mdl in enumerate(models_list):
                    xv = tape.leaf(arrays[m][rows])
                    z, pv = forward(mdl, tape, xv)
                    logits_vars.append(z)
                    pvar_maps.append(pv)
                weight_vars = []
                for m, z in enumerate(logits_vars):
                    if not dynamic:
                        weight_vars.append(tape.leaf(np.full((rows.size, 1), targets[m])))
                    elif cfg.estimator == "energy":
                        u = uncertainty.energy_score_var(z, temps[m])
                        weight_vars.append(dc.shift(dc.scale(u, policy.alpha[m]), policy.beta[m]))
                    else:
                        # confidence / dst scores are evaluation-level estimators;
                        # they enter the tape as constants
                        vals = uncertainty.estimate(cfg.estimator, z.array, temps[m], m).values
                        w = policy.alpha[m] * vals + policy.beta[m]
                        weight_vars.append(tape.leaf(w.reshape(-1, 1)))
                fused = _fused_logits_on_tape(tape, logits_vars, weight_vars, policy,
                                              cfg.full_weight_grad)
                pairings = None
                kappas = None
                if cfg.reg_strength > 0.0:
                    pairings = [
                        _sattolo(rng.stream(f"pairs/epoch{epoch}/batch{bi}/modality{m}", cfg.seed),
                                 rows.size)
                        for m in range(m_count)
                    ]
                    kappas = [history.kappa[m][rows] for m in range(m_count)]
                parts = overall_loss(fused, logits_vars, yb, weight_vars, kappas,
                                     cfg.reg_strength, pairings)
                grads = backward(parts.total)
                params = {}
                gvals = {}
                for m, pv in enumerate(pvar_maps):
                    for name, var in pv.items():
                        key = f"m{m}/{name}"
                        params[key] = models_list[m].params[name].array
                        gvals[key] = grads[var.nid].array
                new_params = optimizer.step(params, gvals)
                for m, mdl in enumerate(models_list):
                    for name in mdl.params:
                        mdl.params[name] = Matrix(new_params[f"m{m}/{name}"])
                frac = rows.size
                sums[0] += frac * parts.total.array[0, 0]
                sums[1] += frac * parts.fused_ce.array[0, 0]
                sums[2] += frac * (parts.reg.array[0, 0] if parts.reg is not None else 0.0)
                for m, ce in enumerate(parts.unimodal_ce):
                    sums[3 + m] += frac * ce.array[0, 0]
        except ValueError as e:
            raise DivergenceError(f"non-finite value during optimization: {e}", epoch) from e

        train_overall.append(sums[0] / n)
        train_fused.append(sums[1] / n)
        train_reg.append(sums[2] / n)
        train_uni.append([sums[3 + m] / n for m in range(m_count)])

        # epoch boundary: refresh loss history and calibration
        _, ces, scores = _full_pass(models_list, arrays, labels, cfg, temps, epoch)
        history = update_loss_history(history, epoch, ces)
        try:
            if dynamic:
                policy = _calibrated_policy(cfg, scores, targets)
            if val_data is not None:
                result = evaluate(models_list, policy, cfg.estimator, temps, val_data)
                val_fused.append(float(per_sample_ce(result.fused.fused_logits,
                                                     val_data.labels).mean()))
                val_acc.append(result.accuracy)
        except (ConfigError, ValueError) as e:
            # the same calibration succeeded on the epoch-0 statistics, so a
            # failure here means the statistics themselves blew up (for one,
            # an overflowing score spread makes the slope collapse to -0.0)
            raise DivergenceError(f"epoch statistics blew up: {e}", epoch) from e

    return TrainReport(
        method=method,
        seed=cfg.seed,
        epochs=cfg.epochs,
        num_modalities=m_count,
        temperatures=temps,
        train_overall=train_overall,
        train_fused_ce=train_fused,
        train_unimodal_ce=train_uni,
        train_reg=train_reg,
        val_fused_ce=val_fused,
        val_accuracy=val_acc,
        policy=policy,
        models=models_list,
        wall_clock_seconds=time.perf_counter() - started,
    )


def train_qmf(dataset: MultimodalDataset, model_configs, cfg: TrainConfig,
              val_data: Optional[MultimodalDataset] = None) -> TrainReport:
    """Train uncertainty-weighted fusion (or its static ablation via policy_mode)."""
    method = f"qmf-{cfg.estimator}" if cfg.policy_mode == "dynamic" else "static-late"
    return _train_engine(dataset, model_configs, cfg, method, val_data)


def train_static(dataset: MultimodalDataset, model_configs, cfg: TrainConfig,
                 val_data: Optional[MultimodalDataset] = None) -> TrainReport:
    """Uniform constant-weight late fusion: the dynamic path with a static
    policy and the ranking penalty switched off."""
    static_cfg = replace(cfg, policy_mode="static", reg_strength=0.0)
    return _train_engine(dataset, model_configs, static_cfg, "static-late", val_data)


def train_unimodal(dataset: MultimodalDataset, modality: int, model_config: ModelConfig,
                   cfg: TrainConfig, val_data: Optional[MultimodalDataset] = None) -> TrainReport:
    """Train a single modality's classifier with plain cross-entropy."""
    if not 0 <= modality < dataset.num_modalities:
        raise ConfigError(f"modality {modality} out of range")
    started = time.perf_counter()
    x = dataset.modalities[modality].array
    labels = dataset.labels
    n = dataset.num_samples
    mdl = init(model_config, dataset.meta.dims[modality], dataset.num_classes,
               modality=modality, seed=cfg.seed)
    optimizer = optim.make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2)
    series: list[float] = []
    val_fused: Optional[list[float]] = [] if val_data is not None else None
    val_acc: Optional[list[float]] = [] if val_data is not None else None
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.stream(f"shuffle/epoch{epoch}", cfg.seed).permutation(n)
        total = 0.0
        try:
            for lo in range(0, n, cfg.batch_size):
                rows = perm[lo:lo + cfg.batch_size]
                tape = Tape()
                z, pvars = forward(mdl, tape, tape.leaf(x[rows]))
                loss = dc.softmax_cross_entropy(z, labels[rows])
                grads = backward(loss)
                params = {name: mdl.params[name].array for name in pvars}
                gvals = {name: grads[v.nid].array for name, v in pvars.items()}
                new_params = optimizer.step(params, gvals)
                for name in mdl.params:
                    mdl.params[name] = Matrix(new_params[name])
                total += rows.size * loss.array[0, 0]
        except ValueError as e:
            raise DivergenceError(f"non-finite value during optimization: {e}", epoch) from e
        series.append(total / n)
        if val_data is not None:
            zv = predict_logits(mdl, val_data.modalities[modality].array)
            val_fused.append(float(per_sample_ce(zv, val_data.labels).mean()))
            val_acc.append(float((zv.argmax(axis=1) == val_data.labels).mean()))
    return TrainReport(
        method=f"unimodal-{modality}",
        seed=cfg.seed,
        epochs=cfg.epochs,
        num_modalities=1,
        temperatures=(cfg.temps_for(dataset.num_modalities)[modality],),
        train_overall=series,
        train_fused_ce=series,
        train_unimodal_ce=[[v] for v in series],
        train_reg=[0.0] * cfg.epochs,
        val_fused_ce=val_fused,
        val_accuracy=val_acc,
        policy=fusion.WeightPolicy("static", static_weights=(1.0,)),
        models=[mdl],
        wall_clock_seconds=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    accuracy: float
    weights: fusion.FusionWeights
    fused: fusion.FusedPrediction
    per_sample_ce: list[np.ndarray]
    uncertainties: list[uncertainty.UncertaintyScore]


def evaluate(models_list: Sequence[UnimodalModel], policy: fusion.WeightPolicy, estimator: str,
             temperatures: Sequence[float], dataset: MultimodalDataset) -> EvalResult:
    """Frozen-policy evaluation on a dataset (typically the held-out split)."""
    logits = [predict_logits(mdl, x) for mdl, x in zip(models_list, dataset.arrays())]
    scores = [uncertainty.estimate(estimator, z, temperatures[m], m)
              for m, z in enumerate(logits)]
    if policy.mode == "dynamic":
        weights = fusion.compute_weights(policy, scores)
    else:
        weights = fusion.compute_weights(policy, num_samples=dataset.num_samples)
    fused = fusion.fuse(weights, logits)
    accuracy = float((fused.labels == dataset.labels).mean())
    ces = [per_sample_ce(z, dataset.labels) for z in logits]
    return EvalResult(accuracy, weights, fused, ces, scores)


def evaluate_unimodal(model: UnimodalModel, dataset: MultimodalDataset,
                      modality: int) -> float:
    z = predict_logits(model, dataset.modalities[modality].array)
    return float((z.argmax(axis=1) == dataset.labels).mean())
