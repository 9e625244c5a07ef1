"""Command-line front end: generate / train / sweep / bound / correlate.

All commands read a JSON config (``--config``, schema version 1) and write
their artifacts under ``--out``. Runs are deterministic: every random draw is
keyed by the run seed, so re-running a command with the same config, seeds
and flags reproduces every output byte for byte, regardless of ``--jobs``.

Seed conventions (run seed s):
  dataset generation   mix(s, 1)     validation split  mix(s, 2)
  generate-time noise  mix(s, 3)     sweep noise i     mix(s, 100 + i)
  model init / shuffling / pair sampling use s directly.

Exit codes: 0 success, 2 bad config or usage, 3 training divergence,
4 I/O or artifact-format failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import csvio, data, fusion, rng, theory, training, uncertainty
from .data import MultimodalDataset, NoiseSpec, SyntheticSpec
from .errors import ConfigError, DegenerateInputError, DivergenceError, FormatError
from .models import ModelConfig, predict_logits, save_model
from .training import TrainConfig, TrainReport

CONFIG_VERSION = 1
FUSION_METHODS = ("qmf-energy", "qmf-confidence", "qmf-dst", "static-late")


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(path: str | Path) -> dict:
    # An unreadable file is an I/O failure (exit 4); once the bytes are in
    # hand, anything wrong with them is a configuration mistake (exit 2).
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path}: expected a JSON object at top level")
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config {path}: expected version {CONFIG_VERSION}, "
                          f"got {cfg.get('version')!r}")
    return cfg


def _parse_seeds(text: Optional[str]) -> list[int]:
    """Comma-separated integers and inclusive ranges: "0,2,5-8"."""
    if text is None:
        return [0]
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "-" in part[1:]:  # allow a leading minus sign
                lo_s, hi_s = part.rsplit("-", 1)
                lo, hi = int(lo_s), int(hi_s)
                if hi < lo:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError as e:
            raise ConfigError(f"bad seed list {text!r}: {e}") from e
    if not seeds:
        raise ConfigError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {text!r}")
    return seeds


def _parse_method(name: str, num_modalities: Optional[int] = None) -> tuple[str, Optional[int]]:
    """Returns (kind, modality): kind is the method name, modality only for unimodal-<m>."""
    if name in FUSION_METHODS:
        return name, None
    if name.startswith("unimodal-"):
        try:
            m = int(name[len("unimodal-"):])
        except ValueError as e:
            raise ConfigError(f"bad method {name!r}") from e
        if m < 0 or (num_modalities is not None and m >= num_modalities):
            raise ConfigError(f"method {name!r}: modality index out of range")
        return name, m
    raise ConfigError(f"unknown method {name!r}; expected one of {FUSION_METHODS} "
                      f"or unimodal-<m>")


def datasets_for_run(cfg: dict, seed: int) -> tuple[MultimodalDataset,
                                                    Optional[MultimodalDataset]]:
    """(train split, validation split or None) for one run seed.

    Synthetic data is drawn with dataset seed mix(seed, 1); a dataset loaded
    from disk is identical across run seeds. The validation split uses
    mix(seed, 2). Exposed so offline checks can rebuild the exact splits a
    command used.
    """
    if "dataset_path" in cfg:
        ds = data.load(cfg["dataset_path"])
    elif "synthetic" in cfg:
        spec = SyntheticSpec.from_dict(cfg["synthetic"])
        ds = data.generate(dataclasses.replace(spec, seed=rng.mix(seed, 1)))
    else:
        raise ConfigError("config needs either 'dataset_path' or 'synthetic'")
    val_fraction = float(cfg.get("val_fraction", 0.2))
    if val_fraction == 0.0:
        return ds, None
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    return data.split_dataset(ds, 1.0 - val_fraction, seed=rng.mix(seed, 2))


def _model_configs(cfg: dict) -> ModelConfig | list[ModelConfig]:
    section = cfg.get("model", {})
    if isinstance(section, list):
        return [ModelConfig.from_dict(m) for m in section]
    return ModelConfig.from_dict(section)


def _train_config(cfg: dict, method: str, seed: int, overrides: dict) -> TrainConfig:
    d = dict(cfg.get("train", {}))
    kind, _ = _parse_method(method)
    if kind in ("qmf-energy", "qmf-confidence", "qmf-dst"):
        d["policy_mode"] = "dynamic"
        d["estimator"] = kind.split("-", 1)[1]
    elif kind == "static-late":
        d["policy_mode"] = "static"
    d.update(overrides)
    d["seed"] = seed
    return TrainConfig.from_dict(d)


def _estimator_for(method: str, cfg: dict) -> str:
    if method.startswith("qmf-"):
        return method.split("-", 1)[1]
    return str(cfg.get("train", {}).get("estimator", "energy"))


def _flag_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    if getattr(args, "full_weight_grad", False):
        overrides["full_weight_grad"] = True
    if getattr(args, "normalize_weights", False):
        overrides["normalize_weights"] = True
    if getattr(args, "clamp_weights", False):
        overrides["clamp_weights"] = True
    return overrides


# ---------------------------------------------------------------------------
# parallel task execution (module-level workers so they pickle)


def _train_worker(payload: tuple[dict, str, int, dict]) -> TrainReport:
    cfg, method, seed, overrides = payload
    train_ds, val_ds = datasets_for_run(cfg, seed)
    tc = _train_config(cfg, method, seed, overrides)
    kind, modality = _parse_method(method, train_ds.num_modalities)
    if modality is not None:
        mc = _model_configs(cfg)
        if isinstance(mc, list):
            mc = mc[modality]
        return training.train_unimodal(train_ds, modality, mc, tc, val_ds)
    if kind == "static-late":
        return training.train_static(train_ds, _model_configs(cfg), tc, val_ds)
    return training.train_qmf(train_ds, _model_configs(cfg), tc, val_ds)


def _bound_worker(payload: tuple[dict, int]) -> theory.BoundTrialResult:
    cfg, seed = payload
    return theory.run_bound_trial(_bound_config(cfg), seed)


def _run_tasks(worker, payloads: list, jobs: int) -> list:
    """Run payloads in order; results always come back in submission order,
    so the reduce step is deterministic for any job count."""
    if jobs <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, payloads))


# ---------------------------------------------------------------------------
# shared output helpers


def _eval_accuracy(report: TrainReport, method: str, cfg: dict, seed: int,
                   eval_ds: MultimodalDataset) -> float:
    kind, modality = _parse_method(method, None)
    if modality is not None:
        return training.evaluate_unimodal(report.models[0], eval_ds, modality)
    result = training.evaluate(report.models, report.policy, _estimator_for(method, cfg),
                               report.temperatures, eval_ds)
    return result.accuracy


def _metric_row(method: str, kind: str, param: float, accs: list[float]) -> dict:
    arr = np.asarray(accs, dtype=np.float64)
    return {
        "method": method,
        "noise_kind": kind,
        "noise_param": float(param),
        "mean_acc": float(arr.mean()),
        "std_acc": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "worst_acc": float(arr.min()),
        "accuracies": [float(a) for a in arr],
    }


def _write_metrics(out: Path, rows: list[dict]) -> None:
    lines = ["method,noise_kind,noise_param,mean_acc,std_acc,worst_acc"]
    for r in rows:
        lines.append(",".join([
            r["method"], r["noise_kind"], csvio.format_float(r["noise_param"]),
            csvio.format_float(r["mean_acc"]), csvio.format_float(r["std_acc"]),
            csvio.format_float(r["worst_acc"]),
        ]))
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    csvio.write_json(out / "metrics.json", {"version": 1, "rows": rows})


def _weight_header(m_count: int) -> list[str]:
    return [f"w_{m}" for m in range(m_count)]


def _save_run_artifacts(out: Path, seed: int, report: TrainReport, method: str,
                        cfg: dict, eval_ds: MultimodalDataset) -> Optional[training.EvalResult]:
    """report_<seed>.json, per-modality checkpoints and, for fusion methods,
    weights_<seed>.csv with the per-sample weights on the evaluation split."""
    csvio.write_json(out / f"report_{seed}.json", report.to_json_dict())
    for mdl in report.models:
        save_model(mdl, out / f"models_{seed}" / f"modality_{mdl.modality}")
    _, modality = _parse_method(method, None)
    if modality is not None:
        return None
    result = training.evaluate(report.models, report.policy, _estimator_for(method, cfg),
                               report.temperatures, eval_ds)
    csvio.write_float_matrix(out / f"weights_{seed}.csv", result.weights.weights,
                             header=_weight_header(eval_ds.num_modalities))
    return result


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    if "synthetic" not in cfg:
        raise ConfigError("generate needs a 'synthetic' section")
    spec = SyntheticSpec.from_dict(cfg["synthetic"])
    noise_cfg = cfg.get("noise")
    if isinstance(noise_cfg, list):  # the sweep grid form: only a single entry works here
        if len(noise_cfg) > 1:
            raise ConfigError("generate materializes one dataset per seed and applies at "
                              f"most one noise spec; got a list of {len(noise_cfg)}")
        noise_cfg = noise_cfg[0] if noise_cfg else None
    noise = NoiseSpec.from_dict(noise_cfg) if noise_cfg else None
    out = Path(args.out)

    if args.seeds is None:
        jobs = [(None, spec, noise)]  # honor the seeds written in the config
    else:
        jobs = []
        for s in _parse_seeds(args.seeds):
            spec_s = dataclasses.replace(spec, seed=rng.mix(s, 1))
            noise_s = dataclasses.replace(noise, seed=rng.mix(s, 3)) if noise else None
            jobs.append((s, spec_s, noise_s))

    for s, spec_s, noise_s in jobs:
        ds = data.generate(spec_s)
        if noise_s is not None:
            ds = data.inject_noise(ds, noise_s)
        target = out if (s is None or len(jobs) == 1) else out / f"seed_{s}"
        data.save(ds, target)
        print(f"wrote {target} checksum {data.checksum(target)}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    method = str(cfg.get("method", "qmf-energy"))
    _parse_method(method)
    seeds = _parse_seeds(args.seeds)
    overrides = _flag_overrides(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    payloads = [(cfg, method, s, overrides) for s in seeds]
    accs: list[float] = []

    def consume(results) -> None:
        # artifacts land on disk per seed as results arrive, so the seeds
        # that finished keep their reports when a later seed diverges
        for s, report in zip(seeds, results):
            train_ds, val_ds = datasets_for_run(cfg, s)
            eval_ds = val_ds if val_ds is not None else train_ds
            _save_run_artifacts(out, s, report, method, cfg, eval_ds)
            acc = _eval_accuracy(report, method, cfg, s, eval_ds)
            accs.append(acc)
            print(f"seed {s}: accuracy {acc:.4f}")

    if args.jobs <= 1 or len(payloads) <= 1:
        consume(map(_train_worker, payloads))
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            consume(pool.map(_train_worker, payloads))
    _write_metrics(out, [_metric_row(method, "none", 0.0, accs)])
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    methods = [str(m) for m in cfg.get("methods", [])]
    if not methods:
        raise ConfigError("sweep needs a non-empty 'methods' list")
    for m in methods:
        _parse_method(m)
    noise_specs = [NoiseSpec.from_dict(d) for d in cfg.get("noise", [])]
    seeds = _parse_seeds(args.seeds)
    overrides = _flag_overrides(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    payloads = [(cfg, m, s, overrides) for m in methods for s in seeds]
    reports = _run_tasks(_train_worker, payloads, args.jobs)
    by_key = {(m, s): r for (_, m, s, _), r in zip(payloads, reports)}

    rows = []
    for method in methods:
        clean_accs = []
        noisy_accs: list[list[float]] = [[] for _ in noise_specs]
        for s in seeds:
            report = by_key[(method, s)]
            train_ds, val_ds = datasets_for_run(cfg, s)
            eval_ds = val_ds if val_ds is not None else train_ds
            clean_accs.append(_eval_accuracy(report, method, cfg, s, eval_ds))
            for i, nspec in enumerate(noise_specs):
                noised = data.inject_noise(
                    eval_ds, dataclasses.replace(nspec, seed=rng.mix(s, 100 + i)))
                noisy_accs[i].append(_eval_accuracy(report, method, cfg, s, noised))
        rows.append(_metric_row(method, "none", 0.0, clean_accs))
        for i, nspec in enumerate(noise_specs):
            rows.append(_metric_row(method, nspec.kind, nspec.main_param, noisy_accs[i]))
    _write_metrics(out, rows)
    print(f"wrote {out / 'metrics.csv'} ({len(rows)} rows)")
    return 0


def _bound_config(cfg: dict) -> theory.BoundBenchConfig:
    if "synthetic" not in cfg:
        raise ConfigError("bound needs a 'synthetic' section")
    model_cfg = cfg.get("model")
    if model_cfg is not None:
        # the capacity term is closed-form for the linear L2-ball class only
        mcs = model_cfg if isinstance(model_cfg, list) else [model_cfg]
        for mc in (ModelConfig.from_dict(m) for m in mcs):
            if mc.architecture != "linear":
                raise ConfigError("the bound bench fits linear scorers only; got "
                                  f"architecture {mc.architecture!r}")
    section = dict(cfg.get("bound", {}))
    rule = theory.WeightRule.from_dict(section.pop("rule", {}))
    spec = SyntheticSpec.from_dict(cfg["synthetic"])
    known = {"eval_samples", "delta", "norm_bound", "num_draws", "scorer_steps", "scorer_lr"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown bound config keys: {sorted(unknown)}")
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in section.items()}
    return theory.BoundBenchConfig(spec=spec, rule=rule, **kwargs)


def cmd_bound(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _bound_config(cfg)  # validate before any work is spawned
    seeds = _parse_seeds(args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    results = _run_tasks(_bound_worker, [(cfg, s) for s in seeds], args.jobs)

    valid = 0
    wins = 0
    improvements = []
    for s, res in zip(seeds, results):
        csvio.write_json(out / f"bound_{s}.json", res.to_json_dict())
        valid += res.report.gerror_estimate <= res.report.total_bound
        improvement = res.static_gerror - res.dynamic_gerror
        wins += improvement > 0
        improvements.append(improvement)
        print(f"seed {s}: bound {res.report.total_bound:.4f} "
              f"gerror {res.report.gerror_estimate:.4f} improvement {improvement:+.5f}")
    summary = {
        "version": 1,
        "num_trials": len(seeds),
        "valid_fraction": valid / len(seeds),
        "ordering_wins": wins,
        "mean_improvement": float(np.mean(improvements)),
        "mean_total_bound": float(np.mean([r.report.total_bound for r in results])),
        "mean_gerror": float(np.mean([r.report.gerror_estimate for r in results])),
        "condition_verdicts": [bool(r.condition.verdict) for r in results],
    }
    csvio.write_json(out / "bound_summary.json", summary)
    print(f"valid {valid}/{len(seeds)}, ordering wins {wins}/{len(seeds)}")
    return 0


def _estimator_weights(report: TrainReport, tc: TrainConfig, train_ds: MultimodalDataset,
                       eval_ds: MultimodalDataset) -> dict[str, np.ndarray]:
    """Evaluation-split weights for every uncertainty estimator, from the same
    checkpoints.

    Each estimator is recalibrated on the training split exactly the way the
    trainer recalibrates at an epoch boundary, so for the estimator the model
    was trained with this reproduces the shipped policy bit for bit. A static
    policy has constant weights whatever the estimator, so there is nothing
    to tabulate and the mapping is empty.
    """
    if report.policy.mode != "dynamic":
        return {}
    m_count = train_ds.num_modalities
    targets = tc.targets_for(m_count)
    temps = report.temperatures
    z_train = [predict_logits(mdl, x) for mdl, x in zip(report.models, train_ds.arrays())]
    z_eval = [predict_logits(mdl, x) for mdl, x in zip(report.models, eval_ds.arrays())]
    out = {}
    for estimator in uncertainty.ESTIMATORS:
        u_train = [uncertainty.estimate(estimator, z, temps[m], m)
                   for m, z in enumerate(z_train)]
        alpha = fusion.default_alpha(u_train, tc.alpha_scale)
        beta = fusion.calibrate(u_train, targets, alpha)
        policy = fusion.WeightPolicy("dynamic", alpha=alpha, beta=beta,
                                     normalize=tc.normalize_weights,
                                     clamp_nonneg=tc.clamp_weights)
        u_eval = [uncertainty.estimate(estimator, z, temps[m], m)
                  for m, z in enumerate(z_eval)]
        out[estimator] = fusion.compute_weights(policy, u_eval).weights
    return out


def cmd_correlate(args: argparse.Namespace) -> int:
    """Per-sample fusion weights vs unimodal losses on the evaluation split.

    Checkpoints are trained once with the configured method; each uncertainty
    estimator is then calibrated on the training split of those same
    checkpoints and correlated against per-modality evaluation losses, one
    table row per (seed, estimator, modality). An optional noise spec in the
    config degrades the evaluation split first. Emits weights_<seed>.csv (the
    trained policy), weights_<seed>_<estimator>.csv, losses_<seed>.csv,
    checkpoints, and the correlations table; rows are "n/a" when the
    correlation is undefined (constant weights, e.g. static fusion, or
    degenerate losses).
    """
    cfg = _load_config(args.config)
    method = str(cfg.get("method", "qmf-energy"))
    kind, modality = _parse_method(method)
    if modality is not None:
        raise ConfigError("correlate needs a fusion method, not unimodal-<m>")
    noise_cfg = cfg.get("noise")
    if isinstance(noise_cfg, list):
        if len(noise_cfg) > 1:
            raise ConfigError("correlate degrades one evaluation split and takes at most "
                              f"one noise spec; got a list of {len(noise_cfg)}")
        noise_cfg = noise_cfg[0] if noise_cfg else None
    noise = NoiseSpec.from_dict(noise_cfg) if noise_cfg else None
    seeds = _parse_seeds(args.seeds)
    overrides = _flag_overrides(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    reports = _run_tasks(_train_worker, [(cfg, method, s, overrides) for s in seeds], args.jobs)

    table: list[dict] = []
    for s, report in zip(seeds, reports):
        train_ds, val_ds = datasets_for_run(cfg, s)
        eval_ds = val_ds if val_ds is not None else train_ds
        if noise is not None:
            eval_ds = data.inject_noise(
                eval_ds, dataclasses.replace(noise, seed=rng.mix(s, 100)))
        result = _save_run_artifacts(out, s, report, method, cfg, eval_ds)
        losses = np.column_stack(result.per_sample_ce)
        csvio.write_float_matrix(out / f"losses_{s}.csv", losses,
                                 header=[f"ce_{m}" for m in range(eval_ds.num_modalities)])
        weight_sets = _estimator_weights(report, _train_config(cfg, method, s, overrides),
                                         train_ds, eval_ds)
        for estimator in uncertainty.ESTIMATORS:
            w_eval = weight_sets.get(estimator)
            if w_eval is not None:
                csvio.write_float_matrix(out / f"weights_{s}_{estimator}.csv", w_eval,
                                         header=_weight_header(eval_ds.num_modalities))
            for m in range(eval_ds.num_modalities):
                r: Optional[float] = None
                if w_eval is not None and w_eval[:, m].max() > w_eval[:, m].min():
                    try:
                        r = uncertainty.pearson_r(w_eval[:, m], losses[:, m])
                    except DegenerateInputError:
                        r = None
                table.append({"seed": s, "method": method, "estimator": estimator,
                              "modality": m, "pearson_r": r})

    lines = ["seed,method,estimator,modality,pearson_r"]
    for row in table:
        r = row["pearson_r"]
        lines.append(f"{row['seed']},{row['method']},{row['estimator']},{row['modality']},"
                     + ("n/a" if r is None or not np.isfinite(r) else csvio.format_float(r)))
    (out / "correlations.csv").write_text("\n".join(lines) + "\n",
                                          encoding="utf-8", newline="\n")
    csvio.write_json(out / "correlations.json", {"version": 1, "rows": table})
    print(f"wrote {out / 'correlations.csv'} ({len(table)} rows)")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qmf",
        description="Uncertainty-weighted late fusion: data generation, training, "
                    "robustness sweeps, generalization-bound bench, weight-loss "
                    "correlation tables.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, train_flags: bool = True):
        sp.add_argument("--config", required=True, help="JSON config file (version 1)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seeds", default=None,
                        help="comma-separated seeds / inclusive ranges, e.g. 0,2,5-8 "
                             "(default: 0)")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker processes for per-seed tasks (default: 1)")
        if train_flags:
            sp.add_argument("--full-weight-grad", action="store_true",
                            help="let gradients flow through fusion weights in the fused loss")
            sp.add_argument("--normalize-weights", action="store_true",
                            help="normalize each sample's weights to sum to one")
            sp.add_argument("--clamp-weights", action="store_true",
                            help="clamp fusion weights at zero")

    sp = sub.add_parser("generate", help="write synthetic multimodal datasets")
    common(sp, train_flags=False)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train one method across seeds")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep", help="methods x noise grid, aggregated metrics")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bound", help="generalization-bound trials across seeds")
    common(sp, train_flags=False)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("correlate", help="per-sample weight vs loss correlation table")
    common(sp)
    sp.set_defaults(func=cmd_correlate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 3
    except (OSError, FormatError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
