"""Training engine: config validation, loss-history lifecycle, loss assembly,
pair penalty, determinism, divergence handling, evaluation."""

import json
from dataclasses import replace

import numpy as np
import pytest
import scipy.special

import qmf.diffcore as dc
from qmf.data import SyntheticSpec, generate
from qmf.diffcore import Tape
from qmf.errors import ConfigError, DivergenceError
from qmf.fusion import compute_weights, fuse
from qmf.models import ModelConfig, predict_logits
from qmf.training import (
    LossHistory,
    TrainConfig,
    evaluate,
    evaluate_unimodal,
    init_loss_history,
    overall_loss,
    per_sample_ce,
    reg_pair_term,
    train_qmf,
    train_static,
    train_unimodal,
    update_loss_history,
    _sattolo,
)
from qmf import rng as qrng
from qmf import uncertainty

from helpers import assert_grads_match_fd


def tiny_dataset(n=60, seed=1, classes=2):
    spec = SyntheticSpec(num_modalities=2, num_classes=classes, num_samples=n,
                         dims=(3, 3), separations=(3.0, 1.5), within_std=0.7,
                         seed=seed)
    return generate(spec)


def quick_config(**kw):
    base = dict(epochs=2, batch_size=16, learning_rate=1e-3, seed=3)
    base.update(kw)
    return TrainConfig(**base)


LINEAR = ModelConfig("linear", init_scale=0.5)


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [
        dict(epochs=0),
        dict(batch_size=0),
        dict(reg_strength=-0.1),
        dict(history_start=0),
        dict(history_window=0),
        dict(alpha_scale=0.0),
        dict(estimator="entropy"),
        dict(policy_mode="oracle"),
        dict(optimizer="rmsprop"),
        dict(temperatures=0.0),
        dict(temperatures=(1.0, -1.0)),
        dict(weight_targets=(0.5, -0.5)),
    ])
    def test_invalid_rejected(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_dict_round_trip(self):
        c = TrainConfig(epochs=5, temperatures=(1.0, 2.0), weight_targets=(0.4, 0.6),
                        clamp_weights=True, seed=7)
        assert TrainConfig.from_dict(c.to_dict()) == c

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epochs": 3, "momentum": 0.9})

    def test_temps_broadcast(self):
        c = TrainConfig(temperatures=2.0)
        assert c.temps_for(3) == (2.0, 2.0, 2.0)
        c = TrainConfig(temperatures=(1.0, 2.0))
        assert c.temps_for(2) == (1.0, 2.0)
        with pytest.raises(ConfigError):
            c.temps_for(3)

    def test_targets_default_uniform(self):
        assert TrainConfig().targets_for(4) == (0.25, 0.25, 0.25, 0.25)
        c = TrainConfig(weight_targets=(0.3, 0.7))
        assert c.targets_for(2) == (0.3, 0.7)
        with pytest.raises(ConfigError):
            c.targets_for(3)


class TestLossHistory:
    def test_init_zeros(self):
        h = init_loss_history(2, 5, start_epoch=1, window=3)
        assert h.contributions == 0
        for k in h.kappa:
            np.testing.assert_array_equal(k, np.zeros(5))

    def test_init_validation(self):
        with pytest.raises(ConfigError):
            init_loss_history(1, 5, start_epoch=0)
        with pytest.raises(ConfigError):
            init_loss_history(1, 5, window=0)

    def test_bootstrap_then_mean_then_freeze(self):
        h = init_loss_history(1, 2, start_epoch=1, window=2)
        # epoch 0 is before the start: stored verbatim, no contribution counted
        h = update_loss_history(h, 0, [np.array([10.0, 10.0])])
        assert h.contributions == 0
        np.testing.assert_array_equal(h.kappa[0], [10.0, 10.0])
        # first contributing epoch replaces the bootstrap outright
        h = update_loss_history(h, 1, [np.array([2.0, 4.0])])
        assert h.contributions == 1
        np.testing.assert_array_equal(h.kappa[0], [2.0, 4.0])
        # second epoch: running mean
        h = update_loss_history(h, 2, [np.array([4.0, 0.0])])
        assert h.contributions == 2
        np.testing.assert_array_equal(h.kappa[0], [3.0, 2.0])
        # window exhausted: further epochs change nothing
        frozen = update_loss_history(h, 3, [np.array([100.0, 100.0])])
        assert frozen.contributions == 2
        np.testing.assert_array_equal(frozen.kappa[0], [3.0, 2.0])

    def test_three_epoch_running_mean(self):
        h = init_loss_history(1, 1, start_epoch=1, window=5)
        for epoch, v in enumerate([3.0, 6.0, 9.0], start=1):
            h = update_loss_history(h, epoch, [np.array([v])])
        assert h.kappa[0][0] == pytest.approx(6.0, abs=1e-15)

    def test_functional_update(self):
        h0 = init_loss_history(1, 2)
        h1 = update_loss_history(h0, 1, [np.array([5.0, 5.0])])
        np.testing.assert_array_equal(h0.kappa[0], [0.0, 0.0])
        assert h1 is not h0

    def test_shape_and_count_validation(self):
        h = init_loss_history(2, 3)
        with pytest.raises(ConfigError):
            update_loss_history(h, 1, [np.ones(3)])
        with pytest.raises(ConfigError):
            update_loss_history(h, 1, [np.ones(3), np.ones(4)])


class TestPerSampleCe:
    def test_matches_scipy_log_softmax(self):
        rng = np.random.default_rng(0)
        z = rng.normal(scale=3.0, size=(20, 4))
        y = rng.integers(0, 4, size=20)
        want = -scipy.special.log_softmax(z, axis=1)[np.arange(20), y]
        np.testing.assert_allclose(per_sample_ce(z, y), want, rtol=1e-13)

    def test_mean_matches_tape_ce(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(10, 3))
        y = rng.integers(0, 3, size=10)
        tape = Tape()
        ce = dc.softmax_cross_entropy(tape.leaf(z), y)
        assert per_sample_ce(z, y).mean() == pytest.approx(ce.array[0, 0], rel=1e-14)

    def test_stable_for_huge_logits(self):
        got = per_sample_ce(np.array([[1e4, 0.0]]), np.array([0]))
        assert got[0] == pytest.approx(0.0, abs=1e-12)


class TestPairPenalty:
    def case(self, wi, wj, ki, kj):
        tape = Tape()
        vi = tape.leaf(np.array([[wi]]))
        vj = tape.leaf(np.array([[wj]]))
        return reg_pair_term(vi, vj, ki, kj).array[0, 0]

    def test_case_table(self):
        # weight gap aligned with history gap -> penalized
        assert self.case(0.6, 0.4, 0.5, 0.2) == pytest.approx(0.5, abs=1e-15)
        # anti-ordered and history gap dominates -> zero
        assert self.case(0.6, 0.4, 0.2, 0.5) == pytest.approx(0.0, abs=1e-15)
        # anti-ordered but weight gap dominates -> residual
        assert self.case(0.9, 0.4, 0.2, 0.5) == pytest.approx(0.2, abs=1e-15)
        # equal weights -> |gap| = 0 and g = 0
        assert self.case(0.5, 0.5, 0.9, 0.1) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_in_pair_order(self):
        assert self.case(0.6, 0.4, 0.5, 0.2) == pytest.approx(
            self.case(0.4, 0.6, 0.2, 0.5), abs=1e-15)

    def test_shape_guard(self):
        tape = Tape()
        with pytest.raises(dc.ShapeError):
            reg_pair_term(tape.leaf(np.ones((2, 1))), tape.leaf(np.ones((1, 1))), 0.0, 0.0)

    def test_gradient_flows_through_weights(self):
        def build(tape, leaves):
            return reg_pair_term(leaves[0], leaves[1], 0.5, 0.2)

        assert_grads_match_fd(build, [np.array([[0.6]]), np.array([[0.4]])])


class TestOverallLoss:
    def make_inputs(self, n=8, m=2, k=3, seed=0):
        rng = np.random.default_rng(seed)
        tape = Tape()
        fused = tape.leaf(rng.normal(size=(n, k)))
        uni = [tape.leaf(rng.normal(size=(n, k))) for _ in range(m)]
        y = rng.integers(0, k, size=n)
        return tape, fused, uni, y, rng

    def test_sum_without_penalty(self):
        tape, fused, uni, y, _ = self.make_inputs()
        parts = overall_loss(fused, uni, y)
        assert parts.reg is None
        expected = (parts.fused_ce.array[0, 0] + parts.unimodal_ce[0].array[0, 0]) \
            + parts.unimodal_ce[1].array[0, 0]
        assert parts.total.array[0, 0] == expected

    def test_penalty_composition_matches_manual(self):
        tape, fused, uni, y, rng = self.make_inputs(n=10)
        w = [rng.uniform(0.1, 0.9, size=(10, 1)) for _ in range(2)]
        kap = [rng.gamma(2.0, size=10) for _ in range(2)]
        idx = [_sattolo(np.random.default_rng(s), 10) for s in (1, 2)]
        weights = [tape.leaf(v) for v in w]
        parts = overall_loss(fused, uni, y, weights, kap, 0.25, idx)

        def manual_term(wv, pairing, kv):
            wv = wv[:, 0]
            g = np.sign(wv - wv[pairing])
            arg = np.abs(wv - wv[pairing]) + g * (kv - kv[pairing])
            return np.maximum(arg, 0.0).mean()

        want_reg = (manual_term(w[0], idx[0], kap[0])
                    + manual_term(w[1], idx[1], kap[1])) / 2.0
        assert parts.reg.array[0, 0] == pytest.approx(want_reg, rel=1e-12)
        want_total = (parts.fused_ce.array[0, 0]
                      + parts.unimodal_ce[0].array[0, 0]
                      + parts.unimodal_ce[1].array[0, 0]
                      + 0.25 * parts.reg.array[0, 0])
        assert parts.total.array[0, 0] == pytest.approx(want_total, rel=1e-12)

    def test_penalty_requires_weights_and_history(self):
        tape, fused, uni, y, _ = self.make_inputs()
        idx = [np.roll(np.arange(8), 1)] * 2
        with pytest.raises(ConfigError):
            overall_loss(fused, uni, y, None, None, 0.1, idx)

    def test_penalty_alignment_checked(self):
        tape, fused, uni, y, rng = self.make_inputs()
        weights = [tape.leaf(rng.uniform(size=(8, 1)))]
        kap = [rng.gamma(2.0, size=8)]
        idx = [np.roll(np.arange(8), 1)]
        with pytest.raises(ConfigError):
            overall_loss(fused, uni, y, weights, kap, 0.1, idx)

    def test_penalty_gradient_matches_fd(self):
        # kink-free inputs: every |w_i - w_j| and every relu argument is
        # far from zero relative to the fd step
        w = np.array([[0.9], [0.4], [0.6]])
        kap = np.array([0.3, 0.1, 0.2])
        idx = np.array([1, 2, 0])
        z = np.random.default_rng(3).normal(size=(3, 2))
        y = np.array([0, 1, 0])

        def build(tape, leaves):
            fused = tape.leaf(z)
            uni = [tape.leaf(z)]
            return overall_loss(fused, uni, y, [leaves[0]], [kap], 0.5, [idx]).total

        assert_grads_match_fd(build, [w])


class TestSattolo:
    def test_no_fixed_points_and_single_cycle(self):
        for n in (2, 3, 7, 20):
            p = _sattolo(np.random.default_rng(n), n)
            assert sorted(p) == list(range(n))
            assert not np.any(p == np.arange(n))
            # following successors visits every index exactly once
            seen = set()
            i = 0
            for _ in range(n):
                assert i not in seen
                seen.add(i)
                i = int(p[i])
            assert i == 0 and len(seen) == n

    def test_deterministic_for_stream(self):
        a = _sattolo(qrng.stream("pairs/demo", 5), 12)
        b = _sattolo(qrng.stream("pairs/demo", 5), 12)
        np.testing.assert_array_equal(a, b)


class TestTrainQmf:
    def test_report_shape_and_policy(self):
        ds = tiny_dataset()
        rep = train_qmf(ds, LINEAR, quick_config())
        assert rep.method == "qmf-energy"
        assert rep.epochs == 2 and rep.num_modalities == 2
        assert len(rep.train_overall) == 2
        assert len(rep.train_unimodal_ce) == 2 and len(rep.train_unimodal_ce[0]) == 2
        assert rep.policy.mode == "dynamic"
        assert all(a < 0 for a in rep.policy.alpha)
        assert len(rep.models) == 2

    def test_deterministic_same_seed(self):
        ds = tiny_dataset()
        a = train_qmf(ds, LINEAR, quick_config())
        b = train_qmf(ds, LINEAR, quick_config())
        assert a.train_overall == b.train_overall
        assert a.policy == b.policy
        for ma, mb in zip(a.models, b.models):
            for name in ma.params:
                assert ma.params[name].array.tobytes() == mb.params[name].array.tobytes()

    def test_seed_changes_run(self):
        ds = tiny_dataset()
        a = train_qmf(ds, LINEAR, quick_config(seed=3))
        b = train_qmf(ds, LINEAR, quick_config(seed=4))
        assert a.train_overall != b.train_overall

    def test_penalty_affects_optimization(self):
        ds = tiny_dataset()
        a = train_qmf(ds, LINEAR, quick_config(reg_strength=0.0))
        b = train_qmf(ds, LINEAR, quick_config(reg_strength=0.5))
        assert a.train_fused_ce != b.train_fused_ce

    def test_full_weight_grad_changes_updates(self):
        ds = tiny_dataset()
        a = train_qmf(ds, LINEAR, quick_config(full_weight_grad=False))
        b = train_qmf(ds, LINEAR, quick_config(full_weight_grad=True))
        assert a.train_overall != b.train_overall

    def test_validation_curves(self):
        ds = tiny_dataset()
        val = generate(SyntheticSpec(num_modalities=2, num_classes=2, num_samples=30,
                                     dims=(3, 3), separations=(3.0, 1.5), seed=9))
        rep = train_qmf(ds, LINEAR, quick_config(), val_data=val)
        assert len(rep.val_fused_ce) == 2
        assert len(rep.val_accuracy) == 2
        assert all(0.0 <= a <= 1.0 for a in rep.val_accuracy)
        rep2 = train_qmf(ds, LINEAR, quick_config())
        assert rep2.val_fused_ce is None and rep2.val_accuracy is None

    def test_non_energy_estimators_run(self):
        ds = tiny_dataset()
        for est in ("confidence", "dst"):
            rep = train_qmf(ds, LINEAR, quick_config(estimator=est, epochs=1))
            assert rep.method == f"qmf-{est}"

    def test_model_config_count_checked(self):
        ds = tiny_dataset()
        with pytest.raises(ConfigError):
            train_qmf(ds, [LINEAR], quick_config())

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_raises_with_epoch(self):
        ds = tiny_dataset()
        cfg = quick_config(optimizer="sgd", learning_rate=1e30, batch_size=8)
        with pytest.raises(DivergenceError) as exc:
            train_qmf(ds, ModelConfig("mlp1", hidden=8), cfg)
        assert exc.value.epoch >= 1

    def test_report_json_round_trips(self):
        ds = tiny_dataset()
        rep = train_qmf(ds, LINEAR, quick_config(epochs=1))
        d = rep.to_json_dict()
        assert d["version"] == 1
        assert "models" not in d and "wall_clock_seconds" not in d
        json.dumps(d)  # must be serializable as-is


class TestTrainStatic:
    def test_static_policy_and_no_penalty(self):
        ds = tiny_dataset()
        rep = train_static(ds, LINEAR, quick_config(reg_strength=0.7))
        assert rep.method == "static-late"
        assert rep.policy.mode == "static"
        assert rep.policy.static_weights == (0.5, 0.5)
        assert rep.train_reg == [0.0, 0.0]

    def test_qmf_with_static_mode_matches_train_static(self):
        ds = tiny_dataset()
        a = train_static(ds, LINEAR, quick_config())
        b = train_qmf(ds, LINEAR, quick_config(policy_mode="static", reg_strength=0.0))
        assert a.train_overall == b.train_overall
        assert a.method == b.method == "static-late"


class TestTrainUnimodal:
    def test_report(self):
        ds = tiny_dataset()
        rep = train_unimodal(ds, 1, LINEAR, quick_config())
        assert rep.method == "unimodal-1"
        assert rep.num_modalities == 1
        assert len(rep.models) == 1
        assert rep.train_reg == [0.0, 0.0]

    def test_modality_range_checked(self):
        ds = tiny_dataset()
        with pytest.raises(ConfigError):
            train_unimodal(ds, 2, LINEAR, quick_config())

    def test_validation(self):
        ds = tiny_dataset()
        val = generate(SyntheticSpec(num_modalities=2, num_classes=2, num_samples=30,
                                     dims=(3, 3), seed=9))
        rep = train_unimodal(ds, 0, LINEAR, quick_config(), val_data=val)
        assert len(rep.val_accuracy) == 2
        assert rep.val_accuracy[-1] == pytest.approx(
            evaluate_unimodal(rep.models[0], val, 0), abs=1e-15)


class TestEvaluate:
    def test_matches_manual_fusion(self):
        ds = tiny_dataset()
        rep = train_qmf(ds, LINEAR, quick_config())
        res = evaluate(rep.models, rep.policy, "energy", rep.temperatures, ds)
        logits = [predict_logits(m, x) for m, x in zip(rep.models, ds.arrays())]
        scores = [uncertainty.estimate("energy", z, rep.temperatures[m], m)
                  for m, z in enumerate(logits)]
        weights = compute_weights(rep.policy, scores)
        want = fuse(weights, logits)
        np.testing.assert_array_equal(res.fused.fused_logits, want.fused_logits)
        assert res.accuracy == pytest.approx((want.labels == ds.labels).mean(), abs=1e-15)
        assert res.weights.weights.shape == (ds.num_samples, 2)
        assert len(res.per_sample_ce) == 2 and len(res.uncertainties) == 2

    def test_static_policy_path(self):
        ds = tiny_dataset()
        rep = train_static(ds, LINEAR, quick_config())
        res = evaluate(rep.models, rep.policy, "energy", rep.temperatures, ds)
        np.testing.assert_array_equal(res.weights.weights, np.full((ds.num_samples, 2), 0.5))
