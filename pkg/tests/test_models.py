"""Per-modality classifiers: init distribution, tape/numpy forward parity,
gradients, checkpoint round trips."""

import numpy as np
import pytest

import qmf.diffcore as dc
from qmf.diffcore import Matrix, Tape
from qmf.errors import ConfigError, DimensionError, FormatError
from qmf.models import (
    ModelConfig,
    UnimodalModel,
    forward,
    init,
    l2_param_norm,
    load_model,
    predict_logits,
    save_model,
)

from helpers import assert_grads_match_fd


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(architecture="transformer"),
        dict(architecture="mlp1", hidden=0),
        dict(init_scale=-1.0),
    ])
    def test_invalid_config_rejected(self, kw):
        with pytest.raises(ConfigError):
            ModelConfig(**kw)

    def test_dict_round_trip(self):
        c = ModelConfig("linear", hidden=8, init_scale=0.5, init_seed=3)
        assert ModelConfig.from_dict(c.to_dict()) == c


class TestInit:
    def test_linear_shapes_and_zero_bias(self):
        m = init(ModelConfig("linear"), input_dim=7, classes=4)
        assert m.params["W"].shape == (7, 4)
        np.testing.assert_array_equal(m.params["b"].array, np.zeros((1, 4)))

    def test_mlp_shapes(self):
        m = init(ModelConfig("mlp1", hidden=5), input_dim=7, classes=4)
        assert m.params["W1"].shape == (7, 5)
        assert m.params["b1"].shape == (1, 5)
        assert m.params["W2"].shape == (5, 4)
        assert m.params["b2"].shape == (1, 4)
        np.testing.assert_array_equal(m.params["b1"].array, 0.0)
        np.testing.assert_array_equal(m.params["b2"].array, 0.0)

    def test_weight_range_scales_with_fan_in(self):
        m = init(ModelConfig("mlp1", hidden=64, init_scale=1.0), input_dim=100, classes=3)
        w1 = m.params["W1"].array
        w2 = m.params["W2"].array
        assert np.abs(w1).max() <= 1.0 / np.sqrt(100)
        assert np.abs(w2).max() <= 1.0 / np.sqrt(64)
        # the bound is tight-ish: uniform samples should get close to it
        assert np.abs(w1).max() > 0.9 / np.sqrt(100)

    def test_zero_scale_gives_zero_weights(self):
        m = init(ModelConfig("linear", init_scale=0.0), input_dim=4, classes=2)
        np.testing.assert_array_equal(m.params["W"].array, 0.0)

    def test_deterministic_and_seed_override(self):
        cfg = ModelConfig("linear", init_seed=5)
        a = init(cfg, 6, 3)
        b = init(cfg, 6, 3)
        np.testing.assert_array_equal(a.params["W"].array, b.params["W"].array)
        c = init(cfg, 6, 3, seed=9)
        d = init(ModelConfig("linear", init_seed=9), 6, 3)
        np.testing.assert_array_equal(c.params["W"].array, d.params["W"].array)
        assert not np.array_equal(a.params["W"].array, c.params["W"].array)

    def test_modalities_get_distinct_streams(self):
        cfg = ModelConfig("linear")
        a = init(cfg, 6, 3, modality=0)
        b = init(cfg, 6, 3, modality=1)
        assert not np.array_equal(a.params["W"].array, b.params["W"].array)

    def test_bad_dims_rejected(self):
        with pytest.raises(ConfigError):
            init(ModelConfig("linear"), 0, 3)
        with pytest.raises(ConfigError):
            init(ModelConfig("linear"), 3, 0)


class TestForward:
    @pytest.mark.parametrize("arch,hidden", [("linear", 0), ("mlp1", 6)])
    def test_tape_and_numpy_forward_agree_exactly(self, arch, hidden):
        m = init(ModelConfig(arch, hidden=max(hidden, 1)), input_dim=5, classes=3, seed=1)
        x = np.random.default_rng(0).normal(size=(8, 5))
        tape = Tape()
        z_tape, _ = forward(m, tape, tape.leaf(x))
        z_np = predict_logits(m, x)
        np.testing.assert_array_equal(z_tape.array, z_np)

    def test_linear_forward_is_affine_map(self):
        m = init(ModelConfig("linear"), input_dim=4, classes=2, seed=2)
        x = np.random.default_rng(1).normal(size=(6, 4))
        want = x @ m.params["W"].array + m.params["b"].array
        np.testing.assert_array_equal(predict_logits(m, x), want)

    def test_mlp_forward_matches_manual(self):
        m = init(ModelConfig("mlp1", hidden=7), input_dim=4, classes=3, seed=3)
        x = np.random.default_rng(2).normal(size=(5, 4))
        p = m.params
        h = np.maximum(x @ p["W1"].array + p["b1"].array, 0.0)
        want = h @ p["W2"].array + p["b2"].array
        np.testing.assert_array_equal(predict_logits(m, x), want)

    def test_input_width_checked(self):
        m = init(ModelConfig("linear"), input_dim=4, classes=2)
        with pytest.raises(DimensionError):
            predict_logits(m, np.ones((3, 5)))
        tape = Tape()
        with pytest.raises(DimensionError):
            forward(m, tape, tape.leaf(np.ones((3, 5))))

    @pytest.mark.parametrize("arch", ["linear", "mlp1"])
    def test_parameter_gradients_match_finite_differences(self, arch):
        rng = np.random.default_rng(4)
        mdl = init(ModelConfig(arch, hidden=4, init_scale=1.0), input_dim=3,
                   classes=3, seed=4)
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 3, size=6)
        names = sorted(mdl.params)
        arrays = [np.array(mdl.params[n].array) for n in names]

        def build(tape, leaves):
            pvars = dict(zip(names, leaves))
            if arch == "linear":
                z = dc.add_bias(dc.matmul(tape.leaf(x), pvars["W"]), pvars["b"])
            else:
                h = dc.relu(dc.add_bias(dc.matmul(tape.leaf(x), pvars["W1"]), pvars["b1"]))
                z = dc.add_bias(dc.matmul(h, pvars["W2"]), pvars["b2"])
            return dc.softmax_cross_entropy(z, y)

        assert_grads_match_fd(build, arrays)


class TestNorm:
    def test_l2_norm_ignores_biases(self):
        params = {
            "W1": Matrix(np.array([[3.0]])),
            "b1": Matrix(np.array([[100.0]])),
            "W2": Matrix(np.array([[4.0]])),
            "b2": Matrix(np.array([[100.0]])),
        }
        m = UnimodalModel("mlp1", params, 0, 1, 1, hidden=1)
        assert l2_param_norm(m) == pytest.approx(5.0, abs=1e-15)


class TestCheckpoints:
    @pytest.mark.parametrize("arch", ["linear", "mlp1"])
    def test_round_trip_bit_exact(self, tmp_path, arch):
        m = init(ModelConfig(arch, hidden=5), input_dim=6, classes=4, modality=2, seed=8)
        save_model(m, tmp_path / "ckpt")
        back = load_model(tmp_path / "ckpt")
        assert back.architecture == arch
        assert back.modality == 2
        assert back.input_dim == 6 and back.classes == 4
        assert set(back.params) == set(m.params)
        for name in m.params:
            assert back.params[name].array.tobytes() == m.params[name].array.tobytes()

    def test_version_enforced(self, tmp_path):
        m = init(ModelConfig("linear"), 3, 2)
        save_model(m, tmp_path / "c")
        mf = tmp_path / "c" / "manifest.json"
        mf.write_text(mf.read_text().replace('"version": 1', '"version": 3'))
        with pytest.raises(FormatError):
            load_model(tmp_path / "c")

    def test_missing_param_file_detected(self, tmp_path):
        m = init(ModelConfig("linear"), 3, 2)
        save_model(m, tmp_path / "c")
        (tmp_path / "c" / "param_W.csv").unlink()
        with pytest.raises(FormatError):
            load_model(tmp_path / "c")

    def test_shape_mismatch_detected(self, tmp_path):
        m = init(ModelConfig("linear"), 3, 2)
        save_model(m, tmp_path / "c")
        p = tmp_path / "c" / "param_W.csv"
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(FormatError):
            load_model(tmp_path / "c")

    def test_unknown_architecture_detected(self, tmp_path):
        m = init(ModelConfig("linear"), 3, 2)
        save_model(m, tmp_path / "c")
        mf = tmp_path / "c" / "manifest.json"
        mf.write_text(mf.read_text().replace('"linear"', '"rnn"'))
        with pytest.raises(FormatError):
            load_model(tmp_path / "c")
