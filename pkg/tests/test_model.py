"""Network construction, split execution, MAC accounting, and weight i/o."""

import json

import numpy as np
import pytest

from splitseg import model as M
from splitseg.model import ModelConfig


def tiny_config(**overrides):
    defaults = dict(input_height=128, input_width=128, base_channels=8,
                    feature_channels=16, num_classes=4, ppm_bins=(1, 2), seed=7)
    defaults.update(overrides)
    return ModelConfig(**defaults)


def random_image(cfg, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((3, cfg.input_height, cfg.input_width), dtype=np.float32)


class TestConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError, match="divisible by 64"):
            ModelConfig(input_height=200, input_width=256)

    def test_bin_bounds_enforced(self):
        with pytest.raises(ValueError, match="ppm bin"):
            ModelConfig(input_height=128, input_width=128, ppm_bins=(1, 2, 3))

    def test_bins_strictly_increasing(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            ModelConfig(ppm_bins=(1, 2, 2))

    def test_channel_minimums(self):
        with pytest.raises(ValueError, match="base_channels"):
            ModelConfig(base_channels=2)
        with pytest.raises(ValueError, match="feature_channels"):
            ModelConfig(feature_channels=3)
        with pytest.raises(ValueError, match="num_classes"):
            ModelConfig(num_classes=1)

    def test_dict_round_trip(self):
        cfg = ModelConfig.full_scale(seed=99)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestBuild:
    def test_deterministic(self):
        cfg = tiny_config()
        assert M.build(cfg).same_as(M.build(cfg))

    def test_seed_sensitivity(self):
        a = M.build(tiny_config(seed=5))
        b = M.build(tiny_config(seed=6))
        assert any(
            not np.array_equal(a.params[k], b.params[k]) for k in a.params
        )

    def test_shapes_match_plan(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        expected = {}
        for plan in M.layer_plan(cfg):
            for name in M.param_names(plan):
                expected[name] = M.param_shape(plan, name.rsplit(".", 1)[1])
        assert set(weights.params) == set(expected)
        for name, arr in weights.params.items():
            assert arr.shape == expected[name], name
            assert arr.dtype == np.float32
            assert np.isfinite(arr).all()

    def test_kernel_init_range(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        for plan in M.layer_plan(cfg):
            a = np.sqrt(6.0 / ((plan.cin + plan.cout) * plan.k * plan.k))
            kern = weights.params[plan.name + ".kernel"]
            assert np.abs(kern).max() <= a


class TestDescribe:
    def test_full_scale_resolution_column(self):
        cfg = ModelConfig.full_scale()
        res = [s.out_h for s in M.describe(cfg)]
        assert res == [256, 256, 128, 64, 32, 16, 128]

    def test_desk_resolution_column(self):
        res = [s.out_h for s in M.describe(ModelConfig())]
        assert res == [64, 64, 32, 16, 8, 4, 32]

    def test_stage6_matches_stage2_resolution(self):
        for cfg in (tiny_config(), ModelConfig(), ModelConfig.full_scale()):
            stages = M.describe(cfg)
            assert (stages[6].out_h, stages[6].out_w) == (stages[2].out_h, stages[2].out_w)

    def test_channel_column(self):
        cfg = ModelConfig.full_scale()
        chans = [s.out_channels for s in M.describe(cfg)]
        c0 = cfg.base_channels
        assert chans == [c0, c0, 2 * c0, 4 * c0, 8 * c0, cfg.feature_channels, cfg.num_classes]


class TestForward:
    def test_transmitter_output_shape(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        out = M.forward_transmitter(random_image(cfg), weights)
        assert out.shape == (cfg.feature_channels, 2, 2)
        assert np.isfinite(out).all()

    def test_transmitter_shape_of_desk_config(self):
        cfg = ModelConfig()
        out = M.forward_transmitter(random_image(cfg), M.build(cfg))
        assert out.shape == (cfg.feature_channels, 4, 4)

    def test_transmitter_1024_input_gives_16x16(self):
        # full-scale resolution schedule with skinny channels to stay fast
        cfg = ModelConfig(input_height=1024, input_width=1024, base_channels=4,
                          feature_channels=8, num_classes=2, ppm_bins=(1, 2, 3, 6), seed=1)
        out = M.forward_transmitter(random_image(cfg), M.build(cfg))
        assert out.shape == (8, 16, 16)

    def test_transmitter_rejects_wrong_shape(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        with pytest.raises(ValueError, match="image shape"):
            M.forward_transmitter(np.zeros((3, 64, 128), np.float32), weights)

    def test_transmitter_pure(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        img = random_image(cfg, 3)
        assert np.array_equal(
            M.forward_transmitter(img, weights), M.forward_transmitter(img, weights)
        )

    def test_receiver_rejects_wrong_shape(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        with pytest.raises(ValueError, match="feature shape"):
            M.forward_receiver(np.zeros((cfg.feature_channels, 3, 2), np.float32), weights)

    def test_receiver_labels_below_k(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        rng = np.random.default_rng(5)
        for _ in range(3):
            feats = rng.normal(size=(cfg.feature_channels, 2, 2)).astype(np.float32)
            _, seg = M.forward_receiver(feats, weights)
            assert seg.labels.min() >= 0 and seg.labels.max() < cfg.num_classes
            assert (seg.height, seg.width) == (cfg.input_height, cfg.input_width)

    def test_equal_logits_tie_break_to_zero(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        # zero the head kernel and bias: every class logit becomes identical
        weights.params["s6.head2.kernel"][:] = 0.0
        weights.params["s6.head2.bias"][:] = 0.0
        feats = np.random.default_rng(9).normal(size=(cfg.feature_channels, 2, 2)).astype(np.float32)
        logits, seg = M.forward_receiver(feats, weights)
        assert np.ptp(logits) == 0.0
        assert np.all(seg.labels == 0)

    def test_full_equals_composition(self):
        cfg = tiny_config()
        weights = M.build(cfg)
        for seed in range(20):
            img = random_image(cfg, seed)
            logits_a, seg_a = M.forward_full(img, weights)
            logits_b, seg_b = M.forward_receiver(M.forward_transmitter(img, weights), weights)
            assert np.array_equal(logits_a, logits_b)
            assert seg_a.same_as(seg_b)

    def test_full_output_dims_match_input(self):
        cfg = tiny_config()
        logits, seg = M.forward_full(random_image(cfg), M.build(cfg))
        assert logits.shape == (cfg.num_classes, cfg.input_height, cfg.input_width)
        assert (seg.height, seg.width) == (cfg.input_height, cfg.input_width)

    def test_intermediate_resolutions_match_describe(self):
        # stage outputs tracked via the plan's out dims at two input sizes
        for cfg in (ModelConfig(), tiny_config(input_height=192, input_width=192, ppm_bins=(1, 3))):
            plans = {p.name: p for p in M.layer_plan(cfg)}
            stages = M.describe(cfg)
            assert (plans["s0.conv2"].out_h, plans["s0.conv2"].out_w) == (stages[0].out_h, stages[0].out_w)
            assert (plans["s1.rb.conv2"].out_h) == stages[1].out_h
            assert (plans["s2.rb.conv2"].out_h) == stages[2].out_h
            assert (plans["s3.i.conv2"].out_h) == stages[3].out_h
            assert (plans["s4.i.conv2"].out_h) == stages[4].out_h
            assert (plans["s5.fuse"].out_h) == stages[5].out_h
            assert (plans["s6.head2"].out_h) == stages[6].out_h


class TestMacCount:
    def test_single_conv_formula(self):
        assert M.conv_macs(1, 2, 3, 4, 4) == 96

    def test_boundary_additivity(self):
        cfg = tiny_config()
        total_tx, total_rx = M.mac_count(cfg, 6)
        assert total_rx == 0
        for boundary in range(7):
            tx, rx = M.mac_count(cfg, boundary)
            assert tx + rx == total_tx

    def test_stage6_difference(self):
        cfg = ModelConfig()
        tx5, rx5 = M.mac_count(cfg, 5)
        tx6, rx6 = M.mac_count(cfg, 6)
        stage6 = sum(p.macs for p in M.layer_plan(cfg) if p.stage == 6)
        assert tx6 == tx5 + stage6
        assert rx5 == stage6 and rx6 == 0

    def test_moving_boundary_monotone(self):
        cfg = ModelConfig()
        tx5, rx5 = M.mac_count(cfg, 5)
        tx6, rx6 = M.mac_count(cfg, 6)
        assert tx5 < tx6
        assert rx5 > rx6

    def test_boundary_validated(self):
        with pytest.raises(ValueError, match="boundary"):
            M.mac_count(ModelConfig(), 7)


class TestWeightIO:
    def test_round_trip_bitwise(self, tmp_path):
        cfg = tiny_config()
        weights = M.build(cfg)
        M.save_weights(weights, tmp_path / "w")
        loaded = M.load_weights(tmp_path / "w")
        assert loaded.same_as(weights)

    def test_forward_identical_after_reload(self, tmp_path):
        cfg = tiny_config()
        weights = M.build(cfg)
        M.save_weights(weights, tmp_path / "w")
        loaded = M.load_weights(tmp_path / "w")
        img = random_image(cfg, 4)
        assert np.array_equal(
            M.forward_full(img, weights)[0], M.forward_full(img, loaded)[0]
        )

    def test_missing_entry_named(self, tmp_path):
        cfg = tiny_config()
        M.save_weights(M.build(cfg), tmp_path / "w")
        mpath = tmp_path / "w.json"
        manifest = json.loads(mpath.read_text())
        manifest["params"] = [e for e in manifest["params"] if e["name"] != "s5.fuse.kernel"]
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(ValueError, match="missing entry: s5.fuse.kernel"):
            M.load_weights(tmp_path / "w")

    def test_shape_mismatch_reported(self, tmp_path):
        cfg = tiny_config()
        M.save_weights(M.build(cfg), tmp_path / "w")
        mpath = tmp_path / "w.json"
        manifest = json.loads(mpath.read_text())
        for e in manifest["params"]:
            if e["name"] == "s0.conv1.kernel":
                e["shape"] = [1, 2, 3, 3]
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(ValueError, match="shape mismatch for s0.conv1.kernel"):
            M.load_weights(tmp_path / "w")

    def test_truncated_blob_is_corrupt(self, tmp_path):
        cfg = tiny_config()
        M.save_weights(M.build(cfg), tmp_path / "w")
        bpath = tmp_path / "w.bin"
        bpath.write_bytes(bpath.read_bytes()[:-17])
        with pytest.raises(ValueError, match="corrupt file"):
            M.load_weights(tmp_path / "w")

    def test_garbled_manifest_is_corrupt(self, tmp_path):
        cfg = tiny_config()
        M.save_weights(M.build(cfg), tmp_path / "w")
        (tmp_path / "w.json").write_text("{not json")
        with pytest.raises(ValueError, match="corrupt file"):
            M.load_weights(tmp_path / "w")

    def test_unexpected_entry_rejected(self, tmp_path):
        cfg = tiny_config()
        M.save_weights(M.build(cfg), tmp_path / "w")
        mpath = tmp_path / "w.json"
        manifest = json.loads(mpath.read_text())
        manifest["params"].append({"name": "s9.bogus.kernel", "shape": [1], "offset": 0})
        mpath.write_text(json.dumps(manifest))
        with pytest.raises(ValueError, match="unexpected entry"):
            M.load_weights(tmp_path / "w")

    def test_missing_files_reported(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            M.load_weights(tmp_path / "nope")


def test_split_equivalence_across_configs():
    rng = np.random.default_rng(2024)
    for trial in range(3):
        cfg = ModelConfig(
            input_height=128, input_width=128,
            base_channels=int(rng.integers(4, 12)),
            feature_channels=int(rng.integers(8, 33)),
            num_classes=int(rng.integers(2, 9)),
            ppm_bins=(1, 2),
            seed=int(rng.integers(0, 1 << 32)),
        )
        weights = M.build(cfg)
        img = rng.random((3, 128, 128), dtype=np.float32)
        a_logits, a_map = M.forward_full(img, weights)
        b_logits, b_map = M.forward_receiver(M.forward_transmitter(img, weights), weights)
        assert np.array_equal(a_logits, b_logits)
        assert a_map.same_as(b_map)
