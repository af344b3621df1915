"""Network builders, training loops, and evaluation semantics.

Training-based checks run at small widths and short schedules; the full
protocol sizes are exercised by the acceptance suite.
"""

import dataclasses

import numpy as np
import pytest

from hodyne import nn
from hodyne.homodyne import LoScan, generate_dataset, template_image
from hodyne.limits import QpskKey, combine_error
from hodyne.receiver import (
    CnnConfig,
    GnnConfig,
    build_cnn,
    build_gnn,
    classify,
    evaluate,
    reconstruct,
    train_cnn,
    train_gnn,
)


@pytest.fixture(scope="module")
def clean12():
    return generate_dataset(9.0, 200, LoScan.for_width(12), seed=31, role="cnn-train")


@pytest.fixture(scope="module")
def trained_cnn12(clean12):
    cnn, report = train_cnn(clean12, CnnConfig(input_width=12, seed=5))
    assert report.accuracy == 1.0  # strongly separable at 9 dB
    return cnn


class TestBuildGnn:
    @pytest.mark.parametrize("w,latent", [(30, 225), (12, 36), (4, 4)])
    def test_latent_sizes(self, w, latent):
        cfg = GnnConfig(input_width=w)
        assert cfg.latent_units == latent
        net = build_gnn(cfg)
        dense_units = [s.out_units for s in net.layers if isinstance(s, nn.Dense)]
        assert dense_units[0] == latent
        assert dense_units[1] == (w // 2) * (w // 2) * 20

    def test_output_width_matches_input_for_all_even_widths(self):
        for w in range(4, 31, 2):
            net = build_gnn(GnnConfig(input_width=w))
            assert net.output_shape == (w, w, 1)

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError):
            build_gnn(GnnConfig(input_width=15))

    def test_encoder_decoder_symmetry(self):
        net = build_gnn(GnnConfig(input_width=30))
        shapes = nn.infer_shapes(net.layers, net.input_shape)
        assert (225,) in shapes  # latent bottleneck
        assert shapes[-1] == (30, 30, 1)


class TestBuildCnn:
    def test_pool_output_feeds_first_dense(self):
        net = build_cnn(CnnConfig(input_width=30))
        dense = next(p for s, p in zip(net.layers, net.params) if isinstance(s, nn.Dense))
        assert dense["w"].shape == (15 * 15 * 10, 400)

    def test_pool_output_w16(self):
        net = build_cnn(CnnConfig(input_width=16))
        dense = next(p for s, p in zip(net.layers, net.params) if isinstance(s, nn.Dense))
        assert dense["w"].shape == (8 * 8 * 10, 400)

    def test_four_logits(self):
        for w in (8, 16, 30):
            assert build_cnn(CnnConfig(input_width=w)).output_shape == (4,)

    def test_rejections(self):
        with pytest.raises(ValueError):
            build_cnn(CnnConfig(input_width=9))
        with pytest.raises(ValueError):
            build_cnn(CnnConfig(classes=3))


class TestTrainGnn:
    def test_identity_targets_converge(self):
        ds = generate_dataset(-10.5, 10, LoScan.for_width(8), seed=41, role="gnn-input")
        targets = dataclasses.replace(ds, role="gnn-target")
        _, history = train_gnn(ds, targets, GnnConfig(input_width=8, epochs=20, seed=7))
        assert history[-1] < 0.1 * history[0]

    def test_zero_epochs_returns_initialization(self):
        ds = generate_dataset(-10.5, 2, LoScan.for_width(8), seed=42, role="gnn-input")
        targets = dataclasses.replace(ds, role="gnn-target")
        cfg = GnnConfig(input_width=8, epochs=0, seed=9)
        net, history = train_gnn(ds, targets, cfg)
        assert history == []
        fresh = build_gnn(cfg)
        for a, b in zip(net.parameter_arrays(), fresh.parameter_arrays()):
            assert np.array_equal(a, b)

    def test_deterministic(self):
        ds = generate_dataset(-10.5, 5, LoScan.for_width(8), seed=43, role="gnn-input")
        targets = dataclasses.replace(ds, role="gnn-target")
        cfg = GnnConfig(input_width=8, epochs=3, seed=13)
        _, h1 = train_gnn(ds, targets, cfg)
        _, h2 = train_gnn(ds, targets, cfg)
        assert h1 == h2

    def test_mismatches_rejected(self):
        ds8 = generate_dataset(-10.5, 2, LoScan.for_width(8), seed=1, role="gnn-input")
        ds6 = generate_dataset(9.0, 2, LoScan.for_width(6), seed=2, role="gnn-target")
        with pytest.raises(ValueError):
            train_gnn(ds8, ds6, GnnConfig(input_width=8, epochs=1))
        ds8b = generate_dataset(9.0, 3, LoScan.for_width(8), seed=3, role="gnn-target")
        with pytest.raises(ValueError):
            train_gnn(ds8, ds8b, GnnConfig(input_width=8, epochs=1))


class TestTrainCnn:
    def test_wrong_per_key_count_rejected(self):
        ds = generate_dataset(9.0, 150, LoScan.for_width(8), seed=1, role="cnn-train")
        with pytest.raises(ValueError):
            train_cnn(ds, CnnConfig(input_width=8))

    def test_untrained_is_chance_level(self, clean12):
        # a single untrained net maps each key cluster to one fixed class, so
        # individual seeds scatter; the seed-averaged accuracy sits at chance
        accs = []
        for seed in range(6):
            _, report = train_cnn(clean12, CnnConfig(input_width=12, epochs=0, seed=seed))
            accs.append(report.accuracy)
        assert np.mean(accs) == pytest.approx(0.25, abs=0.15)
        assert report.n_train == 680
        assert report.n_test == 120
        assert report.epoch_losses == []

    def test_deterministic(self, clean12):
        cfg = CnnConfig(input_width=12, epochs=1, seed=8)
        _, r1 = train_cnn(clean12, cfg)
        _, r2 = train_cnn(clean12, cfg)
        assert r1.accuracy == r2.accuracy
        assert r1.epoch_losses == r2.epoch_losses


class TestReconstruct:
    def test_output_clamped(self):
        gnn = build_gnn(GnnConfig(input_width=8, seed=3))
        img = generate_dataset(-10.5, 1, LoScan.for_width(8), seed=5).entries[0][0]
        out = reconstruct(gnn, img)
        assert out.width == 8
        assert np.all(out.pixels >= 0.0)
        assert np.all(out.pixels <= 1.0)

    def test_zeroed_final_layer_gives_constant_image(self):
        gnn = build_gnn(GnnConfig(input_width=8, seed=3))
        gnn.params[-1]["w"][:] = 0.0
        gnn.params[-1]["b"][:] = 0.25
        img = generate_dataset(-10.5, 1, LoScan.for_width(8), seed=5).entries[0][0]
        out = reconstruct(gnn, img)
        assert np.all(out.pixels == 0.25)

    def test_width_mismatch_rejected(self):
        gnn = build_gnn(GnnConfig(input_width=8, seed=3))
        img = generate_dataset(-10.5, 1, LoScan.for_width(10), seed=5).entries[0][0]
        with pytest.raises(ValueError):
            reconstruct(gnn, img)


class TestClassify:
    def test_equal_logits_tie_to_first_key(self):
        cnn = build_cnn(CnnConfig(input_width=8, seed=3))
        cnn.params[-2]["w"][:] = 0.0  # final Dense; Linear marker follows
        cnn.params[-2]["b"][:] = 0.0
        img = generate_dataset(-10.5, 1, LoScan.for_width(8), seed=5).entries[0][0]
        key, probs = classify(cnn, img)
        assert key == QpskKey(1)
        assert probs == pytest.approx([0.25] * 4)

    def test_probabilities_sum_to_one(self, trained_cnn12):
        img = generate_dataset(9.0, 1, LoScan.for_width(12), seed=6).entries[0][0]
        _, probs = classify(trained_cnn12, img)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_shift_invariance(self):
        logits = np.array([0.3, -1.2, 2.0, 0.0])
        assert nn.softmax(logits) == pytest.approx(nn.softmax(logits + 123.4), abs=1e-12)

    def test_noiseless_templates_classified_correctly(self, trained_cnn12):
        scan = LoScan.for_width(12)
        for k in (1, 2, 3, 4):
            key, _ = classify(trained_cnn12, template_image(QpskKey(k), 10**0.9, scan))
            assert key == QpskKey(k)

    def test_deterministic(self, trained_cnn12):
        img = generate_dataset(9.0, 1, LoScan.for_width(12), seed=7).entries[0][0]
        k1, p1 = classify(trained_cnn12, img)
        k2, p2 = classify(trained_cnn12, img)
        assert k1 == k2
        assert np.array_equal(p1, p2)


class TestEvaluate:
    def test_perfect_classifier_hits_homodyne_limit(self, trained_cnn12):
        test = generate_dataset(9.0, 30, LoScan.for_width(12), seed=8, role="test")
        report = evaluate(test, trained_cnn12)
        assert report.n_wrong == 0
        assert report.p_network == 0.0
        assert report.p_err == report.p_hd
        assert report.p_relative == report.p_relative_hd

    def test_composition_and_confusion_consistency(self, trained_cnn12):
        test = generate_dataset(-10.5, 30, LoScan.for_width(12), seed=9, role="test")
        report = evaluate(test, trained_cnn12)
        assert report.confusion.sum() == report.n_total == 120
        assert np.array_equal(report.confusion.sum(axis=1), [30, 30, 30, 30])
        recomputed = (report.confusion.sum() - np.trace(report.confusion)) / report.n_total
        assert abs(recomputed - report.p_network) < 1e-15
        assert report.p_err == pytest.approx(combine_error(report.p_hd, report.p_network), abs=1e-15)
        assert report.p_err >= max(report.p_hd, report.p_network)
        assert report.p_relative == pytest.approx(report.p_err - report.p_hel, abs=1e-15)

    def test_gnn_variant_is_read_only(self, trained_cnn12):
        test = generate_dataset(-10.5, 2, LoScan.for_width(12), seed=10, role="test")
        gnn = build_gnn(GnnConfig(input_width=12, seed=4))
        cnn_before = [a.copy() for a in trained_cnn12.parameter_arrays()]
        gnn_before = [a.copy() for a in gnn.parameter_arrays()]
        r1 = evaluate(test, trained_cnn12, gnn)
        r2 = evaluate(test, trained_cnn12, gnn)
        assert r1.p_network == r2.p_network
        for before, after in zip(cnn_before, trained_cnn12.parameter_arrays()):
            assert np.array_equal(before, after)
        for before, after in zip(gnn_before, gnn.parameter_arrays()):
            assert np.array_equal(before, after)

    def test_used_gnn_flag(self, trained_cnn12):
        test = generate_dataset(9.0, 2, LoScan.for_width(12), seed=11, role="test")
        assert evaluate(test, trained_cnn12).used_gnn is False
        gnn = build_gnn(GnnConfig(input_width=12, seed=4))
        assert evaluate(test, trained_cnn12, gnn).used_gnn is True

    def test_empty_test_set_rejected(self, trained_cnn12):
        empty = dataclasses.replace(
            generate_dataset(9.0, 1, LoScan.for_width(12), seed=1), entries=()
        )
        with pytest.raises(ValueError):
            evaluate(empty, trained_cnn12)

    def test_width_mismatch_rejected(self, trained_cnn12):
        test = generate_dataset(9.0, 1, LoScan.for_width(8), seed=1, role="test")
        with pytest.raises(ValueError):
            evaluate(test, trained_cnn12)
