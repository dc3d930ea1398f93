"""Fast metric paths against loop-transcription oracles."""

import logging

import numpy as np
import pytest

from hginet import metrics
from hginet.errors import ContractError, ShapeError

from oracles import e_measure_oracle, mae_oracle, s_measure_oracle, weighted_f_oracle


def random_case(rng, shape=(8, 8)):
    pred = rng.random(shape)
    g = (rng.random(shape) > rng.uniform(0.2, 0.8)).astype(float)
    return pred, g


def random_mask(rng, shape=(8, 8)):
    # nonempty, not full
    while True:
        g = (rng.random(shape) > 0.6).astype(float)
        if 0.0 < g.mean() < 1.0:
            return g


class TestMAE:
    def test_exact_and_complement(self):
        g = random_mask(np.random.default_rng(130))
        assert metrics.mae(g, g) == 0.0
        assert metrics.mae(1.0 - g, g) == 1.0

    def test_half_flipped(self):
        g = np.zeros((4, 4))
        p = g.copy()
        p[:2] = 1.0
        assert metrics.mae(p, g) == 0.5

    def test_permutation_invariant(self):
        rng = np.random.default_rng(131)
        p, g = random_case(rng)
        perm = rng.permutation(64)
        a = metrics.mae(p, g)
        b = metrics.mae(p.ravel()[perm].reshape(8, 8), g.ravel()[perm].reshape(8, 8))
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(132)
        for _ in range(20):
            p, g = random_case(rng)
            np.testing.assert_allclose(metrics.mae(p, g), mae_oracle(p, g), atol=1e-12)


class TestSMeasure:
    def test_perfect_is_one(self):
        g = random_mask(np.random.default_rng(133))
        assert metrics.s_measure(g, g) == 1.0

    def test_degenerate_background(self):
        z = np.zeros((8, 8))
        assert metrics.s_measure(z, z) == 1.0
        assert metrics.s_measure(np.ones((8, 8)), z) == 0.0

    def test_degenerate_foreground(self):
        o = np.ones((8, 8))
        assert metrics.s_measure(o, o) == 1.0
        assert metrics.s_measure(np.zeros((8, 8)), o) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(134)
        for _ in range(50):
            p, g = random_case(rng)
            np.testing.assert_allclose(metrics.s_measure(p, g), s_measure_oracle(p, g), atol=1e-9)

    def test_matches_oracle_large(self):
        rng = np.random.default_rng(135)
        p = rng.random((32, 32))
        g = random_mask(rng, (32, 32))
        np.testing.assert_allclose(metrics.s_measure(p, g), s_measure_oracle(p, g), atol=1e-9)


class TestMeanE:
    def test_perfect_binary_is_one(self):
        g = random_mask(np.random.default_rng(136))
        assert metrics.mean_e_measure(g, g) == 1.0

    def test_complement_is_zero(self):
        g = random_mask(np.random.default_rng(137))
        assert metrics.mean_e_measure(1.0 - g, g) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(138)
        for _ in range(30):
            p, g = random_case(rng)
            np.testing.assert_allclose(metrics.mean_e_measure(p, g), e_measure_oracle(p, g), atol=1e-9)

    def test_matches_oracle_degenerate(self):
        rng = np.random.default_rng(139)
        p = rng.random((8, 8))
        for g in (np.zeros((8, 8)), np.ones((8, 8))):
            np.testing.assert_allclose(metrics.mean_e_measure(p, g), e_measure_oracle(p, g), atol=1e-9)


class TestWeightedF:
    def test_perfect_is_one(self):
        g = random_mask(np.random.default_rng(140))
        assert metrics.weighted_f_measure(g, g) == 1.0

    def test_zero_prediction_is_zero(self):
        g = random_mask(np.random.default_rng(141))
        assert metrics.weighted_f_measure(np.zeros((8, 8)), g) == 0.0

    def test_empty_truth_is_zero(self):
        assert metrics.weighted_f_measure(np.random.default_rng(142).random((8, 8)), np.zeros((8, 8))) == 0.0

    def test_matches_oracle(self):
        rng = np.random.default_rng(143)
        for _ in range(30):
            p, g = random_case(rng)
            np.testing.assert_allclose(
                metrics.weighted_f_measure(p, g), weighted_f_oracle(p, g), atol=1e-9
            )

    def test_matches_oracle_larger(self):
        rng = np.random.default_rng(144)
        p = rng.random((24, 24))
        g = random_mask(rng, (24, 24))
        np.testing.assert_allclose(metrics.weighted_f_measure(p, g), weighted_f_oracle(p, g), atol=1e-9)


class TestMonotonicity:
    def test_flips_never_help(self):
        # degrading a perfect prediction can only hurt weighted F and MAE
        rng = np.random.default_rng(145)
        g = random_mask(rng, (16, 16))
        pred = g.copy()
        last_f = metrics.weighted_f_measure(pred, g)
        last_mae = metrics.mae(pred, g)
        order = rng.permutation(256)[:40]
        for k in order:
            pred.ravel()[k] = 1.0 - pred.ravel()[k]
            f = metrics.weighted_f_measure(pred, g)
            m = metrics.mae(pred, g)
            assert f <= last_f + 1e-12
            assert m >= last_mae - 1e-12
            last_f, last_mae = f, m


class TestValidationAndReport:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            metrics.mae(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_nonbinary_truth_rejected(self):
        with pytest.raises(ContractError):
            metrics.s_measure(np.zeros((4, 4)), np.full((4, 4), 0.5))

    def test_out_of_range_prediction_rejected(self):
        with pytest.raises(ContractError):
            metrics.mae(np.full((4, 4), 1.5), np.zeros((4, 4)))

    def test_binarize_clean_values(self):
        raw = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        np.testing.assert_array_equal(metrics.binarize_mask(raw), [[0.0, 1.0], [1.0, 0.0]])

    def test_binarize_gray_warns_and_thresholds(self, caplog):
        raw = np.array([[0, 127], [128, 255]], dtype=np.uint8)
        with caplog.at_level(logging.WARNING, logger="hginet.metrics"):
            out = metrics.binarize_mask(raw)
        np.testing.assert_array_equal(out, [[0.0, 0.0], [1.0, 1.0]])
        assert any("threshold" in r.message for r in caplog.records)

    def test_report_csv_layout(self):
        rows = [
            ("0000.ppm", metrics.MetricReport(0.5, 0.25, 0.75, 0.125)),
            ("0001.ppm", metrics.MetricReport(1.0, 0.75, 0.25, 0.375)),
        ]
        text = metrics.report_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "image,s_measure,weighted_f,mean_e,mae"
        assert lines[1] == "0000.ppm,0.500000,0.250000,0.750000,0.125000"
        assert lines[3] == "mean,0.750000,0.500000,0.500000,0.250000"

    def test_empty_report_rejected(self):
        with pytest.raises(ContractError):
            metrics.report_csv([])

    def test_perfect_report_tuple(self):
        g = random_mask(np.random.default_rng(146))
        rep = metrics.evaluate_pair(g, g)
        assert rep.as_row() == (1.0, 1.0, 1.0, 0.0)
