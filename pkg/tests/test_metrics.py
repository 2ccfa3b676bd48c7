import numpy as np
import pytest

from depthsal.metrics import (MetricReport, adaptive_binarize, e_measure,
                              f_measure, mae, s_measure, score_pair)

from oracles import oracle_e_measure, oracle_s_measure


def checker(n):
    gt = np.indices((n, n)).sum(axis=0) % 2
    return gt.astype(np.float64)


class TestMAE:
    def test_perfect(self):
        gt = checker(4)
        assert mae(gt, gt) == 0.0

    def test_inverted(self):
        gt = checker(4)
        assert mae(1.0 - gt, gt) == 1.0

    def test_uniform_half(self):
        gt = checker(4)
        assert mae(np.full((4, 4), 0.5), gt) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_nearest_upsample_invariance(self):
        rng = np.random.default_rng(0)
        # dyadic values keep every partial sum exact in float64
        pred = rng.integers(0, 256, size=(6, 6)) / 256.0
        gt = (rng.random((6, 6)) > 0.5).astype(np.float64)
        up = lambda a: np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)
        assert mae(pred, gt) == mae(up(pred), up(gt))


class TestFMeasure:
    def test_perfect_binary(self):
        gt = checker(4)
        assert f_measure(gt, gt) == 1.0

    def test_perfect_binary_majority_foreground(self):
        gt = np.ones((4, 4))
        gt[0, 0] = 0.0
        assert f_measure(gt, gt) == 1.0

    def test_all_zero_prediction(self):
        gt = checker(4)
        assert f_measure(np.zeros((4, 4)), gt) == 0.0

    def test_hand_case(self):
        # tp=2, fp=1, fn=2 -> P=2/3, R=1/2
        gt = np.zeros((4, 4))
        gt[0, :4] = 1.0
        pred = np.zeros((4, 4))
        pred[0, 0] = pred[0, 1] = 1.0  # two hits
        pred[2, 0] = 1.0               # one false positive
        expected = 1.3 * (2 / 3) * 0.5 / (0.3 * (2 / 3) + 0.5)
        assert f_measure(pred, gt) == pytest.approx(expected, abs=1e-6)
        assert f_measure(pred, gt) == pytest.approx(0.6190476, abs=1e-6)

    def test_empty_gt_raises(self):
        with pytest.raises(ValueError, match="empty ground truth"):
            f_measure(np.ones((3, 3)), np.zeros((3, 3)))

    def test_monotone_in_true_positives(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            gt = (rng.random((6, 6)) > 0.5).astype(float)
            if not gt.any():
                continue
            pred = (rng.random((6, 6)) > 0.6).astype(float)
            missed = np.argwhere((gt > 0) & (pred == 0))
            if len(missed) == 0:
                continue
            before = f_measure(pred, gt)
            fixed = pred.copy()
            y, x = missed[0]
            fixed[y, x] = 1.0
            assert f_measure(fixed, gt) >= before - 1e-12

    def test_range(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            pred = rng.random((5, 5))
            gt = (rng.random((5, 5)) > 0.5).astype(float)
            if not gt.any():
                continue
            assert 0.0 <= f_measure(pred, gt) <= 1.0


class TestSMeasure:
    def test_perfect_binary(self):
        gt = np.zeros((8, 8))
        gt[2:6, 3:7] = 1.0
        assert s_measure(gt, gt) == pytest.approx(1.0, abs=1e-6)

    def test_inverted_below_half(self):
        gt = np.zeros((8, 8))
        gt[2:6, 3:7] = 1.0
        assert s_measure(1.0 - gt, gt) < 0.5

    def test_constant_half_matches_oracle(self):
        gt = np.zeros((8, 8))
        gt[:, :4] = 1.0
        pred = np.full((8, 8), 0.5)
        assert s_measure(pred, gt) == pytest.approx(oracle_s_measure(pred, gt),
                                                    abs=1e-9)

    def test_degenerate_gts(self):
        pred = np.full((4, 4), 0.25)
        assert s_measure(pred, np.zeros((4, 4))) == pytest.approx(0.75)
        assert s_measure(pred, np.ones((4, 4))) == pytest.approx(0.25)

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            pred = rng.random((8, 8))
            gt = (rng.random((8, 8)) > rng.uniform(0.2, 0.8)).astype(float)
            assert s_measure(pred, gt) == pytest.approx(
                oracle_s_measure(pred, gt), abs=1e-9)

    def test_range(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            pred = rng.random((6, 6))
            gt = (rng.random((6, 6)) > 0.5).astype(float)
            assert 0.0 <= s_measure(pred, gt) <= 1.0


class TestEMeasure:
    def test_perfect(self):
        gt = np.zeros((6, 6))
        gt[1:4, 2:5] = 1.0
        assert e_measure(gt, gt) == 1.0

    def test_inverted_balanced_near_zero(self):
        gt = np.zeros((6, 6))
        gt[:3] = 1.0
        value = e_measure(1.0 - gt, gt)
        assert value == pytest.approx(oracle_e_measure(1.0 - gt, gt), abs=1e-9)
        assert value < 0.01

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            pred = rng.random((8, 8))
            gt = (rng.random((8, 8)) > rng.uniform(0.2, 0.8)).astype(float)
            assert e_measure(pred, gt) == pytest.approx(
                oracle_e_measure(pred, gt), abs=1e-9)

    def test_degenerate_gts_match_oracle(self):
        rng = np.random.default_rng(22)
        pred = rng.random((5, 5))
        for gt in (np.zeros((5, 5)), np.ones((5, 5))):
            assert e_measure(pred, gt) == pytest.approx(
                oracle_e_measure(pred, gt), abs=1e-9)

    def test_range(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            pred = rng.random((6, 6))
            gt = (rng.random((6, 6)) > 0.5).astype(float)
            assert 0.0 <= e_measure(pred, gt) <= 1.0


class TestAdaptiveBinarize:
    def test_all_zero_stays_background(self):
        assert not adaptive_binarize(np.zeros((4, 4))).any()

    def test_identity_on_binary_maps(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            pred = (rng.random((5, 5)) > rng.uniform(0.1, 0.9)).astype(float)
            np.testing.assert_array_equal(adaptive_binarize(pred), pred > 0.5)


class TestReport:
    def test_score_pair_skips_empty_gt(self):
        with pytest.warns(UserWarning, match="empty ground truth"):
            row = score_pair(np.full((4, 4), 0.2), np.zeros((4, 4)), "img0")
        assert row["f"] is None
        assert row["mae"] == pytest.approx(0.2)

    def test_report_csv_roundtrip(self, tmp_path):
        gt = checker(4)
        report = MetricReport(config={"note": "test"})
        report.rows.append(score_pair(gt, gt, "a"))
        report.rows.append(score_pair(1 - gt, gt, "b"))
        report.n_images = 2
        path = tmp_path / "report.csv"
        report.write_csv(path)
        text = path.read_text().splitlines()
        assert text[0].startswith("# config:")
        assert text[1] == "image,F,MAE,S,E"
        assert text[-1].startswith("mean,")
        assert len(text) == 2 + 2 + 1
