import itertools

import numpy as np
import pytest

from depthsal.regions import (DepthHistogram, DepthMap, IntervalWindow,
                              compute_histogram, decompose, decompose_depth,
                              find_modes, masks_to_array)

from oracles import oracle_find_mode_bins


def hist_from_counts(counts):
    counts = np.asarray(counts, dtype=np.int64)
    edges = np.arange(len(counts) + 1, dtype=np.float64)
    return DepthHistogram(counts=counts, edges=edges)


class TestComputeHistogram:
    def test_constant_map_single_bin(self):
        depth = DepthMap(values=np.full((6, 8), 5.0))
        hist = compute_histogram(depth, bins=8)
        assert hist.counts.sum() == 48
        assert np.count_nonzero(hist.counts) == 1
        assert hist.counts[0] == 48
        assert np.all(np.diff(hist.edges) > 0)

    def test_four_values_four_bins(self):
        depth = DepthMap(values=np.array([[0.0, 1.0, 2.0, 3.0]]))
        hist = compute_histogram(depth, bins=4)
        assert hist.counts.tolist() == [1, 1, 1, 1]
        assert hist.edges[0] == 0.0 and hist.edges[-1] == 3.0

    def test_only_valid_pixels_counted(self):
        values = np.arange(16, dtype=float).reshape(4, 4)
        valid = np.zeros((4, 4), dtype=bool)
        valid[:2] = True
        hist = compute_histogram(DepthMap(values=values, valid=valid), bins=4)
        assert hist.counts.sum() == 8

    def test_no_valid_pixels_errors(self):
        depth = DepthMap(values=np.ones((2, 2)), valid=np.zeros((2, 2), bool))
        with pytest.raises(ValueError, match="empty depth map"):
            compute_histogram(depth, bins=4)

    def test_bins_lower_bound(self):
        with pytest.raises(ValueError):
            compute_histogram(DepthMap(values=np.ones((2, 2))), bins=1)


class TestFindModes:
    def assert_matches_oracle(self, counts, T, width=5):
        hist = hist_from_counts(counts)
        got = find_modes(hist, T=T, smooth_width=width)
        want = oracle_find_mode_bins(list(counts), T, width)
        assert len(got) == len(want), f"counts={counts}"
        for win, (mass, peak, lo, hi) in zip(got, want):
            assert (win.mass, win.peak_bin, win.bin_lo, win.bin_hi) == \
                (mass, peak, lo, hi), f"counts={counts}"

    def test_unimodal_covers_occupied_support(self):
        counts = [0, 1, 3, 7, 3, 1, 0, 0]
        hist = hist_from_counts(counts)
        wins = find_modes(hist, T=1)
        assert len(wins) == 1
        occupied = np.nonzero(counts)[0]
        assert wins[0].bin_lo <= occupied[0]
        assert wins[0].bin_hi >= occupied[-1]

    def test_bimodal_zero_valley_splits(self):
        counts = np.zeros(64, dtype=int)
        counts[8:13] = [2, 5, 9, 5, 2]  # peak near bin 10
        counts[48:53] = [3, 6, 12, 6, 3]  # peak near bin 50
        wins = find_modes(hist_from_counts(counts), T=2)
        assert len(wins) == 2
        assert wins[0].mass >= wins[1].mass
        assert wins[0].bin_hi < wins[1].bin_lo or wins[1].bin_hi < wins[0].bin_lo
        self.assert_matches_oracle(counts.tolist(), T=2)

    def test_mode_shortfall_returns_fewer(self):
        counts = np.zeros(32, dtype=int)
        counts[4:7] = [2, 8, 2]
        counts[20:23] = [1, 6, 1]
        wins = find_modes(hist_from_counts(counts), T=3)
        assert len(wins) == 2

    def test_masses_non_increasing(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            counts = rng.integers(0, 6, size=16)
            if counts.sum() == 0:
                continue
            wins = find_modes(hist_from_counts(counts), T=4)
            masses = [w.mass for w in wins]
            assert masses == sorted(masses, reverse=True)

    def test_windows_disjoint(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            counts = rng.integers(0, 6, size=16)
            if counts.sum() == 0:
                continue
            wins = find_modes(hist_from_counts(counts), T=5)
            for a, b in itertools.combinations(wins, 2):
                assert a.bin_hi < b.bin_lo or b.bin_hi < a.bin_lo

    def test_exhaustive_small_histograms(self):
        # every histogram over 5 bins with counts in 0..3
        for counts in itertools.product(range(4), repeat=5):
            if sum(counts) == 0:
                continue
            for T in (1, 2, 3):
                self.assert_matches_oracle(list(counts), T=T, width=3)

    def test_random_16bin_histograms(self):
        rng = np.random.default_rng(3)
        for _ in range(400):
            counts = rng.integers(0, 6, size=16).tolist()
            if sum(counts) == 0:
                continue
            self.assert_matches_oracle(counts, T=int(rng.integers(1, 5)))

    def test_t_lower_bound(self):
        with pytest.raises(ValueError):
            find_modes(hist_from_counts([1, 2, 1]), T=0)


class TestDecompose:
    def test_binary_partition_two_windows(self):
        depth = DepthMap(values=np.array([[1.0, 2.0], [5.0, 6.0]]))
        wins = [IntervalWindow(lo=0.0, hi=3.0, peak_bin=0, mass=2),
                IntervalWindow(lo=4.0, hi=7.0, peak_bin=1, mass=2)]
        masks = decompose(depth, wins, mode="binary")
        assert len(masks) == 3
        total = sum(m.weights for m in masks)
        np.testing.assert_array_equal(total, np.ones((2, 2)))

    def test_soft_hand_case(self):
        depth = DepthMap(values=np.array([[2.0, 4.0]]))
        wins = [IntervalWindow(lo=2.0, hi=6.0, peak_bin=0, mass=2)]
        masks = decompose(depth, wins, mode="soft")
        np.testing.assert_allclose(masks[0].weights, [[0.0, 0.5]])

    def test_empty_window_list_all_ones_remainder(self):
        depth = DepthMap(values=np.ones((3, 3)))
        masks = decompose(depth, [], mode="binary")
        assert len(masks) == 1
        np.testing.assert_array_equal(masks[0].weights, np.ones((3, 3)))
        assert masks[0].region_index == 0

    def test_overlapping_windows_error(self):
        depth = DepthMap(values=np.ones((2, 2)))
        wins = [IntervalWindow(lo=0.0, hi=2.0, peak_bin=0, mass=1),
                IntervalWindow(lo=1.0, hi=3.0, peak_bin=1, mass=1)]
        with pytest.raises(ValueError, match="overlap"):
            decompose(depth, wins)

    def test_invalid_pixels_only_in_remainder(self):
        values = np.array([[1.0, 1.0], [9.0, 0.0]])
        depth = DepthMap(values=values, valid=values > 0)
        wins = [IntervalWindow(lo=0.5, hi=2.0, peak_bin=0, mass=2)]
        masks = decompose(depth, wins, mode="binary")
        assert masks[0].weights[1, 1] == 0.0
        assert masks[-1].weights[1, 1] == 1.0

    def test_unknown_mode(self):
        depth = DepthMap(values=np.ones((2, 2)))
        with pytest.raises(ValueError):
            decompose(depth, [], mode="hard")


class TestPipelineProperties:
    def test_partition_invariant_random_maps(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            h, w = rng.integers(2, 12, size=2)
            values = rng.uniform(0, 100, size=(h, w))
            valid = rng.random((h, w)) > 0.2
            if not valid.any():
                continue
            depth = DepthMap(values=values, valid=valid)
            masks = decompose_depth(depth, regions=3, bins=16, mode="binary")
            total = sum(m.weights for m in masks)
            np.testing.assert_array_equal(total, np.ones((h, w)))

    def test_window_mass_equals_membership_count(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            values = rng.uniform(0, 50, size=(8, 8))
            depth = DepthMap(values=values)
            hist = compute_histogram(depth, bins=16)
            for win in find_modes(hist, T=3):
                member = (values >= win.lo) & (values < win.hi)
                assert member.sum() == win.mass

    def test_determinism(self):
        rng = np.random.default_rng(1)
        values = rng.uniform(0, 10, size=(16, 16))
        depth = DepthMap(values=values)
        a = masks_to_array(decompose_depth(depth, regions=3))
        b = masks_to_array(decompose_depth(depth, regions=3))
        np.testing.assert_array_equal(a, b)

    def test_weights_in_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            depth = DepthMap(values=rng.uniform(0, 9, size=(6, 6)))
            for m in decompose_depth(depth, regions=4, bins=12, mode="soft"):
                assert np.all(m.weights >= 0.0) and np.all(m.weights <= 1.0)

    def test_single_region_config(self):
        depth = DepthMap(values=np.arange(16, dtype=float).reshape(4, 4) + 1)
        masks = decompose_depth(depth, regions=1)
        assert len(masks) == 1
        np.testing.assert_array_equal(masks[0].weights, np.ones((4, 4)))
