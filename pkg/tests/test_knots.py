"""Tests for regression-tree knot selection and the noise stopping rule.

The oracle for split decisions is an exhaustive search over every candidate
threshold on every axis, written independently below.
"""
import numpy as np
import numpy.testing as npt
import pytest

from splinefda.errors import InputError
from splinefda.knots import (
    KnotCandidateSet,
    RegressionTree,
    StoppingCurve,
    extract_knots,
    fit_tree,
    noise_reference_curve,
    select_knot_count,
    stopping_curve,
)


def sse(values):
    values = np.asarray(values, dtype=float)
    return float(np.sum((values - values.mean()) ** 2)) if values.size else 0.0


def exhaustive_best_split(X, y, min_pts):
    """Scan every midpoint threshold on every axis; ties keep the earlier
    (lower axis, lower threshold) candidate."""
    best = None
    for axis in range(X.shape[1]):
        vals = np.unique(X[:, axis])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2
            mask = X[:, axis] <= thr
            if mask.sum() < min_pts or (~mask).sum() < min_pts:
                continue
            red = sse(y) - sse(y[mask]) - sse(y[~mask])
            if best is None or red > best[0] + 1e-12:
                best = (red, axis, thr)
    return best


def exhaustive_greedy(X, y, n_leaves, min_pts):
    """Greedy growth with the exhaustive split search, for multi-step checks."""
    cells = [np.arange(len(y))]
    out = []
    while len(cells) < n_leaves:
        best = None
        for ci, idx in enumerate(cells):
            b = exhaustive_best_split(X[idx], y[idx], min_pts)
            if b is not None and (best is None or b[0] > best[0] + 1e-12):
                best = (*b, ci)
        if best is None:
            break
        _, axis, thr, ci = best
        idx = cells.pop(ci)
        mask = X[idx, axis] <= thr
        cells.extend([idx[mask], idx[~mask]])
        out.append((axis, thr))
    return out


class TestFitTree:
    def test_step_signal_splits_at_the_jump(self):
        rng = np.random.default_rng(0)
        xs = np.sort(rng.uniform(0.0, 1.0, 200))
        ys = (xs >= 0.5).astype(float)
        tree = fit_tree(xs, ys, max_leaves=2, min_cell_points=1)
        axis, thr = tree.splits[0]
        assert axis == 0
        below = xs[xs < 0.5].max()
        above = xs[xs >= 0.5].min()
        assert below <= thr <= above
        oracle = exhaustive_best_split(xs[:, None], ys, 1)
        npt.assert_allclose(thr, oracle[2], atol=1e-15)

    def test_first_split_matches_exhaustive_search(self):
        for trial in range(30):
            rng = np.random.default_rng(100 + trial)
            X = rng.uniform(0.0, 1.0, size=(60, 2))
            jump = rng.uniform(0.2, 0.8)
            y = np.where(X[:, 0] > jump, 1.0, 0.0) + 0.3 * rng.standard_normal(60)
            tree = fit_tree(X, y, max_leaves=2, min_cell_points=3)
            axis, thr = tree.splits[0]
            red, oracle_axis, oracle_thr = exhaustive_best_split(X, y, 3)
            assert axis == oracle_axis
            npt.assert_allclose(thr, oracle_thr, atol=1e-12)

    def test_greedy_sequence_matches_exhaustive_search(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0.0, 1.0, size=(80, 1))
        y = np.floor(X[:, 0] * 4)
        tree = fit_tree(X, y, max_leaves=4, min_cell_points=2)
        want = exhaustive_greedy(X, y, 4, 2)
        assert len(tree.splits) == len(want)
        for (axis, thr), (owaxis, othr) in zip(tree.splits, want):
            assert axis == owaxis
            npt.assert_allclose(thr, othr, atol=1e-12)

    def test_constant_signal_stays_single_leaf(self):
        tree = fit_tree(np.linspace(0.0, 1.0, 20), np.ones(20),
                        max_leaves=6, min_cell_points=1)
        assert tree.leaf_count == 1
        assert tree.splits == ()
        npt.assert_allclose(tree.sse_path, [0.0])

    def test_2d_indicator_splits_on_the_informative_axis(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0.0, 1.0, size=(300, 2))
        y = (X[:, 0] > 0.5).astype(float)
        tree = fit_tree(X, y, max_leaves=2, min_cell_points=1)
        axis, thr = tree.splits[0]
        assert axis == 0
        assert abs(thr - 0.5) < 0.05
        # axis-wise comparison: the best axis-1 split removes far less SSE
        best_by_axis = {}
        for a in range(2):
            vals = np.unique(X[:, a])
            reds = []
            for lo, hi in zip(vals[:-1], vals[1:]):
                mask = X[:, a] <= (lo + hi) / 2
                if 0 < mask.sum() < 300:
                    reds.append(sse(y) - sse(y[mask]) - sse(y[~mask]))
            best_by_axis[a] = max(reds)
        assert best_by_axis[0] > best_by_axis[1]

    def test_sse_path_strictly_decreases_while_growing(self):
        rng = np.random.default_rng(5)
        xs = rng.uniform(0.0, 1.0, 120)
        ys = np.sign(np.sin(7 * xs)) + 0.05 * rng.standard_normal(120)
        tree = fit_tree(xs, ys, max_leaves=10, min_cell_points=3)
        assert np.all(np.diff(tree.sse_path) < 0)

    def test_greedy_prefix_property(self):
        rng = np.random.default_rng(2)
        xs = rng.uniform(0.0, 1.0, 150)
        ys = np.sin(6 * xs) + 0.1 * rng.standard_normal(150)
        small = fit_tree(xs, ys, max_leaves=5, min_cell_points=3)
        big = fit_tree(xs, ys, max_leaves=12, min_cell_points=3)
        assert big.splits[:len(small.splits)] == small.splits

    def test_leaves_tile_the_domain(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0.0, 1.0, size=(200, 2))
        y = np.sin(5 * X[:, 0]) * X[:, 1] + 0.1 * rng.standard_normal(200)
        tree = fit_tree(X, y, max_leaves=12, min_cell_points=5,
                        domain=((0.0, 1.0), (0.0, 1.0)))
        leaves = tree.leaves()
        assert len(leaves) == tree.leaf_count
        for x in X:
            holders = 0
            for leaf in leaves:
                inside = all(
                    (lo <= xj < hi) or (hi == dom_hi and xj == hi)
                    for xj, (lo, hi), (dom_lo, dom_hi)
                    in zip(x, leaf.cell, tree.domain))
                holders += inside
            assert holders == 1
        assert sum(leaf.n_samples for leaf in leaves) == 200

    def test_leaf_means_average_their_samples(self):
        rng = np.random.default_rng(4)
        xs = rng.uniform(0.0, 1.0, 90)
        ys = np.cos(4 * xs) + 0.2 * rng.standard_normal(90)
        tree = fit_tree(xs, ys, max_leaves=6, min_cell_points=5)
        pred = tree.predict(xs)
        for leaf in tree.leaves():
            lo, hi = leaf.cell[0]
            mask = pred == leaf.mean
            npt.assert_allclose(leaf.mean, ys[mask].mean())
            assert mask.sum() == leaf.n_samples

    def test_min_cell_points_respected(self):
        rng = np.random.default_rng(6)
        xs = rng.uniform(0.0, 1.0, 60)
        ys = np.sign(xs - 0.5) + 0.1 * rng.standard_normal(60)
        tree = fit_tree(xs, ys, max_leaves=12, min_cell_points=7)
        assert all(leaf.n_samples >= 7 for leaf in tree.leaves())

    def test_empty_input_rejected(self):
        with pytest.raises(InputError):
            fit_tree(np.array([]), np.array([]), max_leaves=2)

    def test_too_few_samples_rejected(self):
        with pytest.raises(InputError):
            fit_tree(np.arange(6.0), np.arange(6.0), max_leaves=2,
                     min_cell_points=5)

    def test_3d_locations_rejected(self):
        X = np.zeros((20, 3))
        with pytest.raises(InputError):
            fit_tree(X, np.zeros(20), max_leaves=2, min_cell_points=1)

    def test_samples_outside_domain_rejected(self):
        with pytest.raises(InputError):
            fit_tree(np.linspace(0.0, 2.0, 20), np.zeros(20), max_leaves=2,
                     min_cell_points=1, domain=((0.0, 1.0),))


class TestExtractKnots:
    def test_single_leaf_square_gives_center(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0.0, 1.0, size=(20, 2))
        tree = fit_tree(X, np.ones(20), max_leaves=4, min_cell_points=1,
                        domain=((0.0, 1.0), (0.0, 1.0)))
        knots = extract_knots(tree)
        npt.assert_allclose(knots.points, [[0.5, 0.5]])

    def test_two_halves_give_quarter_points(self):
        xs = np.array([0.1, 0.3, 0.45, 0.55, 0.7, 0.9])
        ys = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        tree = fit_tree(xs, ys, max_leaves=2, min_cell_points=1,
                        domain=((0.0, 1.0),))
        npt.assert_allclose(tree.splits[0][1], 0.5)
        knots = extract_knots(tree)
        npt.assert_allclose(knots.points, [[0.25], [0.75]])

    def test_points_strictly_inside_domain_and_sorted(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0.0, 1.0, size=(250, 2))
        y = np.sin(8 * X[:, 0]) + np.cos(5 * X[:, 1])
        tree = fit_tree(X, y, max_leaves=15, min_cell_points=5,
                        domain=((0.0, 1.0), (0.0, 1.0)))
        knots = extract_knots(tree)
        assert knots.points.shape == (tree.leaf_count, 2)
        assert np.all(knots.points > 0.0) and np.all(knots.points < 1.0)
        flat = [tuple(p) for p in knots.points]
        assert flat == sorted(flat)

    def test_bump_signal_concentrates_knots(self):
        xs = np.linspace(0.0, 1.0, 400)
        ys = np.exp(-200 * (xs - 0.3) ** 2)
        tree = fit_tree(xs, ys, max_leaves=20, min_cell_points=5,
                        domain=((0.0, 1.0),))
        pts = extract_knots(tree).points[:, 0]
        frac = np.mean((pts >= 0.2) & (pts <= 0.4))
        assert frac >= 0.6


class TestNoiseReferenceCurve:
    def test_endpoints(self):
        curve = noise_reference_curve(64, 64, n_monte_carlo=5, seed=1)
        assert curve.is_noise_reference
        npt.assert_allclose(curve.relative_errors[0], 1.0)
        npt.assert_allclose(curve.relative_errors[-1], 0.0, atol=1e-15)

    def test_non_increasing_over_seeds(self):
        for seed in range(20):
            curve = noise_reference_curve(40, 25, n_monte_carlo=1, seed=seed)
            assert np.all(np.diff(curve.relative_errors) <= 1e-12)
            assert np.all(curve.relative_errors >= 0.0)

    def test_deterministic_given_seed(self):
        a = noise_reference_curve(50, 20, n_monte_carlo=3, seed=7)
        b = noise_reference_curve(50, 20, n_monte_carlo=3, seed=7)
        npt.assert_array_equal(a.relative_errors, b.relative_errors)

    def test_zero_replicates_rejected(self):
        with pytest.raises(InputError):
            noise_reference_curve(50, 20, n_monte_carlo=0, seed=0)


class TestSelectKnotCount:
    def test_identical_curves_select_one(self):
        curve = noise_reference_curve(50, 20, n_monte_carlo=2, seed=3)
        assert select_knot_count(curve, curve) == 1

    def test_elbow_detected_by_direct_scan(self):
        counts = np.arange(1, 21)
        noise_rel = 0.97 ** (counts - 1)
        data_rel = np.where(counts <= 8, 1.0 - 0.1 * (counts - 1),
                            0.3 * 0.99 ** (counts - 8))
        data = StoppingCurve(counts, data_rel)
        noise = StoppingCurve(counts, noise_rel, True)
        got = select_knot_count(data, noise)
        data_drop = -np.diff(data_rel)
        noise_drop = -np.diff(noise_rel)
        scan = next((int(counts[i]) for i in range(len(data_drop))
                     if data_drop[i] <= noise_drop[i]), int(counts[-1]))
        assert got == scan
        assert 8 <= got <= 12

    def test_steeper_data_curve_returns_grid_maximum(self):
        counts = np.arange(1, 11)
        noise = StoppingCurve(counts, 0.95 ** (counts - 1), True)
        # linear decay with a 0.11 drop per step beats every noise drop
        data = StoppingCurve(counts, 1.0 - 0.11 * (counts - 1))
        assert select_knot_count(data, noise) == 10

    def test_mismatched_grids_rejected(self):
        a = StoppingCurve(np.arange(1, 11), np.linspace(1.0, 0.1, 10))
        b = StoppingCurve(np.arange(1, 12), np.linspace(1.0, 0.1, 11), True)
        with pytest.raises(InputError):
            select_knot_count(a, b)

    def test_pure_noise_selects_few_knots(self):
        # fitting noise should stop almost immediately; this rate is exact
        # for the seeds below since every piece is deterministic
        reference = noise_reference_curve(100, 30, n_monte_carlo=50, seed=42)
        xs = np.linspace(0.0, 1.0, 100)
        hits = 0
        for trial in range(50):
            rng = np.random.default_rng(1000 + trial)
            data = stopping_curve(xs, rng.standard_normal(100), max_leaves=30)
            if select_knot_count(data, reference) <= 3:
                hits += 1
        assert hits >= 45


class TestStoppingCurve:
    def test_increasing_errors_rejected(self):
        with pytest.raises(InputError):
            StoppingCurve(np.array([1, 2, 3]), np.array([1.0, 0.5, 0.7]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            StoppingCurve(np.array([1, 2, 3]), np.array([1.0, 0.5]))

    def test_data_curve_padded_when_growth_stalls(self):
        # four distinct plateaus cap the tree at four leaves
        xs = np.linspace(0.0, 1.0, 40)
        ys = np.floor(xs * 3.999)
        curve = stopping_curve(xs, ys, max_leaves=10)
        npt.assert_array_equal(curve.leaf_counts, np.arange(1, 11))
        npt.assert_allclose(curve.relative_errors[0], 1.0)
        npt.assert_allclose(curve.relative_errors[3:], 0.0, atol=1e-12)
