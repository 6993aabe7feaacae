"""Metric tests with hand-computed fixtures.

The 2x2 depth fixture and the single-pixel cases are evaluated by plain
Python arithmetic in the tests themselves; the piecewise Gaussian values
are exp(-0.5) by construction of the examples.
"""

import numpy as np
import pytest

from nastereo.evalkit import (
    MetricsReport,
    ViewSelectionParams,
    depth_metrics,
    gaussian_weight,
    merge_reports,
    normal_metrics,
    report_csv,
    report_lines,
    view_pair_score,
)
from nastereo.maps import DepthMap, NormalMap


def dm(z, valid=None):
    return DepthMap(np.asarray(z, dtype=float), valid)


def nm(vectors, valid=None):
    n = np.asarray(vectors, dtype=float)
    return NormalMap(n, valid)


class TestDepthMetrics:
    def test_perfect_prediction(self):
        gt = dm([[1.0, 2.0], [3.0, 4.0]])
        rep = depth_metrics(gt, gt)
        assert rep.abs_rel == 0 and rep.abs_diff == 0 and rep.sq_rel == 0
        assert rep.rmse == 0 and rep.rmse_log == 0
        assert rep.delta1 == rep.delta2 == rep.delta3 == 1.0
        assert rep.pixel_count == 4

    def test_single_pixel_hand_values(self):
        rep = depth_metrics(dm([[1.0]]), dm([[1.2]]))
        assert rep.abs_rel == pytest.approx(abs(1.0 - 1.2) / 1.2, rel=1e-15)
        assert rep.abs_diff == pytest.approx(0.2, rel=1e-12)
        assert rep.delta1 == 1.0  # max ratio 1.2 < 1.25

    def test_double_prediction_fails_all_inlier_levels(self):
        gt = dm([[1.0, 2.0], [3.0, 4.0]])
        pred = dm([[2.0, 4.0], [6.0, 8.0]])
        rep = depth_metrics(pred, gt)
        # ratio 2 exceeds 1.25^3 = 1.953125
        assert rep.delta1 == 0.0 and rep.delta2 == 0.0 and rep.delta3 == 0.0

    def test_hand_computed_2x2_fixture(self):
        pred = [[1.0, 2.4], [0.5, 3.0]]
        gt = [[1.2, 2.0], [0.5, 2.0]]
        rep = depth_metrics(dm(pred), dm(gt))
        diffs = [abs(p - g) for p, g in zip(sum(pred, []), sum(gt, []))]
        gts = sum(gt, [])
        assert rep.abs_rel == pytest.approx(
            sum(d / g for d, g in zip(diffs, gts)) / 4, rel=1e-14
        )
        assert rep.abs_diff == pytest.approx(sum(diffs) / 4, rel=1e-14)
        assert rep.sq_rel == pytest.approx(
            sum(d * d / g for d, g in zip(diffs, gts)) / 4, rel=1e-14
        )
        assert rep.rmse == pytest.approx(np.sqrt(sum(d * d for d in diffs) / 4), rel=1e-14)
        logs = [np.log(p) - np.log(g) for p, g in zip(sum(pred, []), gts)]
        assert rep.rmse_log == pytest.approx(np.sqrt(sum(l * l for l in logs) / 4), rel=1e-14)
        # ratios: 1.2, 1.2, 1.0, 1.5
        assert rep.delta1 == 0.75
        assert rep.delta2 == 1.0 and rep.delta3 == 1.0

    def test_mask_awareness(self):
        gt = dm([[1.0, 2.0], [3.0, 4.0]])
        pred_full = dm([[1.1, 2.2], [999.0, 999.0]], np.array([[True, True], [False, False]]))
        pred_small = dm([[1.1, 2.2]])
        rep_full = depth_metrics(pred_full, gt)
        rep_small = depth_metrics(pred_small, dm([[1.0, 2.0]]))
        for name in ("abs_rel", "abs_diff", "sq_rel", "rmse", "rmse_log", "delta1"):
            assert getattr(rep_full, name) == pytest.approx(getattr(rep_small, name), rel=1e-15)
        assert rep_full.pixel_count == 2

    def test_joint_scaling_invariance(self):
        rng = np.random.default_rng(0)
        gt_z = rng.uniform(1, 5, (8, 8))
        pred_z = gt_z * rng.uniform(0.8, 1.2, (8, 8))
        r1 = depth_metrics(dm(pred_z), dm(gt_z))
        r2 = depth_metrics(dm(pred_z * 7.0), dm(gt_z * 7.0))
        assert r2.abs_rel == pytest.approx(r1.abs_rel, rel=1e-12)
        assert r2.delta1 == r1.delta1
        assert r2.abs_diff == pytest.approx(7.0 * r1.abs_diff, rel=1e-12)
        assert r2.rmse == pytest.approx(7.0 * r1.rmse, rel=1e-12)

    def test_nonpositive_pred_excluded_from_rmse_log(self):
        # A depth map from a broken method may carry non-positive values;
        # the container forbids them, so simulate by editing after
        # construction.
        z = np.array([[1.0, 1.0]])
        pred = DepthMap(np.array([[1.0, 1.0]]), np.array([[True, True]]))
        pred.z[0, 1] = -0.5
        rep = depth_metrics(pred, dm(z))
        assert rep.rmse_log == 0.0  # only the valid-positive pixel enters
        assert rep.delta1 == 0.5  # the non-positive pixel can never be an inlier
        assert rep.pixel_count == 2

    def test_empty_mask_raises(self):
        gt = dm([[1.0]])
        pred = DepthMap(np.array([[1.0]]), np.array([[False]]))
        with pytest.raises(ValueError):
            depth_metrics(pred, gt)


class TestNormalMetrics:
    def test_perfect(self):
        n = nm([[[0.0, 0.0, -1.0]] * 4] * 4)
        rep = normal_metrics(n, n)
        assert rep.mean_angle == 0.0 and rep.median_angle == 0.0
        assert rep.frac_11_25 == rep.frac_22_5 == rep.frac_30 == 1.0

    def test_half_matching_half_orthogonal(self):
        pred = nm([[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]])
        gt = nm([[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]])
        rep = normal_metrics(pred, gt)
        assert rep.mean_angle == pytest.approx(45.0, abs=1e-12)
        assert rep.median_angle == pytest.approx(45.0, abs=1e-12)  # even-count rule
        assert rep.frac_30 == 0.5

    def test_strict_threshold_at_boundary(self):
        a = np.radians(22.5)
        pred = nm([[[np.sin(a), 0.0, np.cos(a)]]])
        gt = nm([[[0.0, 0.0, 1.0]]])
        rep = normal_metrics(pred, gt)
        # arccos round-trip lands at >= 22.5 degrees; strict less-than
        # excludes the boundary.
        assert rep.frac_22_5 == 0.0
        assert rep.frac_30 == 1.0

    def test_median_even_count_rule(self):
        angs = [0.0, 10.0, 20.0, 40.0]
        vecs = [[np.sin(np.radians(t)), 0.0, np.cos(np.radians(t))] for t in angs]
        pred = nm([vecs])
        gt = nm([[[0.0, 0.0, 1.0]] * 4])
        rep = normal_metrics(pred, gt)
        assert rep.median_angle == pytest.approx(15.0, abs=1e-9)


class TestGaussianWeight:
    def test_peak(self):
        assert gaussian_weight(5.0) == 1.0

    def test_left_branch(self):
        assert gaussian_weight(4.0) == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_right_branch(self):
        assert gaussian_weight(15.0) == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_continuous_at_theta0(self):
        eps = 1e-12
        assert gaussian_weight(5.0 - eps) == pytest.approx(1.0, abs=1e-9)
        assert gaussian_weight(5.0 + eps) == pytest.approx(1.0, abs=1e-9)

    def test_strictly_decreasing_away_from_peak(self):
        left = gaussian_weight(np.array([5.0, 4.0, 3.0, 1.0, 0.0]))
        right = gaussian_weight(np.array([5.0, 8.0, 15.0, 30.0, 90.0]))
        assert np.all(np.diff(left) < 0)
        assert np.all(np.diff(right) < 0)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ViewSelectionParams(sigma1=0.0)


def point_at_angle(theta_deg):
    """Camera centers subtending exactly theta at the origin."""
    t = np.radians(theta_deg)
    return np.array([1.0, 0.0, 0.0]), np.array([np.cos(t), np.sin(t), 0.0])


class TestViewPairScore:
    def test_single_point_at_peak_angle(self):
        ci, cj = point_at_angle(5.0)
        score = view_pair_score(np.zeros((1, 3)), ci, cj)
        assert score == pytest.approx(1.0, abs=1e-12)

    def test_identical_cameras(self):
        pts = np.random.default_rng(0).normal(size=(7, 3)) + [0, 0, 5.0]
        c = np.array([0.0, 0.0, 0.0])
        score = view_pair_score(pts, c, c)
        assert score == pytest.approx(7 * np.exp(-12.5), rel=1e-12)

    def test_two_points_sum(self):
        # One point at 5 degrees, one at 15: 1 + exp(-0.5).
        t = np.radians(15.0)
        ci = np.array([1.0, 0.0, 0.0])
        cj5 = np.array([np.cos(np.radians(5.0)), np.sin(np.radians(5.0)), 0.0])
        # Place the second point so its pair of vectors subtends 15 degrees:
        # use the same geometry shifted to another origin.
        p2 = np.array([10.0, 10.0, 10.0])
        ci2 = p2 + np.array([1.0, 0.0, 0.0])
        cj2 = p2 + np.array([np.cos(t), np.sin(t), 0.0])
        # Scores add over points; verify by splitting.
        s5 = view_pair_score(np.zeros((1, 3)), ci, cj5)
        s15 = view_pair_score(p2[None, :], ci2, cj2)
        assert s5 + s15 == pytest.approx(1.0 + np.exp(-0.5), abs=1e-12)

    def test_point_on_camera_center_skipped(self):
        ci, cj = point_at_angle(5.0)
        pts = np.stack([np.zeros(3), ci])  # second point sits on camera i
        score = view_pair_score(pts, ci, cj)
        assert score == pytest.approx(1.0, abs=1e-12)


class TestReports:
    def test_merge_and_lines(self):
        d = MetricsReport(abs_rel=0.1, abs_diff=0.2, sq_rel=0.0, rmse=0.3,
                          rmse_log=0.1, delta1=1.0, delta2=1.0, delta3=1.0, pixel_count=10)
        n = MetricsReport(mean_angle=5.0, median_angle=4.0, frac_11_25=1.0,
                          frac_22_5=1.0, frac_30=1.0, pixel_count=9)
        merged = merge_reports(d, n)
        assert merged.pixel_count == 10
        assert merged.mean_angle == 5.0
        lines = report_lines(merged)
        assert any(line.startswith("abs_rel = ") for line in lines)

    def test_csv_drops_absent_normal_columns(self):
        d = MetricsReport(abs_rel=0.1, abs_diff=0.2, sq_rel=0.0, rmse=0.3,
                          rmse_log=0.1, delta1=1.0, delta2=1.0, delta3=1.0, pixel_count=10)
        header, row = report_csv(d, stem="view00")
        assert "mean_angle" not in header
        assert header.split(",")[0] == "stem"
        assert row.split(",")[0] == "view00"
        assert len(header.split(",")) == len(row.split(","))
