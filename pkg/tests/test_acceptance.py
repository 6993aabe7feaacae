"""Acceptance suite.

One test per acceptance criterion, each printing a single PASS/FAIL line
(run with ``pytest -s tests/test_acceptance.py`` to see them live).  Every
tolerance is stated inline; expected values are recomputed from independent
closed forms or scalar loops inside the tests.
"""

import subprocess
import sys
import time

import numpy as np

from conftest import make_intrinsics, render_plane, render_sphere, sphere_interior
from nastereo.camera import CameraPose
from nastereo.consistency import (
    LossWeights,
    grad_estimate_normal,
    grad_estimate_sobel,
    grad_estimate_tangent,
    loss_consistency_lc,
    loss_total,
)
from nastereo.maps import DepthMap, NormalMap
from nastereo.normals import angle_between, normals_from_depth, normals_from_volume
from nastereo.refine import RefineConfig, consistency_value_and_grad, refine_depth
from nastereo.scenegen import CheckerTexture, add_depth_noise
from nastereo.sweep import (
    PlaneSweepConfig,
    build_cost_volume,
    plane_depths,
    probability_from_depth,
    soft_argmin_depth,
    to_probability,
)
from nastereo.evalkit import depth_metrics, gaussian_weight, view_pair_score


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def _criterion4_sweep():
    """Two-view noise-free checker plane, 0.1 m baseline, 64 inverse planes."""
    k = make_intrinsics()
    cams = [(k, CameraPose.identity()), (k, CameraPose.from_center([0.1, 0.0, 0.0]))]
    views = render_plane(a_x=0.0, b=2.0, k=k, cameras=cams, texture=CheckerTexture(period=0.077))
    cfg = PlaneSweepConfig(depth_min=1.0, depth_max=4.0, num_planes=64, cost_kind="zncc")
    cv = build_cost_volume(views[0].image, [views[1].image], cams, cfg)
    pv = to_probability(cv, cfg.softmax_temperature)
    return k, views, cv, pv, soft_argmin_depth(pv)


def test_criterion_01_consistency_identity():
    """|Estimate1 - Estimate2| <= 1e-3 m/px and L_c <= 1e-4 on GT pairs, < 1 s."""
    t0 = time.perf_counter()
    k = make_intrinsics()

    plane = render_plane(a_x=0.5, b=2.0, size=128, k=k)[0]
    g1 = grad_estimate_sobel(plane.depth_gt)
    g2 = grad_estimate_normal(plane.depth_gt, plane.normal_gt, k)
    m = g1.valid & g2.valid
    plane_dev = max(
        np.abs(g1.dzdu - g2.dzdu)[m].max(), np.abs(g1.dzdv - g2.dzdv)[m].max()
    )
    plane_lc = loss_consistency_lc(plane.depth_gt, plane.normal_gt, k)

    sphere = render_sphere(size=128, k=k)[0]
    interior = sphere_interior(sphere, k, cutoff_deg=60.0, erosion=2)
    sd = DepthMap(sphere.depth_gt.z, interior)
    sn = NormalMap(np.where(interior[..., None], sphere.normal_gt.n, 0.0), interior)
    g1s = grad_estimate_sobel(sd)
    g2s = grad_estimate_normal(sd, sn, k)
    ms = g1s.valid & g2s.valid
    sphere_dev = max(
        np.abs(g1s.dzdu - g2s.dzdu)[ms].max(), np.abs(g1s.dzdv - g2s.dzdv)[ms].max()
    )
    sphere_lc = loss_consistency_lc(sd, sn, k)
    elapsed = time.perf_counter() - t0

    ok = (
        plane_dev <= 1e-3
        and plane_lc <= 1e-4
        and sphere_dev <= 1e-3
        and sphere_lc <= 1e-4
        and elapsed < 1.0
    )
    _report(
        1,
        ok,
        f"plane dev {plane_dev:.2e} (<=1e-3), L_c {plane_lc:.2e} (<=1e-4); "
        f"sphere dev {sphere_dev:.2e}, L_c {sphere_lc:.2e}; {elapsed:.2f}s (<1s)",
    )


def test_criterion_02_closed_form_spot_check():
    """Estimate 2 at u-uc=20, v=vc equals a Z^2/(b fx), Z = b/(1-a(u-uc)/fx), to 1e-9."""
    k = make_intrinsics(uc=50.0, vc=40.0)
    view = render_plane(a_x=0.5, b=2.0, size=128, k=k)[0]
    g2 = grad_estimate_normal(view.depth_gt, view.normal_gt, k)
    z = 2.0 / (1.0 - 0.5 * 20.0 / 100.0)
    expected = 0.5 * z * z / (2.0 * 100.0)  # 0.012346 to 6 decimals
    got = g2.dzdu[40, 70]
    dev = abs(got - expected)
    _report(2, dev <= 1e-9, f"dZ/du {got:.9f} vs closed form {expected:.9f}, |diff| {dev:.1e}")


def test_criterion_03_scale_dependence_distinction():
    """Z -> 2Z scales the pixel-space estimate exactly; tangents unchanged."""
    k = make_intrinsics()
    view = render_plane(a_x=0.5, a_y=0.2, b=2.0, k=k)[0]
    g1 = grad_estimate_normal(view.depth_gt, view.normal_gt, k)
    scaled = DepthMap(view.depth_gt.z * 2.0, view.depth_gt.valid)
    g2 = grad_estimate_normal(scaled, view.normal_gt, k)
    rel_u = np.abs(g2.dzdu - 2.0 * g1.dzdu) / np.maximum(np.abs(2.0 * g1.dzdu), 1e-300)
    rel_v = np.abs(g2.dzdv - 2.0 * g1.dzdv) / np.maximum(np.abs(2.0 * g1.dzdv), 1e-300)
    m = g1.valid & g2.valid
    scale_dev = max(rel_u[m].max(), rel_v[m].max())

    tx1, ty1, ok1 = grad_estimate_tangent(view.normal_gt)
    tx2, ty2, ok2 = grad_estimate_tangent(view.normal_gt)  # tangents never see Z
    tangent_dev = max(np.abs(tx1 - tx2).max(), np.abs(ty1 - ty2).max())
    ok = scale_dev <= 1e-12 and tangent_dev == 0.0 and np.array_equal(ok1, ok2)
    _report(
        3,
        ok,
        f"pixel-space scaling rel dev {scale_dev:.1e} (<=1e-12); "
        f"world-space tangents Z-free (dev {tangent_dev:.1e})",
    )


def test_criterion_04_plane_sweep_accuracy():
    """>=95% of valid interior pixels within local plane spacing; abs_rel < 0.01; < 30 s."""
    t0 = time.perf_counter()
    k, views, cv, pv, depth = _criterion4_sweep()
    elapsed = time.perf_counter() - t0
    gt = views[0].depth_gt
    planes = cv.planes
    idx = np.clip(np.searchsorted(planes, gt.z), 1, len(planes) - 1)
    spacing = planes[idx] - planes[idx - 1]
    interior = np.zeros(gt.z.shape, bool)
    interior[4:-4, 12:-12] = True  # clears patch radius plus max disparity
    m = interior & depth.valid & gt.valid
    err = np.abs(depth.z - gt.z)
    frac = float((err[m] < spacing[m]).mean())
    abs_rel = depth_metrics(DepthMap(depth.z, m), DepthMap(gt.z, m)).abs_rel
    ok = frac >= 0.95 and abs_rel < 0.01 and elapsed < 30.0
    _report(
        4,
        ok,
        f"{frac * 100:.1f}% within spacing (>=95%), abs_rel {abs_rel:.4f} (<0.01), "
        f"{elapsed:.1f}s (<30s), {int(m.sum())} px",
    )


def test_criterion_05_normals_from_depth_oracle():
    """Mean angle error < 0.5 deg on planes, < 1.5 deg on sphere interiors (5x5)."""
    k = make_intrinsics()
    plane = render_plane(a_x=0.5, b=2.0, k=k)[0]
    nm = normals_from_depth(plane.depth_gt, k, window=5)
    m = nm.valid & plane.normal_gt.valid
    plane_mean = float(angle_between(nm.n[m], plane.normal_gt.n[m]).mean())

    sphere = render_sphere(k=k)[0]
    nms = normals_from_depth(sphere.depth_gt, k, window=5)
    interior = sphere_interior(sphere, k, cutoff_deg=60.0, erosion=2)
    ms = nms.valid & interior
    sphere_mean = float(angle_between(nms.n[ms], sphere.normal_gt.n[ms]).mean())
    ok = plane_mean < 0.5 and sphere_mean < 1.5
    _report(
        5,
        ok,
        f"plane mean {plane_mean:.4f} deg (<0.5), sphere interior mean {sphere_mean:.4f} deg (<1.5)",
    )


def test_criterion_06_volume_normal_extraction():
    """One-hot volume < 1 deg mean; actual ZNCC volume < 8 deg on plane interiors."""
    k = make_intrinsics()
    plane = render_plane(a_x=0.5, b=2.0, k=k)[0]
    planes = plane_depths(PlaneSweepConfig(depth_min=1.0, depth_max=4.0, num_planes=64))
    one_hot = probability_from_depth(plane.depth_gt, planes)
    nm1 = normals_from_volume(one_hot, k)
    m1 = nm1.valid & plane.normal_gt.valid
    onehot_mean = float(angle_between(nm1.n[m1], plane.normal_gt.n[m1]).mean())

    _, views, cv, pv, _depth = _criterion4_sweep()
    nm2 = normals_from_volume(pv, k)
    interior = np.zeros(nm2.n.shape[:2], bool)
    interior[6:-6, 14:-14] = True
    m2 = nm2.valid & views[0].normal_gt.valid & interior
    zncc_mean = float(angle_between(nm2.n[m2], views[0].normal_gt.n[m2]).mean())
    ok = onehot_mean < 1.0 and zncc_mean < 8.0
    _report(
        6,
        ok,
        f"one-hot mean {onehot_mean:.4f} deg (<1), ZNCC volume mean {zncc_mean:.4f} deg (<8)",
    )


def test_criterion_07_refinement_efficacy():
    """Noisy plane + exact normals, lambda_c = 1: RMSE <= 0.6x, L_c <= 0.2x,
    non-increasing trace, analytic gradient matches FD to 1e-4, and the
    world-space variant also strictly reduces RMSE."""
    k = make_intrinsics()
    view = render_plane(a_x=0.5, b=2.0, k=k)[0]
    noisy = add_depth_noise(view.depth_gt, 0.02, seed=11)
    m = view.depth_gt.valid

    def rmse(z):
        return float(np.sqrt(np.mean((z - view.depth_gt.z)[m] ** 2)))

    raw_rmse = rmse(noisy.z)
    lc0 = loss_consistency_lc(noisy, view.normal_gt, k)
    cfg = RefineConfig(lambda_c=1.0)
    res = refine_depth(noisy, view.normal_gt, k, cfg)
    ref_rmse = rmse(res.depth.z)
    lc1 = loss_consistency_lc(res.depth, view.normal_gt, k)
    monotone = bool(np.all(np.diff(res.trace[:, 1]) <= 0))

    # Analytic consistency gradient vs central differences on a 16x16 crop.
    k16 = make_intrinsics(uc=7.5, vc=7.5)
    crop = render_plane(a_x=0.5, b=2.0, size=16, k=k16)[0]
    noisy16 = add_depth_noise(crop.depth_gt, 0.02, seed=3)
    z = noisy16.z
    _, grad = consistency_value_and_grad(
        z, noisy16.valid, crop.normal_gt, k16, delta=cfg.huber_delta_grad, loss_kind="lc"
    )
    fd = np.zeros_like(grad)
    h = 1e-6
    for i in range(16):
        for j in range(16):
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            vp, _ = consistency_value_and_grad(
                zp, noisy16.valid, crop.normal_gt, k16, delta=cfg.huber_delta_grad, loss_kind="lc"
            )
            vm, _ = consistency_value_and_grad(
                zm, noisy16.valid, crop.normal_gt, k16, delta=cfg.huber_delta_grad, loss_kind="lc"
            )
            fd[i, j] = (vp - vm) / (2 * h)
    # Relative deviation normalized by the gradient scale: per-component
    # ratios are ill-posed where the gradient crosses zero.
    grad_dev = float(np.abs(grad - fd).max() / np.abs(grad).max())

    res_lt = refine_depth(noisy, view.normal_gt, k, RefineConfig(lambda_c=1.0, loss_kind="lt"))
    lt_rmse = rmse(res_lt.depth.z)

    ok = (
        ref_rmse <= 0.6 * raw_rmse
        and lc1 <= 0.2 * lc0
        and monotone
        and grad_dev < 1e-4
        and lt_rmse < raw_rmse
    )
    _report(
        7,
        ok,
        f"RMSE {raw_rmse:.4f}->{ref_rmse:.4f} ({ref_rmse / raw_rmse:.2f}x <= 0.6x), "
        f"L_c {lc0:.2e}->{lc1:.2e} ({lc1 / lc0:.3f}x <= 0.2x), monotone={monotone}, "
        f"grad FD dev {grad_dev:.1e} (<1e-4), lt RMSE {lt_rmse:.4f} (<raw)",
    )


def test_criterion_08_metrics_fixtures():
    """Hand-computed metric fixtures; Gaussian and view-score values to 1e-12."""
    rep = depth_metrics(
        DepthMap(np.array([[1.0, 2.4], [0.5, 3.0]])),
        DepthMap(np.array([[1.2, 2.0], [0.5, 2.0]])),
    )
    exp_abs_rel = (abs(1.0 - 1.2) / 1.2 + abs(2.4 - 2.0) / 2.0 + 0.0 + abs(3.0 - 2.0) / 2.0) / 4
    exp_abs_diff = (abs(1.0 - 1.2) + abs(2.4 - 2.0) + 0.0 + 1.0) / 4
    exp_delta1 = 0.75  # ratios 1.2, 1.2, 1.0, 1.5
    fixture_ok = (
        abs(rep.abs_rel - exp_abs_rel) < 1e-14
        and abs(rep.abs_diff - exp_abs_diff) < 1e-14
        and rep.delta1 == exp_delta1
        and rep.delta2 == 1.0
    )

    g4 = gaussian_weight(4.0)
    g15 = gaussian_weight(15.0)
    gauss_ok = abs(g4 - np.exp(-0.5)) <= 1e-12 and abs(g15 - np.exp(-0.5)) <= 1e-12

    t5 = np.radians(5.0)
    s_peak = view_pair_score(
        np.zeros((1, 3)), np.array([1.0, 0, 0]), np.array([np.cos(t5), np.sin(t5), 0.0])
    )
    pts = np.random.default_rng(0).normal(size=(5, 3)) + [0, 0, 5.0]
    s_same = view_pair_score(pts, np.zeros(3), np.zeros(3))
    score_ok = abs(s_peak - 1.0) <= 1e-12 and abs(s_same - 5 * np.exp(-12.5)) <= 1e-12

    ok = fixture_ok and gauss_ok and score_ok
    _report(
        8,
        ok,
        f"2x2 fixture exact={fixture_ok}, gaussian(4)=gaussian(15)=exp(-0.5) to 1e-12: "
        f"{gauss_ok}, view scores to 1e-12: {score_ok}",
    )


def test_criterion_09_cli_determinism(tmp_path):
    """synth + sweep + eval with a fixed seed are byte-identical across runs."""
    spec = tmp_path / "scene.txt"
    spec.write_text(
        "kind = plane\nb = 2\ntexture = checker\nperiod = 0.08\n"
        "width = 96\nheight = 96\nviews = 2\nbaseline = 0.1\n"
    )

    def run_chain(tag):
        base = tmp_path / tag
        for cmd in (
            ["synth", str(spec), "--out", str(base / "ds"), "--seed", "7"],
            ["sweep", str(base / "ds"), "--out", str(base / "pred"), "--planes", "32"],
            ["eval", str(base / "pred"), str(base / "ds"), "--out", str(base / "rep")],
        ):
            proc = subprocess.run(
                [sys.executable, "-m", "nastereo.cli", *cmd], capture_output=True, text=True
            )
            assert proc.returncode == 0, proc.stderr
        return base

    a = run_chain("run_a")
    b = run_chain("run_b")
    mismatches = []
    for sub in ("ds", "pred", "rep"):
        for fa in sorted((a / sub).rglob("*")):
            if fa.is_dir():
                continue
            fb = b / sub / fa.relative_to(a / sub)
            if fa.read_bytes() != fb.read_bytes():
                mismatches.append(str(fa.relative_to(a)))
    ok = not mismatches
    _report(9, ok, f"byte-identical artifacts across two runs (mismatches: {mismatches or 'none'})")


def test_criterion_10_loss_composition():
    """loss_total reproduces hand-expanded Eq-style values on 3 fixtures to 1e-12."""
    weights = LossWeights(lambda_z=0.7, lambda_n=3.0, huber_delta=1.0)

    def huber_scalar(r, delta=1.0):
        r = abs(r)
        return 0.5 * r * r / delta if r <= delta else r - delta / 2

    shape = (4, 4)
    gt_d = DepthMap(np.full(shape, 2.0))
    gt_n = NormalMap(np.broadcast_to([0.0, 0.0, -1.0], shape + (3,)).copy())

    # Fixture A: post-aggregation depth off by 3, everything else exact.
    d2 = DepthMap(gt_d.z + 3.0)
    out_a = loss_total(gt_d, d2, gt_d, gt_n, gt_n, weights)
    exp_a = huber_scalar(3.0)  # = 2.5; the lambda_z and lambda_n terms vanish
    ok_a = abs(out_a.total - exp_a) <= 1e-12

    # Fixture B: pre-aggregation depth off by 0.4 (quadratic branch).
    d1 = DepthMap(gt_d.z + 0.4)
    out_b = loss_total(d1, gt_d, gt_d, gt_n, gt_n, weights)
    exp_b = 0.7 * huber_scalar(0.4)
    ok_b = abs(out_b.total - exp_b) <= 1e-12

    # Fixture C: depths exact, normals perturbed; expectation expanded
    # componentwise over the realized unit-normal residual.
    vec = np.array([0.06, -0.08, -1.0])
    vec = vec / np.linalg.norm(vec)
    n_bad = NormalMap(np.broadcast_to(vec, shape + (3,)).copy())
    out_c = loss_total(gt_d, gt_d, gt_d, n_bad, gt_n, weights)
    comps = [vec[0] - 0.0, vec[1] - 0.0, vec[2] - (-1.0)]
    exp_c = 3.0 * sum(huber_scalar(c) for c in comps) / 3.0
    ok_c = abs(out_c.total - exp_c) <= 1e-12

    ok = ok_a and ok_b and ok_c
    _report(
        10,
        ok,
        f"fixtures: d2+3 -> {out_a.total:.12f} (exp {exp_a}), d1+0.4 -> {out_b.total:.12f} "
        f"(exp {exp_b}), normal residual -> {out_c.total:.12g} (exp {exp_c:.12g})",
    )
