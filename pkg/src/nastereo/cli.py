"""Command-line frontend.

Commands: synth, sweep, normals (from-depth | from-volume), consistency,
refine, eval, viewscore.  Exit codes: 0 success, 2 input/config error,
3 numerical failure.

The env var ``NASTEREO_THREADS`` caps internal parallelism; it is applied
to the numeric backends before they are imported, so this module defers all
heavy imports into the command handlers.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("NASTEREO_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        print(
            f"error: NASTEREO_THREADS must be a positive integer, got {cap!r}",
            file=sys.stderr,
        )
        raise SystemExit(2)
    for var in _THREAD_VARS:
        os.environ[var] = cap


def _load_run_config(path_arg):
    from .config import RunConfig

    if path_arg is None:
        return RunConfig()
    return RunConfig.from_file(path_arg)


def _read_manifest(dataset: Path) -> list[dict[str, str]]:
    from .config import ConfigError

    manifest = dataset / "views.txt"
    if not manifest.exists():
        raise ConfigError(f"dataset manifest not found: {manifest}")
    views = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("num_views"):
            continue
        name, *pairs = line.split()
        entry = {"name": name}
        entry.update(pair.split("=", 1) for pair in pairs)
        views.append(entry)
    return views


def cmd_synth(args) -> int:
    from . import fileio
    from .camera import write_camera
    from .config import scene_spec_from_file
    from .scenegen import render

    spec = scene_spec_from_file(args.spec, seed_override=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    views = render(spec)
    lines = [f"num_views={len(views)}"]
    for i, view in enumerate(views):
        stem = f"view{i:02d}"
        fileio.write_pgm(out / f"{stem}_image.pgm", view.image)
        fileio.write_depth_pfm(out / f"{stem}_depth.pfm", view.depth_gt)
        fileio.write_normals_pfm(out / f"{stem}_normals.pfm", view.normal_gt)
        write_camera(out / f"{stem}_camera.txt", view.intrinsics, view.pose)
        lines.append(
            f"{stem} image={stem}_image.pgm depth={stem}_depth.pfm "
            f"normals={stem}_normals.pfm camera={stem}_camera.txt"
        )
    (out / "views.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(views)} views to {out}")
    return 0


def cmd_sweep(args) -> int:
    from dataclasses import replace

    from . import fileio
    from .camera import read_camera
    from .config import ConfigError
    from .sweep import build_cost_volume, soft_argmin_depth, to_probability

    dataset = Path(args.dataset)
    views = _read_manifest(dataset)
    if len(views) < 2:
        raise ConfigError("need >=2 views for a plane sweep")
    run = _load_run_config(args.config)
    cfg = run.sweep
    if args.planes is not None:
        cfg = replace(cfg, num_planes=args.planes)
    if args.cost is not None:
        cfg = replace(cfg, cost_kind=args.cost)

    images = []
    cameras = []
    for view in views:
        images.append(fileio.read_pgm(dataset / view["image"]))
        cameras.append(read_camera(dataset / view["camera"]))
    cv = build_cost_volume(images[0], images[1:], cameras, cfg)
    pv = to_probability(cv, cfg.softmax_temperature)
    depth = soft_argmin_depth(pv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = views[0]["name"]
    fileio.write_depth_pfm(out / f"{stem}_depth.pfm", depth)
    fileio.write_pgm(out / f"{stem}_valid.pgm", depth.valid.astype(float))
    if args.png16:
        fileio.write_depth_png16(out / f"{stem}_depth.png", depth)
    if args.dump_volume:
        fileio.write_volume(out / "volume", pv.prob, pv.planes, "probability")
    print(f"wrote {stem}_depth.pfm ({int(depth.valid.sum())} valid pixels) to {out}")
    return 0


def cmd_normals(args) -> int:
    from . import fileio
    from .camera import read_camera
    from .config import ConfigError

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    k, _pose = read_camera(args.camera)
    if args.mode == "from-depth":
        from .normals import normals_from_depth

        depth = fileio.read_depth_pfm(args.depth)
        run = _load_run_config(args.config)
        window = args.window if args.window is not None else run.normal_window
        nm = normals_from_depth(depth, k, window=window)
    else:
        from .normals import normals_from_volume
        from .sweep import ProbabilityVolume

        vol, planes, kind = fileio.read_volume(args.volume)
        if kind != "probability":
            raise ConfigError(f"volume kind must be 'probability', got {kind!r}")
        import numpy as np

        total = vol.sum(axis=2)
        valid = total > 1e-12
        prob = np.where(valid[..., None], vol / np.maximum(total, 1e-300)[..., None], 0.0)
        nm = normals_from_volume(ProbabilityVolume(planes, prob, valid), k)
    fileio.write_normals_pfm(out, nm)
    if args.png:
        fileio.write_normals_png(out.with_suffix(".png"), nm)
    print(f"wrote {out} ({int(nm.valid.sum())} valid pixels)")
    return 0


def cmd_consistency(args) -> int:
    from . import fileio
    from .camera import read_camera
    from .consistency import loss_consistency_lc, loss_consistency_lt

    depth = fileio.read_depth_pfm(args.depth)
    nm = fileio.read_normals_pfm(args.normals)
    k, _pose = read_camera(args.camera)
    run = _load_run_config(args.config)
    delta = run.weights.huber_delta
    print("L_c = %.12g" % loss_consistency_lc(depth, nm, k, delta))
    print("L_t = %.12g" % loss_consistency_lt(depth, nm, k, delta))
    return 0


def cmd_refine(args) -> int:
    from dataclasses import replace

    from . import fileio
    from .camera import read_camera
    from .refine import RefinementDiverged, refine_depth

    depth = fileio.read_depth_pfm(args.depth)
    nm = fileio.read_normals_pfm(args.normals)
    k, _pose = read_camera(args.camera)
    run = _load_run_config(args.config)
    cfg = run.refine
    if args.loss is not None:
        cfg = replace(cfg, loss_kind=args.loss)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write_trace(trace) -> None:
        lines = ["iter,E,data_term,consistency_term"]
        for row in trace:
            lines.append("%d,%.17g,%.17g,%.17g" % (int(row[0]), row[1], row[2], row[3]))
        (out / "trace.csv").write_text("\n".join(lines) + "\n")

    try:
        result = refine_depth(depth, nm, k, cfg)
    except RefinementDiverged as exc:
        write_trace(exc.trace)
        print(f"error: {exc} (trace written to {out / 'trace.csv'})", file=sys.stderr)
        return 3
    fileio.write_depth_pfm(out / Path(args.depth).name, depth=result.depth)
    write_trace(result.trace)
    if args.figures:
        from .figures import save_trace_figure

        save_trace_figure(out / "trace.png", result.trace)
    status = "converged" if result.converged else "max iterations reached"
    print(f"refined {Path(args.depth).name}: {status} after {len(result.trace) - 1} steps")
    return 0


def cmd_eval(args) -> int:
    from . import fileio
    from .camera import read_camera
    from .config import ConfigError
    from .consistency import loss_consistency_lc, loss_consistency_lt, loss_total
    from .evalkit import depth_metrics, merge_reports, normal_metrics, report_csv, report_lines

    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    run = _load_run_config(args.config)
    delta = run.weights.huber_delta

    stems = sorted(
        p.name[: -len("_depth.pfm")]
        for p in pred_dir.glob("*_depth.pfm")
        if (gt_dir / p.name).exists()
    )
    if not stems:
        raise ConfigError(f"no matching *_depth.pfm stems between {pred_dir} and {gt_dir}")

    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    csv_rows: list[str] = []
    csv_header = ""
    loss_lines_all: list[str] = []
    for stem in stems:
        pred_depth = fileio.read_depth_pfm(pred_dir / f"{stem}_depth.pfm")
        gt_depth = fileio.read_depth_pfm(gt_dir / f"{stem}_depth.pfm")
        if pred_depth.z.shape != gt_depth.z.shape:
            raise ConfigError(
                f"{stem}: shape mismatch {pred_depth.z.shape} vs {gt_depth.z.shape}"
            )
        dm = depth_metrics(pred_depth, gt_depth)

        nm_report = None
        pred_normals = gt_normals = None
        if (pred_dir / f"{stem}_normals.pfm").exists() and (
            gt_dir / f"{stem}_normals.pfm"
        ).exists():
            pred_normals = fileio.read_normals_pfm(pred_dir / f"{stem}_normals.pfm")
            gt_normals = fileio.read_normals_pfm(gt_dir / f"{stem}_normals.pfm")
            if pred_normals.n.shape != gt_normals.n.shape:
                raise ConfigError(f"{stem}: normal map shape mismatch")
            nm_report = normal_metrics(pred_normals, gt_normals)

        report = merge_reports(dm, nm_report)
        print(f"[{stem}]")
        for line in report_lines(report):
            print(line)

        loss_lines = []
        from .consistency import huber_mean

        l_z = huber_mean(pred_depth.z - gt_depth.z, pred_depth.valid & gt_depth.valid, delta)
        loss_lines.append("L_z = %.12g" % ((1.0 + run.weights.lambda_z) * l_z))
        if pred_normals is not None:
            total = loss_total(
                pred_depth, pred_depth, gt_depth, pred_normals, gt_normals, run.weights
            )
            loss_lines.append("L_n = %.12g" % total.l_n)
            loss_lines.append("L = %.12g" % total.total)
        camera_file = gt_dir / f"{stem}_camera.txt"
        if pred_normals is not None and camera_file.exists():
            k, _pose = read_camera(camera_file)
            loss_lines.append("L_c = %.12g" % loss_consistency_lc(pred_depth, pred_normals, k, delta))
            loss_lines.append("L_t = %.12g" % loss_consistency_lt(pred_depth, pred_normals, k, delta))
        for line in loss_lines:
            print(line)
        loss_lines_all.extend([f"[{stem}]"] + loss_lines)

        header, row = report_csv(report, stem=stem)
        csv_header = header
        csv_rows.append(row)

        if out and args.figures:
            from .figures import save_depth_comparison, save_normal_comparison

            save_depth_comparison(out / f"{stem}_depth.png", pred_depth, gt_depth)
            if pred_normals is not None:
                save_normal_comparison(out / f"{stem}_normals.png", pred_normals, gt_normals)

    if out:
        (out / "metrics.csv").write_text("\n".join([csv_header] + csv_rows) + "\n")
        (out / "losses.txt").write_text("\n".join(loss_lines_all) + "\n")
    return 0


def cmd_viewscore(args) -> int:
    import numpy as np

    from . import fileio
    from .camera import read_camera, unproject
    from .config import ConfigError
    from .evalkit import view_pair_score

    dataset = Path(args.dataset)
    views = _read_manifest(dataset)
    if len(views) < 2:
        raise ConfigError("need >=2 views to score pairs")
    run = _load_run_config(args.config)
    cameras = [read_camera(dataset / view["camera"]) for view in views]

    ref_k, ref_pose = cameras[0]
    depth = fileio.read_depth_pfm(dataset / views[0]["depth"])
    vs, us = np.nonzero(depth.valid)
    stride = max(1, args.stride)
    vs, us = vs[::stride], us[::stride]
    if vs.size == 0:
        raise ConfigError("reference depth map has no valid pixels")
    pixels = np.stack([us.astype(float), vs.astype(float)], axis=-1)
    points_cam = unproject(pixels, depth.z[vs, us], ref_k)
    points_world = ref_pose.inverse_transform(points_cam)

    for i in range(len(views)):
        for j in range(i + 1, len(views)):
            score = view_pair_score(
                points_world, cameras[i][1].center, cameras[j][1].center, run.view
            )
            print("score %s %s = %.12g" % (views[i]["name"], views[j]["name"], score))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nastereo",
        description="Plane-sweep stereo with depth-normal consistency on synthetic scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene dataset")
    p.add_argument("spec", help="scene spec file (flat key = value)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="texture noise seed override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="plane-sweep depth from a dataset")
    p.add_argument("dataset", help="dataset directory with views.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--planes", type=int, default=None)
    p.add_argument("--cost", choices=("sad", "zncc"), default=None)
    p.add_argument("--dump-volume", action="store_true")
    p.add_argument("--png16", action="store_true",
                   help="also export depth as 16-bit PNG in millimeters")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("normals", help="extract a normal map")
    mode = p.add_subparsers(dest="mode", required=True)
    pd = mode.add_parser("from-depth", help="least-squares plane fit on a depth map")
    pd.add_argument("depth", help="depth PFM")
    pd.add_argument("camera", help="camera text file")
    pd.add_argument("--out", required=True, help="output normals PFM")
    pd.add_argument("--window", type=int, default=None)
    pd.add_argument("--png", action="store_true", help="also write an 8-bit PNG")
    pd.add_argument("--config", default=None)
    pd.set_defaults(func=cmd_normals, mode="from-depth")
    pv = mode.add_parser("from-volume", help="probability-weighted extraction from a volume")
    pv.add_argument("volume", help="volume directory (PFM slices + volume.txt)")
    pv.add_argument("camera", help="camera text file")
    pv.add_argument("--out", required=True, help="output normals PFM")
    pv.add_argument("--png", action="store_true")
    pv.add_argument("--config", default=None)
    pv.set_defaults(func=cmd_normals, mode="from-volume")

    p = sub.add_parser("consistency", help="print L_c and L_t for a depth/normal pair")
    p.add_argument("depth")
    p.add_argument("normals")
    p.add_argument("camera")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("refine", help="consistency-driven depth refinement")
    p.add_argument("depth")
    p.add_argument("normals")
    p.add_argument("camera")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--loss", choices=("lc", "lt"), default=None)
    p.add_argument("--figures", action="store_true", help="render the trace plot")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("pred", help="directory with *_depth.pfm (and *_normals.pfm)")
    p.add_argument("gt", help="ground-truth directory with matching stems")
    p.add_argument("--out", default=None, help="directory for metrics.csv and losses.txt")
    p.add_argument("--config", default=None)
    p.add_argument("--figures", action="store_true", help="render figures next to the CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viewscore", help="piecewise-Gaussian view pair scores")
    p.add_argument("dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--stride", type=int, default=64, help="pixel stride for sampled points")
    p.set_defaults(func=cmd_viewscore)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
