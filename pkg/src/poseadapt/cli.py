"""Command-line front end.

Subcommands: codebook, gen-scenes, pseudolabel, eval, optimize. Exit codes:
0 success, 2 usage/config, 3 I/O, 4 data, 5 numeric failure. The config file
path can also come from the POSEADAPT_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
import numpy as np

from .codebook import RotationCodebook, build_codebook
from .config import Config
from .errors import (
    ConfigurationError,
    DataError,
    GenerationError,
    GeometryError,
    NoObservationError,
    OptimizationError,
)
from .fileio import read_ply
from .geometry import CameraIntrinsics
from .harness import optimize, scene_pseudo_label, write_trace_csv
from .metrics import (
    ObjectModelInfo,
    PoseRecord,
    add_or_adds,
    evaluate_pose_records,
    format_report,
    read_pose_records,
    write_pose_records,
)
from .consistency import sample_anchor_box
from .scenes import (
    NoiseSpec,
    SceneSpec,
    generate_suite,
    list_scene_dirs,
    load_scene,
    save_scene,
    scene_dir_name,
)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5


def _load_config(path_arg) -> Config:
    path = path_arg or os.environ.get("POSEADAPT_CONFIG")
    if path:
        return Config.load(path)
    return Config()


def _scene_spec_from_config(cfg: Config) -> SceneSpec:
    return SceneSpec(
        image_size=(cfg["scene.image_width"], cfg["scene.image_height"]),
        intrinsics=CameraIntrinsics(
            cfg["scene.fx"], cfg["scene.fy"], cfg["scene.cx"], cfg["scene.cy"]
        ),
        z_range=(cfg["scene.z_min"], cfg["scene.z_max"]),
        lateral_frac=cfg["scene.lateral_frac"],
        n_render_points=cfg["scene.n_render_points"],
        n_model_points=cfg["scene.n_model_points"],
        crop_size=cfg["scene.crop_size"],
    )


def cmd_codebook(args) -> int:
    if args.viewpoints < 1 or args.inplane < 1:
        print("codebook: counts must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    cfg = _load_config(args.config)
    embed_dim = cfg["codebook.embed_dim"]
    cb = build_codebook(
        args.viewpoints, args.inplane,
        embed_dim=None if embed_dim == 9 else embed_dim,
        embed_seed=cfg["codebook.embed_seed"],
    )
    cb.save(args.out)
    print(f"wrote {len(cb)} rotations to {args.out}")
    return 0


def cmd_gen_scenes(args) -> int:
    cfg = _load_config(args.config)
    spec = _scene_spec_from_config(cfg)
    noise = NoiseSpec(
        rotation_sigma_deg=args.noise_rotation,
        translation_sigma_frac=args.noise_translation,
        mask_erosion_px=args.noise_mask_erosion,
        depth_noise_sigma=args.noise_depth,
        occlusion_fraction=args.occlusion,
    )
    size_range = (cfg["scene.size_min"], cfg["scene.size_max"])
    samples = generate_suite(
        args.count, spec, noise, seed=args.seed, shape=args.shape,
        size_range=size_range,
    )
    os.makedirs(args.out, exist_ok=True)
    for sample in samples:
        save_scene(os.path.join(args.out, scene_dir_name(sample.scene_id)), sample)
    print(f"wrote {len(samples)} scenes to {args.out}")
    return 0


def cmd_pseudolabel(args) -> int:
    cfg = _load_config(args.config)
    dirs = list_scene_dirs(args.scenes)
    if not dirs:
        raise DataError(f"no scene directories under {args.scenes}")
    rows = []
    for d in dirs:
        sample = load_scene(d)
        pose = sample.est_pose
        crop = sample_anchor_box(
            sample.detection, cfg["pseudo.crop_scale"],
            sample.spec.crop_size, sample.intrinsics,
        )
        try:
            label = scene_pseudo_label(sample, pose, sample.est_mask, crop, cfg)
            err = label.t_z_bar - sample.gt_pose.translation[2]
            rows.append(
                f"{sample.scene_id},ok,{pose.translation[2]!r},{label.t_z_bar!r},"
                f"{label.delta_d!r},{'' if label.selected_index is None else label.selected_index},"
                f"{err!r}"
            )
        except NoObservationError:
            rows.append(f"{sample.scene_id},skipped,{pose.translation[2]!r},,,,")
    text = "scene_id,status,t_z_init,t_z_bar,delta_d,index_k,err_vs_gt\n" + "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    vertices, _ = read_ply(args.model)
    model = ObjectModelInfo.from_points(vertices, is_symmetric=args.symmetric)
    gt = read_pose_records(args.gt)
    pred = read_pose_records(args.pred)
    models = {object_id: model for object_id in {r.object_id for r in gt}}
    report = evaluate_pose_records(gt, pred, models)
    text = format_report(report)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _suite_metrics(samples, poses) -> dict:
    """Recall/translation summaries of poses against the scene ground truth."""
    errs, t_errs, tz_errs, recall_hits = [], [], [], []
    for sample, pose in zip(samples, poses):
        err = add_or_adds(pose, sample.gt_pose, sample.model)
        errs.append(err)
        t_errs.append(float(np.linalg.norm(pose.translation - sample.gt_pose.translation)))
        tz_errs.append(abs(pose.translation[2] - sample.gt_pose.translation[2]))
        recall_hits.append(err < 0.1 * sample.model.diameter)
    return {
        "add_recall": float(np.mean(recall_hits)),
        "median_add_err": float(np.median(errs)),
        "median_translation_err": float(np.median(t_errs)),
        "median_tz_err": float(np.median(tz_errs)),
    }


def cmd_optimize(args) -> int:
    cfg = _load_config(args.config)
    dirs = list_scene_dirs(args.scenes)
    if not dirs:
        raise DataError(f"no scene directories under {args.scenes}")
    samples = [load_scene(d) for d in dirs]
    codebook = None
    if args.codebook:
        codebook = RotationCodebook.load(args.codebook)
    result = optimize(
        samples, codebook=codebook, config=cfg, seed=args.seed,
        iterations=args.iters,
    )
    os.makedirs(args.out, exist_ok=True)
    write_pose_records(
        os.path.join(args.out, "poses_refined.txt"),
        [PoseRecord(s.scene_id, 0, p) for s, p in zip(samples, result.poses)],
    )
    write_pose_records(
        os.path.join(args.out, "poses_initial.txt"),
        [PoseRecord(s.scene_id, 0, p) for s, p in zip(samples, result.initial_poses)],
    )
    write_trace_csv(os.path.join(args.out, "trace.csv"), result.trace)
    before = _suite_metrics(samples, result.initial_poses)
    after = _suite_metrics(samples, result.poses)
    report = {f"before.{k}": v for k, v in before.items()}
    report.update({f"after.{k}": v for k, v in after.items()})
    text = format_report(report)
    with open(os.path.join(args.out, "metrics.txt"), "w") as f:
        f.write(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poseadapt",
        description="Self-supervised 6D pose adaptation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codebook", help="build and serialize a rotation codebook")
    p.add_argument("--viewpoints", type=int, required=True)
    p.add_argument("--inplane", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("gen-scenes", help="generate a synthetic scene suite")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", default="mixed",
                   choices=["mixed", "sphere", "box", "cylinder"])
    p.add_argument("--noise-rotation", type=float, default=0.0,
                   help="rotation sigma of the initial estimate (degrees)")
    p.add_argument("--noise-translation", type=float, default=0.0,
                   help="distance noise of the initial estimate (fraction of t_z)")
    p.add_argument("--noise-mask-erosion", type=int, default=0,
                   help="mask erosion of the predicted mask (pixels)")
    p.add_argument("--noise-depth", type=float, default=0.0,
                   help="depth sensor noise sigma (meters)")
    p.add_argument("--occlusion", type=float, default=0.0,
                   help="occluded fraction of the object silhouette")
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("pseudolabel", help="distance pseudo-labels for a scene suite")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("eval", help="pose metrics from GT and predicted pose files")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--model", required=True, help="object model PLY")
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--out", help="report path (stdout when omitted)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("optimize", help="refine scene poses against the objective")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--codebook", help="serialized codebook file (built ad hoc otherwise)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, GenerationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OptimizationError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if exc.trace and getattr(args, "out", None):
            try:
                os.makedirs(args.out, exist_ok=True)
                write_trace_csv(os.path.join(args.out, "trace_partial.csv"), exc.trace)
            except OSError:
                pass
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
