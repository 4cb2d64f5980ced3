"""Acceptance suite.

One test per criterion, each printing a PASS/FAIL line with the measured
numbers. Tolerances are pinned here and nowhere else. Run with
`pytest tests/test_acceptance.py -v -s` to see the lines as they complete.
"""

import time
import numpy as np
import pytest

from conftest import K, crop_around_pose, make_pose

from poseadapt.cli import main
from poseadapt.codebook import (
    build_codebook,
    geodesic_distance,
    random_rotation,
    rotation_about_axis,
    rotation_distribution,
    rotation_nll,
)
from poseadapt.consistency import (
    AugTransform,
    PosePrediction,
    apply_aug_transform,
    derive_aug_pose,
    sample_aug_transform,
)
from poseadapt.geometry import (
    Pose6D,
    encode_translation,
    recover_translation,
    virtual_intrinsics,
)
from poseadapt.harness import optimize, scene_pseudo_label, setup_sample, total_loss
from poseadapt.metrics import (
    ObjectModelInfo,
    add_error,
    add_or_adds,
    adds_error,
    auc,
    auc_binned,
)
from poseadapt.pseudolabel import adaptive_min_depth
from poseadapt.scenes import NoiseSpec, SceneSpec, generate_scene, mixed_shape


def _report(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} ({name}): {status} ({detail})")
    assert ok, f"criterion {num} {name}: {detail}"


def test_acceptance_1_translation_round_trip():
    rng = np.random.default_rng(101)
    poses = [make_pose(rng) for _ in range(10000)]
    crops = [
        crop_around_pose(p, f_anc=rng.uniform(1.2, 1.6), side=rng.uniform(60, 200),
                         jitter=rng.uniform(-5, 5, 2))
        for p in poses
    ]
    t0 = time.perf_counter()
    worst = 0.0
    for pose, crop in zip(poses, crops):
        code = encode_translation(pose.translation, crop)
        back = recover_translation(code, crop)
        err = abs(back[0] - pose.translation[0])
        err = max(err, abs(back[1] - pose.translation[1]))
        err = max(err, abs(back[2] - pose.translation[2]))
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    _report(1, "translation round trip",
            worst <= 1e-9 and elapsed < 1.0,
            f"max_err={worst:.3e} m, runtime={elapsed:.2f} s")


def test_acceptance_2_consistency_theorem():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst_xy = worst_z = worst_rot = 0.0
    for _ in range(1000):
        pose = make_pose(rng, lateral=0.03)
        anchor = crop_around_pose(pose, f_anc=rng.uniform(1.2, 1.6),
                                  side=rng.uniform(70, 130),
                                  jitter=rng.uniform(-2, 2, 2))
        delta = sample_aug_transform(rng, anchor.scale)
        code_anc = encode_translation(pose.translation, anchor)
        target = derive_aug_pose(
            PosePrediction(code=code_anc, rotation=pose.rotation), delta, anchor)

        # independent dual-crop encoding: source projection + explicit warps
        aug_crop, _ = apply_aug_transform(anchor, delta)
        o_src = K.project(pose.translation[None, :])[0]
        s = anchor.out_size
        b0 = aug_crop.to_crop(o_src[None, :])[0]
        c, sn = np.cos(delta.delta_rz), np.sin(delta.delta_rz)
        b = np.array([[c, -sn], [sn, c]]) @ (b0 - s / 2.0) + s / 2.0
        dxy = b / s - 0.5
        dz = pose.translation[2] / aug_crop.rescale
        worst_xy = max(worst_xy, np.abs(np.asarray(target.code.delta_xy) - dxy).max())
        worst_z = max(worst_z, abs(target.code.delta_z - dz))

        kv = virtual_intrinsics(aug_crop)
        ray = np.array([(s / 2 - kv.cx) / kv.fx, (s / 2 - kv.cy) / kv.fy, 1.0])
        exact = rotation_about_axis(ray, delta.delta_rz) @ pose.rotation
        worst_rot = max(worst_rot, geodesic_distance(target.rotation, exact))
    elapsed = time.perf_counter() - t0
    _report(2, "consistency relation vs dual encoding",
            worst_xy <= 1e-6 and worst_z <= 1e-6
            and worst_rot <= np.deg2rad(2.0) and elapsed < 5.0,
            f"max_dxy={worst_xy:.3e}, max_dz={worst_z:.3e}, "
            f"max_rot={np.degrees(worst_rot):.3f} deg, runtime={elapsed:.2f} s")


def test_acceptance_3_loss_fixed_point():
    # sphere/cylinder scenes: their closest-depth region is densely sampled,
    # so the adaptive selection keeps the true minimum. On boxes the isolated
    # corner samples are (by design) skipped as outliers, which biases the
    # label beyond quantization; that behaviour is exercised elsewhere.
    cb = build_codebook(150, 8)
    worst_self = worst_pseudo = 0.0
    for i in range(100):
        spec = SceneSpec(shape=("sphere", "cylinder")[i % 2],
                         render_from_model_points=True,
                         n_model_points=2048)
        sample = generate_scene(spec, NoiseSpec(), seed=3000 + i)
        state, ctx = setup_sample(sample, cb, seed=0, delta=AugTransform.identity(),
                                  synthetic=(i % 2 == 0))
        _, _, comp = total_loss(state, ctx)
        w_xy, w_z, w_r, w_m = 10.0, 10.0, 0.1, 10.0
        l_self = (w_xy * comp["l_xy"] + w_z * comp["l_z"]
                  + w_r * comp["l_r"] + w_m * comp["l_m"])
        worst_self = max(worst_self, l_self)
        worst_pseudo = max(worst_pseudo, comp["l_pseudo"])
    _report(3, "loss fixed point on noiseless scenes",
            worst_self <= 1e-6 and worst_pseudo <= 0.001,
            f"max L_self={worst_self:.3e}, max L_pseudo={worst_pseudo:.3e} m "
            f"(quantization step 0.001 m), 100 scenes")


def test_acceptance_4_distribution_numerics():
    rng = np.random.default_rng(404)
    cb = build_codebook(100, 10)

    worst_norm = 0.0
    for _ in range(50):
        query = rng.normal(size=9) * 10.0 ** rng.integers(-3, 6)
        dist = rotation_distribution(query, cb, temperature=0.1)
        worst_norm = max(worst_norm, abs(dist.probs.sum() - 1.0))

    nll_uniform = rotation_nll(np.zeros(9), cb.rotations[7], cb, temperature=0.1)
    uniform_err = abs(nll_uniform - np.log(len(cb)))

    worst_rel = 0.0
    h = 1e-6
    for _ in range(100):
        query = rng.normal(size=9)
        target = random_rotation(rng)
        _, grad = rotation_nll(query, target, cb, temperature=0.1, return_grad=True)
        fd = np.zeros(9)
        for j in range(9):
            e = np.zeros(9)
            e[j] = h
            fd[j] = (rotation_nll(query + e, target, cb, temperature=0.1)
                     - rotation_nll(query - e, target, cb, temperature=0.1)) / (2 * h)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        worst_rel = max(worst_rel, rel)

    _report(4, "rotation distribution numerics",
            worst_norm <= 1e-9 and uniform_err <= 1e-9 and worst_rel <= 1e-4,
            f"norm_err={worst_norm:.2e}, log_Nr_err={uniform_err:.2e}, "
            f"grad_rel_err={worst_rel:.2e} over 100 cases")


def test_acceptance_5_adaptive_depth_selection():
    gamma = 0.001
    outlier = np.array([0.50] + [0.900 + 0.001 * i for i in range(40)])
    sel, k = adaptive_min_depth(outlier, gamma=gamma, window=1)
    case_outlier = sel == pytest.approx(0.900, abs=1e-12) and k == 1

    geometric = 0.5 * 1.5 ** np.arange(8)
    sel_fb, k_fb = adaptive_min_depth(geometric, gamma=gamma, window=1)
    case_fallback = sel_fb == 0.5 and k_fb is None

    # ablation flag: plain min differs exactly on the outlier case and
    # agrees where the smoothed front already starts at the minimum
    plain_outlier, _ = adaptive_min_depth(outlier, gamma=gamma, window=1,
                                          adaptive=False)
    rng = np.random.default_rng(55)
    dense = np.sort(rng.uniform(0.8, 0.9, size=500))
    adaptive_dense, _ = adaptive_min_depth(dense, gamma=gamma, window=5)
    plain_dense, _ = adaptive_min_depth(dense, gamma=gamma, window=5, adaptive=False)
    plain_fb, _ = adaptive_min_depth(geometric, gamma=gamma, window=1, adaptive=False)
    case_ablation = (plain_outlier == 0.5 and plain_outlier != sel
                     and adaptive_dense == plain_dense and plain_fb == sel_fb)

    _report(5, "adaptive depth selection",
            case_outlier and case_fallback and case_ablation,
            f"outlier sel={sel} at k={k}, fallback sel={sel_fb} k={k_fb}, "
            f"plain-min flag diverges only on outlier case")


def test_acceptance_6_pseudo_label_accuracy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    errors = []
    for i in range(500):
        spec = SceneSpec(shape=mixed_shape(i))
        noise = NoiseSpec(depth_noise_sigma=0.002,
                          occlusion_fraction=float(rng.uniform(0.0, 0.5)))
        sample = generate_scene(spec, noise, seed=40000 + i)
        biased_t = sample.gt_pose.translation + np.array([0.0, 0.0, 0.03])
        biased = Pose6D(sample.gt_pose.rotation, biased_t)
        label = scene_pseudo_label(sample, biased, sample.gt_mask)
        errors.append(abs(label.t_z_bar - sample.gt_pose.translation[2]))
    elapsed = time.perf_counter() - t0
    median = float(np.median(errors))
    _report(6, "pseudo-label accuracy",
            median <= 0.005 and elapsed < 30.0,
            f"median |tz_bar - tz|={median * 1000:.2f} mm over 500 scenes "
            f"(occlusion<=50%, depth noise 2 mm, +3 cm bias), runtime={elapsed:.1f} s")


def test_acceptance_7_optimization_recovery():
    t0 = time.perf_counter()
    noise = NoiseSpec(rotation_sigma_deg=15.0, translation_sigma_frac=0.10,
                      occlusion_fraction=0.30)
    samples = []
    i = 0
    while len(samples) < 200:
        spec = SceneSpec(shape=mixed_shape(len(samples)))
        try:
            samples.append(generate_scene(spec, noise, seed=70000 + i,
                                          scene_id=len(samples)))
        except Exception:
            pass
        i += 1
    result = optimize(samples, seed=7)

    tz_after = [abs(p.translation[2] - s.gt_pose.translation[2])
                for p, s in zip(result.poses, samples)]
    t_before = [np.linalg.norm(p.translation - s.gt_pose.translation)
                for p, s in zip(result.initial_poses, samples)]
    t_after = [np.linalg.norm(p.translation - s.gt_pose.translation)
               for p, s in zip(result.poses, samples)]
    recall_before = np.mean([
        add_or_adds(p, s.gt_pose, s.model) < 0.1 * s.model.diameter
        for p, s in zip(result.initial_poses, samples)])
    recall_after = np.mean([
        add_or_adds(p, s.gt_pose, s.model) < 0.1 * s.model.diameter
        for p, s in zip(result.poses, samples)])
    elapsed = time.perf_counter() - t0

    med_tz = float(np.median(tz_after))
    med_before = float(np.median(t_before))
    med_after = float(np.median(t_after))
    _report(7, "optimization recovery",
            med_tz <= 0.005 and med_after <= 0.5 * med_before
            and recall_after > recall_before and elapsed < 300.0,
            f"median tz err={med_tz * 1000:.2f} mm, translation "
            f"{med_before * 1000:.1f}->{med_after * 1000:.1f} mm "
            f"({100 * (1 - med_after / med_before):.0f}% reduction), "
            f"ADD(-S)@0.1d recall {recall_before:.2f}->{recall_after:.2f}, "
            f"runtime={elapsed:.0f} s")


def test_acceptance_8_metrics_oracles():
    rng = np.random.default_rng(808)
    model = ObjectModelInfo.from_points(rng.normal(0, 0.05, size=(100, 3)))

    worst_add = worst_adds = 0.0
    for _ in range(20):
        pred, gt = make_pose(rng), make_pose(rng)
        naive_add = np.mean([
            np.linalg.norm((pred.rotation @ x + pred.translation)
                           - (gt.rotation @ x + gt.translation))
            for x in model.points])
        worst_add = max(worst_add, abs(add_error(pred, gt, model) - naive_add))

        pts_pred = model.points @ pred.rotation.T + pred.translation
        pts_gt = model.points @ gt.rotation.T + gt.translation
        naive_adds = np.mean([
            min(np.linalg.norm(a - b) for a in pts_pred) for b in pts_gt])
        worst_adds = max(worst_adds, abs(adds_error(pred, gt, model) - naive_adds))

    errors = rng.uniform(0, 0.15, size=300)
    riemann_err = abs(auc(errors, 0.10) - auc_binned(errors, 0.10, bins=10000))
    single = 100.0 * auc([0.05], 0.10)

    _report(8, "metric oracle equivalence",
            worst_add <= 1e-12 and worst_adds <= 1e-12
            and riemann_err <= 1e-4 and single == 50.0,
            f"ADD dev={worst_add:.1e}, ADD-S dev={worst_adds:.1e}, "
            f"AUC vs Riemann={riemann_err:.1e}, single-error AUC={single}")


def test_acceptance_9_cli_determinism(tmp_path):
    def run_twice(args_fn, outputs):
        for tag in ("a", "b"):
            rc = main(args_fn(tag))
            assert rc == 0
        blobs = []
        for tag in ("a", "b"):
            blob = b""
            for rel in outputs:
                with open(tmp_path / rel.format(tag=tag), "rb") as f:
                    blob += f.read()
            blobs.append(blob)
        return blobs[0] == blobs[1]

    ok_cb = run_twice(
        lambda tag: ["codebook", "--viewpoints", "200", "--inplane", "12",
                     "--out", str(tmp_path / f"cb_{tag}.rcb")],
        ["cb_{tag}.rcb"])

    ok_scenes = run_twice(
        lambda tag: ["gen-scenes", "--count", "3", "--seed", "13",
                     "--noise-rotation", "10", "--noise-translation", "0.08",
                     "--noise-depth", "0.002", "--occlusion", "0.25",
                     "--out", str(tmp_path / f"scenes_{tag}")],
        [f"scenes_{{tag}}/scene_{i:03d}/{name}"
         for i in range(3) for name in ("depth.pgm", "mask.pgm", "meta")])

    ok_labels = run_twice(
        lambda tag: ["pseudolabel", "--scenes", str(tmp_path / "scenes_a"),
                     "--out", str(tmp_path / f"labels_{tag}.csv")],
        ["labels_{tag}.csv"])

    from poseadapt.fileio import write_ply
    from poseadapt.meshes import make_sphere
    from poseadapt.metrics import PoseRecord, write_pose_records

    mesh = make_sphere(0.05, stacks=8, sectors=12)
    write_ply(tmp_path / "model.ply", mesh.vertices, mesh.faces)
    rng = np.random.default_rng(99)
    records = [PoseRecord(i, 1, make_pose(rng)) for i in range(4)]
    write_pose_records(tmp_path / "gt.txt", records)
    write_pose_records(tmp_path / "pred.txt", records)
    ok_eval = run_twice(
        lambda tag: ["eval", "--gt", str(tmp_path / "gt.txt"),
                     "--pred", str(tmp_path / "pred.txt"),
                     "--model", str(tmp_path / "model.ply"),
                     "--out", str(tmp_path / f"report_{tag}.txt")],
        ["report_{tag}.txt"])

    ok_opt = run_twice(
        lambda tag: ["optimize", "--scenes", str(tmp_path / "scenes_a"),
                     "--iters", "60", "--seed", "5",
                     "--out", str(tmp_path / f"run_{tag}")],
        ["run_{tag}/poses_refined.txt", "run_{tag}/poses_initial.txt",
         "run_{tag}/trace.csv", "run_{tag}/metrics.txt"])

    # the reference-scale codebook builds and serializes (spot check, one run)
    rc = main(["codebook", "--viewpoints", "4000", "--inplane", "120",
               "--out", str(tmp_path / "cb_full.rcb")])
    from poseadapt.codebook import RotationCodebook

    ok_full = rc == 0 and len(RotationCodebook.load(tmp_path / "cb_full.rcb")) == 480000

    _report(9, "CLI determinism",
            ok_cb and ok_scenes and ok_labels and ok_eval and ok_opt and ok_full,
            f"codebook={ok_cb}, gen-scenes={ok_scenes}, pseudolabel={ok_labels}, "
            f"eval={ok_eval}, optimize={ok_opt}, 480k codebook={ok_full}")
