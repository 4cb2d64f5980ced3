"""Verification harness: per-frame pose variables optimized against the
combined objective (synthetic-label terms + consistency terms + distance
pseudo-label) to show the self-supervision signals recover ground truth.

State variables stand in for network outputs: normalized center offset,
log-space distance code, and rotation logits over a codebook, for both the
anchor crop and its augmented variant. Masks stay frozen to the noisy
renders; free per-pixel masks would trivially zero the mask term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codebook import RotationCodebook, build_codebook
from .config import Config, DEFAULT_CONFIG
from .consistency import (
    AugTransform,
    apply_aug_transform,
    mask_consistency_loss,
    sample_anchor_box,
    sample_aug_transform,
)
from .errors import NoObservationError, OptimizationError
from .geometry import (
    CropSpec,
    Pose6D,
    TranslationCode,
    encode_translation,
    recover_translation,
    virtual_intrinsics,
)
from .pseudolabel import (
    PseudoLabel,
    gate_depths,
    pseudo_label,
    render_synthetic_depth,
    sample_surface_points,
)
from .scenes import SceneSample, crop_image_nearest

# L1 subgradients within this band of zero are treated as zero so that exact
# fixed points stay stationary despite rounding.
SIGN_EPS = 1e-12


def _sign(x):
    return np.where(np.abs(x) < SIGN_EPS, 0.0, np.sign(x))


@dataclass
class TrainableState:
    """Per-sample optimization variables (anchor view + augmented view)."""

    delta_xy_anc: np.ndarray
    log_dz_anc: float
    logits_anc: np.ndarray
    delta_xy_aug: np.ndarray
    log_dz_aug: float
    logits_aug: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.delta_xy_anc, [self.log_dz_anc], self.delta_xy_aug,
            [self.log_dz_aug], self.logits_anc, self.logits_aug,
        ])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_logits: int) -> "TrainableState":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(
            delta_xy_anc=vec[0:2].copy(),
            log_dz_anc=float(vec[2]),
            delta_xy_aug=vec[3:5].copy(),
            log_dz_aug=float(vec[5]),
            logits_anc=vec[6:6 + n_logits].copy(),
            logits_aug=vec[6 + n_logits:6 + 2 * n_logits].copy(),
        )

    def copy(self) -> "TrainableState":
        return TrainableState.from_vector(self.to_vector(), len(self.logits_anc))


@dataclass
class SampleContext:
    """Fixed per-sample quantities the loss needs besides the state."""

    anchor_crop: CropSpec
    aug_crop: CropSpec
    delta: AugTransform
    codebook: RotationCodebook
    t_z_bar: Optional[float]
    mask_loss: float
    syn_code: Optional[TranslationCode] = None
    syn_rot_index: Optional[int] = None
    syn_mask_loss: float = 0.0
    pseudo: Optional[PseudoLabel] = None
    initial_rotation: Optional[np.ndarray] = None
    initial_index: Optional[int] = None
    snap_cache: dict = field(default_factory=dict)

    @property
    def synthetic(self) -> bool:
        return self.syn_code is not None


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def aug_rotation_target(ctx: SampleContext, anchor_index: int) -> int:
    """Codebook index of the roll-premultiplied anchor rotation (cached)."""
    cached = ctx.snap_cache.get(anchor_index)
    if cached is None:
        rot = ctx.delta.rot3d @ ctx.codebook.rotations[anchor_index]
        cached = ctx.codebook.snap(rot)
        ctx.snap_cache[anchor_index] = cached
    return cached


def total_loss(state: TrainableState, ctx: SampleContext,
               config: Config = DEFAULT_CONFIG):
    """Objective value, analytic gradient, and per-term components.

    Returns (loss, grad, components) where grad is a TrainableState holding
    d(loss)/d(state). All L1 terms use the zero subgradient at (numerical)
    zero, making exact fixed points stationary.
    """
    lam_syn = config["total.lambda_syn"]
    lam_self = config["total.lambda_self"]
    lam_pseudo = config["total.lambda_pseudo_tz"]
    w_xy, w_z, w_r, w_m = config.self_weights()
    xi = config["pseudo.xi"]

    g = TrainableState(
        delta_xy_anc=np.zeros(2), log_dz_anc=0.0,
        logits_anc=np.zeros_like(state.logits_anc),
        delta_xy_aug=np.zeros(2), log_dz_aug=0.0,
        logits_aug=np.zeros_like(state.logits_aug),
    )
    dz_anc = float(np.exp(state.log_dz_anc))
    dz_aug = float(np.exp(state.log_dz_aug))
    delta = ctx.delta

    # -- consistency: distance
    diff_z = dz_aug - delta.delta_s * dz_anc
    l_z = abs(diff_z)
    sz = float(_sign(diff_z))
    c = lam_self * w_z
    g.log_dz_aug += c * sz * dz_aug
    g.log_dz_anc += -c * sz * delta.delta_s * dz_anc

    # -- consistency: center offset
    rot2d = delta.rot2d
    target_xy = rot2d @ (state.delta_xy_anc - np.asarray(delta.delta_p)
                         / ctx.anchor_crop.scale) / delta.delta_s
    diff_xy = state.delta_xy_aug - target_xy
    l_xy = float(np.abs(diff_xy).sum())
    sxy = _sign(diff_xy)
    c = lam_self * w_xy
    g.delta_xy_aug += c * sxy
    g.delta_xy_anc += -c * (rot2d.T @ sxy) / delta.delta_s

    # -- consistency: rotation NLL on the augmented view
    anchor_index = int(np.argmax(state.logits_anc))
    target_index = aug_rotation_target(ctx, anchor_index)
    p_aug = _softmax(state.logits_aug)
    l_r = float(-np.log(max(p_aug[target_index], 1e-300)))
    c = lam_self * w_r
    g.logits_aug += c * p_aug
    g.logits_aug[target_index] -= c

    # -- consistency: mask (frozen renders, constant during optimization)
    l_m = ctx.mask_loss

    l_self = w_xy * l_xy + w_z * l_z + w_r * l_r + w_m * l_m

    # -- distance pseudo-label
    l_pseudo = 0.0
    if ctx.t_z_bar is not None:
        tz = ctx.anchor_crop.rescale * dz_anc
        diff_t = tz - ctx.t_z_bar
        l_pseudo = min(abs(diff_t), xi)
        if abs(diff_t) < xi:
            g.log_dz_anc += lam_pseudo * float(_sign(diff_t)) * tz

    # -- synthetic labels
    l_syn = 0.0
    if ctx.synthetic:
        s_xy, s_z, s_r, s_m = config.syn_weights()
        gt_xy = np.asarray(ctx.syn_code.delta_xy)
        diff_sxy = state.delta_xy_anc - gt_xy
        syn_xy = float(np.abs(diff_sxy).sum())
        g.delta_xy_anc += lam_syn * s_xy * _sign(diff_sxy)

        diff_sz = dz_anc - ctx.syn_code.delta_z
        syn_z = abs(diff_sz)
        g.log_dz_anc += lam_syn * s_z * float(_sign(diff_sz)) * dz_anc

        p_anc = _softmax(state.logits_anc)
        syn_r = float(-np.log(max(p_anc[ctx.syn_rot_index], 1e-300)))
        c = lam_syn * s_r
        g.logits_anc += c * p_anc
        g.logits_anc[ctx.syn_rot_index] -= c

        l_syn = s_xy * syn_xy + s_z * syn_z + s_r * syn_r + s_m * ctx.syn_mask_loss

    loss = lam_syn * l_syn + lam_self * l_self + lam_pseudo * l_pseudo
    components = {
        "l_xy": l_xy, "l_z": l_z, "l_r": l_r, "l_m": l_m,
        "l_pseudo": l_pseudo, "l_syn": l_syn, "total": loss,
    }
    return loss, g, components


def scene_pseudo_label(sample: SceneSample, pose: Pose6D, mask_full: np.ndarray,
                       crop: Optional[CropSpec] = None,
                       config: Config = DEFAULT_CONFIG) -> PseudoLabel:
    """Distance pseudo-label for one scene.

    With a crop, the observed depth and predicted mask are resampled
    object-centric and the model points project through the crop's virtual
    camera (the file-based CLI flow). Without one, gating runs directly on
    the full frame with the source intrinsics - the same math with exact
    pixel indexing, which the fixed-point guarantees rely on. Raises
    NoObservationError when nothing passes the gate.
    """
    if crop is not None:
        depth = crop_image_nearest(sample.depth, crop)
        mask = crop_image_nearest(mask_full, crop)
        intrinsics = virtual_intrinsics(crop)
    else:
        depth, mask, intrinsics = sample.depth, mask_full, sample.intrinsics
    if sample.spec.render_from_model_points:
        # self-consistency mode: gate exactly the points the scene rendered
        points = sample.model.points
    else:
        points = sample_surface_points(
            sample.mesh, config["pseudo.n_points"], seed=config["pseudo.seed"]
        )
    projected = render_synthetic_depth(points, pose, intrinsics)
    gated = gate_depths(
        projected, depth, mask,
        rho=config["pseudo.rho"], epsilon=config["pseudo.epsilon"],
    )
    return pseudo_label(
        pose, gated,
        gamma=config["pseudo.gamma"], window=config["pseudo.window"],
        adaptive=config["pseudo.adaptive"],
    )


def encode_pose_logits(codebook: RotationCodebook, rotation: np.ndarray,
                       scale: float) -> np.ndarray:
    logits = np.zeros(len(codebook))
    logits[codebook.snap(rotation)] = scale
    return logits


def setup_sample(sample: SceneSample, codebook: RotationCodebook,
                 seed: int, config: Config = DEFAULT_CONFIG,
                 delta: Optional[AugTransform] = None,
                 f_anc: Optional[float] = None,
                 synthetic: bool = False):
    """Build the (state, context) pair for one scene.

    Draws the anchor enlargement and augmentation transform (unless given),
    encodes the noisy initial estimate in both views, freezes the masks and
    the pseudo-label. The augmented encoding is initialized through the
    derived-target map so a perfect estimate starts exactly consistent.
    """
    rng = np.random.default_rng([int(seed), int(sample.scene_id)])
    ranges = config.aug_ranges()
    if f_anc is None:
        f_anc = float(rng.uniform(*ranges.f_anc))
    s = sample.spec.crop_size
    anchor = sample_anchor_box(sample.detection, f_anc, s, sample.intrinsics)
    if delta is None:
        delta = sample_aug_transform(rng, anchor.scale, ranges)
    aug_crop, _ = apply_aug_transform(anchor, delta)

    est = sample.est_pose
    code_anc = encode_translation(est.translation, anchor)
    dxy_anc = np.asarray(code_anc.delta_xy)
    dp = np.asarray(delta.delta_p)
    dxy_aug = delta.rot2d @ (dxy_anc - dp / anchor.scale) / delta.delta_s
    dz_aug = delta.delta_s * code_anc.delta_z

    scale = config["optim.logit_scale"]
    logits_anc = encode_pose_logits(codebook, est.rotation, scale)
    anchor_index = int(np.argmax(logits_anc))
    rot_aug = delta.rot3d @ codebook.rotations[anchor_index]
    logits_aug = encode_pose_logits(codebook, rot_aug, scale)

    mask_anc = crop_image_nearest(sample.est_mask, anchor)
    mask_aug = crop_image_nearest(sample.est_mask, aug_crop, inplane=delta.delta_rz)
    mask_loss = mask_consistency_loss(mask_anc, mask_aug, delta, anchor)

    try:
        label = scene_pseudo_label(sample, est, sample.est_mask, config=config)
        t_z_bar: Optional[float] = label.t_z_bar
    except NoObservationError:
        label, t_z_bar = None, None

    syn_code = syn_rot_index = None
    syn_mask_loss = 0.0
    if synthetic:
        syn_code = encode_translation(sample.gt_pose.translation, anchor)
        syn_rot_index = codebook.snap(sample.gt_pose.rotation)
        gt_mask_crop = crop_image_nearest(sample.gt_mask, anchor)
        syn_mask_loss = float(np.abs(mask_anc - gt_mask_crop).mean())

    state = TrainableState(
        delta_xy_anc=dxy_anc.copy(), log_dz_anc=float(np.log(code_anc.delta_z)),
        logits_anc=logits_anc,
        delta_xy_aug=dxy_aug.copy(), log_dz_aug=float(np.log(dz_aug)),
        logits_aug=logits_aug,
    )
    ctx = SampleContext(
        anchor_crop=anchor, aug_crop=aug_crop, delta=delta, codebook=codebook,
        t_z_bar=t_z_bar, mask_loss=mask_loss, syn_code=syn_code,
        syn_rot_index=syn_rot_index, syn_mask_loss=syn_mask_loss, pseudo=label,
        initial_rotation=est.rotation, initial_index=anchor_index,
    )
    return state, ctx


def decode_state(state: TrainableState, ctx: SampleContext) -> Pose6D:
    """Decode the anchor-view variables back into a 6D pose.

    While the rotation argmax still sits on the initial hypothesis the
    continuous initial rotation is kept (the discrete codebook only refines
    the estimate once the evidence moves it off its starting entry).
    """
    code = TranslationCode(
        delta_xy=(state.delta_xy_anc[0], state.delta_xy_anc[1]),
        delta_z=float(np.exp(state.log_dz_anc)),
    )
    t = recover_translation(code, ctx.anchor_crop)
    index = int(np.argmax(state.logits_anc))
    if ctx.initial_rotation is not None and index == ctx.initial_index:
        rot = ctx.initial_rotation
    else:
        rot = ctx.codebook.rotations[index]
    return Pose6D(rot, t)


@dataclass
class OptimizeResult:
    poses: list
    initial_poses: list
    trace: list
    states: list
    contexts: list


def optimize(samples, codebook: Optional[RotationCodebook] = None,
             config: Config = DEFAULT_CONFIG, seed: int = 0,
             iterations: Optional[int] = None,
             step_size: Optional[float] = None) -> OptimizeResult:
    """Adam descent on the combined objective over all samples.

    Every `optim.synthetic_every`-th sample carries synthetic labels (the
    synthetic half of a mixed batch); the rest rely purely on the
    self-supervision terms. Deterministic given `seed`; raises
    OptimizationError (with the partial trace attached) if the loss goes
    non-finite.
    """
    if codebook is None:
        codebook = build_codebook(
            config["codebook.n_viewpoints"], config["codebook.n_inplane"],
        )
    if iterations is None:
        iterations = config["optim.iterations"]
    lr0 = step_size if step_size is not None else config["optim.step_size"]
    lr1 = min(config["optim.step_size_final"], lr0)
    every = config["optim.synthetic_every"]

    pairs = [
        setup_sample(s, codebook, seed + 1000003 * i, config,
                     synthetic=(i % every == 0))
        for i, s in enumerate(samples)
    ]
    states = [p[0] for p in pairs]
    contexts = [p[1] for p in pairs]
    initial_poses = [decode_state(st, ctx) for st, ctx in zip(states, contexts)]

    vecs = [st.to_vector() for st in states]
    n_logits = len(codebook)
    adam_m = [np.zeros_like(v) for v in vecs]
    adam_v = [np.zeros_like(v) for v in vecs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    trace = []

    for it in range(iterations):
        lr = lr1 + 0.5 * (lr0 - lr1) * (1.0 + np.cos(np.pi * it / max(1, iterations)))
        sums = {"l_xy": 0.0, "l_z": 0.0, "l_r": 0.0, "l_m": 0.0,
                "l_pseudo": 0.0, "l_syn": 0.0, "total": 0.0}
        with np.errstate(over="ignore", invalid="ignore"):
            for i, ctx in enumerate(contexts):
                state = TrainableState.from_vector(vecs[i], n_logits)
                loss, grad, comp = total_loss(state, ctx, config)
                for key in sums:
                    sums[key] += comp[key]
                gvec = grad.to_vector()
                adam_m[i] = beta1 * adam_m[i] + (1 - beta1) * gvec
                adam_v[i] = beta2 * adam_v[i] + (1 - beta2) * gvec * gvec
                mhat = adam_m[i] / (1 - beta1 ** (it + 1))
                vhat = adam_v[i] / (1 - beta2 ** (it + 1))
                vecs[i] = vecs[i] - lr * mhat / (np.sqrt(vhat) + eps)
        row = {key: value / max(1, len(contexts)) for key, value in sums.items()}
        row["iteration"] = it
        trace.append(row)
        if not np.isfinite(row["total"]):
            raise OptimizationError(f"loss became non-finite at iteration {it}", trace)

    final_states = [TrainableState.from_vector(v, n_logits) for v in vecs]
    poses = [decode_state(st, ctx) for st, ctx in zip(final_states, contexts)]
    return OptimizeResult(
        poses=poses, initial_poses=initial_poses, trace=trace,
        states=final_states, contexts=contexts,
    )


TRACE_FIELDS = ["iteration", "total", "l_xy", "l_z", "l_r", "l_m", "l_pseudo", "l_syn"]


def write_trace_csv(path, trace):
    with open(path, "w") as f:
        f.write(",".join(TRACE_FIELDS) + "\n")
        for row in trace:
            f.write(",".join(repr(row[k]) if k != "iteration" else str(row[k])
                             for k in TRACE_FIELDS) + "\n")
