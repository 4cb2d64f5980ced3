"""poseadapt: geometric machinery for self-supervised 6D pose adaptation.

Crop-aware pose parameterization, discrete SO(3) distributions, pose-aware
consistency losses, depth-guided distance pseudo-labels, standard pose
metrics, and a synthetic harness that verifies the supervision signals
recover ground-truth poses.
"""

from .codebook import (
    RotationCodebook,
    RotationDistribution,
    build_codebook,
    decode_argmax,
    geodesic_distance,
    rotation_distribution,
    rotation_features,
    rotation_nll,
)
from .config import Config, DEFAULT_CONFIG
from .consistency import (
    AugRanges,
    AugTransform,
    ConsistencyLosses,
    PosePrediction,
    aggregate_self_losses,
    apply_aug_transform,
    derive_aug_pose,
    mask_consistency_loss,
    sample_anchor_box,
    sample_aug_transform,
    translation_consistency_loss,
)
from .errors import (
    ConfigurationError,
    DataError,
    GenerationError,
    GeometryError,
    NoObservationError,
    OptimizationError,
    PoseAdaptError,
)
from .geometry import (
    BoundingBox,
    CameraIntrinsics,
    CropSpec,
    Pose6D,
    TranslationCode,
    encode_translation,
    project_points,
    recover_translation,
    virtual_intrinsics,
)
from .harness import (
    OptimizeResult,
    SampleContext,
    TrainableState,
    optimize,
    scene_pseudo_label,
    setup_sample,
    total_loss,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import (
    ObjectModelInfo,
    add_error,
    add_or_adds,
    adds_error,
    auc,
    auc_binned,
    recall_at_diameter,
)
from .pseudolabel import (
    DepthImage,
    GatedDepthSets,
    MaskImage,
    PseudoLabel,
    adaptive_min_depth,
    depth_offset,
    gate_depths,
    pseudo_label,
    render_synthetic_depth,
    sample_surface_points,
    truncated_l1,
)
from .scenes import NoiseSpec, SceneSample, SceneSpec, generate_scene, generate_suite

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
