"""Flat key = value configuration with section prefixes.

All tunables live here with their defaults; files only list overrides.
Values are validated against the owning modules' preconditions at load time.
"""

from __future__ import annotations

import numpy as np

from .consistency import AugRanges
from .errors import ConfigurationError

# key -> (default, validator description). Types are inferred from defaults.
DEFAULTS = {
    # softmax rotation distribution
    "codebook.n_viewpoints": 500,
    "codebook.n_inplane": 10,
    "codebook.embed_dim": 9,
    "codebook.embed_seed": 0,
    "codebook.temperature_dist": 1.0,  # plain distribution evaluation
    "codebook.temperature_nll": 0.1,  # rotation-consistency NLL
    # consistency-loss weights
    "self.lambda_xy": 10.0,
    "self.lambda_z": 10.0,
    "self.lambda_r": 0.1,
    "self.lambda_m": 10.0,
    # synthetic-label loss weights
    "syn.lambda_xy": 10.0,
    "syn.lambda_z": 1.0,
    "syn.lambda_r": 1.0,
    "syn.lambda_m": 10.0,
    # overall objective weights
    "total.lambda_syn": 1.0,
    "total.lambda_self": 0.1,
    "total.lambda_pseudo_tz": 10.0,
    # augmentation sampling ranges
    "aug.f_anc_min": 1.2,
    "aug.f_anc_max": 1.6,
    "aug.delta_s_min": 0.8,
    "aug.delta_s_max": 1.25,
    "aug.delta_p_frac": 0.1,
    "aug.delta_rz_max_deg": 30.0,
    # depth pseudo-labels
    "pseudo.rho": 0.9,
    "pseudo.gamma": 0.001,
    "pseudo.xi": 0.1,
    "pseudo.window": 5,
    "pseudo.n_points": 2048,
    "pseudo.epsilon": 1e6,
    "pseudo.crop_scale": 1.5,  # fixed anchor enlargement for label generation
    "pseudo.adaptive": True,
    "pseudo.seed": 20240,
    # synthetic scenes
    "scene.image_width": 640,
    "scene.image_height": 480,
    "scene.fx": 572.4,
    "scene.fy": 573.6,
    "scene.cx": 320.0,
    "scene.cy": 240.0,
    "scene.crop_size": 128,
    "scene.z_min": 0.7,
    "scene.z_max": 1.1,
    "scene.lateral_frac": 0.03,
    "scene.size_min": 0.055,
    "scene.size_max": 0.075,
    "scene.n_render_points": 60000,
    "scene.n_model_points": 512,
    # optimization harness
    "optim.iterations": 300,
    "optim.step_size": 0.02,
    "optim.step_size_final": 1e-4,
    "optim.logit_scale": 30.0,
    "optim.synthetic_every": 2,  # every k-th sample carries synthetic labels
    # metrics
    "metrics.auc_max": 0.1,
    "metrics.recall_fraction": 0.1,
    "metrics.auc_bins": 0,  # 0 = exact step integral, >0 = binned mode
}


def _parse_value(raw: str, default):
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


class Config:
    """Immutable view over the defaults plus any file/CLI overrides."""

    def __init__(self, overrides=None):
        values = dict(DEFAULTS)
        for key, value in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown config key {key!r}")
            default = DEFAULTS[key]
            if isinstance(value, str):
                value = _parse_value(value, default)
            elif isinstance(default, bool):
                value = bool(value)
            elif isinstance(default, int) and not isinstance(value, bool):
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
            values[key] = value
        self._values = values
        self.validate()

    def __getitem__(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigurationError(f"unknown config key {key!r}") from None

    def keys(self):
        return self._values.keys()

    def validate(self):
        v = self._values
        positive = [
            "codebook.n_viewpoints", "codebook.n_inplane",
            "codebook.temperature_dist", "codebook.temperature_nll",
            "aug.f_anc_min", "aug.f_anc_max", "aug.delta_s_min", "aug.delta_s_max",
            "pseudo.gamma", "pseudo.xi", "pseudo.window", "pseudo.n_points",
            "pseudo.epsilon", "pseudo.crop_scale",
            "scene.image_width", "scene.image_height", "scene.fx", "scene.fy",
            "scene.crop_size", "scene.z_min", "scene.z_max",
            "scene.size_min", "scene.size_max",
            "scene.n_render_points", "scene.n_model_points",
            "optim.step_size", "optim.logit_scale", "optim.synthetic_every",
            "metrics.auc_max", "metrics.recall_fraction",
        ]
        for key in positive:
            if not v[key] > 0:
                raise ConfigurationError(f"{key} must be positive, got {v[key]}")
        nonnegative = ["aug.delta_p_frac", "aug.delta_rz_max_deg",
                       "optim.iterations", "metrics.auc_bins", "scene.lateral_frac"]
        for key in nonnegative:
            if v[key] < 0:
                raise ConfigurationError(f"{key} must be nonnegative, got {v[key]}")
        if not 0.0 <= v["pseudo.rho"] <= 1.0:
            raise ConfigurationError("pseudo.rho must lie in [0, 1]")
        for lo, hi in (("aug.f_anc_min", "aug.f_anc_max"),
                       ("aug.delta_s_min", "aug.delta_s_max"),
                       ("scene.z_min", "scene.z_max"),
                       ("scene.size_min", "scene.size_max")):
            if v[lo] > v[hi]:
                raise ConfigurationError(f"{lo} must not exceed {hi}")

    @classmethod
    def load(cls, path) -> "Config":
        overrides = {}
        with open(path) as f:
            for ln, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigurationError(f"{path}:{ln}: expected 'key = value'")
                overrides[key.strip()] = value.strip()
        return cls(overrides)

    def dump(self) -> str:
        return "".join(f"{key} = {self._values[key]!r}\n" for key in sorted(self._values))

    # convenience views -------------------------------------------------

    def aug_ranges(self) -> AugRanges:
        v = self._values
        return AugRanges(
            f_anc=(v["aug.f_anc_min"], v["aug.f_anc_max"]),
            delta_s=(v["aug.delta_s_min"], v["aug.delta_s_max"]),
            delta_p_frac=v["aug.delta_p_frac"],
            delta_rz_max=float(np.deg2rad(v["aug.delta_rz_max_deg"])),
        )

    def self_weights(self):
        v = self._values
        return (v["self.lambda_xy"], v["self.lambda_z"], v["self.lambda_r"], v["self.lambda_m"])

    def syn_weights(self):
        v = self._values
        return (v["syn.lambda_xy"], v["syn.lambda_z"], v["syn.lambda_r"], v["syn.lambda_m"])


DEFAULT_CONFIG = Config()
