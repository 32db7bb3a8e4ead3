"""Architecture configuration and the named presets.

A config fully describes the network: encoder filters, stem width, block
kind (residual baseline vs depthwise-separable), per-stage block counts,
widths and strides, and which activation runs where. Presets follow the
published block counts: the large model keeps (3,6,6,3), the balanced one
trims stages 2-3 to (3,3,2,3) and the edge-deployable one runs (1,1,3,2);
the baseline uses residual blocks with (3,6,6,3) and a two-conv stem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .encoder import FecConfig
from .errors import ConfigError
from .tensor import Activation

BLOCK_KINDS = ("residual", "dsconv")
ACTIVATION_SITES = ("fec", "stem", "backbone", "head_car", "head_truck", "head_vru")

DEFAULT_ACTIVATIONS = {
    "fec": Activation("relu"),
    "stem": Activation("leaky_relu"),
    "backbone": Activation("leaky_relu"),
    "head_car": Activation("swish"),
    "head_truck": Activation("swish"),
    "head_vru": Activation("relu"),
}

# Which backbone stage feeds each head, largest objects deepest.
HEAD_STAGES = {"head_car": 4, "head_truck": 3, "head_vru": 2}
HEAD_CLASSES = {"head_car": ("Car",), "head_truck": ("Truck",), "head_vru": ("Pedestrian", "Bicycle")}
REGRESSION_CHANNELS = 6  # cos, sin, dx, dy, log w, log l


@dataclass(frozen=True)
class ModelConfig:
    block_kind: str = "dsconv"
    blocks_per_stage: tuple[int, int, int, int] = (3, 6, 6, 3)
    stage_widths: tuple[int, int, int, int] = (32, 64, 128, 256)
    stage_strides: tuple[int, int, int, int] = (2, 2, 2, 2)
    stem_filters: int = 12
    fec: FecConfig = field(default_factory=FecConfig)
    point_feature_channels: int = 2
    max_points_per_pillar: int = 20
    activations: dict[str, Activation] = field(default_factory=lambda: dict(DEFAULT_ACTIVATIONS))

    def __post_init__(self):
        if self.block_kind not in BLOCK_KINDS:
            raise ConfigError(f"block_kind must be one of {BLOCK_KINDS}, got {self.block_kind!r}")
        for name in ("blocks_per_stage", "stage_widths", "stage_strides"):
            vals = tuple(getattr(self, name))
            if len(vals) != 4 or any(not isinstance(v, int) or v < 1 for v in vals):
                raise ConfigError(f"{name} must be four positive integers, got {vals!r}")
            object.__setattr__(self, name, vals)
        if not isinstance(self.stem_filters, int) or self.stem_filters < 1:
            raise ConfigError(f"stem_filters must be a positive integer, got {self.stem_filters!r}")
        if self.point_feature_channels < 0:
            raise ConfigError("point_feature_channels must be >= 0")
        if self.max_points_per_pillar < 1:
            raise ConfigError("max_points_per_pillar must be positive")
        acts = dict(self.activations)
        missing = [s for s in ACTIVATION_SITES if s not in acts]
        if missing:
            raise ConfigError(f"activations map is missing sites: {missing}")
        unknown = [s for s in acts if s not in ACTIVATION_SITES]
        if unknown:
            raise ConfigError(f"activations map has unknown sites: {unknown}")
        object.__setattr__(self, "activations", acts)

    @property
    def total_blocks(self) -> int:
        return sum(self.blocks_per_stage)


PRESETS = {
    "baseline": ModelConfig(block_kind="residual", blocks_per_stage=(3, 6, 6, 3)),
    "dsfec-l": ModelConfig(block_kind="dsconv", blocks_per_stage=(3, 6, 6, 3)),
    "dsfec-m": ModelConfig(block_kind="dsconv", blocks_per_stage=(3, 3, 2, 3)),
    "dsfec-s": ModelConfig(block_kind="dsconv", blocks_per_stage=(1, 1, 3, 2)),
}


def preset_config(name: str) -> ModelConfig:
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[key]


def _parse_activation(value) -> Activation:
    if isinstance(value, Activation):
        return value
    if isinstance(value, str):
        return Activation(value)
    if isinstance(value, dict):
        return Activation(value.get("kind", "relu"), value.get("slope", 0.1))
    raise ConfigError(f"cannot parse activation from {value!r}")


def config_from_dict(data: dict) -> ModelConfig:
    """Build a config from flat JSON; a preset key seeds the defaults."""
    data = dict(data)
    base = preset_config(data.pop("preset")) if "preset" in data else ModelConfig()
    updates = {}
    for key, value in data.items():
        if key in ("blocks_per_stage", "stage_widths", "stage_strides"):
            updates[key] = tuple(int(v) for v in value)
        elif key == "stem_filters":
            updates[key] = int(value)
        elif key == "block_kind":
            updates[key] = str(value)
        elif key == "fec_filters":
            f1, f2, f3 = (int(v) for v in value)
            updates["fec"] = FecConfig(f1, f2, f3)
        elif key in ("point_feature_channels", "max_points_per_pillar"):
            updates[key] = int(value)
        elif key == "activations":
            acts = dict(base.activations)
            acts.update({site: _parse_activation(v) for site, v in value.items()})
            updates[key] = acts
        else:
            raise ConfigError(f"unknown config field {key!r}")
    return replace(base, **updates)


def load_config_file(path) -> ModelConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(data)


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "block_kind": config.block_kind,
        "blocks_per_stage": list(config.blocks_per_stage),
        "stage_widths": list(config.stage_widths),
        "stage_strides": list(config.stage_strides),
        "stem_filters": config.stem_filters,
        "fec_filters": [config.fec.f1, config.fec.f2, config.fec.f3],
        "point_feature_channels": config.point_feature_channels,
        "max_points_per_pillar": config.max_points_per_pillar,
        "activations": {
            site: ({"kind": act.kind, "slope": act.slope} if act.kind == "leaky_relu" else {"kind": act.kind})
            for site, act in config.activations.items()
        },
    }
