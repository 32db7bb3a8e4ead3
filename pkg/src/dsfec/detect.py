"""Detection head outputs and oriented-box decoding.

Each head emits a post-sigmoid score map (one channel per class it serves)
and a shared 6-channel regression map (cos, sin, dx, dy, log w, log l).
Decoding turns qualifying cells into metric oriented boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import GridSpec
from .errors import ConfigError
from .nms import Detection, normalize_angle
from .tensor import FeatureMap


@dataclass(frozen=True)
class HeadOutput:
    scores: FeatureMap  # (H, W, n_classes), values in [0, 1]
    regression: FeatureMap  # (H, W, 6)
    classes: tuple[str, ...]

    def __post_init__(self):
        if self.scores.shape[:2] != self.regression.shape[:2]:
            raise ConfigError(
                f"score map {self.scores.shape} and regression map {self.regression.shape} disagree spatially"
            )
        if self.regression.channels != 6:
            raise ConfigError(f"regression map must have 6 channels, got {self.regression.channels}")
        if self.scores.channels != len(self.classes):
            raise ConfigError(f"{self.scores.channels} score channels for classes {self.classes}")


def decode_boxes(
    output: HeadOutput, stage_stride: int, grid: GridSpec, score_threshold: float
) -> list[Detection]:
    """Decode every cell with score >= threshold into a Detection.

    The cell footprint at this scale is cell_size * stage_stride meters;
    centers are the cell's geometric center plus the regressed (dx, dy)
    offset in footprint units. Sizes are exp of the regressed logs, heading
    is atan2(sin, cos) wrapped to (-pi, pi].
    """
    if not (0.0 <= score_threshold <= 1.0):
        raise ConfigError(f"score threshold must be in [0, 1], got {score_threshold}")
    footprint = grid.cell_size * stage_stride
    log_clip = 10.0  # overflow guard for untrained weights; no-op for sane outputs
    scores = output.scores.data
    reg = output.regression.data.astype(np.float64)
    dets: list[Detection] = []
    for k, label in enumerate(output.classes):
        rows, cols = np.nonzero(scores[:, :, k] >= score_threshold)
        for r, c in zip(rows.tolist(), cols.tolist()):
            cos_t, sin_t, dx, dy, log_w, log_l = reg[r, c]
            cx = grid.x_range[0] + (c + 0.5) * footprint + dx * footprint
            cy = grid.y_range[0] + (r + 0.5) * footprint + dy * footprint
            dets.append(
                Detection(
                    cx=cx,
                    cy=cy,
                    w=math.exp(min(max(log_w, -log_clip), log_clip)),
                    l=math.exp(min(max(log_l, -log_clip), log_clip)),
                    theta=normalize_angle(math.atan2(sin_t, cos_t)),
                    class_label=label,
                    score=float(scores[r, c, k]),
                )
            )
    return dets
