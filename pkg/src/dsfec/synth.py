"""Deterministic synthetic radar scenes for end-to-end runs and metric tests.

Randomness comes from splitmix64 (Steele et al. published constants) so the
same spec reproduces bit-identical scenes on any platform, independent of
numpy's generators. The oracle detector leaks ground truth with a
controlled center offset; it exists purely to validate the evaluator.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .encoder import GridSpec, RadarFrame, write_frame_csv
from .errors import ConfigError
from .metrics import GroundTruthBox, save_ground_truth
from .nms import CLASS_NAMES, Detection, normalize_angle

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Portable 64-bit PRNG: gamma 0x9E3779B97F4A7C15, finalizer constants
    0xBF58476D1CE4E5B9 / 0x94D049BB133111EB."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def poisson(self, lam: float) -> int:
        """Knuth's algorithm; fine for the small rates used here."""
        if lam <= 0:
            return 0
        limit = math.exp(-lam)
        k, p = 0, 1.0
        while True:
            p *= self.uniform()
            if p <= limit:
                return k
            k += 1


def derive_seed(seed: int, index: int) -> int:
    """Stable per-frame seed stream from one base seed."""
    return SplitMix64((seed & _MASK64) ^ ((index + 1) * 0x9E3779B97F4A7C15 & _MASK64)).next_u64()


# Class-typical footprints (length, width) in meters.
CLASS_SIZES = {
    "Car": (4.5, 1.8),
    "Truck": (8.0, 2.5),
    "Pedestrian": (0.7, 0.7),
    "Bicycle": (1.8, 0.6),
}

DEFAULT_OBJECT_COUNTS = {"Car": 2, "Truck": 1, "Pedestrian": 1, "Bicycle": 1}


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_objects: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_OBJECT_COUNTS))
    points_per_object: float = 12.0
    clutter_points: float = 30.0
    # Keep object centers apart so a metric oracle with bounded offset can
    # never match a detection to the wrong box.
    min_separation: float = 15.0
    feature_channels: int = 2
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.points_per_object < 0 or self.clutter_points < 0 or self.min_separation < 0:
            raise ConfigError("scene rates must be >= 0")
        if self.feature_channels < 0:
            raise ConfigError("feature_channels must be >= 0")
        for cls, count in self.n_objects.items():
            if cls not in CLASS_NAMES:
                raise ConfigError(f"unknown object class {cls!r}")
            if count < 0:
                raise ConfigError(f"object count for {cls} must be >= 0")


def _place_boxes(rng: SplitMix64, spec: SceneSpec) -> list[GroundTruthBox]:
    grid = spec.grid
    boxes: list[GroundTruthBox] = []
    for cls in CLASS_NAMES:  # fixed class order keeps generation deterministic
        length, width = CLASS_SIZES[cls]
        for _ in range(spec.n_objects.get(cls, 0)):
            margin = math.hypot(length, width) / 2.0 + 0.25
            placed = False
            for _attempt in range(1000):
                cx = rng.uniform(grid.x_range[0] + margin, grid.x_range[1] - margin)
                cy = rng.uniform(grid.y_range[0] + margin, grid.y_range[1] - margin)
                if all(math.hypot(cx - b.cx, cy - b.cy) >= spec.min_separation for b in boxes):
                    placed = True
                    break
            if not placed:
                raise ConfigError(
                    f"could not place {cls} with min_separation={spec.min_separation} m; "
                    "reduce object counts or separation"
                )
            theta = normalize_angle(rng.uniform(-math.pi, math.pi))
            l = length * rng.uniform(0.9, 1.1)
            w = width * rng.uniform(0.9, 1.1)
            boxes.append(GroundTruthBox(cx, cy, w, l, theta, cls))
    return boxes


def _point_in_box(rng: SplitMix64, box: GroundTruthBox, z_lo: float, z_hi: float, channels: int) -> list[float]:
    u = rng.uniform(-0.5, 0.5) * box.l
    v = rng.uniform(-0.5, 0.5) * box.w
    c, s = math.cos(box.theta), math.sin(box.theta)
    x = box.cx + u * c - v * s
    y = box.cy + u * s + v * c
    z = rng.uniform(z_lo, z_hi)
    return [x, y, z] + [rng.uniform(-1.0, 1.0) for _ in range(channels)]


def generate_scene(spec: SceneSpec) -> tuple[RadarFrame, list[GroundTruthBox]]:
    """One deterministic frame plus its ground truth boxes."""
    rng = SplitMix64(spec.seed)
    grid = spec.grid
    boxes = _place_boxes(rng, spec)
    z_lo, z_hi = grid.z_range
    z_hi = z_lo + (z_hi - z_lo) * 0.999  # stay inside the half-open z range
    rows: list[list[float]] = []
    for box in boxes:
        n = max(1, rng.poisson(spec.points_per_object))
        for _ in range(n):
            rows.append(_point_in_box(rng, box, z_lo, z_hi, spec.feature_channels))
    # Shrink the open upper bounds slightly so float rounding can never
    # land a clutter point exactly on a half-open range edge.
    x_hi = grid.x_range[0] + (grid.x_range[1] - grid.x_range[0]) * 0.999999
    y_hi = grid.y_range[0] + (grid.y_range[1] - grid.y_range[0]) * 0.999999
    for _ in range(rng.poisson(spec.clutter_points)):
        rows.append(
            [rng.uniform(grid.x_range[0], x_hi), rng.uniform(grid.y_range[0], y_hi), rng.uniform(z_lo, z_hi)]
            + [rng.uniform(-1.0, 1.0) for _ in range(spec.feature_channels)]
        )
    pts = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 3 + spec.feature_channels))
    return RadarFrame(pts), boxes


def generate_frames(spec: SceneSpec, count: int) -> tuple[list[RadarFrame], dict[int, list[GroundTruthBox]]]:
    if count < 1:
        raise ConfigError(f"frame count must be >= 1, got {count}")
    frames: list[RadarFrame] = []
    gts: dict[int, list[GroundTruthBox]] = {}
    for i in range(count):
        frame_spec = SceneSpec(
            seed=derive_seed(spec.seed, i),
            n_objects=dict(spec.n_objects),
            points_per_object=spec.points_per_object,
            clutter_points=spec.clutter_points,
            min_separation=spec.min_separation,
            feature_channels=spec.feature_channels,
            grid=spec.grid,
        )
        frame, boxes = generate_scene(frame_spec)
        frames.append(frame)
        gts[i] = boxes
    return frames, gts


def oracle_detector(
    gts: list[GroundTruthBox],
    noise: float,
    seed: int = 0,
    score_range: tuple[float, float] = (0.5, 0.95),
) -> list[Detection]:
    """Ground-truth-leaking pseudo-detector for metric validation only.

    Emits every ground truth box with its center displaced by exactly
    `noise` meters in a seeded random direction, with seeded scores.
    """
    if noise < 0:
        raise ConfigError("oracle noise must be >= 0")
    rng = SplitMix64(seed)
    dets: list[Detection] = []
    for gt in gts:
        phi = rng.uniform(0.0, 2.0 * math.pi)
        score = rng.uniform(*score_range)
        dets.append(
            Detection(
                cx=gt.cx + noise * math.cos(phi),
                cy=gt.cy + noise * math.sin(phi),
                w=gt.w,
                l=gt.l,
                theta=gt.theta,
                class_label=gt.class_label,
                score=score,
            )
        )
    return dets


def write_scene_files(out_dir, frames: list[RadarFrame], gts: dict[int, list[GroundTruthBox]]) -> list[str]:
    """Write frame_{i}.csv per frame plus one gt.json; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = os.path.join(out_dir, f"frame_{i}.csv")
        write_frame_csv(path, frame)
        paths.append(path)
    gt_path = os.path.join(out_dir, "gt.json")
    save_ground_truth(gt_path, gts)
    paths.append(gt_path)
    return paths
