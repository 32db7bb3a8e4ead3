"""Radar frame -> pseudo-image: pillarization and the feature encoder.

The encoder stack is three consecutive 1x1 convolutions with ReLU and no
batch normalization anywhere: the first is applied per point and followed
by a max over each pillar's points (the classic pillar feature net); the
remaining two run per non-empty pillar, widening to f2 then compressing to
f3 before the vectors are scattered onto the dense BEV grid. Filter counts
must satisfy f1 < f2, f2 > f3 and f1 >= f3.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .tensor import FeatureMap, _as_f32


@dataclass(frozen=True)
class GridSpec:
    """BEV discretization: metric ranges plus a square cell size."""

    x_range: tuple[float, float] = (0.0, 80.0)
    y_range: tuple[float, float] = (-40.0, 40.0)
    z_range: tuple[float, float] = (-2.5, 2.5)
    cell_size: float = 0.5

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ConfigError("cell size must be positive")
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise ConfigError(f"{name} must be a finite increasing pair, got ({lo}, {hi})")
        for name in ("x_range", "y_range"):
            lo, hi = getattr(self, name)
            cells = (hi - lo) / self.cell_size
            if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
                raise ConfigError(f"{name} span must be a positive multiple of cell size, got {cells} cells")

    @property
    def rows(self) -> int:
        return round((self.y_range[1] - self.y_range[0]) / self.cell_size)

    @property
    def cols(self) -> int:
        return round((self.x_range[1] - self.x_range[0]) / self.cell_size)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.x_range[0] + (col + 0.5) * self.cell_size
        y = self.y_range[0] + (row + 0.5) * self.cell_size
        return x, y


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True)
class FecConfig:
    """Filter counts of the three 1x1 convolutions in the encoder stack."""

    f1: int = 32
    f2: int = 128
    f3: int = 12

    def __post_init__(self):
        for name in ("f1", "f2", "f3"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"FEC filter count {name} must be a positive integer, got {v!r}")
        if not self.f1 < self.f2:
            raise ConfigError(f"FEC filter constraint violated: requires f1 < f2, got f1={self.f1}, f2={self.f2}")
        if not self.f2 > self.f3:
            raise ConfigError(f"FEC filter constraint violated: requires f2 > f3, got f2={self.f2}, f3={self.f3}")
        if not self.f1 >= self.f3:
            raise ConfigError(f"FEC filter constraint violated: requires f1 >= f3, got f1={self.f1}, f3={self.f3}")


@dataclass(frozen=True)
class RadarFrame:
    """A set of radar returns: columns are x, y, z then F measurement channels."""

    points: np.ndarray  # (N, 3 + F) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 3:
            raise ConfigError("radar frame needs an (N, 3+F) array with xyz first")
        object.__setattr__(self, "points", pts)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def feature_channels(self) -> int:
        return self.points.shape[1] - 3

    @classmethod
    def empty(cls, feature_channels: int = 2) -> "RadarFrame":
        return cls(np.zeros((0, 3 + feature_channels), dtype=np.float64))


# Augmented per-point layout: x, y, z, f0..f{F-1}, x - xc, y - yc.
AUGMENTED_EXTRA = 2


def augmented_dim(feature_channels: int) -> int:
    return 3 + feature_channels + AUGMENTED_EXTRA


@dataclass(frozen=True)
class PillarSet:
    """Non-empty pillars in first-point-arrival order.

    features is zero-padded to max_points per pillar; counts says how many
    leading slots are real points.
    """

    indices: np.ndarray  # (P, 2) int64 rows of (row, col)
    features: np.ndarray  # (P, max_points, D) float32 augmented points
    counts: np.ndarray  # (P,) int64
    grid: GridSpec
    dropped_out_of_range: int = 0
    dropped_over_cap: int = 0

    @property
    def num_pillars(self) -> int:
        return self.indices.shape[0]

    @property
    def max_points(self) -> int:
        return self.features.shape[1]

    @property
    def point_dim(self) -> int:
        return self.features.shape[2]


def pillarize(frame: RadarFrame, grid: GridSpec, max_points_per_pillar: int = 20) -> PillarSet:
    """Assign in-range points to BEV pillars.

    row = floor((y - y_min) / cell), col = floor((x - x_min) / cell); points
    outside any axis range (z included, ranges half-open at the top) are
    dropped, as are points beyond the per-pillar cap in arrival order. Each
    kept point is augmented with its offsets from the pillar center.
    """
    if max_points_per_pillar < 1:
        raise ConfigError("max_points_per_pillar must be positive")
    pts = frame.points
    d = augmented_dim(frame.feature_channels)
    if pts.shape[0] == 0:
        return PillarSet(
            np.zeros((0, 2), dtype=np.int64),
            np.zeros((0, max_points_per_pillar, d), dtype=np.float32),
            np.zeros(0, dtype=np.int64),
            grid,
        )

    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    in_range = (
        (x >= grid.x_range[0])
        & (x < grid.x_range[1])
        & (y >= grid.y_range[0])
        & (y < grid.y_range[1])
        & (z >= grid.z_range[0])
        & (z < grid.z_range[1])
    )
    cols = np.floor((x - grid.x_range[0]) / grid.cell_size).astype(np.int64)
    rows = np.floor((y - grid.y_range[0]) / grid.cell_size).astype(np.int64)

    order: dict[tuple[int, int], int] = {}
    members: list[list[int]] = []
    dropped_cap = 0
    for i in np.nonzero(in_range)[0]:
        key = (int(rows[i]), int(cols[i]))
        slot = order.get(key)
        if slot is None:
            order[key] = len(members)
            members.append([int(i)])
        elif len(members[slot]) < max_points_per_pillar:
            members[slot].append(int(i))
        else:
            dropped_cap += 1

    p = len(members)
    indices = np.array(list(order.keys()), dtype=np.int64).reshape(p, 2)
    features = np.zeros((p, max_points_per_pillar, d), dtype=np.float32)
    counts = np.zeros(p, dtype=np.int64)
    for slot, idxs in enumerate(members):
        row, col = indices[slot]
        xc, yc = grid.cell_center(int(row), int(col))
        block = pts[idxs]
        aug = np.empty((len(idxs), d), dtype=np.float64)
        aug[:, : 3 + frame.feature_channels] = block
        aug[:, -2] = block[:, 0] - xc
        aug[:, -1] = block[:, 1] - yc
        features[slot, : len(idxs)] = aug.astype(np.float32)
        counts[slot] = len(idxs)

    return PillarSet(
        indices,
        features,
        counts,
        grid,
        dropped_out_of_range=int(pts.shape[0] - int(in_range.sum())),
        dropped_over_cap=dropped_cap,
    )


def pillar_feature_net(pillars: PillarSet, weights: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Shared per-point linear + ReLU, then an elementwise max over each pillar.

    weights is (f1, D) over the augmented point layout. Returns (P, f1)
    float32 vectors; the max reduction makes the result independent of the
    point order within a pillar.
    """
    weights = _as_f32(weights)
    if weights.ndim != 2 or weights.shape[1] != pillars.point_dim:
        raise ConfigError(
            f"pillar feature net weights {weights.shape} do not match augmented point dim {pillars.point_dim}"
        )
    p, n, d = pillars.features.shape
    f1 = weights.shape[0]
    if p == 0:
        return np.zeros((0, f1), dtype=np.float32)
    h = pillars.features.reshape(p * n, d) @ weights.T
    if bias is not None:
        b = _as_f32(bias).reshape(-1)
        if b.shape[0] != f1:
            raise ConfigError(f"pillar feature net bias length {b.shape[0]} != {f1}")
        h = h + b
    h = np.maximum(h, np.float32(0.0)).reshape(p, n, f1)
    mask = np.arange(n)[None, :] < pillars.counts[:, None]
    h = np.where(mask[:, :, None], h, np.float32(-np.inf))
    return h.max(axis=1)


def fec_forward(
    vectors: np.ndarray,
    config: FecConfig,
    w2: np.ndarray,
    b2: np.ndarray | None,
    w3: np.ndarray,
    b3: np.ndarray | None,
) -> np.ndarray:
    """Enhancement (f1 -> f2) then compression (f2 -> f3), linear + ReLU each.

    Completes the three-convolution encoder stack started by
    pillar_feature_net. No batch normalization anywhere.
    """
    vectors = _as_f32(vectors)
    w2, w3 = _as_f32(w2), _as_f32(w3)
    if vectors.ndim != 2 or vectors.shape[1] != config.f1:
        raise ConfigError(f"FEC input vectors must be (P, {config.f1}), got {vectors.shape}")
    if w2.shape != (config.f2, config.f1):
        raise ConfigError(f"FEC enhancement weights {w2.shape} != {(config.f2, config.f1)}")
    if w3.shape != (config.f3, config.f2):
        raise ConfigError(f"FEC compression weights {w3.shape} != {(config.f3, config.f2)}")
    h = vectors @ w2.T
    if b2 is not None:
        h = h + _as_f32(b2).reshape(-1)
    h = np.maximum(h, np.float32(0.0))
    h = h @ w3.T
    if b3 is not None:
        h = h + _as_f32(b3).reshape(-1)
    return np.maximum(h, np.float32(0.0))


def scatter_to_pseudo_image(pillars: PillarSet, vectors: np.ndarray, grid: GridSpec) -> FeatureMap:
    """Place each pillar vector at its grid cell; empty cells stay exactly zero."""
    vectors = _as_f32(vectors)
    if vectors.ndim != 2 or vectors.shape[0] != pillars.num_pillars:
        raise ConfigError(f"expected ({pillars.num_pillars}, C) pillar vectors, got {vectors.shape}")
    image = np.zeros((grid.rows, grid.cols, vectors.shape[1]), dtype=np.float32)
    if pillars.num_pillars:
        image[pillars.indices[:, 0], pillars.indices[:, 1]] = vectors
    return FeatureMap(image)


def encode_frame(
    frame: RadarFrame,
    grid: GridSpec,
    config: FecConfig,
    weights: dict[str, np.ndarray],
    max_points_per_pillar: int = 20,
) -> FeatureMap:
    """Full encoder: pillarize, three-conv stack, scatter to the BEV grid.

    Expects weight tensors named fec.conv1.{weight,bias} (f1 x D),
    fec.conv2.* (f2 x f1) and fec.conv3.* (f3 x f2).
    """
    pillars = pillarize(frame, grid, max_points_per_pillar)
    if pillars.num_pillars == 0:
        return FeatureMap.zeros(grid.rows, grid.cols, config.f3)
    vec = pillar_feature_net(pillars, weights["fec.conv1.weight"], weights.get("fec.conv1.bias"))
    vec = fec_forward(
        vec,
        config,
        weights["fec.conv2.weight"],
        weights.get("fec.conv2.bias"),
        weights["fec.conv3.weight"],
        weights.get("fec.conv3.bias"),
    )
    return scatter_to_pseudo_image(pillars, vec, grid)


def frame_from_csv_text(text: str, source: str = "<memory>") -> RadarFrame:
    """Parse a radar frame CSV with header x,y,z,f0,f1,...

    Raises DataError naming the offending 1-based line on any malformed row.
    """
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: line 1: missing header") from None
    header = [h.strip() for h in header]
    expected = ["x", "y", "z"] + [f"f{i}" for i in range(len(header) - 3)]
    if len(header) < 3 or header != expected:
        raise DataError(f"{source}: line 1: header must be x,y,z,f0,... got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{source}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise DataError(f"{source}: line {lineno}: {exc}") from None
    pts = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(header)), dtype=np.float64)
    return RadarFrame(pts)


def read_frame_csv(path) -> RadarFrame:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read frame file {path}: {exc}") from None
    return frame_from_csv_text(text, source=str(path))


def frame_to_csv_text(frame: RadarFrame) -> str:
    header = ["x", "y", "z"] + [f"f{i}" for i in range(frame.feature_channels)]
    lines = [",".join(header)]
    for row in frame.points:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_frame_csv(path, frame: RadarFrame) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(frame_to_csv_text(frame))
