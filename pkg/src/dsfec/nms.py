"""Oriented boxes: rotated IoU via polygon clipping, and greedy NMS.

Geometry runs in float64. The IoU intersects the two rectangles with
Sutherland-Hodgman clipping; a center-distance quick reject keeps NMS fast
on sparse scenes. Ordering everywhere is deterministic: score descending,
ties broken by lower cx, then cy, then input order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

CLASS_NAMES = ("Car", "Truck", "Pedestrian", "Bicycle")
_DEGENERATE_AREA = 1e-12


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    elif t > math.pi:
        t -= 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Detection:
    """Oriented box: center (m), width/length (m), heading (rad), class, score."""

    cx: float
    cy: float
    w: float
    l: float
    theta: float
    class_label: str
    score: float

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0):
            raise ConfigError(f"box sizes must be positive, got w={self.w}, l={self.l}")
        if not (0.0 <= self.score <= 1.0):
            raise ConfigError(f"score must be in [0, 1], got {self.score}")
        if not (-math.pi < self.theta <= math.pi):
            raise ConfigError(f"theta must be in (-pi, pi], got {self.theta}")
        if self.class_label not in CLASS_NAMES:
            raise ConfigError(f"unknown class {self.class_label!r}, expected one of {CLASS_NAMES}")


def box_corners(cx: float, cy: float, w: float, l: float, theta: float) -> np.ndarray:
    """Counterclockwise corners (4, 2); heading points along the length axis."""
    c, s = math.cos(theta), math.sin(theta)
    ux, uy = c * l / 2.0, s * l / 2.0  # half-extent along heading
    vx, vy = -s * w / 2.0, c * w / 2.0  # half-extent to the left
    return np.array(
        [
            [cx + ux + vx, cy + uy + vy],
            [cx - ux + vx, cy - uy + vy],
            [cx - ux - vx, cy - uy - vy],
            [cx + ux - vx, cy + uy - vy],
        ],
        dtype=np.float64,
    )


def polygon_area(points) -> float:
    """Shoelace area; input vertices in order (any orientation)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon(subject, clipper) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip subject polygon by a convex CCW clipper."""
    output = [tuple(p) for p in subject]
    clip = [tuple(p) for p in clipper]
    for i in range(len(clip)):
        if not output:
            return []
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % len(clip)]
        ex, ey = bx - ax, by - ay

        def inside(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax) >= 0.0

        inputs, output = output, []
        prev = inputs[-1]
        prev_in = inside(prev)
        for cur in inputs:
            cur_in = inside(cur)
            if cur_in != prev_in:
                # Edge crossing: intersect (prev -> cur) with the clip line.
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                if denom != 0.0:
                    t = (ex * (ay - prev[1]) - ey * (ax - prev[0])) / -denom
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return output


def rotated_iou(a: Detection, b: Detection) -> float:
    """Intersection over union of two oriented boxes, in [0, 1]."""
    area_a = a.w * a.l
    area_b = b.w * b.l
    if area_a < _DEGENERATE_AREA or area_b < _DEGENERATE_AREA:
        return 0.0
    # Boxes farther apart than their circumradii cannot intersect.
    reach = (math.hypot(a.w, a.l) + math.hypot(b.w, b.l)) / 2.0
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > reach:
        return 0.0
    ca = box_corners(a.cx, a.cy, a.w, a.l, a.theta)
    cb = box_corners(b.cx, b.cy, b.w, b.l, b.theta)
    inter = polygon_area(clip_polygon(ca, cb))
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def rank_order(dets: list[Detection]) -> list[int]:
    """Indices sorted by score desc, ties by lower cx, then cy, then input order."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].cx, dets[i].cy, i))


def nms(dets: list[Detection], iou_threshold: float = 0.3, per_class: bool = True) -> list[Detection]:
    """Greedy non-maximum suppression; output stays score-descending."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ConfigError(f"NMS iou_threshold must be in (0, 1], got {iou_threshold}")
    order = rank_order(dets)
    suppressed = [False] * len(dets)
    kept: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(i)
        di = dets[i]
        for j in order[pos + 1 :]:
            if suppressed[j]:
                continue
            dj = dets[j]
            if per_class and dj.class_label != di.class_label:
                continue
            if rotated_iou(di, dj) >= iou_threshold:
                suppressed[j] = True
    return [dets[i] for i in kept]


def detection_to_dict(det: Detection, frame_id: int | None = None) -> dict:
    out = {
        "cx": det.cx,
        "cy": det.cy,
        "w": det.w,
        "l": det.l,
        "theta": det.theta,
        "class": det.class_label,
        "score": det.score,
    }
    if frame_id is not None:
        out["frame_id"] = frame_id
    return out


def detection_from_dict(data: dict) -> tuple[Detection, int | None]:
    try:
        det = Detection(
            float(data["cx"]),
            float(data["cy"]),
            float(data["w"]),
            float(data["l"]),
            float(data["theta"]),
            str(data["class"]),
            float(data["score"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed detection record {data!r}: {exc}") from None
    frame_id = data.get("frame_id")
    return det, (int(frame_id) if frame_id is not None else None)


def save_detections(path, dets: list[Detection], frame_id: int | None = None) -> None:
    payload = [detection_to_dict(d, frame_id) for d in dets]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_detections(path) -> list[tuple[Detection, int | None]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read detections file {path}: {exc}") from None
    if not isinstance(payload, list):
        raise DataError(f"detections file {path} must hold a JSON array")
    return [detection_from_dict(item) for item in payload]
