"""Detection evaluation: center-distance matching, AP and mAP.

Matching is greedy in score order against the nearest unmatched same-class
ground truth within the distance threshold, one-to-one. AP is 101-point
interpolated precision over recall {0.00, 0.01, ..., 1.00}; detections
with equal scores are accumulated as one precision-recall point so results
do not depend on frame or tie order. mAP averages AP over the distance
thresholds {0.5, 1, 2, 4} meters. No min-recall/min-precision truncation
is applied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ConfigError, DataError, EvalInputError
from .nms import CLASS_NAMES, Detection, normalize_angle

DISTANCE_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class GroundTruthBox:
    cx: float
    cy: float
    w: float
    l: float
    theta: float
    class_label: str

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0):
            raise ConfigError(f"ground truth sizes must be positive, got w={self.w}, l={self.l}")
        if self.class_label not in CLASS_NAMES:
            raise ConfigError(f"unknown class {self.class_label!r}")


@dataclass
class EvalResult:
    ap: dict[str, dict[float, float]]  # class -> threshold -> AP
    mean_ap: dict[str, float]  # class -> mAP over thresholds
    car_map: float
    car_ap4: float
    thresholds: tuple[float, ...]
    # (class, threshold) pairs where no GT and no detection existed; AP is
    # 1.0 there by convention.
    undefined: list[tuple[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "ap": {cls: {str(t): v for t, v in per.items()} for cls, per in self.ap.items()},
            "mean_ap": dict(self.mean_ap),
            "car_map": self.car_map,
            "car_ap4": self.car_ap4,
            "undefined": [[cls, t] for cls, t in self.undefined],
        }


def match_detections(
    dets: list[Detection],
    gts: list[GroundTruthBox],
    class_label: str,
    distance_threshold: float,
) -> list[tuple[Detection, GroundTruthBox | None]]:
    """Greedy one-to-one matching within one frame and one class.

    Detections are processed in descending score (ties by input order);
    each takes the nearest unmatched ground truth with center distance <=
    threshold, distance ties broken by ground-truth input order.
    """
    if distance_threshold <= 0:
        raise ConfigError(f"distance threshold must be positive, got {distance_threshold}")
    cand_dets = [(i, d) for i, d in enumerate(dets) if d.class_label == class_label]
    cand_dets.sort(key=lambda item: (-item[1].score, item[0]))
    gt_pool = [g for g in gts if g.class_label == class_label]
    taken = [False] * len(gt_pool)
    out: list[tuple[Detection, GroundTruthBox | None]] = []
    for _, det in cand_dets:
        best_j, best_dist = None, None
        for j, gt in enumerate(gt_pool):
            if taken[j]:
                continue
            dist = math.hypot(det.cx - gt.cx, det.cy - gt.cy)
            if dist <= distance_threshold and (best_dist is None or dist < best_dist):
                best_j, best_dist = j, dist
        if best_j is None:
            out.append((det, None))
        else:
            taken[best_j] = True
            out.append((det, gt_pool[best_j]))
    return out


def average_precision(matches: list[tuple[float, bool]], n_ground_truth: int) -> float:
    """101-point interpolated AP from (score, is_true_positive) pairs.

    Returns 0.0 when ground truth exists but nothing is recalled, 0.0 when
    detections exist without any ground truth, and 1.0 by convention when
    both are empty.
    """
    if n_ground_truth < 0:
        raise ConfigError("n_ground_truth must be >= 0")
    if n_ground_truth == 0:
        return 1.0 if not matches else 0.0
    if not matches:
        return 0.0
    # Group equal scores into single PR points so tie order cannot matter.
    by_score: dict[float, list[bool]] = {}
    for score, tp in matches:
        by_score.setdefault(float(score), []).append(tp)
    tps = fps = 0
    points: list[tuple[float, float]] = []  # (recall, precision), recall ascending
    for score in sorted(by_score, reverse=True):
        flags = by_score[score]
        tps += sum(flags)
        fps += len(flags) - sum(flags)
        points.append((tps / n_ground_truth, tps / (tps + fps)))
    # Walk the recall grid downward, folding in precision points as their
    # recall clears each grid value; best stays 0 past the highest recall.
    total = 0.0
    best = 0.0
    idx = len(points) - 1
    for i in range(100, -1, -1):
        r = i / 100.0
        while idx >= 0 and points[idx][0] >= r - 1e-12:
            best = max(best, points[idx][1])
            idx -= 1
        total += best
    return total / 101.0


def evaluate(
    dets_by_frame: dict[int, list[Detection]],
    gts_by_frame: dict[int, list[GroundTruthBox]],
    thresholds: tuple[float, ...] = DISTANCE_THRESHOLDS,
) -> EvalResult:
    """Per-class AP at each distance threshold, aggregated over frames."""
    unknown = sorted(set(dets_by_frame) - set(gts_by_frame))
    if unknown:
        raise EvalInputError(f"detections reference frame ids with no ground truth: {unknown}")
    frame_ids = sorted(gts_by_frame)
    ap: dict[str, dict[float, float]] = {}
    undefined: list[tuple[str, float]] = []
    for cls in CLASS_NAMES:
        per: dict[float, float] = {}
        n_gt = sum(sum(1 for g in gts_by_frame[f] if g.class_label == cls) for f in frame_ids)
        n_det = sum(sum(1 for d in dets_by_frame.get(f, []) if d.class_label == cls) for f in frame_ids)
        for t in thresholds:
            scored: list[tuple[float, bool]] = []
            for f in frame_ids:
                for det, gt in match_detections(dets_by_frame.get(f, []), gts_by_frame[f], cls, t):
                    scored.append((det.score, gt is not None))
            per[t] = average_precision(scored, n_gt)
            if n_gt == 0 and n_det == 0:
                undefined.append((cls, t))
        ap[cls] = per
    mean_ap = {cls: sum(per.values()) / len(per) for cls, per in ap.items()}
    return EvalResult(
        ap=ap,
        mean_ap=mean_ap,
        car_map=mean_ap["Car"],
        car_ap4=ap["Car"].get(4.0, max(ap["Car"].values()) if ap["Car"] else 0.0),
        thresholds=tuple(thresholds),
        undefined=undefined,
    )


def save_ground_truth(path, gts_by_frame: dict[int, list[GroundTruthBox]]) -> None:
    payload = [
        {
            "frame_id": frame_id,
            "boxes": [
                {"cx": g.cx, "cy": g.cy, "w": g.w, "l": g.l, "theta": g.theta, "class": g.class_label}
                for g in boxes
            ],
        }
        for frame_id, boxes in sorted(gts_by_frame.items())
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def ground_truth_from_obj(payload) -> dict[int, list[GroundTruthBox]]:
    if not isinstance(payload, list):
        raise DataError("ground truth must be a JSON array of frames")
    out: dict[int, list[GroundTruthBox]] = {}
    for item in payload:
        try:
            frame_id = int(item["frame_id"])
            boxes = [
                GroundTruthBox(
                    float(b["cx"]),
                    float(b["cy"]),
                    float(b["w"]),
                    float(b["l"]),
                    normalize_angle(float(b["theta"])),
                    str(b["class"]),
                )
                for b in item["boxes"]
            ]
        except (KeyError, TypeError, ValueError, ConfigError) as exc:
            raise DataError(f"malformed ground truth frame {item!r}: {exc}") from None
        if frame_id in out:
            raise DataError(f"duplicate ground truth frame id {frame_id}")
        out[frame_id] = boxes
    return out


def load_ground_truth(path) -> dict[int, list[GroundTruthBox]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise EvalInputError(f"cannot read ground truth file {path}: {exc}") from None
    try:
        return ground_truth_from_obj(payload)
    except DataError as exc:
        raise EvalInputError(str(exc)) from None
