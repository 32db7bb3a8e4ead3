"""Pydantic request/response models for the service API."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..encoder import GridSpec


class GridModel(BaseModel):
    x_range: tuple[float, float] = (0.0, 80.0)
    y_range: tuple[float, float] = (-40.0, 40.0)
    z_range: tuple[float, float] = (-2.5, 2.5)
    cell_size: float = 0.5

    def to_spec(self) -> GridSpec:
        return GridSpec(tuple(self.x_range), tuple(self.y_range), tuple(self.z_range), self.cell_size)


class DetectionModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    cx: float
    cy: float
    w: float
    l: float
    theta: float
    class_label: str = Field(alias="class")
    score: float
    frame_id: int | None = None


class GroundTruthBoxModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    cx: float
    cy: float
    w: float
    l: float
    theta: float
    class_label: str = Field(alias="class")


class GroundTruthFrameModel(BaseModel):
    frame_id: int
    boxes: list[GroundTruthBoxModel]


class AblateModel(BaseModel):
    axis: str
    values: list[int]


class AnalyzeRequest(BaseModel):
    config: dict = Field(default_factory=lambda: {"preset": "dsfec-s"})
    grid: GridModel = Field(default_factory=GridModel)
    ablate: AblateModel | None = None


class AnalyzeResponse(BaseModel):
    config: dict
    report: dict | None = None
    ablation: dict | None = None


class InferRequest(BaseModel):
    config: dict = Field(default_factory=lambda: {"preset": "dsfec-s"})
    grid: GridModel = Field(default_factory=GridModel)
    frame_csv: str
    frame_source: str = "<request>"
    weights_b64: str | None = None
    weights_seed: int | None = None
    score_threshold: float = 0.05
    iou_threshold: float = 0.3
    per_class_nms: bool = True
    frame_id: int | None = None


class InferResponse(BaseModel):
    count: int
    detections: list[DetectionModel]


class BenchRequest(BaseModel):
    config: dict = Field(default_factory=lambda: {"preset": "dsfec-s"})
    grid: GridModel = Field(default_factory=GridModel)
    synthetic_frames: int = 0
    seed: int = 0
    frames_csv: list[str] | None = None
    reps: int = 1
    warmup: int = 2
    weights_seed: int = 0
    score_threshold: float = 0.05
    iou_threshold: float = 0.3


class BenchResponse(BaseModel):
    config: dict
    stats: dict


class EvalRequest(BaseModel):
    ground_truth: list[GroundTruthFrameModel]
    detections: list[DetectionModel]
    thresholds: list[float] = [0.5, 1.0, 2.0, 4.0]


class EvalResponse(BaseModel):
    result: dict


class SynthRequest(BaseModel):
    seed: int = 0
    frames: int = 1
    n_objects: dict[str, int] | None = None
    points_per_object: float = 12.0
    clutter_points: float = 30.0
    min_separation: float = 15.0
    feature_channels: int = 2
    grid: GridModel = Field(default_factory=GridModel)


class SynthResponse(BaseModel):
    frames_csv: list[str]
    ground_truth: list[GroundTruthFrameModel]


class InitWeightsRequest(BaseModel):
    config: dict = Field(default_factory=lambda: {"preset": "dsfec-s"})
    grid: GridModel = Field(default_factory=GridModel)
    seed: int = 0


class InitWeightsResponse(BaseModel):
    weights_b64: str
    tensor_count: int


class HealthResponse(BaseModel):
    status: str
    version: str


class PresetsResponse(BaseModel):
    presets: dict[str, dict]
