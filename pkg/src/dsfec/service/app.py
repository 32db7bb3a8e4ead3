"""Service endpoints: analyze, infer, bench, eval, synth, weight init.

The service is stateless; every request carries its full configuration.
Package errors map to HTTP 400 with a category the CLI turns into its
exit codes.
"""

from __future__ import annotations

import base64

from fastapi import FastAPI
from fastapi.requests import Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..analysis import ablation_report, analyze_config, benchmark
from ..config import PRESETS, config_from_dict, config_to_dict
from ..encoder import frame_from_csv_text, frame_to_csv_text
from ..errors import ConfigError, DsfecError, DataError, EvalInputError, WeightsError
from ..graph import build_model_graph
from ..metrics import GroundTruthBox, evaluate
from ..model import Model
from ..nms import Detection, detection_to_dict, normalize_angle
from ..synth import SceneSpec, generate_frames
from ..weights import dump_weights_bytes, init_weights, parse_weights_bytes
from . import schemas

_ERROR_CATEGORIES = {
    ConfigError: "config",
    WeightsError: "weights",
    DataError: "data",
    EvalInputError: "eval",
}


def _category(exc: DsfecError) -> str:
    for klass, name in _ERROR_CATEGORIES.items():
        if isinstance(exc, klass):
            return name
    return "config"


def create_app() -> FastAPI:
    app = FastAPI(title="dsfec service", version=__version__)

    @app.exception_handler(DsfecError)
    async def _dsfec_error(_request: Request, exc: DsfecError):
        return JSONResponse(status_code=400, content={"detail": str(exc), "category": _category(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=schemas.PresetsResponse)
    def presets():
        return schemas.PresetsResponse(presets={name: config_to_dict(cfg) for name, cfg in PRESETS.items()})

    @app.post("/analyze", response_model=schemas.AnalyzeResponse)
    def analyze(req: schemas.AnalyzeRequest):
        config = config_from_dict(req.config)
        grid = req.grid.to_spec()
        if req.ablate is not None:
            rows = ablation_report(config, req.ablate.axis, req.ablate.values, grid)
            return schemas.AnalyzeResponse(
                config=config_to_dict(config),
                ablation={"axis": req.ablate.axis, "rows": [r.to_dict() for r in rows]},
            )
        report = analyze_config(config, grid)
        return schemas.AnalyzeResponse(config=config_to_dict(config), report=report.to_dict())

    @app.post("/infer", response_model=schemas.InferResponse)
    def infer(req: schemas.InferRequest):
        config = config_from_dict(req.config)
        grid = req.grid.to_spec()
        frame = frame_from_csv_text(req.frame_csv, source=req.frame_source)
        if req.weights_b64 is not None:
            weights = _weights_from_b64(req.weights_b64)
        elif req.weights_seed is not None:
            weights = init_weights(build_model_graph(config, grid), req.weights_seed)
        else:
            raise ConfigError("infer needs weights_b64 or weights_seed")
        model = Model.build(config, grid, weights=weights)
        dets = model.infer_frame(
            frame,
            score_threshold=req.score_threshold,
            iou_threshold=req.iou_threshold,
            per_class=req.per_class_nms,
        )
        return schemas.InferResponse(
            count=len(dets),
            detections=[schemas.DetectionModel(**detection_to_dict(d, req.frame_id)) for d in dets],
        )

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest):
        config = config_from_dict(req.config)
        grid = req.grid.to_spec()
        if req.frames_csv:
            frames = [frame_from_csv_text(text, source=f"<frame {i}>") for i, text in enumerate(req.frames_csv)]
        elif req.synthetic_frames > 0:
            frames, _ = generate_frames(SceneSpec(seed=req.seed, grid=grid), req.synthetic_frames)
        else:
            raise ConfigError("bench needs synthetic_frames >= 1 or a non-empty frames_csv list")
        model = Model.build(config, grid, seed=req.weights_seed)
        stats = benchmark(
            model,
            frames,
            warmup=req.warmup,
            reps=req.reps,
            score_threshold=req.score_threshold,
            iou_threshold=req.iou_threshold,
        )
        return schemas.BenchResponse(config=config_to_dict(config), stats=stats.to_dict())

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_detections(req: schemas.EvalRequest):
        gts = {
            frame.frame_id: [
                GroundTruthBox(b.cx, b.cy, b.w, b.l, normalize_angle(b.theta), b.class_label)
                for b in frame.boxes
            ]
            for frame in req.ground_truth
        }
        dets: dict[int, list[Detection]] = {}
        for d in req.detections:
            if d.frame_id is None:
                raise EvalInputError("every detection needs a frame_id for evaluation")
            dets.setdefault(d.frame_id, []).append(
                Detection(d.cx, d.cy, d.w, d.l, normalize_angle(d.theta), d.class_label, d.score)
            )
        result = evaluate(dets, gts, tuple(req.thresholds))
        return schemas.EvalResponse(result=result.to_dict())

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        default_counts = SceneSpec().n_objects
        spec = SceneSpec(
            seed=req.seed,
            n_objects=dict(req.n_objects) if req.n_objects is not None else default_counts,
            points_per_object=req.points_per_object,
            clutter_points=req.clutter_points,
            min_separation=req.min_separation,
            feature_channels=req.feature_channels,
            grid=req.grid.to_spec(),
        )
        frames, gts = generate_frames(spec, req.frames)
        return schemas.SynthResponse(
            frames_csv=[frame_to_csv_text(f) for f in frames],
            ground_truth=[
                schemas.GroundTruthFrameModel(
                    frame_id=i,
                    boxes=[
                        schemas.GroundTruthBoxModel(
                            cx=g.cx, cy=g.cy, w=g.w, l=g.l, theta=g.theta, class_label=g.class_label
                        )
                        for g in gts[i]
                    ],
                )
                for i in sorted(gts)
            ],
        )

    @app.post("/weights/init", response_model=schemas.InitWeightsResponse)
    def weights_init(req: schemas.InitWeightsRequest):
        config = config_from_dict(req.config)
        graph = build_model_graph(config, req.grid.to_spec())
        tensors = init_weights(graph, req.seed)
        blob = dump_weights_bytes(tensors)
        return schemas.InitWeightsResponse(
            weights_b64=base64.b64encode(blob).decode("ascii"), tensor_count=len(tensors)
        )

    return app


def _weights_from_b64(data: str):
    try:
        blob = base64.b64decode(data.encode("ascii"), validate=True)
    except Exception as exc:
        raise WeightsError(f"weights_b64 is not valid base64: {exc}") from None
    return parse_weights_bytes(blob, source="<request>")


app = create_app()
