"""Static cost model over a layer graph, plus the runtime benchmark harness.

Conventions, also stated in every report header:
  - FLOPs = 2 x multiply-accumulates for conv-like layers (bias adds
    excluded); batch norm, activations, elementwise adds, sigmoids and max
    reductions are counted once per element.
  - Parameter totals are trainable-only; batch-norm running statistics are
    reported separately in the all-state column.
  - Encoder rows are sized at dense grid capacity (every pillar full), the
    shape a dense deployment graph of the encoder computes.
  - Peak activation memory is an upper bound from a simple liveness model
    (an output stays live until its last consumer runs) over the dense
    pipeline; analysis-only encoder rows are excluded from the peak.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .config import ModelConfig
from .encoder import GridSpec, RadarFrame
from .errors import ConfigError
from .graph import INPUT, LayerGraph, build_model_graph

CONVENTION = (
    "FLOPs = 2 x MACs for convolutions; BN/activation/add/sigmoid/max counted once per element; "
    "params are trainable-only (BN running stats in the all-state column); "
    "peak activation memory is a liveness upper bound over the dense pipeline"
)

_MAC_KINDS = ("conv", "dwconv", "pwconv")


@dataclass(frozen=True)
class LayerRow:
    name: str
    kind: str
    out_shape: tuple[int, int, int]
    params: int
    params_all_state: int
    macs: int
    flops: int
    activation_bytes: int
    in_peak: bool


@dataclass
class BenchStats:
    mean_ms: float
    median_ms: float
    p95_ms: float
    fps: float
    reps: int
    n_frames: int
    timed_runs: int
    warmup: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AnalysisReport:
    rows: list[LayerRow]
    total_params: int
    total_params_all_state: int
    total_macs: int
    total_flops: int
    flops_from_macs: int
    flops_elementwise: int
    peak_activation_bytes: int
    convention: str = CONVENTION
    bench: BenchStats | None = None

    @property
    def gflops(self) -> float:
        return self.total_flops / 1e9

    @property
    def peak_activation_mb(self) -> float:
        return self.peak_activation_bytes / (1024.0 * 1024.0)

    def to_dict(self) -> dict:
        out = {
            "convention": self.convention,
            "rows": [
                {
                    "name": r.name,
                    "kind": r.kind,
                    "out_shape": list(r.out_shape),
                    "params": r.params,
                    "params_all_state": r.params_all_state,
                    "flops": r.flops,
                    "activation_bytes": r.activation_bytes,
                }
                for r in self.rows
            ],
            "totals": {
                "params": self.total_params,
                "params_all_state": self.total_params_all_state,
                "macs": self.total_macs,
                "flops": self.total_flops,
                "flops_from_macs": self.flops_from_macs,
                "flops_elementwise": self.flops_elementwise,
                "gflops": self.gflops,
                "peak_activation_bytes": self.peak_activation_bytes,
                "peak_activation_mb": self.peak_activation_mb,
            },
        }
        if self.bench is not None:
            out["bench"] = self.bench.to_dict()
        return out


def _node_params(node) -> tuple[int, int]:
    """(trainable, all-state) parameter counts for one node."""
    a = node.attrs
    if node.kind == "conv":
        kh, kw = a["kernel"]
        p = kh * kw * a["in_channels"] * a["out_channels"] + (a["out_channels"] if a.get("bias") else 0)
        return p, p
    if node.kind == "dwconv":
        kh, kw = a["kernel"]
        return kh * kw * a["channels"], kh * kw * a["channels"]
    if node.kind == "pwconv":
        p = a["in_channels"] * a["out_channels"] + (a["out_channels"] if a.get("bias") else 0)
        return p, p
    if node.kind == "bn":
        return 2 * a["channels"], 4 * a["channels"]
    return 0, 0


def _node_macs(node) -> int:
    h, w, c = node.out_shape
    cells = h * w * node.capacity_multiplier
    a = node.attrs
    if node.kind == "conv":
        kh, kw = a["kernel"]
        return kh * kw * a["in_channels"] * a["out_channels"] * cells
    if node.kind == "dwconv":
        kh, kw = a["kernel"]
        return kh * kw * c * cells
    if node.kind == "pwconv":
        return a["in_channels"] * a["out_channels"] * cells
    return 0


def _node_elementwise(node) -> int:
    h, w, c = node.out_shape
    if node.kind in ("bn", "act", "add", "sigmoid"):
        return h * w * c * node.capacity_multiplier
    if node.kind == "reduce_max":
        # elements scanned by the per-pillar max
        return h * w * c * node.capacity_multiplier
    return 0


def _activation_bytes(node) -> int:
    h, w, c = node.out_shape
    mult = node.capacity_multiplier if node.kind != "reduce_max" else 1
    return 4 * h * w * c * mult


def _peak_bytes(graph: LayerGraph) -> int:
    """Liveness peak over the executable pipeline, graph input included."""
    order = [n for n in graph.nodes if n.executable]
    if not order:
        return 0
    last_use: dict[str, int] = {}
    for i, node in enumerate(order):
        for src in node.inputs:
            last_use[src] = i

    def nbytes(name: str) -> int:
        h, w, c = graph.shape_of(name)
        return 4 * h * w * c

    peak = 0
    live: dict[str, int] = {}
    if INPUT in last_use:
        live[INPUT] = last_use[INPUT]
    for i, node in enumerate(order):
        current = sum(nbytes(n) for n in live) + nbytes(node.name)
        peak = max(peak, current)
        for src in node.inputs:
            if src in live and live[src] <= i:
                del live[src]
        if last_use.get(node.name, -1) > i:
            live[node.name] = last_use[node.name]
    return peak


def analyze_graph(graph: LayerGraph) -> AnalysisReport:
    rows: list[LayerRow] = []
    for node in graph.nodes:
        params, params_all = _node_params(node)
        macs = _node_macs(node)
        ew = _node_elementwise(node)
        rows.append(
            LayerRow(
                name=node.name,
                kind=node.kind,
                out_shape=node.out_shape,
                params=params,
                params_all_state=params_all,
                macs=macs,
                flops=2 * macs + ew,
                activation_bytes=_activation_bytes(node),
                in_peak=node.executable,
            )
        )
    total_macs = sum(r.macs for r in rows)
    ew_total = sum(r.flops - 2 * r.macs for r in rows)
    return AnalysisReport(
        rows=rows,
        total_params=sum(r.params for r in rows),
        total_params_all_state=sum(r.params_all_state for r in rows),
        total_macs=total_macs,
        total_flops=2 * total_macs + ew_total,
        flops_from_macs=2 * total_macs,
        flops_elementwise=ew_total,
        peak_activation_bytes=_peak_bytes(graph),
    )


def count_params(graph: LayerGraph) -> tuple[dict[str, int], int]:
    """Per-layer trainable parameter counts and their total."""
    report = analyze_graph(graph)
    return {r.name: r.params for r in report.rows}, report.total_params


def count_flops(graph: LayerGraph, input_dims: tuple[int, int, int] | None = None) -> tuple[dict[str, int], int]:
    """Per-layer FLOPs and their total; input_dims must match the graph when given."""
    if input_dims is not None and tuple(input_dims) != tuple(graph.input_shape):
        raise ConfigError(f"graph was built for input {graph.input_shape}, asked to analyze {tuple(input_dims)}")
    report = analyze_graph(graph)
    return {r.name: r.flops for r in report.rows}, report.total_flops


def estimate_activation_memory(graph: LayerGraph) -> tuple[dict[str, int], int]:
    """Per-layer activation bytes (4 bytes per element) and the liveness peak."""
    report = analyze_graph(graph)
    return {r.name: r.activation_bytes for r in report.rows}, report.peak_activation_bytes


def analyze_config(config: ModelConfig, grid: GridSpec | None = None) -> AnalysisReport:
    return analyze_graph(build_model_graph(config, grid or GridSpec()))


def benchmark(model, frames: list[RadarFrame], warmup: int = 2, reps: int = 1, **infer_kwargs) -> BenchStats:
    """Time end-to-end inference per frame after warmup discards.

    Runs `warmup` untimed passes cycling through the frames, then `reps`
    timed passes over every frame, single-threaded, on a monotonic clock.
    """
    if reps < 1:
        raise ConfigError(f"benchmark reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ConfigError(f"benchmark warmup must be >= 0, got {warmup}")
    if not frames:
        raise ConfigError("benchmark needs at least one frame")
    for i in range(warmup):
        model.infer_frame(frames[i % len(frames)], **infer_kwargs)
    times_ms: list[float] = []
    for _ in range(reps):
        for frame in frames:
            t0 = time.perf_counter()
            model.infer_frame(frame, **infer_kwargs)
            times_ms.append((time.perf_counter() - t0) * 1000.0)
    times_ms.sort()
    n = len(times_ms)
    mean = sum(times_ms) / n
    median = times_ms[n // 2] if n % 2 else 0.5 * (times_ms[n // 2 - 1] + times_ms[n // 2])
    p95 = times_ms[max(0, -(-95 * n // 100) - 1)]  # nearest-rank
    return BenchStats(
        mean_ms=mean,
        median_ms=median,
        p95_ms=p95,
        fps=1000.0 / mean if mean > 0 else float("inf"),
        reps=reps,
        n_frames=len(frames),
        timed_runs=n,
        warmup=warmup,
    )


ABLATION_AXES = ("stem_filters", "blocks_stage2")


@dataclass(frozen=True)
class AblationRow:
    value: int
    valid: bool
    params: int | None = None
    gflops: float | None = None
    peak_mb: float | None = None
    stem_flops: int | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ablation_report(
    base_config: ModelConfig, axis: str, values: list[int], grid: GridSpec | None = None
) -> list[AblationRow]:
    """Sweep one config axis, holding everything else fixed."""
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {ABLATION_AXES}")
    if not values:
        raise ConfigError("ablation needs at least one value")
    grid = grid or GridSpec()
    rows: list[AblationRow] = []
    for value in values:
        try:
            value = int(value)
            if axis == "stem_filters":
                cfg = replace(base_config, stem_filters=value)
            else:
                bps = list(base_config.blocks_per_stage)
                bps[1] = value
                cfg = replace(base_config, blocks_per_stage=tuple(bps))
            report = analyze_graph(build_model_graph(cfg, grid))
            stem_flops = sum(r.flops for r in report.rows if r.name.startswith("stem.") and r.kind == "conv")
            rows.append(
                AblationRow(
                    value=value,
                    valid=True,
                    params=report.total_params,
                    gflops=report.gflops,
                    peak_mb=report.peak_activation_mb,
                    stem_flops=stem_flops,
                )
            )
        except (ConfigError, ValueError, TypeError) as exc:
            rows.append(AblationRow(value=value, valid=False, reason=str(exc)))
    return rows


def report_to_text(report: AnalysisReport) -> str:
    lines = [f"# {report.convention}"]
    header = f"{'layer':<28} {'kind':<11} {'output':<16} {'params':>10} {'flops':>14} {'act_bytes':>12}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.rows:
        shape = "x".join(str(v) for v in r.out_shape)
        lines.append(f"{r.name:<28} {r.kind:<11} {shape:<16} {r.params:>10} {r.flops:>14} {r.activation_bytes:>12}")
    lines.append("-" * len(header))
    lines.append(
        f"{'TOTAL':<28} {'':<11} {'':<16} {report.total_params:>10} {report.total_flops:>14} "
        f"{report.peak_activation_bytes:>12}"
    )
    lines.append(
        f"params (all state): {report.total_params_all_state}  |  GFLOPs: {report.gflops:.4f}  |  "
        f"peak activation: {report.peak_activation_mb:.2f} MB"
    )
    if report.bench is not None:
        b = report.bench
        lines.append(
            f"bench: mean {b.mean_ms:.2f} ms  median {b.median_ms:.2f} ms  p95 {b.p95_ms:.2f} ms  "
            f"fps {b.fps:.2f}  ({b.timed_runs} timed runs, warmup {b.warmup})"
        )
    return "\n".join(lines)


def ablation_to_text(axis: str, rows: list[AblationRow]) -> str:
    lines = [f"# ablation over {axis} ({CONVENTION})"]
    header = f"{'value':>8} {'params':>12} {'gflops':>10} {'stem_flops':>14} {'peak_mb':>9}  note"
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        if r.valid:
            lines.append(
                f"{r.value:>8} {r.params:>12} {r.gflops:>10.4f} {r.stem_flops:>14} {r.peak_mb:>9.2f}"
            )
        else:
            lines.append(f"{r.value:>8} {'-':>12} {'-':>10} {'-':>14} {'-':>9}  invalid: {r.reason}")
    return "\n".join(lines)
