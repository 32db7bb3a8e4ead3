"""Graph executor and the end-to-end model.

The executor walks a LayerGraph node by node using the dense kernels from
tensor.py; the Model wires the sparse encoder path, the executable graph
and the box decode/NMS postprocess into a frame -> detections pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .detect import HeadOutput, decode_boxes
from .encoder import GridSpec, RadarFrame, encode_frame
from .errors import ConfigError
from .graph import INPUT, LayerGraph, build_model_graph, dsconv_block_graph, head_graph, residual_block_graph
from .nms import Detection, nms, rank_order
from .tensor import (
    Activation,
    BatchNormParams,
    ConvSpec,
    FeatureMap,
    add,
    apply_activation,
    batch_norm_infer,
    conv2d,
    depthwise_conv2d,
    pointwise_conv2d,
    sigmoid,
)
from .weights import check_weights, init_weights


def _run_node(node, values, weights) -> FeatureMap:
    x = values[node.inputs[0]] if node.inputs else None
    if node.kind == "conv":
        spec = ConvSpec(
            kernel=tuple(node.attrs["kernel"]),
            in_channels=node.attrs["in_channels"],
            out_channels=node.attrs["out_channels"],
            stride=node.attrs["stride"],
            padding=node.attrs["padding"],
            weights=weights[f"{node.name}.weight"],
            bias=weights.get(f"{node.name}.bias") if node.attrs.get("bias") else None,
        )
        return conv2d(x, spec)
    if node.kind == "dwconv":
        return depthwise_conv2d(x, weights[f"{node.name}.weight"], node.attrs["stride"], node.attrs["padding"])
    if node.kind == "pwconv":
        bias = weights.get(f"{node.name}.bias") if node.attrs.get("bias") else None
        return pointwise_conv2d(x, weights[f"{node.name}.weight"], bias)
    if node.kind == "bn":
        return batch_norm_infer(
            x,
            BatchNormParams(
                weights[f"{node.name}.gamma"],
                weights[f"{node.name}.beta"],
                weights[f"{node.name}.mean"],
                weights[f"{node.name}.var"],
            ),
        )
    if node.kind == "act":
        return apply_activation(x, Activation(node.attrs["activation"], node.attrs.get("slope", 0.1)))
    if node.kind == "add":
        return add(values[node.inputs[0]], values[node.inputs[1]])
    if node.kind == "sigmoid":
        return FeatureMap(sigmoid(x.data))
    raise ConfigError(f"cannot execute node kind {node.kind!r}")


def execute(
    graph: LayerGraph,
    weights: dict[str, np.ndarray],
    pseudo_image: FeatureMap,
    wanted: list[str] | None = None,
) -> dict[str, FeatureMap]:
    """Run the executable nodes, returning the wanted outputs (default: all taps)."""
    if pseudo_image.shape != graph.input_shape:
        raise ConfigError(f"graph expects input {graph.input_shape}, got {pseudo_image.shape}")
    check_weights(graph, weights)
    if wanted is None:
        wanted = list(graph.taps.values())
    keep = set(wanted)

    # Free intermediate tensors once the last consumer has run.
    remaining: dict[str, int] = {}
    for node in graph.nodes:
        if not node.executable:
            continue
        for src in node.inputs:
            remaining[src] = remaining.get(src, 0) + 1

    values: dict[str, FeatureMap] = {INPUT: pseudo_image}
    for node in graph.nodes:
        if not node.executable:
            continue
        values[node.name] = _run_node(node, values, weights)
        for src in node.inputs:
            remaining[src] -= 1
            if remaining[src] == 0 and src not in keep:
                del values[src]
    missing = [name for name in wanted if name not in values]
    if missing:
        raise ConfigError(f"requested outputs were never produced: {missing}")
    return {name: values[name] for name in wanted}


def dsconv_block_forward(
    inp: FeatureMap, params: dict[str, np.ndarray], stride: int, activation: Activation, out_channels: int | None = None
) -> FeatureMap:
    """Depthwise 3x3 -> BN -> act -> pointwise 1x1 -> BN -> act.

    params holds tensors named block.{dw,pw,bn1,bn2}.* as produced for a
    graph built by dsconv_block_graph.
    """
    out_channels = out_channels if out_channels is not None else inp.channels
    g = dsconv_block_graph(inp.shape, out_channels, stride, activation)
    return execute(g, params, inp, [g.taps["out"]])[g.taps["out"]]


def residual_block_forward(
    inp: FeatureMap, params: dict[str, np.ndarray], stride: int, activation: Activation, out_channels: int | None = None
) -> FeatureMap:
    """Two 3x3 convs with BN, identity or projection shortcut, final act."""
    out_channels = out_channels if out_channels is not None else inp.channels
    g = residual_block_graph(inp.shape, out_channels, stride, activation)
    return execute(g, params, inp, [g.taps["out"]])[g.taps["out"]]


def head_forward(stage_output: FeatureMap, params: dict[str, np.ndarray], head: str, activation: Activation) -> HeadOutput:
    """One DSConv block then parallel sigmoid score and linear regression 1x1s."""
    g = head_graph(stage_output.shape, head, activation)
    outs = execute(g, params, stage_output, [g.taps["score"], g.taps["reg"]])
    from .config import HEAD_CLASSES

    return HeadOutput(outs[g.taps["score"]], outs[g.taps["reg"]], HEAD_CLASSES[head])


def backbone_forward(
    pseudo_image: FeatureMap, graph: LayerGraph, weights: dict[str, np.ndarray]
) -> list[FeatureMap]:
    """Run stem + stages, returning the four stage outputs."""
    taps = [graph.taps[f"stage{i}"] for i in range(1, 5)]
    outs = execute(graph, weights, pseudo_image, taps)
    return [outs[t] for t in taps]


@dataclass
class Model:
    """A built network: config, grid, full layer graph and weight tensors."""

    config: ModelConfig
    grid: GridSpec
    graph: LayerGraph
    weights: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def build(
        cls,
        config: ModelConfig,
        grid: GridSpec | None = None,
        weights: dict[str, np.ndarray] | None = None,
        seed: int = 0,
    ) -> "Model":
        grid = grid or GridSpec()
        graph = build_model_graph(config, grid)
        if weights is None:
            weights = init_weights(graph, seed)
        check_weights(graph, weights)
        return cls(config, grid, graph, weights)

    def pseudo_image(self, frame: RadarFrame) -> FeatureMap:
        return encode_frame(frame, self.grid, self.config.fec, self.weights, self.config.max_points_per_pillar)

    def stage_outputs(self, frame: RadarFrame) -> list[FeatureMap]:
        return backbone_forward(self.pseudo_image(frame), self.graph, self.weights)

    def infer_frame(
        self,
        frame: RadarFrame,
        score_threshold: float = 0.05,
        iou_threshold: float = 0.3,
        per_class: bool = True,
        pre_nms_top_k: int = 512,
    ) -> list[Detection]:
        """Frame -> pseudo-image -> backbone -> heads -> decode -> NMS."""
        pseudo = self.pseudo_image(frame)
        wanted = []
        for head in self.graph.head_meta:
            wanted += [self.graph.taps[f"{head}.score"], self.graph.taps[f"{head}.reg"]]
        outs = execute(self.graph, self.weights, pseudo, wanted)
        dets: list[Detection] = []
        for head, meta in self.graph.head_meta.items():
            out = HeadOutput(
                outs[self.graph.taps[f"{head}.score"]],
                outs[self.graph.taps[f"{head}.reg"]],
                meta["classes"],
            )
            decoded = decode_boxes(out, meta["stride"], self.grid, score_threshold)
            if pre_nms_top_k and len(decoded) > pre_nms_top_k:
                decoded = [decoded[i] for i in rank_order(decoded)[:pre_nms_top_k]]
            dets.extend(decoded)
        return nms(dets, iou_threshold, per_class)
