"""Layer graphs: ordered node lists with shape metadata and skip edges.

One graph drives everything downstream: the executor walks it to run
inference, the analyzer walks it to count parameters, FLOPs and activation
memory, and the tests audit it (block counts, activation assignment, no
batch norm in the encoder stack).

Node naming is deterministic: stem.conv1, stage{i}.block{j}.{sublayer},
head_{name}.{sublayer}, fec.conv{k}. Encoder nodes are analysis-only: at
runtime they run per pillar on the sparse path, so they are flagged
non-executable and carry a per-cell capacity multiplier (max points per
pillar for the per-point convolution) used by the static cost model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import HEAD_CLASSES, HEAD_STAGES, REGRESSION_CHANNELS, ModelConfig
from .encoder import GridSpec
from .errors import ConfigError
from .tensor import Activation, conv_axis_geometry

INPUT = "input"


@dataclass(frozen=True)
class LayerNode:
    name: str
    kind: str  # conv | dwconv | pwconv | bn | act | add | sigmoid | reduce_max
    inputs: tuple[str, ...]
    out_shape: tuple[int, int, int]  # (H, W, C)
    attrs: dict = field(default_factory=dict)
    executable: bool = True
    # Per-cell population for analysis-only encoder rows (points per pillar).
    capacity_multiplier: int = 1


@dataclass
class LayerGraph:
    input_shape: tuple[int, int, int]
    nodes: list[LayerNode] = field(default_factory=list)
    taps: dict[str, str] = field(default_factory=dict)
    head_meta: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        self._by_name = {n.name: n for n in self.nodes}
        if len(self._by_name) != len(self.nodes):
            raise ConfigError("duplicate node names in layer graph")
        seen = {INPUT}
        for node in self.nodes:
            missing = [s for s in node.inputs if s not in seen]
            if missing:
                raise ConfigError(f"node {node.name} consumes {missing} before they are produced")
            seen.add(node.name)

    def node(self, name: str) -> LayerNode:
        return self._by_name[name]

    def nodes_of_kind(self, *kinds: str) -> list[LayerNode]:
        return [n for n in self.nodes if n.kind in kinds]

    def shape_of(self, name: str) -> tuple[int, int, int]:
        return self.input_shape if name == INPUT else self._by_name[name].out_shape


class _Builder:
    """Appends nodes, tracking the running output name and shape."""

    def __init__(self, input_shape: tuple[int, int, int]):
        self.input_shape = input_shape
        self.nodes: list[LayerNode] = []

    def append(self, node: LayerNode) -> str:
        self.nodes.append(node)
        return node.name

    def conv(self, name, src, shape, out_ch, kernel=(3, 3), stride=1, bias=False):
        h, w, c = shape
        ho, _, _ = conv_axis_geometry(h, kernel[0], stride, "same")
        wo, _, _ = conv_axis_geometry(w, kernel[1], stride, "same")
        out = (ho, wo, out_ch)
        self.append(
            LayerNode(
                name,
                "conv",
                (src,),
                out,
                {"kernel": kernel, "stride": stride, "padding": "same", "in_channels": c, "out_channels": out_ch, "bias": bias},
            )
        )
        return name, out

    def dwconv(self, name, src, shape, kernel=(3, 3), stride=1):
        h, w, c = shape
        ho, _, _ = conv_axis_geometry(h, kernel[0], stride, "same")
        wo, _, _ = conv_axis_geometry(w, kernel[1], stride, "same")
        out = (ho, wo, c)
        self.append(
            LayerNode(name, "dwconv", (src,), out, {"kernel": kernel, "stride": stride, "padding": "same", "channels": c})
        )
        return name, out

    def pwconv(self, name, src, shape, out_ch, bias=False):
        h, w, _ = shape
        out = (h, w, out_ch)
        self.append(LayerNode(name, "pwconv", (src,), out, {"in_channels": shape[2], "out_channels": out_ch, "bias": bias}))
        return name, out

    def bn(self, name, src, shape):
        self.append(LayerNode(name, "bn", (src,), shape, {"channels": shape[2]}))
        return name, shape

    def act(self, name, src, shape, activation: Activation, site: str):
        self.append(
            LayerNode(name, "act", (src,), shape, {"activation": activation.kind, "slope": activation.slope, "site": site})
        )
        return name, shape

    def add(self, name, a, b, shape):
        self.append(LayerNode(name, "add", (a, b), shape))
        return name, shape

    def sigmoid(self, name, src, shape):
        self.append(LayerNode(name, "sigmoid", (src,), shape))
        return name, shape


def _dsconv_block(b: _Builder, prefix: str, src: str, shape, out_ch: int, stride: int, act: Activation, site: str):
    name, shape = b.dwconv(f"{prefix}.dw", src, shape, stride=stride)
    name, shape = b.bn(f"{prefix}.bn1", name, shape)
    name, shape = b.act(f"{prefix}.act1", name, shape, act, site)
    name, shape = b.pwconv(f"{prefix}.pw", name, shape, out_ch)
    name, shape = b.bn(f"{prefix}.bn2", name, shape)
    name, shape = b.act(f"{prefix}.act2", name, shape, act, site)
    return name, shape


def _residual_block(b: _Builder, prefix: str, src: str, shape, out_ch: int, stride: int, act: Activation, site: str):
    in_shape = shape
    name, shape = b.conv(f"{prefix}.conv1", src, shape, out_ch, stride=stride)
    name, shape = b.bn(f"{prefix}.bn1", name, shape)
    name, shape = b.act(f"{prefix}.act1", name, shape, act, site)
    name, shape = b.conv(f"{prefix}.conv2", name, shape, out_ch, stride=1)
    name, shape = b.bn(f"{prefix}.bn2", name, shape)
    if stride != 1 or in_shape[2] != out_ch:
        shortcut, _ = b.conv(f"{prefix}.proj", src, in_shape, out_ch, kernel=(1, 1), stride=stride)
    else:
        shortcut = src
    name, shape = b.add(f"{prefix}.add", name, shortcut, shape)
    name, shape = b.act(f"{prefix}.act2", name, shape, act, site)
    return name, shape


def _head(b: _Builder, head: str, src: str, shape, act: Activation):
    channels = shape[2]
    name, hs = _dsconv_block(b, f"{head}.block1", src, shape, channels, 1, act, head)
    logits, ls = b.pwconv(f"{head}.score", name, hs, len(HEAD_CLASSES[head]), bias=True)
    score, _ = b.sigmoid(f"{head}.score_sigmoid", logits, ls)
    reg, _ = b.pwconv(f"{head}.reg", name, hs, REGRESSION_CHANNELS, bias=True)
    return score, reg


def _encoder_rows(config: ModelConfig, grid: GridSpec) -> list[LayerNode]:
    """Analysis-only rows for the encoder stack at dense grid capacity.

    The per-point convolution and its ReLU are sized for every pillar
    holding max_points_per_pillar points, matching what a dense deployment
    graph of the encoder computes.
    """
    d = 3 + config.point_feature_channels + 2
    f1, f2, f3 = config.fec.f1, config.fec.f2, config.fec.f3
    rows, cols = grid.rows, grid.cols
    n = config.max_points_per_pillar
    relu = {"activation": "relu", "slope": 0.1, "site": "fec"}

    def node(name, kind, inputs, c, attrs=None, mult=1):
        return LayerNode(name, kind, inputs, (rows, cols, c), attrs or {}, executable=False, capacity_multiplier=mult)

    return [
        node("fec.conv1", "pwconv", (), f1, {"in_channels": d, "out_channels": f1, "bias": True}, mult=n),
        node("fec.act1", "act", ("fec.conv1",), f1, dict(relu), mult=n),
        node("fec.maxpool", "reduce_max", ("fec.act1",), f1, {"reduced": n}, mult=n),
        node("fec.conv2", "pwconv", ("fec.maxpool",), f2, {"in_channels": f1, "out_channels": f2, "bias": True}),
        node("fec.act2", "act", ("fec.conv2",), f2, dict(relu)),
        node("fec.conv3", "pwconv", ("fec.act2",), f3, {"in_channels": f2, "out_channels": f3, "bias": True}),
        node("fec.act3", "act", ("fec.conv3",), f3, dict(relu)),
    ]


def build_backbone_graph(config: ModelConfig, grid: GridSpec | None = None) -> LayerGraph:
    """Stem plus the four stages; stage i opens with its stride-s_i block."""
    grid = grid or GridSpec()
    input_shape = (grid.rows, grid.cols, config.fec.f3)
    b = _Builder(input_shape)

    name, shape = b.conv("stem.conv1", INPUT, input_shape, config.stem_filters, stride=1)
    name, shape = b.bn("stem.bn1", name, shape)
    name, shape = b.act("stem.act1", name, shape, config.activations["stem"], "stem")
    if config.block_kind == "residual":
        name, shape = b.conv("stem.conv2", name, shape, config.stem_filters, stride=1)
        name, shape = b.bn("stem.bn2", name, shape)
        name, shape = b.act("stem.act2", name, shape, config.activations["stem"], "stem")

    block = _residual_block if config.block_kind == "residual" else _dsconv_block
    taps = {}
    for i in range(4):
        stage = i + 1
        for j in range(config.blocks_per_stage[i]):
            stride = config.stage_strides[i] if j == 0 else 1
            name, shape = block(
                b, f"stage{stage}.block{j + 1}", name, shape, config.stage_widths[i], stride,
                config.activations["backbone"], "backbone",
            )
        taps[f"stage{stage}"] = name
    return LayerGraph(input_shape, b.nodes, taps)


def build_model_graph(config: ModelConfig, grid: GridSpec | None = None) -> LayerGraph:
    """Full network: encoder capacity rows, backbone, three detection heads."""
    grid = grid or GridSpec()
    backbone = build_backbone_graph(config, grid)
    b = _Builder(backbone.input_shape)
    b.nodes = list(_encoder_rows(config, grid)) + list(backbone.nodes)
    taps = dict(backbone.taps)
    head_meta = {}
    for head, stage in HEAD_STAGES.items():
        src = taps[f"stage{stage}"]
        shape = backbone.shape_of(src)
        score, reg = _head(b, head, src, shape, config.activations[head])
        taps[f"{head}.score"] = score
        taps[f"{head}.reg"] = reg
        stride = 1
        for s in config.stage_strides[:stage]:
            stride *= s
        head_meta[head] = {"stage": stage, "stride": stride, "classes": HEAD_CLASSES[head]}
    return LayerGraph(backbone.input_shape, b.nodes, taps, head_meta)


def dsconv_block_graph(in_shape, out_channels: int, stride: int, activation: Activation) -> LayerGraph:
    b = _Builder(tuple(in_shape))
    name, _ = _dsconv_block(b, "block", INPUT, tuple(in_shape), out_channels, stride, activation, "backbone")
    return LayerGraph(tuple(in_shape), b.nodes, {"out": name})


def residual_block_graph(in_shape, out_channels: int, stride: int, activation: Activation) -> LayerGraph:
    b = _Builder(tuple(in_shape))
    name, _ = _residual_block(b, "block", INPUT, tuple(in_shape), out_channels, stride, activation, "backbone")
    return LayerGraph(tuple(in_shape), b.nodes, {"out": name})


def head_graph(in_shape, head: str, activation: Activation) -> LayerGraph:
    if head not in HEAD_CLASSES:
        raise ConfigError(f"unknown head {head!r}; choose from {sorted(HEAD_CLASSES)}")
    b = _Builder(tuple(in_shape))
    score, reg = _head(b, head, INPUT, tuple(in_shape), activation)
    return LayerGraph(tuple(in_shape), b.nodes, {"score": score, "reg": reg})
