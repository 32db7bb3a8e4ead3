"""Weight tensors: seeded initialization and the DSFW binary file format.

DSFW layout (all little-endian): magic "DSFW", u32 version = 1, u32 tensor
count; per tensor: u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
then dim-product float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import WeightsError
from .graph import LayerGraph

MAGIC = b"DSFW"
VERSION = 1


def expected_weight_names(graph: LayerGraph) -> list[str]:
    """Every tensor name the graph needs, in deterministic graph order."""
    names: list[str] = []
    for node in graph.nodes:
        if node.kind in ("conv", "dwconv", "pwconv"):
            names.append(f"{node.name}.weight")
            if node.attrs.get("bias"):
                names.append(f"{node.name}.bias")
        elif node.kind == "bn":
            names.extend(f"{node.name}.{p}" for p in ("gamma", "beta", "mean", "var"))
    return names


def _tensor_shape(graph: LayerGraph, name: str) -> tuple[int, ...]:
    node_name, leaf = name.rsplit(".", 1)
    node = graph.node(node_name)
    if node.kind == "conv":
        kh, kw = node.attrs["kernel"]
        if leaf == "weight":
            return (node.attrs["out_channels"], node.attrs["in_channels"], kh, kw)
        return (node.attrs["out_channels"],)
    if node.kind == "dwconv":
        kh, kw = node.attrs["kernel"]
        return (node.attrs["channels"], kh, kw)
    if node.kind == "pwconv":
        if leaf == "weight":
            return (node.attrs["out_channels"], node.attrs["in_channels"])
        return (node.attrs["out_channels"],)
    return (node.attrs["channels"],)  # bn


def _fan_in(graph: LayerGraph, node_name: str) -> int:
    node = graph.node(node_name)
    if node.kind == "conv":
        kh, kw = node.attrs["kernel"]
        return kh * kw * node.attrs["in_channels"]
    if node.kind == "dwconv":
        kh, kw = node.attrs["kernel"]
        return kh * kw
    return node.attrs["in_channels"]


# Score-branch bias prior: sigmoid(bias) ~= 0.01 so an untrained network
# predicts background, keeping decode/NMS loads realistic.
_SCORE_PRIOR = 0.01


def init_weights(graph: LayerGraph, seed: int = 0) -> dict[str, np.ndarray]:
    """He-style fan-in scaled normal init, deterministic in graph order."""
    rng = np.random.default_rng(seed)
    score_bias = float(-np.log((1.0 - _SCORE_PRIOR) / _SCORE_PRIOR))
    out: dict[str, np.ndarray] = {}
    for name in expected_weight_names(graph):
        node_name, leaf = name.rsplit(".", 1)
        shape = _tensor_shape(graph, name)
        if leaf == "weight":
            std = np.sqrt(2.0 / _fan_in(graph, node_name))
            out[name] = rng.normal(0.0, std, size=shape).astype(np.float32)
        elif leaf == "bias" and node_name.endswith(".score"):
            out[name] = np.full(shape, score_bias, dtype=np.float32)
        elif leaf in ("bias", "beta", "mean"):
            out[name] = np.zeros(shape, dtype=np.float32)
        else:  # gamma, var
            out[name] = np.ones(shape, dtype=np.float32)
    return out


def missing_weights(graph: LayerGraph, weights: dict[str, np.ndarray]) -> list[str]:
    return [n for n in expected_weight_names(graph) if n not in weights]


def check_weights(graph: LayerGraph, weights: dict[str, np.ndarray]) -> None:
    missing = missing_weights(graph, weights)
    if missing:
        raise WeightsError(f"missing weight tensors: {', '.join(missing)}")
    for name in expected_weight_names(graph):
        got = tuple(weights[name].shape)
        want = _tensor_shape(graph, name)
        if got != want:
            raise WeightsError(f"weight tensor {name} has shape {got}, expected {want}")


def dump_weights_bytes(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4").tobytes())
    return b"".join(chunks)


def parse_weights_bytes(blob: bytes, source: str = "<memory>") -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise WeightsError(f"{source}: bad magic bytes {blob[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, count = struct.unpack_from("<II", blob, off)
        off += 8
        if version != VERSION:
            raise WeightsError(f"{source}: unsupported weight file version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
            off += 4 * n
            tensors[name] = np.ascontiguousarray(arr, dtype=np.float32)
    except (struct.error, ValueError) as exc:
        raise WeightsError(f"{source}: truncated or corrupt weight file: {exc}") from None
    if off != len(blob):
        raise WeightsError(f"{source}: {len(blob) - off} trailing bytes after last tensor")
    return tensors


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_weights_bytes(tensors))


def load_weights(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise WeightsError(f"cannot read weight file {path}: {exc}") from None
    return parse_weights_bytes(blob, source=str(path))
