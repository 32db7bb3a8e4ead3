"""Dense tensor kernels the rest of the network is built from.

Feature maps are height x width x channels float32 arrays, channels
innermost (row-major HWC). Convolutions are implemented as im2col plus a
single matrix multiply so BLAS does the accumulation; a naive loop
reference lives in the test suite and everything here is checked against
it. All operations are pure: they never mutate their inputs and the same
inputs always produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError

ACTIVATION_KINDS = ("relu", "leaky_relu", "swish", "mish", "identity")


def _as_f32(arr) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(arr, dtype=np.float32))


@dataclass(frozen=True)
class FeatureMap:
    """One dense activation tensor of shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.ndim != 3:
            raise ConfigError("feature map data must be a 3-d array (H, W, C)")
        if arr.dtype != np.float32 or not arr.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "data", _as_f32(arr))
        if min(self.data.shape) < 1:
            raise ConfigError(f"feature map has a zero-sized axis: {self.data.shape}")

    @classmethod
    def from_array(cls, arr) -> "FeatureMap":
        return cls(_as_f32(arr))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "FeatureMap":
        return cls(np.zeros((height, width, channels), dtype=np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ConvSpec:
    """Standard convolution parameters; weights laid out [out][in][kh][kw]."""

    kernel: tuple[int, int]
    in_channels: int
    out_channels: int
    stride: int = 1
    padding: str = "same"
    weights: np.ndarray = field(default=None)
    bias: np.ndarray | None = None

    def __post_init__(self):
        kh, kw = self.kernel
        if kh < 1 or kw < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("conv kernel and channel counts must be positive")
        if self.stride < 1:
            raise ConfigError("conv stride must be positive")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"unknown padding {self.padding!r}")
        w = _as_f32(self.weights)
        expect = (self.out_channels, self.in_channels, kh, kw)
        if w.shape != expect:
            raise ConfigError(f"conv weights shape {w.shape} != {expect}")
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = _as_f32(self.bias).reshape(-1)
            if b.shape != (self.out_channels,):
                raise ConfigError(f"conv bias length {b.shape[0]} != {self.out_channels}")
            object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-mode batch norm: y = gamma * (x - mean) / sqrt(var + eps) + beta."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "running_mean", "running_var"):
            object.__setattr__(self, name, _as_f32(getattr(self, name)).reshape(-1))
        n = self.gamma.shape[0]
        if any(getattr(self, f).shape[0] != n for f in ("beta", "running_mean", "running_var")):
            raise ConfigError("batch norm parameter arrays must share one length")
        if self.epsilon <= 0:
            raise ConfigError("batch norm epsilon must be positive")
        if np.any(self.running_var < 0):
            raise ConfigError("batch norm running variance must be non-negative")

    @classmethod
    def identity(cls, channels: int, epsilon: float = 1e-5) -> "BatchNormParams":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), epsilon)


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity; slope only applies to leaky_relu."""

    kind: str = "relu"
    slope: float = 0.1

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ConfigError(f"unknown activation {self.kind!r} (expected one of {ACTIVATION_KINDS})")
        if self.kind == "leaky_relu" and not (0.0 < self.slope < 1.0):
            raise ConfigError(f"leaky_relu slope must be in (0, 1), got {self.slope}")


RELU = Activation("relu")
IDENTITY = Activation("identity")


def conv_axis_geometry(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Output size and (before, after) zero padding along one spatial axis.

    "same" keeps ceil(size / stride) outputs; any odd padding surplus goes
    to the bottom/right edge.
    """
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        before = total // 2
        return out, before, total - before
    if size < k:
        raise ConfigError(f"valid padding needs input >= kernel, got {size} < {k}")
    return (size - k) // stride + 1, 0, 0


def _padded(data: np.ndarray, kh: int, kw: int, stride: int, padding: str):
    h, w = data.shape[:2]
    ho, top, bottom = conv_axis_geometry(h, kh, stride, padding)
    wo, left, right = conv_axis_geometry(w, kw, stride, padding)
    if top or bottom or left or right:
        data = np.pad(data, ((top, bottom), (left, right), (0, 0)))
    return data, ho, wo


def conv2d(inp: FeatureMap, spec: ConvSpec, acc_dtype=np.float32) -> FeatureMap:
    """Standard k x k convolution (im2col + matmul).

    acc_dtype widens the accumulation for tight-tolerance reference runs;
    deployment numerics stay float32.
    """
    if inp.channels != spec.in_channels:
        raise ConfigError(f"conv expects {spec.in_channels} input channels, got {inp.channels}")
    kh, kw = spec.kernel
    x, ho, wo = _padded(inp.data, kh, kw, spec.stride, spec.padding)
    win = sliding_window_view(x, (kh, kw), axis=(0, 1))[:: spec.stride, :: spec.stride]
    # (ho, wo, C, kh, kw) -> rows flattened in (u, v, cin) order to match the
    # weight matrix below.
    patches = win.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * spec.in_channels)
    wmat = spec.weights.transpose(2, 3, 1, 0).reshape(kh * kw * spec.in_channels, spec.out_channels)
    out = patches.astype(acc_dtype, copy=False) @ wmat.astype(acc_dtype, copy=False)
    if spec.bias is not None:
        out = out + spec.bias.astype(acc_dtype, copy=False)
    return FeatureMap(_as_f32(out.reshape(ho, wo, spec.out_channels)))


def depthwise_conv2d(
    inp: FeatureMap,
    kernels: np.ndarray,
    stride: int = 1,
    padding: str = "same",
    acc_dtype=np.float32,
) -> FeatureMap:
    """Per-channel k x k convolution; kernels laid out [channel][kh][kw]."""
    kernels = _as_f32(kernels)
    if kernels.ndim != 3 or kernels.shape[0] != inp.channels:
        raise ConfigError(
            f"depthwise needs one kernel per channel: kernels {kernels.shape}, input channels {inp.channels}"
        )
    if stride < 1:
        raise ConfigError("depthwise stride must be positive")
    kh, kw = kernels.shape[1:]
    x, ho, wo = _padded(inp.data, kh, kw, stride, padding)
    x = x.astype(acc_dtype, copy=False)
    k = kernels.astype(acc_dtype, copy=False)
    out = np.zeros((ho, wo, inp.channels), dtype=acc_dtype)
    for u in range(kh):
        for v in range(kw):
            out += x[u : u + (ho - 1) * stride + 1 : stride, v : v + (wo - 1) * stride + 1 : stride, :] * k[:, u, v]
    return FeatureMap(_as_f32(out))


def pointwise_conv2d(
    inp: FeatureMap, weights: np.ndarray, bias: np.ndarray | None = None, acc_dtype=np.float32
) -> FeatureMap:
    """1x1 convolution: every pixel is mapped by the same [out][in] matrix."""
    weights = _as_f32(weights)
    if weights.ndim != 2 or weights.shape[1] != inp.channels:
        raise ConfigError(f"pointwise weights {weights.shape} do not match {inp.channels} input channels")
    h, w, c = inp.shape
    out = inp.data.reshape(h * w, c).astype(acc_dtype, copy=False) @ weights.T.astype(acc_dtype, copy=False)
    if bias is not None:
        b = _as_f32(bias).reshape(-1)
        if b.shape[0] != weights.shape[0]:
            raise ConfigError(f"pointwise bias length {b.shape[0]} != {weights.shape[0]}")
        out = out + b.astype(acc_dtype, copy=False)
    return FeatureMap(_as_f32(out.reshape(h, w, weights.shape[0])))


def batch_norm_infer(inp: FeatureMap, params: BatchNormParams) -> FeatureMap:
    if params.gamma.shape[0] != inp.channels:
        raise ConfigError(f"batch norm is sized for {params.gamma.shape[0]} channels, input has {inp.channels}")
    inv = params.gamma / np.sqrt(params.running_var + np.float32(params.epsilon))
    return FeatureMap((inp.data - params.running_mean) * inv + params.beta)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, float32 in/out."""
    x = np.asarray(x, dtype=np.float32)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(inp: FeatureMap, act: Activation) -> FeatureMap:
    x = inp.data
    if act.kind == "identity":
        return FeatureMap(x.copy())
    if act.kind == "relu":
        return FeatureMap(np.maximum(x, np.float32(0.0)))
    if act.kind == "leaky_relu":
        return FeatureMap(np.where(x >= 0, x, np.float32(act.slope) * x))
    if act.kind == "swish":
        return FeatureMap(x * sigmoid(x))
    # mish: x * tanh(softplus(x)), softplus via logaddexp for stability
    return FeatureMap(x * np.tanh(np.logaddexp(np.float32(0.0), x)))


def add(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    if a.shape != b.shape:
        raise ConfigError(f"elementwise add needs matching shapes, got {a.shape} and {b.shape}")
    return FeatureMap(a.data + b.data)
