"""Reference tensor numerics on float64 NCHW arrays.

Direct convolution, batch-norm folding, large-kernel branch fusion, and a
matmul helper, all instrumented for exact multiply-accumulate accounting.

MAC convention (used consistently by :mod:`detlab.costs`): one MAC is one
multiply+add inside a convolution or matrix multiplication. Biases,
activations, per-channel affine transforms, softmax, and residual adds are
not counted. Convolutions operate on zero-padded inputs, so padded taps
count like any other (this is what makes the closed-form block costs
exact integers).
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeMismatchError

__all__ = [
    "ConvSpec",
    "MacCounter",
    "count_macs",
    "conv2d_ref",
    "conv_output_size",
    "matmul",
    "bn_fold",
    "reparam_fuse_lk",
]


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a 2-D convolution layer."""

    c_in: int
    c_out: int
    kernel: int
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        if min(self.c_in, self.c_out, self.kernel, self.stride, self.groups) < 1:
            raise ValueError(f"conv dims must be positive: {self}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative: {self}")
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ValueError(f"channels not divisible by groups: {self}")

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.c_in == self.c_out

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in // self.groups, self.kernel, self.kernel)


class MacCounter:
    """Mutable tally of multiply-accumulate operations."""

    __slots__ = ("total",)

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += n


_active_counters: contextvars.ContextVar[tuple[MacCounter, ...]] = contextvars.ContextVar(
    "detlab_mac_counters", default=()
)


@contextlib.contextmanager
def count_macs():
    """Context manager that tallies MACs executed by ops under it.

    Counters nest: every active counter sees every op. Uses a context
    variable, so concurrent threads count independently.
    """
    counter = MacCounter()
    stack = _active_counters.get()
    token = _active_counters.set(stack + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


def _record_macs(n: int) -> None:
    for counter in _active_counters.get():
        counter.add(n)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _as_f64(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def conv2d_ref(
    x: np.ndarray,
    w: np.ndarray,
    bias: np.ndarray | None = None,
    spec: ConvSpec | None = None,
) -> np.ndarray:
    """Direct (naive-loop) cross-correlation with zero padding.

    Args:
        x: input activations, shape (N, C_in, H, W).
        w: weights, shape (C_out, C_in // groups, K, K).
        bias: optional per-output-channel bias, shape (C_out,).
        spec: layer description; inferred as a dense stride-1, pad-0 conv
            from the weight shape when omitted.

    Output spatial size is floor((H + 2*pad - K) / stride) + 1.
    """
    x = _as_f64(x)
    w = _as_f64(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatchError(f"conv2d_ref expects 4-D input/weight, got {x.shape} and {w.shape}")
    if spec is None:
        spec = ConvSpec(c_in=w.shape[1], c_out=w.shape[0], kernel=w.shape[2])
    if w.shape != spec.weight_shape:
        raise ShapeMismatchError(f"weight shape {w.shape} != {spec.weight_shape} required by {spec}")
    if x.shape[1] != spec.c_in:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, spec wants {spec.c_in}")
    if w.shape[2] != w.shape[3]:
        raise ShapeMismatchError(f"only square kernels are supported, got {w.shape}")
    h_out = conv_output_size(x.shape[2], spec.kernel, spec.stride, spec.padding)
    w_out = conv_output_size(x.shape[3], spec.kernel, spec.stride, spec.padding)
    if h_out < 1 or w_out < 1:
        raise ShapeMismatchError(f"empty output for input {x.shape} under {spec}")
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (spec.c_out,):
            raise ShapeMismatchError(f"bias shape {bias.shape} != ({spec.c_out},)")

    p = spec.padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    out, macs = _kernels.conv2d_direct(xp, w, spec.stride, spec.groups)
    _record_macs(macs)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` with MAC accounting (supports broadcast batching)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    _record_macs(math.prod(batch) * a.shape[-2] * a.shape[-1] * b.shape[-1])
    return a @ b


def bn_fold(
    w: np.ndarray,
    bias: np.ndarray | None,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray]:
    """Fold per-channel batch-norm statistics into conv weights.

    Returns (w', b') such that conv(x; w', b') == BN(conv(x; w, bias)) for
    every input, with BN(y) = gamma * (y - mean) / sqrt(var + eps) + beta.
    """
    w = np.asarray(w, dtype=np.float64)
    c_out = w.shape[0]
    stats = [np.asarray(v, dtype=np.float64) for v in (gamma, beta, mean, var)]
    for name, v in zip(("gamma", "beta", "mean", "var"), stats):
        if v.shape != (c_out,):
            raise ShapeMismatchError(f"{name} shape {v.shape} != ({c_out},)")
    gamma, beta, mean, var = stats
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    if bias is None:
        bias = np.zeros(c_out, dtype=np.float64)
    else:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (c_out,):
            raise ShapeMismatchError(f"bias shape {bias.shape} != ({c_out},)")
    scale = gamma / np.sqrt(var + eps)
    w_folded = w * scale.reshape(-1, *([1] * (w.ndim - 1)))
    b_folded = (bias - mean) * scale + beta
    return w_folded, b_folded


def reparam_fuse_lk(dw7: np.ndarray, dw3: np.ndarray) -> np.ndarray:
    """Fuse a parallel 3x3 depthwise branch into a 7x7 depthwise weight.

    The 3x3 kernel is zero-padded to 7x7, centered, and added, so a single
    7x7 conv at padding 3 equals the sum of the 7x7 (pad 3) and 3x3 (pad 1)
    branch convolutions for every input.
    """
    dw7 = np.asarray(dw7, dtype=np.float64)
    dw3 = np.asarray(dw3, dtype=np.float64)
    if dw7.ndim != 4 or dw7.shape[1:] != (1, 7, 7):
        raise ShapeMismatchError(f"expected (C, 1, 7, 7) weight, got {dw7.shape}")
    if dw3.ndim != 4 or dw3.shape[1:] != (1, 3, 3):
        raise ShapeMismatchError(f"expected (C, 1, 3, 3) weight, got {dw3.shape}")
    if dw7.shape[0] != dw3.shape[0]:
        raise ShapeMismatchError(f"channel counts differ: {dw7.shape[0]} vs {dw3.shape[0]}")
    fused = dw7.copy()
    fused[:, :, 2:5, 2:5] += dw3
    return fused
