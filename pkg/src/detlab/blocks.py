"""Reference forward passes for the detector building blocks.

Blocks are described by :class:`BlockSpec` and evaluated by
:func:`forward_block` on float64 NCHW inputs with explicit weight
dictionaries (see :func:`block_weight_shapes` for the expected keys).
Batch-norm statistics are assumed pre-folded into the conv weights, so a
"conv" here is conv(+bias)(+activation).

Structure conventions (fixed and documented, since they pin the cost
model):

* ``std_downsample``: 3x3 stride-2 conv, C -> 2C, activation.
* ``scd_downsample``: 1x1 conv C -> 2C (activation), then 3x3 stride-2
  depthwise conv (activation); channel growth decoupled from the spatial
  reduction.
* ``cls_head_standard``: two 3x3 C -> C convs (activation each), then a
  1x1 projection to class logits (linear).
* ``cls_head_light``: two depthwise-separable 3x3 convs (depthwise +
  pointwise, activation each), then the same 1x1 projection (linear).
* ``irb``: inverted residual bottleneck with expansion 2: 1x1 expand
  (act) -> 3x3 depthwise (act) -> 1x1 linear projection; residual add.
* ``irb_dw``: ``irb`` with a trailing 3x3 depthwise conv (act).
* ``cib``: ``irb_dw`` with an extra leading 3x3 depthwise conv (act); all
  spatial mixing depthwise, all channel mixing pointwise.
* ``lk_cib``: ``cib`` with the middle depthwise kernel enlarged to 7x7;
  during training an optional parallel 3x3 depthwise branch
  (``mid_dw_branch3``) is summed with it, and
  :func:`detlab.tensor_ops.reparam_fuse_lk` folds that branch away for
  deployment.
* ``psa``: 1x1 conv C -> C (linear), split channels in half, run the
  first half through ``n_psa`` blocks of (MHSA -> FFN with expansion 2)
  with per-channel affine pre-norms and residual adds, concatenate with
  the untouched half, fuse with a 1x1 conv (activation). Attention uses
  query/key dims half the value dim, max(1, C/2/64) heads, and no
  positional encoding.

The default activation is SiLU (x * sigmoid(x)); "relu" and "identity"
are also accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalError, OddChannelsError, ShapeMismatchError
from .tensor_ops import ConvSpec, conv2d_ref, matmul

__all__ = [
    "BLOCK_KINDS",
    "BlockSpec",
    "psa_attention_dims",
    "block_weight_shapes",
    "init_block_weights",
    "forward_block",
    "mhsa_forward",
    "softmax",
]

BLOCK_KINDS = (
    "std_downsample",
    "scd_downsample",
    "cls_head_standard",
    "cls_head_light",
    "irb",
    "irb_dw",
    "cib",
    "lk_cib",
    "psa",
)

_HEAD_KINDS = ("cls_head_standard", "cls_head_light")
_DOWNSAMPLE_KINDS = ("std_downsample", "scd_downsample")


def psa_attention_dims(channels: int) -> tuple[int, int, int]:
    """(heads, value_dim, qk_dim) for the attended half of a PSA block."""
    if channels % 2:
        raise OddChannelsError(f"psa needs an even channel count, got {channels}")
    half = channels // 2
    heads = max(1, half // 64)
    if half % heads:
        raise ShapeMismatchError(f"attended channels {half} not divisible by {heads} heads")
    d_v = half // heads
    if d_v % 2:
        raise ShapeMismatchError(f"per-head value dim {d_v} must be even (qk dim is half of it)")
    return heads, d_v, d_v // 2


@dataclass(frozen=True)
class BlockSpec:
    """A block kind plus the dimensions needed to size it."""

    kind: str
    h: int
    w: int
    c: int
    num_classes: int | None = None
    n_psa: int = 1

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if min(self.h, self.w, self.c) < 1:
            raise ValueError(f"dims must be positive: {self}")
        if self.kind in _DOWNSAMPLE_KINDS and (self.h % 2 or self.w % 2):
            raise ValueError(f"{self.kind} needs even spatial dims, got {self.h}x{self.w}")
        if self.kind in _HEAD_KINDS:
            if self.num_classes is None or self.num_classes < 1:
                raise ValueError(f"{self.kind} needs a positive num_classes")
        if self.kind == "psa":
            if self.n_psa < 1:
                raise ValueError(f"n_psa must be positive, got {self.n_psa}")
            psa_attention_dims(self.c)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; rows along ``axis`` sum to 1."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _activation(name: str):
    if name == "silu":
        return lambda x: x / (1.0 + np.exp(-x))
    if name == "relu":
        return lambda x: np.maximum(x, 0.0)
    if name == "identity":
        return lambda x: x
    raise ValueError(f"unknown activation {name!r}")


def block_weight_shapes(spec: BlockSpec) -> dict[str, tuple[int, ...]]:
    """Expected weight-dict keys and shapes for a block (biases excluded).

    Every conv weight ``name`` may be accompanied by an optional
    ``name_bias`` vector of length C_out. ``lk_cib`` additionally accepts
    the optional training-time branch ``mid_dw_branch3``.
    """
    c, nc = spec.c, spec.num_classes
    if spec.kind == "std_downsample":
        return {"conv": (2 * c, c, 3, 3)}
    if spec.kind == "scd_downsample":
        return {"pw": (2 * c, c, 1, 1), "dw": (2 * c, 1, 3, 3)}
    if spec.kind == "cls_head_standard":
        return {"conv1": (c, c, 3, 3), "conv2": (c, c, 3, 3), "proj": (nc, c, 1, 1)}
    if spec.kind == "cls_head_light":
        return {
            "dw1": (c, 1, 3, 3),
            "pw1": (c, c, 1, 1),
            "dw2": (c, 1, 3, 3),
            "pw2": (c, c, 1, 1),
            "proj": (nc, c, 1, 1),
        }
    if spec.kind == "irb":
        return {"expand": (2 * c, c, 1, 1), "dw": (2 * c, 1, 3, 3), "project": (c, 2 * c, 1, 1)}
    if spec.kind == "irb_dw":
        return {
            "expand": (2 * c, c, 1, 1),
            "dw": (2 * c, 1, 3, 3),
            "project": (c, 2 * c, 1, 1),
            "tail_dw": (c, 1, 3, 3),
        }
    if spec.kind in ("cib", "lk_cib"):
        mid_k = 7 if spec.kind == "lk_cib" else 3
        return {
            "head_dw": (c, 1, 3, 3),
            "expand": (2 * c, c, 1, 1),
            "mid_dw": (2 * c, 1, mid_k, mid_k),
            "project": (c, 2 * c, 1, 1),
            "tail_dw": (c, 1, 3, 3),
        }
    if spec.kind == "psa":
        half = c // 2
        heads, _d_v, d_qk = psa_attention_dims(c)
        shapes: dict[str, tuple[int, ...]] = {"pw_in": (c, c, 1, 1), "pw_fuse": (c, c, 1, 1)}
        for b in range(spec.n_psa):
            pfx = f"blk{b}_"
            shapes[pfx + "norm1_scale"] = (half,)
            shapes[pfx + "norm1_shift"] = (half,)
            shapes[pfx + "wq"] = (heads * d_qk, half, 1, 1)
            shapes[pfx + "wk"] = (heads * d_qk, half, 1, 1)
            shapes[pfx + "wv"] = (half, half, 1, 1)
            shapes[pfx + "wo"] = (half, half, 1, 1)
            shapes[pfx + "norm2_scale"] = (half,)
            shapes[pfx + "norm2_shift"] = (half,)
            shapes[pfx + "ffn1"] = (2 * half, half, 1, 1)
            shapes[pfx + "ffn2"] = (half, 2 * half, 1, 1)
        return shapes
    raise ValueError(f"unknown block kind {spec.kind!r}")


def init_block_weights(spec: BlockSpec, rng: np.random.Generator, scale: float = 0.1) -> dict[str, np.ndarray]:
    """Random weights (and biases) with the shapes the block expects."""
    weights: dict[str, np.ndarray] = {}
    for name, shape in block_weight_shapes(spec).items():
        if name.endswith("_scale"):
            weights[name] = 1.0 + scale * rng.standard_normal(shape)
        elif name.endswith("_shift"):
            weights[name] = scale * rng.standard_normal(shape)
        else:
            weights[name] = scale * rng.standard_normal(shape)
            weights[name + "_bias"] = scale * rng.standard_normal(shape[0])
    return weights


def _take(weights, name: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        w = np.asarray(weights[name], dtype=np.float64)
    except KeyError:
        raise ShapeMismatchError(f"missing block weight {name!r}") from None
    if w.shape != shape:
        raise ShapeMismatchError(f"weight {name!r} has shape {w.shape}, expected {shape}")
    return w


def _bias(weights, name: str, c_out: int) -> np.ndarray | None:
    b = weights.get(name + "_bias")
    if b is None:
        return None
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (c_out,):
        raise ShapeMismatchError(f"bias {name + '_bias'!r} has shape {b.shape}, expected ({c_out},)")
    return b


def _conv(x, weights, name, spec: ConvSpec, act=None):
    w = _take(weights, name, spec.weight_shape)
    out = conv2d_ref(x, w, _bias(weights, name, spec.c_out), spec)
    return act(out) if act is not None else out


def _affine(x, weights, prefix: str, channels: int) -> np.ndarray:
    scale = _take(weights, prefix + "_scale", (channels,))
    shift = _take(weights, prefix + "_shift", (channels,))
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def mhsa_forward(
    x: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    wo: np.ndarray,
    heads: int,
    biases: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Multi-head self-attention over the spatial positions of an NCHW map.

    Projections are 1x1 convs; attention weights are softmax(q^T k /
    sqrt(d_qk)) over key positions. With all-zero q/k weights the attention
    is uniform and each output position sees the spatial mean of the
    projected values.
    """
    n, c, h, w = x.shape
    if c % heads:
        raise ShapeMismatchError(f"channels {c} not divisible by {heads} heads")
    d_v = c // heads
    d_qk_total = np.asarray(wq).shape[0]
    if d_qk_total % heads:
        raise ShapeMismatchError(f"query dim {d_qk_total} not divisible by {heads} heads")
    d_qk = d_qk_total // heads
    t = h * w
    biases = biases or {}

    def proj(name, weight, c_out):
        spec = ConvSpec(c_in=c, c_out=c_out, kernel=1)
        return conv2d_ref(x, np.asarray(weight, dtype=np.float64), biases.get(name), spec)

    q = proj("wq", wq, heads * d_qk).reshape(n, heads, d_qk, t)
    k = proj("wk", wk, heads * d_qk).reshape(n, heads, d_qk, t)
    v = proj("wv", wv, c).reshape(n, heads, d_v, t)

    scores = matmul(q.transpose(0, 1, 3, 2), k) / np.sqrt(float(d_qk))
    attn = softmax(scores, axis=-1)
    attended = matmul(v, attn.transpose(0, 1, 3, 2)).reshape(n, c, h, w)
    spec_o = ConvSpec(c_in=c, c_out=c, kernel=1)
    return conv2d_ref(attended, np.asarray(wo, dtype=np.float64), biases.get("wo"), spec_o)


def _psa_block(x, weights, pfx: str, half: int, heads: int, d_qk: int, act):
    y = _affine(x, weights, pfx + "norm1", half)
    mhsa_biases = {
        name: weights[pfx + name + "_bias"]
        for name in ("wq", "wk", "wv", "wo")
        if pfx + name + "_bias" in weights
    }
    attn_out = mhsa_forward(
        y,
        _take(weights, pfx + "wq", (heads * d_qk, half, 1, 1)),
        _take(weights, pfx + "wk", (heads * d_qk, half, 1, 1)),
        _take(weights, pfx + "wv", (half, half, 1, 1)),
        _take(weights, pfx + "wo", (half, half, 1, 1)),
        heads,
        biases=mhsa_biases,
    )
    x = x + attn_out
    y = _affine(x, weights, pfx + "norm2", half)
    hidden = _conv(y, weights, pfx + "ffn1", ConvSpec(half, 2 * half, 1), act)
    return x + _conv(hidden, weights, pfx + "ffn2", ConvSpec(2 * half, half, 1))


def forward_block(
    x: np.ndarray,
    spec: BlockSpec,
    weights,
    activation: str = "silu",
) -> np.ndarray:
    """Run one block forward; see the module docstring for structures.

    Output shapes: downsample blocks give (N, 2C, H/2, W/2), classification
    heads give (N, num_classes, H, W), everything else preserves the input
    shape.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatchError(f"expected NCHW input, got shape {x.shape}")
    if x.shape[1:] != (spec.c, spec.h, spec.w):
        raise ShapeMismatchError(f"input shape {x.shape[1:]} != (C, H, W) = {(spec.c, spec.h, spec.w)}")
    act = _activation(activation)
    c = spec.c

    if spec.kind == "std_downsample":
        out = _conv(x, weights, "conv", ConvSpec(c, 2 * c, 3, stride=2, padding=1), act)
    elif spec.kind == "scd_downsample":
        y = _conv(x, weights, "pw", ConvSpec(c, 2 * c, 1), act)
        out = _conv(y, weights, "dw", ConvSpec(2 * c, 2 * c, 3, stride=2, padding=1, groups=2 * c), act)
    elif spec.kind == "cls_head_standard":
        y = _conv(x, weights, "conv1", ConvSpec(c, c, 3, padding=1), act)
        y = _conv(y, weights, "conv2", ConvSpec(c, c, 3, padding=1), act)
        out = _conv(y, weights, "proj", ConvSpec(c, spec.num_classes, 1))
    elif spec.kind == "cls_head_light":
        y = x
        for i in (1, 2):
            y = _conv(y, weights, f"dw{i}", ConvSpec(c, c, 3, padding=1, groups=c), act)
            y = _conv(y, weights, f"pw{i}", ConvSpec(c, c, 1), act)
        out = _conv(y, weights, "proj", ConvSpec(c, spec.num_classes, 1))
    elif spec.kind in ("irb", "irb_dw", "cib", "lk_cib"):
        y = x
        if spec.kind in ("cib", "lk_cib"):
            y = _conv(y, weights, "head_dw", ConvSpec(c, c, 3, padding=1, groups=c), act)
        y = _conv(y, weights, "expand", ConvSpec(c, 2 * c, 1), act)
        if spec.kind == "lk_cib":
            mid_spec = ConvSpec(2 * c, 2 * c, 7, padding=3, groups=2 * c)
            mid = conv2d_ref(y, _take(weights, "mid_dw", mid_spec.weight_shape), _bias(weights, "mid_dw", 2 * c), mid_spec)
            if "mid_dw_branch3" in weights:
                br_spec = ConvSpec(2 * c, 2 * c, 3, padding=1, groups=2 * c)
                mid = mid + conv2d_ref(y, _take(weights, "mid_dw_branch3", br_spec.weight_shape), None, br_spec)
            y = act(mid)
        elif spec.kind in ("irb", "irb_dw", "cib"):
            y = _conv(y, weights, "dw" if spec.kind in ("irb", "irb_dw") else "mid_dw",
                      ConvSpec(2 * c, 2 * c, 3, padding=1, groups=2 * c), act)
        y = _conv(y, weights, "project", ConvSpec(2 * c, c, 1))
        if spec.kind in ("irb_dw", "cib", "lk_cib"):
            y = _conv(y, weights, "tail_dw", ConvSpec(c, c, 3, padding=1, groups=c), act)
        out = x + y
    elif spec.kind == "psa":
        half = c // 2
        heads, _d_v, d_qk = psa_attention_dims(c)
        y = _conv(x, weights, "pw_in", ConvSpec(c, c, 1))
        attended, passthrough = y[:, :half], y[:, half:]
        for b in range(spec.n_psa):
            attended = _psa_block(attended, weights, f"blk{b}_", half, heads, d_qk, act)
        merged = np.concatenate([attended, passthrough], axis=1)
        out = _conv(merged, weights, "pw_fuse", ConvSpec(c, c, 1), act)
    else:
        raise ValueError(f"unknown block kind {spec.kind!r}")

    if not np.all(np.isfinite(out)):
        raise InternalError(f"non-finite output from {spec.kind} forward")
    return out
