"""Exact MAC and parameter accounting for the detector blocks.

Counts are derived symbolically from the block structures documented in
:mod:`detlab.blocks`, with no dependence on the forward implementation;
the test suite cross-checks them against instrumented forward passes
(integer equality), which is what keeps the two routes honest.

Conventions: one MAC = one multiply+add inside a conv or matmul; biases,
activations, per-channel affines, and softmax are excluded from both MAC
and parameter counts; convolutions count padded taps like interior ones.
Costs are per sample (batch 1). FLOPs, when reported elsewhere, are
2 * MACs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import BlockSpec, psa_attention_dims

__all__ = ["CostReport", "conv_cost", "count_cost"]


@dataclass(frozen=True)
class CostReport:
    """Exact integer costs, plus closed-form values where published."""

    macs: int
    params: int
    formula_macs: int | None = None
    formula_params: int | None = None


def conv_cost(h_out: int, w_out: int, c_out: int, c_in_per_group: int, kernel: int) -> tuple[int, int]:
    """(macs, params) of one conv layer producing an (c_out, h_out, w_out) map."""
    params = c_out * c_in_per_group * kernel * kernel
    return h_out * w_out * params, params


def count_cost(spec: BlockSpec) -> CostReport:
    """Exact per-sample MAC/parameter counts for a block.

    For the two downsampling blocks the report also carries the published
    closed forms (std: 9/2*H*W*C^2 MACs and 18*C^2 params; decoupled:
    2*H*W*C^2 + 9/2*H*W*C MACs and 2*C^2 + 18*C params), which must equal
    the first-principles counts exactly.
    """
    h, w, c = spec.h, spec.w, spec.c
    macs = 0
    params = 0

    def add(h_out, w_out, c_out, c_in_per_group, kernel):
        nonlocal macs, params
        m, p = conv_cost(h_out, w_out, c_out, c_in_per_group, kernel)
        macs += m
        params += p

    if spec.kind == "std_downsample":
        add(h // 2, w // 2, 2 * c, c, 3)
        return CostReport(macs, params, (9 * h * w * c * c) // 2, 18 * c * c)
    if spec.kind == "scd_downsample":
        add(h, w, 2 * c, c, 1)
        add(h // 2, w // 2, 2 * c, 1, 3)
        return CostReport(macs, params, 2 * h * w * c * c + (9 * h * w * c) // 2, 2 * c * c + 18 * c)
    if spec.kind == "cls_head_standard":
        add(h, w, c, c, 3)
        add(h, w, c, c, 3)
        add(h, w, spec.num_classes, c, 1)
        return CostReport(macs, params)
    if spec.kind == "cls_head_light":
        for _ in range(2):
            add(h, w, c, 1, 3)
            add(h, w, c, c, 1)
        add(h, w, spec.num_classes, c, 1)
        return CostReport(macs, params)
    if spec.kind in ("irb", "irb_dw", "cib", "lk_cib"):
        if spec.kind in ("cib", "lk_cib"):
            add(h, w, c, 1, 3)
        add(h, w, 2 * c, c, 1)
        add(h, w, 2 * c, 1, 7 if spec.kind == "lk_cib" else 3)
        add(h, w, c, 2 * c, 1)
        if spec.kind != "irb":
            add(h, w, c, 1, 3)
        return CostReport(macs, params)
    if spec.kind == "psa":
        half = c // 2
        heads, d_v, d_qk = psa_attention_dims(c)
        t = h * w
        add(h, w, c, c, 1)
        add(h, w, c, c, 1)
        for _ in range(spec.n_psa):
            add(h, w, heads * d_qk, half, 1)
            add(h, w, heads * d_qk, half, 1)
            add(h, w, half, half, 1)
            macs += heads * t * t * d_qk
            macs += heads * t * t * d_v
            add(h, w, half, half, 1)
            add(h, w, 2 * half, half, 1)
            add(h, w, half, 2 * half, 1)
        return CostReport(macs, params)
    raise ValueError(f"unknown block kind {spec.kind!r}")
