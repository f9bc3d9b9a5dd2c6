"""Polynomial attention kernels.

Sketched non-negative feature maps for degree-p polynomial attention, a
guarded normalized attention form, and linear-time causal attention built on
blocked lower-triangular multiplication. The heavy lifting lives in the C++
extension; this package just re-exports it.
"""

from ._core import (
    AttentionStats,
    IoError,
    LearnableSketch,
    OpCounter,
    PolyFeatureMap,
    ShapeError,
    SketchTree,
    ValueError,
    absorption_transform,
    amm_relative_error,
    causal_exact_poly_attention,
    causal_polysketch_attention,
    exact_poly_attention,
    init_params,
    layer_norm_rows,
    load_matrix,
    load_params,
    load_sketch,
    lt_multiply_blocked,
    lt_multiply_naive,
    polysketch_attention,
    run_verify_suite,
    sample_sketch,
    save_matrix,
    softmax_attention,
)

__all__ = [
    "AttentionStats",
    "IoError",
    "LearnableSketch",
    "OpCounter",
    "PolyFeatureMap",
    "ShapeError",
    "SketchTree",
    "ValueError",
    "absorption_transform",
    "amm_relative_error",
    "causal_exact_poly_attention",
    "causal_polysketch_attention",
    "exact_poly_attention",
    "init_params",
    "layer_norm_rows",
    "load_matrix",
    "load_params",
    "load_sketch",
    "lt_multiply_blocked",
    "lt_multiply_naive",
    "polysketch_attention",
    "run_verify_suite",
    "sample_sketch",
    "save_matrix",
    "softmax_attention",
]

__version__ = "0.1.0"
