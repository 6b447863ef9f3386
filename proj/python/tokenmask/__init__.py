"""Token-space and image-space segmentation mask heads.

Thin wrapper over the compiled extension: mask scoring, bilinear resampling,
semantic/panoptic/instance decoding, PQ/mIoU metrics, and the analytical
cost model.
"""

from ._core import (
    ConfigError,
    ShapeError,
    backbone_cost,
    bilinear_resize,
    gemm,
    gen_synthetic,
    head_cost,
    image_space_head,
    instance_decode,
    miou_metric,
    panoptic_decode,
    peak_memory,
    pq_metric,
    presets,
    project_queries,
    scores_to_grid,
    selftest,
    semantic_decode,
    token_scores,
    token_space_head,
    tokens_to_grid,
    __version__,
)

__all__ = [
    "ConfigError",
    "ShapeError",
    "backbone_cost",
    "bilinear_resize",
    "gemm",
    "gen_synthetic",
    "head_cost",
    "image_space_head",
    "instance_decode",
    "miou_metric",
    "panoptic_decode",
    "peak_memory",
    "pq_metric",
    "presets",
    "project_queries",
    "scores_to_grid",
    "selftest",
    "semantic_decode",
    "token_scores",
    "token_space_head",
    "tokens_to_grid",
    "__version__",
]
