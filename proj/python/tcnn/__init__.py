"""Tube convolutional network for action detection."""

from ._tcnn import (
    Model,
    clip_starts,
    evaluate,
    generate,
    gradcheck,
    iou,
    kmeans_anchors,
    read_detections,
    sequence_iou,
    toi_pool,
    top_k_sequences,
)

__all__ = [
    "Model",
    "clip_starts",
    "evaluate",
    "generate",
    "gradcheck",
    "iou",
    "kmeans_anchors",
    "read_detections",
    "sequence_iou",
    "toi_pool",
    "top_k_sequences",
]
