"""Two-stage multiscale convolutional hand segmentation."""

from ._handseg import (
    CascadeModel,
    accuracy,
    cascade_forward,
    conv2d_forward,
    generate_dataset,
    generate_sample,
    init_cascade,
    load_model,
    resize_bilinear,
    save_model,
    train_cascade,
)

__all__ = [
    "CascadeModel",
    "accuracy",
    "cascade_forward",
    "conv2d_forward",
    "generate_dataset",
    "generate_sample",
    "init_cascade",
    "load_model",
    "resize_bilinear",
    "save_model",
    "train_cascade",
]
