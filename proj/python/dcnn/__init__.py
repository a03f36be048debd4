"""Python bindings for the dcnn engine.

The compiled extension `dcnn._core` exposes the tensor kernels, the
network (build / forward / checkpoints), the training loop, the metric
suite, the data pipeline, and the finite-difference gradient checker.
"""

from dcnn._core import (
    ArgumentError,
    ConfigError,
    ConfusionMatrix,
    ConvSpec,
    FormatError,
    IoError,
    LabeledDataset,
    Network,
    NetworkConfig,
    NumericError,
    ShapeError,
    StateError,
    TrainingConfig,
    confusion,
    conv2d,
    cross_entropy_loss,
    derive_seed,
    evaluate,
    f1_score,
    fill_normal,
    generate_synthetic,
    load_dataset,
    load_tnsr,
    matmul,
    maxpool2x2,
    ppv,
    read_png,
    relu,
    rescale,
    run_gradcheck,
    save_tnsr,
    sensitivity,
    shape_trace,
    softmax,
    specificity,
    split_dataset,
    train,
    weighted_log_loss,
    write_dataset,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "ConfusionMatrix",
    "ConvSpec",
    "FormatError",
    "IoError",
    "LabeledDataset",
    "Network",
    "NetworkConfig",
    "NumericError",
    "ShapeError",
    "StateError",
    "TrainingConfig",
    "confusion",
    "conv2d",
    "cross_entropy_loss",
    "derive_seed",
    "evaluate",
    "f1_score",
    "fill_normal",
    "generate_synthetic",
    "load_dataset",
    "load_tnsr",
    "matmul",
    "maxpool2x2",
    "ppv",
    "read_png",
    "relu",
    "rescale",
    "run_gradcheck",
    "save_tnsr",
    "sensitivity",
    "shape_trace",
    "softmax",
    "specificity",
    "split_dataset",
    "train",
    "weighted_log_loss",
    "write_dataset",
]

__version__ = "0.1.0"
