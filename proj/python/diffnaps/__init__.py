"""Differential pattern mining with a binarized autoencoder."""

from ._core import (
    ContractViolation,
    Dataset,
    Error,
    FormatError,
    GroundTruth,
    ModelParams,
    NumericalError,
    ParseError,
    SyntheticData,
    SyntheticSpec,
    TrainConfig,
    UndefinedSupport,
    default_threshold_grid,
    evaluate,
    extract,
    generate,
    jaccard,
    load_checkpoint,
    load_sparse,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "Dataset",
    "Error",
    "FormatError",
    "GroundTruth",
    "ModelParams",
    "NumericalError",
    "ParseError",
    "SyntheticData",
    "SyntheticSpec",
    "TrainConfig",
    "UndefinedSupport",
    "default_threshold_grid",
    "evaluate",
    "extract",
    "generate",
    "jaccard",
    "load_checkpoint",
    "load_sparse",
    "train",
]
