"""Infrared/visible image fusion with dilated dynamic KNN graph convolutions."""

__version__ = "0.1.0"

from .errors import (CheckpointError, DataError, DecodeError, FormatError, GraphError,
                     GraphFuseError, NumericError, ShapeError, SizeError)
from .kernels import BACKEND

__all__ = [
    "BACKEND", "CheckpointError", "DataError", "DecodeError", "FormatError", "GraphError",
    "GraphFuseError", "NumericError", "ShapeError", "SizeError", "__version__",
]
