"""Nested-lattice (E8 Voronoi code) quantization for approximate matrix products."""

from .codec import (
    FIRST_BETA,
    OPT_BETA,
    QuantizedMatrix,
    QuantizedVector,
    QuantizerConfig,
    dequantize_matrix,
    quantize_matrix,
    quantized_dot,
    quantized_matmul,
)
from .lattice import closest_point_e8, coords, is_in_e8, point_from_coords
from .voronoi import decode, encode

__all__ = [
    "FIRST_BETA",
    "OPT_BETA",
    "QuantizedMatrix",
    "QuantizedVector",
    "QuantizerConfig",
    "closest_point_e8",
    "coords",
    "decode",
    "dequantize_matrix",
    "encode",
    "is_in_e8",
    "point_from_coords",
    "quantize_matrix",
    "quantized_dot",
    "quantized_matmul",
]

__version__ = "0.1.0"
