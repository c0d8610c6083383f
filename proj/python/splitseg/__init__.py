"""Split semantic-segmentation pipeline: feature codec, decoders, analysis."""

from splitseg._core import (
    CodecError,
    IoError,
    Pipeline,
    ProtocolError,
    ShapeError,
    analyze,
    cross_entropy,
    gaussian_pmf,
    miou,
    quantize,
    rd_loss,
)

__all__ = [
    "CodecError",
    "IoError",
    "Pipeline",
    "ProtocolError",
    "ShapeError",
    "analyze",
    "cross_entropy",
    "gaussian_pmf",
    "miou",
    "quantize",
    "rd_loss",
]
