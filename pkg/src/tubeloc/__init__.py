"""Unsupervised discovery and tracking of object tubes in video collections."""

from .model import (
    Box,
    Collection,
    Config,
    Frame,
    GroundTruth,
    NeighborGraph,
    Proposal,
    Track,
    Tube,
    ValidationError,
    Video,
    interpolate_tube,
    key_frames,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Collection",
    "Config",
    "Frame",
    "GroundTruth",
    "NeighborGraph",
    "Proposal",
    "Track",
    "Tube",
    "ValidationError",
    "Video",
    "interpolate_tube",
    "key_frames",
    "__version__",
]
