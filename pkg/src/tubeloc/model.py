"""Core data model: boxes, proposals, frames, videos, tracks, tubes, configuration.

All structures are plain dataclasses and are treated as immutable once a
collection has been loaded; every scoring stage reads them concurrently
without locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class ValidationError(ValueError):
    """An input record or structure violates a model invariant."""

    def __init__(self, message: str, locus: str | None = None):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given as corner plus size, in pixel units.

    Coordinates are kept as reals so that linear interpolation between key
    frames is exact.
    """

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"box coordinates must be finite, got {vals}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"box sides must be positive, got {self.width}x{self.height}"
            )

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + 0.5 * self.width, self.y_min + 0.5 * self.height)

    def contains_point(self, x: float, y: float) -> bool:
        """Inclusive membership test for a point."""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def intersection_area(self, other: "Box") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def intersect(self, other: "Box") -> "Box | None":
        x0 = max(self.x_min, other.x_min)
        y0 = max(self.y_min, other.y_min)
        x1 = min(self.x_max, other.x_max)
        y1 = min(self.y_max, other.y_max)
        if x1 <= x0 or y1 <= y0:
            return None
        return Box(x0, y0, x1 - x0, y1 - y0)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.width, self.height]


@dataclass(eq=False)
class Proposal:
    """A candidate region: a box plus an opaque unit-norm appearance descriptor."""

    id: int
    box: Box
    descriptor: np.ndarray


@dataclass(eq=False)
class Frame:
    """One video frame carrying its proposal set and a frame-level signature."""

    video_id: str
    frame_index: int
    width: float
    height: float
    proposals: list[Proposal] = field(default_factory=list)
    signature: np.ndarray | None = None

    def bounds_box(self) -> Box:
        return Box(0.0, 0.0, self.width, self.height)

    def proposal_by_id(self, proposal_id: int) -> Proposal:
        by_id = getattr(self, "_by_id", None)
        if by_id is None:
            by_id = {p.id: p for p in self.proposals}
            self._by_id = by_id
        try:
            return by_id[proposal_id]
        except KeyError:
            raise ValidationError(
                f"frame {self.video_id}:{self.frame_index} has no proposal {proposal_id}"
            ) from None


@dataclass(eq=False)
class Track:
    """Long-term point track with a motion-cluster label.

    ``points`` holds one (x, y) row per frame over the contiguous lifetime
    starting at ``start_frame``.
    """

    id: int
    cluster_label: int
    start_frame: int
    points: np.ndarray

    @property
    def num_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.num_points - 1

    def alive_at(self, frame_index: int) -> bool:
        return self.start_frame <= frame_index <= self.end_frame

    def point_at(self, frame_index: int) -> np.ndarray:
        if not self.alive_at(frame_index):
            raise ValidationError(f"track {self.id} is not alive at frame {frame_index}")
        return self.points[frame_index - self.start_frame]


@dataclass(eq=False)
class Video:
    video_id: str
    num_frames: int
    frames: dict[int, Frame] = field(default_factory=dict)
    tracks: list[Track] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.frames[min(self.frames)].width

    @property
    def height(self) -> float:
        return self.frames[min(self.frames)].height


@dataclass
class Tube:
    """One region choice per key frame of one video, with its chain objective."""

    video_id: str
    regions: dict[int, int]  # key frame index -> chosen proposal id
    score: float = 0.0

    def key_frames(self) -> list[int]:
        return sorted(self.regions)


@dataclass(frozen=True)
class GroundTruth:
    """Single annotated frame of a video; class labels are evaluation-only."""

    video_id: str
    frame_index: int
    box: Box
    class_label: str


@dataclass(eq=False)
class Collection:
    """An immutable set of videos with pre-extracted features."""

    descriptor_dim: int
    signature_dim: int
    videos: dict[str, Video] = field(default_factory=dict)
    ground_truths: dict[str, GroundTruth] = field(default_factory=dict)

    def video_ids(self) -> list[str]:
        return list(self.videos)


FrameRef = tuple[str, int]  # (video_id, frame_index)


@dataclass
class NeighborGraph:
    """Per key frame, ranked neighbor frames from other videos with similarities."""

    neighbors: dict[FrameRef, list[tuple[FrameRef, float]]] = field(default_factory=dict)

    def validate(self):
        for (vid, _), entries in self.neighbors.items():
            for (nvid, _), _sim in entries:
                if nvid == vid:
                    raise ValidationError(
                        f"neighbor list for video {vid} contains a same-video frame"
                    )


@dataclass
class Config:
    """Run parameters. Defaults follow the reference operating point.

    ``theta`` must stay strictly below -1 so that a transition sharing no
    point track is always worse than any shared-track configuration.
    """

    alpha: float = 0.5
    lambda_: float = 2.0
    theta: float = -2.0
    k_neighbors: int = 10
    p_tubes: int = 5
    iterations: int = 5
    keyframe_stride: int = 20
    top_candidates: int = 100
    retrieval_proposals: int = 20
    affinity_gamma: float = 1.0
    hough_translation_bins: int = 16
    hough_scale_bins: int = 7
    rng_seed: int = 0

    def validate(self):
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be >= 0")
        if self.theta >= -1:
            raise ValidationError("theta must be < -1")
        if self.k_neighbors < 1:
            raise ValidationError("k_neighbors must be >= 1")
        if self.p_tubes < 1:
            raise ValidationError("p_tubes must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.keyframe_stride < 1:
            raise ValidationError("keyframe_stride must be >= 1")
        if self.top_candidates < 1:
            raise ValidationError("top_candidates must be >= 1")
        if self.retrieval_proposals < 1:
            raise ValidationError("retrieval_proposals must be >= 1")
        if self.affinity_gamma < 0:
            raise ValidationError("affinity_gamma must be >= 0")
        if self.hough_translation_bins < 1 or self.hough_scale_bins < 1:
            raise ValidationError("offset grid needs at least one bin per axis")

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            key = "lambda" if name == "lambda_" else name
            out[key] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        kwargs = {}
        for key, value in data.items():
            name = "lambda_" if key == "lambda" else key
            if name not in cls.__dataclass_fields__:
                raise ValidationError(f"unknown config field {key!r}")
            kwargs[name] = value
        return cls(**kwargs)


def key_frames(video: Video, stride: int) -> list[int]:
    """Uniform key-frame indices: 0, stride, 2*stride, ... below the video length."""
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    return list(range(0, video.num_frames, stride))


def _lerp_box(a: Box, b: Box, w: float) -> Box:
    return Box(
        a.x_min + w * (b.x_min - a.x_min),
        a.y_min + w * (b.y_min - a.y_min),
        a.width + w * (b.width - a.width),
        a.height + w * (b.height - a.height),
    )


def interpolate_tube(tube: Tube, video: Video) -> dict[int, Box]:
    """Densify a key-frame tube into a box for every frame of the video.

    Non-key frames between two key frames interpolate each box component
    linearly; frames after the last key frame copy the last key-frame box,
    and frames before the first copy the first.
    """
    kfs = tube.key_frames()
    if not kfs:
        raise ValidationError(f"tube for video {tube.video_id} selects no regions")
    boxes = {}
    for kf in kfs:
        if kf not in video.frames:
            raise ValidationError(f"tube references missing frame {kf} of {tube.video_id}")
        boxes[kf] = video.frames[kf].proposal_by_id(tube.regions[kf]).box

    out: dict[int, Box] = {}
    for t in range(0, kfs[0]):
        out[t] = boxes[kfs[0]]
    for a, b in zip(kfs, kfs[1:]):
        span = b - a
        for t in range(a, b):
            out[t] = _lerp_box(boxes[a], boxes[b], (t - a) / span)
    for t in range(kfs[-1], video.num_frames):
        out[t] = boxes[kfs[-1]]
    return out


def unit_normalized(vector: Iterable[float], locus: str | None = None) -> np.ndarray:
    """Return the L2-normalized copy of a finite, nonzero vector."""
    arr = np.asarray(vector, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("vector has non-finite entries", locus=locus)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValidationError("vector has zero norm", locus=locus)
    return arr / norm
