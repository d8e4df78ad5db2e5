"""Cross-frame region matching: affinity, offset voting, saliency, standout.

All functions are pure; frame pairs can be matched fully in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Box, Config, Frame, Proposal

TRANSLATION_RANGE = (-1.0, 1.0)
LOG_SCALE_RANGE = (-math.log(4.0), math.log(4.0))

# Strict geometric containment with slack for jittery proposal boxes: the
# container must cover at least this share of the inner box and be at least
# this factor larger in area. A box never contains itself.
CONTAIN_AREA_RATIO = 0.99
CONTAIN_GROWTH = 1.01


def _bin_centers(lo: float, hi: float, count: int) -> np.ndarray:
    width = (hi - lo) / count
    return lo + (np.arange(count) + 0.5) * width


@dataclass(frozen=True, eq=False)
class OffsetGrid:
    """Discretized translation + log-scale offset space for vote accumulation."""

    du_centers: np.ndarray
    dv_centers: np.ndarray
    ds_centers: np.ndarray
    bandwidths: tuple[float, float, float]

    @classmethod
    def from_config(cls, config: Config) -> "OffsetGrid":
        nt = config.hough_translation_bins
        ns = config.hough_scale_bins
        t_lo, t_hi = TRANSLATION_RANGE
        s_lo, s_hi = LOG_SCALE_RANGE
        return cls(
            _bin_centers(t_lo, t_hi, nt),
            _bin_centers(t_lo, t_hi, nt),
            _bin_centers(s_lo, s_hi, ns),
            ((t_hi - t_lo) / nt, (t_hi - t_lo) / nt, (s_hi - s_lo) / ns),
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.du_centers.size, self.dv_centers.size, self.ds_centers.size)


@dataclass(frozen=True)
class Offset:
    """Translation (frame-normalized) plus log-scale displacement between regions."""

    du: float
    dv: float
    ds: float

    def as_array(self) -> np.ndarray:
        return np.array([self.du, self.dv, self.ds])


@dataclass(eq=False)
class HoughGrid:
    """Accumulated, nonnegative votes over the offset grid for one frame pair."""

    grid: OffsetGrid
    votes: np.ndarray


@dataclass(eq=False)
class MatchTable:
    """Nonnegative match confidences for every proposal pair of a frame pair."""

    query_ids: np.ndarray
    neighbor_ids: np.ndarray
    scores: np.ndarray  # (len(query_ids), len(neighbor_ids))


def box_location(box: Box, frame_width: float, frame_height: float) -> np.ndarray:
    """Normalized center plus log square root of the box-to-frame area ratio."""
    cx, cy = box.center
    scale = 0.5 * math.log(box.area / (frame_width * frame_height))
    return np.array([cx / frame_width, cy / frame_height, scale])


def offset_between(location_t: np.ndarray, location_u: np.ndarray) -> Offset:
    d = np.asarray(location_t, dtype=float) - np.asarray(location_u, dtype=float)
    return Offset(float(d[0]), float(d[1]), float(d[2]))


def appearance_affinity(f1, f2, gamma: float) -> float:
    """exp(-gamma * squared L2 distance); 1.0 for identical descriptors."""
    a = np.asarray(f1, dtype=float)
    b = np.asarray(f2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"descriptor dimensions differ: {a.shape} vs {b.shape}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return float(np.exp(-gamma * np.sum((a - b) ** 2)))


def affinity_matrix(descs_a: np.ndarray, descs_b: np.ndarray, gamma: float) -> np.ndarray:
    if descs_a.shape[1] != descs_b.shape[1]:
        raise ValueError("descriptor dimensions differ")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    sq = ((descs_a[:, None, :] - descs_b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * sq)


def geometry_likelihood(offset, center, bandwidths) -> float:
    """Unnormalized diagonal Gaussian; 1.0 when the offset sits on the center."""
    if isinstance(offset, Offset):
        offset = offset.as_array()
    off = np.asarray(offset, dtype=float)
    ctr = np.asarray(center, dtype=float)
    value = 1.0
    for k in range(3):
        z = (off[k] - ctr[k]) / bandwidths[k]
        value *= math.exp(-0.5 * z * z)
    return value


def _axis_kernel(values: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    z = (values[:, None] - centers[None, :]) / bandwidth
    return np.exp(-0.5 * z * z)


def _pair_kernels(props_t, props_u, frame_t: Frame, frame_u: Frame, grid: OffsetGrid,
                 gamma: float):
    descs_t = np.stack([p.descriptor for p in props_t])
    descs_u = np.stack([p.descriptor for p in props_u])
    aff = affinity_matrix(descs_t, descs_u, gamma)
    loc_t = np.stack([box_location(p.box, frame_t.width, frame_t.height) for p in props_t])
    loc_u = np.stack([box_location(p.box, frame_u.width, frame_u.height) for p in props_u])
    offsets = (loc_t[:, None, :] - loc_u[None, :, :]).reshape(-1, 3)
    gu = _axis_kernel(offsets[:, 0], grid.du_centers, grid.bandwidths[0])
    gv = _axis_kernel(offsets[:, 1], grid.dv_centers, grid.bandwidths[1])
    gs = _axis_kernel(offsets[:, 2], grid.ds_centers, grid.bandwidths[2])
    return aff, gu, gv, gs


def _check_pair(props_t, props_u):
    if not props_t or not props_u:
        raise ValueError("proposal sets must be non-empty")


def hough_votes(props_t: list[Proposal], props_u: list[Proposal], frame_t: Frame,
                frame_u: Frame, config: Config) -> HoughGrid:
    """Accumulate affinity-weighted geometry likelihoods over all proposal pairs."""
    _check_pair(props_t, props_u)
    grid = OffsetGrid.from_config(config)
    aff, gu, gv, gs = _pair_kernels(props_t, props_u, frame_t, frame_u, grid,
                                   config.affinity_gamma)
    votes = np.einsum("m,mu,mv,ms->uvs", aff.ravel(), gu, gv, gs)
    return HoughGrid(grid, votes)


def match_confidences(props_t: list[Proposal], props_u: list[Proposal], frame_t: Frame,
                      frame_u: Frame, config: Config) -> tuple[MatchTable, HoughGrid]:
    """Score every proposal pair by appearance affinity times its vote support."""
    _check_pair(props_t, props_u)
    grid = OffsetGrid.from_config(config)
    aff, gu, gv, gs = _pair_kernels(props_t, props_u, frame_t, frame_u, grid,
                                   config.affinity_gamma)
    votes = np.einsum("m,mu,mv,ms->uvs", aff.ravel(), gu, gv, gs)
    support = np.einsum("uvs,mu,mv,ms->m", votes, gu, gv, gs)
    scores = aff * support.reshape(aff.shape)
    table = MatchTable(
        np.array([p.id for p in props_t]),
        np.array([p.id for p in props_u]),
        scores,
    )
    return table, HoughGrid(grid, votes)


def frame_saliencies(frame: Frame, neighbor_pools, config: Config) -> np.ndarray:
    """Per proposal, the sum over neighbor frames of its best match confidence.

    ``neighbor_pools`` is a list of (neighbor frame, allowed proposals); every
    pool must be non-empty and the list itself must not be empty.
    """
    if not neighbor_pools:
        raise ValueError("neighbor pool list is empty")
    saliency = np.zeros(len(frame.proposals))
    for neighbor_frame, pool in neighbor_pools:
        if not pool:
            raise ValueError("neighbor proposal pool is empty")
        table, _ = match_confidences(frame.proposals, list(pool), frame, neighbor_frame, config)
        saliency += table.scores.max(axis=1)
    return saliency


def region_saliency(proposal: Proposal, frame: Frame, neighbor_pools, config: Config) -> float:
    for idx, candidate in enumerate(frame.proposals):
        if candidate.id == proposal.id:
            return float(frame_saliencies(frame, neighbor_pools, config)[idx])
    raise ValueError(f"proposal {proposal.id} does not belong to the frame")


def strictly_contains(outer: Box, inner: Box) -> bool:
    return (
        inner.intersection_area(outer) >= CONTAIN_AREA_RATIO * inner.area
        and outer.area > inner.area * CONTAIN_GROWTH
    )


def strict_containers(boxes: list[Box]) -> list[list[int]]:
    """For each box, indices of the other boxes strictly containing it."""
    out = []
    for i, inner in enumerate(boxes):
        out.append([j for j, outer in enumerate(boxes) if j != i and strictly_contains(outer, inner)])
    return out


def standout_scores(boxes: list[Box], saliencies: np.ndarray) -> np.ndarray:
    """Saliency minus the best saliency among strict containers (0 when none)."""
    containers = strict_containers(boxes)
    raw = np.empty(len(boxes))
    for i, js in enumerate(containers):
        background = max((saliencies[j] for j in js), default=0.0)
        raw[i] = saliencies[i] - background
    return raw


def rescale_unit(values: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant input collapses to all zeros."""
    values = np.asarray(values, dtype=float)
    lo = values.min()
    span = values.max() - lo
    if span <= 0:
        return np.zeros_like(values)
    return (values - lo) / span


def appearance_confidence(frame: Frame, neighbor_pools, config: Config
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled standout scores in [0, 1] plus raw saliencies, per proposal.

    An empty pool list yields all-zero confidences: a frame with no usable
    neighbors carries no appearance evidence.
    """
    if neighbor_pools:
        saliency = frame_saliencies(frame, neighbor_pools, config)
    else:
        saliency = np.zeros(len(frame.proposals))
    raw = standout_scores([p.box for p in frame.proposals], saliency)
    return rescale_unit(raw), saliency
