"""Temporal consistency between candidate regions of consecutive key frames."""

from __future__ import annotations

import numpy as np

from .model import Box
from .matching import rescale_unit

# Chunk size for the track axis when broadcasting pairwise distances.
_TRACK_CHUNK = 256


def to_unit_square(point, box: Box) -> tuple[float, float]:
    """Map a point inside a box to the unit square."""
    x, y = point
    return ((x - box.x_min) / box.width, (y - box.y_min) / box.height)


def appearance_consistency_matrix(descs_a: np.ndarray, descs_b: np.ndarray) -> np.ndarray:
    """Negative descriptor distance, min-max rescaled to [0, 1] over all pairs.

    A constant matrix (all candidate pairs equally similar) collapses to 0.
    """
    descs_a = np.asarray(descs_a, dtype=float)
    descs_b = np.asarray(descs_b, dtype=float)
    if descs_a.shape[1] != descs_b.shape[1]:
        raise ValueError("descriptor dimensions differ")
    raw = -np.sqrt(((descs_a[:, None, :] - descs_b[None, :, :]) ** 2).sum(axis=2))
    return rescale_unit(raw)


def _inside_and_unit(points: np.ndarray, boxes: list[Box]):
    """Inclusive inside masks and unit-square coordinates, tracks x boxes."""
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    x_min = np.array([b.x_min for b in boxes])[None, :]
    y_min = np.array([b.y_min for b in boxes])[None, :]
    width = np.array([b.width for b in boxes])[None, :]
    height = np.array([b.height for b in boxes])[None, :]
    inside = (x >= x_min) & (x <= x_min + width) & (y >= y_min) & (y <= y_min + height)
    return inside, (x - x_min) / width, (y - y_min) / height


def motion_consistency(box_a: Box, box_b: Box, points_a: np.ndarray, points_b: np.ndarray,
                       theta: float) -> float:
    """Average unit-square L1 drift of shared tracks, negated; theta when none.

    Rows of ``points_a``/``points_b`` are the same track's coordinates at the
    two frames; a track is shared only when it lies inside both boxes.
    """
    points_a = np.asarray(points_a, dtype=float).reshape(-1, 2)
    points_b = np.asarray(points_b, dtype=float).reshape(-1, 2)
    if points_a.shape != points_b.shape:
        raise ValueError("point arrays must pair up row by row")
    in_a = np.array([box_a.contains_point(x, y) for x, y in points_a], dtype=bool)
    in_b = np.array([box_b.contains_point(x, y) for x, y in points_b], dtype=bool)
    shared = in_a & in_b
    count = int(shared.sum())
    if count == 0:
        return float(theta)
    ua = (points_a[shared, 0] - box_a.x_min) / box_a.width
    va = (points_a[shared, 1] - box_a.y_min) / box_a.height
    ub = (points_b[shared, 0] - box_b.x_min) / box_b.width
    vb = (points_b[shared, 1] - box_b.y_min) / box_b.height
    drift = np.abs(ua - ub) + np.abs(va - vb)
    return float(-drift.sum() / (2.0 * count))


def motion_consistency_matrix(boxes_a: list[Box], boxes_b: list[Box], points_a: np.ndarray,
                              points_b: np.ndarray, theta: float) -> np.ndarray:
    """Pairwise motion consistency for all candidate box pairs of one transition."""
    n, m = len(boxes_a), len(boxes_b)
    points_a = np.asarray(points_a, dtype=float).reshape(-1, 2)
    points_b = np.asarray(points_b, dtype=float).reshape(-1, 2)
    if points_a.shape != points_b.shape:
        raise ValueError("point arrays must pair up row by row")
    k = points_a.shape[0]
    if k == 0:
        return np.full((n, m), float(theta))

    in_a, ua, va = _inside_and_unit(points_a, boxes_a)
    in_b, ub, vb = _inside_and_unit(points_b, boxes_b)
    counts = in_a.astype(float).T @ in_b.astype(float)
    drift = np.zeros((n, m))
    for lo in range(0, k, _TRACK_CHUNK):
        hi = min(lo + _TRACK_CHUNK, k)
        mask = in_a[lo:hi, :, None] & in_b[lo:hi, None, :]
        du = np.abs(ua[lo:hi, :, None] - ub[lo:hi, None, :])
        dv = np.abs(va[lo:hi, :, None] - vb[lo:hi, None, :])
        drift += ((du + dv) * mask).sum(axis=0)
    safe = np.where(counts > 0, counts, 1.0)
    return np.where(counts > 0, -drift / (2.0 * safe), float(theta))


def consistency_matrix(descs_a: np.ndarray, descs_b: np.ndarray, boxes_a: list[Box],
                       boxes_b: list[Box], points_a: np.ndarray, points_b: np.ndarray,
                       theta: float) -> np.ndarray:
    """Combined appearance + motion consistency for one key-frame transition."""
    return (
        appearance_consistency_matrix(descs_a, descs_b)
        + motion_consistency_matrix(boxes_a, boxes_b, points_a, points_b, theta)
    )
