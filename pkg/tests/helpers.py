"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from tubeloc.model import Box, Frame, Proposal, Track, Video
from tubeloc.solver import Trellis


def basis_vec(dim: int, axis: int) -> np.ndarray:
    v = np.zeros(dim)
    v[axis] = 1.0
    return v


def rand_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def make_frame(video_id="v0", frame_index=0, width=320.0, height=240.0,
               proposals=(), signature=None) -> Frame:
    if signature is None:
        signature = np.zeros(4)
    return Frame(video_id, frame_index, width, height, list(proposals), signature)


def rand_frame(rng: np.random.Generator, video_id: str, n_proposals: int,
               dim: int = 16, width: float = 320.0, height: float = 240.0) -> Frame:
    props = []
    for i in range(n_proposals):
        w = rng.uniform(10, 0.5 * width)
        h = rng.uniform(10, 0.5 * height)
        x = rng.uniform(0, width - w)
        y = rng.uniform(0, height - h)
        props.append(Proposal(i, Box(x, y, w, h), rand_unit(rng, dim)))
    return make_frame(video_id, 0, width, height, props)


def static_track(tid: int, label: int, x: float, y: float, start: int, length: int) -> Track:
    return Track(tid, label, start, np.array([[x, y]] * length, dtype=float))


def single_frame_video(frame: Frame, tracks=()) -> Video:
    return Video(frame.video_id, 1, {frame.frame_index: frame}, list(tracks))


def random_trellis(rng: np.random.Generator, max_frames: int = 6,
                   max_candidates: int = 8) -> Trellis:
    T = int(rng.integers(1, max_frames + 1))
    sizes = [int(rng.integers(1, max_candidates + 1)) for _ in range(T)]
    ids = [np.sort(rng.choice(1000, size=n, replace=False)).astype(int) for n in sizes]
    unary = [rng.uniform(0.0, 1.0, size=n) for n in sizes]
    pairwise = [rng.uniform(-2.0, 1.0, size=(sizes[t], sizes[t + 1])) for t in range(T - 1)]
    return Trellis("synthetic", list(range(T)), ids, unary, pairwise)


def remove_choice(trellis: Trellis, regions: dict[int, int]) -> Trellis | None:
    """Independent candidate removal used to build residual trellises in tests."""
    positions = []
    for t, kf in enumerate(trellis.frame_indices):
        pid = regions[kf]
        positions.append(int(np.flatnonzero(trellis.candidate_ids[t] == pid)[0]))
    if any(ids.size <= 1 for ids in trellis.candidate_ids):
        return None
    ids = [np.delete(trellis.candidate_ids[t], positions[t])
           for t in range(trellis.num_frames)]
    unary = [np.delete(trellis.unary[t], positions[t]) for t in range(trellis.num_frames)]
    pairwise = [
        np.delete(np.delete(trellis.pairwise[t], positions[t], axis=0),
                  positions[t + 1], axis=1)
        for t in range(trellis.num_frames - 1)
    ]
    return Trellis(trellis.video_id, trellis.frame_indices, ids, unary, pairwise)
