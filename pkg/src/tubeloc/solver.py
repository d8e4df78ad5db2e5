"""Per-video trellis construction and dynamic-programming tube extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import Tube, ValidationError


@dataclass(eq=False)
class Trellis:
    """Candidate regions per key frame plus pairwise transition scores.

    ``pairwise[t]`` has shape (len(candidate_ids[t]), len(candidate_ids[t+1])).
    """

    video_id: str
    frame_indices: list[int]
    candidate_ids: list[np.ndarray]
    unary: list[np.ndarray]
    pairwise: list[np.ndarray]

    def validate(self):
        T = len(self.frame_indices)
        if T == 0:
            raise ValidationError("trellis has no frames")
        if any(b <= a for a, b in zip(self.frame_indices, self.frame_indices[1:])):
            raise ValidationError("trellis frame indices must be strictly increasing")
        if len(self.candidate_ids) != T or len(self.unary) != T:
            raise ValidationError("per-frame arrays do not match the frame count")
        if len(self.pairwise) != T - 1:
            raise ValidationError("expected one pairwise matrix per transition")
        for t in range(T):
            ids = self.candidate_ids[t]
            if ids.size == 0:
                raise ValidationError(f"frame {self.frame_indices[t]} retains no candidates")
            if ids.size != np.unique(ids).size:
                raise ValidationError(f"duplicate candidate ids at frame {self.frame_indices[t]}")
            if self.unary[t].shape != (ids.size,):
                raise ValidationError(f"unary shape mismatch at frame {self.frame_indices[t]}")
        for t, mat in enumerate(self.pairwise):
            expected = (self.candidate_ids[t].size, self.candidate_ids[t + 1].size)
            if mat.shape != expected:
                raise ValidationError(f"pairwise shape mismatch at transition {t}")

    @property
    def num_frames(self) -> int:
        return len(self.frame_indices)

    def candidate_count(self, t: int) -> int:
        return int(self.candidate_ids[t].size)


@dataclass
class TubeSolution:
    tube: Tube
    objective: float


def build_trellis(video_id: str, frame_indices: Sequence[int],
                  ids_per_frame: Sequence[Sequence[int]],
                  scores_per_frame: Sequence[Sequence[float]],
                  top_candidates: int,
                  pairwise_fn: Callable[[int, np.ndarray, np.ndarray], np.ndarray]) -> Trellis:
    """Rank candidates per frame (score desc, id asc), truncate, wire transitions."""
    candidate_ids: list[np.ndarray] = []
    unary: list[np.ndarray] = []
    for t, (ids, scores) in enumerate(zip(ids_per_frame, scores_per_frame)):
        ids = list(ids)
        scores = [float(s) for s in scores]
        if not ids:
            raise ValidationError(
                f"frame {frame_indices[t]} of video {video_id} has no candidates"
            )
        order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:top_candidates]
        candidate_ids.append(np.array([ids[i] for i in order], dtype=int))
        unary.append(np.array([scores[i] for i in order]))

    pairwise = [
        np.asarray(pairwise_fn(t, candidate_ids[t], candidate_ids[t + 1]), dtype=float)
        for t in range(len(candidate_ids) - 1)
    ]
    trellis = Trellis(video_id, list(frame_indices), candidate_ids, unary, pairwise)
    trellis.validate()
    return trellis


def _min_id_position(positions: np.ndarray, ids: np.ndarray) -> int:
    return int(positions[np.argmin(ids[positions])])


def _best_indices(trellis: Trellis, lam: float) -> list[int]:
    """Backward pass plus forward reconstruction with exact-tie id ordering.

    Ties (exact float equality of partial objectives) resolve to the
    lexicographically smallest proposal-id sequence.
    """
    T = trellis.num_frames
    suffix: list[np.ndarray] = [np.empty(0)] * T
    cont: list[np.ndarray] = [np.empty(0)] * max(T - 1, 0)
    suffix[T - 1] = trellis.unary[T - 1].astype(float, copy=True)
    for t in range(T - 2, -1, -1):
        scored = lam * trellis.pairwise[t] + suffix[t + 1][None, :]
        cont[t] = scored.max(axis=1)
        suffix[t] = trellis.unary[t] + cont[t]

    best = suffix[0].max()
    indices = [_min_id_position(np.flatnonzero(suffix[0] == best), trellis.candidate_ids[0])]
    for t in range(T - 1):
        i = indices[-1]
        # identical elementwise arithmetic to the backward pass, so the exact
        # equality test against cont[t][i] is guaranteed to match
        row = lam * trellis.pairwise[t][i, :] + suffix[t + 1]
        ties = np.flatnonzero(row == cont[t][i])
        indices.append(_min_id_position(ties, trellis.candidate_ids[t + 1]))
    return indices


def sequence_objective(trellis: Trellis, indices: Sequence[int], lam: float) -> float:
    """Exact recomputation of the chain objective for a candidate sequence."""
    un = [float(trellis.unary[t][i]) for t, i in enumerate(indices)]
    pw = [
        float(trellis.pairwise[t][indices[t], indices[t + 1]])
        for t in range(trellis.num_frames - 1)
    ]
    return math.fsum(un) + lam * math.fsum(pw)


def _solution_from_indices(trellis: Trellis, indices: list[int], lam: float) -> TubeSolution:
    objective = sequence_objective(trellis, indices, lam)
    regions = {
        trellis.frame_indices[t]: int(trellis.candidate_ids[t][i])
        for t, i in enumerate(indices)
    }
    return TubeSolution(Tube(trellis.video_id, regions, objective), objective)


def solve_best_tube(trellis: Trellis, lam: float) -> TubeSolution:
    """Global maximizer of sum(unary) + lam * sum(pairwise) over the trellis."""
    trellis.validate()
    indices = _best_indices(trellis, lam)
    return _solution_from_indices(trellis, indices, lam)


def _remove_indices(trellis: Trellis, indices: list[int]) -> Trellis | None:
    """Drop the chosen candidate at every frame; None when any frame empties."""
    if any(trellis.candidate_count(t) <= 1 for t in range(trellis.num_frames)):
        return None
    candidate_ids = [np.delete(trellis.candidate_ids[t], indices[t])
                     for t in range(trellis.num_frames)]
    unary = [np.delete(trellis.unary[t], indices[t]) for t in range(trellis.num_frames)]
    pairwise = [
        np.delete(np.delete(trellis.pairwise[t], indices[t], axis=0), indices[t + 1], axis=1)
        for t in range(trellis.num_frames - 1)
    ]
    return Trellis(trellis.video_id, trellis.frame_indices, candidate_ids, unary, pairwise)


def solve_p_best(trellis: Trellis, p: int, lam: float) -> list[TubeSolution]:
    """Extract up to p region-disjoint tubes by repeated solve-and-remove.

    Each round removes the chosen proposal from every key frame before
    re-solving; extraction stops early once any frame runs out of candidates.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    trellis.validate()
    solutions: list[TubeSolution] = []
    current: Trellis | None = trellis
    for _ in range(p):
        if current is None:
            break
        indices = _best_indices(current, lam)
        solutions.append(_solution_from_indices(current, indices, lam))
        current = _remove_indices(current, indices)
    return solutions
