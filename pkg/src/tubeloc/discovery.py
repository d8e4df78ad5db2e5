"""Alternating cross-video neighbor retrieval and within-video relocalization.

Each iteration is two barrier-synchronized phases: retrieval for all key
frames, then relocalization for all videos. Both phases only read the
previous iteration's state, so tasks within a phase run in parallel and the
whole pipeline stays a pure function of (collection, config).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .consistency import consistency_matrix
from .matching import appearance_confidence, match_confidences
from .model import (
    Box,
    Collection,
    Config,
    Frame,
    FrameRef,
    NeighborGraph,
    Proposal,
    ValidationError,
    Video,
    key_frames,
)
from .motion import VideoTrackIndex, motion_coherence_many
from .solver import Trellis, TubeSolution, build_trellis, solve_p_best

# A proposal counts as lying inside the localized regions when at least this
# share of its area is covered by their union.
CONTAINMENT_RATIO = 0.9


@dataclass
class IterationState:
    """Everything one iteration hands to the next: tubes, regions, saliencies."""

    iteration: int
    tubes: dict[str, list[TubeSolution]] = field(default_factory=dict)
    boxes: dict[str, dict[int, list[Box]]] = field(default_factory=dict)
    saliency: dict[str, dict[int, dict[int, float]]] = field(default_factory=dict)
    graph: NeighborGraph | None = None


@dataclass
class DiscoveryResult:
    tubes: dict[str, TubeSolution]
    graph: NeighborGraph
    snapshots: list[IterationState]


def initialize_state(collection: Collection, config: Config) -> IterationState:
    """Start every video from a whole-frame localization at each key frame."""
    if not collection.videos:
        raise ValidationError("collection has no videos")
    boxes: dict[str, dict[int, list[Box]]] = {}
    for vid, video in collection.videos.items():
        boxes[vid] = {
            kf: [video.frames[kf].bounds_box()]
            for kf in key_frames(video, config.keyframe_stride)
        }
    return IterationState(iteration=0, boxes=boxes)


def box_area_in_regions(box: Box, regions: list[Box]) -> float:
    """Area of ``box`` covered by the union of ``regions`` (inclusion-exclusion)."""
    pieces = [p for p in (box.intersect(r) for r in regions) if p is not None]
    area = 0.0
    for size in range(1, len(pieces) + 1):
        sign = 1.0 if size % 2 == 1 else -1.0
        for combo in combinations(pieces, size):
            inter = combo[0]
            for other in combo[1:]:
                inter = inter.intersect(other)
                if inter is None:
                    break
            if inter is not None:
                area += sign * inter.area
    return area


def region_contained(box: Box, regions: list[Box], ratio: float = CONTAINMENT_RATIO) -> bool:
    return box_area_in_regions(box, regions) >= ratio * box.area


def bootstrap_neighbors(collection: Collection, k: int, stride: int) -> NeighborGraph:
    """First-round retrieval by L2 distance between frame signatures.

    Candidates are key frames of other videos; similarity is the negated
    distance, and exact ties order by (video id, frame index).
    """
    refs: list[FrameRef] = []
    signatures = []
    for vid in collection.videos:
        video = collection.videos[vid]
        for kf in key_frames(video, stride):
            frame = video.frames[kf]
            if frame.signature is None:
                raise ValidationError(f"frame {kf} of video {vid} is missing its signature")
            refs.append((vid, kf))
            signatures.append(np.asarray(frame.signature, dtype=float))
    stacked = np.stack(signatures)

    graph = NeighborGraph()
    for qi, qref in enumerate(refs):
        dists = np.sqrt(((stacked - stacked[qi]) ** 2).sum(axis=1))
        ranked = sorted(
            (
                (float(dists[ci]), ref)
                for ci, ref in enumerate(refs)
                if ref[0] != qref[0]
            ),
            key=lambda item: (item[0], item[1]),
        )
        graph.neighbors[qref] = [(ref, -dist) for dist, ref in ranked[:k]]
    return graph


def retrieval_pool(frame: Frame, localized: list[Box], saliency_map: dict[int, float],
                   limit: int) -> list[Proposal]:
    """Most salient proposals contained in the frame's localized regions."""
    contained = [p for p in frame.proposals if region_contained(p.box, localized)]
    contained.sort(key=lambda p: (-saliency_map.get(p.id, 0.0), p.id))
    return contained[:limit]


def frame_similarity(query_frame: Frame, query_pool: list[Proposal],
                     cand_frame: Frame, cand_pool: list[Proposal],
                     config: Config) -> float:
    """Sum of best match confidences of the query pool against one candidate frame.

    Either side having no usable proposals yields similarity 0.
    """
    if not query_pool or not cand_pool:
        return 0.0
    table, _ = match_confidences(query_pool, cand_pool, query_frame, cand_frame, config)
    return float(table.scores.max(axis=1).sum())


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def update_network(state: IterationState, collection: Collection, config: Config,
                   threads: int = 1) -> NeighborGraph:
    """Re-rank each key frame's k matching neighbors among other videos.

    Iteration 0 falls back to signature-based bootstrap retrieval; later
    iterations match the localized-region proposal pools of frame pairs.
    """
    if state.iteration == 0:
        return bootstrap_neighbors(collection, config.k_neighbors, config.keyframe_stride)

    refs: list[FrameRef] = []
    for vid in collection.videos:
        for kf in key_frames(collection.videos[vid], config.keyframe_stride):
            refs.append((vid, kf))
    pools = {
        (vid, kf): retrieval_pool(
            collection.videos[vid].frames[kf],
            state.boxes[vid][kf],
            state.saliency[vid][kf],
            config.retrieval_proposals,
        )
        for vid, kf in refs
    }

    def neighbors_for(qref: FrameRef):
        qvid, qkf = qref
        qframe = collection.videos[qvid].frames[qkf]
        scored = []
        for cref in refs:
            if cref[0] == qvid:
                continue
            cframe = collection.videos[cref[0]].frames[cref[1]]
            sim = frame_similarity(qframe, pools[qref], cframe, pools[cref], config)
            scored.append((sim, cref))
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [(cref, sim) for sim, cref in scored[: config.k_neighbors]]

    results = _map_ordered(neighbors_for, refs, threads)
    return NeighborGraph(dict(zip(refs, results)))


def build_video_trellis(video: Video, pools_by_kf: dict[int, list[tuple[Frame, list[Proposal]]]],
                        config: Config) -> tuple[Trellis, dict[int, dict[int, float]]]:
    """Score all proposals of a video's key frames and assemble the DP trellis.

    Returns the trellis plus the per-frame raw saliency maps needed by the
    next retrieval round.
    """
    kfs = sorted(pools_by_kf)
    track_index = VideoTrackIndex(video)
    ids_per_frame: list[list[int]] = []
    scores_per_frame: list[list[float]] = []
    saliency_maps: dict[int, dict[int, float]] = {}
    for kf in kfs:
        frame = video.frames[kf]
        if not frame.proposals:
            raise ValidationError(f"key frame {kf} of video {video.video_id} has no proposals")
        phi_a, saliency = appearance_confidence(frame, pools_by_kf[kf], config)
        phi_m = motion_coherence_many([p.box for p in frame.proposals], track_index.at(kf))
        phi = phi_a + config.alpha * phi_m
        ids_per_frame.append([p.id for p in frame.proposals])
        scores_per_frame.append(list(phi))
        saliency_maps[kf] = {p.id: float(saliency[i]) for i, p in enumerate(frame.proposals)}

    def pairwise(step: int, ids_a: np.ndarray, ids_b: np.ndarray) -> np.ndarray:
        frame_a = video.frames[kfs[step]]
        frame_b = video.frames[kfs[step + 1]]
        props_a = [frame_a.proposal_by_id(int(i)) for i in ids_a]
        props_b = [frame_b.proposal_by_id(int(i)) for i in ids_b]
        shared = [
            tr for tr in video.tracks
            if tr.alive_at(kfs[step]) and tr.alive_at(kfs[step + 1])
        ]
        points_a = (np.stack([tr.point_at(kfs[step]) for tr in shared])
                    if shared else np.empty((0, 2)))
        points_b = (np.stack([tr.point_at(kfs[step + 1]) for tr in shared])
                    if shared else np.empty((0, 2)))
        return consistency_matrix(
            np.stack([p.descriptor for p in props_a]),
            np.stack([p.descriptor for p in props_b]),
            [p.box for p in props_a],
            [p.box for p in props_b],
            points_a,
            points_b,
            config.theta,
        )

    trellis = build_trellis(video.video_id, kfs, ids_per_frame, scores_per_frame,
                            config.top_candidates, pairwise)
    return trellis, saliency_maps


def relocalize_video(video: Video, graph: NeighborGraph, state: IterationState,
                     collection: Collection, config: Config, num_tubes: int
                     ) -> tuple[list[TubeSolution], dict[int, dict[int, float]],
                                dict[int, list[Box]]]:
    """Optimize one video against its neighbors' currently localized regions."""
    kfs = key_frames(video, config.keyframe_stride)
    pools_by_kf: dict[int, list[tuple[Frame, list[Proposal]]]] = {}
    for kf in kfs:
        pools = []
        for (nvid, nkf), _sim in graph.neighbors.get((video.video_id, kf), []):
            neighbor_frame = collection.videos[nvid].frames[nkf]
            regions = state.boxes[nvid][nkf]
            pool = [p for p in neighbor_frame.proposals if region_contained(p.box, regions)]
            if pool:
                pools.append((neighbor_frame, pool))
        pools_by_kf[kf] = pools

    trellis, saliency_maps = build_video_trellis(video, pools_by_kf, config)
    solutions = solve_p_best(trellis, num_tubes, config.lambda_)
    boxes_by_kf = {
        kf: [
            video.frames[kf].proposal_by_id(sol.tube.regions[kf]).box
            for sol in solutions
        ]
        for kf in kfs
    }
    return solutions, saliency_maps, boxes_by_kf


def run_discovery(collection: Collection, config: Config, threads: int | None = None
                  ) -> DiscoveryResult:
    """Alternate retrieval and relocalization; keep the best tube per video.

    Every iteration except the last carries ``p_tubes`` tubes per video for
    robustness; the last keeps a single one. Deterministic for a given
    (collection, config) regardless of the thread count.
    """
    config.validate()
    threads = threads if threads and threads > 0 else (os.cpu_count() or 1)
    if not collection.videos:
        raise ValidationError("collection has no videos")
    for vid, video in collection.videos.items():
        for kf in key_frames(video, config.keyframe_stride):
            if kf not in video.frames or not video.frames[kf].proposals:
                raise ValidationError(f"key frame {kf} of video {vid} has no proposals")

    state = initialize_state(collection, config)
    snapshots: list[IterationState] = []
    for iteration in range(1, config.iterations + 1):
        graph = update_network(state, collection, config, threads)
        num_tubes = 1 if iteration == config.iterations else config.p_tubes

        def relocalize(vid: str):
            return relocalize_video(collection.videos[vid], graph, state, collection,
                                    config, num_tubes)

        video_ids = list(collection.videos)
        results = _map_ordered(relocalize, video_ids, threads)
        state = IterationState(
            iteration=iteration,
            tubes={vid: res[0] for vid, res in zip(video_ids, results)},
            saliency={vid: res[1] for vid, res in zip(video_ids, results)},
            boxes={vid: res[2] for vid, res in zip(video_ids, results)},
            graph=graph,
        )
        snapshots.append(state)

    final = {vid: state.tubes[vid][0] for vid in collection.videos}
    assert state.graph is not None
    return DiscoveryResult(final, state.graph, snapshots)
