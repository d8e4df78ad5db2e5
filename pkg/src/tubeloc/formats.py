"""Line-delimited JSON artifact files with canonical float precision.

Every artifact is UTF-8 JSON Lines, one record per line, each record an
object with a ``type`` field. Floats are quantized to nine significant
digits before writing, so parsing a file and re-serializing it reproduces
the same bytes; in-memory values produced by this module are already at
the serialized precision.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .model import (
    Box,
    Collection,
    Frame,
    FrameRef,
    GroundTruth,
    NeighborGraph,
    Proposal,
    Track,
    Tube,
    ValidationError,
    Video,
    key_frames,
    unit_normalized,
)

FORMAT_VERSION = 1
FLOAT_DIGITS = 9

_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")

# Relative slack when checking that geometry sits inside frame bounds.
_BOUNDS_EPS = 1e-6


def canon_float(value) -> float:
    """Quantize a float to the serialized precision (nine significant digits)."""
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(f"non-finite value cannot be serialized: {v!r}")
    return float(f"{v:.{FLOAT_DIGITS}g}")


def canon_list(values) -> list[float]:
    return [canon_float(v) for v in np.asarray(values, dtype=float).ravel()]


def _box_record(box: Box) -> list[float]:
    return [canon_float(v) for v in box.as_list()]


def _box_from_record(value, locus: str) -> Box:
    if not isinstance(value, list) or len(value) != 4:
        raise ValidationError("box must be a list [x_min, y_min, width, height]", locus=locus)
    try:
        return Box(*[float(v) for v in value])
    except ValidationError as exc:
        raise ValidationError(str(exc), locus=locus) from None


def write_jsonl(path: Path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, allow_nan=False))
            fh.write("\n")


def read_jsonl(path: Path) -> Iterator[tuple[str, dict]]:
    """Yield (locus, record) pairs; locus is file:line for diagnostics."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", locus=str(path))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            locus = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid JSON ({exc.msg})", locus=locus) from None
            if not isinstance(record, dict) or "type" not in record:
                raise ValidationError("record must be an object with a 'type' field", locus=locus)
            yield locus, record


def _require(record: dict, key: str, locus: str):
    if key not in record:
        raise ValidationError(f"missing field {key!r}", locus=locus)
    return record[key]


# ---------------------------------------------------------------------------
# Collections


def save_collection(collection: Collection, out_dir: Path) -> Path:
    """Write manifest plus per-video sidecar files; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest_records = [
        {
            "type": "collection",
            "format_version": FORMAT_VERSION,
            "descriptor_dim": collection.descriptor_dim,
            "signature_dim": collection.signature_dim,
        }
    ]
    for vid in sorted(collection.videos):
        if not _SAFE_ID.match(vid):
            raise ValidationError(f"video id {vid!r} is not filesystem-safe")
        video = collection.videos[vid]
        truth = collection.ground_truths.get(vid)
        record = {
            "type": "video",
            "video_id": vid,
            "num_frames": video.num_frames,
            "frames_file": f"{vid}.frames.jsonl",
            "tracks_file": f"{vid}.tracks.jsonl",
            "truth_file": f"{vid}.truth.jsonl" if truth is not None else None,
        }
        manifest_records.append(record)

        frame_records = []
        for t in sorted(video.frames):
            frame = video.frames[t]
            frame_records.append(
                {
                    "type": "frame",
                    "frame_index": t,
                    "width": canon_float(frame.width),
                    "height": canon_float(frame.height),
                    "signature": canon_list(frame.signature),
                }
            )
            for proposal in sorted(frame.proposals, key=lambda p: p.id):
                frame_records.append(
                    {
                        "type": "proposal",
                        "frame_index": t,
                        "id": proposal.id,
                        "box": _box_record(proposal.box),
                        "descriptor": canon_list(proposal.descriptor),
                    }
                )
        write_jsonl(out_dir / record["frames_file"], frame_records)

        track_records = [
            {
                "type": "track",
                "id": track.id,
                "cluster": track.cluster_label,
                "start_frame": track.start_frame,
                "points": [[canon_float(x), canon_float(y)] for x, y in track.points],
            }
            for track in sorted(video.tracks, key=lambda tr: tr.id)
        ]
        write_jsonl(out_dir / record["tracks_file"], track_records)

        if truth is not None:
            write_jsonl(
                out_dir / record["truth_file"],
                [
                    {
                        "type": "ground_truth",
                        "frame_index": truth.frame_index,
                        "box": _box_record(truth.box),
                        "class_label": truth.class_label,
                    }
                ],
            )

    manifest_path = out_dir / "manifest.jsonl"
    write_jsonl(manifest_path, manifest_records)
    return manifest_path


def _load_vector(record: dict, key: str, dim: int, locus: str) -> np.ndarray:
    value = _require(record, key, locus)
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or arr.size != dim:
        raise ValidationError(
            f"{key} has dimension {arr.size}, expected {dim}", locus=locus
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{key} has non-finite entries", locus=locus)
    return arr


def _load_frames(path: Path, video_id: str, num_frames: int, descriptor_dim: int,
                 signature_dim: int) -> dict[int, Frame]:
    frames: dict[int, Frame] = {}
    pending: list[tuple[str, dict]] = []
    for locus, record in read_jsonl(path):
        kind = record["type"]
        if kind == "frame":
            t = int(_require(record, "frame_index", locus))
            if t < 0 or t >= num_frames:
                raise ValidationError(f"frame index {t} outside video length {num_frames}", locus=locus)
            if t in frames:
                raise ValidationError(f"duplicate frame index {t}", locus=locus)
            width = float(_require(record, "width", locus))
            height = float(_require(record, "height", locus))
            if width <= 0 or height <= 0:
                raise ValidationError("frame size must be positive", locus=locus)
            signature = _load_vector(record, "signature", signature_dim, locus)
            frames[t] = Frame(video_id, t, width, height, [], signature)
        elif kind == "proposal":
            pending.append((locus, record))
        else:
            raise ValidationError(f"unexpected record type {kind!r}", locus=locus)

    if set(frames) != set(range(num_frames)):
        missing = sorted(set(range(num_frames)) - set(frames))[:3]
        raise ValidationError(
            f"video {video_id} is missing frame records (first missing: {missing})",
            locus=str(path),
        )

    for locus, record in pending:
        t = int(_require(record, "frame_index", locus))
        if t not in frames:
            raise ValidationError(f"proposal references unknown frame {t}", locus=locus)
        frame = frames[t]
        pid = int(_require(record, "id", locus))
        if any(p.id == pid for p in frame.proposals):
            raise ValidationError(
                f"duplicate proposal id {pid} in frame {t} of video {video_id}", locus=locus
            )
        try:
            box = _box_from_record(_require(record, "box", locus), locus)
        except ValidationError as exc:
            raise ValidationError(
                f"proposal {pid} in frame {t} of video {video_id}: invalid box "
                f"({exc.args[0] if exc.args else exc})",
                locus=locus,
            ) from None
        eps = _BOUNDS_EPS * max(frame.width, frame.height)
        if (box.x_min < -eps or box.y_min < -eps
                or box.x_max > frame.width + eps or box.y_max > frame.height + eps):
            raise ValidationError(
                f"proposal {pid} box exceeds frame bounds in frame {t} of video {video_id}",
                locus=locus,
            )
        descriptor = _load_vector(record, "descriptor", descriptor_dim, locus)
        descriptor = unit_normalized(descriptor, locus=locus)
        frame.proposals.append(Proposal(pid, box, descriptor))

    for frame in frames.values():
        frame.proposals.sort(key=lambda p: p.id)
    return frames


def _load_tracks(path: Path, video_id: str, frames: dict[int, Frame],
                 num_frames: int) -> list[Track]:
    tracks: list[Track] = []
    seen: set[int] = set()
    for locus, record in read_jsonl(path):
        if record["type"] != "track":
            raise ValidationError(f"unexpected record type {record['type']!r}", locus=locus)
        tid = int(_require(record, "id", locus))
        if tid in seen:
            raise ValidationError(f"duplicate track id {tid} in video {video_id}", locus=locus)
        seen.add(tid)
        cluster = int(_require(record, "cluster", locus))
        if cluster < 0:
            raise ValidationError("cluster label must be >= 0", locus=locus)
        start = int(_require(record, "start_frame", locus))
        points = np.asarray(_require(record, "points", locus), dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
            raise ValidationError("track needs at least two (x, y) points", locus=locus)
        if not np.all(np.isfinite(points)):
            raise ValidationError("track points must be finite", locus=locus)
        if start < 0 or start + points.shape[0] > num_frames:
            raise ValidationError("track lifetime exceeds video length", locus=locus)
        for offset, (x, y) in enumerate(points):
            frame = frames[start + offset]
            eps = _BOUNDS_EPS * max(frame.width, frame.height)
            if x < -eps or y < -eps or x > frame.width + eps or y > frame.height + eps:
                raise ValidationError(
                    f"track {tid} point at frame {start + offset} outside frame bounds",
                    locus=locus,
                )
        tracks.append(Track(tid, cluster, start, points))
    tracks.sort(key=lambda tr: tr.id)
    return tracks


def _load_truth(path: Path, video_id: str, frames: dict[int, Frame],
                num_frames: int) -> GroundTruth:
    truth = None
    for locus, record in read_jsonl(path):
        if record["type"] != "ground_truth":
            raise ValidationError(f"unexpected record type {record['type']!r}", locus=locus)
        if truth is not None:
            raise ValidationError(f"video {video_id} has more than one annotated frame", locus=locus)
        t = int(_require(record, "frame_index", locus))
        if t < 0 or t >= num_frames:
            raise ValidationError(f"annotated frame {t} outside video length", locus=locus)
        box = _box_from_record(_require(record, "box", locus), locus)
        label = str(_require(record, "class_label", locus))
        truth = GroundTruth(video_id, t, box, label)
    if truth is None:
        raise ValidationError("ground-truth file has no record", locus=str(path))
    return truth


def load_collection(manifest_path: Path, keyframe_stride: int | None = None) -> Collection:
    """Load and fully validate a collection; descriptors come back unit-norm.

    When ``keyframe_stride`` is given, additionally checks that every key
    frame carries a non-empty proposal set.
    """
    manifest_path = Path(manifest_path)
    records = list(read_jsonl(manifest_path))
    if not records or records[0][1]["type"] != "collection":
        raise ValidationError(
            "manifest must start with a 'collection' header record", locus=str(manifest_path)
        )
    locus, header = records[0]
    descriptor_dim = int(_require(header, "descriptor_dim", locus))
    signature_dim = int(_require(header, "signature_dim", locus))
    if descriptor_dim < 1 or signature_dim < 1:
        raise ValidationError("descriptor/signature dimensions must be >= 1", locus=locus)

    base = manifest_path.parent
    collection = Collection(descriptor_dim, signature_dim)
    for locus, record in records[1:]:
        if record["type"] != "video":
            raise ValidationError(f"unexpected record type {record['type']!r}", locus=locus)
        vid = str(_require(record, "video_id", locus))
        if vid in collection.videos:
            raise ValidationError(f"duplicate video id {vid}", locus=locus)
        num_frames = int(_require(record, "num_frames", locus))
        if num_frames < 1:
            raise ValidationError("video must have at least one frame", locus=locus)
        frames = _load_frames(
            base / _require(record, "frames_file", locus), vid, num_frames,
            descriptor_dim, signature_dim,
        )
        tracks = _load_tracks(base / _require(record, "tracks_file", locus), vid, frames, num_frames)
        video = Video(vid, num_frames, frames, tracks)
        collection.videos[vid] = video
        truth_file = record.get("truth_file")
        if truth_file:
            collection.ground_truths[vid] = _load_truth(base / truth_file, vid, frames, num_frames)

    if keyframe_stride is not None:
        for vid, video in collection.videos.items():
            for kf in key_frames(video, keyframe_stride):
                if not video.frames[kf].proposals:
                    raise ValidationError(
                        f"key frame {kf} of video {vid} has no proposals",
                        locus=str(manifest_path),
                    )
    return collection


# ---------------------------------------------------------------------------
# Results: tubes + neighbor graph


def save_tubes(tubes_by_video: dict[str, list[Tube]], collection: Collection, path: Path) -> None:
    records = []
    for vid in sorted(tubes_by_video):
        video = collection.videos[vid]
        for rank, tube in enumerate(tubes_by_video[vid]):
            regions = []
            for kf in tube.key_frames():
                box = video.frames[kf].proposal_by_id(tube.regions[kf]).box
                regions.append([kf, tube.regions[kf], _box_record(box)])
            records.append(
                {
                    "type": "tube",
                    "video_id": vid,
                    "rank": rank,
                    "score": canon_float(tube.score),
                    "regions": regions,
                }
            )
    write_jsonl(path, records)


def load_tubes(path: Path) -> dict[str, list[Tube]]:
    out: dict[str, list[Tube]] = {}
    for locus, record in read_jsonl(path):
        if record["type"] != "tube":
            raise ValidationError(f"unexpected record type {record['type']!r}", locus=locus)
        vid = str(_require(record, "video_id", locus))
        rank = int(_require(record, "rank", locus))
        regions: dict[int, int] = {}
        for item in _require(record, "regions", locus):
            if not isinstance(item, list) or len(item) != 3:
                raise ValidationError("region entry must be [frame, proposal_id, box]", locus=locus)
            kf, pid = int(item[0]), int(item[1])
            if kf in regions:
                raise ValidationError(f"duplicate key frame {kf} in tube", locus=locus)
            regions[kf] = pid
        tubes = out.setdefault(vid, [])
        if rank != len(tubes):
            raise ValidationError(f"tube ranks for video {vid} are not contiguous", locus=locus)
        tubes.append(Tube(vid, regions, float(_require(record, "score", locus))))
    return out


def save_neighbor_graph(graph: NeighborGraph, path: Path) -> None:
    records = []
    for (vid, t) in sorted(graph.neighbors):
        entries = graph.neighbors[(vid, t)]
        records.append(
            {
                "type": "neighbors",
                "video_id": vid,
                "frame_index": t,
                "neighbors": [[nvid, nt, canon_float(sim)] for (nvid, nt), sim in entries],
            }
        )
    write_jsonl(path, records)


def load_neighbor_graph(path: Path) -> NeighborGraph:
    graph = NeighborGraph()
    for locus, record in read_jsonl(path):
        if record["type"] != "neighbors":
            raise ValidationError(f"unexpected record type {record['type']!r}", locus=locus)
        ref: FrameRef = (str(_require(record, "video_id", locus)),
                         int(_require(record, "frame_index", locus)))
        if ref in graph.neighbors:
            raise ValidationError(f"duplicate neighbor record for {ref}", locus=locus)
        entries = []
        for item in _require(record, "neighbors", locus):
            if not isinstance(item, list) or len(item) != 3:
                raise ValidationError("neighbor entry must be [video_id, frame, similarity]", locus=locus)
            entries.append(((str(item[0]), int(item[1])), float(item[2])))
        graph.neighbors[ref] = entries
    graph.validate()
    return graph


def save_results(tubes_by_video: dict[str, list[Tube]], graph: NeighborGraph,
                 collection: Collection, out_dir: Path) -> None:
    """Write the canonical result pair (tubes.jsonl, neighbors.jsonl)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_tubes(tubes_by_video, collection, out_dir / "tubes.jsonl")
    save_neighbor_graph(graph, out_dir / "neighbors.jsonl")


def snapshot_dir(out_dir: Path, iteration: int) -> Path:
    return Path(out_dir) / "snapshots" / f"iter_{iteration:03d}"


# ---------------------------------------------------------------------------
# Run manifest


def hash_collection_inputs(manifest_path: Path) -> str:
    """SHA-256 over the manifest and every referenced sidecar file."""
    manifest_path = Path(manifest_path)
    digest = hashlib.sha256()
    digest.update(manifest_path.read_bytes())
    base = manifest_path.parent
    for _locus, record in read_jsonl(manifest_path):
        if record["type"] != "video":
            continue
        for key in ("frames_file", "tracks_file", "truth_file"):
            name = record.get(key)
            if name:
                digest.update((base / name).read_bytes())
    return "sha256:" + digest.hexdigest()


def save_run_manifest(path: Path, *, version: str, config_dict: dict, input_hash: str,
                      started_utc: str, finished_utc: str) -> None:
    payload = {
        "tool": "tubeloc",
        "version": version,
        "config": config_dict,
        "input_hash": input_hash,
        "started_utc": started_utc,
        "finished_utc": finished_utc,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
