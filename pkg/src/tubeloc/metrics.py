"""Localization and retrieval quality metrics, macro-averaged over classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Box, Collection, NeighborGraph, Tube, ValidationError, interpolate_tube

IOU_THRESHOLD = 0.5


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = a.intersection_area(b)
    return inter / (a.area + b.area - inter)


def _macro(per_class: dict[str, float]) -> float:
    return float(np.mean(list(per_class.values()))) if per_class else 0.0


def corloc(tubes: dict[str, Tube], collection: Collection,
           threshold: float = IOU_THRESHOLD) -> tuple[dict[str, float], float]:
    """Share of annotated videos localized with IoU strictly above the threshold.

    Annotated frames between key frames are judged on the interpolated box.
    """
    correct: dict[str, list[bool]] = {}
    for vid, truth in collection.ground_truths.items():
        if vid not in tubes:
            raise ValidationError(f"no predicted tube for annotated video {vid}")
        boxes = interpolate_tube(tubes[vid], collection.videos[vid])
        hit = iou(boxes[truth.frame_index], truth.box) > threshold
        correct.setdefault(truth.class_label, []).append(hit)
    per_class = {
        label: 100.0 * sum(hits) / len(hits) for label, hits in sorted(correct.items())
    }
    return per_class, _macro(per_class)


def video_labels(collection: Collection) -> dict[str, str]:
    return {vid: truth.class_label for vid, truth in collection.ground_truths.items()}


def _frame_fractions(graph: NeighborGraph, labels: dict[str, str]):
    """Per query frame with a labeled video: distribution of neighbor classes.

    Neighbors from unlabeled videos are skipped, so videos without
    annotations never influence retrieval metrics.
    """
    for (vid, t), entries in graph.neighbors.items():
        if vid not in labels:
            continue
        counted = [(labels[nvid], sim) for (nvid, _nt), sim in entries if nvid in labels]
        if not counted:
            continue
        yield vid, labels[vid], counted


def corret(graph: NeighborGraph, labels: dict[str, str]) -> tuple[dict[str, float], float]:
    """Mean percentage of retrieved neighbor frames sharing the query's class.

    Per-frame fractions average over each class's frames, then over classes.
    """
    fractions: dict[str, list[float]] = {}
    for _vid, qlabel, counted in _frame_fractions(graph, labels):
        same = sum(1 for nlabel, _sim in counted if nlabel == qlabel)
        fractions.setdefault(qlabel, []).append(100.0 * same / len(counted))
    per_class = {label: float(np.mean(vals)) for label, vals in sorted(fractions.items())}
    return per_class, _macro(per_class)


def topk_error(graph: NeighborGraph, labels: dict[str, str], k_labels: int
               ) -> tuple[dict[str, float], float]:
    """Share of videos whose true class misses the k most frequent neighbor labels.

    Label ranking ties break by total neighbor similarity, then label order.
    """
    counts: dict[str, dict[str, int]] = {}
    sims: dict[str, dict[str, float]] = {}
    for vid, _qlabel, counted in _frame_fractions(graph, labels):
        vc = counts.setdefault(vid, {})
        vs = sims.setdefault(vid, {})
        for nlabel, sim in counted:
            vc[nlabel] = vc.get(nlabel, 0) + 1
            vs[nlabel] = vs.get(nlabel, 0.0) + sim

    errors: dict[str, list[bool]] = {}
    for vid, qlabel in labels.items():
        if vid not in counts:
            continue
        ranked = sorted(counts[vid], key=lambda lab: (-counts[vid][lab], -sims[vid][lab], lab))
        errors.setdefault(qlabel, []).append(qlabel not in ranked[:k_labels])
    per_class = {
        label: 100.0 * sum(errs) / len(errs) for label, errs in sorted(errors.items())
    }
    return per_class, _macro(per_class)


def retrieval_confusion(graph: NeighborGraph, labels: dict[str, str]
                        ) -> tuple[list[str], np.ndarray]:
    """Row-normalized query-class by retrieved-class percentages.

    Rows average per-frame neighbor distributions, so the diagonal equals
    the per-class retrieval correctness.
    """
    classes = sorted(set(labels.values()))
    index = {label: i for i, label in enumerate(classes)}
    sums = np.zeros((len(classes), len(classes)))
    frames = np.zeros(len(classes))
    for _vid, qlabel, counted in _frame_fractions(graph, labels):
        row = np.zeros(len(classes))
        for nlabel, _sim in counted:
            row[index[nlabel]] += 1.0
        sums[index[qlabel]] += row / len(counted)
        frames[index[qlabel]] += 1
    matrix = np.zeros_like(sums)
    nonzero = frames > 0
    matrix[nonzero] = 100.0 * sums[nonzero] / frames[nonzero, None]
    return classes, matrix


@dataclass
class EvalReport:
    classes: list[str]
    corloc_per_class: dict[str, float] | None = None
    corloc_average: float | None = None
    corret_per_class: dict[str, float] | None = None
    corret_average: float | None = None
    top1_per_class: dict[str, float] | None = None
    top1_average: float | None = None
    top2_per_class: dict[str, float] | None = None
    top2_average: float | None = None
    confusion: np.ndarray | None = None

    def to_records(self) -> list[dict]:
        records: list[dict] = []

        def metric(name, per_class, average):
            if per_class is None:
                return
            records.append(
                {
                    "type": "metric",
                    "name": name,
                    "per_class": {k: round(v, 6) for k, v in per_class.items()},
                    "average": round(average, 6),
                }
            )

        metric("corloc", self.corloc_per_class, self.corloc_average)
        metric("corret", self.corret_per_class, self.corret_average)
        metric("top1_error", self.top1_per_class, self.top1_average)
        metric("top2_error", self.top2_per_class, self.top2_average)
        if self.confusion is not None:
            records.append(
                {
                    "type": "confusion",
                    "classes": self.classes,
                    "rows": [[round(v, 6) for v in row] for row in self.confusion],
                }
            )
        return records

    def table(self) -> str:
        """Aligned per-class table plus the confusion matrix."""
        width = max([len(c) for c in self.classes] + [9])
        header = ["metric".ljust(12)] + [c.rjust(width) for c in self.classes]
        header.append("avg".rjust(width))
        lines = ["  ".join(header)]

        def row(name, per_class, average):
            if per_class is None:
                return
            cells = [name.ljust(12)]
            cells += [f"{per_class.get(c, float('nan')):.1f}".rjust(width) for c in self.classes]
            cells.append(f"{average:.1f}".rjust(width))
            lines.append("  ".join(cells))

        row("CorLoc", self.corloc_per_class, self.corloc_average)
        row("CorRet", self.corret_per_class, self.corret_average)
        row("Top-1 err", self.top1_per_class, self.top1_average)
        row("Top-2 err", self.top2_per_class, self.top2_average)
        if self.confusion is not None:
            lines.append("")
            lines.append("retrieval confusion (rows: query class, % per retrieved class)")
            for label, values in zip(self.classes, self.confusion):
                cells = [label.ljust(12)] + [f"{v:.1f}".rjust(width) for v in values]
                lines.append("  ".join(cells))
        return "\n".join(lines)


def evaluate(collection: Collection, tubes: dict[str, Tube] | None = None,
             graph: NeighborGraph | None = None) -> EvalReport:
    """Compute every metric available from the given predictions."""
    labels = video_labels(collection)
    classes = sorted(set(labels.values()))
    report = EvalReport(classes=classes)
    if tubes is not None:
        report.corloc_per_class, report.corloc_average = corloc(tubes, collection)
    if graph is not None and labels:
        report.corret_per_class, report.corret_average = corret(graph, labels)
        report.top1_per_class, report.top1_average = topk_error(graph, labels, 1)
        report.top2_per_class, report.top2_average = topk_error(graph, labels, 2)
        report.classes, report.confusion = retrieval_confusion(graph, labels)
    return report
