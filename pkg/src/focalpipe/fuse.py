"""Merging per-region detections into image-level results.

Pipeline: remap each region's detections back to image coordinates,
concatenate, run per-class greedy NMS, then Incomplete Box Suppression (IBS)
across overlapping regions. IBS lets a complete box from one region suppress
the truncated duplicate another region predicted for the same object, which
plain NMS misses because the truncated pair's IoU is small.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .boxgeom import Box, ScoredBox, apply_map, clip, iou
from .focal import FocalRegion


@dataclass
class RegionDetections:
    """Detections belonging to one focal region, in detector-frame coordinates."""

    region: FocalRegion
    detections: list[ScoredBox] = field(default_factory=list)


@dataclass(frozen=True)
class FuseConfig:
    nms_iou: float = 0.5
    ibs_region_iou: float = 0.05
    ibs_box_iou: float = 0.5
    per_class: bool = True

    def __post_init__(self) -> None:
        for name in ("nms_iou", "ibs_region_iou", "ibs_box_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def ingest_detections(region: FocalRegion, detections: Sequence[ScoredBox]) -> RegionDetections:
    """Clamp raw detector output to the detector frame, dropping empty boxes."""
    det_w, det_h = region.detector_size
    frame = Box(0.0, 0.0, det_w, det_h)
    kept = []
    for d in detections:
        clipped = clip(d.box, frame)
        if clipped is not None:
            kept.append(ScoredBox(box=clipped, class_id=d.class_id, score=d.score))
    return RegionDetections(region=region, detections=kept)


def remap_to_image(rd: RegionDetections) -> list[ScoredBox]:
    """Map detector-frame detections back to image coordinates."""
    inverse = rd.region.to_detector.invert()
    return [
        ScoredBox(box=apply_map(d.box, inverse), class_id=d.class_id, score=d.score)
        for d in rd.detections
    ]


def nms_indices(
    boxes: Sequence[ScoredBox], iou_threshold: float, per_class: bool = True
) -> list[int]:
    """Indices of NMS survivors, in selection order."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in [0, 1]")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    for i in order:
        candidate = boxes[i]
        suppressed = False
        for j in kept:
            keeper = boxes[j]
            if per_class and keeper.class_id != candidate.class_id:
                continue
            if iou(keeper.box, candidate.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def nms(
    boxes: Sequence[ScoredBox], iou_threshold: float, per_class: bool = True
) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Boxes are visited in descending score order (ties broken by earlier input
    index); a box is suppressed iff its IoU with an already-kept box of the
    same class (when per_class) exceeds the threshold. Returns survivors in
    selection order with original scores.
    """
    return [boxes[i] for i in nms_indices(boxes, iou_threshold, per_class)]


def _check_in_region(rd: RegionDetections, slack: float = 1.0) -> None:
    r = rd.region.rect
    for d in rd.detections:
        if (
            d.box.x1 < r.x1 - slack
            or d.box.y1 < r.y1 - slack
            or d.box.x2 > r.x2 + slack
            or d.box.y2 > r.y2 + slack
        ):
            raise ValueError(
                f"detection {d.box} lies outside region {rd.region.region_id} rect {r}"
            )


def ibs(per_region: Sequence[RegionDetections], cfg: FuseConfig) -> list[ScoredBox]:
    """Incomplete Box Suppression across overlapping focal regions.

    Input detections must already be in image coordinates. For each region
    C_i: (1) find the other regions whose IoU with C_i exceeds the region
    threshold; (2) clip their boxes to C_i, keeping positive-area clips;
    (3) a box B_ij is suppressed iff some clipped competitor of the same
    class (when per_class) overlaps it beyond the box threshold and outranks
    it: strictly higher score, or equal score from a lower-indexed region.
    The rank rule guarantees a survivor among mutual overlaps.
    """
    for rd in per_region:
        _check_in_region(rd)

    overlapping: dict[int, list[int]] = {}
    for i, rd_i in enumerate(per_region):
        overlapping[i] = [
            k
            for k, rd_k in enumerate(per_region)
            if k != i and iou(rd_i.region.rect, rd_k.region.rect) > cfg.ibs_region_iou
        ]

    survivors: list[ScoredBox] = []
    for i, rd_i in enumerate(per_region):
        # clipped competitor pool: boxes of overlapping regions, clipped to C_i
        competitors: list[tuple[Box, int, float, int]] = []  # clip, class, score, region
        for k in overlapping[i]:
            for d in per_region[k].detections:
                clipped = clip(d.box, rd_i.region.rect)
                if clipped is not None:
                    competitors.append((clipped, d.class_id, d.score, k))

        for d in rd_i.detections:
            suppressed = False
            for c_box, c_class, c_score, c_region in competitors:
                if cfg.per_class and c_class != d.class_id:
                    continue
                outranks = c_score > d.score or (c_score == d.score and c_region < i)
                if outranks and iou(c_box, d.box) > cfg.ibs_box_iou:
                    suppressed = True
                    break
            if not suppressed:
                survivors.append(d)
    return survivors


def merge_pipeline(
    per_region: Sequence[RegionDetections],
    cfg: FuseConfig = FuseConfig(),
    apply_ibs: bool = True,
) -> list[ScoredBox]:
    """Full merge: remap to image space, per-class NMS, then IBS.

    Returns the surviving boxes sorted by descending score (ties by input
    order), so output is deterministic for a fixed input order.
    """
    remapped = [
        RegionDetections(region=rd.region, detections=remap_to_image(rd))
        for rd in per_region
    ]

    flat: list[tuple[ScoredBox, int]] = []
    for region_idx, rd in enumerate(remapped):
        for d in rd.detections:
            flat.append((d, region_idx))
    kept = set(nms_indices([d for d, _ in flat], cfg.nms_iou, per_class=cfg.per_class))

    after_nms = [
        RegionDetections(
            region=rd.region,
            detections=[
                d for fi, (d, ri) in enumerate(flat) if ri == region_idx and fi in kept
            ],
        )
        for region_idx, rd in enumerate(remapped)
    ]

    if apply_ibs:
        final = ibs(after_nms, cfg)
    else:
        final = [d for rd in after_nms for d in rd.detections]
    return sorted(final, key=lambda d: -d.score)
