"""Synthetic scene generation and an oracle detector for closed-loop testing.

Scenes are clusters of boxes with cluster-correlated sizes, standing in for
aerial imagery; the oracle detector perturbs crop-level ground truth with
localization noise, misses, false positives and class flips on truncated
boxes. Everything is reproducible bit-for-bit from the configured seeds.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .boxgeom import Box, ScoredBox, area, clip
from .focal import RefinedCrop, crop_gt_to_detector
from .fuse import RegionDetections


@dataclass(frozen=True)
class SceneSpec:
    image_size: tuple[int, int] = (1600, 1200)
    n_clusters: int = 4
    boxes_per_cluster: tuple[int, int] = (5, 12)
    cluster_spread: float = 60.0
    box_size_range: tuple[float, float] = (16.0, 48.0)
    classes: int = 3
    rng_seed: int = 0
    # per-cluster size multiplier range; makes cluster scale vary the way
    # altitude and viewing angle do, so crop-and-resize has something to
    # normalize
    size_multiplier_range: tuple[float, float] = (0.5, 2.5)


@dataclass(frozen=True)
class OracleSpec:
    localization_noise: float = 2.0
    score_mean_tp: float = 0.8
    score_std: float = 0.05
    miss_rate: float = 0.05
    false_positive_rate: float = 0.5
    class_flip_rate_truncated: float = 0.5
    n_classes: int = 3
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("score_mean_tp", "miss_rate", "class_flip_rate_truncated"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass
class Scene:
    annotations: list[tuple[Box, int]]
    labels: list[int]
    image_size: tuple[int, int]


@dataclass
class ScaleStats:
    cv_raw: Optional[float]
    cv_cropped: Optional[float]
    per_class_raw: dict[int, Optional[float]] = field(default_factory=dict)
    per_class_cropped: dict[int, Optional[float]] = field(default_factory=dict)


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample clustered boxes; returns annotations plus true cluster labels."""
    w, h = spec.image_size
    max_size = spec.box_size_range[1] * spec.size_multiplier_range[1]
    if max_size >= w or max_size >= h:
        raise ValueError("boxes cannot fit inside the image for this spec")
    rng = np.random.default_rng(spec.rng_seed)

    annotations: list[tuple[Box, int]] = []
    labels: list[int] = []
    # Cluster centers sit on a jittered grid so clusters stay spatially
    # separated; overlapping clusters would make one focal region swallow
    # boxes at a very different scale.
    grid_cols = int(np.ceil(np.sqrt(spec.n_clusters * w / h)))
    grid_rows = int(np.ceil(spec.n_clusters / grid_cols))
    cells = [(r, c) for r in range(grid_rows) for c in range(grid_cols)]
    chosen = rng.permutation(len(cells))[: spec.n_clusters]
    cell_w, cell_h = w / grid_cols, h / grid_rows
    for cluster in range(spec.n_clusters):
        row, col = cells[int(chosen[cluster])]
        cx = (col + 0.5) * cell_w + rng.uniform(-0.1, 0.1) * cell_w
        cy = (row + 0.5) * cell_h + rng.uniform(-0.1, 0.1) * cell_h
        multiplier = rng.uniform(*spec.size_multiplier_range)
        # the multiplier scales spread along with box size: a cluster seen
        # from lower altitude has both larger objects and larger extent
        spread = spec.cluster_spread * multiplier
        n_boxes = int(rng.integers(spec.boxes_per_cluster[0], spec.boxes_per_cluster[1] + 1))
        for _ in range(n_boxes):
            bw = rng.uniform(*spec.box_size_range) * multiplier
            bh = rng.uniform(*spec.box_size_range) * multiplier
            # offsets truncated at 2 sigma keep the cluster footprint
            # proportional to its multiplier
            x = cx + float(np.clip(rng.normal(0.0, spread), -2 * spread, 2 * spread))
            y = cy + float(np.clip(rng.normal(0.0, spread), -2 * spread, 2 * spread))
            x = float(np.clip(x, bw / 2, w - bw / 2))
            y = float(np.clip(y, bh / 2, h - bh / 2))
            box = Box(x - bw / 2, y - bh / 2, x + bw / 2, y + bh / 2)
            annotations.append((box, int(rng.integers(spec.classes))))
            labels.append(cluster)
    return Scene(annotations=annotations, labels=labels, image_size=spec.image_size)


def _crop_rng(spec: OracleSpec, crop: RefinedCrop) -> np.random.Generator:
    image_hash = zlib.crc32(crop.region.image_id.encode("utf-8"))
    seq = np.random.SeedSequence([spec.rng_seed, crop.region.region_id, image_hash])
    return np.random.default_rng(seq)


def oracle_detect(crop: RefinedCrop, spec: OracleSpec) -> RegionDetections:
    """Emit noise-perturbed crop ground truth as detector-frame detections."""
    rng = _crop_rng(spec, crop)
    det_w, det_h = crop.region.detector_size
    frame = Box(0.0, 0.0, det_w, det_h)

    detections: list[ScoredBox] = []
    for box, class_id, fraction in crop_gt_to_detector(crop):
        if rng.uniform() < spec.miss_rate:
            continue
        if spec.localization_noise > 0:
            jitter = rng.normal(0.0, spec.localization_noise, size=4)
            x1 = min(box.x1 + jitter[0], box.x2 + jitter[2] - 1e-6)
            y1 = min(box.y1 + jitter[1], box.y2 + jitter[3] - 1e-6)
            box = Box(x1, y1, box.x2 + jitter[2], box.y2 + jitter[3])
        out_class = class_id
        if fraction < 1.0 and spec.n_classes > 1 and rng.uniform() < spec.class_flip_rate_truncated:
            out_class = int((class_id + 1 + rng.integers(spec.n_classes - 1)) % spec.n_classes)
        if spec.score_std > 0:
            score = float(np.clip(rng.normal(spec.score_mean_tp, spec.score_std), 0.0, 1.0))
        else:
            score = spec.score_mean_tp
        clipped = clip(box, frame)
        if clipped is not None:
            detections.append(ScoredBox(box=clipped, class_id=out_class, score=score))

    n_fp = int(rng.poisson(spec.false_positive_rate))
    for _ in range(n_fp):
        fw = rng.uniform(0.02, 0.15) * det_w
        fh = rng.uniform(0.02, 0.15) * det_h
        fx = rng.uniform(0.0, det_w - fw)
        fy = rng.uniform(0.0, det_h - fh)
        score = float(np.clip(rng.normal(0.3, 0.1), 0.0, 1.0))
        detections.append(
            ScoredBox(
                box=Box(fx, fy, fx + fw, fy + fh),
                class_id=int(rng.integers(spec.n_classes)),
                score=score,
            )
        )
    return RegionDetections(region=crop.region, detections=detections)


def _cv(areas: Sequence[float]) -> Optional[float]:
    if len(areas) < 2:
        return None
    arr = np.asarray(areas, dtype=float)
    mean = arr.mean()
    if mean == 0:
        return None
    return float(arr.std() / mean)


def scale_stats(
    crops: Sequence[RefinedCrop], raw_annotations: Sequence[tuple[Box, int]]
) -> ScaleStats:
    """Coefficient of variation of box areas, raw vs after crop-and-resize.

    Cropped areas are measured in the detector frame each crop maps onto, so
    the statistic reflects what the second-stage detector actually sees.
    """
    raw_areas = [area(b) for b, _ in raw_annotations]
    raw_by_class: dict[int, list[float]] = {}
    for b, c in raw_annotations:
        raw_by_class.setdefault(c, []).append(area(b))

    cropped_areas: list[float] = []
    cropped_by_class: dict[int, list[float]] = {}
    for crop in crops:
        for box, class_id, _ in crop_gt_to_detector(crop):
            a = area(box)
            cropped_areas.append(a)
            cropped_by_class.setdefault(class_id, []).append(a)

    return ScaleStats(
        cv_raw=_cv(raw_areas),
        cv_cropped=_cv(cropped_areas),
        per_class_raw={c: _cv(v) for c, v in sorted(raw_by_class.items())},
        per_class_cropped={c: _cv(v) for c, v in sorted(cropped_by_class.items())},
    )
