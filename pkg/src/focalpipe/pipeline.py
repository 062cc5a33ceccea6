"""End-to-end orchestration shared by the CLI, the experiment scripts and
the acceptance suite: cluster boxes, build regions, refine ground truth,
detect (oracle or external), merge, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .boxgeom import Box, ScoredBox
from .config import PipelineConfig
from .evalkit import EvalReport, GtAnnotation, coco_eval
from .focal import FocalRegion, RefinedCrop, refine_gt, regions_from_clusters
from .fuse import RegionDetections, merge_pipeline
from .mixture import FeatureGrid, assign_clusters, featurize, fit_em, num_focal_regions
from .scenes import OracleSpec, Scene, SceneSpec, generate_scene, oracle_detect


def cluster_boxes(
    boxes: Sequence[Box],
    image_size: tuple[float, float],
    config: PipelineConfig,
    seed: int = 0,
) -> list[int]:
    """Featurize boxes and fit the per-image mixture; returns cluster labels."""
    grid = FeatureGrid(
        rows=config.grid_rows,
        cols=config.grid_cols,
        image_width=image_size[0],
        image_height=image_size[1],
    )
    features = featurize(boxes, grid)
    k = num_focal_regions(len(boxes))
    model = fit_em(features, k, config.em_config(rng_seed=seed), grid=grid)
    return assign_clusters(model, features)


def regions_for_image(
    annotations: Sequence[GtAnnotation],
    image_size: tuple[float, float],
    config: PipelineConfig,
    image_id: str = "",
    seed: int = 0,
) -> list[FocalRegion]:
    """GMM focal regions for one image; ignore-flagged annotations are skipped."""
    boxes = [a.box for a in annotations if not a.ignore]
    if not boxes:
        return []
    labels = cluster_boxes(boxes, image_size, config, seed=seed)
    return regions_from_clusters(
        boxes,
        labels,
        image_size,
        margin=config.margin,
        detector_size=config.detector_size,
        image_id=image_id,
    )


def refine_image(
    regions: Sequence[FocalRegion],
    annotations: Sequence[GtAnnotation],
    config: PipelineConfig,
) -> list[RefinedCrop]:
    pairs = [(a.box, a.class_id) for a in annotations if not a.ignore]
    return [refine_gt(r, pairs, keep_threshold=config.keep_threshold) for r in regions]


@dataclass
class SceneRun:
    """All artifacts of one synthetic scene pushed through the pipeline."""

    scene: Scene
    regions: list[FocalRegion]
    crops: list[RefinedCrop]
    region_detections: list[RegionDetections]
    merged: list[ScoredBox]
    merged_no_ibs: list[ScoredBox] = field(default_factory=list)


def run_scene(
    scene_spec: SceneSpec,
    oracle_spec: OracleSpec,
    config: PipelineConfig = PipelineConfig(),
    image_id: str = "scene",
    with_no_ibs: bool = False,
) -> SceneRun:
    """Synthesize one scene and run focus, refine, oracle detect and merge."""
    scene = generate_scene(scene_spec)
    annotations = [GtAnnotation(box=b, class_id=c) for b, c in scene.annotations]
    regions = regions_for_image(
        annotations, scene.image_size, config, image_id=image_id, seed=scene_spec.rng_seed
    )
    crops = refine_image(regions, annotations, config)
    region_detections = [oracle_detect(crop, oracle_spec) for crop in crops]
    merged = merge_pipeline(region_detections, config.fuse_config(), apply_ibs=True)
    run = SceneRun(
        scene=scene,
        regions=regions,
        crops=crops,
        region_detections=region_detections,
        merged=merged,
    )
    if with_no_ibs:
        run.merged_no_ibs = merge_pipeline(
            region_detections, config.fuse_config(), apply_ibs=False
        )
    return run


def evaluate_runs(
    runs: Sequence[SceneRun], config: PipelineConfig = PipelineConfig(), use_ibs: bool = True
) -> EvalReport:
    """COCO report over a corpus of scene runs treated as one dataset."""
    gts = {}
    dets = {}
    for i, run in enumerate(runs):
        image_id = f"scene{i:04d}"
        gts[image_id] = [GtAnnotation(box=b, class_id=c) for b, c in run.scene.annotations]
        dets[image_id] = run.merged if use_ibs else run.merged_no_ibs
    return coco_eval(dets, gts, max_dets=config.max_dets)
