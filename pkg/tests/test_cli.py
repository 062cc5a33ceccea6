import json
from pathlib import Path

from focalpipe import serialize
from focalpipe.boxgeom import Box, ScoredBox
from focalpipe.cli import main
from focalpipe.evalkit import GtAnnotation
from focalpipe.focal import FocalRegion, make_detector_map
from focalpipe.fuse import RegionDetections


def run(*argv) -> int:
    return main(list(argv))


def snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def write_annotations_doc(path: Path, gts, sizes) -> None:
    serialize.write_json_atomic(path, serialize.annotations_doc(gts, sizes))


class TestExitCodes:
    def test_success_is_zero(self, tmp_path, capsys):
        assert run("synth", "--out", str(tmp_path / "c"), "--seed", "1") == 0

    def test_unknown_option_is_usage_error(self, tmp_path):
        assert run("synth", "--out", str(tmp_path / "c"), "--bogus") == 1

    def test_missing_required_option_is_usage_error(self):
        assert run("synth") == 1

    def test_malformed_input_is_data_error(self, tmp_path):
        bad = tmp_path / "annotations.json"
        bad.write_text("{not json")
        assert (
            run("gen-regions", "--annotations", str(bad), "--out", str(tmp_path / "r.json"))
            == 2
        )

    def test_unknown_config_key_is_data_error(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text('{"no_such_key": 1}')
        ann = tmp_path / "annotations.json"
        write_annotations_doc(ann, {"img": [GtAnnotation(Box(0, 0, 10, 10), 1)]}, {"img": (100, 100)})
        assert (
            run("gen-regions", "--annotations", str(ann), "--out", str(tmp_path / "r.json"),
                "--config", str(cfg))
            == 2
        )

    def test_infeasible_synth_spec_is_data_error(self, tmp_path):
        assert (
            run("synth", "--out", str(tmp_path / "c"), "--seed", "1",
                "--image-width", "20", "--image-height", "20")
            == 2
        )


class TestStageChaining:
    def test_gen_regions_then_refine_gt(self, tmp_path, capsys):
        ann = tmp_path / "annotations.json"
        gts = {
            "img": [
                GtAnnotation(Box(100, 100, 140, 140), 1),
                GtAnnotation(Box(150, 120, 190, 160), 2),
                GtAnnotation(Box(700, 600, 760, 660), 1),
            ]
        }
        write_annotations_doc(ann, gts, {"img": (1000, 800)})
        regions = tmp_path / "regions.json"
        crops = tmp_path / "crops.json"
        assert run("gen-regions", "--annotations", str(ann), "--out", str(regions),
                   "--seed", "3") == 0
        assert run("refine-gt", "--annotations", str(ann), "--regions", str(regions),
                   "--out", str(crops)) == 0
        per_image = serialize.crops_from_doc(json.loads(crops.read_text()))
        assert sum(len(c.gt) for c in per_image["img"]) >= len(gts["img"])

    def test_visdrone_directory_requires_image_sizes(self, tmp_path):
        ann_dir = tmp_path / "ann"
        ann_dir.mkdir()
        (ann_dir / "img.txt").write_text("10,20,30,40,1,1,0,0\n")
        assert run("gen-regions", "--annotations", str(ann_dir),
                   "--out", str(tmp_path / "r.json")) == 2
        sizes = tmp_path / "sizes.json"
        sizes.write_text('{"img": [200, 200]}')
        assert run("gen-regions", "--annotations", str(ann_dir), "--image-sizes", str(sizes),
                   "--out", str(tmp_path / "r.json")) == 0


class TestMerge:
    def region_detection_doc(self):
        """Two overlapping regions; region B holds a truncated duplicate."""
        region_a = FocalRegion(
            rect=Box(0, 0, 300, 200), region_id=0, image_id="img",
            to_detector=make_detector_map(Box(0, 0, 300, 200), 300, 200),
        )
        region_b = FocalRegion(
            rect=Box(250, 0, 550, 200), region_id=1, image_id="img",
            to_detector=make_detector_map(Box(250, 0, 550, 200), 300, 200),
        )
        complete = ScoredBox(box=Box(200, 50, 300, 150), class_id=0, score=0.9)
        truncated = ScoredBox(box=Box(0, 52, 50, 148), class_id=0, score=0.6)
        per_image = {
            "img": [
                RegionDetections(region=region_a, detections=[complete]),
                RegionDetections(region=region_b, detections=[truncated]),
            ]
        }
        return serialize.region_detections_doc(per_image)

    def test_no_ibs_keeps_strictly_more_boxes(self, tmp_path, capsys):
        rd = tmp_path / "rd.json"
        serialize.write_json_atomic(rd, self.region_detection_doc())
        with_ibs = tmp_path / "merged.json"
        without = tmp_path / "merged_no_ibs.json"
        assert run("merge", "--region-detections", str(rd), "--out", str(with_ibs)) == 0
        assert run("merge", "--region-detections", str(rd), "--out", str(without),
                   "--no-ibs") == 0
        n_ibs = len(serialize.merged_detections_from_doc(json.loads(with_ibs.read_text()))["img"])
        n_plain = len(serialize.merged_detections_from_doc(json.loads(without.read_text()))["img"])
        assert n_ibs < n_plain

    def test_visdrone_results_written(self, tmp_path, capsys):
        rd = tmp_path / "rd.json"
        serialize.write_json_atomic(rd, self.region_detection_doc())
        assert run("merge", "--region-detections", str(rd), "--out", str(tmp_path / "m.json"),
                   "--out-visdrone", str(tmp_path / "results")) == 0
        assert (tmp_path / "results" / "img.txt").exists()


class TestEval:
    def test_detections_equal_gt_scores_ap_100(self, tmp_path, capsys):
        gts = {
            "img": [
                GtAnnotation(Box(10, 10, 50, 50), 1),
                GtAnnotation(Box(100, 100, 160, 160), 2),
            ]
        }
        ann = tmp_path / "annotations.json"
        write_annotations_doc(ann, gts, {"img": (200, 200)})
        dets = {
            "img": [ScoredBox(box=g.box, class_id=g.class_id, score=0.9) for g in gts["img"]]
        }
        det_path = tmp_path / "merged.json"
        serialize.write_json_atomic(det_path, serialize.merged_detections_doc(dets))
        report_path = tmp_path / "report.json"
        assert run("eval", "--detections", str(det_path), "--annotations", str(ann),
                   "--out", str(report_path), "--voc-iou", "0.7",
                   "--table", str(tmp_path / "table.txt"),
                   "--pr-csv", str(tmp_path / "pr.csv")) == 0
        doc = json.loads(report_path.read_text())
        assert doc["ap"] == 100.0
        assert doc["ap50"] == 100.0
        assert doc["voc_ap"] == 100.0
        assert (tmp_path / "table.txt").read_text().strip()
        header = (tmp_path / "pr.csv").read_text().splitlines()[0]
        assert header == "class_id,score,precision,recall"


class TestPipelineDeterminism:
    def test_same_seed_is_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["pipeline", "--seed", "7", "--num-scenes", "3"]
        assert run(*args, "--out", str(a)) == 0
        assert run(*args, "--out", str(b)) == 0
        assert snapshot(a) == snapshot(b)

    def test_auto_seed_recorded_in_metadata(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert run("synth", "--out", str(out), "--num-scenes", "1") == 0
        meta = json.loads((out / "metadata.json").read_text())
        assert isinstance(meta["seed"], int)

    def test_report_records_seed_and_ibs_flag(self, tmp_path, capsys):
        out = tmp_path / "p"
        assert run("pipeline", "--seed", "5", "--num-scenes", "2", "--out", str(out),
                   "--no-ibs") == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["seed"] == 5
        assert doc["ibs"] is False
