import json
import subprocess
import sys

import numpy as np
import pytest

from vrseval.cli import main
from vrseval.data import save_dataset
from vrseval.mask import RleMask

from conftest import micro_catalog, perfect_dataset, random_micro_dataset


def write_catalog(tmp_path, catalog, name="catalog.json"):
    raw = {
        "kind": catalog.kind,
        "objects": list(catalog.object_names),
        "predicates": list(catalog.predicate_names),
        "relations": [list(r) for r in catalog.relation_classes],
        "train_counts": list(catalog.train_counts),
        "person_category": catalog.person_category,
        "subject_fixed": catalog.subject_fixed,
        "drop_predicates": [],
        "uo_unseen_objects": list(catalog.uo_unseen_objects),
        "no_object_predicates": list(catalog.no_object_predicates),
    }
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture
def perfect_files(tmp_path):
    cat = micro_catalog(n_obj=2, n_pred=2)
    ds = perfect_dataset(cat, n_images=3)
    gt = tmp_path / "gt.jsonl"
    save_dataset(ds, gt)
    catalog = write_catalog(tmp_path, cat)
    return gt, catalog, ds


class TestEval:
    def test_perfect_full_map(self, perfect_files, tmp_path, capsys):
        gt, catalog, _ = perfect_files
        out = tmp_path / "report.json"
        rc = main(["eval", "--gt", str(gt), "--catalog", str(catalog),
                   "--output", str(out), "--figures", "none"])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["aggregates"]["full_map"] == 1.0
        assert (tmp_path / "report.summary.txt").exists()
        assert (tmp_path / "report.per_category.csv").exists()

    def test_psg_preset_reports_all_ks(self, tmp_path, rng):
        cat = micro_catalog(n_obj=3, n_pred=3, kind="psg")
        ds = random_micro_dataset(rng, n_images=4, catalog=cat)
        gt = tmp_path / "gt.jsonl"
        save_dataset(ds, gt)
        catalog = write_catalog(tmp_path, cat)
        out = tmp_path / "report.json"
        rc = main(["eval", "--task", "psg", "--gt", str(gt), "--catalog", str(catalog),
                   "--output", str(out), "--figures", "none"])
        assert rc == 0
        agg = json.loads(out.read_text())["aggregates"]
        for k in (20, 50, 100):
            assert f"recall@{k}" in agg
            assert f"mean_recall@{k}" in agg

    def test_byte_identical_across_runs(self, perfect_files, tmp_path):
        gt, catalog, _ = perfect_files
        outs = []
        for name in ("a", "b"):
            d = tmp_path / name
            d.mkdir()
            out = d / "report.json"
            rc = main(["eval", "--gt", str(gt), "--catalog", str(catalog),
                       "--output", str(out), "--threads", "2"])
            assert rc == 0
            blob = b"".join(sorted(p.read_bytes() for p in d.iterdir()))
            outs.append(blob)
        assert outs[0] == outs[1]

    def test_figures_written_alongside(self, perfect_files, tmp_path):
        gt, catalog, _ = perfect_files
        out = tmp_path / "report.json"
        rc = main(["eval", "--gt", str(gt), "--catalog", str(catalog), "--output", str(out)])
        assert rc == 0
        pngs = list(tmp_path.glob("*.png"))
        assert pngs, "expected figures next to the report"

    def test_split_aggregates(self, perfect_files, tmp_path):
        gt, catalog, ds = perfect_files
        n = len(ds.catalog.relation_classes)
        split = {"kind": "rf-uc", "seed": None, "unseen": list(range(n // 2)),
                 "seen": list(range(n // 2, n)), "unseen_objects": [],
                 "unseen_predicates": []}
        split_path = tmp_path / "split.json"
        split_path.write_text(json.dumps(split))
        out = tmp_path / "report.json"
        rc = main(["eval", "--gt", str(gt), "--catalog", str(catalog),
                   "--split", str(split_path), "--output", str(out), "--figures", "none"])
        assert rc == 0
        agg = json.loads(out.read_text())["aggregates"]
        assert "unseen_map" in agg and "seen_map" in agg

    def test_missing_file_is_input_error(self, tmp_path, capsys):
        rc = main(["eval", "--gt", str(tmp_path / "nope.jsonl")])
        assert rc == 1


class TestConvert:
    def _files(self, tmp_path, rng, with_candidates=True, sub_threshold=False):
        from vrseval.data import Dataset, Entity, GtTriplet, ImageRecord
        from vrseval.mask import BBox
        from conftest import rect_mask

        cat = micro_catalog()
        rec = ImageRecord(image_id="img", height=64, width=64)
        rec.gt.append(GtTriplet(
            subject=Entity(0, box=BBox(0, 0, 32, 32)),
            object=Entity(1, box=BBox(32, 32, 64, 64)),
            predicate_ids=(0,),
        ))
        ds = Dataset(images=[rec], catalog=cat)
        gt = tmp_path / "gt.jsonl"
        save_dataset(ds, gt)
        catalog = write_catalog(tmp_path, cat)
        cands = tmp_path / "cands.jsonl"
        rows = []
        if with_candidates:
            # tight box (0,0,32,6) vs source box (0,0,32,32): IoU 0.1875 < 0.2
            sub_mask = rect_mask(64, 64, 0, 0, 32, 6 if sub_threshold else 32)
            obj_mask = rect_mask(64, 64, 32, 32, 64, 64)
            rows.append({"image_id": "img", "candidates": [
                {"box_index": 0, "mask": sub_mask.to_json()},
                {"box_index": 1, "mask": obj_mask.to_json()},
            ]})
        cands.write_text("".join(json.dumps(r) + "\n" for r in rows))
        return gt, catalog, cands

    def test_sub_threshold_candidate_reported(self, tmp_path, rng):
        gt, catalog, cands = self._files(tmp_path, rng, sub_threshold=True)
        out = tmp_path / "out.jsonl"
        report = tmp_path / "report.json"
        rc = main(["convert", "--gt", str(gt), "--candidates", str(cands),
                   "--catalog", str(catalog), "--output", str(out), "--report", str(report)])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert rep["reason_counts"].get("below_threshold") == 1
        assert rep["dropped_triplets"][0]["reason"] == "no mask"

    def test_empty_candidate_file_drops_all_with_reason(self, tmp_path, rng):
        gt, catalog, cands = self._files(tmp_path, rng, with_candidates=False)
        out = tmp_path / "out.jsonl"
        report = tmp_path / "report.json"
        rc = main(["convert", "--gt", str(gt), "--candidates", str(cands),
                   "--catalog", str(catalog), "--output", str(out), "--report", str(report)])
        assert rc == 0
        rep = json.loads(report.read_text())
        assert all(d["reason"] == "no mask" for d in rep["dropped_triplets"])
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert lines[0]["gt"] == []
        assert lines[0]["image_id"] == "img"

    def test_rerun_on_own_output_is_identity(self, tmp_path, rng):
        gt, catalog, cands = self._files(tmp_path, rng)
        out1 = tmp_path / "out1.jsonl"
        rc = main(["convert", "--gt", str(gt), "--candidates", str(cands),
                   "--catalog", str(catalog), "--output", str(out1)])
        assert rc == 0
        out2 = tmp_path / "out2.jsonl"
        rc = main(["convert", "--gt", str(out1), "--candidates", str(cands),
                   "--catalog", str(catalog), "--output", str(out2)])
        assert rc == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestMakeSplits:
    def test_rf_uc_on_bundled_catalog(self, tmp_path):
        out = tmp_path / "split.json"
        rc = main(["make-splits", "--kind", "rf-uc", "--task", "hico", "--output", str(out)])
        assert rc == 0
        split = json.loads(out.read_text())
        assert len(split["unseen"]) == 115
        assert len(split["seen"]) == 405

    def test_uo_fixture_objects(self, tmp_path):
        out = tmp_path / "split.json"
        rc = main(["make-splits", "--kind", "uo", "--task", "hico",
                   "--use-fixture-objects", "--output", str(out)])
        assert rc == 0
        split = json.loads(out.read_text())
        assert len(split["unseen"]) == 88
        assert len(split["seen"]) == 432

    def test_seeded_determinism(self, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            rc = main(["make-splits", "--kind", "uo", "--task", "hico",
                       "--seed", "7", "--output", str(out)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_constraint_violation_exits_2(self, tmp_path):
        # predicate "q" lives only in the lowest-count relation, so withholding
        # the tail violates the composition-only requirement
        raw = {
            "kind": "custom",
            "objects": ["a", "b"],
            "predicates": ["p", "q"],
            "relations": [[0, 1], [0, 0], [1, 0]],
            "train_counts": [1, 50, 60],
            "person_category": 0,
            "subject_fixed": None,
            "drop_predicates": [],
            "uo_unseen_objects": [],
            "no_object_predicates": [],
        }
        catalog = tmp_path / "catalog.json"
        catalog.write_text(json.dumps(raw))
        rc = main(["make-splits", "--kind", "rf-uc", "--catalog", str(catalog),
                   "--n", "1", "--output", str(tmp_path / "s.json")])
        assert rc == 2


class TestEvalPrompt:
    def _files(self, tmp_path, rng):
        cat = micro_catalog(n_obj=3, n_pred=3)
        ds = random_micro_dataset(rng, n_images=2, max_gt=2, max_noise=1, catalog=cat)
        # attach embeddings aligned with predicate argmax
        for im in ds.images:
            new = []
            for p in im.preds:
                arg = int(np.argmax(p.predicate_scores))
                e = np.zeros(3)
                e[arg] = 1.0
                new.append(type(p)(
                    subject_mask=p.subject_mask, object_mask=p.object_mask,
                    subject_scores=p.subject_scores, object_scores=p.object_scores,
                    predicate_scores=p.predicate_scores,
                    subject_box=p.subject_box, object_box=p.object_box,
                    subject_embed=np.zeros(3), object_embed=np.zeros(3),
                    predicate_embed=e,
                ))
            im.preds[:] = new
        gt = tmp_path / "gt.jsonl"
        save_dataset(ds, gt)
        catalog = write_catalog(tmp_path, cat)
        prompts = tmp_path / "prompts.jsonl"
        feature = [1.0, 0.0, 0.0]
        rows = [json.dumps({"image_id": im.image_id, "prompt": "<p>pred0</p>",
                            "feature": feature}) for im in ds.images]
        prompts.write_text("\n".join(rows) + "\n")
        return gt, catalog, prompts

    def test_similarity_path(self, tmp_path, rng):
        gt, catalog, prompts = self._files(tmp_path, rng)
        out = tmp_path / "out.json"
        rc = main(["eval-prompt", "--prompts", str(prompts), "--gt", str(gt),
                   "--catalog", str(catalog), "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert len(payload["prompts"]) == 2
        assert "siou" in payload
        assert all(p["method"] == "similarity" for p in payload["prompts"])

    def test_baseline_path(self, tmp_path, rng):
        gt, catalog, prompts = self._files(tmp_path, rng)
        out = tmp_path / "out.json"
        rc = main(["eval-prompt", "--prompts", str(prompts), "--gt", str(gt),
                   "--catalog", str(catalog), "--baseline", "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert all(p["method"] == "baseline" for p in payload["prompts"])

    def test_default_k_is_10(self, tmp_path, rng):
        gt, catalog, prompts = self._files(tmp_path, rng)
        out = tmp_path / "out.json"
        rc = main(["eval-prompt", "--prompts", str(prompts), "--gt", str(gt),
                   "--catalog", str(catalog), "--baseline", "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert all(len(p["selected"]) <= 10 for p in payload["prompts"])


class TestMatchDebug:
    def test_single_pair(self, tmp_path, rng):
        cat = micro_catalog(n_obj=2, n_pred=2)
        ds = perfect_dataset(cat, n_images=1)
        ds.images[0].gt = ds.images[0].gt[:1]
        ds.images[0].preds = ds.images[0].preds[:1]
        gt = tmp_path / "gt.jsonl"
        save_dataset(ds, gt)
        catalog = write_catalog(tmp_path, cat)
        out = tmp_path / "out.json"
        rc = main(["match-debug", "--gt", str(gt), "--catalog", str(catalog),
                   "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        img = payload["images"][0]
        assert img["assignment"]["pairs"] == [[0, 0]]
        assert len(img["cost_matrix"]) == 1

    def test_cost_matrix_mode(self, tmp_path):
        costs = tmp_path / "costs.json"
        costs.write_text(json.dumps({"costs": [[5.0, 1.0], [1.0, 5.0]]}))
        out = tmp_path / "out.json"
        rc = main(["match-debug", "--cost-matrix", str(costs), "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["assignment"]["pairs"] == [[0, 1], [1, 0]]
        assert payload["assignment"]["total_cost"] == 2.0


class TestMaskIou:
    def test_batch(self, tmp_path):
        a = RleMask(4, 4, [0, 16]).to_json()
        b = RleMask(4, 4, [8, 8]).to_json()
        pairs = tmp_path / "pairs.json"
        pairs.write_text(json.dumps({"pairs": [[a, a], [a, b]]}))
        out = tmp_path / "out.json"
        rc = main(["mask-iou", "--pairs", str(pairs), "--output", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["iou"] == [1.0, 0.5]

    def test_empty_batch(self, tmp_path):
        pairs = tmp_path / "pairs.json"
        pairs.write_text(json.dumps({"pairs": []}))
        out = tmp_path / "out.json"
        rc = main(["mask-iou", "--pairs", str(pairs), "--output", str(out)])
        assert rc == 0
        assert json.loads(out.read_text())["iou"] == []


def test_console_entry_point(perfect_files, tmp_path):
    gt, catalog, _ = perfect_files
    out = tmp_path / "report.json"
    proc = subprocess.run(
        [sys.executable, "-m", "vrseval.cli", "eval", "--gt", str(gt),
         "--catalog", str(catalog), "--output", str(out), "--figures", "none"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["aggregates"]["full_map"] == 1.0
    assert proc.stdout == ""  # results went to the file, diagnostics to stderr


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as err:
        main(["eval"])  # --gt is required
    assert err.value.code == 1
