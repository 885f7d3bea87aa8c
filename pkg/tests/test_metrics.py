import numpy as np
import pytest

from oracles import oracle_hoi_map, oracle_psg_recall, oracle_vcoco_role_ap
from vrseval.data import Dataset, Entity, GtTriplet, ImageRecord, PredTriplet
from vrseval.errors import InputError
from vrseval.mask import mask_iou
from vrseval.metrics import (
    TpRule,
    eval_hoi_map,
    eval_psg_recall,
    eval_siou,
    eval_vcoco_role_ap,
    score_triplet,
    transform_for_fairness,
)

from conftest import micro_catalog, perfect_dataset, random_micro_dataset, rect_mask


class TestScoreTriplet:
    def _pred(self, sub=None, obj=None, pr=None):
        return PredTriplet(
            subject_mask=rect_mask(4, 4, 0, 0, 2, 2),
            object_mask=rect_mask(4, 4, 2, 2, 4, 4),
            subject_scores=None if sub is None else np.asarray(sub, dtype=float),
            object_scores=None if obj is None else np.asarray(obj, dtype=float),
            predicate_scores=None if pr is None else np.asarray(pr, dtype=float),
        )

    def test_all_ones(self):
        p = self._pred(sub=[1, 0], obj=[0, 1], pr=[1, 0])
        assert score_triplet(p, (1, 0), subject_category=0) == 1.0

    def test_missing_subject_head_counts_as_one(self):
        p = self._pred(obj=[0.8, 0.2], pr=[0.5, 0.5])
        assert score_triplet(p, (0, 0)) == pytest.approx(0.4, abs=1e-15)

    def test_zero_factor(self):
        p = self._pred(obj=[0.0, 1.0], pr=[0.5, 0.5])
        assert score_triplet(p, (0, 1)) == 0.0

    def test_out_of_range(self):
        p = self._pred(obj=[1.0, 0.0], pr=[1.0])
        with pytest.raises(ValueError):
            score_triplet(p, (5, 0))


class TestTpRule:
    def test_validation(self):
        with pytest.raises(ValueError):
            TpRule(localization="polygon")
        with pytest.raises(ValueError):
            TpRule(iou_threshold=0.0)


class TestHoiMap:
    def test_single_perfect_prediction(self):
        cat = micro_catalog(n_obj=2, n_pred=2)
        ds = perfect_dataset(cat, n_images=1)
        report = eval_hoi_map(ds, TpRule("mask", 0.5))
        assert report.aggregates["full_map"] == 1.0
        assert all(v == 1.0 for v in report.per_category.values())

    def test_false_positive_above_halves_ap(self):
        cat = micro_catalog(n_obj=1, n_pred=1)
        h = w = 16
        gt_rect = (2, 2, 10, 10)
        rec = ImageRecord(image_id="a", height=h, width=w)
        rec.gt.append(GtTriplet(
            subject=Entity(0, mask=rect_mask(h, w, *gt_rect)),
            object=Entity(0, mask=rect_mask(h, w, 4, 4, 12, 12)),
            predicate_ids=(0,),
        ))
        correct = PredTriplet(
            subject_mask=rect_mask(h, w, *gt_rect),
            object_mask=rect_mask(h, w, 4, 4, 12, 12),
            subject_scores=np.array([0.9]),
            object_scores=np.array([1.0]),
            predicate_scores=np.array([1.0]),
        )
        # far-off localisation, higher confidence
        wrong = PredTriplet(
            subject_mask=rect_mask(h, w, 12, 12, 16, 16),
            object_mask=rect_mask(h, w, 0, 0, 2, 2),
            subject_scores=np.array([0.95]),
            object_scores=np.array([1.0]),
            predicate_scores=np.array([1.0]),
        )
        rec.preds = [correct, wrong]
        ds = Dataset(images=[rec], catalog=cat)
        report = eval_hoi_map(ds, TpRule("mask", 0.5))
        assert report.aggregates["full_map"] == pytest.approx(0.5, abs=1e-12)

    def test_matches_oracle_on_random_data(self, rng):
        for trial in range(15):
            ds = random_micro_dataset(rng, n_images=int(rng.integers(2, 8)))
            report = eval_hoi_map(ds, TpRule("mask", 0.5), top_k=20)
            expected, aps = oracle_hoi_map(ds, "mask", 0.5, top_k=20)
            for key, v in expected.items():
                assert report.aggregates[key] == pytest.approx(v, abs=1e-9), (trial, key)
            for rel, ap in aps.items():
                assert report.per_category[str(rel)] == pytest.approx(ap, abs=1e-9)

    def test_matches_oracle_box_rule(self, rng):
        ds = random_micro_dataset(rng, n_images=6)
        report = eval_hoi_map(ds, TpRule("box", 0.5), top_k=20)
        expected, _ = oracle_hoi_map(ds, "box", 0.5, top_k=20)
        assert report.aggregates["full_map"] == pytest.approx(expected["full_map"], abs=1e-9)

    def test_rank_only_score_dependence(self, rng):
        # a strictly monotone transform of every head's scores leaves AP alone
        ds = random_micro_dataset(rng, n_images=5, max_noise=2)
        base = eval_hoi_map(ds, TpRule("mask", 0.5)).aggregates["full_map"]

        def squash(v):
            return None if v is None else v**3  # strictly monotone on [0, 1]

        images = []
        for im in ds.images:
            preds = [PredTriplet(
                subject_mask=p.subject_mask, object_mask=p.object_mask,
                subject_scores=squash(p.subject_scores),
                object_scores=squash(p.object_scores),
                predicate_scores=squash(p.predicate_scores),
                subject_box=p.subject_box, object_box=p.object_box,
            ) for p in im.preds]
            images.append(ImageRecord(im.image_id, im.height, im.width,
                                      gt=list(im.gt), preds=preds))
        transformed = Dataset(images=images, catalog=ds.catalog)
        assert eval_hoi_map(transformed, TpRule("mask", 0.5)).aggregates["full_map"] == \
            pytest.approx(base, abs=1e-12)

    def test_duplicate_tp_never_raises_ap(self, rng):
        ds = random_micro_dataset(rng, n_images=4, max_noise=0)
        base = eval_hoi_map(ds, TpRule("mask", 0.5)).aggregates["full_map"]
        images = []
        for im in ds.images:
            preds = list(im.preds)
            dup = preds[0]
            preds.append(PredTriplet(
                subject_mask=dup.subject_mask, object_mask=dup.object_mask,
                subject_scores=None if dup.subject_scores is None else dup.subject_scores * 0.5,
                object_scores=None if dup.object_scores is None else dup.object_scores * 0.5,
                predicate_scores=None if dup.predicate_scores is None else dup.predicate_scores * 0.5,
            ))
            images.append(ImageRecord(im.image_id, im.height, im.width,
                                      gt=list(im.gt), preds=preds))
        duped = Dataset(images=images, catalog=ds.catalog)
        assert eval_hoi_map(duped, TpRule("mask", 0.5)).aggregates["full_map"] <= base + 1e-12

    def test_empty_dataset_rejected(self):
        with pytest.raises(InputError):
            eval_hoi_map(Dataset(images=[], catalog=micro_catalog()))

    def test_threading_is_deterministic(self, rng):
        ds = random_micro_dataset(rng, n_images=10)
        a = eval_hoi_map(ds, TpRule("mask", 0.5), threads=1)
        b = eval_hoi_map(ds, TpRule("mask", 0.5), threads=4)
        assert a.to_json() == b.to_json()

    def test_aggregates_are_means_of_per_category_values(self, rng):
        ds = random_micro_dataset(rng, n_images=6)
        report = eval_hoi_map(ds, TpRule("mask", 0.5))
        values = [report.per_category[k] for k in sorted(report.per_category, key=int)]
        assert report.aggregates["full_map"] == pytest.approx(float(np.mean(values)), abs=1e-12)
        rare = [report.per_category[k] for k in report.per_category
                if ds.catalog.train_counts[int(k)] < 10]
        if rare:
            assert report.aggregates["rare_map"] == pytest.approx(float(np.mean(rare)), abs=1e-12)


class TestVcocoRoleAp:
    def test_single_correct_interaction(self):
        cat = micro_catalog(n_obj=2, n_pred=3, no_object=(2,))
        ds = perfect_dataset(cat, n_images=2)
        report = eval_vcoco_role_ap(ds, "s1", TpRule("mask", 0.5))
        assert report.aggregates["role_ap_s1"] == 1.0

    def test_s2_excludes_no_object_actions(self, rng):
        cat = micro_catalog(n_obj=3, n_pred=5, no_object=(1, 4))
        ds = random_micro_dataset(rng, catalog=cat, no_object_rate=0.3)
        s1 = eval_vcoco_role_ap(ds, "s1", TpRule("mask", 0.5))
        s2 = eval_vcoco_role_ap(ds, "s2", TpRule("mask", 0.5))
        assert "1" not in s2.per_category and "4" not in s2.per_category
        assert set(s2.category_labels) == {"0", "2", "3"}
        assert len(s1.category_labels) == 5

    def test_matches_oracle(self, rng):
        for _ in range(10):
            cat = micro_catalog(n_obj=3, n_pred=4, no_object=(3,))
            ds = random_micro_dataset(rng, catalog=cat, n_images=5, no_object_rate=0.25)
            for scenario in ("s1", "s2"):
                report = eval_vcoco_role_ap(ds, scenario, TpRule("mask", 0.5))
                expected, aps = oracle_vcoco_role_ap(ds, scenario, "mask", 0.5)
                key = f"role_ap_{scenario}"
                assert report.aggregates[key] == pytest.approx(expected[key], abs=1e-9)
                for a, ap in aps.items():
                    assert report.per_category[str(a)] == pytest.approx(ap, abs=1e-9)

    def test_box_rule_matches_oracle(self, rng):
        cat = micro_catalog(n_obj=3, n_pred=4, no_object=(3,))
        ds = random_micro_dataset(rng, catalog=cat, n_images=5, no_object_rate=0.2)
        report = eval_vcoco_role_ap(ds, "s1", TpRule("box", 0.5))
        expected, _ = oracle_vcoco_role_ap(ds, "s1", "box", 0.5)
        assert report.aggregates["role_ap_s1"] == pytest.approx(expected["role_ap_s1"], abs=1e-9)

    def test_bundled_catalog_s2_evaluates_25_of_29_actions(self):
        from vrseval.data import load_catalog

        cat = load_catalog("vcoco")
        h = w = 16
        rec = ImageRecord(image_id="a", height=h, width=w)
        sub = rect_mask(h, w, 0, 0, 8, 8)
        obj = rect_mask(h, w, 8, 8, 16, 16)
        rec.gt = [GtTriplet(Entity(cat.person_category, mask=sub),
                            Entity(1, mask=obj), (0,))]
        rec.preds = [PredTriplet(
            subject_mask=sub, object_mask=obj,
            predicate_scores=np.eye(cat.n_predicates)[0])]
        ds = Dataset(images=[rec], catalog=cat)
        s1 = eval_vcoco_role_ap(ds, "s1", TpRule("mask", 0.5))
        s2 = eval_vcoco_role_ap(ds, "s2", TpRule("mask", 0.5))
        assert len(s1.category_labels) == 29
        assert len(s2.category_labels) == 25


class TestPsgRecall:
    def test_all_matched_within_top20(self):
        cat = micro_catalog(n_obj=3, n_pred=3, kind="psg")
        ds = perfect_dataset(cat, n_images=3)
        report = eval_psg_recall(ds, TpRule("mask", 0.5), ks=(20, 50, 100))
        assert report.aggregates["recall@20"] == 1.0
        assert report.aggregates["mean_recall@20"] == 1.0

    def test_mean_recall_averages_categories(self):
        cat = micro_catalog(n_obj=1, n_pred=2, kind="psg")
        h = w = 16
        rec = ImageRecord(image_id="a", height=h, width=w)
        sub = rect_mask(h, w, 0, 0, 8, 8)
        obj = rect_mask(h, w, 8, 8, 16, 16)
        rec.gt = [
            GtTriplet(Entity(0, mask=sub), Entity(0, mask=obj), (0,)),
            GtTriplet(Entity(0, mask=sub), Entity(0, mask=obj), (1,)),
        ]
        # only the predicate-0 triplet is predicted
        rec.preds = [PredTriplet(
            subject_mask=sub, object_mask=obj,
            subject_scores=np.array([1.0]),
            object_scores=np.array([1.0]),
            predicate_scores=np.array([1.0, 0.0]),
        )]
        ds = Dataset(images=[rec], catalog=cat)
        report = eval_psg_recall(ds, ks=(20,))
        assert report.aggregates["recall@20"] == pytest.approx(0.5)
        assert report.aggregates["mean_recall@20"] == pytest.approx(0.5)

    def test_matches_oracle(self, rng):
        for _ in range(10):
            cat = micro_catalog(n_obj=4, n_pred=4, kind="psg", rng=rng)
            ds = random_micro_dataset(rng, catalog=cat, n_images=6)
            ks = (2, 5, 20)
            report = eval_psg_recall(ds, TpRule("mask", 0.5), ks=ks)
            expected = oracle_psg_recall(ds, 0.5, ks)
            for key, v in expected.items():
                assert report.aggregates[key] == pytest.approx(v, abs=1e-9), key

    def test_recall_nondecreasing_in_k(self, rng):
        ds = random_micro_dataset(rng, n_images=6)
        report = eval_psg_recall(ds, ks=(1, 2, 5, 10, 50))
        rs = [report.aggregates[f"recall@{k}"] for k in (1, 2, 5, 10, 50)]
        mrs = [report.aggregates[f"mean_recall@{k}"] for k in (1, 2, 5, 10, 50)]
        assert rs == sorted(rs)
        assert mrs == sorted(mrs)

    def test_box_rule_rejected(self, rng):
        ds = random_micro_dataset(rng, n_images=2)
        with pytest.raises(InputError):
            eval_psg_recall(ds, TpRule("box", 0.5))

    def test_bad_k_rejected(self, rng):
        ds = random_micro_dataset(rng, n_images=2)
        with pytest.raises(ValueError):
            eval_psg_recall(ds, ks=(0,))


class TestSiou:
    def _image(self, image_id, pred_rect, gt_rect, with_pred=True):
        h = w = 16
        rec = ImageRecord(image_id=image_id, height=h, width=w)
        rec.gt = [GtTriplet(
            subject=Entity(0, mask=rect_mask(h, w, *gt_rect)),
            object=Entity(0, mask=rect_mask(h, w, *gt_rect)),
            predicate_ids=(0,),
        )]
        if with_pred:
            rec.preds = [PredTriplet(
                subject_mask=rect_mask(h, w, *pred_rect),
                object_mask=rect_mask(h, w, *pred_rect),
            )]
        return rec

    def test_perfect_localization(self):
        cat = micro_catalog(n_obj=1, n_pred=1)
        rect = (2, 2, 10, 10)
        ds = Dataset(images=[self._image("a", rect, rect)], catalog=cat)
        report = eval_siou(ds)
        assert report.aggregates["s_iou"] == 1.0
        assert report.aggregates["o_iou"] == 1.0

    def test_mean_over_images(self):
        cat = micro_catalog(n_obj=1, n_pred=1)
        rect = (2, 2, 10, 10)
        images = [
            self._image("a", rect, rect),
            self._image("b", (12, 12, 16, 16), (0, 0, 4, 4)),
        ]
        ds = Dataset(images=images, catalog=cat)
        report = eval_siou(ds)
        assert report.aggregates["s_iou"] == pytest.approx(0.5)

    def test_missing_predictions_flagged(self):
        cat = micro_catalog(n_obj=1, n_pred=1)
        rect = (2, 2, 10, 10)
        images = [self._image("a", rect, rect, with_pred=False),
                  self._image("b", rect, rect, with_pred=False)]
        ds = Dataset(images=images, catalog=cat)
        report = eval_siou(ds)
        assert report.aggregates == {"s_iou": 0.0, "o_iou": 0.0}
        assert len(report.flags) == 2


class TestFairnessTransforms:
    def test_mask_to_box_preserves_tp_set_on_perfect_data(self):
        cat = micro_catalog(n_obj=2, n_pred=2)
        ds = perfect_dataset(cat, n_images=3)
        mask_report = eval_hoi_map(ds, TpRule("mask", 0.5))
        boxed, errors = transform_for_fairness(ds, "mask_to_box")
        assert errors == []
        box_report = eval_hoi_map(boxed, TpRule("box", 0.5))
        assert box_report.aggregates["full_map"] == mask_report.aggregates["full_map"] == 1.0
        for p in boxed.images[0].preds:
            assert p.subject_mask is None and p.subject_box is not None

    def test_box_to_mask_attaches_external(self, rng):
        ds = random_micro_dataset(rng, n_images=2, max_noise=0)
        boxed, _ = transform_for_fairness(ds, "mask_to_box")
        external = {}
        for im in ds.images:
            for pi, p in enumerate(im.preds):
                external[(im.image_id, pi, "sub")] = p.subject_mask
                if p.object_mask is not None:
                    external[(im.image_id, pi, "obj")] = p.object_mask
        restored, errors = transform_for_fairness(boxed, "box_to_mask", external)
        assert errors == []
        for im_r, im_o in zip(restored.images, ds.images):
            for pr, po in zip(im_r.preds, im_o.preds):
                assert pr.subject_mask == po.subject_mask

    def test_box_to_mask_missing_external_reported(self, rng):
        ds = random_micro_dataset(rng, n_images=1, max_noise=0)
        boxed, _ = transform_for_fairness(ds, "mask_to_box")
        restored, errors = transform_for_fairness(boxed, "box_to_mask", {})
        assert errors
        assert all(e["reason"] == "no external mask supplied" for e in errors)

    def test_round_trip_changes_iou_for_non_rectangular(self):
        # L-shaped mask: filled box of its own bounding box differs
        h = w = 8
        dense = np.zeros((h, w), dtype=bool)
        dense[0:8, 0:2] = True
        dense[6:8, 0:8] = True
        from vrseval.mask import box_to_rle, mask_to_box, rle_encode

        l_mask = rle_encode(dense)
        box = mask_to_box(l_mask)
        refilled = box_to_rle(box, h, w)
        assert mask_iou(l_mask, refilled) < 1.0
        assert mask_iou(l_mask, l_mask) == 1.0
