import numpy as np
import pytest

from vrseval.data import CategoryCatalog, Dataset, Entity, GtTriplet, ImageRecord, PredTriplet
from vrseval.mask import BBox, RleMask, box_to_rle


def rect_mask(h, w, x1, y1, x2, y2) -> RleMask:
    return box_to_rle(BBox(x1, y1, x2, y2), h, w)


def random_bitmap(rng, h, w, density=0.4) -> np.ndarray:
    return rng.random((h, w)) < density


def random_rect(rng, h, w, min_side=3):
    x1 = int(rng.integers(0, w - min_side))
    y1 = int(rng.integers(0, h - min_side))
    x2 = int(rng.integers(x1 + min_side, min(w, x1 + min_side + w // 2) + 1))
    y2 = int(rng.integers(y1 + min_side, min(h, y1 + min_side + h // 2) + 1))
    return x1, y1, min(x2, w), min(y2, h)


def jitter_rect(rng, rect, h, w, amount):
    x1, y1, x2, y2 = rect
    dx = int(rng.integers(-amount, amount + 1))
    dy = int(rng.integers(-amount, amount + 1))
    x1, x2 = max(0, x1 + dx), min(w, x2 + dx)
    y1, y2 = max(0, y1 + dy), min(h, y2 + dy)
    if x2 <= x1:
        x2 = min(w, x1 + 1)
    if y2 <= y1:
        y2 = min(h, y1 + 1)
    return x1, y1, x2, y2


def soft_scores(rng, n, hot=None, sharp=6.0) -> np.ndarray:
    raw = rng.random(n)
    if hot is not None:
        raw[hot] += sharp
    out = raw / raw.sum()
    return out


def micro_catalog(n_obj=4, n_pred=3, kind="hico", person=0, rng=None,
                  no_object=()) -> CategoryCatalog:
    relations = [(o, p) for o in range(n_obj) for p in range(n_pred)]
    if rng is None:
        counts = [7 * (i % 3) + 1 for i in range(len(relations))]
    else:
        counts = [int(rng.integers(1, 40)) for _ in relations]
    return CategoryCatalog(
        kind=kind,
        object_names=tuple(f"obj{i}" for i in range(n_obj)),
        predicate_names=tuple(f"pred{i}" for i in range(n_pred)),
        relation_classes=tuple(relations),
        train_counts=tuple(counts),
        person_category=person,
        no_object_predicates=tuple(no_object),
    )


def random_micro_dataset(rng, n_images=6, max_gt=4, max_noise=3, hw=24,
                         catalog=None, with_subject_head=True,
                         no_object_rate=0.0) -> Dataset:
    """Small dataset whose predictions are jittered copies of the ground
    truth plus noise, so protocols see a mix of TPs and FPs."""
    if catalog is None:
        catalog = micro_catalog(rng=rng, no_object=(2,) if no_object_rate else ())
    n_obj, n_pred = catalog.n_objects, catalog.n_predicates
    images = []
    for k in range(n_images):
        h = w = hw
        rec = ImageRecord(image_id=f"img{k:03d}", height=h, width=w)
        n_gt = int(rng.integers(1, max_gt + 1))
        for _ in range(n_gt):
            s_rect = random_rect(rng, h, w)
            o_rect = random_rect(rng, h, w)
            obj_cat = int(rng.integers(0, n_obj))
            no_object = (no_object_rate and rec.gt
                         and rng.random() < no_object_rate)
            if no_object:
                pool = list(catalog.no_object_predicates)
            elif no_object_rate:
                pool = [p for p in range(n_pred) if p not in catalog.no_object_predicates]
            else:
                pool = list(range(n_pred))
            preds = sorted(set(int(pool[i]) for i in
                               rng.integers(0, len(pool), size=rng.integers(1, 3))))
            gt = GtTriplet(
                subject=Entity(category_id=catalog.person_category or 0,
                               box=BBox(*[float(v) for v in s_rect]),
                               mask=rect_mask(h, w, *s_rect)),
                object=None if no_object else Entity(
                    category_id=obj_cat,
                    box=BBox(*[float(v) for v in o_rect]),
                    mask=rect_mask(h, w, *o_rect)),
                predicate_ids=tuple(preds),
            )
            rec.gt.append(gt)
            # A prediction near this ground truth.
            sj = jitter_rect(rng, s_rect, h, w, amount=2)
            oj = jitter_rect(rng, o_rect, h, w, amount=2)
            correct = rng.random() < 0.75
            declares_none = gt.object is None and rng.random() < 0.8
            rec.preds.append(PredTriplet(
                subject_mask=rect_mask(h, w, *sj),
                object_mask=None if declares_none else rect_mask(h, w, *oj),
                subject_scores=soft_scores(rng, n_obj, catalog.person_category)
                if with_subject_head else None,
                object_scores=None if declares_none else soft_scores(
                    rng, n_obj, obj_cat if correct else None),
                predicate_scores=soft_scores(rng, n_pred,
                                             preds[0] if correct else None),
                subject_box=BBox(*[float(v) for v in sj]),
                object_box=None if declares_none else BBox(*[float(v) for v in oj]),
            ))
        for _ in range(int(rng.integers(0, max_noise + 1))):
            s_rect = random_rect(rng, h, w)
            o_rect = random_rect(rng, h, w)
            rec.preds.append(PredTriplet(
                subject_mask=rect_mask(h, w, *s_rect),
                object_mask=rect_mask(h, w, *o_rect),
                subject_scores=soft_scores(rng, n_obj) if with_subject_head else None,
                object_scores=soft_scores(rng, n_obj),
                predicate_scores=soft_scores(rng, n_pred),
                subject_box=BBox(*[float(v) for v in s_rect]),
                object_box=BBox(*[float(v) for v in o_rect]),
            ))
        images.append(rec)
    return Dataset(images=images, catalog=catalog)


def perfect_dataset(catalog, n_images=3, hw=16, rng=None) -> Dataset:
    """Predictions equal ground truth with one-hot scores at confidence 1."""
    rng = rng or np.random.default_rng(0)
    images = []
    for k in range(n_images):
        h = w = hw
        rec = ImageRecord(image_id=f"img{k:03d}", height=h, width=w)
        used = set()
        for g in range(2):
            while True:
                s_rect = random_rect(rng, h, w)
                o_rect = random_rect(rng, h, w)
                key = (s_rect, o_rect)
                if key not in used:
                    used.add(key)
                    break
            obj_cat = int(rng.integers(0, catalog.n_objects))
            p = int(rng.integers(0, catalog.n_predicates))
            sub_scores = np.zeros(catalog.n_objects)
            sub_scores[catalog.person_category or 0] = 1.0
            obj_scores = np.zeros(catalog.n_objects)
            obj_scores[obj_cat] = 1.0
            pred_scores = np.zeros(catalog.n_predicates)
            pred_scores[p] = 1.0
            rec.gt.append(GtTriplet(
                subject=Entity(category_id=catalog.person_category or 0,
                               box=BBox(*[float(v) for v in s_rect]),
                               mask=rect_mask(h, w, *s_rect)),
                object=Entity(category_id=obj_cat,
                              box=BBox(*[float(v) for v in o_rect]),
                              mask=rect_mask(h, w, *o_rect)),
                predicate_ids=(p,),
            ))
            rec.preds.append(PredTriplet(
                subject_mask=rect_mask(h, w, *s_rect),
                object_mask=rect_mask(h, w, *o_rect),
                subject_scores=sub_scores,
                object_scores=obj_scores,
                predicate_scores=pred_scores,
                subject_box=BBox(*[float(v) for v in s_rect]),
                object_box=BBox(*[float(v) for v in o_rect]),
            ))
        images.append(rec)
    return Dataset(images=images, catalog=catalog)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {
    "test_hungarian_exactness": "Hungarian exactness vs permutation brute force",
    "test_metric_oracle_equivalence": "metric protocols vs brute-force oracles (1e-9)",
    "test_rle_round_trip_and_exact_iou": "RLE round-trip and exact mask IoU",
    "test_split_arithmetic": "split arithmetic (115/405/520, 88/432, 112/408)",
    "test_loss_closed_forms": "loss closed forms (dice, ce, focal)",
    "test_ingest_rules": "ingest filter/dedup rules and properties",
    "test_retrieval_against_oracles": "retrieval vs full-sort oracle and baseline",
    "test_cli_determinism": "CLI byte-level determinism",
    "test_performance_floor": "performance floor (5000x100 masks < 60 s)",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1]
            if name in _CRITERIA and getattr(rep, "when", "call") == "call":
                rows.append((name, label))
    if not rows:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name in _CRITERIA:
        for got, label in rows:
            if got == name:
                terminalreporter.write_line(f"  {label}  {_CRITERIA[name]}")
                break
