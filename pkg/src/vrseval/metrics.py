"""Evaluation protocols: triplet mAP, role AP, recall@K, and prompted IoU.

All protocols share one true-positive rule: a predicted triplet matches a
ground-truth triplet when the subject and the object localisations both have
IoU strictly greater than the threshold (default 0.5) under the chosen
geometry (box or mask), and the category requirements of the protocol hold.

Ranking is deterministic: scores tie-break by dataset order, and ground-truth
matching is greedy by descending confidence with the highest-IoU unmatched
ground truth taken first.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ImageRecord, PredTriplet
from .errors import InputError
from .mask import BBox, RleMask, box_to_rle, mask_iou_matrix, mask_to_box


@dataclass(frozen=True)
class TpRule:
    localization: str = "mask"  # "box" | "mask"
    iou_threshold: float = 0.5

    def __post_init__(self):
        if self.localization not in ("box", "mask"):
            raise ValueError(f"localization must be 'box' or 'mask', got {self.localization!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou threshold must be in (0, 1], got {self.iou_threshold}")


@dataclass
class EvalReport:
    protocol: str
    rule: dict
    per_category: dict[str, float]
    category_labels: dict[str, str]
    gt_counts: dict[str, int]
    aggregates: dict[str, float]
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "rule": self.rule,
            "per_category": self.per_category,
            "category_labels": self.category_labels,
            "gt_counts": self.gt_counts,
            "aggregates": self.aggregates,
            "flags": self.flags,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def score_triplet(pred: PredTriplet, relation: tuple[int, int],
                  subject_category: int | None = None) -> float:
    """Confidence of a prediction for one (object, predicate) class: the
    product of the relevant head probabilities. Heads that are absent
    contribute a factor of 1 (HOI omits the subject head)."""
    obj_id, pred_id = relation
    score = 1.0
    if pred.subject_scores is not None:
        if subject_category is not None:
            if not 0 <= subject_category < pred.subject_scores.size:
                raise ValueError(f"subject category {subject_category} out of range")
            score *= float(pred.subject_scores[subject_category])
        else:
            score *= float(pred.subject_scores.max())
    if pred.object_scores is not None:
        if not 0 <= obj_id < pred.object_scores.size:
            raise ValueError(f"object category {obj_id} out of range")
        score *= float(pred.object_scores[obj_id])
    if pred.predicate_scores is not None:
        if not 0 <= pred_id < pred.predicate_scores.size:
            raise ValueError(f"predicate category {pred_id} out of range")
        score *= float(pred.predicate_scores[pred_id])
    return score


# ---------------------------------------------------------------------------
# geometry helpers


def _entity_box(box: BBox | None, mask: RleMask | None) -> BBox | None:
    if box is not None:
        return box
    if mask is not None and mask.area > 0:
        return mask_to_box(mask)
    return None


_EMPTY_CACHE: dict[tuple[int, int], RleMask] = {}


def _empty_mask(h: int, w: int) -> RleMask:
    key = (h, w)
    if key not in _EMPTY_CACHE:
        _EMPTY_CACHE[key] = RleMask(h, w, [h * w])
    return _EMPTY_CACHE[key]


def _box_matrix(boxes_a: list[BBox | None], boxes_b: list[BBox | None]) -> np.ndarray:
    out = np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    if not boxes_a or not boxes_b:
        return out
    a = np.array([(b.x1, b.y1, b.x2, b.y2) if b else (0, 0, 0, 0) for b in boxes_a])
    b = np.array([(x.x1, x.y1, x.x2, x.y2) if x else (0, 0, 0, 0) for x in boxes_b])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _role_iou_matrix(image: ImageRecord, rule: TpRule, role: str,
                     pred_indices: list[int]) -> np.ndarray:
    """IoU matrix between selected predictions and every GT triplet for one
    role ('sub'/'obj'). Missing geometry scores 0 against everything."""
    h, w = image.height, image.width
    if role == "sub":
        p_masks = [image.preds[i].subject_mask for i in pred_indices]
        p_boxes = [image.preds[i].subject_box for i in pred_indices]
        g_masks = [t.subject.mask for t in image.gt]
        g_boxes = [t.subject.box for t in image.gt]
    else:
        p_masks = [image.preds[i].object_mask for i in pred_indices]
        p_boxes = [image.preds[i].object_box for i in pred_indices]
        g_masks = [t.object.mask if t.object else None for t in image.gt]
        g_boxes = [t.object.box if t.object else None for t in image.gt]
    if rule.localization == "mask":
        pa = [m if m is not None else _empty_mask(h, w) for m in p_masks]
        ga = [m if m is not None else _empty_mask(h, w) for m in g_masks]
        return mask_iou_matrix(pa, ga, min_iou=rule.iou_threshold)
    pb = [_entity_box(b, m) for b, m in zip(p_boxes, p_masks)]
    gb = [_entity_box(b, m) for b, m in zip(g_boxes, g_masks)]
    return _box_matrix(pb, gb)


# ---------------------------------------------------------------------------
# average precision


def _average_precision(scores: np.ndarray, order_key: np.ndarray,
                       matches: list[list[tuple[int, float]]],
                       npos: int) -> tuple[float, np.ndarray]:
    """Greedy-match detections, then integrate the precision envelope.

    `matches[i]` holds (gt id, pair IoU) for every ground truth the i-th
    detection is allowed to claim; each ground truth is consumable once,
    and a detection takes the highest-IoU one still available.
    """
    n = scores.size
    order = np.lexsort((order_key, -scores))
    taken: set[int] = set()
    tp = np.zeros(n, dtype=bool)
    for rank, det in enumerate(order):
        best_gt, best_iou = -1, 0.0
        for gt_id, iou in matches[det]:
            if gt_id in taken:
                continue
            if iou > best_iou or (iou == best_iou and best_gt != -1 and gt_id < best_gt):
                best_gt, best_iou = gt_id, iou
        if best_gt != -1:
            taken.add(best_gt)
            tp[rank] = True
    if npos == 0:
        return 0.0, tp
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    recall = cum_tp / npos
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate(([0.0], recall[:-1]))
    ap = float(((recall - prev) * envelope).sum())
    return ap, tp


# ---------------------------------------------------------------------------
# HOI triplet mAP


def _relation_lookup(catalog) -> np.ndarray:
    """(object, predicate) -> relation id table, -1 where invalid."""
    table = np.full((catalog.n_objects, catalog.n_predicates), -1, dtype=np.int64)
    for rel, (o, p) in enumerate(catalog.relation_classes):
        table[o, p] = rel
    return table


def _hoi_candidates(image: ImageRecord, catalog, rel_lookup: np.ndarray, top_k: int):
    """Top-k (relation class, prediction, score) triplets for one image.

    The object class is the argmax of the object head; predicates are
    enumerated over every valid relation class for that object. Scores
    tie-break by prediction then relation index.
    """
    person = catalog.person_category
    usable = [i for i, p in enumerate(image.preds)
              if p.object_scores is not None and p.predicate_scores is not None]
    if not usable:
        return []
    obj_mat = np.stack([image.preds[i].object_scores for i in usable])
    pred_mat = np.stack([image.preds[i].predicate_scores for i in usable])
    sub_terms = np.ones(len(usable))
    for k, i in enumerate(usable):
        ss = image.preds[i].subject_scores
        if ss is not None:
            sub_terms[k] = float(ss[person]) if person is not None else float(ss.max())
    obj_ids = obj_mat.argmax(axis=1)
    obj_terms = obj_mat[np.arange(len(usable)), obj_ids]
    scores = (sub_terms * obj_terms)[:, None] * pred_mat
    rel_ids = rel_lookup[obj_ids]
    rows_i, rows_p = np.nonzero(rel_ids >= 0)  # row-major: pred order, then predicate
    flat_scores = scores[rows_i, rows_p]
    flat_rel = rel_ids[rows_i, rows_p]
    usable_arr = np.asarray(usable)
    flat_pi = usable_arr[rows_i]
    if flat_scores.size > top_k:
        order = np.lexsort((flat_rel, flat_pi, -flat_scores))[:top_k]
    else:
        order = np.arange(flat_scores.size)
    return [(int(flat_rel[k]), int(flat_pi[k]), float(flat_scores[k])) for k in order]


def _collect_hoi_image(args):
    image, img_ord, catalog, rel_index, rel_lookup, rule, top_k = args
    cands = _hoi_candidates(image, catalog, rel_lookup, top_k)
    pred_ids = sorted({pi for _, pi, _ in cands})
    pred_pos = {pi: k for k, pi in enumerate(pred_ids)}
    sub_iou = _role_iou_matrix(image, rule, "sub", pred_ids)
    obj_iou = _role_iou_matrix(image, rule, "obj", pred_ids)

    gt_units: dict[int, list[int]] = {}
    for gi, t in enumerate(image.gt):
        if t.object is None:
            continue
        for p in t.predicate_ids:
            rel = rel_index.get((t.object.category_id, p))
            if rel is None:
                continue
            gt_units.setdefault(rel, []).append(gi)

    thr = rule.iou_threshold
    dets: list[tuple[int, float, int, int, list[tuple[int, float]]]] = []
    for det_ord, (rel, pi, score) in enumerate(cands):
        row = pred_pos[pi]
        cand = []
        for slot, gi in enumerate(gt_units.get(rel, [])):
            s, o = sub_iou[row, gi], obj_iou[row, gi]
            if s > thr and o > thr:
                cand.append((slot, min(s, o)))
        dets.append((rel, score, img_ord, det_ord, cand))
    npos = {rel: len(g) for rel, g in gt_units.items()}
    return dets, npos


def eval_hoi_map(dataset: Dataset, rule: TpRule = TpRule(), top_k: int = 100,
                 rare_threshold: int = 10, threads: int | None = None) -> EvalReport:
    """Triplet mAP over the catalog's relation classes, with means over the
    Full / Rare / Non-Rare partitions (rare = training count < threshold)."""
    if not dataset.images:
        raise InputError("cannot evaluate an empty dataset")
    catalog = dataset.catalog
    if not catalog.relation_classes:
        raise InputError(f"catalog kind {catalog.kind!r} has no relation-class table")
    rel_index = catalog.relation_index()
    rel_lookup = _relation_lookup(catalog)
    if top_k <= 0:
        raise ValueError(f"top_k must be positive, got {top_k}")

    jobs = [(im, k, catalog, rel_index, rel_lookup, rule, top_k)
            for k, im in enumerate(dataset.images)]
    results = _run_jobs(_collect_hoi_image, jobs, threads)

    by_class: dict[int, list] = {}
    npos: dict[int, int] = {}
    for dets, image_npos in results:
        for det in dets:
            by_class.setdefault(det[0], []).append(det)
        for rel, n in image_npos.items():
            npos[rel] = npos.get(rel, 0) + n

    per_cat: dict[str, float] = {}
    labels: dict[str, str] = {}
    counts: dict[str, int] = {}
    ap_by_rel: dict[int, float] = {}
    for rel, (obj_id, pred_id) in enumerate(catalog.relation_classes):
        key = str(rel)
        labels[key] = f"{catalog.predicate_names[pred_id]} {catalog.object_names[obj_id]}"
        counts[key] = npos.get(rel, 0)
        if counts[key] == 0:
            continue
        dets = by_class.get(rel, [])
        scores = np.array([d[1] for d in dets], dtype=np.float64)
        order_key = np.arange(len(dets))  # dets appended in image order already
        matches = []
        for d in dets:
            # gt ids unique per class: (image ordinal, slot within class)
            matches.append([(d[2] * 1_000_000 + slot, iou) for slot, iou in d[4]])
        ap, _ = _average_precision(scores, order_key, matches, counts[key])
        per_cat[key] = ap
        ap_by_rel[rel] = ap

    if not per_cat:
        raise InputError("no relation class has ground truth; nothing to evaluate")

    rare, nonrare = set(), set()
    if catalog.train_counts:
        for rel, c in enumerate(catalog.train_counts):
            (rare if c < rare_threshold else nonrare).add(rel)
    evaluated = set(ap_by_rel)
    aggregates = {"full_map": float(np.mean([ap_by_rel[r] for r in sorted(evaluated)]))}
    for name, group in (("rare_map", rare), ("nonrare_map", nonrare)):
        inter = sorted(evaluated & group)
        if inter:
            aggregates[name] = float(np.mean([ap_by_rel[r] for r in inter]))
    return EvalReport(
        protocol="hoi_map",
        rule={"localization": rule.localization, "iou_threshold": rule.iou_threshold,
              "top_k": top_k},
        per_category=per_cat,
        category_labels=labels,
        gt_counts=counts,
        aggregates=aggregates,
    )


# ---------------------------------------------------------------------------
# V-COCO role AP


def _declares_no_object(pred: PredTriplet) -> bool:
    return pred.object_mask is None and pred.object_box is None and pred.object_scores is None


def _collect_vcoco_image(args):
    image, img_ord, catalog, rule = args
    pred_ids = list(range(len(image.preds)))
    sub_iou = _role_iou_matrix(image, rule, "sub", pred_ids)
    obj_iou = _role_iou_matrix(image, rule, "obj", pred_ids)
    thr = rule.iou_threshold

    gt_by_action: dict[int, list[int]] = {}
    for gi, t in enumerate(image.gt):
        for p in t.predicate_ids:
            gt_by_action.setdefault(p, []).append(gi)

    dets: dict[int, list] = {}
    for pi, pred in enumerate(image.preds):
        if pred.predicate_scores is None:
            continue
        no_obj = _declares_no_object(pred)
        sub_term = 1.0
        if pred.subject_scores is not None and catalog.person_category is not None:
            sub_term = float(pred.subject_scores[catalog.person_category])
        for a in range(pred.predicate_scores.size):
            score = sub_term * float(pred.predicate_scores[a])
            cand = []
            for slot, gi in enumerate(gt_by_action.get(a, [])):
                t = image.gt[gi]
                s = sub_iou[pi, gi]
                if s <= thr:
                    continue
                if t.object is None:
                    if no_obj:
                        cand.append((slot, s))
                elif not no_obj and obj_iou[pi, gi] > thr:
                    cand.append((slot, min(s, obj_iou[pi, gi])))
            dets.setdefault(a, []).append((score, img_ord, pi, cand))
    npos = {a: len(g) for a, g in gt_by_action.items()}
    return dets, npos


def eval_vcoco_role_ap(dataset: Dataset, scenario: str = "s1",
                       rule: TpRule = TpRule(localization="box"),
                       threads: int | None = None) -> EvalReport:
    """Per-action role AP. Scenario s1 scores no-object actions with a
    vacuous object match when the prediction also declares no object;
    scenario s2 drops those actions entirely."""
    scenario = scenario.lower()
    if scenario not in ("s1", "s2"):
        raise InputError(f"scenario must be 's1' or 's2', got {scenario!r}")
    if not dataset.images:
        raise InputError("cannot evaluate an empty dataset")
    catalog = dataset.catalog
    no_object = set(catalog.no_object_predicates)
    if scenario == "s2" and not no_object and catalog.kind == "vcoco":
        raise InputError("catalog marks no no-object actions; cannot evaluate s2")
    actions = [a for a in range(catalog.n_predicates)
               if scenario == "s1" or a not in no_object]

    jobs = [(im, k, catalog, rule) for k, im in enumerate(dataset.images)]
    results = _run_jobs(_collect_vcoco_image, jobs, threads)

    by_action: dict[int, list] = {}
    npos: dict[int, int] = {}
    for dets, image_npos in results:
        for a, rows in dets.items():
            by_action.setdefault(a, []).extend(rows)
        for a, n in image_npos.items():
            npos[a] = npos.get(a, 0) + n

    per_cat, labels, counts = {}, {}, {}
    values = []
    for a in actions:
        key = str(a)
        labels[key] = catalog.predicate_names[a]
        counts[key] = npos.get(a, 0)
        if counts[key] == 0:
            continue
        rows = by_action.get(a, [])
        scores = np.array([r[0] for r in rows], dtype=np.float64)
        order_key = np.arange(len(rows))
        matches = [[(r[1] * 1_000_000 + slot, iou) for slot, iou in r[3]] for r in rows]
        ap, _ = _average_precision(scores, order_key, matches, counts[key])
        per_cat[key] = ap
        values.append(ap)
    if not values:
        raise InputError("no action has ground truth; nothing to evaluate")
    return EvalReport(
        protocol=f"vcoco_role_ap_{scenario}",
        rule={"localization": rule.localization, "iou_threshold": rule.iou_threshold,
              "scenario": scenario},
        per_category=per_cat,
        category_labels=labels,
        gt_counts=counts,
        aggregates={f"role_ap_{scenario}": float(np.mean(values))},
    )


# ---------------------------------------------------------------------------
# PSG recall


def _collect_psg_image(args):
    image, img_ord, rule, max_k = args
    rows = []
    for pi, pred in enumerate(image.preds):
        if pred.predicate_scores is None:
            continue
        score = 1.0
        if pred.subject_scores is not None:
            score *= float(pred.subject_scores.max())
        if pred.object_scores is not None:
            score *= float(pred.object_scores.max())
        p = int(np.argmax(pred.predicate_scores))
        rows.append((pi, p, score * float(pred.predicate_scores[p])))
    rows.sort(key=lambda r: (-r[2], r[0]))
    rows = rows[:max_k]

    pred_ids = [r[0] for r in rows]
    pred_pos = {pi: k for k, pi in enumerate(pred_ids)}
    sub_iou = _role_iou_matrix(image, rule, "sub", pred_ids)
    obj_iou = _role_iou_matrix(image, rule, "obj", pred_ids)
    thr = rule.iou_threshold

    # unit = (gt index, predicate); matched_at = first rank that recalls it
    units = []
    for gi, t in enumerate(image.gt):
        for p in t.predicate_ids:
            matched_at = None
            for rank, (pi, cand_p, _) in enumerate(rows):
                if cand_p != p:
                    continue
                r = pred_pos[pi]
                if sub_iou[r, gi] > thr and obj_iou[r, gi] > thr:
                    matched_at = rank
                    break
            units.append((p, matched_at))
    return units


def eval_psg_recall(dataset: Dataset, rule: TpRule = TpRule(localization="mask"),
                    ks=(20, 50, 100), threads: int | None = None) -> EvalReport:
    """Triplet recall and per-predicate mean recall at the given Ks.

    Each prediction asserts its argmax predicate; the per-image top-K is
    ranked by the product of the argmax head probabilities.
    """
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] <= 0:
        raise ValueError(f"recall Ks must be positive, got {ks}")
    if rule.localization != "mask":
        raise InputError("recall protocol is defined over masks; use a mask rule")
    if not dataset.images:
        raise InputError("cannot evaluate an empty dataset")
    catalog = dataset.catalog

    jobs = [(im, k, rule, max(ks)) for k, im in enumerate(dataset.images)]
    results = _run_jobs(_collect_psg_image, jobs, threads)

    units = [u for image_units in results for u in image_units]
    if not units:
        raise InputError("dataset has no ground-truth relations")
    per_cat, labels, counts, aggregates = {}, {}, {}, {}
    total = len(units)
    for k in ks:
        hit = sum(1 for _, at in units if at is not None and at < k)
        aggregates[f"recall@{k}"] = hit / total
    for p in range(catalog.n_predicates):
        mine = [at for u, at in units if u == p]
        key = str(p)
        labels[key] = catalog.predicate_names[p]
        counts[key] = len(mine)
        if mine:
            per_cat[key] = sum(1 for at in mine if at is not None and at < ks[-1]) / len(mine)
    for k in ks:
        recalls = []
        for p in range(catalog.n_predicates):
            mine = [at for u, at in units if u == p]
            if mine:
                recalls.append(sum(1 for at in mine if at is not None and at < k) / len(mine))
        aggregates[f"mean_recall@{k}"] = float(np.mean(recalls))
    return EvalReport(
        protocol="psg_recall",
        rule={"localization": rule.localization, "iou_threshold": rule.iou_threshold,
              "ks": ks},
        per_category=per_cat,
        category_labels=labels,
        gt_counts=counts,
        aggregates=aggregates,
    )


# ---------------------------------------------------------------------------
# prompted localisation


def eval_siou(dataset: Dataset) -> EvalReport:
    """Mean subject/object IoU of prompt-conditioned predictions.

    Each image must carry its ground-truth pair; a missing prediction counts
    as IoU 0 on both roles and is flagged.
    """
    if not dataset.images:
        raise InputError("cannot evaluate an empty dataset")
    s_vals, o_vals, flags = [], [], []
    per_cat, labels, counts = {}, {}, {}
    for im in dataset.images:
        if not im.gt:
            raise InputError(f"image {im.image_id!r} has no ground-truth pair")
        if len(im.preds) > 1:
            raise InputError(f"image {im.image_id!r} carries {len(im.preds)} prompted "
                             "predictions; expected exactly one")
        gt = im.gt[0]
        if not im.preds:
            flags.append(f"missing prediction for image {im.image_id}")
            s, o = 0.0, 0.0
        else:
            pred = im.preds[0]
            s = _localization_iou(pred.subject_mask, pred.subject_box,
                                  gt.subject.mask, gt.subject.box)
            if gt.object is None:
                o = 0.0
                flags.append(f"image {im.image_id} ground truth has no object")
            else:
                o = _localization_iou(pred.object_mask, pred.object_box,
                                      gt.object.mask, gt.object.box)
        s_vals.append(s)
        o_vals.append(o)
        key = im.image_id
        per_cat[key] = (s + o) / 2.0
        labels[key] = im.image_id
        counts[key] = 1
    return EvalReport(
        protocol="prompt_siou",
        rule={},
        per_category=per_cat,
        category_labels=labels,
        gt_counts=counts,
        aggregates={"s_iou": float(np.mean(s_vals)), "o_iou": float(np.mean(o_vals))},
        flags=flags,
    )


def _localization_iou(p_mask, p_box, g_mask, g_box) -> float:
    from .mask import box_iou, mask_iou

    if p_mask is not None and g_mask is not None:
        return mask_iou(p_mask, g_mask)
    pb = _entity_box(p_box, p_mask)
    gb = _entity_box(g_box, g_mask)
    if pb is None or gb is None:
        return 0.0
    return box_iou(pb, gb)


# ---------------------------------------------------------------------------
# fair-comparison transforms


def transform_for_fairness(dataset: Dataset, direction: str,
                           external_masks: dict | None = None,
                           ) -> tuple[Dataset, list[dict]]:
    """Swap every prediction's localisation between masks and boxes.

    direction="mask_to_box" replaces masks with their tight boxes;
    direction="box_to_mask" attaches externally supplied masks keyed by
    (image_id, prediction index, role). Scores are untouched. Returns the
    transformed dataset and a list of per-record errors.
    """
    if direction not in ("mask_to_box", "box_to_mask"):
        raise InputError(f"unknown direction {direction!r}")
    errors: list[dict] = []
    images = []
    for im in dataset.images:
        preds = []
        for pi, p in enumerate(im.preds):
            kw = dict(
                subject_mask=p.subject_mask, object_mask=p.object_mask,
                subject_scores=p.subject_scores, object_scores=p.object_scores,
                predicate_scores=p.predicate_scores,
                subject_box=p.subject_box, object_box=p.object_box,
                subject_embed=p.subject_embed, object_embed=p.object_embed,
                predicate_embed=p.predicate_embed,
            )
            if direction == "mask_to_box":
                for role, mask_key, box_key in (("sub", "subject_mask", "subject_box"),
                                                ("obj", "object_mask", "object_box")):
                    m = kw[mask_key]
                    if m is None:
                        continue
                    if m.area == 0:
                        errors.append({"image_id": im.image_id, "pred": pi, "role": role,
                                       "reason": "empty mask has no box"})
                        kw[box_key] = None
                    else:
                        kw[box_key] = mask_to_box(m)
                    kw[mask_key] = None
            else:
                for role, mask_key, box_key in (("sub", "subject_mask", "subject_box"),
                                                ("obj", "object_mask", "object_box")):
                    if kw[box_key] is None and kw[mask_key] is None:
                        continue
                    ext = (external_masks or {}).get((im.image_id, pi, role))
                    if ext is None:
                        errors.append({"image_id": im.image_id, "pred": pi, "role": role,
                                       "reason": "no external mask supplied"})
                        continue
                    kw[mask_key] = ext
                    kw[box_key] = None
            preds.append(PredTriplet(**kw))
        images.append(ImageRecord(image_id=im.image_id, height=im.height,
                                  width=im.width, gt=list(im.gt), preds=preds))
    return Dataset(images=images, catalog=dataset.catalog), errors


def boxes_to_filled_masks(dataset: Dataset) -> Dataset:
    """Rasterise prediction boxes into filled rectangular masks (the crude
    fallback when no external masks exist)."""
    images = []
    for im in dataset.images:
        preds = []
        for p in im.preds:
            sub_mask = p.subject_mask
            obj_mask = p.object_mask
            if sub_mask is None and p.subject_box is not None:
                sub_mask = box_to_rle(p.subject_box, im.height, im.width)
            if obj_mask is None and p.object_box is not None:
                obj_mask = box_to_rle(p.object_box, im.height, im.width)
            preds.append(PredTriplet(
                subject_mask=sub_mask, object_mask=obj_mask,
                subject_scores=p.subject_scores, object_scores=p.object_scores,
                predicate_scores=p.predicate_scores,
                subject_box=p.subject_box, object_box=p.object_box,
                subject_embed=p.subject_embed, object_embed=p.object_embed,
                predicate_embed=p.predicate_embed,
            ))
        images.append(ImageRecord(image_id=im.image_id, height=im.height,
                                  width=im.width, gt=list(im.gt), preds=preds))
    return Dataset(images=images, catalog=dataset.catalog)


# ---------------------------------------------------------------------------


def _run_jobs(fn, jobs, threads):
    if threads is None or threads <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))
