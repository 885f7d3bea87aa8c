"""Zero-shot split construction over the relation-class table.

Four families: rare-first and non-rare-first unseen composition (lowest or
highest training-count relations withheld, every object and predicate kept
alive in the seen set), unseen objects, and unseen verbs (seeded random
category withdrawal, every relation touching a withdrawn category unseen).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CategoryCatalog, Dataset, ImageRecord
from .errors import ConstraintError, InputError

UC_KINDS = ("rf-uc", "nf-uc")
SPLIT_KINDS = UC_KINDS + ("uo", "uv")


@dataclass(frozen=True)
class ZeroShotSplit:
    kind: str
    unseen: tuple[int, ...]
    seen: tuple[int, ...]
    seed: int | None = None
    unseen_objects: tuple[int, ...] = ()
    unseen_predicates: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "unseen": list(self.unseen),
            "seen": list(self.seen),
            "unseen_objects": list(self.unseen_objects),
            "unseen_predicates": list(self.unseen_predicates),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ZeroShotSplit":
        return cls(
            kind=obj["kind"],
            unseen=tuple(obj["unseen"]),
            seen=tuple(obj["seen"]),
            seed=obj.get("seed"),
            unseen_objects=tuple(obj.get("unseen_objects") or ()),
            unseen_predicates=tuple(obj.get("unseen_predicates") or ()),
        )


def save_split(split: ZeroShotSplit, path: str | Path):
    Path(path).write_text(json.dumps(split.to_json(), sort_keys=True, indent=1) + "\n")


def load_split(path: str | Path) -> ZeroShotSplit:
    try:
        return ZeroShotSplit.from_json(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read split file {path}: {exc}") from exc


def make_uc_split(catalog: CategoryCatalog, kind: str = "rare_first",
                  n_unseen: int = 115) -> ZeroShotSplit:
    """Withhold the n lowest-count (rare_first) or highest-count
    (nonrare_first) relation classes, ties broken by catalog index."""
    if kind not in ("rare_first", "nonrare_first"):
        raise InputError(f"kind must be 'rare_first' or 'nonrare_first', got {kind!r}")
    if not catalog.train_counts:
        raise InputError("catalog has no training counts; cannot build a UC split")
    n_rel = len(catalog.relation_classes)
    if not 0 <= n_unseen < n_rel:
        raise InputError(f"n_unseen must be in [0, {n_rel}), got {n_unseen}")
    counts = catalog.train_counts
    if kind == "rare_first":
        order = sorted(range(n_rel), key=lambda i: (counts[i], i))
    else:
        order = sorted(range(n_rel), key=lambda i: (-counts[i], i))
    unseen = sorted(order[:n_unseen])
    seen = sorted(set(range(n_rel)) - set(unseen))

    # Composition-only property: withholding a class must not remove an
    # object or predicate from the seen vocabulary.
    seen_objects = {catalog.relation_classes[i][0] for i in seen}
    seen_predicates = {catalog.relation_classes[i][1] for i in seen}
    for o in range(catalog.n_objects):
        if any(rel[0] == o for rel in catalog.relation_classes) and o not in seen_objects:
            raise ConstraintError(
                f"unseen-composition split removes object {catalog.object_names[o]!r} entirely")
    for p in range(catalog.n_predicates):
        if any(rel[1] == p for rel in catalog.relation_classes) and p not in seen_predicates:
            raise ConstraintError(
                f"unseen-composition split removes predicate {catalog.predicate_names[p]!r} entirely")
    return ZeroShotSplit(
        kind="rf-uc" if kind == "rare_first" else "nf-uc",
        unseen=tuple(unseen), seen=tuple(seen))


def make_uo_split(catalog: CategoryCatalog, n_unseen_objects: int = 12,
                  seed: int | None = 0,
                  objects: list[int] | None = None) -> ZeroShotSplit:
    """Withdraw whole object categories; every relation touching them is
    unseen. Pass `objects` to use a fixed list instead of a seeded draw."""
    n_rel = len(catalog.relation_classes)
    if n_rel == 0:
        raise InputError("catalog has no relation-class table")
    if objects is None:
        if not 0 <= n_unseen_objects < catalog.n_objects:
            raise InputError(
                f"n_unseen_objects must be in [0, {catalog.n_objects}), got {n_unseen_objects}")
        rng = np.random.default_rng(seed)
        objects = sorted(int(i) for i in
                         rng.choice(catalog.n_objects, size=n_unseen_objects, replace=False))
    else:
        objects = sorted(set(int(o) for o in objects))
        for o in objects:
            if not 0 <= o < catalog.n_objects:
                raise InputError(f"object id {o} outside catalog")
    chosen = set(objects)
    unseen = [i for i, (o, _) in enumerate(catalog.relation_classes) if o in chosen]
    seen = [i for i in range(n_rel) if i not in set(unseen)]
    if not seen:
        raise ConstraintError("unseen-object selection empties the seen set")
    return ZeroShotSplit(kind="uo", unseen=tuple(unseen), seen=tuple(seen),
                         seed=seed, unseen_objects=tuple(objects))


def make_uv_split(catalog: CategoryCatalog, n_unseen_verbs: int = 20,
                  seed: int | None = 0,
                  predicates: list[int] | None = None) -> ZeroShotSplit:
    """Withdraw whole predicate categories, analogous to the object split."""
    n_rel = len(catalog.relation_classes)
    if n_rel == 0:
        raise InputError("catalog has no relation-class table")
    if predicates is None:
        if not 0 <= n_unseen_verbs < catalog.n_predicates:
            raise InputError(
                f"n_unseen_verbs must be in [0, {catalog.n_predicates}), got {n_unseen_verbs}")
        rng = np.random.default_rng(seed)
        predicates = sorted(int(i) for i in
                            rng.choice(catalog.n_predicates, size=n_unseen_verbs, replace=False))
    else:
        predicates = sorted(set(int(p) for p in predicates))
        for p in predicates:
            if not 0 <= p < catalog.n_predicates:
                raise InputError(f"predicate id {p} outside catalog")
    chosen = set(predicates)
    unseen = [i for i, (_, p) in enumerate(catalog.relation_classes) if p in chosen]
    seen = [i for i in range(n_rel) if i not in set(unseen)]
    if not seen:
        raise ConstraintError("unseen-verb selection empties the seen set")
    return ZeroShotSplit(kind="uv", unseen=tuple(unseen), seen=tuple(seen),
                         seed=seed, unseen_predicates=tuple(predicates))


def filter_train(dataset: Dataset, split: ZeroShotSplit) -> Dataset:
    """Drop every ground-truth triplet whose relation class is unseen (for
    category splits: whose subject/object/predicate category is withdrawn).
    Predicate sets are trimmed; a triplet with no seen predicate left is
    removed."""
    catalog = dataset.catalog
    rel_index = catalog.relation_index()
    unseen = set(split.unseen)
    unseen_objects = set(split.unseen_objects)
    unseen_predicates = set(split.unseen_predicates)
    images = []
    for im in dataset.images:
        gt = []
        for t in im.gt:
            if t.object is not None and t.object.category_id in unseen_objects:
                continue
            if t.subject.category_id in unseen_objects:
                continue
            kept_preds = []
            for p in t.predicate_ids:
                if p in unseen_predicates:
                    continue
                obj_cat = t.object.category_id if t.object is not None else None
                rel = rel_index.get((obj_cat, p)) if obj_cat is not None else None
                if rel is not None and rel in unseen:
                    continue
                kept_preds.append(p)
            if kept_preds:
                gt.append(type(t)(subject=t.subject, object=t.object,
                                  predicate_ids=tuple(kept_preds)))
        images.append(ImageRecord(image_id=im.image_id, height=im.height,
                                  width=im.width, gt=gt, preds=list(im.preds)))
    return Dataset(images=images, catalog=catalog)


def eval_split_report(per_relation_ap: dict[int, float], split: ZeroShotSplit
                      ) -> tuple[dict[str, float], list[str]]:
    """Mean AP over the unseen / seen / full relation sets.

    Relations absent from `per_relation_ap` (no ground truth) are excluded;
    an empty set is flagged rather than averaged.
    """
    flags = []
    out: dict[str, float] = {}
    groups = {
        "unseen_map": [r for r in split.unseen if r in per_relation_ap],
        "seen_map": [r for r in split.seen if r in per_relation_ap],
        "full_map": [r for r in sorted(set(split.unseen) | set(split.seen))
                     if r in per_relation_ap],
    }
    for name, rels in groups.items():
        if not rels:
            flags.append(f"{name}: no evaluated relation classes")
            continue
        out[name] = float(np.mean([per_relation_ap[r] for r in sorted(rels)]))
    return out, flags


def report_per_relation_ap(report) -> dict[int, float]:
    """Extract {relation id: AP} from a triplet-mAP EvalReport."""
    return {int(k): v for k, v in report.per_category.items()}
