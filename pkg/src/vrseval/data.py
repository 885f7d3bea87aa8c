"""Dataset and prediction schemas, category catalogs, and file parsers.

The canonical on-disk form is a JSON-lines interchange file with one image
record per line:

    {"image_id": ..., "size": [H, W],
     "gt":    [{"sub": {"cat", "box"?, "mask"?}, "obj": {...} | null, "pred": [ids]}],
     "preds": [{"sub": {"mask", "scores"?, "embed"?}, "obj": {...} | null,
                "pred_scores": [...], "pred_embed": [...]?}]}

Native annotation layouts are normalised into this form by thin adapters.
Scores must already be probabilities; the toolkit never applies a softmax.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ParseError,
    SchemaError,
    UnknownImageError,
    VocabularyError,
)
from .mask import BBox, RleMask

CATALOG_KINDS = ("hico", "vcoco", "psg", "vrd")


@dataclass(frozen=True)
class CategoryCatalog:
    """Object/predicate vocabularies plus the valid relation-class table."""

    kind: str
    object_names: tuple[str, ...]
    predicate_names: tuple[str, ...]
    relation_classes: tuple[tuple[int, int], ...]  # (object id, predicate id)
    train_counts: tuple[int, ...] = ()
    person_category: int | None = None
    subject_fixed: str | None = None
    no_object_predicates: tuple[int, ...] = ()
    uo_unseen_objects: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.object_names)) != len(self.object_names):
            raise SchemaError("duplicate object names in catalog")
        if len(set(self.predicate_names)) != len(self.predicate_names):
            raise SchemaError("duplicate predicate names in catalog")
        for o, p in self.relation_classes:
            if not (0 <= o < len(self.object_names) and 0 <= p < len(self.predicate_names)):
                raise SchemaError(f"relation ({o}, {p}) references unknown categories")
        if self.train_counts and len(self.train_counts) != len(self.relation_classes):
            raise SchemaError("train_counts length must match relation_classes")
        if any(c < 0 for c in self.train_counts):
            raise SchemaError("training counts must be non-negative")

    @property
    def n_objects(self) -> int:
        return len(self.object_names)

    @property
    def n_predicates(self) -> int:
        return len(self.predicate_names)

    def object_id(self, name: str) -> int | None:
        try:
            return self.object_names.index(name)
        except ValueError:
            return None

    def predicate_id(self, name: str) -> int | None:
        try:
            return self.predicate_names.index(name)
        except ValueError:
            return None

    def relation_index(self) -> dict[tuple[int, int], int]:
        return {pair: i for i, pair in enumerate(self.relation_classes)}


@dataclass(frozen=True)
class Entity:
    """One grounded object: category plus box and/or mask."""

    category_id: int
    box: BBox | None = None
    mask: RleMask | None = None

    def __post_init__(self):
        if self.box is None and self.mask is None:
            raise SchemaError("entity needs at least one of box/mask")

    def localization_box(self) -> BBox:
        if self.box is not None:
            return self.box
        from .mask import mask_to_box

        return mask_to_box(self.mask)


@dataclass(frozen=True)
class GtTriplet:
    subject: Entity
    object: Entity | None
    predicate_ids: tuple[int, ...]

    def __post_init__(self):
        if not self.predicate_ids:
            raise SchemaError("ground-truth triplet needs at least one predicate")


@dataclass(frozen=True)
class PredTriplet:
    """One predicted triplet with per-head score vectors.

    `object_mask`/`object_scores` are None when the prediction declares that
    the interaction has no object (V-COCO body motions).
    """

    subject_mask: RleMask | None
    object_mask: RleMask | None
    subject_scores: np.ndarray | None = None
    object_scores: np.ndarray | None = None
    predicate_scores: np.ndarray | None = None
    subject_box: BBox | None = None
    object_box: BBox | None = None
    subject_embed: np.ndarray | None = None
    object_embed: np.ndarray | None = None
    predicate_embed: np.ndarray | None = None

    def embed_dim(self) -> int | None:
        for e in (self.subject_embed, self.object_embed, self.predicate_embed):
            if e is not None:
                return int(e.shape[0])
        return None


@dataclass
class ImageRecord:
    image_id: str
    height: int
    width: int
    gt: list[GtTriplet] = field(default_factory=list)
    preds: list[PredTriplet] = field(default_factory=list)


@dataclass
class Dataset:
    images: list[ImageRecord]
    catalog: CategoryCatalog

    def __len__(self) -> int:
        return len(self.images)

    def by_id(self) -> dict[str, ImageRecord]:
        return {im.image_id: im for im in self.images}


# ---------------------------------------------------------------------------
# catalog loading


def load_catalog(kind_or_path: str, drop_flagged_predicates: bool = True) -> CategoryCatalog:
    """Load a bundled catalog by kind, or any catalog JSON by path.

    With `drop_flagged_predicates` (the default) the predicates listed in the
    file's `drop_predicates` field (`no_interaction` for HICO-DET) are removed
    and the relation table and counts are reindexed accordingly.
    """
    if kind_or_path in CATALOG_KINDS:
        with resources.files("vrseval.catalogs").joinpath(f"{kind_or_path}.json").open() as f:
            raw = json.load(f)
    else:
        path = Path(kind_or_path)
        if not path.exists():
            raise ParseError(f"catalog not found: {kind_or_path}")
        raw = json.loads(path.read_text())
    return _catalog_from_raw(raw, drop_flagged_predicates)


def _catalog_from_raw(raw: dict, drop_flagged: bool) -> CategoryCatalog:
    predicates = list(raw["predicates"])
    relations = [tuple(r) for r in raw["relations"]]
    counts = list(raw.get("train_counts") or [])
    dropped = set(raw.get("drop_predicates") or []) if drop_flagged else set()
    if dropped:
        keep = [i for i, name in enumerate(predicates) if name not in dropped]
        remap = {old: new for new, old in enumerate(keep)}
        kept_rows = [i for i, (_, p) in enumerate(relations) if p in remap]
        relations = [(relations[i][0], remap[relations[i][1]]) for i in kept_rows]
        counts = [counts[i] for i in kept_rows] if counts else []
        predicates = [predicates[i] for i in keep]
    return CategoryCatalog(
        kind=raw.get("kind", "custom"),
        object_names=tuple(raw["objects"]),
        predicate_names=tuple(predicates),
        relation_classes=tuple(relations),
        train_counts=tuple(int(c) for c in counts),
        person_category=raw.get("person_category"),
        subject_fixed=raw.get("subject_fixed"),
        no_object_predicates=tuple(raw.get("no_object_predicates") or []),
        uo_unseen_objects=tuple(raw.get("uo_unseen_objects") or []),
    )


def rare_partition(catalog: CategoryCatalog, threshold: int = 10) -> tuple[list[int], list[int]]:
    """Split relation ids into (rare, non-rare) by training-instance count."""
    if not catalog.train_counts:
        raise SchemaError("catalog has no training counts; cannot partition")
    rare = [i for i, c in enumerate(catalog.train_counts) if c < threshold]
    nonrare = [i for i, c in enumerate(catalog.train_counts) if c >= threshold]
    return rare, nonrare


# ---------------------------------------------------------------------------
# record (de)serialisation


def _parse_box(obj, locus) -> BBox:
    try:
        x1, y1, x2, y2 = (float(v) for v in obj)
        return BBox(x1, y1, x2, y2)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad box {obj!r}: {exc}", *locus) from exc


def _parse_mask(obj, h, w, locus) -> RleMask:
    try:
        m = RleMask.from_json(obj)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"bad mask: {exc}", *locus) from exc
    if m.height != h or m.width != w:
        raise ParseError(
            f"mask extent {m.height}x{m.width} does not match image {h}x{w}", *locus
        )
    return m


def _parse_gt_entity(obj, catalog, h, w, locus) -> Entity:
    if not isinstance(obj, dict) or "cat" not in obj:
        raise ParseError(f"entity must be an object with a 'cat' field, got {obj!r}", *locus)
    cat = obj["cat"]
    if isinstance(cat, str):
        cid = catalog.object_id(cat)
        if cid is None:
            raise VocabularyError(f"unknown object category {cat!r}")
        cat = cid
    if not (0 <= int(cat) < catalog.n_objects):
        raise VocabularyError(f"object category id {cat} outside catalog")
    box = _parse_box(obj["box"], locus) if obj.get("box") is not None else None
    mask = _parse_mask(obj["mask"], h, w, locus) if obj.get("mask") is not None else None
    if box is None and mask is None:
        raise ParseError("entity carries neither box nor mask", *locus)
    return Entity(category_id=int(cat), box=box, mask=mask)


def _parse_scores(obj, expected, what, locus) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 1 or arr.size != expected:
        raise SchemaError(
            f"{what} has length {arr.size}, catalog expects {expected}"
        )
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise SchemaError(f"{what} entries must be probabilities in [0, 1]")
    return arr


def _parse_embed(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise SchemaError("embedding must be a finite 1-d vector")
    return arr


def parse_gt_triplet(obj, catalog, h, w, locus=(None, None)) -> GtTriplet:
    sub = _parse_gt_entity(obj.get("sub"), catalog, h, w, locus)
    obj_ent = None
    if obj.get("obj") is not None:
        obj_ent = _parse_gt_entity(obj["obj"], catalog, h, w, locus)
    preds = obj.get("pred")
    if not preds:
        raise ParseError("ground-truth triplet missing 'pred' ids", *locus)
    pids = []
    for p in preds:
        if isinstance(p, str):
            pid = catalog.predicate_id(p)
            if pid is None:
                raise VocabularyError(f"unknown predicate {p!r}")
            p = pid
        if not (0 <= int(p) < catalog.n_predicates):
            raise VocabularyError(f"predicate id {p} outside catalog")
        pids.append(int(p))
    if obj_ent is None:
        for p in pids:
            if p not in catalog.no_object_predicates:
                raise ParseError(
                    f"triplet has no object but predicate {p} requires one", *locus
                )
    return GtTriplet(subject=sub, object=obj_ent, predicate_ids=tuple(dict.fromkeys(pids)))


def parse_pred_triplet(obj, catalog, h, w, locus=(None, None), embed_dim=None
                       ) -> tuple[PredTriplet, int | None]:
    sub = obj.get("sub") or {}
    sub_mask = _parse_mask(sub["mask"], h, w, locus) if sub.get("mask") is not None else None
    sub_box = _parse_box(sub["box"], locus) if sub.get("box") is not None else None
    sub_scores = (
        _parse_scores(sub["scores"], catalog.n_objects, "subject scores", locus)
        if sub.get("scores") is not None
        else None
    )
    sub_embed = _parse_embed(sub["embed"]) if sub.get("embed") is not None else None

    o = obj.get("obj")
    obj_mask = obj_box = obj_scores = obj_embed = None
    if o is not None:
        obj_mask = _parse_mask(o["mask"], h, w, locus) if o.get("mask") is not None else None
        obj_box = _parse_box(o["box"], locus) if o.get("box") is not None else None
        obj_scores = (
            _parse_scores(o["scores"], catalog.n_objects, "object scores", locus)
            if o.get("scores") is not None
            else None
        )
        obj_embed = _parse_embed(o["embed"]) if o.get("embed") is not None else None

    pred_scores = (
        _parse_scores(obj["pred_scores"], catalog.n_predicates, "predicate scores", locus)
        if obj.get("pred_scores") is not None
        else None
    )
    pred_embed = _parse_embed(obj["pred_embed"]) if obj.get("pred_embed") is not None else None

    if sub_mask is None and sub_box is None:
        raise ParseError("prediction subject carries neither box nor mask", *locus)
    triplet = PredTriplet(
        subject_mask=sub_mask,
        object_mask=obj_mask,
        subject_scores=sub_scores,
        object_scores=obj_scores,
        predicate_scores=pred_scores,
        subject_box=sub_box,
        object_box=obj_box,
        subject_embed=sub_embed,
        object_embed=obj_embed,
        predicate_embed=pred_embed,
    )
    for e in (sub_embed, obj_embed, pred_embed):
        if e is not None:
            if embed_dim is None:
                embed_dim = int(e.shape[0])
            elif int(e.shape[0]) != embed_dim:
                raise SchemaError(
                    f"embedding dimension {e.shape[0]} differs from declared {embed_dim}"
                )
    return triplet, embed_dim


def entity_to_json(e: Entity) -> dict:
    out: dict = {"cat": e.category_id}
    if e.box is not None:
        out["box"] = e.box.to_list()
    if e.mask is not None:
        out["mask"] = e.mask.to_json()
    return out


def gt_to_json(t: GtTriplet) -> dict:
    return {
        "sub": entity_to_json(t.subject),
        "obj": entity_to_json(t.object) if t.object is not None else None,
        "pred": list(t.predicate_ids),
    }


def pred_to_json(t: PredTriplet) -> dict:
    def side(mask, box, scores, embed):
        d: dict = {}
        if mask is not None:
            d["mask"] = mask.to_json()
        if box is not None:
            d["box"] = box.to_list()
        if scores is not None:
            d["scores"] = [float(v) for v in scores]
        if embed is not None:
            d["embed"] = [float(v) for v in embed]
        return d

    out = {"sub": side(t.subject_mask, t.subject_box, t.subject_scores, t.subject_embed)}
    if t.object_mask is not None or t.object_box is not None or t.object_scores is not None:
        out["obj"] = side(t.object_mask, t.object_box, t.object_scores, t.object_embed)
    else:
        out["obj"] = None
    if t.predicate_scores is not None:
        out["pred_scores"] = [float(v) for v in t.predicate_scores]
    if t.predicate_embed is not None:
        out["pred_embed"] = [float(v) for v in t.predicate_embed]
    return out


def record_to_json(rec: ImageRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "size": [rec.height, rec.width],
        "gt": [gt_to_json(t) for t in rec.gt],
        "preds": [pred_to_json(t) for t in rec.preds],
    }


def dumps_record(rec: ImageRecord) -> str:
    return json.dumps(record_to_json(rec), sort_keys=True, separators=(",", ":"))


def save_dataset(dataset: Dataset, path: str | Path):
    with open(path, "w", encoding="utf-8") as f:
        for rec in dataset.images:
            f.write(dumps_record(rec) + "\n")


# ---------------------------------------------------------------------------
# loading


def _iter_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", str(path), lineno) from exc


def load_gt(path: str | Path, catalog_kind: str = "hico",
            catalog: CategoryCatalog | None = None,
            drop_flagged_predicates: bool = True) -> Dataset:
    """Load a ground-truth file (interchange JSONL, or a native layout by kind)."""
    if catalog is None:
        catalog = load_catalog(catalog_kind, drop_flagged_predicates)
    path = Path(path)
    if not path.exists():
        raise ParseError(f"ground-truth file not found: {path}")
    if path.suffix == ".json":
        return _load_native(path, catalog, drop_flagged_predicates)

    images: list[ImageRecord] = []
    seen_ids: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        locus = (str(path), lineno)
        try:
            image_id = str(obj["image_id"])
            h, w = (int(v) for v in obj["size"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"record missing image_id/size: {exc}", *locus) from exc
        if h <= 0 or w <= 0:
            raise ParseError(f"image extent must be positive, got {h}x{w}", *locus)
        if image_id in seen_ids:
            raise ParseError(f"duplicate image_id {image_id!r}", *locus)
        seen_ids.add(image_id)
        gt = [parse_gt_triplet(t, catalog, h, w, locus) for t in obj.get("gt") or []]
        rec = ImageRecord(image_id=image_id, height=h, width=w, gt=gt)
        embed_dim = None
        for t in obj.get("preds") or []:
            trip, embed_dim = parse_pred_triplet(t, catalog, h, w, locus, embed_dim)
            rec.preds.append(trip)
        images.append(rec)
    return Dataset(images=images, catalog=catalog)


def load_preds(path: str | Path, catalog: CategoryCatalog,
               known_ids: Iterable[str] | None = None) -> dict[str, list[PredTriplet]]:
    """Load a predictions JSONL keyed by image id, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"predictions file not found: {path}")
    known = set(known_ids) if known_ids is not None else None
    out: dict[str, list[PredTriplet]] = {}
    embed_dim = None
    for lineno, obj in _iter_jsonl(path):
        locus = (str(path), lineno)
        try:
            image_id = str(obj["image_id"])
            h, w = (int(v) for v in obj["size"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"record missing image_id/size: {exc}", *locus) from exc
        if known is not None and image_id not in known:
            raise UnknownImageError(f"predictions reference unknown image {image_id!r}")
        bucket = out.setdefault(image_id, [])
        for t in obj.get("preds") or []:
            trip, embed_dim = parse_pred_triplet(t, catalog, h, w, locus, embed_dim)
            bucket.append(trip)
    return out


def attach_preds(dataset: Dataset, preds: dict[str, list[PredTriplet]]) -> Dataset:
    """Return a dataset whose images carry the given predictions."""
    by_id = dataset.by_id()
    for image_id in preds:
        if image_id not in by_id:
            raise UnknownImageError(f"predictions reference unknown image {image_id!r}")
    images = []
    for im in dataset.images:
        images.append(
            ImageRecord(
                image_id=im.image_id,
                height=im.height,
                width=im.width,
                gt=list(im.gt),
                preds=list(preds.get(im.image_id, [])),
            )
        )
    return Dataset(images=images, catalog=dataset.catalog)


# ---------------------------------------------------------------------------
# native-layout adapters (documented field-by-field in the README)


def _load_native(path: Path, catalog: CategoryCatalog, drop_flagged: bool) -> Dataset:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from exc
    if isinstance(raw, list):
        return _adapt_hoi_list(raw, catalog, path)
    if isinstance(raw, dict) and "data" in raw:
        return _adapt_psg(raw, catalog, path)
    raise ParseError("unrecognised native annotation layout", str(path))


def _adapt_hoi_list(raw: list, catalog: CategoryCatalog, path: Path) -> Dataset:
    """HOI list layout: [{"global_id", "image_size": [h, w], "hois":
    [{"object_cat", "verb", "human_bboxes", "object_bboxes", "connections"}]}].

    Category fields may be names or ids; verbs dropped by the catalog filter
    are skipped silently.
    """
    images = []
    seen = set()
    for k, anno in enumerate(raw):
        locus = (str(path), k + 1)
        try:
            image_id = str(anno["global_id"])
            h, w = (int(v) for v in anno["image_size"][:2])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad image entry: {exc}", *locus) from exc
        if image_id in seen:
            raise ParseError(f"duplicate image id {image_id!r}", *locus)
        seen.add(image_id)
        rec = ImageRecord(image_id=image_id, height=h, width=w)
        for hoi in anno.get("hois") or []:
            verb = hoi.get("verb")
            if isinstance(verb, str):
                vid = catalog.predicate_id(verb)
                if vid is None:
                    continue  # filtered predicate (e.g. no_interaction)
            else:
                vid = int(verb)
                if not (0 <= vid < catalog.n_predicates):
                    raise VocabularyError(f"predicate id {vid} outside catalog")
            obj_cat = hoi.get("object_cat")
            if isinstance(obj_cat, str):
                oid = catalog.object_id(obj_cat)
                if oid is None:
                    raise VocabularyError(f"unknown object category {obj_cat!r}")
            else:
                oid = int(obj_cat)
            person = catalog.person_category or 0
            for hi, oi in hoi.get("connections") or []:
                try:
                    hbox = _parse_box(hoi["human_bboxes"][hi], locus)
                    obox = _parse_box(hoi["object_bboxes"][oi], locus)
                except IndexError as exc:
                    raise ParseError(f"connection out of range: {exc}", *locus) from exc
                rec.gt.append(
                    GtTriplet(
                        subject=Entity(category_id=person, box=hbox),
                        object=Entity(category_id=oid, box=obox),
                        predicate_ids=(vid,),
                    )
                )
        images.append(rec)
    return Dataset(images=images, catalog=catalog)


def _adapt_psg(raw: dict, catalog: CategoryCatalog, path: Path) -> Dataset:
    """PSG layout: {"data": [{"image_id", "height", "width", "segments":
    [{"category", "mask"}], "relations": [[sub_idx, obj_idx, predicate]]}]}.
    """
    images = []
    seen = set()
    for k, item in enumerate(raw["data"]):
        locus = (str(path), k + 1)
        try:
            image_id = str(item["image_id"])
            h, w = int(item["height"]), int(item["width"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad image entry: {exc}", *locus) from exc
        if image_id in seen:
            raise ParseError(f"duplicate image id {image_id!r}", *locus)
        seen.add(image_id)
        segments = []
        for seg in item.get("segments") or []:
            cat = seg.get("category")
            if isinstance(cat, str):
                cid = catalog.object_id(cat)
                if cid is None:
                    raise VocabularyError(f"unknown object category {cat!r}")
            else:
                cid = int(cat)
            segments.append(Entity(category_id=cid, mask=_parse_mask(seg["mask"], h, w, locus)))
        rec = ImageRecord(image_id=image_id, height=h, width=w)
        merged: dict[tuple[int, int], list[int]] = {}
        order: list[tuple[int, int]] = []
        for s_idx, o_idx, pred in item.get("relations") or []:
            if isinstance(pred, str):
                pid = catalog.predicate_id(pred)
                if pid is None:
                    raise VocabularyError(f"unknown predicate {pred!r}")
            else:
                pid = int(pred)
                if not (0 <= pid < catalog.n_predicates):
                    raise VocabularyError(f"predicate id {pid} outside catalog")
            key = (int(s_idx), int(o_idx))
            if not (0 <= key[0] < len(segments) and 0 <= key[1] < len(segments)):
                raise ParseError(f"relation references missing segment {key}", *locus)
            if key not in merged:
                merged[key] = []
                order.append(key)
            if pid not in merged[key]:
                merged[key].append(pid)
        for key in order:
            rec.gt.append(
                GtTriplet(
                    subject=segments[key[0]],
                    object=segments[key[1]],
                    predicate_ids=tuple(merged[key]),
                )
            )
        images.append(rec)
    return Dataset(images=images, catalog=catalog)
