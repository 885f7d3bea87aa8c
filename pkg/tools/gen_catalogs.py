#!/usr/bin/env python3
"""Regenerate the bundled category-catalog fixtures.

The catalogs mirror the public benchmark vocabularies in shape and headline
arithmetic (category counts, rare/non-rare sizes, zero-shot split sizes)
while the relation tables and per-relation training counts are synthetic:
the real pairing tables are dataset payloads, not part of this toolkit.

Run from the repository root:  python tools/gen_catalogs.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "vrseval" / "catalogs"

COCO80 = [
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag",
    "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon",
    "bowl", "banana", "apple", "sandwich", "orange", "broccoli", "carrot",
    "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear",
    "hair drier", "toothbrush",
]

HICO_VERBS = [
    "adjust", "assemble", "block", "blow", "board", "break", "brush_with",
    "buy", "carry", "catch", "chase", "check", "clean", "control", "cook",
    "cut", "cut_with", "direct", "drag", "dribble", "drink_with", "drive",
    "dry", "eat", "eat_at", "exit", "feed", "fill", "flip", "flush", "fly",
    "greet", "grind", "groom", "herd", "hit", "hold", "hop_on", "hose",
    "hug", "hunt", "inspect", "install", "jump", "kick", "kiss", "lasso",
    "launch", "lick", "lie_on", "lift", "light", "load", "lose", "make",
    "milk", "move", "no_interaction", "open", "operate", "pack", "paint",
    "park", "pay", "peel", "pet", "pick", "pick_up", "point", "pour",
    "pull", "push", "race", "read", "release", "repair", "ride", "row",
    "run", "sail", "scratch", "serve", "set", "shear", "sign", "sip",
    "sit_at", "sit_on", "slide", "smell", "spin", "squeeze", "stab",
    "stand_on", "stand_under", "stick", "stir", "stop_at", "straddle",
    "swing", "tag", "talk_on", "teach", "text_on", "throw", "tie", "toast",
    "train", "turn", "type_on", "walk", "wash", "watch", "wave", "wear",
    "wield", "zip",
]

VCOCO_ACTIONS = [
    "carry_obj", "catch_obj", "cut_instr", "cut_obj", "drink_instr",
    "eat_instr", "eat_obj", "hit_instr", "hit_obj", "hold_obj",
    "jump_instr", "kick_obj", "lay_instr", "look_obj", "point_instr",
    "read_obj", "ride_instr", "run", "sit_instr", "skateboard_instr",
    "ski_instr", "smile", "snowboard_instr", "stand", "surf_instr",
    "talk_on_phone_instr", "throw_obj", "walk", "work_on_computer_instr",
]
VCOCO_NO_OBJECT = ["run", "smile", "stand", "walk"]

COCO_STUFF53 = [
    "banner", "blanket", "bridge", "cardboard", "counter", "curtain",
    "door-stuff", "floor-wood", "flower", "fruit", "gravel", "house",
    "light", "mirror-stuff", "net", "pillow", "platform", "playingfield",
    "railroad", "river", "road", "roof", "sand", "sea", "shelf", "snow",
    "stairs", "tent", "towel", "wall-brick", "wall-stone", "wall-tile",
    "wall-wood", "water-other", "window-blind", "window-other",
    "tree-merged", "fence-merged", "ceiling-merged", "sky-other-merged",
    "cabinet-merged", "table-merged", "floor-other-merged",
    "pavement-merged", "mountain-merged", "grass-merged", "dirt-merged",
    "paper-merged", "food-other-merged", "building-other-merged",
    "rock-merged", "wall-other-merged", "rug-merged",
]

PSG_PREDICATES = [
    "over", "in front of", "beside", "on", "in", "attached to",
    "hanging from", "on back of", "falling off", "going down",
    "painted on", "walking on", "running on", "crossing", "standing on",
    "lying on", "sitting on", "flying over", "jumping over",
    "jumping from", "wearing", "holding", "carrying", "looking at",
    "guiding", "kissing", "eating", "drinking", "feeding", "biting",
    "catching", "picking", "playing with", "chasing", "climbing",
    "cleaning", "playing", "touching", "pushing", "pulling", "opening",
    "cooking", "talking to", "throwing", "slicing", "driving", "riding",
    "parked on", "driving on", "about to hit", "kicking", "swinging",
    "entering", "exiting", "enclosing", "leaning on",
]

VRD_OBJECTS = [
    "person", "sky", "building", "truck", "bus", "table", "shirt", "chair",
    "car", "train", "glasses", "tree", "boat", "hat", "trees", "grass",
    "pants", "road", "motorcycle", "jacket", "monitor", "wheel", "umbrella",
    "plate", "bike", "clock", "bag", "shoe", "laptop", "desk", "cabinet",
    "counter", "bench", "shoes", "tower", "bottle", "helmet", "stove",
    "lamp", "coat", "bed", "dog", "mountain", "horse", "plane", "roof",
    "skateboard", "traffic light", "bush", "phone", "airplane", "sofa",
    "cup", "sink", "shelf", "box", "van", "hand", "shorts", "post",
    "jeans", "cat", "sunglasses", "bowl", "computer", "pillow", "pizza",
    "basket", "elephant", "kite", "sand", "keyboard", "plant", "can",
    "vase", "refrigerator", "cart", "skis", "pot", "surfboard", "paper",
    "mouse", "trash can", "cone", "camera", "ball", "bear", "giraffe",
    "tie", "luggage", "faucet", "hydrant", "snowboard", "oven", "engine",
    "watch", "face", "street", "ramp", "suitcase",
]

VRD_PREDICATES = [
    "on", "wear", "has", "next to", "sleep next to", "sit next to",
    "stand next to", "park next", "walk next to", "above", "behind",
    "stand behind", "sit behind", "park behind", "in the front of",
    "under", "stand under", "sit under", "near", "walk to", "walk",
    "walk past", "in", "below", "beside", "walk beside", "over", "hold",
    "by", "beneath", "with", "on the top of", "on the left of",
    "on the right of", "sit on", "ride", "carry", "look", "stand on",
    "use", "at", "attach to", "cover", "touch", "watch", "against",
    "inside", "adjacent to", "across", "contain", "drive", "drive on",
    "taller than", "eat", "park on", "lying on", "pull", "talk",
    "lean on", "fly", "face", "play with", "sleep on", "outside of",
    "rest on", "follow", "hit", "feed", "kick", "skate on",
]

N_INTERACTION_PAIRS = 520
N_RARE = 112            # training count < 10
N_UC_UNSEEN = 115       # tail/head pairs withheld in unseen-composition splits
N_UO_OBJECTS = 12       # objects withheld in the unseen-object split
N_UO_PAIRS = 88


def build_hico_relations(rng: np.ndarray) -> tuple[list[list[int]], list[int]]:
    """Lay out 520 interaction pairs over 80 objects x 116 verbs.

    Twelve designated objects carry exactly 88 pairs between them; every
    object and every interaction verb keeps at least one pair outside both
    the 115 lowest-count and 115 highest-count groups, so the composition
    splits never orphan a category.
    """
    verbs = [v for v in HICO_VERBS if v != "no_interaction"]
    n_obj, n_verb = len(COCO80), len(verbs)
    uo_objects = sorted(int(i) for i in rng.choice(n_obj, size=N_UO_OBJECTS, replace=False))
    # 4 objects x 8 pairs + 8 objects x 7 pairs = 88
    per_object = {}
    for k, obj in enumerate(uo_objects):
        per_object[obj] = 8 if k < 4 else 7
    others = [o for o in range(n_obj) if o not in per_object]
    # 24 objects x 7 pairs + 44 objects x 6 pairs = 432
    for k, obj in enumerate(others):
        per_object[obj] = 7 if k < 24 else 6
    assert sum(per_object.values()) == N_INTERACTION_PAIRS

    pairs: list[list[int]] = []
    verb_cycle = list(rng.permutation(n_verb))
    cursor = 0
    for obj in range(n_obj):
        used = set()
        for _ in range(per_object[obj]):
            while verb_cycle[cursor % n_verb] in used:
                cursor += 1
            v = verb_cycle[cursor % n_verb]
            cursor += 1
            used.add(v)
            pairs.append([obj, v])
    assert len(pairs) == N_INTERACTION_PAIRS
    assert len({(o, v) for o, v in pairs}) == N_INTERACTION_PAIRS
    assert {v for _, v in pairs} == set(range(n_verb))

    # Core pairs that must stay in the middle count band: one per object,
    # one per verb.
    core = set()
    seen_obj, seen_verb = set(), set()
    for idx, (o, v) in enumerate(pairs):
        if o not in seen_obj:
            core.add(idx)
            seen_obj.add(o)
            seen_verb.add(v)
    for idx, (o, v) in enumerate(pairs):
        if v not in seen_verb:
            core.add(idx)
            seen_verb.add(v)
    assert len(seen_verb) == n_verb and len(seen_obj) == n_obj

    pool = [i for i in range(N_INTERACTION_PAIRS) if i not in core]
    pool = [int(i) for i in rng.permutation(pool)]
    rare = pool[:N_RARE]
    low = pool[N_RARE : N_UC_UNSEEN]          # 3 pairs at exactly the rare cutoff
    high = pool[N_UC_UNSEEN : 2 * N_UC_UNSEEN]
    counts = [0] * N_INTERACTION_PAIRS
    for k, idx in enumerate(rare):
        counts[idx] = 1 + k % 9               # 1..9: below the rare threshold
    for idx in low:
        counts[idx] = 10
    for k, idx in enumerate(high):
        counts[idx] = 10_000 + 37 * k
    for idx in range(N_INTERACTION_PAIRS):
        if counts[idx] == 0:
            counts[idx] = 11 + int(rng.integers(0, 1800))

    _check_hico(pairs, counts, uo_objects, n_verb)
    return pairs, counts, uo_objects


def _check_hico(pairs, counts, uo_objects, n_verb):
    order = sorted(range(len(pairs)), key=lambda i: (counts[i], i))
    rf = set(order[:N_UC_UNSEEN])
    nf = set(order[-N_UC_UNSEEN:])
    assert sum(1 for c in counts if c < 10) == N_RARE
    for group in (rf, nf):
        seen_pairs = [p for i, p in enumerate(pairs) if i not in group]
        assert {o for o, _ in seen_pairs} == set(range(len(COCO80)))
        assert {v for _, v in seen_pairs} == set(range(n_verb))
    uo = set(uo_objects)
    assert sum(1 for o, _ in pairs if o in uo) == N_UO_PAIRS


def catalog_hico(rng) -> dict:
    pairs, counts, uo_objects = build_hico_relations(rng)
    verbs = [v for v in HICO_VERBS if v != "no_interaction"]
    ni = HICO_VERBS.index("no_interaction")
    # Full table carries one no_interaction pair per object (600 relations);
    # the loader filters them out by default.
    full_pairs, full_counts = [], []
    verb_map = {}  # filtered verb id -> full verb id
    for fid, name in enumerate(verbs):
        verb_map[fid] = HICO_VERBS.index(name)
    for (o, v), c in zip(pairs, counts):
        full_pairs.append([o, verb_map[v]])
        full_counts.append(c)
    for o in range(len(COCO80)):
        full_pairs.append([o, ni])
        full_counts.append(50 + o)
    return {
        "kind": "hico",
        "objects": COCO80,
        "predicates": HICO_VERBS,
        "relations": full_pairs,
        "train_counts": full_counts,
        "person_category": COCO80.index("person"),
        "subject_fixed": "person",
        "drop_predicates": ["no_interaction"],
        "uo_unseen_objects": uo_objects,
        "no_object_predicates": [],
    }


def catalog_vcoco(rng) -> dict:
    object_actions = [a for a in VCOCO_ACTIONS if a not in VCOCO_NO_OBJECT]
    pairs = []
    for k, action in enumerate(object_actions):
        n = 11 if k < 13 else 10              # 13*11 + 12*10 = 263
        objs = sorted(int(i) for i in rng.choice(len(COCO80), size=n, replace=False))
        aid = VCOCO_ACTIONS.index(action)
        pairs.extend([[o, aid] for o in objs])
    assert len(pairs) == 263
    counts = [int(rng.integers(5, 400)) for _ in pairs]
    return {
        "kind": "vcoco",
        "objects": COCO80,
        "predicates": VCOCO_ACTIONS,
        "relations": pairs,
        "train_counts": counts,
        "person_category": COCO80.index("person"),
        "subject_fixed": "person",
        "drop_predicates": [],
        "uo_unseen_objects": [],
        "no_object_predicates": [VCOCO_ACTIONS.index(a) for a in VCOCO_NO_OBJECT],
    }


def catalog_psg() -> dict:
    objects = COCO80 + COCO_STUFF53
    assert len(objects) == 133 and len(PSG_PREDICATES) == 56
    return {
        "kind": "psg",
        "objects": objects,
        "predicates": PSG_PREDICATES,
        "relations": [],
        "train_counts": [],
        "person_category": objects.index("person"),
        "subject_fixed": None,
        "drop_predicates": [],
        "uo_unseen_objects": [],
        "no_object_predicates": [],
    }


def catalog_vrd() -> dict:
    assert len(VRD_OBJECTS) == 100 and len(VRD_PREDICATES) == 70
    return {
        "kind": "vrd",
        "objects": VRD_OBJECTS,
        "predicates": VRD_PREDICATES,
        "relations": [],
        "train_counts": [],
        "person_category": VRD_OBJECTS.index("person"),
        "subject_fixed": None,
        "drop_predicates": [],
        "uo_unseen_objects": [],
        "no_object_predicates": [],
    }


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240229)
    out = {
        "hico.json": catalog_hico(rng),
        "vcoco.json": catalog_vcoco(rng),
        "psg.json": catalog_psg(),
        "vrd.json": catalog_vrd(),
    }
    for name, payload in out.items():
        path = OUT_DIR / name
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
