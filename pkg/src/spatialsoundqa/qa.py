"""Rule-based question/answer generation over spatial scenes.

A record's answer is always derived from its ``truth`` payload by
:func:`answer_from_truth`, so the whole manifest can be re-audited.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusIndex
from .rng import derive_seed, stream
from .room import ReceiverSpec, RelativeGeometry, RoomSpec, relative_geometry
from .scene import (AXES, AXIS_COORD, AXIS_WORDS, DEFAULT_DISTANCES, DistanceDistribution,
                    OctantLabel, PlacedSource, SceneError, distance_bin, place_sources)
from .templates import BANK

SCHEMA_VERSION = 1
QTYPES = ("A", "B", "C", "D", "E")
E_SUBTYPES = ("same_side", "relative_dir", "closer", "inter_distance", "class_on_side",
              "left_or_right")
YES_NO_SUBTYPES = ("same_side", "relative_dir", "closer")
COORD_MARGIN = 0.2
CLOSER_MARGIN = 0.5
DEFAULT_PROPORTIONS = {"A": 0.159, "B": 0.159, "C": 0.135, "D": 0.135, "E": 0.412}
STAGES = {"I": ("A", "B"), "II": ("A", "B", "C", "D"), "III": QTYPES}
PROMPT_TEMPLATE = ("Based on the audio you've heard, refer to the instruction and provide a "
                   "response.\n\n### Instruction:\n{question}\n\n### Response:")


class QaError(ValueError):
    """Ill-posed request; the caller should resample the scene."""


@dataclass(frozen=True)
class MixtureConfig:
    proportions: dict = field(default_factory=lambda: dict(DEFAULT_PROPORTIONS))
    stages: dict = field(default_factory=lambda: {k: tuple(v) for k, v in STAGES.items()})

    def __post_init__(self):
        unknown = set(self.proportions) - set(QTYPES)
        if unknown:
            raise ValueError(f"unknown question types {sorted(unknown)}")
        if any(p < 0 for p in self.proportions.values()):
            raise ValueError("proportions must be non-negative")
        total = sum(self.proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"proportions sum to {total}, expected 1")
        for name, types in self.stages.items():
            if set(types) - set(QTYPES):
                raise ValueError(f"stage {name} lists unknown types")


# --- formatting -------------------------------------------------------------

def format_meters(x: float) -> str:
    """0.5-m quantised distance without a trailing ".0" (3.0 -> "3", 2.5 -> "2.5")."""
    q = round(float(x) * 2.0) / 2.0
    return str(int(q)) if q == int(q) else f"{q:.1f}"


def distance_phrase(x: float) -> str:
    s = format_meters(x)
    return f"{s} meter" if s == "1" else f"{s} meters"


def event_phrase(categories) -> str:
    return ", ".join(sorted(categories))


def detection_answer(categories) -> str:
    return "; ".join(sorted(c.lower() for c in categories))


def localization_answer(octant, dbin: float) -> str:
    return f"{', '.join(octant)}; {format_meters(dbin)}m"


def quantize_distance(d: float) -> float:
    """Nearest 0.5 m, at least 0.5 m (used for source-to-source distances)."""
    return max(0.5, math.floor(d / 0.5 + 0.5) * 0.5)


# --- truth payload and answer rules -----------------------------------------

def source_truth(src: PlacedSource, category_ids=None) -> dict:
    g = src.geometry
    return {
        "categories": sorted(src.categories),
        "category_ids": list(category_ids) if category_ids is not None else None,
        "clip_id": src.clip_id,
        "azimuth_deg": round(g.azimuth_deg, 6),
        "elevation_deg": round(g.elevation_deg, 6),
        "distance_m": round(g.distance_m, 6),
        "position": [round(float(v), 6) for v in g.vector],
        "octant": list(src.octant.words()),
        "distance_bin": src.distance_bin,
    }


def _side_positive(axis: str, word: str) -> bool:
    pos, neg = AXIS_WORDS[axis]
    if word not in (pos, neg):
        raise QaError(f"{word!r} is not a {axis} word")
    return word == pos


def answer_from_truth(qtype: str, subtype: str | None, truth: dict) -> str:
    """Apply the answer rules to a truth payload."""
    srcs = truth["sources"]
    q = truth.get("query", {})
    if qtype == "A":
        return detection_answer(srcs[0]["categories"])
    if qtype == "B":
        return localization_answer(srcs[0]["octant"], srcs[0]["distance_bin"])
    if qtype == "C":
        return detection_answer(srcs[q["target"]]["categories"])
    if qtype == "D":
        t = srcs[q["target"]]
        return localization_answer(t["octant"], t["distance_bin"])
    if qtype != "E":
        raise QaError(f"unknown question type {qtype!r}")
    if len(srcs) != 2:
        raise QaError("reasoning needs two sources")
    if subtype == "inter_distance":
        d = math.dist(srcs[0]["position"], srcs[1]["position"])
        return format_meters(quantize_distance(d)) + "m"
    if subtype == "class_on_side":
        return detection_answer(srcs[1 - q["reference"]]["categories"])
    a, b = srcs[q["first"]], srcs[1 - q["first"]]
    if subtype == "same_side":
        k = AXES.index(q["axis"])
        ok = a["octant"][k] == q["labels"][0] and b["octant"][k] == q["labels"][1]
    elif subtype == "relative_dir":
        c = AXIS_COORD[q["axis"]]
        diff = a["position"][c] - b["position"][c]
        ok = diff > 0 if _side_positive(q["axis"], q["side"]) else diff < 0
    elif subtype == "closer":
        ok = a["distance_m"] < b["distance_m"]
    elif subtype == "left_or_right":
        return "left" if a["position"][1] > b["position"][1] else "right"
    else:
        raise QaError(f"unknown reasoning subtype {subtype!r}")
    return "Yes" if ok else "No"


# --- well-posedness -----------------------------------------------------------

def separated_axes(v1, v2, margin: float = COORD_MARGIN) -> list[str]:
    """Axes on which the two receiver-frame positions differ by at least ``margin``."""
    return [ax for ax in AXES if abs(v1[AXIS_COORD[ax]] - v2[AXIS_COORD[ax]]) >= margin]


def well_posed(subtype: str | None, vectors) -> bool:
    if subtype is None or len(vectors) < 2:
        return True
    v1, v2 = (np.asarray(v, dtype=float) for v in vectors)
    if subtype in ("same_side", "inter_distance"):
        return True
    if subtype in ("relative_dir", "class_on_side"):
        return bool(separated_axes(v1, v2))
    if subtype == "closer":
        return abs(np.linalg.norm(v1) - np.linalg.norm(v2)) >= CLOSER_MARGIN
    if subtype == "left_or_right":
        return (v1[1] > 0) != (v2[1] > 0) and abs(v1[1] - v2[1]) >= COORD_MARGIN
    raise QaError(f"unknown reasoning subtype {subtype!r}")


# --- generators -------------------------------------------------------------

def _sources(scene) -> list[PlacedSource]:
    return list(getattr(scene, "sources", scene))


def _pick_template(qtype, subtype, rng, accept=None) -> tuple[int, str]:
    bank = BANK[(qtype, subtype)]
    idx = [i for i, t in enumerate(bank) if accept is None or accept(t)]
    i = idx[int(rng.integers(len(idx)))]
    return i, bank[i]


def _record(qtype, subtype, question, truth, template_id) -> dict:
    if not question.strip():
        raise QaError("empty question")
    return {"qtype": qtype, "subtype": subtype, "question": question,
            "answer": answer_from_truth(qtype, subtype, truth), "truth": truth,
            "template_id": template_id}


def _truth(srcs, query, category_ids=None) -> dict:
    ids = category_ids or [None] * len(srcs)
    return {"sources": [source_truth(s, c) for s, c in zip(srcs, ids)], "query": query}


def gen_detection(scene, target: int | None = None, rng=None, category_ids=None) -> dict:
    """Type A (one source) or type C (two sources, ``target`` given)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    srcs = _sources(scene)
    if target is None:
        if len(srcs) != 1:
            raise QaError("type A needs exactly one source")
        tid, tpl = _pick_template("A", None, rng)
        return _record("A", None, tpl, _truth(srcs, {}, category_ids), tid)
    if len(srcs) != 2 or target not in (0, 1):
        raise QaError("type C needs two sources and a target index")
    t, o = srcs[target], srcs[1 - target]
    if (t.octant, t.distance_bin) == (o.octant, o.distance_bin):
        raise QaError("target location is ambiguous")
    tid, tpl = _pick_template("C", None, rng)
    d1, d2, d3 = t.octant.words()
    q = tpl.format(d1=d1, d2=d2, d3=d3, distance=distance_phrase(t.distance_bin))
    return _record("C", None, q, _truth(srcs, {"target": target}, category_ids), tid)


def gen_localization(scene, target: int | None = None, rng=None, category_ids=None) -> dict:
    """Type B (one source) or type D (two sources, target named by its categories)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    srcs = _sources(scene)
    if target is None:
        if len(srcs) != 1:
            raise QaError("type B needs exactly one source")
        tid, tpl = _pick_template("B", None, rng)
        q = tpl.format(event=event_phrase(srcs[0].categories))
        return _record("B", None, q, _truth(srcs, {}, category_ids), tid)
    if len(srcs) != 2 or target not in (0, 1):
        raise QaError("type D needs two sources and a target index")
    if set(srcs[0].categories) & set(srcs[1].categories):
        raise QaError("sources share a category; the target cannot be referenced")
    tid, tpl = _pick_template("D", None, rng)
    q = tpl.format(event=event_phrase(srcs[target].categories))
    return _record("D", None, q, _truth(srcs, {"target": target}, category_ids), tid)


def gen_reasoning(scene, subtype: str, rng, category_ids=None, answer: bool | None = None) -> dict:
    """Type E record. Yes/No subtypes aim for ``answer`` (a fair coin when None)."""
    srcs = _sources(scene)
    if len(srcs) != 2:
        raise QaError("reasoning needs two sources")
    if subtype not in E_SUBTYPES:
        raise QaError(f"unknown reasoning subtype {subtype!r}")
    vecs = [s.geometry.vector for s in srcs]
    if not well_posed(subtype, vecs):
        raise QaError(f"geometry is ill-posed for {subtype}")
    if subtype in YES_NO_SUBTYPES and answer is None:
        answer = bool(rng.integers(2))
    first = int(rng.integers(2))
    names = [event_phrase(s.categories) for s in srcs]
    e1, e2 = names[first], names[1 - first]
    a, b = srcs[first], srcs[1 - first]

    if subtype == "same_side":
        axis = AXES[int(rng.integers(3))]
        k = AXES.index(axis)
        actual = (a.octant.words()[k], b.octant.words()[k])
        flip = {w: AXIS_WORDS[axis][1 - AXIS_WORDS[axis].index(w)] for w in AXIS_WORDS[axis]}
        if answer:
            labels = actual
        else:
            wrong = [(flip[actual[0]], actual[1]), (actual[0], flip[actual[1]]),
                     (flip[actual[0]], flip[actual[1]])]
            labels = wrong[int(rng.integers(3))]
        both = labels[0] == labels[1]
        tid, tpl = _pick_template("E", subtype, rng,
                                  None if both else (lambda t: "{d1}" in t))
        q = tpl.format(event1=e1, event2=e2, d=labels[0], d1=labels[0], d2=labels[1])
        query = {"first": first, "axis": axis, "labels": list(labels)}
    elif subtype == "relative_dir":
        axes = separated_axes(vecs[first], vecs[1 - first])
        axis = axes[int(rng.integers(len(axes)))]
        c = AXIS_COORD[axis]
        pos_true = vecs[first][c] > vecs[1 - first][c]
        side = AXIS_WORDS[axis][0 if pos_true == answer else 1]
        tid, tpl = _pick_template("E", subtype, rng)
        q = tpl.format(event1=e1, event2=e2, d=side)
        query = {"first": first, "axis": axis, "side": side}
    elif subtype == "closer":
        if (a.geometry.distance_m < b.geometry.distance_m) != answer:
            first = 1 - first
            e1, e2 = e2, e1
        tid, tpl = _pick_template("E", subtype, rng)
        q = tpl.format(event1=e1, event2=e2)
        query = {"first": first}
    elif subtype == "inter_distance":
        tid, tpl = _pick_template("E", subtype, rng)
        q = tpl.format(event1=e1, event2=e2)
        query = {"first": first}
    elif subtype == "class_on_side":
        ref = first
        axes = separated_axes(vecs[0], vecs[1])
        axis = axes[int(rng.integers(len(axes)))]
        c = AXIS_COORD[axis]
        other_positive = vecs[1 - ref][c] > vecs[ref][c]
        side = AXIS_WORDS[axis][0 if other_positive else 1]
        tid, tpl = _pick_template("E", subtype, rng)
        q = tpl.format(event=names[ref], d=side)
        query = {"reference": ref, "axis": axis, "side": side}
    else:  # left_or_right
        tid, tpl = _pick_template("E", subtype, rng)
        q = tpl.format(event1=e1, event2=e2)
        query = {"first": first}
    return _record("E", subtype, q, _truth(srcs, query, category_ids), tid)


# --- dataset assembly -------------------------------------------------------

def allocate_types(mixture: MixtureConfig, n: int, seed: int) -> list[str]:
    """Exact largest-remainder quotas, shuffled with a seeded permutation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    props = [mixture.proportions.get(t, 0.0) for t in QTYPES]
    raw = [p * n for p in props]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(QTYPES)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    types = np.repeat(np.array(QTYPES), counts)
    stream(seed, "mixture").shuffle(types)
    return [str(t) for t in types]


@dataclass
class BuildContext:
    """Everything a worker needs to produce record ``i`` independently."""

    entries: list  # (clip_id, display names, category ids)
    rooms: list[RoomSpec]
    seed: int
    distances: DistanceDistribution | None = DEFAULT_DISTANCES
    receiver: str = "binaural"
    head_radius: float = 0.0875
    receiver_height: float = 1.5
    id_prefix: str = "q"


def _context_entries(corpus: CorpusIndex) -> list:
    return [(e.clip_id, tuple(corpus.display_names(e)), tuple(e.categories))
            for e in corpus.entries]


def _make_receiver(ctx: BuildContext, room: RoomSpec, rng) -> ReceiverSpec:
    lx, ly, lz = room.dimensions
    mx, my = min(0.5, lx / 4), min(0.5, ly / 4)
    pos = (float(rng.uniform(mx, lx - mx)), float(rng.uniform(my, ly - my)),
           float(min(ctx.receiver_height, lz - 0.5)))
    heading = float(rng.uniform(0.0, 360.0))
    if ctx.receiver == "binaural":
        return ReceiverSpec.binaural(pos, heading, ctx.head_radius)
    if ctx.receiver == "tetrahedral":
        return ReceiverSpec.tetrahedral(pos, heading)
    raise ValueError(f"unknown receiver type {ctx.receiver!r}")


def _pick_clips(ctx: BuildContext, k: int, rng) -> list:
    a = ctx.entries[int(rng.integers(len(ctx.entries)))]
    if k == 1:
        return [a]
    for _ in range(64):
        b = ctx.entries[int(rng.integers(len(ctx.entries)))]
        if not set(a[2]) & set(b[2]):
            return [a, b]
    pool = [e for e in ctx.entries if not set(a[2]) & set(e[2])]
    if not pool:
        raise QaError(f"no clip is category-disjoint from {a[0]}")
    return [a, pool[int(rng.integers(len(pool)))]]


def _scene_payload(room: RoomSpec, receiver: ReceiverSpec, positions) -> dict:
    return {
        "room": {"name": room.name, "dimensions": list(room.dimensions),
                 "absorption": list(room.absorption), "max_order": room.max_order,
                 "speed_of_sound": room.speed_of_sound},
        "receiver": {"position": list(receiver.position), "heading_deg": receiver.heading_deg,
                     "array": [list(m) for m in receiver.array],
                     "head_radius": receiver.head_radius},
        "source_positions": [list(p.position) for p in positions],
    }


def generate_record(ctx: BuildContext, i: int, qtype: str) -> dict:
    """Build record ``i``; scenes failing a well-posedness check are redrawn."""
    rng = stream(ctx.seed, "record", i)
    subtype = E_SUBTYPES[int(rng.integers(len(E_SUBTYPES)))] if qtype == "E" else None
    k = 1 if qtype in ("A", "B") else 2
    last = None
    for _ in range(20):
        room = ctx.rooms[int(rng.integers(len(ctx.rooms)))]
        receiver = _make_receiver(ctx, room, rng)
        clips = _pick_clips(ctx, k, rng)
        try:
            positions = place_sources(room, receiver, k, rng, ctx.distances,
                                      accept=lambda v: well_posed(subtype, v))
        except SceneError as exc:
            last = exc
            continue
        srcs = [PlacedSource.from_geometry(c[1], relative_geometry(p, receiver), c[0])
                for c, p in zip(clips, positions)]
        ids = [list(c[2]) for c in clips]
        target = int(rng.integers(2)) if qtype in ("C", "D") else None
        if qtype in ("A", "C"):
            rec = gen_detection(srcs, target, rng, ids)
        elif qtype in ("B", "D"):
            rec = gen_localization(srcs, target, rng, ids)
        else:
            rec = gen_reasoning(srcs, subtype, rng, ids)
        rid = f"{ctx.id_prefix}{i:07d}"
        rec.update({"id": rid, "audio_path": f"audio/{rid}.wav",
                    "seed": derive_seed(ctx.seed, "record", i),
                    "scene": _scene_payload(room, receiver, positions)})
        return rec
    raise QaError(f"record {i}: could not place sources ({last})")


def _generate_chunk(args):
    ctx, start, types = args
    return [generate_record(ctx, start + j, t) for j, t in enumerate(types)]


def build_dataset(corpus: CorpusIndex, rooms, mixture: MixtureConfig | None = None, n: int = 1000,
                  seed: int = 0, distances: DistanceDistribution | None = DEFAULT_DISTANCES,
                  receiver: str = "binaural", workers: int = 1, chunk: int = 2000) -> list[dict]:
    """Generate ``n`` records (geometry and text; audio is rendered separately)."""
    mixture = mixture or MixtureConfig()
    if not corpus.entries:
        raise QaError("corpus is empty")
    if not rooms:
        raise QaError("no rooms given")
    types = allocate_types(mixture, n, seed)
    ctx = BuildContext(_context_entries(corpus), list(rooms), seed, distances, receiver)
    if any(t in types for t in "CDE"):
        cats = [set(e[2]) for e in ctx.entries]
        if not any(not (a & b) for i, a in enumerate(cats) for b in cats[i + 1:]):
            raise QaError("corpus lacks two category-disjoint clips for two-source questions")
    jobs = [(ctx, s, types[s:s + chunk]) for s in range(0, n, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_generate_chunk, jobs))
    else:
        parts = [_generate_chunk(j) for j in jobs]
    return [r for part in parts for r in part]


# --- audit, splits, export, I/O ---------------------------------------------

def audit(records) -> list[str]:
    """Mismatches between stored answers/labels and the rules; empty means clean."""
    problems = []
    for r in records:
        try:
            if r["qtype"] not in QTYPES or (r["qtype"] == "E") != (r["subtype"] in E_SUBTYPES):
                problems.append(f"{r['id']}: inconsistent qtype/subtype")
                continue
            for s in r["truth"]["sources"]:
                g = RelativeGeometry.from_vector(s["position"])
                if list(OctantLabel.from_vector(s["position"]).words()) != s["octant"]:
                    problems.append(f"{r['id']}: octant label disagrees with position")
                if distance_bin(g.distance_m) != s["distance_bin"]:
                    problems.append(f"{r['id']}: distance bin disagrees with position")
            if r["qtype"] == "E" and not well_posed(
                    r["subtype"], [s["position"] for s in r["truth"]["sources"]]):
                problems.append(f"{r['id']}: ill-posed reasoning geometry")
            expected = answer_from_truth(r["qtype"], r["subtype"], r["truth"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            problems.append(f"{r.get('id', '?')}: malformed record ({exc})")
            continue
        if expected != r["answer"]:
            problems.append(f"{r['id']}: answer {r['answer']!r} != rule {expected!r}")
    return problems


def curriculum_split(records, stage: str, mixture: MixtureConfig | None = None) -> list[dict]:
    stages = (mixture or MixtureConfig()).stages
    if stage not in stages:
        raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(stages)}")
    keep = set(stages[stage])
    return [r for r in records if r["qtype"] in keep]


def instruction_prompt(question: str) -> str:
    if not question.strip():
        raise QaError("empty question")
    return PROMPT_TEMPLATE.format(question=question)


def question_from_prompt(prompt: str) -> str:
    head, tail = PROMPT_TEMPLATE.split("{question}")
    if not (prompt.startswith(head) and prompt.endswith(tail)):
        raise QaError("prompt does not follow the instruction template")
    return prompt[len(head):len(prompt) - len(tail)]


def export_instructions(records) -> list[dict]:
    return [{"id": r["id"], "audio_path": r["audio_path"],
             "prompt": instruction_prompt(r["question"]), "target": r["answer"]} for r in records]


def write_jsonl(records, path) -> Path:
    """Deterministic JSONL (sorted keys), written atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return out


def type_shares(records) -> dict[str, float]:
    n = len(records)
    return {t: sum(r["qtype"] == t for r in records) / n for t in QTYPES} if n else {}
