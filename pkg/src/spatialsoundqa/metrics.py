"""Scoring: answer parsing, detection mAP, DoA/distance metrics and reasoning BA."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from .qa import QTYPES, YES_NO_SUBTYPES, answer_from_truth
from .scene import OctantLabel

ER_THRESHOLD_DEG = 20.0
DER_THRESHOLD_M = 0.5
DIRECTION_SUBTYPES = ("same_side", "relative_dir")
DISTANCE_SUBTYPES = ("closer",)

_LOC = re.compile(r"^(left|right)\s*,\s*(front|behind)\s*,\s*(above|below)\s*;\s*"
                  r"(\d+(?:\.\d+)?)\s*m(?:eters?)?$")
_METERS = re.compile(r"^(\d+(?:\.\d+)?)\s*m(?:eters?)?$")
_TOKEN = re.compile(r"^[a-z0-9][a-z0-9 ,'()./&+\-]*$")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Parsed:
    kind: str  # categories | location | yes_no | meters | side | invalid
    value: object = None

    @property
    def valid(self) -> bool:
        return self.kind != "invalid"


INVALID = Parsed("invalid")


def answer_kind(qtype: str, subtype: str | None = None) -> str:
    if qtype in ("A", "C") or subtype == "class_on_side":
        return "categories"
    if qtype in ("B", "D"):
        return "location"
    if subtype in YES_NO_SUBTYPES:
        return "yes_no"
    if subtype == "inter_distance":
        return "meters"
    if subtype == "left_or_right":
        return "side"
    raise EvalError(f"unknown question type {qtype}/{subtype}")


def _canon(text: str) -> str:
    return " ".join(str(text).strip().lower().split())


def parse_answer(text, qtype: str, subtype: str | None = None) -> Parsed:
    """Structured reading of an answer string; unparseable text gives ``INVALID``."""
    if text is None:
        return INVALID
    t = _canon(text)
    if not t:
        return INVALID
    kind = answer_kind(qtype, subtype)
    if kind == "categories":
        items = [p.strip() for p in t.split(";")]
        items = [p for p in items if p]
        if not items or not all(_TOKEN.match(p) for p in items):
            return INVALID
        return Parsed(kind, frozenset(items))
    if kind == "location":
        m = _LOC.match(t)
        return Parsed(kind, (m[1], m[2], m[3], float(m[4]))) if m else INVALID
    t = t.rstrip(".!")
    if kind == "yes_no":
        return Parsed(kind, t == "yes") if t in ("yes", "no") else INVALID
    if kind == "meters":
        m = _METERS.match(t)
        return Parsed(kind, float(m[1])) if m else INVALID
    return Parsed(kind, t) if t in ("left", "right") else INVALID


# --- detection ----------------------------------------------------------------

def average_precision(scores, truth) -> float:
    """Non-interpolated AP; tied scores form one rank group.

    The precision credited to a positive with score s is
    #{positives with score >= s} / #{items with score >= s}, so a constant
    scorer gets the positive rate and any strictly increasing transform of the
    scores leaves AP unchanged.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(truth, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise EvalError("scores and truth must be aligned 1-D arrays")
    if not np.all(np.isfinite(s)):
        raise EvalError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise EvalError("AP is undefined without positives")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # index of the last item in each tie group
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    group = np.repeat(np.arange(last.size), np.diff(np.r_[-1, last]))
    cum_pos = np.cumsum(y)[last]
    precision = cum_pos / (last + 1.0)
    return float(precision[group[y]].sum() / n_pos)


def mean_average_precision(scores, truths) -> float:
    """Macro AP over categories (columns) that have at least one positive."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(truths, dtype=bool)
    if s.shape != y.shape or s.ndim != 2:
        raise EvalError("scores and truths must be (records, categories) arrays of equal shape")
    cols = np.flatnonzero(y.any(axis=0))
    if cols.size == 0:
        raise EvalError("no positives in any category")
    return float(np.mean([average_precision(s[:, c], y[:, c]) for c in cols]))


# --- localisation -------------------------------------------------------------

def direction_vector(doa) -> np.ndarray:
    """Unit vector from ``[x, y, z]`` or ``[azimuth_deg, elevation_deg]``."""
    d = np.asarray(doa, dtype=float).ravel()
    if d.size == 2:
        az, el = np.radians(d)
        d = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    if d.size != 3 or not np.all(np.isfinite(d)):
        raise EvalError(f"direction must be 2 angles or a 3-vector, got {doa!r}")
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise EvalError("zero-length direction")
    return d / norm


def angular_error_deg(a, b) -> float:
    u, v = direction_vector(a), direction_vector(b)
    return math.degrees(math.acos(min(1.0, max(-1.0, float(u @ v)))))


def er20_mae(errors_deg) -> tuple[float, float]:
    e = np.asarray(errors_deg, dtype=float)
    if e.size == 0:
        raise EvalError("no angular errors")
    return float(np.mean(e > ER_THRESHOLD_DEG)), float(e.mean())


def distance_error_rate(pred_m, true_m) -> float:
    p, t = np.asarray(pred_m, dtype=float), np.asarray(true_m, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise EvalError("distance arrays must be non-empty and aligned")
    return float(np.mean(np.abs(p - t) > DER_THRESHOLD_M))


def octant_accuracy(pred, true) -> float:
    if len(pred) != len(true) or not pred:
        raise EvalError("octant lists must be non-empty and aligned")
    return sum(tuple(p) == tuple(t) for p, t in zip(pred, true)) / len(pred)


def localization_metrics(pred_dirs, true_dirs, pred_dist, true_dist) -> dict:
    """er20, mae_deg, octant_acc, der for aligned direction/distance predictions."""
    errors = [angular_error_deg(p, t) for p, t in zip(pred_dirs, true_dirs)]
    er20, mae = er20_mae(errors)
    octs_p = [OctantLabel.from_vector(direction_vector(p)).words() for p in pred_dirs]
    octs_t = [OctantLabel.from_vector(direction_vector(t)).words() for t in true_dirs]
    return {"er20": er20, "mae_deg": mae, "octant_acc": octant_accuracy(octs_p, octs_t),
            "der": distance_error_rate(pred_dist, true_dist)}


def balanced_accuracy(pred, truth) -> float:
    """Mean per-class recall over the classes present in ``truth``; ``None`` preds are wrong."""
    if len(pred) != len(truth) or not truth:
        raise EvalError("BA needs aligned, non-empty inputs")
    recalls = []
    for c in sorted(set(truth)):
        idx = [i for i, t in enumerate(truth) if t == c]
        recalls.append(sum(pred[i] == c for i in idx) / len(idx))
    return float(np.mean(recalls))


# --- predictions and evaluation -------------------------------------------------

@dataclass
class Prediction:
    record_id: str
    answer_text: str | None = None
    detection_scores: dict | None = None
    doa: list | None = None
    distance_m: float | None = None

    def __post_init__(self):
        if all(v is None for v in (self.answer_text, self.detection_scores, self.doa,
                                   self.distance_m)):
            raise EvalError(f"{self.record_id}: prediction has no fields")
        if self.detection_scores is not None:
            if not all(math.isfinite(float(v)) for v in self.detection_scores.values()):
                raise EvalError(f"{self.record_id}: non-finite detection score")
        if self.distance_m is not None and not (math.isfinite(self.distance_m) and self.distance_m >= 0):
            raise EvalError(f"{self.record_id}: distance must be finite and >= 0")


def load_predictions(path) -> list[Prediction]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(Prediction(**d))
            except (json.JSONDecodeError, TypeError) as exc:
                raise EvalError(f"{path}:{n}: bad prediction ({exc})") from None
    return out


def write_predictions(preds, path):
    with open(path, "w") as fh:
        for p in preds:
            d = {k: v for k, v in asdict(p).items() if v is not None}
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def _target(record) -> dict:
    return record["truth"]["sources"][record["truth"].get("query", {}).get("target", 0)]


def oracle_predictions(records) -> list[Prediction]:
    """Ground-truth answers, directions and distances as predictions."""
    out = []
    for r in records:
        p = Prediction(r["id"], answer_text=answer_from_truth(r["qtype"], r["subtype"], r["truth"]))
        if r["qtype"] in ("B", "D"):
            t = _target(r)
            p.doa, p.distance_m = list(t["position"]), t["distance_m"]
        out.append(p)
    return out


@dataclass
class EvalReport:
    map: float | None = None
    detection_acc: float | None = None
    er20: float | None = None
    mae_deg: float | None = None
    octant_acc: float | None = None
    axis_acc: dict = field(default_factory=dict)
    der: float | None = None
    ba_direction: float | None = None
    ba_distance: float | None = None
    ba_avg: float | None = None
    subtype_acc: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    n_predictions: int = 0
    missing: int = 0
    invalid: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        def pct(x):
            return "   n/a" if x is None else f"{100 * x:6.2f}"
        rows = [("Detection mAP", pct(self.map)), ("Detection exact-set acc", pct(self.detection_acc)),
                ("DoA octant acc", pct(self.octant_acc)), ("DoA ER20", pct(self.er20)),
                ("DoA MAE (deg)", "   n/a" if self.mae_deg is None else f"{self.mae_deg:6.2f}"),
                ("Distance DER", pct(self.der)), ("Reasoning BA direction", pct(self.ba_direction)),
                ("Reasoning BA distance", pct(self.ba_distance)), ("Reasoning BA avg", pct(self.ba_avg))]
        rows += [(f"  axis {k} acc", pct(v)) for k, v in self.axis_acc.items()]
        rows += [(f"  {k} acc", pct(v)) for k, v in self.subtype_acc.items()]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val}" for name, val in rows]
        lines.append("counts: " + ", ".join(f"{k}={v}" for k, v in self.counts.items())
                     + f"; predictions={self.n_predictions} missing={self.missing} invalid={self.invalid}")
        return "\n".join(lines)


def _index_predictions(records, preds) -> dict:
    ids = {r["id"] for r in records}
    by_id = {}
    for p in preds:
        if p.record_id in by_id:
            raise EvalError(f"duplicate prediction for {p.record_id}")
        if p.record_id not in ids:
            raise EvalError(f"prediction for unknown record {p.record_id}")
        by_id[p.record_id] = p
    return by_id


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else None


def evaluate(records, preds) -> EvalReport:
    """Route each record to its metric; missing or unparseable predictions score as wrong."""
    by_id = _index_predictions(records, preds)
    rep = EvalReport(n_predictions=len(by_id))
    rep.counts = {t: sum(r["qtype"] == t for r in records) for t in QTYPES}
    det_sets, det_truth, det_scores, det_ok = [], [], [], []
    octs, axes, dists, errors, any_doa = [], {"lr": [], "fb": [], "ud": []}, [], [], False
    loc_records = []
    yes_no = {"direction": ([], []), "distance": ([], [])}
    sub_ok: dict[str, list] = {}

    for r in records:
        p = by_id.get(r["id"])
        if p is None:
            rep.missing += 1
        parsed = parse_answer(p.answer_text, r["qtype"], r["subtype"]) if p else INVALID
        if p is not None and p.answer_text is not None and not parsed.valid:
            rep.invalid += 1
        truth = parse_answer(answer_from_truth(r["qtype"], r["subtype"], r["truth"]),
                             r["qtype"], r["subtype"])
        if r["qtype"] in ("A", "C"):
            det_truth.append(truth.value)
            det_sets.append(parsed.value if parsed.valid else frozenset())
            det_scores.append(p.detection_scores if p and p.detection_scores else None)
            det_ok.append(parsed.valid and parsed.value == truth.value)
        elif r["qtype"] in ("B", "D"):
            t = _target(r)
            loc_records.append((r, p, t))
            if p is not None and p.doa is not None:
                any_doa = True
                pred_oct = OctantLabel.from_vector(direction_vector(p.doa)).words()
            else:
                pred_oct = parsed.value[:3] if parsed.valid else None
            octs.append(pred_oct == tuple(t["octant"]))
            for k, ax in enumerate(axes):
                axes[ax].append(pred_oct is not None and pred_oct[k] == t["octant"][k])
            d = p.distance_m if p is not None and p.distance_m is not None else (
                parsed.value[3] if parsed.valid else None)
            # the published distance label is the 0.5 m bin, so DER is scored against it
            dists.append(d is None or abs(d - t["distance_bin"]) > DER_THRESHOLD_M)
        else:
            sub = r["subtype"]
            ok = parsed.valid and parsed.value == truth.value
            sub_ok.setdefault(sub, []).append(ok)
            group = ("direction" if sub in DIRECTION_SUBTYPES
                     else "distance" if sub in DISTANCE_SUBTYPES else None)
            if group:
                yes_no[group][0].append(parsed.value if parsed.valid else None)
                yes_no[group][1].append(truth.value)

    if any_doa:
        for r, p, t in loc_records:
            errors.append(angular_error_deg(p.doa, t["position"]) if p is not None and p.doa is not None
                          else 180.0)
        rep.er20, rep.mae_deg = er20_mae(errors)
    rep.octant_acc = _mean(octs)
    rep.axis_acc = {ax: _mean(v) for ax, v in axes.items()} if octs else {}
    rep.der = _mean(dists)
    rep.detection_acc = _mean(det_ok)
    if det_truth:
        cats = sorted(set().union(*det_truth))
        s = np.zeros((len(det_truth), len(cats)))
        y = np.zeros_like(s, dtype=bool)
        for i, (tr, ps, sc) in enumerate(zip(det_truth, det_sets, det_scores)):
            for j, c in enumerate(cats):
                y[i, j] = c in tr
                s[i, j] = float(sc.get(c, 0.0)) if sc is not None else float(c in ps)
        rep.map = mean_average_precision(s, y)
    for group, (pred, truth) in yes_no.items():
        if truth:
            setattr(rep, f"ba_{group}", balanced_accuracy(pred, truth))
    bas = [b for b in (rep.ba_direction, rep.ba_distance) if b is not None]
    rep.ba_avg = _mean(bas)
    rep.subtype_acc = {k: _mean(v) for k, v in sorted(sub_ok.items())}
    return rep
