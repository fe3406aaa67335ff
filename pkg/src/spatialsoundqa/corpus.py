"""Labelled mono corpora: ontology filtering, index files, synthetic test corpus."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import SAMPLE_RATE
from .rng import stream
from .wavio import WavError, read_wav, write_wav

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


@dataclass(frozen=True)
class OntologyEntry:
    category_id: str
    display_name: str
    quality_percent: float = 100.0
    visual_only: bool = False
    noise_like: bool = False

    def __post_init__(self):
        if not 0.0 <= self.quality_percent <= 100.0:
            raise ValueError(f"{self.category_id}: quality {self.quality_percent} not in [0, 100]")
        if any(ch in self.display_name for ch in ";,\n"):
            raise ValueError(f"{self.category_id}: display name may not contain ';', ',' or newlines")


@dataclass
class CorpusEntry:
    clip_id: str
    path: str
    categories: list[str]
    duration: float


@dataclass
class CorpusIndex:
    entries: list[CorpusEntry]
    ontology: dict[str, OntologyEntry]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        for e in self.entries:
            if e.duration <= 0:
                raise ValueError(f"{e.clip_id}: non-positive duration")
            unknown = [c for c in e.categories if c not in self.ontology]
            if unknown:
                raise ValueError(f"{e.clip_id}: categories {unknown} not in ontology")
            if not e.categories:
                raise ValueError(f"{e.clip_id}: no categories")

    def display_names(self, entry: CorpusEntry) -> list[str]:
        return [self.ontology[c].display_name.lower() for c in entry.categories]

    def audio_path(self, entry: CorpusEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def by_id(self) -> dict[str, CorpusEntry]:
        return {e.clip_id: e for e in self.entries}


def _flag(value: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"not a boolean flag: {value!r}")


def read_ontology(path) -> list[OntologyEntry]:
    """Read ``id,display_name,quality_percent,visual_only,noise_like`` CSV."""
    entries = []
    seen = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entry = OntologyEntry(
                row["id"].strip(),
                row["display_name"].strip(),
                float(row.get("quality_percent") or 100.0),
                _flag(row.get("visual_only", "")),
                _flag(row.get("noise_like", "")),
            )
            if entry.category_id in seen:
                raise ValueError(f"duplicate ontology id {entry.category_id}")
            seen.add(entry.category_id)
            entries.append(entry)
    return entries


def write_ontology(entries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "display_name", "quality_percent", "visual_only", "noise_like"])
        for e in entries:
            w.writerow([e.category_id, e.display_name, f"{e.quality_percent:g}",
                        str(e.visual_only).lower(), str(e.noise_like).lower()])
    return path


def filter_ontology(entries, min_quality: float = 50.0, drop_visual: bool = True,
                    drop_noise: bool = True) -> list[str]:
    """Ids of entries passing the quality threshold (inclusive) and flag filters."""
    return [
        e.category_id for e in entries
        if e.quality_percent >= min_quality
        and not (drop_visual and e.visual_only)
        and not (drop_noise and e.noise_like)
    ]


def write_index(index: CorpusIndex, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for e in index.entries:
            fh.write(json.dumps(asdict(e), sort_keys=True) + "\n")
    return path


def load_index(path, ontology_path=None) -> CorpusIndex:
    """Load a JSONL corpus index; the ontology defaults to ``ontology.csv`` alongside it."""
    path = Path(path)
    ontology_path = Path(ontology_path) if ontology_path else path.with_name("ontology.csv")
    ontology = {e.category_id: e for e in read_ontology(ontology_path)}
    entries = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                entries.append(CorpusEntry(**json.loads(line)))
    return CorpusIndex(entries, ontology, path.parent)


def audit_index(index: CorpusIndex, tolerance: float = 1.0 / SAMPLE_RATE) -> list[str]:
    """Problems found when checking every entry's file; empty list means clean."""
    problems = []
    for e in index.entries:
        p = index.audio_path(e)
        if not p.exists():
            problems.append(f"{e.clip_id}: missing file {p}")
            continue
        try:
            data, rate = read_wav(p)
        except (WavError, OSError) as exc:
            problems.append(f"{e.clip_id}: {exc}")
            continue
        if abs(data.shape[1] / rate - e.duration) > tolerance:
            problems.append(f"{e.clip_id}: duration {data.shape[1] / rate:.4f}s != {e.duration:.4f}s")
    return problems


# --- synthetic corpus -------------------------------------------------------

SYNTH_ONTOLOGY = [
    OntologyEntry("tone_440", "Tone 440", 100),
    OntologyEntry("tone_220", "Tone 220", 100),
    OntologyEntry("chord", "Chord", 90),
    OntologyEntry("chord_major", "Major chord", 85),
    OntologyEntry("chord_minor", "Minor chord", 85),
    OntologyEntry("rumble", "Low band noise", 80),
    OntologyEntry("hiss", "High band noise", 80),
    OntologyEntry("am_tone", "Warbling tone", 75),
    OntologyEntry("chirp", "Chirp", 90),
    OntologyEntry("chirp_up", "Rising chirp", 70),
    OntologyEntry("chirp_down", "Falling chirp", 70),
    OntologyEntry("clicks", "Click train", 60),
    OntologyEntry("siren", "Siren", 95),
    # present in the ontology but removed by the default filter
    OntologyEntry("clatter", "Clatter", 20),
    OntologyEntry("echo", "Echo", 90, noise_like=True),
    OntologyEntry("noise", "Noise", 90, noise_like=True),
    OntologyEntry("camera", "Single-lens reflex camera", 70, visual_only=True),
]

# generator kind -> category ids
SYNTH_KINDS = {
    "tone_440": ["tone_440"],
    "tone_220": ["tone_220"],
    "chord_major": ["chord", "chord_major"],
    "chord_minor": ["chord", "chord_minor"],
    "rumble": ["rumble"],
    "hiss": ["hiss"],
    "am_tone": ["am_tone"],
    "chirp_up": ["chirp", "chirp_up"],
    "chirp_down": ["chirp", "chirp_down"],
    "clicks": ["clicks"],
    "siren": ["siren"],
}


def _band_noise(rng, n, lo, hi, fs):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < lo) | (f > hi)] = 0.0
    return np.fft.irfft(spec, n)


def _synth_clip(kind: str, rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    t = np.arange(n) / fs
    if kind == "tone_440":
        x = np.sin(2 * np.pi * 440.0 * t + rng.uniform(0, 2 * np.pi))
    elif kind == "tone_220":
        x = np.sin(2 * np.pi * 220.0 * t + rng.uniform(0, 2 * np.pi))
    elif kind in ("chord_major", "chord_minor"):
        root = rng.choice([196.0, 220.0, 246.94])
        third = 2 ** (4 / 12) if kind == "chord_major" else 2 ** (3 / 12)
        x = sum(np.sin(2 * np.pi * root * r * t + rng.uniform(0, 2 * np.pi))
                for r in (1.0, third, 2 ** (7 / 12)))
    elif kind == "rumble":
        x = _band_noise(rng, n, 100.0, 1000.0, fs)
    elif kind == "hiss":
        x = _band_noise(rng, n, 2000.0, 8000.0, fs)
    elif kind == "am_tone":
        rate = rng.uniform(3.0, 8.0)
        x = (1 + 0.8 * np.sin(2 * np.pi * rate * t)) * np.sin(2 * np.pi * 500.0 * t)
    elif kind in ("chirp_up", "chirp_down"):
        f0, f1 = (300.0, 6000.0) if kind == "chirp_up" else (6000.0, 300.0)
        period = rng.uniform(0.25, 0.75)
        tau = np.mod(t, period)
        k = (f1 - f0) / period
        x = np.sin(2 * np.pi * (f0 * tau + 0.5 * k * tau ** 2))
    elif kind == "clicks":
        x = np.zeros(n)
        step = int(fs / rng.uniform(4.0, 12.0))
        x[::step] = 1.0
        x = np.convolve(x, np.hanning(33), mode="same")
    elif kind == "siren":
        rate = rng.uniform(0.5, 2.0)
        inst = 900.0 + 300.0 * np.sin(2 * np.pi * rate * t)
        x = np.sin(2 * np.pi * np.cumsum(inst) / fs)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    # 10 ms fades avoid onset clicks
    ramp = min(n // 2, int(0.01 * fs))
    env = np.ones(n)
    env[:ramp] = np.linspace(0.0, 1.0, ramp)
    env[n - ramp:] = np.linspace(1.0, 0.0, ramp)
    x = x * env
    return 0.5 * x / np.max(np.abs(x))


def synth_corpus(n_clips: int, seed: int, out_dir) -> CorpusIndex:
    """Write ``n_clips`` labelled mono WAVs plus ``index.jsonl`` and ``ontology.csv``.

    Clip kinds cycle through every synthetic generator, so ``n_clips >= 11``
    covers all kinds. Durations are 1-10 s.
    """
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    out = Path(out_dir)
    kinds = list(SYNTH_KINDS)
    entries = []
    for i in range(n_clips):
        kind = kinds[i % len(kinds)]
        rng = stream(seed, "synth-corpus", i)
        n = int(round(rng.uniform(1.0, 10.0) * SAMPLE_RATE))
        clip = _synth_clip(kind, rng, n, SAMPLE_RATE)
        rel = f"clips/{i:05d}_{kind}.wav"
        write_wav(out / rel, clip)
        entries.append(CorpusEntry(f"clip{i:05d}", rel, list(SYNTH_KINDS[kind]), n / SAMPLE_RATE))
    ontology = {e.category_id: e for e in SYNTH_ONTOLOGY}
    index = CorpusIndex(entries, ontology, out)
    write_ontology(SYNTH_ONTOLOGY, out / "ontology.csv")
    write_index(index, out / "index.jsonl")
    return index


def restrict_to(index: CorpusIndex, retained_ids) -> CorpusIndex:
    """Drop entries carrying any category outside ``retained_ids``."""
    keep = set(retained_ids)
    entries = [e for e in index.entries if set(e.categories) <= keep]
    return CorpusIndex(entries, index.ontology, index.root)


def load_clip(index: CorpusIndex, entry: CorpusEntry) -> np.ndarray:
    data, _ = read_wav(index.audio_path(entry))
    if data.shape[0] != 1:
        data = data.mean(axis=0, keepdims=True)
    return data[0]

