"""Pipeline configuration: one JSON document with a versioned schema."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .presets import ANECHOIC, anechoic_entry, load_presets, preset_room, room_variants
from .qa import DEFAULT_PROPORTIONS, STAGES, MixtureConfig
from .scene import DEFAULT_DISTANCES, DistanceDistribution

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _default_rooms():
    return {"categories": None, "per_category": 10, "jitter": 0.1, "max_order": 10,
            "anechoic_dimensions": [8.0, 8.0, 4.0]}


def _default_receiver():
    return {"type": "binaural", "head_radius": 0.0875, "edge": 0.1, "height": 1.5}


@dataclass
class PipelineConfig:
    """All knobs of a run. ``rooms.categories`` may include ``"anechoic"``;
    ``distances = None`` places sources uniformly in the room volume."""

    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    output_dir: str = "out"
    corpus_index: str | None = None
    ontology: str | None = None
    min_quality: float = 50.0
    drop_visual: bool = True
    drop_noise: bool = True
    rooms: dict = field(default_factory=_default_rooms)
    receiver: dict = field(default_factory=_default_receiver)
    mixture: dict = field(default_factory=lambda: dict(DEFAULT_PROPORTIONS))
    stages: dict = field(default_factory=lambda: {k: list(v) for k, v in STAGES.items()})
    distances: dict | None = field(default_factory=DEFAULT_DISTANCES.to_dict)
    n_records: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.n_records < 1:
            raise ConfigError("n_records must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        rooms = _default_rooms()
        rooms.update(self.rooms)
        if set(rooms) != set(_default_rooms()):
            raise ConfigError(f"unknown rooms keys {sorted(set(rooms) - set(_default_rooms()))}")
        self.rooms = rooms
        rx = _default_receiver()
        rx.update(self.receiver)
        if set(rx) != set(_default_receiver()):
            raise ConfigError(f"unknown receiver keys {sorted(set(rx) - set(_default_receiver()))}")
        if rx["type"] not in ("binaural", "tetrahedral"):
            raise ConfigError(f"receiver type must be binaural or tetrahedral, got {rx['type']!r}")
        self.receiver = rx
        try:
            self.mixture_config()
            self.distance_distribution()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mixture_config(self) -> MixtureConfig:
        return MixtureConfig(dict(self.mixture), {k: tuple(v) for k, v in self.stages.items()})

    def distance_distribution(self) -> DistanceDistribution | None:
        if self.distances is None:
            return None
        return DistanceDistribution(tuple(self.distances["bins"]), tuple(self.distances["weights"]))

    def room_list(self):
        r = self.rooms
        presets = load_presets()
        cats = r["categories"]
        out = []
        if cats is None or any(c != ANECHOIC for c in cats):
            wanted = None if cats is None else [c for c in cats if c != ANECHOIC]
            known = {e["category"] for e in presets["rooms"]}
            if wanted is not None and set(wanted) - known:
                raise ConfigError(f"unknown room categories {sorted(set(wanted) - known)}")
            out += room_variants(presets, r["per_category"], self.seed, r["jitter"], r["max_order"],
                                 wanted)
        if cats is not None and ANECHOIC in cats:
            out.append(preset_room(anechoic_entry(tuple(r["anechoic_dimensions"]))))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path=None, **overrides) -> PipelineConfig:
    """Defaults, then the JSON file, then non-None ``overrides``."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    names = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**data)


def save_config(cfg: PipelineConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
