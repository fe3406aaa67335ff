"""Room presets and their per-category variants."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .rng import stream
from .room import RoomSpec

ANECHOIC = "anechoic"


def sabine_absorption(dimensions, rt60: float) -> float:
    """Uniform absorption coefficient giving ``rt60`` under Sabine's formula."""
    lx, ly, lz = dimensions
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + ly * lz + lx * lz)
    alpha = 0.161 * volume / (surface * rt60)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"RT60 {rt60} s is unreachable for room {tuple(dimensions)}")
    return alpha


def load_presets(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("spatialsoundqa.data").joinpath("room_presets.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def preset_room(entry: dict, max_order: int = 10, dimensions=None) -> RoomSpec:
    dims = tuple(dimensions if dimensions is not None else entry["dimensions"])
    if entry["category"] == ANECHOIC:
        # fully absorbing walls leave only the direct path
        alpha, max_order = 1.0, 0
    elif "absorption" in entry:
        alpha = float(entry["absorption"])
    else:
        alpha = sabine_absorption(dims, entry.get("design_rt60_s", entry["target_rt60_s"]))
    return RoomSpec(dims, (alpha,) * 6, max_order=max_order, name=entry["category"])


def anechoic_entry(dimensions=(8.0, 8.0, 4.0)) -> dict:
    return {"category": ANECHOIC, "target_rt60_s": 0.0, "dimensions": list(dimensions)}


def room_variants(presets: dict, per_category: int = 10, seed: int = 0,
                  jitter: float = 0.1, max_order: int = 10,
                  categories=None) -> list[RoomSpec]:
    """``per_category`` rooms per type with dimensions scaled by up to +-jitter.

    Absorption is re-solved for each variant so its Sabine RT60 stays on target.
    """
    rooms = []
    for entry in presets["rooms"]:
        if categories is not None and entry["category"] not in categories:
            continue
        rng = stream(seed, "room-variants", entry["category"])
        for i in range(per_category):
            scale = 1.0 + rng.uniform(-jitter, jitter, size=3) if i else np.ones(3)
            dims = tuple(np.round(np.asarray(entry["dimensions"]) * scale, 3))
            room = preset_room(entry, max_order, dims)
            rooms.append(RoomSpec(room.dimensions, room.absorption, max_order=room.max_order,
                                  name=f"{entry['category']}_{i:02d}"))
    return rooms
