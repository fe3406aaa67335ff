"""Render manifest records to multichannel WAVs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .corpus import CorpusIndex, load_clip
from .room import ReceiverSpec, RoomSpec, SourceSpec, simulate_rir
from .scene import ClipSource, SpatialClip, loudness_normalize, mix_scene, spatialize
from .wavio import write_wav


def scene_from_record(record: dict) -> tuple[RoomSpec, ReceiverSpec, list[SourceSpec]]:
    s = record["scene"]
    r = s["room"]
    room = RoomSpec(tuple(r["dimensions"]), tuple(r["absorption"]), r["speed_of_sound"],
                    r["max_order"], name=r["name"])
    rc = s["receiver"]
    receiver = ReceiverSpec(tuple(rc["position"]), rc["heading_deg"],
                            tuple(tuple(m) for m in rc["array"]), rc["head_radius"])
    return room, receiver, [SourceSpec(tuple(p)) for p in s["source_positions"]]


def render_record(record: dict, corpus: CorpusIndex) -> SpatialClip:
    """Normalise each source clip, convolve with its RIR and mix."""
    room, receiver, sources = scene_from_record(record)
    entries = corpus.by_id()
    parts = []
    for src, truth in zip(sources, record["truth"]["sources"]):
        entry = entries.get(truth["clip_id"])
        if entry is None:
            raise KeyError(f"{record['id']}: clip {truth['clip_id']} not in corpus")
        clip = ClipSource(loudness_normalize(load_clip(corpus, entry)), tuple(truth["categories"]),
                          entry.clip_id)
        part = spatialize(clip, simulate_rir(room, src, receiver))
        part.room_id, part.receiver, part.rng_seed = room.name, receiver, record["seed"]
        parts.append(part)
    return parts[0] if len(parts) == 1 else mix_scene(*parts)


def _render_one(args):
    record, corpus, out_dir = args
    path = Path(out_dir) / record["audio_path"]
    write_wav(path, render_record(record, corpus).channels)
    return str(path)


def render_manifest(records, corpus: CorpusIndex, out_dir, workers: int = 1) -> list[str]:
    """Write ``out_dir/<audio_path>`` for every record; returns the paths in order."""
    jobs = [(r, corpus, out_dir) for r in records]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_render_one, jobs, chunksize=4))
    return [_render_one(j) for j in jobs]
