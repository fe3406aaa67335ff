"""``ssqa`` command-line interface.

Every subcommand reads the optional ``--config`` JSON first; flags override it.
Failures print one JSON object on stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import Counter
from pathlib import Path

from . import baselines, metrics, qa
from .config import ConfigError, PipelineConfig, load_config, save_config
from .corpus import filter_ontology, load_index, restrict_to, synth_corpus
from .features import assemble_features, export_features
from .presets import ANECHOIC, anechoic_entry, load_presets, preset_room
from .render import render_manifest
from .room import ReceiverSpec, RoomSpec, SourceSpec, rt60_sabine, rt60_schroeder, simulate_rir
from .wavio import read_wav, write_wav


class CliError(RuntimeError):
    pass


def _config(args, **extra) -> PipelineConfig:
    over = {"seed": getattr(args, "seed", None), "output_dir": getattr(args, "out_dir", None),
            "workers": getattr(args, "workers", None)}
    over.update(extra)
    over = {k: str(v) if isinstance(v, Path) else v for k, v in over.items()}
    return load_config(getattr(args, "config", None), **over)


def _corpus(cfg: PipelineConfig, path=None):
    path = path or cfg.corpus_index
    if not path:
        raise CliError("no corpus index given; run `ssqa synth-corpus` or set corpus_index")
    index = load_index(path, cfg.ontology)
    keep = filter_ontology(index.ontology.values(), cfg.min_quality, cfg.drop_visual, cfg.drop_noise)
    index = restrict_to(index, keep)
    if not index.entries:
        raise CliError("no corpus clips survive the ontology filter")
    return index


def cmd_synth_corpus(args):
    cfg = _config(args)
    out = Path(args.out or Path(cfg.output_dir) / "corpus")
    index = synth_corpus(args.n_clips, cfg.seed, out)
    print(json.dumps({"clips": len(index.entries), "index": str(out / "index.jsonl")}))


def _room_from_args(args) -> RoomSpec:
    presets = {e["category"]: e for e in load_presets()["rooms"]}
    if args.room == ANECHOIC:
        entry = anechoic_entry()
    elif args.room in presets:
        entry = presets[args.room]
    else:
        raise CliError(f"unknown room {args.room!r}; choose from {sorted(presets) + [ANECHOIC]}")
    room = preset_room(entry, args.max_order, tuple(args.dims) if args.dims else None)
    if args.absorption is not None:
        room = RoomSpec(room.dimensions, (args.absorption,) * 6, max_order=room.max_order,
                        name=room.name)
    return room


def cmd_simulate_rir(args):
    room = _room_from_args(args)
    pos = tuple(args.receiver) if args.receiver else (room.dimensions[0] / 2, room.dimensions[1] / 2,
                                                      min(1.5, room.dimensions[2] / 2))
    if args.array == "binaural":
        rx = ReceiverSpec.binaural(pos, args.heading)
    elif args.array == "tetrahedral":
        rx = ReceiverSpec.tetrahedral(pos, args.heading)
    else:
        rx = ReceiverSpec(pos, args.heading)
    ir = simulate_rir(room, SourceSpec(tuple(args.source)), rx)
    write_wav(args.out, ir.channels)
    info = {"out": str(args.out), "channels": ir.n_channels, "samples": ir.channels.shape[1],
            "geometry": ir.geometry.to_dict(),
            "rt60_sabine": rt60_sabine(room) if min(room.absorption) < 1 else 0.0}
    try:
        info["rt60_schroeder"] = rt60_schroeder(ir)
    except ValueError as exc:
        info["rt60_schroeder"] = None
        info["rt60_note"] = str(exc)
    print(json.dumps(info))


def cmd_rt60(args):
    if args.wav:
        x, rate = read_wav(args.wav)
        print(json.dumps({"wav": str(args.wav), "rt60_schroeder": rt60_schroeder(x, rate)}))
        return
    rows = []
    for entry in load_presets()["rooms"]:
        room = preset_room(entry, args.max_order)
        lx, ly, lz = room.dimensions
        rx = ReceiverSpec((lx * 0.4, ly * 0.45, 1.5))
        src = SourceSpec((lx * 0.7, ly * 0.7, 1.2))
        rows.append({"room": entry["category"], "target": entry["target_rt60_s"],
                     "sabine": round(rt60_sabine(room), 4),
                     "schroeder": round(rt60_schroeder(simulate_rir(room, src, rx)), 4)})
    for r in rows:
        print(json.dumps(r))


def cmd_make_qa(args):
    receiver = None
    if args.receiver:
        receiver = dict(load_config(args.config).receiver, type=args.receiver)
    cfg = _config(args, n_records=args.n, corpus_index=args.corpus, receiver=receiver)
    corpus = _corpus(cfg)
    out = Path(cfg.output_dir)
    records = qa.build_dataset(corpus, cfg.room_list(), cfg.mixture_config(), cfg.n_records, cfg.seed,
                               cfg.distance_distribution(), cfg.receiver["type"], cfg.workers)
    problems = qa.audit(records)
    if problems:
        raise CliError(f"answer audit failed: {problems[:5]}")
    qa.write_jsonl(records, out / "manifest.jsonl")
    for stage in cfg.mixture_config().stages:
        qa.write_jsonl(qa.curriculum_split(records, stage, cfg.mixture_config()),
                       out / f"stage_{stage}.jsonl")
    qa.write_jsonl(qa.export_instructions(records), out / "instructions.jsonl")
    save_config(cfg, out / "config.json")
    if args.render:
        render_manifest(records, corpus, out, cfg.workers)
    shares = {k: round(v, 4) for k, v in qa.type_shares(records).items()}
    print(json.dumps({"records": len(records), "manifest": str(out / "manifest.jsonl"),
                      "shares": shares, "rendered": bool(args.render)}))


def cmd_spatialize(args):
    cfg = _config(args, corpus_index=args.corpus)
    records = qa.read_jsonl(args.manifest)
    if args.limit:
        records = records[:args.limit]
    root = Path(args.out or Path(args.manifest).parent)
    paths = render_manifest(records, _corpus(cfg), root, cfg.workers)
    print(json.dumps({"rendered": len(paths), "audio_root": str(root)}))


def cmd_features(args):
    records = qa.read_jsonl(args.manifest)
    root = Path(args.audio_root or Path(args.manifest).parent)
    out = Path(args.out or root / "features")
    done = 0
    for r in records:
        x, rate = read_wav(root / r["audio_path"])
        export_features(assemble_features(x, rate), out / f"{r['id']}.f32")
        done += 1
    print(json.dumps({"features": done, "dir": str(out)}))


def cmd_baseline(args):
    records = qa.read_jsonl(args.manifest)
    root = Path(args.audio_root or Path(args.manifest).parent)
    cal = baselines.CalibrationCurve.load(args.calibration) if args.calibration else None
    seed = _config(args).seed
    preds = baselines.run_baseline(records, root, args.mode, cal, seed)
    out = Path(args.out or root / f"predictions_{args.mode}.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_predictions(preds, out)
    print(json.dumps({"predictions": len(preds), "out": str(out)}))


def cmd_evaluate(args):
    records = qa.read_jsonl(args.manifest)
    preds = metrics.load_predictions(args.pred)
    rep = metrics.evaluate(records, preds)
    report = rep.to_dict()
    if args.embed:
        from .grader import EmbeddingConfig, soft_map

        by_id = {p.record_id: p for p in preds}
        det = [r for r in records if r["qtype"] in ("A", "C")]
        pred_sets, true_sets = [], []
        for r in det:
            p = by_id.get(r["id"])
            parsed = metrics.parse_answer(p.answer_text if p else None, r["qtype"])
            pred_sets.append(set(parsed.value) if parsed.valid else set())
            true_sets.append(set(metrics.parse_answer(r["answer"], r["qtype"]).value))
        report["soft_map"] = soft_map(pred_sets, true_sets, EmbeddingConfig.from_env())
    print(rep.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for k, v in report.items():
                if isinstance(v, dict):
                    for kk, vv in v.items():
                        w.writerow([f"{k}.{kk}", vv])
                else:
                    w.writerow([k, v])


def cmd_stats(args):
    records = qa.read_jsonl(args.manifest)
    out = Path(args.out or Path(args.manifest).parent / "stats")
    out.mkdir(parents=True, exist_ok=True)
    sources = [s for r in records for s in r["truth"]["sources"]]
    dist = Counter(s["distance_bin"] for s in sources)
    octs = Counter(", ".join(s["octant"]) for s in sources)
    qtypes = Counter(r["qtype"] if r["qtype"] != "E" else f"E:{r['subtype']}" for r in records)
    tables = {"distance_hist.csv": ("distance_bin_m", sorted(dist.items())),
              "octant_hist.csv": ("octant", sorted(octs.items())),
              "qtype_counts.csv": ("qtype", sorted(qtypes.items()))}
    for name, (key, rows) in tables.items():
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([key, "count"])
            w.writerows(rows)
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        bins, counts = zip(*sorted(dist.items()))
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.bar(bins, counts, width=0.4)
        ax.set_xlabel("distance bin (m)")
        ax.set_ylabel("sources")
        fig.tight_layout()
        fig.savefig(out / "distance_hist.png", dpi=100, metadata={"Software": None})
        plt.close(fig)
    peak = max(dist, key=dist.get) if dist else None
    print(json.dumps({"sources": len(sources), "distance_peak_m": peak, "dir": str(out)}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssqa", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        s = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        s.add_argument("--config", type=Path, help="pipeline config JSON")
        s.set_defaults(fn=fn)
        return s

    s = add("synth-corpus", cmd_synth_corpus, "write a synthetic labelled mono corpus")
    s.add_argument("--n-clips", type=int, default=50, help="number of clips (default 50)")
    s.add_argument("--seed", type=int, help="master seed (overrides config)")
    s.add_argument("--out", type=Path, help="corpus directory (default <output_dir>/corpus)")

    s = add("simulate-rir", cmd_simulate_rir, "render a room impulse response to WAV")
    s.add_argument("--room", default="living_room", help="preset category or 'anechoic'")
    s.add_argument("--dims", type=float, nargs=3, metavar=("LX", "LY", "LZ"), help="room size (m)")
    s.add_argument("--absorption", type=float, help="uniform wall absorption override")
    s.add_argument("--max-order", type=int, default=10, help="per-axis image order (default 10)")
    s.add_argument("--source", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    s.add_argument("--receiver", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   help="receiver centre (default: room centre, 1.5 m high)")
    s.add_argument("--heading", type=float, default=0.0, help="receiver heading in degrees")
    s.add_argument("--array", choices=("binaural", "tetrahedral", "omni"), default="binaural")
    s.add_argument("--out", type=Path, required=True, help="output WAV")

    s = add("rt60", cmd_rt60, "measure RT60 of an IR file or of every room preset")
    s.add_argument("--wav", type=Path, help="impulse response WAV; omit to measure presets")
    s.add_argument("--max-order", type=int, default=10, help="image order for preset runs")

    s = add("make-qa", cmd_make_qa, "build the QA manifest, curriculum splits and instructions")
    s.add_argument("--n", type=int, help="number of records (overrides config)")
    s.add_argument("--seed", type=int, help="master seed (overrides config)")
    s.add_argument("--corpus", type=Path, help="corpus index JSONL (overrides config)")
    s.add_argument("--receiver", choices=("binaural", "tetrahedral"), help="receiver type")
    s.add_argument("--out-dir", type=Path, help="output directory (overrides config)")
    s.add_argument("--workers", type=int, help="worker processes (overrides config)")
    s.add_argument("--render", action="store_true", help="also render audio for every record")

    s = add("spatialize", cmd_spatialize, "render manifest records to WAV")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--corpus", type=Path, help="corpus index JSONL (overrides config)")
    s.add_argument("--out", type=Path, help="audio root (default: manifest directory)")
    s.add_argument("--limit", type=int, help="render only the first N records")
    s.add_argument("--workers", type=int, help="worker processes (overrides config)")

    s = add("features", cmd_features, "export (4, 1024, 128) feature tensors for rendered records")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--audio-root", type=Path, help="default: manifest directory")
    s.add_argument("--out", type=Path, help="default: <audio-root>/features")

    s = add("baseline", cmd_baseline, "run the signal-processing baseline over rendered records")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--mode", choices=("binaural", "tetrahedral"), required=True)
    s.add_argument("--audio-root", type=Path, help="default: manifest directory")
    s.add_argument("--calibration", type=Path, help="distance calibration JSON (default: per room)")
    s.add_argument("--seed", type=int, help="seed for binaural front/back and up/down guesses")
    s.add_argument("--out", type=Path, help="predictions JSONL")

    s = add("evaluate", cmd_evaluate, "score a predictions file against a manifest")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--pred", type=Path, required=True, help="predictions JSONL")
    s.add_argument("--out", type=Path, help="report JSON")
    s.add_argument("--csv", type=Path, help="report CSV")
    s.add_argument("--embed", action="store_true",
                   help="add embedding-based soft mAP (needs SSF_EMBED_ENDPOINT)")

    s = add("stats", cmd_stats, "distance/octant/type histograms of a manifest")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--out", type=Path, help="default: <manifest dir>/stats")
    s.add_argument("--plot", action="store_true", help="also write distance_hist.png")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (CliError, ConfigError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
