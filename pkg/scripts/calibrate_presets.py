"""Re-tune ``design_rt60_s`` in the shipped room presets.

Each category's ten variants are rendered (single omni mic, random positions)
and the design value is rescaled until the mean Schroeder RT60 matches
``target_rt60_s``. Rewrites src/spatialsoundqa/data/room_presets.json.
"""

import json
from pathlib import Path

import numpy as np

from spatialsoundqa.presets import load_presets, room_variants
from spatialsoundqa.rng import stream
from spatialsoundqa.room import ReceiverSpec, SourceSpec, rt60_schroeder, simulate_rir

PATH = Path(__file__).resolve().parents[1] / "src/spatialsoundqa/data/room_presets.json"


def measure(rooms, seed=0):
    out = []
    for i, room in enumerate(rooms):
        rng = stream(seed, "rt60-check", i)
        dims = np.array(room.dimensions)
        rec = np.array([rng.uniform(0.5, dims[0] - 0.5), rng.uniform(0.5, dims[1] - 0.5), 1.5])
        while True:
            src = rng.uniform(0.3, dims - 0.3)
            if np.linalg.norm(src - rec) > 0.5:
                break
        out.append(rt60_schroeder(simulate_rir(room, SourceSpec(src), ReceiverSpec(rec))))
    return np.array(out)


def main(iterations=4):
    presets = load_presets(PATH)
    for entry in presets["rooms"]:
        entry.setdefault("design_rt60_s", entry["target_rt60_s"])
        for _ in range(iterations):
            single = dict(presets, rooms=[entry])
            ratio = measure(room_variants(single)).mean() / entry["target_rt60_s"]
            entry["design_rt60_s"] = round(entry["design_rt60_s"] / ratio, 4)
        print(entry["category"], entry["design_rt60_s"], round(ratio, 4))
    head = {k: v for k, v in presets.items() if k != "rooms"}
    text = json.dumps(head, indent=2)[:-2] + ',\n  "rooms": [\n'
    text += ",\n".join("    " + json.dumps(e) for e in presets["rooms"]) + "\n  ]\n}\n"
    PATH.write_text(text)


if __name__ == "__main__":
    main()
