import json

import numpy as np
import pytest

from spatialsoundqa import metrics, qa
from spatialsoundqa.cli import main
from spatialsoundqa.features import load_features
from spatialsoundqa.wavio import read_wav


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def small_config(workdir):
    cfg = {"rooms": {"categories": ["anechoic", "bedroom"], "per_category": 1, "max_order": 3},
           "receiver": {"type": "tetrahedral"}, "n_records": 24}
    p = workdir / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_synth_corpus_and_make_qa(workdir, small_config, capsys):
    code, out, _ = run(["synth-corpus", "--n-clips", 15, "--seed", 2, "--out", workdir / "corpus"], capsys)
    assert code == 0 and json.loads(out)["clips"] == 15
    code, out, err = run(["make-qa", "--config", small_config, "--corpus", workdir / "corpus/index.jsonl",
                          "--out-dir", workdir / "run", "--seed", 9, "--render"], capsys)
    assert code == 0, err
    info = json.loads(out)
    assert info["records"] == 24 and info["rendered"]
    recs = qa.read_jsonl(workdir / "run/manifest.jsonl")
    assert qa.audit(recs) == []
    for name in ("stage_I", "stage_II", "stage_III", "instructions"):
        assert (workdir / f"run/{name}.jsonl").exists()
    saved = json.loads((workdir / "run/config.json").read_text())
    assert saved["seed"] == 9 and saved["receiver"]["type"] == "tetrahedral"
    x, rate = read_wav(workdir / "run" / recs[0]["audio_path"])
    assert x.shape == (4, 320000) and rate == 32000


def test_make_qa_is_deterministic(workdir, small_config, capsys):
    args = ["make-qa", "--config", small_config, "--corpus", workdir / "corpus/index.jsonl", "--seed", 9]
    run(args + ["--out-dir", workdir / "again"], capsys)
    a = (workdir / "run/manifest.jsonl").read_bytes()
    assert a == (workdir / "again/manifest.jsonl").read_bytes()
    run(args[:-1] + ["10", "--out-dir", workdir / "other"], capsys)
    assert a != (workdir / "other/manifest.jsonl").read_bytes()


def test_oracle_evaluation(workdir, capsys):
    recs = qa.read_jsonl(workdir / "run/manifest.jsonl")
    metrics.write_predictions(metrics.oracle_predictions(recs), workdir / "oracle.jsonl")
    code, out, _ = run(["evaluate", "--manifest", workdir / "run/manifest.jsonl",
                        "--pred", workdir / "oracle.jsonl", "--out", workdir / "rep.json",
                        "--csv", workdir / "rep.csv"], capsys)
    assert code == 0 and "Detection mAP" in out
    rep = json.loads((workdir / "rep.json").read_text())
    assert rep["octant_acc"] == 1.0 and rep["der"] == 0.0
    assert (workdir / "rep.csv").read_text().startswith("metric,value\n")


def test_baseline_and_features(workdir, capsys):
    code, out, err = run(["baseline", "--manifest", workdir / "run/manifest.jsonl",
                          "--mode", "tetrahedral", "--out", workdir / "pred.jsonl"], capsys)
    assert code == 0, err
    preds = metrics.load_predictions(workdir / "pred.jsonl")
    n_b = sum(r["qtype"] == "B" for r in qa.read_jsonl(workdir / "run/manifest.jsonl"))
    assert len(preds) == n_b > 0
    code, out, err = run(["baseline", "--manifest", workdir / "run/manifest.jsonl",
                          "--mode", "binaural"], capsys)
    assert code == 1 and json.loads(err)["error"] == "BaselineError"

    # features need binaural audio: build a tiny binaural run
    code, _, err = run(["make-qa", "--corpus", workdir / "corpus/index.jsonl", "--n", 2,
                        "--out-dir", workdir / "bin", "--render"], capsys)
    assert code == 0, err
    code, out, err = run(["features", "--manifest", workdir / "bin/manifest.jsonl"], capsys)
    assert code == 0, err
    z = load_features(workdir / "bin/features/q0000000.f32")
    assert z.shape == (4, 1024, 128) and np.all(np.isfinite(z))


def test_stats(workdir, capsys):
    code, out, _ = run(["stats", "--manifest", workdir / "run/manifest.jsonl", "--plot"], capsys)
    assert code == 0
    d = workdir / "run/stats"
    assert (d / "distance_hist.csv").read_text().startswith("distance_bin_m,count")
    assert (d / "distance_hist.png").stat().st_size > 0
    assert json.loads(out)["sources"] > 24


def test_simulate_rir_and_rt60(workdir, capsys):
    code, out, err = run(["simulate-rir", "--room", "bedroom", "--max-order", 4, "--source", 1, 1, 1.2,
                          "--out", workdir / "ir.wav"], capsys)
    assert code == 0, err
    info = json.loads(out)
    assert info["channels"] == 2 and info["rt60_sabine"] > 0
    code, out, _ = run(["rt60", "--wav", workdir / "ir.wav"], capsys)
    assert code == 0 and json.loads(out)["rt60_schroeder"] > 0
    code, _, err = run(["simulate-rir", "--room", "attic", "--source", 1, 1, 1, "--out",
                        workdir / "x.wav"], capsys)
    assert code == 1 and "unknown room" in json.loads(err)["message"]


def test_help_and_argument_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "make-qa" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["make-qa", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["make-qa", "--ou", "x"])  # no abbreviations


def test_bad_config_reports_json(workdir, capsys):
    p = workdir / "bad.json"
    p.write_text(json.dumps({"sed": 3}))
    code, _, err = run(["make-qa", "--config", p], capsys)
    assert code == 1
    msg = json.loads(err)
    assert msg["error"] == "ConfigError" and "sed" in msg["message"]
    p.write_text("{")
    code, _, err = run(["make-qa", "--config", p], capsys)
    assert code == 1 and "invalid JSON" in json.loads(err)["message"]
    code, _, err = run(["make-qa"], capsys)
    assert code == 1 and "corpus" in json.loads(err)["message"]
