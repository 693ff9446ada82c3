import json
import math
import subprocess
import sys

import pytest

from osc_sde import experiments as ex
from osc_sde.cli import ConfigError, build_parser, main, parse_list, parse_number, resolve_config

HEADER = "experiment,problem,scheme,epsilon,h,M,error,ci_half_width,order_fit,residual,seed"
SMALL_WEAK = ["weak-conv", "--eps", "2^-4,2^-6", "--h", "2^-1,2^-2,2^-3", "--samples", "200",
              "--ref-refinement", "16"]


def data_lines(text):
    return [l for l in text.splitlines() if not l.startswith("#")]


def test_number_parsing():
    assert parse_number("2^-4") == 0.0625
    assert parse_number("0.5") == 0.5
    assert parse_list("2^-1, 2^-2,0.1") == (0.5, 0.25, 0.1)
    with pytest.raises(ConfigError):
        parse_number("two")
    with pytest.raises(ConfigError):
        parse_list(" , ")


def test_defaults_reproduce_published_grids():
    weak = ex.default_config("weak-conv")
    assert weak.final_time == 1.0 and weak.samples == 10**4
    assert weak.h == tuple(2.0**-k for k in range(1, 6))
    assert weak.eps == (2.0**-4, 2.0**-6, 2.0**-8, 2.0**-10)
    assert ex.catalog.get_spec(weak.problem).initial_state == (0.7,) * 4
    strong = ex.default_config("strong-conv")
    assert strong.samples == 100 and strong.h == tuple(2.0**-k for k in range(4, 9))
    assert ex.catalog.get_spec(strong.problem).initial_state == (0.12,) * 4
    res = ex.default_config("resonance")
    assert res.h[0] == pytest.approx(0.99 * 2 * math.pi * 0.1)
    assert res.final_time == 10.0


def test_seed_precedence(tmp_path):
    parser = build_parser()
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# a comment\nseed = 5\nsamples=300\n")
    env = {"OSC_SDE_SEED": "9"}
    assert resolve_config(parser.parse_args(["sweep"]), {}).seed == ex.DEFAULT_SEED
    assert resolve_config(parser.parse_args(["sweep"]), env).seed == 9
    assert resolve_config(parser.parse_args(["sweep", "--config", str(cfg)]), env).seed == 5
    args = parser.parse_args(["sweep", "--config", str(cfg), "--seed", "7"])
    c = resolve_config(args, env)
    assert c.seed == 7 and c.samples == 300


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["weak-conv", "--samples", "0"]) == 2
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "config" and record["exit_code"] == 2
    assert main(["weak-conv", "--scheme", "milstein"]) == 2
    assert main(["weak-conv", "--eps", "2"]) == 2
    assert main(["weak-conv", "--problem", "nope"]) == 2
    assert main(["weak-conv", "--h", "0.3", "--samples", "100"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert main(["weak-conv", "--config", str(bad)]) == 2
    assert main(["weak-conv", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_blow_up_exits_3(capsys):
    code = main(["strong-conv", "--problem", "logistic", "--scheme", "em", "--h", "0.5,0.25,0.125",
                 "--eps", "0.1", "--samples", "50", "--noise-scale", "20", "--final-time", "2"])
    assert code == 3
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "blow-up" and record["step"] is not None


def test_weak_csv_output(tmp_path):
    out = tmp_path / "w.csv"
    assert main(SMALL_WEAK + ["--out", str(out)]) == 0
    text = out.read_text()
    assert "# experiment=weak-conv" in text and "# seed=20261016" in text
    lines = data_lines(text)
    assert lines[0] == HEADER
    assert len(lines) == 1 + 3 * 2 * 3
    assert all(l.split(",")[8] for l in lines[1:])


def test_json_output(capsys):
    assert main(SMALL_WEAK + ["--format", "json", "--scheme", "micro-macro"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["samples"] == 200
    assert len(doc["rows"]) == 6


def test_deterministic_problem_with_one_sample(capsys):
    assert main(["weak-conv", "--problem", "pure-osc", "--samples", "1", "--scheme", "integral",
                 "--h", "2^-2,2^-3,2^-4", "--eps", "0.3"]) == 0
    rows = [l.split(",") for l in data_lines(capsys.readouterr().out)[1:]]
    assert all(float(r[6]) < 1e-12 and float(r[7]) == 0.0 for r in rows)


def test_output_identical_across_threads(tmp_path):
    runs = {
        "weak": SMALL_WEAK,
        "strong": ["strong-conv", "--eps", "2^-4", "--h", "2^-4,2^-5,2^-6", "--samples", "1500",
                   "--ref-refinement", "16"],
        "sweep": ["sweep", "--samples", "1200", "--h", "2^-5"],
        "resonance": ["resonance"],
    }
    for name, argv in runs.items():
        texts = []
        for threads in ("1", "3", "1"):
            out = tmp_path / f"{name}{len(texts)}.csv"
            assert main(argv + ["--threads", threads, "--out", str(out)]) == 0
            texts.append(out.read_bytes())
        assert texts[0] == texts[1] == texts[2], name


def test_resonance_outputs(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["resonance", "--out", str(out)]) == 0
    lines = data_lines(out.read_text())
    assert lines[0] == HEADER and len(lines) == 3
    doc = json.loads((tmp_path / "r.csv.paths.json").read_text())
    assert [p["scheme"] for p in doc["paths"]] == ["reference-integral", "em", "micro-macro"]
    for p in doc["paths"]:
        assert set(p) == {"t", "x", "scheme", "seed"}
        assert len(p["t"]) == len(p["x"])
    assert doc["steps"] == 16


def test_resonance_without_noise_is_reproducible(tmp_path, capsys):
    docs = []
    for seed in ("1", "2"):
        assert main(["resonance", "--noise-scale", "0", "--format", "json", "--seed", seed]) == 0
        doc = json.loads(capsys.readouterr().out)
        docs.append((doc["endpoint_errors"], [p["x"] for p in doc["paths"]]))
    assert docs[0] == docs[1]


def test_resonance_away_from_resonance_tracks_reference(capsys):
    assert main(["resonance", "--h", "2^-6", "--format", "json"]) == 0
    errors = json.loads(capsys.readouterr().out)["endpoint_errors"]
    assert errors["em"] <= 0.05 and errors["micro-macro"] <= 0.05


def test_validate_passes_and_detects_wrong_period(capsys):
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(l.startswith("PASS ") for l in lines)
    assert main(["validate", "--period-scale", "0.5", "--problem", "logistic"]) == 4
    out = capsys.readouterr().out
    assert "FAIL logistic periodicity" in out


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "osc_sde.cli", "sweep", "--samples", "100",
                          "--h", "2^-4"], capture_output=True, text=True, check=True)
    assert data_lines(res.stdout)[0] == HEADER
