from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gateshadow.applications import average_gate_fidelity
from gateshadow.cli import main
from gateshadow.clifford import enumerate_cliffords
from gateshadow.noise import depolarizing

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path: Path, obj) -> str:
    path.write_text(json.dumps(obj))
    return str(path)


def _small_config(tmp_path, gate_set="multi_clifford", n=2, S=40, lengths=(1, 2, 4), noise=None):
    cfg = {"gate_set": gate_set, "n": n, "lengths": list(lengths), "sequences_per_length": S, "seed": 5}
    cfg["noise"] = noise or {"lambda_L": [{"type": "depolarizing", "params": {"p": 0.05}}]}
    return _write(tmp_path / f"{gate_set}.json", cfg)


@pytest.fixture()
def multi_shadow(tmp_path):
    out = tmp_path / "multi.jsonl"
    assert main(["simulate", _small_config(tmp_path), "-o", str(out)]) == 0
    return out


def test_simulate_same_seed_is_byte_identical(tmp_path):
    cfg = _small_config(tmp_path)
    a, b, c = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"
    assert main(["simulate", cfg, "-o", str(a), "--seed", "11"]) == 0
    assert main(["simulate", cfg, "-o", str(b), "--seed", "11", "--threads", "3"]) == 0
    assert main(["simulate", cfg, "-o", str(c), "--seed", "12"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_manifest_contents(multi_shadow):
    man = json.loads(Path(str(multi_shadow) + ".manifest.json").read_text())
    assert man["tool"] == "gateshadow" and man["command"] == "simulate"
    assert set(man) >= {"version", "options", "seed", "inputs", "outputs", "config_hash", "started", "finished"}
    assert all(len(h) == 64 for h in man["inputs"].values())
    assert man["experiment"]["n"] == 2


def test_config_hash_ignores_timestamps(tmp_path):
    cfg = _small_config(tmp_path)
    hashes = []
    for name in ("x.jsonl", "y.jsonl"):
        out = tmp_path / name
        main(["simulate", cfg, "-o", str(out)])
        hashes.append(json.loads(Path(str(out) + ".manifest.json").read_text())["config_hash"])
    assert hashes[0] == hashes[1]


def test_replay_reproduces_output(multi_shadow, tmp_path):
    again = tmp_path / "again.jsonl"
    assert main(["replay", str(multi_shadow) + ".manifest.json", "-o", str(again)]) == 0
    assert again.read_bytes() == multi_shadow.read_bytes()


def test_estimate_example_probe_file(multi_shadow, tmp_path):
    out = tmp_path / "est.json"
    assert main(["estimate", str(multi_shadow), str(CONFIGS / "probes_example.json"), "-o", str(out), "--bootstrap", "20"]) == 0
    doc = json.loads(out.read_text())
    assert len(doc) == 16
    assert doc[0]["probe"] == "P_ad"
    assert {"m", "mean", "mom", "ci_lo", "ci_hi", "n_records"} == set(doc[0]["per_m"][0])
    csv_out = tmp_path / "est.csv"
    assert main(
        ["estimate", str(multi_shadow), str(CONFIGS / "probes_example.json"), "-o", str(csv_out), "--format", "csv",
         "--estimator", "mom:4", "--bootstrap", "0"]
    ) == 0
    rows = list(csv.DictReader(io.StringIO(csv_out.read_text())))
    assert len(rows) == 16 * 3 and rows[0]["probe"] == "P_ad"


def test_estimate_replay_matches(multi_shadow, tmp_path):
    out, again = tmp_path / "e1.json", tmp_path / "e2.json"
    main(["estimate", str(multi_shadow), str(CONFIGS / "probes_example.json"), "-o", str(out), "--bootstrap", "10", "--seed", "4"])
    assert main(["replay", str(out) + ".manifest.json", "-o", str(again)]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_learn_unitary_csv(multi_shadow, tmp_path):
    grid = _write(tmp_path / "grid.json", {"model": "rz_product", "names": ["a", "b"], "axes": [[0.0, 0.1], [0.0, 0.1]]})
    out = tmp_path / "land.csv"
    assert main(["learn-unitary", str(multi_shadow), grid, "-o", str(out), "--format", "csv", "--bootstrap", "0"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "a,b,p,F,ci_lo,ci_hi" and len(lines) == 5


def test_pauli_noise_command(tmp_path):
    shadow = tmp_path / "pauli.jsonl"
    assert main(["simulate", _small_config(tmp_path, "pauli_interleaved", n=1), "-o", str(shadow)]) == 0
    out = tmp_path / "ev.json"
    assert main(["pauli-noise", str(shadow), "-o", str(out), "--bootstrap", "0"]) == 0
    assert [e["tau"] for e in json.loads(out.read_text())["eigenvalues"]] == ["Z", "X", "Y"]


def test_crosstalk_command(tmp_path):
    shadow = tmp_path / "local.jsonl"
    noise = {"lambda_L": [{"type": "local_depolarizing", "params": {"p": 0.02}}]}
    assert main(["simulate", _small_config(tmp_path, "local_clifford", S=60, noise=noise), "-o", str(shadow)]) == 0
    out = tmp_path / "xt.json"
    assert main(["crosstalk", str(shadow), "-o", str(out), "--targets", "01,10", "--bootstrap", "0"]) == 0
    doc = json.loads(out.read_text())
    assert set(doc["marginals"]) == {"01", "10"} and doc["metrics"] == []


def test_reconstruct_from_fidelities(tmp_path):
    ch = depolarizing(1, 0.2)
    fids = {"n": 1, "fidelities": [{"tableau": c.to_json(), "F": average_gate_fidelity(c.to_ptm(), ch)} for c in enumerate_cliffords(1)]}
    ref = tmp_path / "ref.json"
    ref.write_text(ch.dumps())
    out = tmp_path / "rec.json"
    assert main(["reconstruct", "--fidelities", _write(tmp_path / "f.json", fids), "--reference", str(ref), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["exact_design"] is True and doc["choi_hs_distance"] < 1e-10


@pytest.mark.parametrize(
    "argv_tail",
    [
        ["simulate", "missing.json"],
        ["estimate", "missing.jsonl", "probes.json"],
        ["reconstruct"],
    ],
)
def test_usage_errors_exit_2(tmp_path, argv_tail, capsys):
    assert main([*argv_tail, "-o", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_flag_exit_2(tmp_path):
    assert main(["simulate", "x.json", "-o", str(tmp_path / "o"), "--seed", "-3"]) == 2
    assert main(["estimate", "a", "b", "-o", "c", "--estimator", "median"]) == 2


def test_config_error_names_field(tmp_path, capsys):
    bad = _write(tmp_path / "bad.json", {"gate_set": "multi_clifford", "n": 1, "lengths": [1]})
    assert main(["simulate", bad, "-o", str(tmp_path / "o")]) == 2
    assert "sequences_per_length: missing field" in capsys.readouterr().err
    noisy = _write(
        tmp_path / "bad2.json",
        {"gate_set": "multi_clifford", "n": 1, "lengths": [1], "sequences_per_length": 2,
         "noise": {"lambda_L": [{"type": "depolarizing", "params": {}}]}},
    )
    assert main(["simulate", noisy, "-o", str(tmp_path / "o")]) == 2
    assert "noise.lambda_L[0].params.p: missing field" in capsys.readouterr().err


def test_truncated_shadow_is_usage_error(multi_shadow, tmp_path, capsys):
    text = multi_shadow.read_text()
    broken = tmp_path / "broken.jsonl"
    broken.write_text(text[: len(text) // 2])
    rc = main(["estimate", str(broken), str(CONFIGS / "probes_example.json"), "-o", str(tmp_path / "o")])
    assert rc == 2 and "last valid record" in capsys.readouterr().err


def test_too_few_lengths_is_numerical_failure(tmp_path, capsys):
    shadow = tmp_path / "short.jsonl"
    assert main(["simulate", _small_config(tmp_path, lengths=(1, 2)), "-o", str(shadow)]) == 0
    probes = _write(tmp_path / "p.json", {"probes": [{"type": "projector"}]})
    assert main(["estimate", str(shadow), probes, "-o", str(tmp_path / "o"), "--bootstrap", "0"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_probe_file_errors(multi_shadow, tmp_path, capsys):
    probes = _write(tmp_path / "p.json", {"probes": [{"type": "clifford"}]})
    assert main(["estimate", str(multi_shadow), probes, "-o", str(tmp_path / "o")]) == 2
    assert "probes[0].tableau: missing field" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gateshadow", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gateshadow" in proc.stdout


def test_shipped_configs_parse():
    from gateshadow.experiment import ExperimentConfig

    for name in ("unitary_rz", "crosstalk_xx", "crosstalk_zz", "crosstalk_product", "depolarizing", "depolarizing_spam", "pauli_noise"):
        cfg = ExperimentConfig.from_json(json.loads((CONFIGS / f"{name}.json").read_text()))
        noise, spam = cfg.build_noise()
        assert np.isfinite(noise.channel.matrix).all() and spam.n == cfg.n
