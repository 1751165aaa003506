from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gateshadow.clifford import CliffordElement, cnot, compose_clifford, conjugate_pauli, hadamard, invert, phase_gate, sample_clifford
from gateshadow.experiment import (
    ConfigError,
    ExperimentConfig,
    GateSetShadow,
    PauliInterleavedGates,
    ShadowFormatError,
    SimulationError,
    parse_shadow_lines,
    pauli_character_table,
    read_shadow,
    run_experiment,
    run_pauli_interleaved,
    run_uirs,
    shadow_lines,
    simulate_pauli_sequence,
    simulate_sequence,
    write_shadow,
)
from gateshadow.liouville import SuperOperator
from gateshadow.noise import GateNoiseModel, SpamModel, depolarizing
from gateshadow.pauli import PauliString, pauli_mul

H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
S = np.diag([1, 1j])
I2 = np.eye(2)
CX = np.eye(4)[[0, 1, 3, 2]]


def _gate(kind: str, q: int):
    """Two-qubit gate as (tableau, unitary); qubit 0 is the most significant bit."""
    if kind == "h":
        return hadamard(2, q), np.kron(H, I2) if q == 0 else np.kron(I2, H)
    if kind == "s":
        return phase_gate(2, q), np.kron(S, I2) if q == 0 else np.kron(I2, S)
    return (cnot(2, 0, 1), CX) if q == 0 else (cnot(2, 1, 0), np.eye(4)[[0, 3, 2, 1]])


def _random_circuit(rng, depth: int):
    c, u = CliffordElement.identity(2), np.eye(4, dtype=complex)
    for _ in range(depth):
        g, v = _gate(rng.choice(["h", "s", "cx"]), int(rng.integers(2)))
        c, u = compose_clifford(g, c), v @ u
    return c, u


def _config(**kw):
    base = dict(gate_set="multi_clifford", n=2, lengths=(1, 2, 3), sequences_per_length=20, seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


ideal = GateNoiseModel(SuperOperator.identity(2), SuperOperator.identity(2))


def test_noiseless_identity_sequence():
    probs = simulate_sequence([CliffordElement.identity(2)] * 3, ideal, SpamModel.ideal(2))
    assert np.allclose(probs, [1, 0, 0, 0])


@pytest.mark.parametrize("seed", range(5))
def test_clifford_sequence_matches_state_vector(seed):
    rng = np.random.default_rng(seed)
    pieces = [_random_circuit(rng, 6) for _ in range(3)]
    u = np.eye(4)
    for _, v in pieces:
        u = v @ u
    want = np.abs(u[:, 0]) ** 2
    got = simulate_sequence([c for c, _ in pieces], ideal, SpamModel.ideal(2))
    assert np.allclose(got, want)


def test_full_depolarizing_gives_uniform():
    noise = GateNoiseModel.left(depolarizing(2, 1.0))
    got = simulate_sequence([hadamard(2, 0), cnot(2, 0, 1)], noise, SpamModel.ideal(2))
    assert np.allclose(got, 0.25)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_pauli_interleaved_tableau_oracle(seed, m):
    n = 2
    rng = np.random.default_rng(seed)
    c = sample_clifford(n, rng)
    paulis = tuple(PauliString.from_index(n, int(i)) for i in rng.integers(0, 4**n, size=m))
    prod = paulis[0]
    for p in paulis[1:]:
        prod = pauli_mul(p, prod)
    q = conjugate_pauli(invert(c), prod)
    expected = q.index >> n
    probs = simulate_pauli_sequence(PauliInterleavedGates(c, paulis), SuperOperator.identity(n), SpamModel.ideal(n))
    assert probs[expected] == pytest.approx(1.0)


def test_pauli_twirl_average_projects_onto_identity():
    n = 2
    chi = pauli_character_table(n)
    draws = np.random.default_rng(0).integers(0, 4**n, size=100_000)
    avg = chi[draws].mean(axis=0)
    want = np.zeros(4**n)
    want[0] = 1
    assert np.allclose(avg, want, atol=0.02)


@pytest.mark.parametrize("gate_set", ["multi_clifford", "local_clifford", "pauli_interleaved"])
def test_file_round_trip(tmp_path, gate_set):
    shadow = run_experiment(_config(gate_set=gate_set, noise={"lambda_L": [{"type": "depolarizing", "params": {"p": 0.1}}]}))
    path = tmp_path / "s.jsonl"
    write_shadow(shadow, str(path))
    back = read_shadow(str(path))
    assert back.equals(shadow)
    r0, r1 = shadow.record(2, 3), back.record(2, 3)
    assert r0.outcome == r1.outcome and r0.gate_set == gate_set
    assert [getattr(g, "key", g) for g in r0.gates] == [getattr(g, "key", g) for g in r1.gates]


def test_truncated_file_reports_line(tmp_path):
    lines = list(shadow_lines(run_experiment(_config())))
    broken = lines[:5] + [lines[5][: len(lines[5]) // 2]]
    with pytest.raises(ShadowFormatError, match=r"line 6: invalid JSON .*last valid record: line 5"):
        parse_shadow_lines(broken)


def test_missing_header_rejected():
    with pytest.raises(ShadowFormatError, match="line 1"):
        parse_shadow_lines(['{"m": 1, "gates": [0], "outcome": 0}'])


@pytest.mark.parametrize("gate_set", ["multi_clifford", "local_clifford", "pauli_interleaved"])
def test_determinism(gate_set):
    a = run_experiment(_config(gate_set=gate_set))
    b = run_experiment(_config(gate_set=gate_set))
    c = run_experiment(_config(gate_set=gate_set, seed=8))
    assert list(shadow_lines(a)) == list(shadow_lines(b))
    assert list(shadow_lines(a)) != list(shadow_lines(c))


@pytest.mark.parametrize("gate_set", ["multi_clifford", "local_clifford", "pauli_interleaved"])
def test_thread_count_does_not_change_output(gate_set):
    cfg = _config(gate_set=gate_set, sequences_per_length=37)
    assert list(shadow_lines(run_experiment(cfg, threads=1))) == list(shadow_lines(run_experiment(cfg, threads=4)))


def test_outcome_frequencies_chi_square():
    cfg = _config(
        lengths=(2,),
        sequences_per_length=1,
        shots_per_sequence=40_000,
        noise={"lambda_L": [{"type": "depolarizing", "params": {"p": 0.2}}], "spam": {"readout_flip": 0.1}},
    )
    shadow = run_experiment(cfg)
    noise, spam = cfg.build_noise()
    probs = simulate_sequence(shadow.record(2, 0).gates, noise, spam)
    counts = np.bincount(shadow.batches[2].outcomes, minlength=4)
    expected = probs * 40_000
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < 21.1  # 3 degrees of freedom, p = 1e-4


def test_shots_expand_records():
    shadow = run_experiment(_config(sequences_per_length=5, shots_per_sequence=3))
    assert shadow.num_records(1) == 15
    b = shadow.batches[1]
    assert np.array_equal(b.gates[0], b.gates[2])


def test_merge_and_from_records():
    a = run_experiment(_config(sequences_per_length=4))
    b = run_experiment(_config(sequences_per_length=4, seed=9))
    merged = a.merge(b)
    assert merged.num_records(2) == 8
    again = GateSetShadow.from_records(a.config, list(a.records()))
    assert again.equals(a)


@pytest.mark.parametrize(
    "kw, field",
    [
        ({"gate_set": "bogus"}, "gate_set"),
        ({"n": 0}, "n"),
        ({"lengths": ()}, "lengths"),
        ({"lengths": (3, 2)}, "lengths"),
        ({"sequences_per_length": 0}, "sequences_per_length"),
        ({"seed": -1}, "seed"),
    ],
)
def test_config_validation(kw, field):
    with pytest.raises(ConfigError, match=field):
        _config(**kw)


def test_config_json_errors():
    with pytest.raises(ConfigError, match="sequences_per_length: missing field"):
        ExperimentConfig.from_json({"gate_set": "multi_clifford", "n": 1, "lengths": [1]})
    cfg = _config()
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_runner_gate_set_mismatch():
    with pytest.raises(ConfigError):
        run_uirs(_config(gate_set="pauli_interleaved"))
    with pytest.raises(ConfigError):
        run_pauli_interleaved(_config())


def test_non_cptp_simulation_fails():
    bad = object.__new__(GateNoiseModel)
    object.__setattr__(bad, "lambda_L", SuperOperator(1, np.diag([1.0, 3.0, 1.0, 1.0])))
    object.__setattr__(bad, "lambda_R", SuperOperator.identity(1))
    with pytest.raises(SimulationError):
        simulate_sequence([CliffordElement.identity(1)], bad, SpamModel.ideal(1))
