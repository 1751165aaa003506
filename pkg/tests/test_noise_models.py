from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gateshadow.liouville import SuperOperator, is_cptp, projector, tensor, unitarity
from gateshadow.noise import (
    GateNoiseModel,
    NoiseModelError,
    SpamModel,
    amplitude_damping,
    build_noise_model,
    depolarizing,
    local_depolarizing,
    pauli_channel,
    random_pauli_channel,
    random_unital,
    rotation_x,
    rotation_z,
    xx_coupling,
    zz_coupling,
)
from gateshadow.pauli import label_index


def test_depolarizing_diagonal():
    assert np.allclose(depolarizing(1, 0.1).matrix, np.diag([1, 0.9, 0.9, 0.9]))
    assert depolarizing(3, 0.0).allclose(SuperOperator.identity(3))


def test_pauli_channel_x():
    q = 0.05
    m = pauli_channel(1, {"X": q}).matrix
    # basis order I, Z, X, Y
    assert np.allclose(m, np.diag([1, 1 - 2 * q, 1, 1 - 2 * q]))


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_invalid_probability(p):
    with pytest.raises(NoiseModelError):
        depolarizing(1, p)


def test_pauli_channel_probabilities_exceed_one():
    with pytest.raises(NoiseModelError):
        pauli_channel(1, {"X": 0.6, "Z": 0.6})


def test_rotation_z_entries():
    assert rotation_z(0.0).allclose(SuperOperator.identity(1))
    theta = 0.3
    m = rotation_z(theta).matrix
    x = label_index("X")
    assert m[x, x] == pytest.approx(np.cos(theta))
    assert rotation_x(theta).matrix[label_index("Z"), label_index("Z")] == pytest.approx(np.cos(theta))


@pytest.mark.parametrize("ch", [xx_coupling(0.4), zz_coupling(0.4), rotation_z(0.7)])
def test_couplings_unitary(ch):
    p = projector("ad", ch.n).superop
    assert unitarity(p @ ch @ p) == pytest.approx(1.0)
    assert is_cptp(ch)


def test_zz_coupling_leaves_z_paulis_fixed():
    m = zz_coupling(0.4).matrix
    for lab in ("ZI", "IZ", "ZZ"):
        i = label_index(lab)
        assert m[i, i] == pytest.approx(1.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_pauli_channel_eigenvalues(seed):
    ch = random_pauli_channel(2, np.random.default_rng(seed), min_eigenvalue=0.9)
    d = np.diag(ch.matrix)
    assert d[0] == pytest.approx(1.0)
    assert np.all(d >= 0.9 - 1e-12) and np.all(d <= 1 + 1e-12)
    assert np.allclose(ch.matrix, np.diag(d))
    assert is_cptp(ch)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tensor_of_cptp_is_cptp(seed):
    rng = np.random.default_rng(seed)
    a = random_unital(1, rng)
    b = amplitude_damping(rng.uniform())
    assert is_cptp(tensor(a, b))


def test_local_depolarizing_is_product():
    assert local_depolarizing(2, 0.1).allclose(tensor(depolarizing(1, 0.1), depolarizing(1, 0.1)))


def test_noise_model_validation():
    with pytest.raises(NoiseModelError):
        GateNoiseModel.left(SuperOperator(1, np.diag([1, 1.2, 1, 1])))
    noise = GateNoiseModel(amplitude_damping(0.1), rotation_z(0.2))
    assert noise.channel.allclose(rotation_z(0.2) @ amplitude_damping(0.1))


def test_spam_validation():
    ideal = SpamModel.ideal(1)
    with pytest.raises(NoiseModelError):
        SpamModel(1, 2 * ideal.rho, ideal.effects)
    with pytest.raises(NoiseModelError):
        SpamModel(1, ideal.rho, ideal.effects * 0.5)


def test_readout_flip_confusion():
    spam = SpamModel.noisy(1, readout_flip=0.1)
    p0 = spam.effects @ spam.rho
    assert np.allclose(p0, [0.9, 0.1])


def test_trivial_config():
    noise, spam = build_noise_model({"n": 2})
    assert noise.channel.allclose(SuperOperator.identity(2))
    assert np.allclose(spam.effects, SpamModel.ideal(2).effects)


def test_layered_configs_compose_in_order():
    noise, _ = build_noise_model(
        {
            "n": 2,
            "lambda_L": [
                {"type": "rotation_z", "qubits": [0], "params": {"theta": 0.07}},
                {"type": "rotation_z", "qubits": [1], "params": {"theta": 0.13}},
                {"type": "local_depolarizing", "params": {"p": 0.002}},
            ],
        }
    )
    want = local_depolarizing(2, 0.002) @ tensor(rotation_z(0.07), rotation_z(0.13))
    assert noise.lambda_L.allclose(want)
    xt, _ = build_noise_model(
        {"n": 2, "lambda_L": [{"type": "local_depolarizing", "params": {"p": 0.002}}, {"type": "xx", "params": {"theta": 0.4}}]}
    )
    assert xt.lambda_L.allclose(xx_coupling(0.4) @ local_depolarizing(2, 0.002))


@pytest.mark.parametrize(
    "config, message",
    [
        ({"n": 1, "lambda_L": [{"type": "depolarizing", "params": {}}]}, "noise.lambda_L[0].params.p: missing field"),
        ({"n": 1, "lambda_R": [{"params": {}}]}, "noise.lambda_R[0].type: missing field"),
        ({"n": 1, "lambda_L": [{"type": "bogus"}]}, "unknown channel type"),
        ({"n": 1, "lambda_L": [{"type": "ptm", "params": {"rows": np.diag([1, 1, 1, -1]).tolist()}}]}, "not CPTP"),
        ({}, "noise.n: missing field"),
    ],
)
def test_config_errors_name_field(config, message):
    with pytest.raises(NoiseModelError, match=message.replace("[", r"\[").replace("]", r"\]")):
        build_noise_model(config)
