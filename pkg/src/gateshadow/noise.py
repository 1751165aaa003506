"""Noise channels, the gate-independent noise model and SPAM errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .liouville import (
    CPTP_TOL,
    SuperOperator,
    embed,
    is_cptp,
    kraus_ptm,
    pauli_vec_to_operator,
    state_to_pauli_vec,
    tensor_all,
    unitary_ptm,
)
from .pauli import PauliString, basis_bits, popcount

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class NoiseModelError(ValueError):
    """Invalid channel parameters or a non-CPTP noise configuration."""


def _check_prob(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise NoiseModelError(f"{name} must lie in [0, 1], got {p}")
    return p


# -- primitive channels -----------------------------------------------------------------

def depolarizing(n: int, p: float) -> SuperOperator:
    """``rho -> (1 - p) rho + p tr(rho) I / 2**n``."""
    p = _check_prob(p)
    diag = np.full(4**n, 1.0 - p)
    diag[0] = 1.0
    return SuperOperator(n, np.diag(diag))


def _as_pauli(key, n: int) -> PauliString:
    if isinstance(key, PauliString):
        p = key
    elif isinstance(key, str):
        p = PauliString.from_label(key)
    else:
        p = PauliString.from_index(n, int(key))
    if p.n != n:
        raise NoiseModelError(f"Pauli {key!r} does not act on {n} qubits")
    return p


def pauli_channel(n: int, probs: Mapping) -> SuperOperator:
    """Pauli channel ``rho -> sum_P c_P P rho P``; the identity absorbs the remainder.

    :param n: number of qubits
    :param probs: map from Pauli (label, index or :class:`PauliString`) to probability
    """
    xs, zs = basis_bits(n)
    coeffs = np.zeros(4**n)
    for key, q in probs.items():
        q = _check_prob(q, f"probability of {key}")
        coeffs[_as_pauli(key, n).index] += q
    total = coeffs[1:].sum()
    if total > 1.0 + 1e-12:
        raise NoiseModelError(f"Pauli probabilities sum to {total} > 1")
    coeffs[0] = max(0.0, 1.0 - total) if coeffs[0] == 0 else coeffs[0]
    if abs(coeffs.sum() - 1.0) > 1e-12:
        raise NoiseModelError(f"Pauli probabilities sum to {coeffs.sum()} != 1")
    return SuperOperator(n, np.diag(pauli_eigenvalues_from_probs(n, coeffs)))


def pauli_eigenvalues_from_probs(n: int, coeffs: np.ndarray) -> np.ndarray:
    """``lambda_tau = sum_P c_P (-1)**<P, tau>`` for a full probability vector."""
    xs, zs = basis_bits(n)
    anti = np.array(
        [[popcount((int(px) & int(tz)) ^ (int(pz) & int(tx))) & 1 for px, pz in zip(xs, zs)] for tx, tz in zip(xs, zs)]
    )
    return (1.0 - 2.0 * anti) @ np.asarray(coeffs, dtype=float)


def _rotation(generator: np.ndarray, theta: float) -> np.ndarray:
    """``exp(-i theta G / 2)`` for an involutory ``G``."""
    d = generator.shape[0]
    return np.cos(theta / 2) * np.eye(d) - 1j * np.sin(theta / 2) * generator


def rotation_z(theta: float) -> SuperOperator:
    return unitary_ptm(_rotation(_PAULI_1Q["Z"], theta))


def rotation_x(theta: float) -> SuperOperator:
    return unitary_ptm(_rotation(_PAULI_1Q["X"], theta))


def xx_coupling(theta: float) -> SuperOperator:
    return unitary_ptm(_rotation(np.kron(_PAULI_1Q["X"], _PAULI_1Q["X"]), theta))


def zz_coupling(theta: float) -> SuperOperator:
    return unitary_ptm(_rotation(np.kron(_PAULI_1Q["Z"], _PAULI_1Q["Z"]), theta))


def amplitude_damping(gamma: float) -> SuperOperator:
    g = _check_prob(gamma, "gamma")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)
    return kraus_ptm([k0, k1])


def local_depolarizing(n: int, p: float) -> SuperOperator:
    """Independent single-qubit depolarizing noise of strength ``p`` on every qubit."""
    return tensor_all([depolarizing(1, p)] * n)


# -- random channels used by tests and examples -----------------------------------------

def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_cptp(n: int, rng: np.random.Generator, rank: int = 2, strength: float = 1.0) -> SuperOperator:
    """Random channel from a Haar-random Stinespring isometry.

    ``strength`` in ``[0, 1]`` mixes the result with the identity channel.
    """
    d = 2**n
    u = haar_unitary(d * rank, rng)
    v = u[:, :d]  # isometry C^d -> C^d (x) C^rank
    kraus = [v[k::rank, :] for k in range(rank)]
    m = kraus_ptm(kraus).matrix
    return SuperOperator(n, strength * m + (1 - strength) * np.eye(4**n))


def random_unital(n: int, rng: np.random.Generator, terms: int = 3) -> SuperOperator:
    """Random mixture of Haar-random unitary channels (unital by construction)."""
    w = rng.dirichlet(np.ones(terms))
    m = sum(wi * unitary_ptm(haar_unitary(2**n, rng)).matrix for wi in w)
    return SuperOperator(n, m)


def random_pauli_channel(n: int, rng: np.random.Generator, min_eigenvalue: float = 0.9) -> SuperOperator:
    """Random Pauli channel whose eigenvalues all lie in ``[min_eigenvalue, 1]``."""
    budget = (1.0 - min_eigenvalue) / 2.0
    total = rng.uniform(0.2, 1.0) * budget
    coeffs = np.zeros(4**n)
    coeffs[1:] = rng.dirichlet(np.ones(4**n - 1)) * total
    coeffs[0] = 1.0 - total
    return SuperOperator(n, np.diag(pauli_eigenvalues_from_probs(n, coeffs)))


# -- noise model and SPAM ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateNoiseModel:
    """Gate-independent noise ``phi(g) = Lambda_L omega(g) Lambda_R``."""

    lambda_L: SuperOperator
    lambda_R: SuperOperator

    def __post_init__(self):
        if self.lambda_L.n != self.lambda_R.n:
            raise NoiseModelError("lambda_L and lambda_R act on different qubit counts")
        for name in ("lambda_L", "lambda_R"):
            if not is_cptp(getattr(self, name), CPTP_TOL):
                raise NoiseModelError(f"{name} is not CPTP within {CPTP_TOL}")

    @property
    def n(self) -> int:
        return self.lambda_L.n

    @property
    def channel(self) -> SuperOperator:
        """Between-gates channel ``Lambda_R Lambda_L`` (``Lambda_L`` acts first)."""
        return self.lambda_R @ self.lambda_L

    @classmethod
    def ideal(cls, n: int) -> "GateNoiseModel":
        return cls(SuperOperator.identity(n), SuperOperator.identity(n))

    @classmethod
    def left(cls, channel: SuperOperator) -> "GateNoiseModel":
        return cls(channel, SuperOperator.identity(channel.n))


@dataclass(frozen=True, eq=False)
class SpamModel:
    """Noisy initial state and POVM in the Pauli basis.

    ``effects[x]`` is the dual vector of the POVM element for outcome ``x``.
    """

    n: int
    rho: np.ndarray = field(repr=False)
    effects: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        eff = np.array(self.effects, dtype=float)
        dim = 4**self.n
        if rho.shape != (dim,) or eff.shape != (2**self.n, dim):
            raise NoiseModelError("SPAM arrays have the wrong shape")
        dens = pauli_vec_to_operator(rho)
        if abs(np.trace(dens).real - 1) > 1e-9 or np.linalg.eigvalsh(dens).min() < -CPTP_TOL:
            raise NoiseModelError("initial state is not a density matrix")
        total = np.zeros(dim)
        for e in eff:
            op = pauli_vec_to_operator(e)
            if np.linalg.eigvalsh(op).min() < -CPTP_TOL:
                raise NoiseModelError("POVM element is not positive semidefinite")
            total += e
        if not np.allclose(pauli_vec_to_operator(total), np.eye(2**self.n), atol=1e-9):
            raise NoiseModelError("POVM elements do not sum to the identity")
        rho.setflags(write=False)
        eff.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "effects", eff)

    @classmethod
    def ideal(cls, n: int) -> "SpamModel":
        return cls(n, state_to_pauli_vec(n, 0), ideal_effects(n))

    @classmethod
    def noisy(
        cls,
        n: int,
        readout_flip: float = 0.0,
        state_prep: SuperOperator | None = None,
    ) -> "SpamModel":
        rho = state_to_pauli_vec(n, 0)
        if state_prep is not None:
            rho = state_prep.matrix @ rho
        return cls(n, rho, readout_effects(n, readout_flip))


def ideal_effects(n: int) -> np.ndarray:
    return np.stack([state_to_pauli_vec(n, x) for x in range(2**n)])


def readout_effects(n: int, r: float) -> np.ndarray:
    """Effects with independent classical bit flips of probability ``r`` per qubit."""
    r = _check_prob(r, "readout_flip")
    ideal = ideal_effects(n)
    outcomes = np.arange(2**n)
    flips = np.array([[popcount(int(x) ^ int(y)) for y in outcomes] for x in outcomes])
    confusion = r**flips * (1 - r) ** (n - flips)  # confusion[x, y] = P(report x | true y)
    return confusion @ ideal


# -- configuration ------------------------------------------------------------------------

def _param(spec: dict, key: str, path: str):
    params = spec.get("params", {})
    if key not in params:
        raise NoiseModelError(f"{path}.params.{key}: missing field")
    return params[key]


def channel_from_spec(spec: dict, n: int, path: str = "channel") -> SuperOperator:
    """Build one ``n``-qubit channel from ``{type, qubits, params}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise NoiseModelError(f"{path}.type: missing field")
    kind = spec["type"]
    qubits = spec.get("qubits")
    try:
        if kind == "identity":
            return SuperOperator.identity(n)
        if kind == "local_depolarizing":
            p = _param(spec, "p", path)
            qs = list(range(n)) if qubits is None else list(qubits)
            out = SuperOperator.identity(n)
            for q in qs:
                out = embed(depolarizing(1, p), [q], n) @ out
            return out
        if kind == "depolarizing":
            qs = list(range(n)) if qubits is None else list(qubits)
            return embed(depolarizing(len(qs), _param(spec, "p", path)), qs, n)
        if kind == "pauli":
            probs = _param(spec, "probs", path)
            qs = list(range(n)) if qubits is None else list(qubits)
            return embed(pauli_channel(len(qs), probs), qs, n)
        one_qubit = {"rotation_z": rotation_z, "rotation_x": rotation_x}
        two_qubit = {"xx": xx_coupling, "zz": zz_coupling}
        if kind in one_qubit or kind in two_qubit:
            theta = float(_param(spec, "theta", path))
            k = 1 if kind in one_qubit else 2
            qs = list(range(k)) if qubits is None else list(qubits)
            return embed((one_qubit | two_qubit)[kind](theta), qs, n)
        if kind == "amplitude_damping":
            qs = [0] if qubits is None else list(qubits)
            out = SuperOperator.identity(n)
            for q in qs:
                out = embed(amplitude_damping(_param(spec, "gamma", path)), [q], n) @ out
            return out
        if kind == "ptm":
            rows = np.asarray(_param(spec, "rows", path), dtype=float)
            k = int(round(np.log(rows.shape[0]) / np.log(4)))
            qs = list(range(k)) if qubits is None else list(qubits)
            return embed(SuperOperator(k, rows), qs, n)
    except NoiseModelError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise NoiseModelError(f"{path}: {exc}") from exc
    raise NoiseModelError(f"{path}.type: unknown channel type {kind!r}")


def compose_specs(specs: Sequence[dict], n: int, path: str) -> SuperOperator:
    """Channels applied in list order (first entry acts first)."""
    out = SuperOperator.identity(n)
    for i, spec in enumerate(specs or []):
        out = channel_from_spec(spec, n, f"{path}[{i}]") @ out
    return out


def build_noise_model(config: dict) -> tuple[GateNoiseModel, SpamModel]:
    """Noise model and SPAM from ``{n, lambda_L, lambda_R, spam}``."""
    if "n" not in config:
        raise NoiseModelError("noise.n: missing field")
    n = int(config["n"])
    lam_l = compose_specs(config.get("lambda_L", []), n, "noise.lambda_L")
    lam_r = compose_specs(config.get("lambda_R", []), n, "noise.lambda_R")
    for name, ch in (("noise.lambda_L", lam_l), ("noise.lambda_R", lam_r)):
        if not is_cptp(ch):
            raise NoiseModelError(f"{name}: composed channel is not CPTP")
    spam_cfg = config.get("spam", {}) or {}
    prep = compose_specs(spam_cfg.get("state_prep", []), n, "noise.spam.state_prep")
    if not is_cptp(prep):
        raise NoiseModelError("noise.spam.state_prep: composed channel is not CPTP")
    spam = SpamModel.noisy(n, float(spam_cfg.get("readout_flip", 0.0)), prep)
    return GateNoiseModel(lam_l, lam_r), spam
