"""Simulated random-sequence experiments and the gate-set shadow file format.

A shadow is stored column-wise per sequence length: gate identifiers for every
record plus the measured outcome.  Multi-qubit Cliffords are referenced by id
into a run-local gate table; local Clifford layers are stored as canonical
single-qubit indices; Pauli-interleaved records keep the twirling Clifford id
and the Pauli basis indices.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .clifford import (
    CliffordElement,
    LocalCliffordElement,
    invert,
    local_layer_tables,
    permutation_tables,
    sample_clifford,
)
from .liouville import SuperOperator
from .noise import GateNoiseModel, NoiseModelError, SpamModel, build_noise_model
from .pauli import MAX_DENSE_QUBITS, PauliString, basis_bits

GATE_SETS = ("multi_clifford", "local_clifford", "pauli_interleaved")
FORMAT_VERSION = 1
PROB_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


class SimulationError(RuntimeError):
    """Negative or unnormalized outcome probabilities (non-CPTP input)."""


class ShadowFormatError(ValueError):
    """Malformed shadow file."""


# -- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one simulated experiment.

    ``noise`` follows the noise configuration schema; ``spam`` (optional)
    overrides ``noise["spam"]``.
    """

    gate_set: str
    n: int
    lengths: tuple
    sequences_per_length: int
    noise: dict = field(default_factory=dict)
    seed: int = 0
    spam: dict | None = None
    shots_per_sequence: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(m) for m in self.lengths))
        self.validate()

    def validate(self) -> None:
        if self.gate_set not in GATE_SETS:
            raise ConfigError(f"gate_set: expected one of {GATE_SETS}, got {self.gate_set!r}")
        if not isinstance(self.n, int) or not 1 <= self.n <= MAX_DENSE_QUBITS:
            raise ConfigError(f"n: expected integer in 1..{MAX_DENSE_QUBITS}, got {self.n!r}")
        if not self.lengths:
            raise ConfigError("lengths: must be non-empty")
        if self.lengths[0] < 1 or any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ConfigError("lengths: must be >= 1 and strictly increasing")
        if not isinstance(self.sequences_per_length, int) or self.sequences_per_length < 1:
            raise ConfigError("sequences_per_length: must be a positive integer")
        if not isinstance(self.shots_per_sequence, int) or self.shots_per_sequence < 1:
            raise ConfigError("shots_per_sequence: must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if not isinstance(self.noise, dict):
            raise ConfigError("noise: must be an object")
        if "n" in self.noise and int(self.noise["n"]) != self.n:
            raise ConfigError(f"noise.n: {self.noise['n']} does not match n={self.n}")

    def noise_config(self) -> dict:
        cfg = dict(self.noise)
        cfg["n"] = self.n
        if self.spam is not None:
            cfg["spam"] = self.spam
        return cfg

    def build_noise(self) -> tuple[GateNoiseModel, SpamModel]:
        try:
            return build_noise_model(self.noise_config())
        except NoiseModelError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d["lengths"] = list(self.lengths)
        if d["spam"] is None:
            del d["spam"]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        required = ("gate_set", "n", "lengths", "sequences_per_length")
        for key in required:
            if key not in d:
                raise ConfigError(f"{key}: missing field")
        known = {"gate_set", "n", "lengths", "sequences_per_length", "noise", "seed", "spam", "shots_per_sequence"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field")
        if not isinstance(d["lengths"], list):
            raise ConfigError("lengths: expected a list of integers")
        return cls(
            gate_set=d["gate_set"],
            n=d["n"],
            lengths=tuple(d["lengths"]),
            sequences_per_length=d["sequences_per_length"],
            noise=d.get("noise", {}) or {},
            seed=d.get("seed", 0),
            spam=d.get("spam"),
            shots_per_sequence=d.get("shots_per_sequence", 1),
        )


# -- shadow containers ---------------------------------------------------------------

@dataclass(frozen=True)
class PauliInterleavedGates:
    """Twirling Clifford ``c`` and interleaved Paulis ``p_1..p_m``."""

    c: CliffordElement
    paulis: tuple

    def as_sequence(self) -> tuple:
        """Physical order ``(c, p_1, ..., p_m, c^-1)``."""
        return (self.c, *self.paulis, invert(self.c))


@dataclass(frozen=True)
class ShadowRecord:
    """One sample ``(x, g)``: sequence length, gates in application order, outcome."""

    m: int
    gates: tuple
    outcome: int

    @property
    def gate_set(self) -> str:
        g = self.gates[0]
        if isinstance(g, LocalCliffordElement):
            return "local_clifford"
        if isinstance(g, CliffordElement) and len(self.gates) == self.m + 2 and isinstance(self.gates[1], PauliString):
            return "pauli_interleaved"
        return "multi_clifford"


@dataclass(eq=False)
class LengthBatch:
    """All records at one sequence length, stored column-wise.

    ``gates`` has shape ``(R, m)`` (Clifford ids or Pauli indices) or
    ``(R, m, n)`` (local layers); ``twirl`` holds Clifford ids of the
    Pauli-interleaved twirl, otherwise ``None``.
    """

    m: int
    gates: np.ndarray
    outcomes: np.ndarray
    twirl: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.outcomes)

    def subset(self, idx: np.ndarray) -> "LengthBatch":
        return LengthBatch(self.m, self.gates[idx], self.outcomes[idx], None if self.twirl is None else self.twirl[idx])


@dataclass(eq=False)
class GateSetShadow:
    """Collection of shadow records grouped by sequence length."""

    config: ExperimentConfig
    batches: dict
    gate_table: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def gate_set(self) -> str:
        return self.config.gate_set

    @property
    def lengths(self) -> list[int]:
        return sorted(m for m, b in self.batches.items() if len(b))

    def num_records(self, m: int | None = None) -> int:
        if m is None:
            return sum(len(b) for b in self.batches.values())
        b = self.batches.get(m)
        return 0 if b is None else len(b)

    @property
    def gather_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked gather tables ``(G, 4**n)`` for the gate table."""
        if getattr(self, "_gather", None) is None or len(self._gather[0]) != len(self.gate_table):
            self._gather = _stack_gather(self.gate_table, self.n)
        return self._gather

    def record(self, m: int, i: int) -> ShadowRecord:
        b = self.batches[m]
        n = self.n
        if self.gate_set == "multi_clifford":
            gates = tuple(self.gate_table[g] for g in b.gates[i])
        elif self.gate_set == "local_clifford":
            gates = tuple(LocalCliffordElement(n, tuple(layer)) for layer in b.gates[i])
        else:
            c = self.gate_table[int(b.twirl[i])]
            paulis = tuple(PauliString.from_index(n, int(p)) for p in b.gates[i])
            gates = PauliInterleavedGates(c, paulis).as_sequence()
        return ShadowRecord(m, gates, int(b.outcomes[i]))

    def records(self, m: int | None = None) -> Iterator[ShadowRecord]:
        for mm in ([m] if m is not None else self.lengths):
            for i in range(self.num_records(mm)):
                yield self.record(mm, i)

    def equals(self, other: "GateSetShadow") -> bool:
        if self.config != other.config or self.lengths != other.lengths:
            return False
        for m in self.lengths:
            a, b = self.batches[m], other.batches[m]
            if not np.array_equal(a.outcomes, b.outcomes):
                return False
            if self.gate_set == "local_clifford":
                if not np.array_equal(a.gates, b.gates):
                    return False
            else:
                ka = [self.gate_table[g].key for g in np.ravel(a.twirl if a.twirl is not None else a.gates)]
                kb = [other.gate_table[g].key for g in np.ravel(b.twirl if b.twirl is not None else b.gates)]
                if ka != kb:
                    return False
                if a.twirl is not None and not np.array_equal(a.gates, b.gates):
                    return False
        return True

    @classmethod
    def from_records(cls, config: ExperimentConfig, records: Sequence[ShadowRecord]) -> "GateSetShadow":
        """Assemble a shadow from record objects (any order; grouped by ``m``)."""
        table: list = []
        ids: dict = {}

        def gid(c: CliffordElement) -> int:
            if c.key not in ids:
                ids[c.key] = len(table)
                table.append(c)
            return ids[c.key]

        grouped: dict[int, list] = {}
        for r in records:
            grouped.setdefault(r.m, []).append(r)
        batches = {}
        n = config.n
        for m, rs in sorted(grouped.items()):
            out = np.array([r.outcome for r in rs], dtype=np.int64)
            if config.gate_set == "multi_clifford":
                g = np.array([[gid(c) for c in r.gates] for r in rs], dtype=np.int64).reshape(len(rs), m)
                batches[m] = LengthBatch(m, g, out)
            elif config.gate_set == "local_clifford":
                g = np.array([[layer.indices for layer in r.gates] for r in rs], dtype=np.int8).reshape(len(rs), m, n)
                batches[m] = LengthBatch(m, g, out)
            else:
                tw = np.array([gid(r.gates[0]) for r in rs], dtype=np.int64)
                p = np.array([[q.index for q in r.gates[1:-1]] for r in rs], dtype=np.int64).reshape(len(rs), m)
                batches[m] = LengthBatch(m, p, out, tw)
        return cls(config, batches, table)

    def merge(self, other: "GateSetShadow") -> "GateSetShadow":
        """Concatenate two shadows of the same gate-set (config of ``self`` kept)."""
        if other.gate_set != self.gate_set or other.n != self.n:
            raise ValueError("can only merge shadows of the same gate-set and qubit count")
        return GateSetShadow.from_records(self.config, list(self.records()) + list(other.records()))


def _stack_gather(table: Sequence[CliffordElement], n: int) -> tuple[np.ndarray, np.ndarray]:
    if not table:
        return np.zeros((0, 4**n), dtype=np.int64), np.zeros((0, 4**n), dtype=np.int8)
    ts = [permutation_tables(c) for c in table]
    return np.stack([t.gather_idx for t in ts]), np.stack([t.gather_sign for t in ts])


# -- dense simulation ----------------------------------------------------------------

@lru_cache(maxsize=None)
def pauli_character_table(n: int) -> np.ndarray:
    """``chi[p, tau] = (-1)**<p, tau>``: the diagonal PTM of conjugation by Pauli ``p``."""
    xs, zs = basis_bits(n)
    overlap = (xs[:, None] & zs[None, :]) ^ (zs[:, None] & xs[None, :])
    anti = np.zeros_like(overlap)
    for b in range(n):
        anti ^= (overlap >> b) & 1
    chi = (1 - 2 * anti).astype(np.int8)
    chi.setflags(write=False)
    return chi


def _apply_channel(v: np.ndarray, ch: SuperOperator | None) -> np.ndarray:
    return v if ch is None else v @ ch.matrix.T


def _nontrivial(ch: SuperOperator) -> SuperOperator | None:
    return None if np.array_equal(ch.matrix, np.eye(ch.dim)) else ch


def _outcome_probabilities(v: np.ndarray, spam: SpamModel) -> np.ndarray:
    probs = v @ spam.effects.T
    if probs.min() < -PROB_TOL:
        raise SimulationError(f"negative outcome probability {probs.min():.3e}; noise is not CPTP")
    sums = probs.sum(axis=1)
    if np.abs(sums - 1).max() > 1e-6:
        raise SimulationError("outcome probabilities do not sum to one; noise is not trace preserving")
    return np.clip(probs, 0.0, None) / sums[:, None]


def simulate_batch_uirs(
    gather_idx: np.ndarray, gather_sign: np.ndarray, noise: GateNoiseModel, spam: SpamModel
) -> np.ndarray:
    """Outcome distributions for sequences given as per-step gather tables.

    ``gather_idx, gather_sign`` have shape ``(S, m, 4**n)``; step 0 acts first.
    """
    s, m, dim = gather_idx.shape
    lam_l, lam_r = _nontrivial(noise.lambda_L), _nontrivial(noise.lambda_R)
    v = np.tile(spam.rho, (s, 1))
    for i in range(m):
        v = _apply_channel(v, lam_r)
        v = gather_sign[:, i] * np.take_along_axis(v, gather_idx[:, i], axis=1)
        v = _apply_channel(v, lam_l)
    return _outcome_probabilities(v, spam)


def simulate_batch_pauli(
    twirl_gather: tuple[np.ndarray, np.ndarray],
    twirl_inv_gather: tuple[np.ndarray, np.ndarray],
    paulis: np.ndarray,
    channel: SuperOperator,
    spam: SpamModel,
    n: int,
) -> np.ndarray:
    """Distributions for ``c, p_1, L, p_2, ..., L, p_m, c^-1`` with interleaved channel ``L``."""
    chi = pauli_character_table(n)
    s, m = paulis.shape
    ch = _nontrivial(channel)
    v = np.tile(spam.rho, (s, 1))
    v = twirl_gather[1] * np.take_along_axis(v, twirl_gather[0], axis=1)
    for i in range(m):
        if i > 0:
            v = _apply_channel(v, ch)
        v = v * chi[paulis[:, i]]
    v = twirl_inv_gather[1] * np.take_along_axis(v, twirl_inv_gather[0], axis=1)
    return _outcome_probabilities(v, spam)


def _gates_to_gather(gates: Sequence, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx, sgn = [], []
    for g in gates:
        if isinstance(g, LocalCliffordElement):
            gi, gs = local_layer_tables(n, np.array(g.indices))
        elif isinstance(g, CliffordElement):
            t = permutation_tables(g)
            gi, gs = t.gather_idx, t.gather_sign
        elif isinstance(g, PauliString):
            gi = np.arange(4**n)
            gs = pauli_character_table(n)[g.index]
        else:
            raise TypeError(f"unsupported gate {g!r}")
        idx.append(gi)
        sgn.append(gs)
    return np.stack(idx)[None], np.stack(sgn)[None]


def simulate_sequence(gates: Sequence, noise: GateNoiseModel, spam: SpamModel) -> np.ndarray:
    """Born probabilities of ``prod_i Lambda_L omega(g_i) Lambda_R`` on the noisy SPAM.

    ``gates`` are applied in order (index 0 first) and may mix
    :class:`CliffordElement`, :class:`LocalCliffordElement` and
    :class:`PauliString` entries.
    """
    gi, gs = _gates_to_gather(gates, spam.n)
    return simulate_batch_uirs(gi, gs, noise, spam)[0]


def simulate_pauli_sequence(gates: PauliInterleavedGates, channel: SuperOperator, spam: SpamModel) -> np.ndarray:
    n = spam.n
    t = permutation_tables(gates.c)
    ti = permutation_tables(invert(gates.c))
    paulis = np.array([[p.index for p in gates.paulis]], dtype=np.int64)
    return simulate_batch_pauli(
        (t.gather_idx[None], t.gather_sign[None]), (ti.gather_idx[None], ti.gather_sign[None]), paulis, channel, spam, n
    )[0]


# -- sampling ------------------------------------------------------------------------

def sequence_rng(seed: int, m: int, j: int) -> np.random.Generator:
    """Independent stream for sequence ``j`` at length ``m`` (order-independent)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(m, j)))


def _sample_outcomes(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; ``u`` has shape ``(S, shots)``."""
    cdf = np.cumsum(probs, axis=1)
    out = (cdf[:, None, :] < u[:, :, None]).sum(axis=2)
    return np.minimum(out, probs.shape[1] - 1)


class _GateRegistry:
    def __init__(self):
        self.table: list[CliffordElement] = []
        self.ids: dict = {}

    def add(self, c: CliffordElement) -> int:
        k = c.key
        gid = self.ids.get(k)
        if gid is None:
            gid = len(self.table)
            self.ids[k] = gid
            self.table.append(c)
        return gid


def _draw_chunk(config: ExperimentConfig, m: int, js: range):
    """Sample gates and outcome uniforms for sequences ``js`` at length ``m``."""
    n, shots = config.n, config.shots_per_sequence
    gates, twirls, us = [], [], []
    for j in js:
        rng = sequence_rng(config.seed, m, j)
        if config.gate_set == "multi_clifford":
            gates.append([sample_clifford(n, rng) for _ in range(m)])
        elif config.gate_set == "local_clifford":
            gates.append(rng.integers(0, 24, size=(m, n), dtype=np.int8))
        else:
            twirls.append(sample_clifford(n, rng))
            gates.append(rng.integers(0, 4**n, size=m, dtype=np.int64))
        us.append(rng.random(shots))
    return gates, twirls, us


def _run(config: ExperimentConfig, threads: int = 1) -> GateSetShadow:
    noise, spam = config.build_noise()
    n, s, shots = config.n, config.sequences_per_length, config.shots_per_sequence
    registry = _GateRegistry()
    batches = {}
    threads = max(1, int(threads))
    for m in config.lengths:
        bounds = np.linspace(0, s, min(threads * 4, s) + 1, dtype=int) if threads > 1 else np.array([0, s])
        chunks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(lambda js: _draw_chunk(config, m, js), chunks))
        else:
            parts = [_draw_chunk(config, m, js) for js in chunks]
        gates = [g for p in parts for g in p[0]]
        twirls = [t for p in parts for t in p[1]]
        u = np.array([x for p in parts for x in p[2]])
        if config.gate_set == "multi_clifford":
            ids = np.array([[registry.add(c) for c in seq] for seq in gates], dtype=np.int64).reshape(s, m)
            gi_tab, gs_tab = _stack_gather(registry.table, n)
            probs = simulate_batch_uirs(gi_tab[ids], gs_tab[ids], noise, spam)
            gate_arr, tw = ids, None
        elif config.gate_set == "local_clifford":
            gate_arr = np.stack(gates)
            gi, gs = local_layer_tables(n, gate_arr)
            probs = simulate_batch_uirs(gi, gs, noise, spam)
            tw = None
        else:
            tw = np.array([registry.add(c) for c in twirls], dtype=np.int64)
            inv_ids = np.array([registry.add(invert(c)) for c in twirls], dtype=np.int64)
            gate_arr = np.stack(gates)
            gi_tab, gs_tab = _stack_gather(registry.table, n)
            probs = simulate_batch_pauli(
                (gi_tab[tw], gs_tab[tw]), (gi_tab[inv_ids], gs_tab[inv_ids]), gate_arr, noise.channel, spam, n
            )
        outcomes = _sample_outcomes(probs, u)  # (S, shots)
        rep = np.repeat(np.arange(s), shots)
        batches[m] = LengthBatch(
            m, gate_arr[rep], outcomes.reshape(-1).astype(np.int64), None if tw is None else tw[rep]
        )
    return GateSetShadow(config, batches, registry.table)


def run_uirs(config: ExperimentConfig, threads: int = 1) -> GateSetShadow:
    """Uniform independent random sequences over the configured gate-set.

    Randomness derives from ``config.seed`` through one stream per
    ``(m, sequence index)``, so the result does not depend on ``threads``.
    """
    if config.gate_set == "pauli_interleaved":
        raise ConfigError("gate_set: use run_pauli_interleaved for pauli_interleaved experiments")
    return _run(config, threads)


def run_pauli_interleaved(config: ExperimentConfig, threads: int = 1) -> GateSetShadow:
    """Twirled Pauli sequences ``c, p_1, L, ..., L, p_m, c^-1`` with ``L = Lambda_R Lambda_L``."""
    if config.gate_set != "pauli_interleaved":
        raise ConfigError("gate_set: run_pauli_interleaved needs gate_set 'pauli_interleaved'")
    return _run(config, threads)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> GateSetShadow:
    if config.gate_set == "pauli_interleaved":
        return run_pauli_interleaved(config, threads)
    return run_uirs(config, threads)


# -- file format ------------------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def shadow_lines(shadow: GateSetShadow) -> Iterator[str]:
    yield _dumps({"format_version": FORMAT_VERSION, "config": shadow.config.to_json()})
    defined: set[int] = set()
    for m in shadow.lengths:
        b = shadow.batches[m]
        for i in range(len(b)):
            if shadow.gate_set == "local_clifford":
                gates = b.gates[i].tolist()
            else:
                needed = [int(b.twirl[i])] if b.twirl is not None else [int(g) for g in b.gates[i]]
                for g in needed:
                    if g not in defined:
                        defined.add(g)
                        yield _dumps({"gate_def": g, "tableau": shadow.gate_table[g].to_json()})
                if b.twirl is None:
                    gates = [int(g) for g in b.gates[i]]
                else:
                    n = shadow.n
                    mask = (1 << n) - 1
                    gates = {
                        "c": int(b.twirl[i]),
                        "paulis": [{"x_bits": int(p) >> n, "z_bits": int(p) & mask} for p in b.gates[i]],
                    }
            yield _dumps({"m": m, "gates": gates, "outcome": int(b.outcomes[i])})


def write_shadow(shadow: GateSetShadow, path: str) -> None:
    """Write JSON Lines atomically (temp file + rename)."""
    atomic_write_text(path, "".join(line + "\n" for line in shadow_lines(shadow)))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_shadow(path: str) -> GateSetShadow:
    with open(path) as fh:
        return parse_shadow_lines(fh)


def parse_shadow_lines(lines) -> GateSetShadow:
    config = None
    table: dict[int, CliffordElement] = {}
    grouped: dict[int, dict] = {}
    last_valid = "header"
    n = 0
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue

        def fail(msg: str):
            raise ShadowFormatError(f"line {lineno}: {msg} (last valid record: {last_valid})")

        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            fail(f"invalid JSON ({exc.msg})")
        if config is None:
            if not isinstance(obj, dict) or obj.get("format_version") != FORMAT_VERSION or "config" not in obj:
                fail("expected header with format_version 1 and config")
            try:
                config = ExperimentConfig.from_json(obj["config"])
            except ConfigError as exc:
                fail(f"bad config: {exc}")
            n = config.n
            continue
        if not isinstance(obj, dict):
            fail("expected a JSON object")
        if "gate_def" in obj:
            try:
                table[int(obj["gate_def"])] = CliffordElement.from_json(obj["tableau"])
            except (KeyError, TypeError, ValueError) as exc:
                fail(f"bad gate definition: {exc}")
            continue
        try:
            m = int(obj["m"])
            outcome = int(obj["outcome"])
            gates = obj["gates"]
            if not 0 <= outcome < 2**n:
                raise ValueError(f"outcome {outcome} out of range")
            g = grouped.setdefault(m, {"gates": [], "twirl": [], "out": []})
            if config.gate_set == "multi_clifford":
                ids = [int(x) for x in gates]
                if len(ids) != m or any(i not in table for i in ids):
                    raise ValueError("gate ids missing or undefined")
                g["gates"].append(ids)
            elif config.gate_set == "local_clifford":
                arr = np.asarray(gates, dtype=np.int64)
                if arr.shape != (m, n) or arr.min() < 0 or arr.max() > 23:
                    raise ValueError("local layers must be an m x n array of indices 0..23")
                g["gates"].append(arr.astype(np.int8))
            else:
                c = int(gates["c"])
                ps = [(int(p["x_bits"]) << n) | int(p["z_bits"]) for p in gates["paulis"]]
                if c not in table or len(ps) != m or any(not 0 <= p < 4**n for p in ps):
                    raise ValueError("bad Pauli-interleaved gates")
                g["twirl"].append(c)
                g["gates"].append(ps)
            g["out"].append(outcome)
        except (KeyError, TypeError, ValueError) as exc:
            fail(f"malformed record: {exc}")
        last_valid = f"line {lineno}"
    if config is None:
        raise ShadowFormatError("line 1: missing header (last valid record: none)")
    keys = sorted(table)
    remap = {k: i for i, k in enumerate(keys)}
    gate_table = [table[k] for k in keys]
    batches = {}
    for m, g in sorted(grouped.items()):
        out = np.array(g["out"], dtype=np.int64)
        if config.gate_set == "multi_clifford":
            arr = np.array([[remap[i] for i in row] for row in g["gates"]], dtype=np.int64).reshape(len(out), m)
            batches[m] = LengthBatch(m, arr, out)
        elif config.gate_set == "local_clifford":
            batches[m] = LengthBatch(m, np.stack(g["gates"]), out)
        else:
            tw = np.array([remap[c] for c in g["twirl"]], dtype=np.int64)
            batches[m] = LengthBatch(m, np.array(g["gates"], dtype=np.int64).reshape(len(out), m), out, tw)
    return GateSetShadow(config, batches, gate_table)
