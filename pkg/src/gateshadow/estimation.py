"""Correlation functions, sequence averages, decay fits and theory oracles.

For a record ``(x, g_1..g_m)`` and probe ``A`` on irrep ``P`` the correlation
function is ``f = alpha <<E_x| P s(g_m) A s(g_{m-1}) ... A s(g_1) P |rho>>``
with ideal ``E_x`` and ``rho = |0><0|``.  Its average over records decays as
``B p**(m-1)`` where ``p = tr(A^T Lambda) / dim(P)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clifford import (
    CliffordElement,
    LocalCliffordElement,
    enumerate_cliffords,
    invert,
    local_layer_tables,
    permutation_tables,
    single_qubit_table,
    single_qubit_tables,
    _permutation_operator_vec,
    _S3,
    weingarten_matrix,
)
from .experiment import GateSetShadow, LengthBatch, ShadowRecord, pauli_character_table
from .fitting import (
    FitError,
    bootstrap_counts,
    fit_decay_batch,
    fit_jacobian_ci,
    fit_single_exponential,
    median_of_means,
)
from .liouville import (
    IrrepProjector,
    SuperOperator,
    effects_matrix,
    projector,
    state_to_pauli_vec,
    unitarity,
    xz_to_tensor_perm,
)
from .noise import GateNoiseModel, SpamModel
from .pauli import PauliString, basis_bits, popcount

DEFAULT_BOOTSTRAP = 1000
VARIANCE_FLOOR = 1e-12


class ProbeError(ValueError):
    """Probe incompatible with the gate-set, irrep or correlator."""


# -- normalization ------------------------------------------------------------------------

def default_alpha(gate_set: str, irrep: IrrepProjector, convention: str = "unit") -> float:
    """Normalization ``alpha`` of the correlation function.

    ``"unit"`` makes the noiseless ``k(1)`` equal to one for every gate-set.
    ``"reference"`` uses ``2**n + 1`` for the multi-qubit Clifford irrep
    (``k(1) = (2**n - 1) / 2**n`` with ideal SPAM); the local and
    Pauli-interleaved values coincide for both conventions.
    """
    d = 2**irrep.n
    if gate_set == "multi_clifford":
        if irrep.kind != "ad":
            raise ProbeError("multi-qubit Clifford gate-set requires the 'ad' irrep")
        if convention == "reference":
            return float(d + 1)
        if convention != "unit":
            raise ValueError(f"unknown alpha convention {convention!r}")
        return d * (d + 1) / (d - 1)
    if gate_set == "local_clifford":
        if irrep.kind != "local":
            raise ProbeError("local Clifford gate-set requires a 'local' irrep")
        return float(d * 3 ** popcount(irrep.w))
    if gate_set == "pauli_interleaved":
        return float(d * (d + 1))
    raise ValueError(f"unknown gate-set {gate_set!r}")


# -- probes ---------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeOperator:
    """Probe superoperator restricted to an irrep.

    ``variant`` is ``"dense"`` (explicit matrix), ``"clifford"`` (Clifford
    channel ``P omega(c) P``) or ``"pauli"`` (rank-one ``|tau>><<tau|``).
    ``alpha=None`` selects :func:`default_alpha` for the gate-set at use time.
    """

    variant: str
    irrep: IrrepProjector
    matrix: np.ndarray = field(repr=False)
    clifford: CliffordElement | None = None
    tau: PauliString | None = None
    alpha: float | None = None
    name: str = "probe"

    @classmethod
    def dense(cls, a, irrep: IrrepProjector, alpha: float | None = None, name: str = "dense", project: bool = True):
        m = a.matrix if isinstance(a, SuperOperator) else np.asarray(a, dtype=float)
        mask = irrep.mask.astype(float)
        pap = mask[:, None] * m * mask[None, :]
        if not project and not np.allclose(pap, m, atol=1e-12, rtol=0):
            raise ProbeError("dense probe is not supported on its irrep (A != P A P)")
        pap.setflags(write=False)
        return cls("dense", irrep, pap, alpha=alpha, name=name)

    @classmethod
    def from_clifford(cls, c, irrep: IrrepProjector, alpha: float | None = None, name: str = "clifford"):
        if isinstance(c, LocalCliffordElement):
            c = c.to_clifford()
        if c.n != irrep.n:
            raise ProbeError("probe Clifford acts on a different number of qubits")
        mask = irrep.mask.astype(float)
        m = mask[:, None] * c.to_ptm().matrix * mask[None, :]
        m.setflags(write=False)
        return cls("clifford", irrep, m, clifford=c, alpha=alpha, name=name)

    @classmethod
    def rank_one_pauli(cls, tau: PauliString | str, irrep: IrrepProjector | None = None, alpha=None, name=None):
        if isinstance(tau, str):
            tau = PauliString.from_label(tau)
        if tau.index == 0:
            raise ProbeError("rank-one probe needs a traceless Pauli")
        if irrep is None:
            irrep = projector("local", tau.n, tau.support)
        if not irrep.mask[tau.index]:
            raise ProbeError(f"Pauli {tau.label} lies outside irrep {irrep.label}")
        m = np.zeros((4**tau.n, 4**tau.n))
        m[tau.index, tau.index] = 1.0
        m.setflags(write=False)
        return cls("pauli", irrep, m, tau=tau.unsigned(), alpha=alpha, name=name or tau.label)

    @property
    def n(self) -> int:
        return self.irrep.n

    def alpha_for(self, gate_set: str) -> float:
        return float(self.alpha) if self.alpha is not None else default_alpha(gate_set, self.irrep)

    def check_gate_set(self, gate_set: str) -> None:
        want = "ad" if gate_set == "multi_clifford" else "local"
        if gate_set == "pauli_interleaved":
            raise ProbeError("Pauli-interleaved shadows use correlate_pauli_tau, not UIRS probes")
        if self.irrep.kind != want:
            raise ProbeError(f"irrep {self.irrep.label} is incompatible with gate-set {gate_set}")


# -- sequence representations -------------------------------------------------------------

class _Steps:
    """Per-step gate actions for a batch of equal-length sequences."""

    def __init__(self, n: int, m: int, kind: str, gates: np.ndarray, table=None, gather=None):
        self.n, self.m, self.kind, self.gates = n, m, kind, gates
        self.table = table
        self._gather = gather
        self._forward = None

    @classmethod
    def from_batch(cls, shadow: GateSetShadow, batch: LengthBatch) -> "_Steps":
        if shadow.gate_set == "local_clifford":
            return cls(shadow.n, batch.m, "local", batch.gates)
        if shadow.gate_set == "multi_clifford":
            return cls(shadow.n, batch.m, "multi", batch.gates, shadow.gate_table, shadow.gather_tables)
        raise ProbeError("UIRS correlators need a multi_clifford or local_clifford shadow")

    @classmethod
    def from_record(cls, record: ShadowRecord, n: int) -> "_Steps":
        g0 = record.gates[0]
        if isinstance(g0, LocalCliffordElement):
            return cls(n, record.m, "local", np.array([[g.indices for g in record.gates]], dtype=np.int64))
        if all(isinstance(g, CliffordElement) for g in record.gates) and len(record.gates) == record.m:
            table = list(record.gates)
            ts = [permutation_tables(c) for c in table]
            gather = (np.stack([t.gather_idx for t in ts]), np.stack([t.gather_sign for t in ts]))
            return cls(n, record.m, "multi", np.arange(record.m)[None], table, gather)
        raise ProbeError("record is not a UIRS Clifford sequence")

    def gather(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "local":
            return local_layer_tables(self.n, self.gates[:, i])
        gi, gs = self._gather
        ids = self.gates[:, i]
        return gi[ids], gs[ids]

    def forward(self, i: int, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Images ``U tau_k U^dagger = s tau_k'`` for component indices ``k`` of shape ``(R, K)``."""
        if self.kind == "local":
            return _local_forward(self.n, self.gates[:, i], k)
        if self._forward is None:
            ts = [permutation_tables(c) for c in self.table]
            self._forward = (np.stack([t.perm for t in ts]), np.stack([t.sign for t in ts]))
        perm, sign = self._forward
        ids = self.gates[:, i][:, None]
        return perm[ids, k], sign[ids, k]


def _local_forward(n: int, layers: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p1, s1, _, _ = single_qubit_tables()
    out = np.zeros_like(k)
    sign = np.ones(k.shape, dtype=np.int8)
    for j in range(n):
        b = n - 1 - j
        digit = 2 * ((k >> (b + n)) & 1) + ((k >> b) & 1)
        idx = layers[:, j].astype(np.int64)[:, None]
        nd = p1[idx, digit]
        sign = sign * s1[idx, digit]
        out |= ((nd >> 1) << (b + n)) | ((nd & 1) << b)
    return out, sign


def _parity(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64).copy()
    out = np.zeros_like(v)
    while np.any(v):
        out ^= v & 1
        v >>= 1
    return out


# -- correlators ---------------------------------------------------------------------------

def _dense_values(steps: _Steps, outcomes: np.ndarray, probe: ProbeOperator, alpha: float) -> np.ndarray:
    n = steps.n
    mask = probe.irrep.mask.astype(float)
    rho = mask * state_to_pauli_vec(n, 0)
    v = np.tile(rho, (len(outcomes), 1))
    at = probe.matrix.T
    for i in range(steps.m):
        if i > 0:
            v = v @ at
        gi, gs = steps.gather(i)
        v = gs * np.take_along_axis(v, gi, axis=1)
    eff = effects_matrix(n) * mask
    return alpha * np.einsum("rj,rj->r", v, eff[outcomes])


def _propagation_values(steps: _Steps, outcomes: np.ndarray, probe: ProbeOperator, alpha: float) -> np.ndarray:
    if probe.variant not in ("clifford", "pauli"):
        raise ProbeError("Pauli propagation needs a Clifford or rank-one Pauli probe")
    n = steps.n
    xs, zs = basis_bits(n)
    mask = probe.irrep.mask
    start = np.flatnonzero(mask & (xs == 0))  # Z-type components of P|0><0|
    r = len(outcomes)
    k = np.tile(start, (r, 1))
    sign = np.ones(k.shape, dtype=np.int64)
    alive = np.ones(k.shape, dtype=bool)
    if probe.variant == "clifford":
        t = permutation_tables(probe.clifford)
        pperm, psign = t.perm, t.sign.astype(np.int64)
    for i in range(steps.m):
        if i > 0:
            if probe.variant == "clifford":
                sign = sign * psign[k]
                k = pperm[k]
                alive &= mask[k]
            else:
                alive &= k == probe.tau.index
        k, s = steps.forward(i, k)
        sign = sign * s
    alive &= mask[k] & ((k >> n) == 0)
    z = k & ((1 << n) - 1)
    par = _parity(z & outcomes[:, None])
    contrib = np.where(alive, sign * (1 - 2 * par), 0)
    return alpha * 2.0**-n * contrib.sum(axis=1)


def correlate_dense(record: ShadowRecord, probe: ProbeOperator, gate_set: str | None = None) -> float:
    """Correlation function of one record evaluated with dense PTMs."""
    gate_set = gate_set or record.gate_set
    probe.check_gate_set(gate_set)
    steps = _Steps.from_record(record, probe.n)
    return float(_dense_values(steps, np.array([record.outcome]), probe, probe.alpha_for(gate_set))[0])


def correlate_pauli_prop(record: ShadowRecord, probe: ProbeOperator, gate_set: str | None = None) -> float:
    """Same value as :func:`correlate_dense`, by propagating signed Pauli components."""
    gate_set = gate_set or record.gate_set
    probe.check_gate_set(gate_set)
    steps = _Steps.from_record(record, probe.n)
    return float(_propagation_values(steps, np.array([record.outcome]), probe, probe.alpha_for(gate_set))[0])


def correlation_values(shadow: GateSetShadow, m: int, probe: ProbeOperator, method: str = "auto") -> np.ndarray:
    """Correlation function for every record of length ``m``."""
    probe.check_gate_set(shadow.gate_set)
    batch = shadow.batches[m]
    steps = _Steps.from_batch(shadow, batch)
    alpha = probe.alpha_for(shadow.gate_set)
    if method == "auto":
        method = "dense" if probe.variant == "dense" else "propagate"
    if method == "dense":
        return _dense_values(steps, batch.outcomes, probe, alpha)
    if method == "propagate":
        return _propagation_values(steps, batch.outcomes, probe, alpha)
    raise ValueError(f"unknown correlator method {method!r}")


def pauli_tau_values(shadow: GateSetShadow, m: int, taus: Sequence[int] | None = None) -> np.ndarray:
    """Pauli-interleaved correlators ``f_tau`` for all records at length ``m``; shape ``(R, T)``."""
    if shadow.gate_set != "pauli_interleaved":
        raise ProbeError("correlate_pauli_tau needs a pauli_interleaved shadow")
    n = shadow.n
    taus = np.arange(1, 4**n) if taus is None else np.asarray(taus, dtype=np.int64)
    if np.any(taus <= 0) or np.any(taus >= 4**n):
        raise ProbeError("tau must be a traceless basis Pauli")
    batch = shadow.batches[m]
    alpha = default_alpha("pauli_interleaved", projector("ad", n))
    inv_perm = np.stack([permutation_tables(invert(c)).perm for c in shadow.gate_table])
    pre = inv_perm[batch.twirl][:, taus]  # unsigned c^-1(tau), shape (R, T)
    ztype = (pre >> n) == 0
    par = _parity((pre & ((1 << n) - 1)) & batch.outcomes[:, None])
    chi = pauli_character_table(n)
    prod = np.ones(pre.shape, dtype=np.int64)
    for i in range(m):
        prod *= chi[batch.gates[:, i]][:, taus]
    return np.where(ztype, alpha * 2.0**-n * (1 - 2 * par) * prod, 0.0)


def correlate_pauli_tau(record: ShadowRecord, tau: PauliString | str) -> float:
    """``f_tau`` for one Pauli-interleaved record ``(c, p_1..p_m, c^-1)``."""
    if isinstance(tau, str):
        tau = PauliString.from_label(tau)
    if record.gate_set != "pauli_interleaved":
        raise ProbeError("record is not a Pauli-interleaved sequence")
    n = tau.n
    if tau.index == 0:
        raise ProbeError("tau must be traceless")
    c = record.gates[0]
    pre = permutation_tables(invert(c)).perm[tau.index]
    if pre >> n:
        return 0.0
    chi = pauli_character_table(n)
    prod = int(np.prod([chi[p.index, tau.index] for p in record.gates[1:-1]]))
    sign = 1 - 2 * (popcount(int(pre) & record.outcome) & 1)
    return default_alpha("pauli_interleaved", projector("ad", n)) * 2.0**-n * sign * prod


# -- sequence averages and fits -------------------------------------------------------------

@dataclass(frozen=True)
class LengthAverage:
    m: int
    mean: float
    median_of_means: float
    n_records: int
    variance: float
    ci: tuple[float, float]


@dataclass(frozen=True)
class SequenceAverages:
    """Per-length averages of one correlation function."""

    points: dict
    estimator: str = "mean"
    flagged_empty: tuple = ()

    @property
    def lengths(self) -> list[int]:
        return sorted(self.points)

    def values(self) -> np.ndarray:
        key = "mean" if self.estimator == "mean" else "median_of_means"
        return np.array([getattr(self.points[m], key) for m in self.lengths])

    def weights(self) -> np.ndarray:
        return np.array(
            [self.points[m].n_records / max(self.points[m].variance, VARIANCE_FLOOR) for m in self.lengths]
        )


def parse_estimator(estimator) -> tuple[str, int]:
    """Accept ``"mean"``, ``"mom:K"`` or ``("mom", K)``."""
    if estimator in (None, "mean"):
        return "mean", 1
    if isinstance(estimator, tuple):
        kind, k = estimator
    elif isinstance(estimator, str) and estimator.startswith("mom:"):
        kind, k = "mom", estimator.split(":", 1)[1]
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    try:
        k = int(k)
    except ValueError:
        raise ValueError(f"median-of-means needs an integer group count, got {k!r}") from None
    if kind != "mom" or k < 1:
        raise ValueError(f"unknown estimator {estimator!r}")
    return "mom", k


@dataclass
class EstimationResult:
    """Decay fit of one probe on one shadow."""

    probe: str
    irrep: str
    alpha: float
    averages: SequenceAverages
    B: float
    p: float
    residual: float
    p_ci: tuple
    B_ci: tuple
    converged: bool = True
    bootstrap_p: np.ndarray | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        per_m = []
        for m in self.averages.lengths:
            pt = self.averages.points[m]
            per_m.append(
                {
                    "m": m,
                    "mean": pt.mean,
                    "mom": pt.median_of_means,
                    "ci_lo": pt.ci[0],
                    "ci_hi": pt.ci[1],
                    "n_records": pt.n_records,
                }
            )
        return {
            "probe": self.probe,
            "irrep": self.irrep,
            "alpha": self.alpha,
            "per_m": per_m,
            "fit": {
                "B": self.B,
                "p": self.p,
                "residual": self.residual,
                "ci": list(self.p_ci),
                "B_ci": list(self.B_ci),
                "converged": self.converged,
            },
        }


def _aggregate(
    lengths: Sequence[int], values_for: Callable[[int], np.ndarray], estimator: str, k: int, bootstrap: int, seed: int
):
    """Averages for many probes at once, one length at a time.

    ``values_for(m)`` returns the correlation values ``(R, P)`` at length
    ``m``.  Bootstrap resample counts are drawn per length from one stream and
    shared by all probes.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB007,)))
    out = {}
    boot = {}
    for m in lengths:
        vals = values_for(m)
        r = vals.shape[0]
        mean = vals.mean(axis=0)
        var = vals.var(axis=0, ddof=1) if r > 1 else np.zeros(vals.shape[1])
        mom = np.array([median_of_means(vals[:, j], k) for j in range(vals.shape[1])]) if estimator == "mom" else mean
        if bootstrap:
            bm = bootstrap_counts(r, bootstrap, rng) @ vals / r  # (B, P) bootstrap means
            lo, hi = np.percentile(bm, [2.5, 97.5], axis=0)
            boot[m] = bm
        else:
            se = np.sqrt(var / r)
            lo, hi = mean - 1.96 * se, mean + 1.96 * se
        out[m] = (mean, mom, var, lo, hi, r)
    return out, boot


def estimate_many(
    shadow: GateSetShadow,
    probes: Sequence[ProbeOperator],
    estimator="mean",
    bootstrap: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    weighted: bool = True,
    method: str = "auto",
) -> list[EstimationResult]:
    """Fit every probe from one pass over the shadow.

    Bootstrap resampling (``bootstrap`` resamples, 0 to disable) reuses the
    same resampled record sets for all probes.  Fit weights are the inverse
    sample variance of each length average unless ``weighted`` is false.
    """
    est, k = parse_estimator(estimator)
    lengths = shadow.lengths
    for pr in probes:
        pr.check_gate_set(shadow.gate_set)
    agg, boot = _aggregate(
        lengths,
        lambda m: np.stack([correlation_values(shadow, m, pr, method) for pr in probes], axis=1),
        est,
        k,
        bootstrap,
        seed,
    )
    return _fit_all(shadow, probes, lengths, agg, boot, est, weighted)


def _fit_all(shadow, probes, lengths, agg, boot, est, weighted) -> list[EstimationResult]:
    mvec = np.array(lengths, dtype=float)
    kmat = np.stack([agg[m][1] for m in lengths], axis=-1)  # (P, L)
    var = np.stack([agg[m][2] for m in lengths], axis=-1)
    nrec = np.array([agg[m][5] for m in lengths], dtype=float)
    if not weighted:
        w = np.ones_like(kmat)
    elif boot:
        bvar = np.stack([boot[m].var(axis=0, ddof=1) for m in lengths], axis=-1)
        w = 1.0 / np.maximum(bvar, VARIANCE_FLOOR / nrec)
    else:
        w = nrec / np.maximum(var, VARIANCE_FLOOR)
    if len(lengths) < 3:
        raise FitError("need at least three sequence lengths with records")
    B, p, res, conv = fit_decay_batch(mvec, kmat, w)
    flagged = tuple(m for m in shadow.config.lengths if shadow.num_records(m) == 0)
    if boot:
        bk = np.stack([boot[m] for m in lengths], axis=-1)  # (Bs, P, L)
        bB, bp, _, _ = fit_decay_batch(mvec, bk, w[None], init=(B[None], p[None]))
        p_lo, p_hi = np.percentile(bp, [2.5, 97.5], axis=0)
        B_lo, B_hi = np.percentile(bB, [2.5, 97.5], axis=0)
    results = []
    for j, pr in enumerate(probes):
        points = {
            m: LengthAverage(
                m,
                float(agg[m][0][j]),
                float(agg[m][1][j]),
                int(agg[m][5]),
                float(agg[m][2][j]),
                (float(agg[m][3][j]), float(agg[m][4][j])),
            )
            for m in lengths
        }
        avgs = SequenceAverages(points, est, flagged)
        if boot:
            p_ci, B_ci = (float(p_lo[j]), float(p_hi[j])), (float(B_lo[j]), float(B_hi[j]))
        else:
            p_ci = fit_jacobian_ci(mvec, kmat[j], w[j], float(B[j]), float(p[j]))
            B_ci = (float("nan"), float("nan"))
        results.append(
            EstimationResult(
                pr.name,
                pr.irrep.label,
                pr.alpha_for(shadow.gate_set),
                avgs,
                float(B[j]),
                float(p[j]),
                float(res[j]),
                p_ci,
                B_ci,
                bool(conv[j]),
                bp[:, j] if boot else None,
            )
        )
    return results


def estimate(shadow: GateSetShadow, probe: ProbeOperator, **kwargs) -> EstimationResult:
    return estimate_many(shadow, [probe], **kwargs)[0]


def sequence_averages(
    shadow: GateSetShadow, probe: ProbeOperator, estimator="mean", bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0
) -> SequenceAverages:
    """Per-length averages (with bootstrap CIs) of the correlation function of ``probe``."""
    est, k = parse_estimator(estimator)
    probe.check_gate_set(shadow.gate_set)
    flagged = tuple(m for m in shadow.config.lengths if shadow.num_records(m) == 0)
    agg, _ = _aggregate(shadow.lengths, lambda m: correlation_values(shadow, m, probe)[:, None], est, k, bootstrap, seed)
    points = {
        m: LengthAverage(m, float(a[0][0]), float(a[1][0]), int(a[5]), float(a[2][0]), (float(a[3][0]), float(a[4][0])))
        for m, a in agg.items()
    }
    return SequenceAverages(points, est, flagged)


def fit_averages(avgs: SequenceAverages, weighted: bool = True):
    w = avgs.weights() if weighted else None
    return fit_single_exponential(np.array(avgs.lengths, dtype=float), avgs.values(), w)


def pauli_tau_estimates(
    shadow: GateSetShadow, estimator="mean", bootstrap: int = DEFAULT_BOOTSTRAP, seed: int = 0, weighted: bool = True
) -> list[EstimationResult]:
    """One decay fit per traceless Pauli from a Pauli-interleaved shadow."""
    est, k = parse_estimator(estimator)
    n = shadow.n
    lengths = shadow.lengths
    agg, boot = _aggregate(lengths, lambda m: pauli_tau_values(shadow, m), est, k, bootstrap, seed)
    probes = [ProbeOperator.rank_one_pauli(PauliString.from_index(n, t), projector("ad", n)) for t in range(1, 4**n)]
    return _fit_all(shadow, probes, lengths, agg, boot, est, weighted)


# -- theory oracles -----------------------------------------------------------------------

def decay_parameter(channel: SuperOperator, probe: ProbeOperator) -> float:
    """Generalized fidelity ``p = tr(A^T P Lambda P) / dim(P)``."""
    mask = probe.irrep.mask.astype(float)
    lam = mask[:, None] * channel.matrix * mask[None, :]
    return float(np.sum(probe.matrix * lam) / probe.irrep.rank)


def theory_phi(noise: GateNoiseModel, probe: ProbeOperator, irrep: IrrepProjector | None = None) -> np.ndarray:
    """Transfer matrix of the decay; ``1 x 1`` because both irreps are multiplicity-free."""
    if irrep is not None and irrep.mask.tobytes() != probe.irrep.mask.tobytes():
        raise ProbeError("irrep differs from the probe's irrep")
    return np.array([[decay_parameter(noise.channel, probe)]])


def spam_prefactor(noise: GateNoiseModel, spam: SpamModel, probe: ProbeOperator, gate_set: str) -> float:
    """``B`` in ``k(m) = B p**(m-1)`` for the configured SPAM."""
    n = probe.n
    mask = probe.irrep.mask.astype(float)
    alpha = probe.alpha_for(gate_set)
    ideal_e = effects_matrix(n) * mask
    noisy_e = spam.effects @ noise.lambda_L.matrix  # rows: Lambda_L^T applied to the noisy effects
    rho = state_to_pauli_vec(n, 0) * mask
    noisy_rho = noise.lambda_R.matrix @ spam.rho
    meas = np.sum(ideal_e * noisy_e)
    prep = float(rho @ noisy_rho)
    return alpha * meas * prep / probe.irrep.rank


def theory_k(noise: GateNoiseModel, spam: SpamModel, probe: ProbeOperator, m: int, gate_set: str) -> float:
    """Exact expected sequence average at length ``m``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    probe.check_gate_set(gate_set)
    return spam_prefactor(noise, spam, probe, gate_set) * decay_parameter(noise.channel, probe) ** (m - 1)


def theory_k_pauli(channel: SuperOperator, spam: SpamModel, tau: int, m: int) -> float:
    """Expected Pauli-interleaved average: SPAM factor times ``Lambda_tau_tau**(m-1)``."""
    n = spam.n
    d = 2**n
    alpha = d * (d + 1)
    ideal_e = effects_matrix(n)
    rho = state_to_pauli_vec(n, 0)
    spam_sum = np.sum(ideal_e[:, 1:] * spam.effects[:, 1:], axis=0) * rho[1:] * spam.rho[1:]
    return alpha * spam_sum.sum() / (4**n - 1) * channel.matrix[tau, tau] ** (m - 1)


# -- exact second moment (fixed-noise dynamic shadow norm) ------------------------------

def _copy3_apply(v: np.ndarray, mats: Sequence[np.ndarray], dim: int) -> np.ndarray:
    t = v.reshape(dim, dim, dim)
    t = np.einsum("ia,abc->ibc", mats[0], t)
    t = np.einsum("jb,abc->ajc", mats[1], t)
    t = np.einsum("kc,abc->abk", mats[2], t)
    return t.reshape(-1)


class _ThirdMoment:
    """Action of ``E_g omega(g)^{(x)3}`` on the tripled Liouville space."""

    def __init__(self, gate_set: str, n: int):
        self.n, self.dim = n, 4**n
        self.gate_set = gate_set
        if gate_set == "multi_clifford" and n >= 2:
            self.vecs = np.stack([_permutation_operator_vec(n, p) for p in _S3])
            self.w = weingarten_matrix(n)
            self.mode = "weingarten"
        elif gate_set == "multi_clifford":
            self.ptms = [c.to_ptm().matrix for c in enumerate_cliffords(1)]
            self.mode = "enumerate"
        elif gate_set == "local_clifford":
            single = [c.to_ptm().matrix for c in single_qubit_table()]
            m1 = sum(np.kron(np.kron(a, a), a) for a in single) / 24.0  # (64, 64) over one qubit
            self.local = m1.reshape((4,) * 6)
            self.mode = "local"
        else:
            raise ValueError(f"no third-moment model for gate-set {gate_set!r}")

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.mode == "weingarten":
            return np.real(self.vecs.T @ (self.w @ (self.vecs.conj() @ v)))
        if self.mode == "enumerate":
            return sum(_copy3_apply(v, (a, a, a), self.dim) for a in self.ptms) / len(self.ptms)
        return self._apply_local(v)

    def _apply_local(self, v: np.ndarray) -> np.ndarray:
        n = self.n
        perm = xz_to_tensor_perm(n)
        inv = np.argsort(perm)
        t = v.reshape(self.dim, self.dim, self.dim)
        # convert each copy to qubit-major tensor order
        t = t[np.ix_(inv, inv, inv)].reshape((4,) * (3 * n))
        for q in range(n):
            axes = [q, n + q, 2 * n + q]
            t = np.moveaxis(t, axes, [0, 1, 2])
            shape = t.shape
            t = np.tensordot(self.local, t, axes=([3, 4, 5], [0, 1, 2]))
            t = np.moveaxis(t.reshape(shape), [0, 1, 2], axes)
        t = t.reshape(self.dim, self.dim, self.dim)
        return t[np.ix_(perm, perm, perm)].reshape(-1)


def exact_second_moment(
    noise: GateNoiseModel, spam: SpamModel, probe: ProbeOperator, m: int, gate_set: str
) -> float:
    """Exact ``E f**2`` of the single-shot correlation function at fixed noise.

    This is the dynamic shadow norm expression evaluated at the configured
    ``Lambda_L, Lambda_R`` (no maximization), built from the gate-set's third
    moment.  An upper bound on the single-shot variance.
    """
    probe.check_gate_set(gate_set)
    n = probe.n
    dim = 4**n
    tm = _ThirdMoment(gate_set, n)
    mask = probe.irrep.mask.astype(float)
    alpha = probe.alpha_for(gate_set)
    proj = np.diag(mask)
    rho = state_to_pauli_vec(n, 0)
    v = np.kron(np.kron(rho, rho), noise.lambda_R.matrix @ spam.rho)
    lam = noise.channel.matrix
    a = probe.matrix
    for i in range(m):
        if i > 0:
            v = _copy3_apply(v, (a, a, lam), dim)
        v = _copy3_apply(v, (proj, proj, np.eye(dim)), dim)
        v = tm.apply(v)
        v = _copy3_apply(v, (proj, proj, np.eye(dim)), dim)
    ideal = effects_matrix(n)
    noisy = spam.effects @ noise.lambda_L.matrix
    total = 0.0
    for x in range(2**n):
        total += float(np.kron(np.kron(ideal[x], ideal[x]), noisy[x]) @ v)
    return alpha**2 * total


# -- variance bounds --------------------------------------------------------------------

def bound_unitary_clifford() -> float:
    """Sequence-length independent variance bound for unitary probes, multi-qubit Cliffords."""
    return 10.0


def bound_general_clifford(probe: ProbeOperator, m: int, constant: float = 1.0) -> float:
    """``C m**2 r**(m-1) max(r, 1)`` with ``r = (1 + 2**(4 - n/3)) u(A)``; ``C`` is unspecified."""
    r = (1 + 2 ** (4 - probe.n / 3)) * unitarity(probe.matrix)
    return constant * m**2 * r ** (m - 1) * max(r, 1.0)


def bound_local_clifford(probe: ProbeOperator, m: int) -> float:
    """``2**|w| 3**(2|w|) (3**-|w| tr(A A^T))**(m-1)`` for the local irrep ``w``."""
    w = popcount(probe.irrep.w)
    return 2**w * 3 ** (2 * w) * (3.0**-w * float(np.sum(probe.matrix**2))) ** (m - 1)


def bound_pauli_interleaved(n: int) -> float:
    """Single-shot variance bound of the Pauli-interleaved correlator."""
    d = 2**n
    return d**3 * (d + 1) ** 3 / (d**3 * (d * d - 1))


def variance_diagnostics(shadow: GateSetShadow, probe: ProbeOperator) -> dict:
    """Empirical single-shot variance per length next to the applicable closed-form bounds."""
    out = {}
    unitary = probe.variant == "clifford" or (
        probe.variant == "dense" and abs(unitarity(probe.matrix) - 1) < 1e-9
    )
    for m in shadow.lengths:
        vals = correlation_values(shadow, m, probe)
        row = {"m": m, "empirical_variance": float(vals.var(ddof=1)) if len(vals) > 1 else 0.0, "n_records": len(vals)}
        if shadow.gate_set == "multi_clifford":
            if unitary:
                row["bound_unitary"] = bound_unitary_clifford()
            row["bound_general_shape"] = bound_general_clifford(probe, m)
        else:
            row["bound_local"] = bound_local_clifford(probe, m)
        out[m] = row
    return out
