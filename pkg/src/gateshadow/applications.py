"""Characterization tasks computed from a single gate-set shadow.

* :func:`learn_unitary` scans a unitary ansatz and reports average gate fidelities.
* :func:`crosstalk_reconstruct` inverts local Clifford fidelities into unital marginals.
* :func:`pauli_eigenvalues` fits the Pauli-noise diagonal from a Pauli-interleaved shadow.
* :func:`reconstruct_unital` rebuilds a unital channel from Clifford fidelities.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .clifford import (
    CliffordElement,
    LocalCliffordElement,
    enumerate_cliffords,
    enumerate_local_cliffords,
)
from .estimation import ProbeOperator, estimate_many, pauli_tau_estimates
from .experiment import GateSetShadow
from .liouville import SuperOperator, choi_hs_distance, embed, projector, unitary_ptm
from .pauli import PauliString, popcount

RATIO_MAX_CONDITION = 1e8


class ApplicationError(ValueError):
    """Shadow or inputs unsuitable for the requested application."""


def _require(shadow: GateSetShadow, gate_set: str) -> None:
    if not isinstance(shadow, GateSetShadow):
        raise ApplicationError("applications consume a GateSetShadow")
    if shadow.gate_set != gate_set:
        raise ApplicationError(f"expected a {gate_set} shadow, got {shadow.gate_set}")


def fidelity_from_p(p, n: int):
    """Average gate fidelity ``(p (2**n - 1) + 1) / 2**n`` from the traceless-block decay."""
    d = 2**n
    return (np.asarray(p) * (d - 1) + 1) / d


def p_from_fidelity(f, n: int):
    d = 2**n
    return (d * np.asarray(f) - 1) / (d - 1)


# -- unitary noise learning -----------------------------------------------------------------

@dataclass
class FidelityLandscape:
    """Fitted decays and fidelities of ``U(theta)`` over a parameter grid."""

    n: int
    names: tuple
    grid: np.ndarray  # (G, k)
    p: np.ndarray
    fidelity: np.ndarray
    p_ci: np.ndarray  # (G, 2)
    results: list = field(default_factory=list, repr=False)

    @property
    def argmax(self) -> tuple:
        return tuple(float(t) for t in self.grid[int(np.argmax(self.p))])

    def order(self) -> np.ndarray:
        return np.lexsort(self.grid.T[::-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.names, "p", "F", "ci_lo", "ci_hi"])
        for i in self.order():
            w.writerow([*(repr(float(t)) for t in self.grid[i]), repr(float(self.p[i])), repr(float(self.fidelity[i])),
                        repr(float(self.p_ci[i, 0])), repr(float(self.p_ci[i, 1]))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "parameters": list(self.names),
            "argmax": list(self.argmax),
            "points": [
                {"theta": [float(t) for t in self.grid[i]], "p": float(self.p[i]), "F": float(self.fidelity[i]),
                 "ci": [float(self.p_ci[i, 0]), float(self.p_ci[i, 1])]}
                for i in self.order()
            ],
        }


def _model_ptm(u) -> np.ndarray:
    if isinstance(u, SuperOperator):
        return u.matrix
    if isinstance(u, (CliffordElement, LocalCliffordElement)):
        return u.to_ptm().matrix
    return unitary_ptm(np.asarray(u, dtype=complex)).matrix


def learn_unitary(
    shadow: GateSetShadow,
    model: Callable[..., object],
    grid: Sequence[Sequence[float]] | np.ndarray,
    names: Sequence[str] | None = None,
    **estimate_kwargs,
) -> FidelityLandscape:
    """Fit ``p(theta)`` for the probe ``P_ad U(theta) P_ad`` at every grid point.

    :param model: maps a parameter tuple to a unitary matrix, a
        :class:`SuperOperator` or a Clifford element
    :param grid: parameter points, shape ``(G,)`` or ``(G, k)``
    """
    _require(shadow, "multi_clifford")
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ApplicationError("parameter grid is empty")
    if g.ndim == 1:
        g = g[:, None]
    names = tuple(names) if names is not None else tuple(f"theta{i + 1}" for i in range(g.shape[1]))
    if len(names) != g.shape[1]:
        raise ApplicationError("one name per grid dimension required")
    irr = projector("ad", shadow.n)
    probes = [ProbeOperator.dense(_model_ptm(model(*row)), irr, name=",".join(f"{t:g}" for t in row)) for row in g]
    res = estimate_many(shadow, probes, **estimate_kwargs)
    p = np.array([r.p for r in res])
    return FidelityLandscape(shadow.n, names, g, p, fidelity_from_p(p, shadow.n), np.array([r.p_ci for r in res]), res)


def rz_product_model(n: int = 2) -> Callable[..., np.ndarray]:
    """Ansatz ``R_Z(theta_1) (x) ... (x) R_Z(theta_n)`` with ``R_Z(t) = exp(-i t Z / 2)``."""

    def model(*theta):
        if len(theta) != n:
            raise ApplicationError(f"expected {n} angles")
        u = np.array([[1.0]])
        for t in theta:
            u = np.kron(u, np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)]))
        return u

    return model


# -- cross-talk tomography ----------------------------------------------------------------

def _w_int(w, n: int) -> int:
    if isinstance(w, str):
        if len(w) != n or set(w) - {"0", "1"}:
            raise ApplicationError(f"support label {w!r} is not an {n}-bit string")
        return int(w, 2)
    return int(w)


def _w_label(w: int, n: int) -> str:
    return format(w, f"0{n}b")


def local_probe_set(n: int, w) -> tuple[list, list]:
    """Clifford probes acting on ``support(w)`` only, restricted to irrep ``w``."""
    wi = _w_int(w, n)
    irr = projector("local", n, wi)
    els = enumerate_local_cliffords(n, _w_label(wi, n))
    probes = [ProbeOperator.from_clifford(c, irr, name=f"{_w_label(wi, n)}:{'.'.join(map(str, c.indices))}") for c in els]
    return els, probes


def _frame(n: int, w: int) -> np.ndarray:
    """Stacked ``P_w omega(C) P_w`` over the support-``w`` local Cliffords, shape ``(K, 4**n, 4**n)``."""
    _, probes = local_probe_set(n, w)
    return np.stack([p.matrix for p in probes])


def invert_local_fidelities(p_values: np.ndarray, n: int, w) -> np.ndarray:
    """Unital marginal ``Lambda_w = 9**|w| mean_C p_C P_w omega(C) P_w``.

    ``p_values`` follows the order of :func:`local_probe_set`; a leading batch
    axis is allowed (bootstrap replicates).
    """
    wi = _w_int(w, n)
    frame = _frame(n, wi)
    pv = np.asarray(p_values, dtype=float)
    if pv.shape[-1] != len(frame):
        raise ApplicationError(f"expected {len(frame)} fidelities for support {_w_label(wi, n)}")
    scale = 9.0 ** popcount(wi) / len(frame)
    return scale * np.tensordot(pv, frame, axes=([-1], [0]))


def theory_local_fidelities(channel: SuperOperator, n: int, w) -> np.ndarray:
    """Exact ``p_{w,C} = tr(A_C^T Lambda) / 3**|w|`` for every probe of :func:`local_probe_set`."""
    wi = _w_int(w, n)
    frame = _frame(n, wi)
    return np.einsum("kij,ij->k", frame, channel.matrix) / 3.0 ** popcount(wi)


@dataclass
class UnitalMarginalSet:
    """Reconstructed unital marginals ``Lambda_w`` keyed by support bit string."""

    n: int
    marginals: dict  # label -> (4**n, 4**n) array supported on irrep w
    bootstrap: dict = field(default_factory=dict, repr=False)  # label -> (B, 4**n, 4**n)
    results: dict = field(default_factory=dict, repr=False)

    def marginal(self, w) -> SuperOperator:
        return SuperOperator(self.n, self.marginals[_w_label(_w_int(w, self.n), self.n)])

    def pinched(self, support=None) -> SuperOperator:
        """Direct sum of the available marginals on ``support`` (all qubits by default) plus the trivial block."""
        s = (1 << self.n) - 1 if support is None else _w_int(support, self.n)
        out = np.zeros((4**self.n, 4**self.n))
        out[0, 0] = 1.0
        for label, m in self.marginals.items():
            if int(label, 2) & ~s == 0:
                out += m
        return SuperOperator(self.n, out)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "basis": "xz-lex",
            "marginals": {k: SuperOperator(self.n, v).to_json() for k, v in sorted(self.marginals.items())},
        }


def crosstalk_reconstruct(
    shadow: GateSetShadow, targets: Sequence | None = None, max_weight: int = 2, **estimate_kwargs
) -> UnitalMarginalSet:
    """Estimate ``p_{w,C}`` for every support-``w`` Clifford and invert to ``Lambda_w``.

    All targets are fitted in one pass with shared bootstrap resamples, so
    bootstrap replicates of the marginals (and any metric built from them)
    are available in ``bootstrap``.
    """
    _require(shadow, "local_clifford")
    n = shadow.n
    if targets is None:
        targets = [w for w in range(1, 2**n) if popcount(w) <= max_weight]
    ws = [_w_int(w, n) for w in targets]
    for w in ws:
        if w <= 0 or w >= 2**n:
            raise ApplicationError(f"invalid support {w}")
        if popcount(w) > max_weight:
            raise ApplicationError(f"support {_w_label(w, n)} exceeds max weight {max_weight}")
    if len(shadow.lengths) < 3:
        raise ApplicationError("cross-talk reconstruction needs at least three sequence lengths")
    probe_lists = [local_probe_set(n, w)[1] for w in ws]
    flat = [p for ps in probe_lists for p in ps]
    res = estimate_many(shadow, flat, **estimate_kwargs)
    out = UnitalMarginalSet(n, {})
    start = 0
    for w, ps in zip(ws, probe_lists):
        chunk = res[start : start + len(ps)]
        start += len(ps)
        label = _w_label(w, n)
        out.marginals[label] = invert_local_fidelities(np.array([r.p for r in chunk]), n, w)
        if chunk[0].bootstrap_p is not None:
            bp = np.stack([r.bootstrap_p for r in chunk], axis=-1)
            out.bootstrap[label] = invert_local_fidelities(bp, n, w)
        out.results[label] = chunk
    return out


def exact_marginals(channel: SuperOperator, targets: Sequence) -> UnitalMarginalSet:
    """Marginals from theory-exact fidelities; equals the ``w``-block restriction of ``channel``."""
    n = channel.n
    out = UnitalMarginalSet(n, {})
    for w in targets:
        wi = _w_int(w, n)
        out.marginals[_w_label(wi, n)] = invert_local_fidelities(theory_local_fidelities(channel, n, wi), n, wi)
    return out


def _single_block_superop(m: np.ndarray, n: int, q: int) -> SuperOperator:
    """One-qubit superoperator on qubit ``q`` read from the support-``{q}`` marginal (trivial block set to 1)."""
    bit = n - 1 - q
    sel = [0] + [((d >> 1) << (bit + n)) | ((d & 1) << bit) for d in (1, 2, 3)]
    out = m[np.ix_(sel, sel)].copy()
    out[0, 0] = 1.0
    return SuperOperator(1, out)


def product_marginal(marginals: Mapping, n: int, qa: int, qb: int) -> np.ndarray:
    """``P_w (Lambda_a (x) Lambda_b) P_w`` embedded on the pair support ``w``, in the ``n``-qubit basis."""
    la = embed(_single_block_superop(marginals[_w_label(1 << (n - 1 - qa), n)], n, qa), [qa], n)
    lb = embed(_single_block_superop(marginals[_w_label(1 << (n - 1 - qb), n)], n, qb), [qb], n)
    prod = (la @ lb).matrix
    w = (1 << (n - 1 - qa)) | (1 << (n - 1 - qb))
    mask = projector("local", n, w).mask.astype(float)
    return mask[:, None] * prod * mask[None, :]


@dataclass
class CrosstalkMetric:
    """Cross-talk diagnostics for one qubit pair."""

    pair: tuple
    difference: np.ndarray
    hs_norm: float
    hs_norm_ci: tuple | None
    debiased_sq_norm: float | None
    debiased_sq_norm_se: float | None
    ratio: np.ndarray | None
    ratio_hs_distance: float | None
    condition_number: float
    diagnostic: str = ""

    def consistent_with_zero(self, z: float = 1.96) -> bool:
        """Whether the bias-corrected squared HS norm is within ``z`` standard errors of zero."""
        if self.debiased_sq_norm is None:
            raise ApplicationError("no bootstrap replicates available")
        return abs(self.debiased_sq_norm) <= z * self.debiased_sq_norm_se

    def to_json(self) -> dict:
        return {
            "pair": list(self.pair),
            "difference": self.difference.tolist(),
            "hs_norm": self.hs_norm,
            "hs_norm_ci": None if self.hs_norm_ci is None else list(self.hs_norm_ci),
            "debiased_sq_norm": self.debiased_sq_norm,
            "debiased_sq_norm_se": self.debiased_sq_norm_se,
            "ratio": None if self.ratio is None else self.ratio.tolist(),
            "ratio_hs_distance_to_identity": self.ratio_hs_distance,
            "condition_number": self.condition_number,
            "diagnostic": self.diagnostic,
        }


def crosstalk_metrics(ms: UnitalMarginalSet, pairs: Sequence[tuple[int, int]] | None = None) -> list[CrosstalkMetric]:
    """Difference ``Lambda_ab - Lambda_a (x) Lambda_b`` and ratio ``Lambda_ab (Lambda_a (x) Lambda_b)^-1``."""
    n = ms.n
    if pairs is None:
        pairs = [
            (a, b)
            for a, b in itertools.combinations(range(n), 2)
            if all(_w_label(w, n) in ms.marginals for w in (1 << (n - 1 - a), 1 << (n - 1 - b), (1 << (n - 1 - a)) | (1 << (n - 1 - b))))
        ]
    out = []
    for a, b in pairs:
        w = (1 << (n - 1 - a)) | (1 << (n - 1 - b))
        label = _w_label(w, n)
        if label not in ms.marginals:
            raise ApplicationError(f"marginal {label} missing")
        sel = np.flatnonzero(projector("local", n, w).mask)
        prod = product_marginal(ms.marginals, n, a, b)
        diff = ms.marginals[label] - prod
        hs = float(np.linalg.norm(diff))
        hs_ci = dsq = dsq_se = None
        if all(_w_label(v, n) in ms.bootstrap for v in (w, 1 << (n - 1 - a), 1 << (n - 1 - b))):
            boot_marg = {k: ms.bootstrap[k] for k in ms.bootstrap}
            nb = boot_marg[label].shape[0]
            bdiff = np.stack(
                [boot_marg[label][i] - product_marginal({k: v[i] for k, v in boot_marg.items()}, n, a, b) for i in range(nb)]
            )
            bnorm = np.linalg.norm(bdiff.reshape(nb, -1), axis=1)
            hs_ci = tuple(float(v) for v in np.percentile(bnorm, [2.5, 97.5]))
            noise_sq = float(bdiff.reshape(nb, -1).var(axis=0, ddof=1).sum())
            dsq = hs**2 - noise_sq
            dsq_se = float(np.std(bnorm**2, ddof=1))
        block = prod[np.ix_(sel, sel)]
        cond = float(np.linalg.cond(block))
        ratio = rdist = None
        diag = ""
        if np.isfinite(cond) and cond < RATIO_MAX_CONDITION:
            ratio = ms.marginals[label][np.ix_(sel, sel)] @ np.linalg.inv(block)
            rdist = float(np.linalg.norm(ratio - np.eye(len(sel))))
        else:
            diag = f"product marginal is singular (condition number {cond:.3g}); ratio omitted"
        out.append(CrosstalkMetric((a, b), diff, hs, hs_ci, dsq, dsq_se, ratio, rdist, cond, diag))
    return out


# -- Pauli noise ------------------------------------------------------------------------

@dataclass
class PauliEigenvalues:
    n: int
    values: dict  # label -> fitted Lambda_tau_tau
    ci: dict
    results: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "lambda", "ci_lo", "ci_hi"])
        for t in range(1, 4**self.n):
            lab = PauliString.from_index(self.n, t).label
            w.writerow([lab, repr(self.values[lab]), repr(self.ci[lab][0]), repr(self.ci[lab][1])])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "eigenvalues": [
                {"tau": k, "lambda": v, "ci": list(self.ci[k])} for k, v in self.values.items()
            ],
        }


def pauli_eigenvalues(shadow: GateSetShadow, **estimate_kwargs) -> PauliEigenvalues:
    """Fitted Pauli eigenvalues ``Lambda_tau_tau`` for every traceless ``tau``."""
    _require(shadow, "pauli_interleaved")
    res = pauli_tau_estimates(shadow, **estimate_kwargs)
    n = shadow.n
    labels = [PauliString.from_index(n, t).label for t in range(1, 4**n)]
    return PauliEigenvalues(n, {l: r.p for l, r in zip(labels, res)}, {l: r.p_ci for l, r in zip(labels, res)}, res)


# -- unital reconstruction --------------------------------------------------------------

def average_gate_fidelity(target: SuperOperator, channel: SuperOperator) -> float:
    """``F(U, Lambda) = (tr(omega(U)^T Lambda) / d + 1) / (d + 1)``."""
    d = 2**channel.n
    return float((np.sum(target.matrix * channel.matrix) / d + 1) / (d + 1))


def reconstruction_constant(n: int) -> int:
    d = 2**n
    return d * (d + 1) * (d * d - 1)


def _is_full_group(keys: set, n: int) -> bool:
    if n > 2:
        return False
    return keys == {c.key for c in enumerate_cliffords(n)}


@dataclass
class UnitalReconstruction:
    channel: SuperOperator
    exact: bool
    num_fidelities: int

    def distance(self, reference: SuperOperator) -> float:
        return choi_hs_distance(self.channel, reference)


def reconstruct_unital(fidelities: Mapping, n: int, mode: str = "exact") -> UnitalReconstruction:
    """``Lambda = mean_C (D F_C - D / 2**n + 1) omega(C)`` with ``D = 2**n (2**n + 1) (4**n - 1)``.

    :param fidelities: map from :class:`CliffordElement` to its estimated
        average gate fidelity
    :param mode: ``"exact"`` requires the keys to be the full Clifford group
        (an exact 2-design); ``"sampled"`` accepts any set and marks the
        result approximate
    """
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if not fidelities:
        raise ApplicationError("no fidelities given")
    cs = list(fidelities)
    if any(c.n != n for c in cs):
        raise ApplicationError("Clifford acts on the wrong number of qubits")
    keys = {c.key for c in cs}
    if len(keys) != len(cs):
        raise ApplicationError("duplicate Clifford in fidelity map")
    exact = _is_full_group(keys, n)
    if mode == "exact" and not exact:
        raise ApplicationError("exact mode needs fidelities for the full Clifford group (a unitary 2-design)")
    d = 2**n
    big = reconstruction_constant(n)
    acc = np.zeros((4**n, 4**n))
    for c in cs:
        acc += (big * float(fidelities[c]) - big / d + 1) * c.to_ptm().matrix
    return UnitalReconstruction(SuperOperator(n, acc / len(cs)), exact, len(cs))


def clifford_fidelities(shadow: GateSetShadow, cliffords: Sequence[CliffordElement] | None = None, **estimate_kwargs) -> dict:
    """Average gate fidelities ``F(C, Lambda)`` estimated from a multi-qubit Clifford shadow."""
    _require(shadow, "multi_clifford")
    cs = list(enumerate_cliffords(shadow.n)) if cliffords is None else list(cliffords)
    irr = projector("ad", shadow.n)
    probes = [ProbeOperator.from_clifford(c, irr, name=f"C{i}") for i, c in enumerate(cs)]
    res = estimate_many(shadow, probes, **estimate_kwargs)
    return {c: float(fidelity_from_p(r.p, shadow.n)) for c, r in zip(cs, res)}
