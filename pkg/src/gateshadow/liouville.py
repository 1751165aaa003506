"""Pauli transfer matrices (Liouville representation) and Choi-based metrics.

Every superoperator is a real ``4**n x 4**n`` matrix in the normalized Pauli
basis ``tau_k = P_k / sqrt(2**n)`` ordered as in :mod:`gateshadow.pauli`
(xz-lex, identity first).  Entry ``(j, k)`` is ``tr(tau_j A(tau_k))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .pauli import MAX_DENSE_QUBITS, basis_bits, normalized_basis, popcount

CPTP_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when operands act on different numbers of qubits."""


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_DENSE_QUBITS:
        raise ValueError(f"dense mode supports 1 <= n <= {MAX_DENSE_QUBITS}, got n={n}")


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Dense real Pauli transfer matrix on ``n`` qubits."""

    n: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n(self.n)
        m = np.array(self.matrix, dtype=float, copy=True)
        dim = 4**self.n
        if m.shape != (dim, dim):
            raise DimensionError(f"expected {dim}x{dim} matrix for n={self.n}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("superoperator has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return 4**self.n

    @classmethod
    def identity(cls, n: int) -> "SuperOperator":
        return cls(n, np.eye(4**n))

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        return compose(self, other)

    def allclose(self, other: "SuperOperator", atol: float = 1e-12) -> bool:
        return self.n == other.n and np.allclose(self.matrix, other.matrix, atol=atol, rtol=0)

    def to_json(self) -> dict:
        return {"n": self.n, "basis": "xz-lex", "rows": [[float(v) for v in row] for row in self.matrix]}

    @classmethod
    def from_json(cls, d: dict) -> "SuperOperator":
        if d.get("basis", "xz-lex") != "xz-lex":
            raise ValueError(f"unsupported basis ordering {d.get('basis')!r}")
        return cls(int(d["n"]), np.asarray(d["rows"], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _as_matrix(a) -> np.ndarray:
    return a.matrix if isinstance(a, SuperOperator) else np.asarray(a, dtype=float)


def _n_of(a) -> int:
    if isinstance(a, SuperOperator):
        return a.n
    dim = np.asarray(a).shape[0]
    n = int(round(np.log(dim) / np.log(4)))
    if 4**n != dim:
        raise DimensionError(f"matrix dimension {dim} is not a power of 4")
    return n


def compose(a: SuperOperator, b: SuperOperator) -> SuperOperator:
    """Return ``a o b`` (apply ``b`` first)."""
    if a.n != b.n:
        raise DimensionError(f"cannot compose {a.n}- and {b.n}-qubit maps")
    return SuperOperator(a.n, a.matrix @ b.matrix)


def apply(a: SuperOperator, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (a.dim,):
        raise DimensionError(f"vector of length {v.shape} does not match {a.dim}")
    return a.matrix @ v


# -- tensor-product bookkeeping ---------------------------------------------------

@lru_cache(maxsize=None)
def xz_to_tensor_perm(n: int) -> np.ndarray:
    """``perm[k]`` is the qubit-major tensor index of xz-lex index ``k``.

    In tensor order each qubit contributes a base-4 digit ``2*x_j + z_j``
    (single-qubit xz-lex order ``I, Z, X, Y``), qubit 0 most significant.
    """
    xs, zs = basis_bits(n)
    t = np.zeros(4**n, dtype=np.int64)
    for j in range(n):
        b = n - 1 - j
        digit = 2 * ((xs >> b) & 1) + ((zs >> b) & 1)
        t += digit * 4 ** (n - 1 - j)
    t.setflags(write=False)
    return t


def to_tensor_order(m: np.ndarray, n: int) -> np.ndarray:
    p = xz_to_tensor_perm(n)
    out = np.empty_like(m)
    out[np.ix_(p, p)] = m
    return out


def from_tensor_order(m: np.ndarray, n: int) -> np.ndarray:
    p = xz_to_tensor_perm(n)
    return m[np.ix_(p, p)]


def tensor(a: SuperOperator, b: SuperOperator) -> SuperOperator:
    """Kronecker product; ``a`` acts on the leading qubits."""
    n = a.n + b.n
    _check_n(n)
    ta = to_tensor_order(a.matrix, a.n)
    tb = to_tensor_order(b.matrix, b.n)
    return SuperOperator(n, from_tensor_order(np.kron(ta, tb), n))


def tensor_all(ops: Sequence[SuperOperator]) -> SuperOperator:
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def embed(a: SuperOperator, qubits: Sequence[int], n: int) -> SuperOperator:
    """Lift ``a`` acting on ``qubits`` (in that order) to an ``n``-qubit map."""
    qubits = list(qubits)
    k = a.n
    if len(qubits) != k or len(set(qubits)) != k:
        raise DimensionError(f"need {k} distinct target qubits, got {qubits}")
    if any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"qubit index out of range for n={n}: {qubits}")
    if k == n and qubits == list(range(n)):
        return a
    _check_n(n)
    rest = [q for q in range(n) if q not in qubits]
    full = np.kron(to_tensor_order(a.matrix, k), np.eye(4 ** (n - k)))
    order = qubits + rest  # axis i of `full` corresponds to physical qubit order[i]
    t = full.reshape((4,) * (2 * n))
    inv = np.argsort(order)
    axes = list(inv) + [n + i for i in inv]
    t = t.transpose(axes).reshape(4**n, 4**n)
    return SuperOperator(n, from_tensor_order(t, n))


# -- irreducible subspace projectors ----------------------------------------------

@dataclass(frozen=True, eq=False)
class IrrepProjector:
    """Diagonal 0/1 projector onto an irreducible subspace.

    ``kind`` is ``"ad"`` (traceless operators, multi-qubit Clifford group) or
    ``"local"`` with support mask ``w`` (Paulis whose support is exactly ``w``,
    local Clifford group).
    """

    kind: str
    n: int
    w: int | None = None

    def __post_init__(self):
        _check_n(self.n)
        if self.kind not in ("ad", "local"):
            raise ValueError(f"unknown irrep kind {self.kind!r}")
        if self.kind == "local":
            if self.w is None or not 0 <= self.w < (1 << self.n):
                raise ValueError(f"local irrep needs an {self.n}-bit support mask, got {self.w!r}")

    @property
    def mask(self) -> np.ndarray:
        return _projector_mask(self.kind, self.n, self.w)

    @property
    def support(self) -> np.ndarray:
        """Basis indices with entry 1."""
        return np.flatnonzero(self.mask)

    @property
    def rank(self) -> int:
        return int(self.mask.sum())

    @property
    def superop(self) -> SuperOperator:
        return SuperOperator(self.n, np.diag(self.mask.astype(float)))

    @property
    def label(self) -> str:
        if self.kind == "ad":
            return "ad"
        return "w=" + format(self.w, f"0{self.n}b")


@lru_cache(maxsize=None)
def _projector_mask(kind: str, n: int, w: int | None) -> np.ndarray:
    xs, zs = basis_bits(n)
    if kind == "ad":
        mask = np.ones(4**n, dtype=bool)
        mask[0] = False
    else:
        mask = (xs | zs) == w
    mask.setflags(write=False)
    return mask


def projector(kind: str, n: int, w: int | str | None = None) -> IrrepProjector:
    """Build an irrep projector; ``w`` may be an int mask or a bit string like ``"10"``."""
    if isinstance(w, str):
        if len(w) != n or set(w) - {"0", "1"}:
            raise ValueError(f"support string {w!r} is not an {n}-bit string")
        w = int(w, 2)
    return IrrepProjector(kind, n, w)


# -- scalar functionals -----------------------------------------------------------

def unitarity(a: SuperOperator) -> float:
    """``tr(A A^T) / (4**n - 1)``; apply the traceless projector first if needed."""
    m = _as_matrix(a)
    return float(np.sum(m * m) / (m.shape[0] - 1))


def hs_overlap(a, b) -> float:
    """``tr(A^T B)`` for real PTMs."""
    return float(np.sum(_as_matrix(a) * _as_matrix(b)))


# -- states, effects, operator decomposition --------------------------------------

def _bits_from(x, n: int) -> int:
    if isinstance(x, str):
        if len(x) != n or set(x) - {"0", "1"}:
            raise ValueError(f"bitstring {x!r} must have length {n}")
        return int(x, 2)
    x = int(x)
    if not 0 <= x < (1 << n):
        raise ValueError(f"outcome {x} out of range for n={n}")
    return x


def state_to_pauli_vec(n: int, x=0) -> np.ndarray:
    """Pauli-basis vector of ``|x><x|``; qubit 0 is the leftmost character."""
    xb = _bits_from(x, n)
    xs, zs = basis_bits(n)
    v = np.zeros(4**n)
    ztype = xs == 0
    parity = np.array([popcount(int(z) & xb) & 1 for z in zs[ztype]])
    v[ztype] = (1.0 - 2.0 * parity) * 2.0 ** (-n / 2)
    return v


def effect_to_pauli_vec(n: int, x=0) -> np.ndarray:
    """Dual vector ``<<x|`` with ``<<x|v>> = <x| rho(v) |x>``."""
    return state_to_pauli_vec(n, x)


def effects_matrix(n: int) -> np.ndarray:
    """Rows are ``<<x|`` for ``x = 0 .. 2**n - 1``."""
    return np.stack([effect_to_pauli_vec(n, x) for x in range(2**n)])


def operator_to_pauli_vec(op: np.ndarray) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    n = int(round(np.log2(op.shape[0])))
    basis = normalized_basis(n)
    return np.real(np.einsum("kab,ba->k", basis, op))


def pauli_vec_to_operator(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = _n_of(np.empty((v.shape[0], 0)))
    return np.einsum("k,kab->ab", v, normalized_basis(n))


def unitary_ptm(u: np.ndarray) -> SuperOperator:
    """PTM of ``rho -> U rho U^dagger``."""
    return kraus_ptm([u])


def kraus_ptm(kraus: Iterable[np.ndarray]) -> SuperOperator:
    """PTM of ``rho -> sum_i K_i rho K_i^dagger``."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d = kraus[0].shape[0]
    n = int(round(np.log2(d)))
    basis = normalized_basis(n)
    m = np.zeros((4**n, 4**n))
    for k in kraus:
        # images[j] = K tau_j K^dagger
        images = np.einsum("ab,jbc,dc->jad", k, basis, k.conj())
        m += np.real(np.einsum("iab,jab->ij", basis.conj(), images))
    return SuperOperator(n, m)


# -- Choi representation ----------------------------------------------------------

def choi(a: SuperOperator) -> np.ndarray:
    """Normalized Choi state ``(1/d) sum_ab |a><b| (x) A(|a><b|)`` (unit trace for TP maps)."""
    n = a.n
    d = 2**n
    b = normalized_basis(n)
    j = np.einsum("jk,kab,jce->acbe", a.matrix, b.conj(), b, optimize=True)
    return j.reshape(d * d, d * d) / d


def choi_hs_distance(a: SuperOperator, b: SuperOperator) -> float:
    """Frobenius distance of normalized Choi states."""
    if a.n != b.n:
        raise DimensionError("choi distance needs equal qubit counts")
    # The normalized Pauli basis is orthonormal, so the Choi map is an isometry up to 1/d.
    return float(np.linalg.norm(a.matrix - b.matrix) / 2**a.n)


def is_cptp(a: SuperOperator, tol: float = CPTP_TOL) -> bool:
    m = a.matrix
    e0 = np.zeros(a.dim)
    e0[0] = 1.0
    if not np.allclose(m[0], e0, atol=tol, rtol=0):
        return False
    j = choi(a)
    j = 0.5 * (j + j.conj().T)
    return bool(np.linalg.eigvalsh(j).min() >= -tol)


def is_unital(a: SuperOperator, tol: float = CPTP_TOL) -> bool:
    e0 = np.zeros(a.dim)
    e0[0] = 1.0
    return bool(np.allclose(a.matrix[:, 0], e0, atol=tol, rtol=0))


def signed_permutation_ptm(perm: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Matrix with ``M[perm[k], k] = signs[k]``."""
    dim = len(perm)
    m = np.zeros((dim, dim))
    m[perm, np.arange(dim)] = signs
    return m


def transposition_map(n: int) -> SuperOperator:
    """PTM of the transpose map ``rho -> rho^T`` (positive but not completely positive)."""
    xs, zs = basis_bits(n)
    ny = np.array([popcount(int(x) & int(z)) for x, z in zip(xs, zs)])
    return SuperOperator(n, np.diag(np.where(ny % 2 == 1, -1.0, 1.0)))
