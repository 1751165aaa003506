"""Pauli group algebra in the X/Z bit encoding.

An ``n``-qubit Pauli operator is stored as two ``n``-bit masks plus a phase
exponent ``k`` meaning ``i**k``.  Qubit ``j`` lives in bit ``n - 1 - j`` of each
mask, so the masks read like the operator label (qubit 0 leftmost) and outcome
integers agree with the Kronecker ordering of the computational basis.

The unphased operator for masks ``(x, z)`` is the Hermitian string
``P(x, z) = prod_j i**(x_j z_j) X_j**x_j Z_j**z_j``, i.e. the usual tensor
product of ``I, X, Y, Z`` factors.  Basis index of ``P(x, z)`` is
``(x << n) | z`` (lexicographic in ``(x_bits, z_bits)``, identity first).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DENSE_QUBITS = 6

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {v: k for k, v in _LETTERS.items()}
_PHASE_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}


def popcount(v: int) -> int:
    return bin(v).count("1")


def _g(x1: int, z1: int, x2: int, z2: int) -> int:
    """Exponent of ``i`` picked up by a single-qubit product ``P1 P2``."""
    if x1 == 0 and z1 == 0:
        return 0
    if x1 == 1 and z1 == 1:
        return z2 - x2
    if x1 == 1:
        return z2 * (2 * x2 - 1)
    return x2 * (1 - 2 * z2)


def product_phase(n: int, x1: int, z1: int, x2: int, z2: int) -> int:
    """Phase exponent ``g`` with ``P(x1,z1) P(x2,z2) = i**g P(x1^x2, z1^z2)``."""
    total = 0
    for b in range(n):
        total += _g((x1 >> b) & 1, (z1 >> b) & 1, (x2 >> b) & 1, (z2 >> b) & 1)
    return total % 4


def product_phase_array(n, x1, z1, x2, z2):
    """Vectorized :func:`product_phase` over integer arrays (broadcasting)."""
    x1 = np.asarray(x1, dtype=np.int64)
    z1 = np.asarray(z1, dtype=np.int64)
    x2 = np.asarray(x2, dtype=np.int64)
    z2 = np.asarray(z2, dtype=np.int64)
    total = np.zeros(np.broadcast(x1, z1, x2, z2).shape, dtype=np.int64)
    for b in range(n):
        a1 = (x1 >> b) & 1
        c1 = (z1 >> b) & 1
        a2 = (x2 >> b) & 1
        c2 = (z2 >> b) & 1
        y = a1 & c1
        xo = a1 & (1 - c1)
        zo = (1 - a1) & c1
        total += y * (c2 - a2) + xo * c2 * (2 * a2 - 1) + zo * a2 * (1 - 2 * c2)
    return total % 4


def symplectic_inner(x1: int, z1: int, x2: int, z2: int) -> int:
    """0 if the two Pauli strings commute, 1 if they anticommute."""
    return popcount((x1 & z2) ^ (z1 & x2)) & 1


def pauli_index(n: int, x_bits: int, z_bits: int) -> int:
    return (x_bits << n) | z_bits


def index_bits(n: int, index: int) -> tuple[int, int]:
    return index >> n, index & ((1 << n) - 1)


@lru_cache(maxsize=None)
def basis_bits(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(x_bits, z_bits)`` arrays for every basis index in xz-lex order."""
    idx = np.arange(4**n, dtype=np.int64)
    x = idx >> n
    z = idx & ((1 << n) - 1)
    x.setflags(write=False)
    z.setflags(write=False)
    return x, z


def basis_label(n: int, index: int) -> str:
    x, z = index_bits(n, index)
    return "".join(_LETTERS[((x >> (n - 1 - j)) & 1, (z >> (n - 1 - j)) & 1)] for j in range(n))


def label_index(label: str) -> int:
    """Basis index of an unsigned label such as ``"XZ"``."""
    p = PauliString.from_label(label)
    return p.index


@dataclass(frozen=True)
class PauliString:
    """Phased ``n``-qubit Pauli operator ``i**phase * P(x_bits, z_bits)``."""

    n: int
    x_bits: int
    z_bits: int
    phase: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("PauliString needs n >= 1")
        limit = 1 << self.n
        if not (0 <= self.x_bits < limit and 0 <= self.z_bits < limit):
            raise ValueError(f"bit masks out of range for n={self.n}")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse labels like ``"XZ"``, ``"-YI"`` or ``"+iZ"``."""
        phase = 0
        body = label.strip()
        for prefix, k in (("+i", 1), ("-i", 3), ("i", 1), ("+", 0), ("-", 2)):
            if body.startswith(prefix) and len(body) > len(prefix):
                phase = k
                body = body[len(prefix):]
                break
        n = len(body)
        x = z = 0
        for j, ch in enumerate(body.upper()):
            if ch not in _BITS:
                raise ValueError(f"bad Pauli label {label!r}")
            xb, zb = _BITS[ch]
            x |= xb << (n - 1 - j)
            z |= zb << (n - 1 - j)
        return cls(n, x, z, phase)

    @classmethod
    def from_index(cls, n: int, index: int, phase: int = 0) -> "PauliString":
        x, z = index_bits(n, index)
        return cls(n, x, z, phase)

    @property
    def index(self) -> int:
        return pauli_index(self.n, self.x_bits, self.z_bits)

    @property
    def coefficient(self) -> complex:
        return (1, 1j, -1, -1j)[self.phase]

    @property
    def weight(self) -> int:
        return popcount(self.x_bits | self.z_bits)

    @property
    def is_hermitian(self) -> bool:
        return self.phase in (0, 2)

    @property
    def sign(self) -> int:
        if not self.is_hermitian:
            raise ValueError("non-Hermitian Pauli has no real sign")
        return 1 if self.phase == 0 else -1

    @property
    def support(self) -> int:
        return self.x_bits | self.z_bits

    def unsigned(self) -> "PauliString":
        return PauliString(self.n, self.x_bits, self.z_bits)

    def commutes(self, other: "PauliString") -> bool:
        return symplectic_inner(self.x_bits, self.z_bits, other.x_bits, other.z_bits) == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def __neg__(self) -> "PauliString":
        return PauliString(self.n, self.x_bits, self.z_bits, self.phase + 2)

    @property
    def label(self) -> str:
        body = basis_label(self.n, self.index)
        prefix = _PHASE_PREFIX[self.phase]
        return body if prefix == "+" else prefix + body

    def __str__(self) -> str:
        return self.label

    def to_matrix(self) -> np.ndarray:
        return self.coefficient * pauli_matrix(self.n, self.index)

    def to_json(self) -> dict:
        d = {"x_bits": self.x_bits, "z_bits": self.z_bits}
        if self.phase:
            d["phase"] = self.phase
        return d

    @classmethod
    def from_json(cls, n: int, d: dict) -> "PauliString":
        return cls(n, int(d["x_bits"]), int(d["z_bits"]), int(d.get("phase", 0)))


def pauli_mul(p: PauliString, q: PauliString) -> PauliString:
    """Group product ``p q`` including the phase."""
    if p.n != q.n:
        raise ValueError(f"dimension mismatch: {p.n} vs {q.n} qubits")
    g = product_phase(p.n, p.x_bits, p.z_bits, q.x_bits, q.z_bits)
    return PauliString(p.n, p.x_bits ^ q.x_bits, p.z_bits ^ q.z_bits, p.phase + q.phase + g)


_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(n: int, index: int) -> np.ndarray:
    """Unnormalized Hermitian Pauli matrix for a basis index."""
    out = np.ones((1, 1), dtype=complex)
    for ch in basis_label(n, index):
        out = np.kron(out, _SINGLE[ch])
    return out


@lru_cache(maxsize=None)
def normalized_basis(n: int) -> np.ndarray:
    """Stack of ``4**n`` Hilbert-Schmidt normalized Pauli matrices."""
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense basis limited to n <= {MAX_DENSE_QUBITS}")
    d = 2**n
    basis = np.empty((4**n, d, d), dtype=complex)
    for k in range(4**n):
        basis[k] = pauli_matrix(n, k) / np.sqrt(d)
    basis.setflags(write=False)
    return basis


def all_paulis(n: int, include_identity: bool = False) -> list[PauliString]:
    start = 0 if include_identity else 1
    return [PauliString.from_index(n, k) for k in range(start, 4**n)]
