"""Multi-qubit and local Clifford groups as signed Pauli permutations.

A :class:`CliffordElement` stores the images ``U X_j U^dagger`` and
``U Z_j U^dagger`` of the ``2n`` generators as signed Hermitian Pauli strings.
Global phase is dropped: only the adjoint action enters the Liouville picture.
Generator order in ``images`` is ``X_0, ..., X_{n-1}, Z_0, ..., Z_{n-1}``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iproduct
from typing import Iterable

import numpy as np

from .liouville import SuperOperator, signed_permutation_ptm
from .pauli import (
    PauliString,
    basis_bits,
    pauli_mul,
    popcount,
    product_phase_array,
    symplectic_inner,
)

MAX_ENUMERATION_QUBITS = 2
MAX_LOCAL_ENUMERATION_SUPPORT = 3


class CliffordError(ValueError):
    """Invalid tableau or unsupported Clifford operation."""


def _qubit_bit(n: int, j: int) -> int:
    return 1 << (n - 1 - j)


@dataclass(frozen=True)
class CliffordElement:
    """Clifford unitary (mod global phase) as a tableau of generator images.

    Parameters
    ----------
    n : int
        Number of qubits.
    images : tuple of (x_bits, z_bits, sign)
        Images of ``X_0..X_{n-1}, Z_0..Z_{n-1}``; ``sign`` is ``+1`` or ``-1``.
    """

    n: int
    images: tuple

    def __post_init__(self):
        imgs = tuple((int(x), int(z), int(s)) for x, z, s in self.images)
        object.__setattr__(self, "images", imgs)
        if len(imgs) != 2 * self.n:
            raise CliffordError(f"expected {2 * self.n} generator images, got {len(imgs)}")
        limit = 1 << self.n
        for x, z, s in imgs:
            if not (0 <= x < limit and 0 <= z < limit) or s not in (1, -1):
                raise CliffordError(f"invalid generator image {(x, z, s)}")
        if not self._symplectic():
            raise CliffordError("generator images violate the symplectic commutation relations")

    def _symplectic(self) -> bool:
        n = self.n
        imgs = self.images
        for a in range(2 * n):
            for b in range(a + 1, 2 * n):
                expected = 1 if b == a + n else 0
                xa, za, _ = imgs[a]
                xb, zb, _ = imgs[b]
                if symplectic_inner(xa, za, xb, zb) != expected:
                    return False
        return True

    @classmethod
    def identity(cls, n: int) -> "CliffordElement":
        xs = [(_qubit_bit(n, j), 0, 1) for j in range(n)]
        zs = [(0, _qubit_bit(n, j), 1) for j in range(n)]
        return cls(n, tuple(xs + zs))

    @property
    def key(self) -> tuple:
        return (self.n, self.images)

    def image_of_generator(self, g: int) -> PauliString:
        x, z, s = self.images[g]
        return PauliString(self.n, x, z, 0 if s == 1 else 2)

    def tables(self) -> "PermutationTables":
        return permutation_tables(self)

    def to_ptm(self) -> SuperOperator:
        return clifford_to_ptm(self)

    def is_identity(self) -> bool:
        return self == CliffordElement.identity(self.n)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "images": [{"x_bits": x, "z_bits": z, "sign": s} for x, z, s in self.images],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CliffordElement":
        return cls(int(d["n"]), tuple((im["x_bits"], im["z_bits"], im["sign"]) for im in d["images"]))


@dataclass(frozen=True)
class PermutationTables:
    """Signed-permutation action of a Clifford on the Pauli basis.

    ``perm[k], sign[k]`` give ``U tau_k U^dagger = sign[k] tau_{perm[k]}``;
    ``gather_idx, gather_sign`` describe the same map read column-wise so that
    ``(PTM v)[j] = gather_sign[j] * v[gather_idx[j]]``.
    """

    perm: np.ndarray
    sign: np.ndarray
    gather_idx: np.ndarray
    gather_sign: np.ndarray


def conjugate_pauli(c: CliffordElement, p: PauliString) -> PauliString:
    """Return ``U_c p U_c^dagger`` including its phase."""
    if c.n != p.n:
        raise CliffordError(f"dimension mismatch: Clifford on {c.n}, Pauli on {p.n} qubits")
    n = c.n
    out = PauliString(n, 0, 0, p.phase + popcount(p.x_bits & p.z_bits))
    for j in range(n):
        b = _qubit_bit(n, j)
        if p.x_bits & b:
            out = pauli_mul(out, c.image_of_generator(j))
        if p.z_bits & b:
            out = pauli_mul(out, c.image_of_generator(n + j))
    return out


def _conjugate_all(c: CliffordElement) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized images of every basis Pauli under ``c``."""
    n = c.n
    xs, zs = basis_bits(n)
    rx = np.zeros_like(xs)
    rz = np.zeros_like(zs)
    phase = np.array([popcount(int(v)) for v in (xs & zs)], dtype=np.int64)
    for g in range(2 * n):
        j = g % n
        b = _qubit_bit(n, j)
        sel = ((xs if g < n else zs) & b) != 0
        gx, gz, gs = c.images[g]
        ph = product_phase_array(n, rx, rz, gx, gz) + (0 if gs == 1 else 2)
        phase = np.where(sel, phase + ph, phase)
        rx = np.where(sel, rx ^ gx, rx)
        rz = np.where(sel, rz ^ gz, rz)
    phase %= 4
    if np.any(phase % 2):
        raise CliffordError("conjugation produced a non-Hermitian image")
    perm = (rx << n) | rz
    sign = np.where(phase == 0, 1, -1).astype(np.int8)
    return perm, sign


_TABLE_CACHE: dict = {}
_TABLE_CACHE_LIMIT = 200_000


def permutation_tables(c: CliffordElement) -> PermutationTables:
    hit = _TABLE_CACHE.get(c.key)
    if hit is not None:
        return hit
    perm, sign = _conjugate_all(c)
    gidx = np.empty_like(perm)
    gidx[perm] = np.arange(len(perm))
    gsign = np.empty_like(sign)
    gsign[perm] = sign
    for a in (perm, sign, gidx, gsign):
        a.setflags(write=False)
    t = PermutationTables(perm, sign, gidx, gsign)
    if len(_TABLE_CACHE) < _TABLE_CACHE_LIMIT:
        _TABLE_CACHE[c.key] = t
    return t


def clifford_to_ptm(c: CliffordElement) -> SuperOperator:
    t = permutation_tables(c)
    return SuperOperator(c.n, signed_permutation_ptm(t.perm, t.sign))


def compose_clifford(c1: CliffordElement, c2: CliffordElement) -> CliffordElement:
    """``c1 o c2``: apply ``c2`` first, so ``ptm(c1 o c2) = ptm(c1) @ ptm(c2)``."""
    if c1.n != c2.n:
        raise CliffordError("cannot compose Cliffords on different qubit counts")
    imgs = []
    for g in range(2 * c1.n):
        q = conjugate_pauli(c1, c2.image_of_generator(g))
        imgs.append((q.x_bits, q.z_bits, q.sign))
    return CliffordElement(c1.n, tuple(imgs))


def invert(c: CliffordElement) -> CliffordElement:
    """Inverse tableau via the symplectic inverse plus sign correction."""
    n = c.n
    imgs = []
    for g in range(2 * n):
        gen_x = _qubit_bit(n, g) if g < n else 0
        gen_z = _qubit_bit(n, g - n) if g >= n else 0
        # Preimage bits from symplectic duality: <img(X_j), img(Z_k)> = delta_jk.
        ax = az = 0
        for j in range(n):
            xj, zj, _ = c.images[j]
            xz, zz, _ = c.images[n + j]
            if symplectic_inner(gen_x, gen_z, xz, zz):
                ax |= _qubit_bit(n, j)
            if symplectic_inner(gen_x, gen_z, xj, zj):
                az |= _qubit_bit(n, j)
        img = conjugate_pauli(c, PauliString(n, ax, az))
        if (img.x_bits, img.z_bits) != (gen_x, gen_z):
            raise CliffordError("tableau is not invertible")
        imgs.append((ax, az, img.sign))
    return CliffordElement(n, tuple(imgs))


# -- sampling -------------------------------------------------------------------------

def _symp(a: int, b: int, n: int) -> int:
    mask = (1 << n) - 1
    return popcount(((a >> n) & b & mask) ^ (a & mask & (b >> n))) & 1


def _random_combination(basis: list[int], coeffs: int) -> int:
    v = 0
    for i, b in enumerate(basis):
        if (coeffs >> i) & 1:
            v ^= b
    return v


def _gf2_basis(vectors: Iterable[int]) -> list[int]:
    """Independent subset spanning the same GF(2) space."""
    pivots: dict[int, int] = {}
    out = []
    for v in vectors:
        r = v
        while r:
            top = r.bit_length() - 1
            if top in pivots:
                r ^= pivots[top]
            else:
                pivots[top] = r
                out.append(v)
                break
    return out


def sample_symplectic(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform symplectic basis ``[(v_0, w_0), ...]`` as packed ``(x << n) | z`` ints."""
    basis = [1 << k for k in range(2 * n)]
    pairs = []
    for _ in range(n):
        size = len(basis)
        coeffs = int(rng.integers(1, 1 << size))
        v = _random_combination(basis, coeffs)
        r = _random_combination(basis, int(rng.integers(0, 1 << size)))
        if not _symp(v, r, n):
            u = next(b for b in basis if _symp(v, b, n))
            r ^= u
        w = r
        pairs.append((v, w))
        reduced = []
        for b in basis:
            bb = b
            if _symp(b, w, n):
                bb ^= v
            if _symp(b, v, n):
                bb ^= w
            reduced.append(bb)
        basis = _gf2_basis(x for x in reduced if x)
    return pairs


def sample_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    """Uniformly random ``n``-qubit Clifford (modulo global phase)."""
    if n < 1:
        raise CliffordError("n must be >= 1")
    pairs = sample_symplectic(n, rng)
    signs = rng.integers(0, 2, size=2 * n)
    mask = (1 << n) - 1
    xs = []
    zs = []
    for j, (v, w) in enumerate(pairs):
        xs.append((v >> n, v & mask, 1 - 2 * int(signs[j])))
        zs.append((w >> n, w & mask, 1 - 2 * int(signs[n + j])))
    return CliffordElement(n, tuple(xs + zs))


# -- standard gates -----------------------------------------------------------------

def _from_map(n: int, overrides: dict) -> CliffordElement:
    base = list(CliffordElement.identity(n).images)
    for g, img in overrides.items():
        base[g] = img
    return CliffordElement(n, tuple(base))


def hadamard(n: int, q: int) -> CliffordElement:
    b = _qubit_bit(n, q)
    return _from_map(n, {q: (0, b, 1), n + q: (b, 0, 1)})


def phase_gate(n: int, q: int) -> CliffordElement:
    """``S = diag(1, i)``: ``X -> Y``, ``Z -> Z``."""
    b = _qubit_bit(n, q)
    return _from_map(n, {q: (b, b, 1)})


def cnot(n: int, control: int, target: int) -> CliffordElement:
    if control == target:
        raise CliffordError("control and target must differ")
    bc, bt = _qubit_bit(n, control), _qubit_bit(n, target)
    return _from_map(n, {control: (bc | bt, 0, 1), n + target: (0, bc | bt, 1)})


def pauli_gate(p: PauliString) -> CliffordElement:
    """Conjugation by a Pauli: flips signs of anticommuting generators."""
    n = p.n
    imgs = []
    for g in range(2 * n):
        j = g % n
        b = _qubit_bit(n, j)
        gx, gz = (b, 0) if g < n else (0, b)
        s = -1 if symplectic_inner(p.x_bits, p.z_bits, gx, gz) else 1
        imgs.append((gx, gz, s))
    return CliffordElement(n, tuple(imgs))


@lru_cache(maxsize=None)
def enumerate_cliffords(n: int) -> tuple[CliffordElement, ...]:
    """All ``|C_n / U(1)|`` elements by breadth-first search (24 for n=1, 11520 for n=2)."""
    if not 1 <= n <= MAX_ENUMERATION_QUBITS:
        raise CliffordError(f"enumeration supported for n <= {MAX_ENUMERATION_QUBITS}")
    gens = [hadamard(n, q) for q in range(n)] + [phase_gate(n, q) for q in range(n)]
    gens += [cnot(n, a, b) for a in range(n) for b in range(n) if a != b]
    start = CliffordElement.identity(n)
    seen = {start.key: start}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for g in gens:
            nxt = compose_clifford(g, c)
            if nxt.key not in seen:
                seen[nxt.key] = nxt
                queue.append(nxt)
    return tuple(sorted(seen.values(), key=lambda c: c.images))


# -- single-qubit canonical table and local Cliffords -----------------------------------

# Axis images (of X, Y, Z) in lexicographic order; Y's image follows from Y = iXZ.
_AXIS_PERMS = ("XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX")
_SIGN_PATTERNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))  # (sign of X image, sign of Z image)
_AXIS_BITS = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


@lru_cache(maxsize=None)
def single_qubit_table() -> tuple[CliffordElement, ...]:
    """Canonical ordering of the 24 single-qubit Cliffords.

    Index ``4 * a + s`` selects axis permutation ``_AXIS_PERMS[a]`` (the
    images of ``X, Y, Z`` up to sign) and sign pattern ``_SIGN_PATTERNS[s]``
    for the images of ``X`` and ``Z``.  Index 0 is the identity.
    """
    table = []
    for axes in _AXIS_PERMS:
        for sx, sz in _SIGN_PATTERNS:
            xb = _AXIS_BITS[axes[0]]
            zb = _AXIS_BITS[axes[2]]
            table.append(CliffordElement(1, ((xb[0], xb[1], sx), (zb[0], zb[1], sz))))
    return tuple(table)


@lru_cache(maxsize=None)
def single_qubit_tables() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stacked ``(perm, sign, gather_idx, gather_sign)`` arrays of shape ``(24, 4)``."""
    ts = [permutation_tables(c) for c in single_qubit_table()]
    out = tuple(np.stack([getattr(t, f) for t in ts]) for f in ("perm", "sign", "gather_idx", "gather_sign"))
    for a in out:
        a.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def single_qubit_inverse_index() -> np.ndarray:
    table = single_qubit_table()
    lookup = {c.key: i for i, c in enumerate(table)}
    inv = np.array([lookup[invert(c).key] for c in table])
    inv.setflags(write=False)
    return inv


@dataclass(frozen=True)
class LocalCliffordElement:
    """Tensor product of single-qubit Cliffords, one canonical index per qubit."""

    n: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) != self.n or any(not 0 <= i < 24 for i in idx):
            raise CliffordError(f"need {self.n} indices in 0..23, got {idx}")

    def to_clifford(self) -> CliffordElement:
        table = single_qubit_table()
        n = self.n
        imgs = [None] * (2 * n)
        for j, i in enumerate(self.indices):
            (xx, xz, xs), (zx, zz, zs) = table[i].images
            b = _qubit_bit(n, j)
            imgs[j] = (b if xx else 0, b if xz else 0, xs)
            imgs[n + j] = (b if zx else 0, b if zz else 0, zs)
        return CliffordElement(n, tuple(imgs))

    def to_ptm(self) -> SuperOperator:
        return clifford_to_ptm(self.to_clifford())

    def inverse(self) -> "LocalCliffordElement":
        inv = single_qubit_inverse_index()
        return LocalCliffordElement(self.n, tuple(int(inv[i]) for i in self.indices))


def sample_local_clifford(n: int, rng: np.random.Generator) -> LocalCliffordElement:
    return LocalCliffordElement(n, tuple(int(i) for i in rng.integers(0, 24, size=n)))


def enumerate_local_cliffords(n: int, support: int | str) -> list[LocalCliffordElement]:
    """All local Cliffords acting as identity outside ``support`` (``24**|support|`` elements)."""
    if isinstance(support, str):
        support = int(support, 2)
    qubits = [j for j in range(n) if support & _qubit_bit(n, j)]
    if len(qubits) > MAX_LOCAL_ENUMERATION_SUPPORT:
        raise CliffordError(f"enumeration refused for support size {len(qubits)} > {MAX_LOCAL_ENUMERATION_SUPPORT}")
    out = []
    for combo in iproduct(range(24), repeat=len(qubits)):
        idx = [0] * n
        for q, i in zip(qubits, combo):
            idx[q] = i
        out.append(LocalCliffordElement(n, tuple(idx)))
    return out


def local_layer_tables(n: int, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gather tables for a batch of local layers.

    ``indices`` has shape ``(..., n)``; returns ``(gather_idx, gather_sign)`` of
    shape ``(..., 4**n)`` such that ``(PTM v)[j] = gather_sign[j] * v[gather_idx[j]]``.
    """
    _, _, g1, s1 = single_qubit_tables()
    indices = np.asarray(indices)
    xs, zs = basis_bits(n)
    gidx = np.zeros(indices.shape[:-1] + (4**n,), dtype=np.int64)
    gsign = np.ones(indices.shape[:-1] + (4**n,), dtype=np.int8)
    for j in range(n):
        b = n - 1 - j
        digit = 2 * ((xs >> b) & 1) + ((zs >> b) & 1)  # single-qubit xz-lex index
        src = g1[indices[..., j]][..., digit]  # (..., 4**n) source digit on qubit j
        sg = s1[indices[..., j]][..., digit]
        gidx |= ((src >> 1) << (b + n)) | ((src & 1) << b)
        gsign *= sg
    return gidx, gsign


# -- moment oracles -------------------------------------------------------------------

def second_moment_oracle(n: int) -> np.ndarray:
    """Exact ``E omega(g)^{(x)2}`` over the multi-qubit Clifford group (kron index ``i*4**n + j``)."""
    dim = 4**n
    diag = np.zeros(dim * dim)
    diag[np.arange(1, dim) * (dim + 1)] = 1.0
    out = np.outer(diag, diag) / (dim - 1)
    out[0, 0] = 1.0
    return out


def local_second_moment_oracle(n: int) -> np.ndarray:
    """Exact ``E omega(g)^{(x)2}`` over the local Clifford group."""
    dim = 4**n
    xs, zs = basis_bits(n)
    supp = xs | zs
    out = np.zeros((dim * dim, dim * dim))
    for w in range(1 << n):
        v = np.zeros(dim * dim)
        members = np.flatnonzero(supp == w)
        v[members * (dim + 1)] = 1.0
        out += np.outer(v, v) / 3 ** popcount(w)
    return out


_S3 = ((0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1))
# e, (12), (23), (13), and the two 3-cycles, written as images of tensor slots.


def weingarten_matrix(n: int) -> np.ndarray:
    """Third-order Weingarten matrix for dimension ``d = 2**n`` in the basis of :data:`_S3`."""
    d = 2**n
    if d * d == 4:
        raise CliffordError("third-order Weingarten matrix is singular for n=1")
    w = np.empty((6, 6))
    kind = ["e", "t", "t", "t", "c", "c"]
    for a in range(6):
        for b in range(6):
            if a == b:
                w[a, b] = d * d - 2
            elif kind[a] != kind[b] and "e" not in (kind[a], kind[b]):
                w[a, b] = -d
            elif "e" in (kind[a], kind[b]):
                w[a, b] = -d if "t" in (kind[a], kind[b]) else 2
            else:
                w[a, b] = 2
    return w / (d * (d * d - 1) * (d * d - 4))


def _permutation_operator_vec(n: int, perm: tuple[int, int, int]) -> np.ndarray:
    """Triple-Pauli-basis components ``tr((tau_a (x) tau_b (x) tau_c) R_perm)``.

    ``R_perm`` permutes tensor factors; for Paulis this trace factorizes into
    traces of products along the cycles of the permutation.
    """
    from .pauli import normalized_basis

    basis = normalized_basis(n)
    dim = 4**n
    if perm == (0, 1, 2):
        t = np.einsum("aii->a", basis)
        return np.einsum("a,b,c->abc", t, t, t).reshape(-1)
    cycles = _cycles(perm)
    out = np.ones((dim,) * 3, dtype=complex)
    for cyc in cycles:
        if len(cyc) == 1:
            t = np.einsum("aii->a", basis)
            shape = [1, 1, 1]
            shape[cyc[0]] = dim
            out = out * t.reshape(shape)
        elif len(cyc) == 2:
            a, b = cyc
            t2 = np.einsum("aij,bji->ab", basis, basis)
            shape = [1, 1, 1]
            shape[a] = dim
            shape[b] = dim
            out = out * (t2 if a < b else t2.T).reshape(shape)
        else:
            a, b, c = cyc
            t3 = np.einsum("aij,bjk,cki->abc", basis, basis, basis)
            # t3[a,b,c] = tr(tau_a tau_b tau_c); reorder axes to slots (0, 1, 2)
            order = np.argsort([a, b, c])
            out = out * t3.transpose(order)
    return out.reshape(-1)


def _cycles(perm: tuple[int, ...]) -> list[tuple[int, ...]]:
    seen = set()
    cycles = []
    for s in range(len(perm)):
        if s in seen:
            continue
        cyc = []
        j = s
        while j not in seen:
            seen.add(j)
            cyc.append(j)
            j = perm[j]
        cycles.append(tuple(cyc))
    return cycles


def third_moment_weingarten(n: int) -> np.ndarray:
    """Exact ``E omega(g)^{(x)3}`` (Haar third moment) from permutation operators."""
    if n != 2:
        raise CliffordError("third moment operator is provided for n=2 only")
    vecs = np.stack([_permutation_operator_vec(n, p) for p in _S3])
    w = weingarten_matrix(n)
    out = vecs.T @ w @ vecs.conj()
    return np.ascontiguousarray(out.real)
