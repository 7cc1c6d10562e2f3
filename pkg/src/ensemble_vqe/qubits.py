"""Pauli-string algebra, Jordan-Wigner mapping and a dense state-vector emulator.

Register convention: qubit q is spin-orbital q (alpha block first), and the
leftmost character of a ket string is qubit 0. A basis index is the ket
string read as a binary number, so qubit q sits at bit n - 1 - q.

Pauli strings are stored as ``coeff * X^x Z^z`` with integer masks ``x`` and
``z`` in the same bit convention. ``X Z = -iY``, so a string with Y letters
on the qubits in ``x & z`` carries a factor ``(-i)^popcount(x & z)``
relative to its letter form.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Iterable, Sequence

import numpy as np

MAX_DENSE_QUBITS = 12
_DROP = 1e-14


def _bit(q: int, n: int) -> int:
    return 1 << (n - 1 - q)


def _popcount(v: int) -> int:
    return bin(v).count("1")


def bits_to_index(bits: str | Sequence[int]) -> int:
    s = "".join(str(int(b)) for b in bits) if not isinstance(bits, str) else bits
    if set(s) - {"0", "1"}:
        raise ValueError(f"invalid bit string {bits!r}")
    return int(s, 2) if s else 0


def index_to_bits(index: int, n: int) -> str:
    return format(index, f"0{n}b")


@dataclass(frozen=True)
class PauliString:
    letters: str
    coeff: complex = 1.0

    def __post_init__(self):
        if set(self.letters) - set("IXYZ"):
            raise ValueError(f"bad Pauli letters {self.letters!r}")
        if not np.isfinite(self.coeff):
            raise ValueError("non-finite Pauli coefficient")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    def masks(self) -> tuple[int, int, complex]:
        """(x, z, c) with this string equal to c * X^x Z^z."""
        n = len(self.letters)
        x = z = 0
        for q, ch in enumerate(self.letters):
            if ch in "XY":
                x |= _bit(q, n)
            if ch in "ZY":
                z |= _bit(q, n)
        # Y = i X Z
        return x, z, self.coeff * (1j) ** _popcount(x & z)


def _letters(x: int, z: int, n: int) -> str:
    out = []
    for q in range(n):
        b = _bit(q, n)
        out.append({(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(bool(x & b), bool(z & b))])
    return "".join(out)


class PauliSum:
    """Canonical linear combination of Pauli strings on ``n_qubits`` qubits."""

    def __init__(self, n_qubits: int, terms: dict[tuple[int, int], complex] | None = None):
        self.n_qubits = n_qubits
        self._terms: dict[tuple[int, int], complex] = {}
        for key, c in (terms or {}).items():
            self._add(key, c)
        self._prune()

    def _add(self, key, c):
        self._terms[key] = self._terms.get(key, 0.0) + c

    def _prune(self):
        self._terms = {k: v for k, v in self._terms.items() if abs(v) > _DROP}

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> PauliSum:
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def from_strings(cls, strings: Iterable[PauliString]) -> PauliSum:
        strings = list(strings)
        if not strings:
            raise ValueError("need at least one string to infer the register size")
        n = strings[0].n_qubits
        out = cls(n)
        for s in strings:
            if s.n_qubits != n:
                raise ValueError("mixed register sizes")
            x, z, c = s.masks()
            out._add((x, z), c)
        out._prune()
        return out

    @property
    def xz_terms(self) -> dict[tuple[int, int], complex]:
        return dict(self._terms)

    def terms(self) -> list[PauliString]:
        """Letter form, sorted by letters for deterministic output."""
        out = []
        for (x, z), c in self._terms.items():
            out.append(PauliString(_letters(x, z, self.n_qubits), c * (-1j) ** _popcount(x & z)))
        return sorted(out, key=lambda s: s.letters)

    def __len__(self) -> int:
        return len(self._terms)

    def __add__(self, other: PauliSum) -> PauliSum:
        self._check(other)
        out = PauliSum(self.n_qubits, self._terms)
        for k, c in other._terms.items():
            out._add(k, c)
        out._prune()
        return out

    def __sub__(self, other: PauliSum) -> PauliSum:
        return self + other * -1.0

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            self._check(other)
            acc: dict[tuple[int, int], complex] = {}
            for (x1, z1), c1 in self._terms.items():
                for (x2, z2), c2 in other._terms.items():
                    sign = -1.0 if _popcount(z1 & x2) & 1 else 1.0
                    key = (x1 ^ x2, z1 ^ z2)
                    acc[key] = acc.get(key, 0.0) + sign * c1 * c2
            return PauliSum(self.n_qubits, acc)
        return PauliSum(self.n_qubits, {k: c * other for k, c in self._terms.items()})

    __rmul__ = __mul__

    def _check(self, other):
        if other.n_qubits != self.n_qubits:
            raise ValueError("register size mismatch")

    def adjoint(self) -> PauliSum:
        # (X^x Z^z)^dagger = Z^z X^x = (-1)^{|x&z|} X^x Z^z
        return PauliSum(
            self.n_qubits,
            {(x, z): np.conj(c) * (-1.0 if _popcount(x & z) & 1 else 1.0) for (x, z), c in self._terms.items()},
        )

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return (self - self.adjoint()).norm() < tol

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self._terms.values()))

    def commutator_norm(self, other: PauliSum) -> float:
        return (self * other - other * self).norm()

    def to_text(self) -> str:
        lines = []
        for s in self.terms():
            c = complex(s.coeff)
            coeff = repr(c.real) if abs(c.imag) < _DROP else f"{c.real!r}{c.imag:+.17g}j"
            lines.append(f"{coeff} {s.letters}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PauliSum:
        strings = []
        for line in text.splitlines():
            if line.strip():
                coeff, letters = line.split()
                strings.append(PauliString(letters, complex(coeff)))
        return cls.from_strings(strings)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """op @ vec for a vector (or stack of vectors along the last axis)."""
        vec = np.asarray(vec)
        idx = np.arange(vec.shape[-1])
        out = np.zeros(vec.shape, dtype=complex)
        for (x, z), c in self._terms.items():
            parity = _parity_table(z, vec.shape[-1])
            out += c * (parity * vec)[..., idx ^ x]
        return out


_PARITY_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _parity_table(z: int, dim: int) -> np.ndarray:
    key = (z, dim)
    if key not in _PARITY_CACHE:
        idx = np.arange(dim)
        bits = np.zeros(dim, dtype=np.int64)
        m = z
        while m:
            low = m & -m
            bits ^= (idx & low) != 0
            m ^= low
        _PARITY_CACHE[key] = 1.0 - 2.0 * bits
    return _PARITY_CACHE[key]


def pauli_sum_matrix(op: PauliSum) -> np.ndarray:
    n = op.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense matrix refused for {n} > {MAX_DENSE_QUBITS} qubits")
    dim = 1 << n
    mat = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for (x, z), c in op.xz_terms.items():
        mat[cols ^ x, cols] += c * _parity_table(z, dim)
    return mat


# --- Jordan-Wigner -------------------------------------------------------

def jw_ladder(q: int, dagger: bool, n: int) -> PauliSum:
    """a_q -> Z_0..Z_{q-1} (X_q + iY_q)/2 ; a_q^dagger -> Z_0..Z_{q-1} (X_q - iY_q)/2."""
    zstring = 0
    for k in range(q):
        zstring |= _bit(k, n)
    b = _bit(q, n)
    # (X -/+ iY)/2 = (X -/+ i * iXZ)/2 = X (1 +/- Z)/2
    s = 1.0 if dagger else -1.0
    # Z_<q X_q Z_q^k : move Z_<q (no overlap with bit q) -> X^b Z^(zstring) sign +1
    return PauliSum(n, {(b, zstring): 0.5, (b, zstring | b): 0.5 * s})


def jw_fermion_terms(terms, n: int) -> PauliSum:
    """Map sum_k c_k * prod(ladder ops) to qubits; each op is (index, dagger)."""
    cache = {}
    out: dict[tuple[int, int], complex] = {}
    for coeff, ops in terms:
        if coeff == 0:
            continue
        prod = PauliSum.identity(n, coeff)
        for q, dag in ops:
            key = (q, dag)
            if key not in cache:
                cache[key] = jw_ladder(q, dag, n)
            prod = prod * cache[key]
            if len(prod) == 0:
                break
        for k, c in prod.xz_terms.items():
            out[k] = out.get(k, 0.0) + c
    return PauliSum(n, out)


def hamiltonian_fermion_terms(h: np.ndarray, g: np.ndarray, e_nuc: float = 0.0):
    """Spin-orbital ladder-operator terms of the spin-free Hamiltonian (alpha block first)."""
    norb = h.shape[0]
    terms = [(e_nuc, [])]
    for s in range(2):
        for p in range(norb):
            for q in range(norb):
                if h[p, q] != 0:
                    terms.append((h[p, q], [(p + s * norb, True), (q + s * norb, False)]))
    for p in range(norb):
        for q in range(norb):
            for r in range(norb):
                for s_ in range(norb):
                    v = g[p, q, r, s_]
                    if abs(v) < 1e-15:
                        continue
                    for sig in range(2):
                        for tau in range(2):
                            P, Q = p + sig * norb, q + sig * norb
                            R, S = r + tau * norb, s_ + tau * norb
                            if P == R or Q == S:
                                continue
                            terms.append((0.5 * v, [(P, True), (R, True), (S, False), (Q, False)]))
    return terms


def jordan_wigner(mi) -> PauliSum:
    """Qubit image of the MO Hamiltonian, nuclear repulsion included as a multiple of I."""
    n = 2 * mi.h.shape[0]
    op = jw_fermion_terms(hamiltonian_fermion_terms(mi.h, mi.g, mi.e_nuc), n)
    return PauliSum(n, {k: (c.real if abs(c.imag) < 1e-12 else c) for k, c in op.xz_terms.items()})


def s2_fermion_terms(norb: int):
    """S^2 = S- S+ + Sz (Sz + 1) as ladder-operator products."""
    terms = []
    for p in range(norb):
        for q in range(norb):
            # S- S+ = sum_pq a+_{p b} a_{p a} a+_{q a} a_{q b}
            terms.append((1.0, [(p + norb, True), (p, False), (q, True), (q + norb, False)]))
    nz = [(0.5, [(p, True), (p, False)]) for p in range(norb)]
    nz += [(-0.5, [(p + norb, True), (p + norb, False)]) for p in range(norb)]
    for c1, o1 in nz:
        terms.append((c1, o1))
        for c2, o2 in nz:
            terms.append((c1 * c2, o1 + o2))
    return terms


def jw_s2(norb: int = 4) -> PauliSum:
    op = jw_fermion_terms(s2_fermion_terms(norb), 2 * norb)
    return PauliSum(op.n_qubits, {k: c.real for k, c in op.xz_terms.items()})


def number_operator(n: int) -> PauliSum:
    return jw_fermion_terms([(1.0, [(q, True), (q, False)]) for q in range(n)], n)


def sz_operator(n: int) -> PauliSum:
    half = n // 2
    terms = [(0.5, [(q, True), (q, False)]) for q in range(half)]
    terms += [(-0.5, [(q, True), (q, False)]) for q in range(half, n)]
    return jw_fermion_terms(terms, n)


# --- state vectors and gates ---------------------------------------------

class StateVector:
    """2^n complex amplitudes; index = ket string read as a binary number."""

    def __init__(self, amplitudes, n_qubits: int | None = None):
        amps = np.array(amplitudes, dtype=complex)
        n = int(round(math.log2(amps.size))) if n_qubits is None else n_qubits
        if amps.shape != (1 << n,):
            raise ValueError("amplitude vector must have length 2**n_qubits")
        self.n_qubits = n
        self.data = amps

    def copy(self) -> StateVector:
        return StateVector(self.data.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self) -> str:
        nz = np.flatnonzero(np.abs(self.data) > 1e-12)
        parts = [f"{self.data[i]:.4g}|{index_to_bits(i, self.n_qubits)}>" for i in nz[:6]]
        return "StateVector(" + " + ".join(parts) + (" + ..." if len(nz) > 6 else "") + ")"


def prepare_onv(bits: str | Sequence[int]) -> StateVector:
    s = "".join(str(int(b)) for b in bits) if not isinstance(bits, str) else bits
    n = len(s)
    sv = StateVector(np.zeros(1 << n), n)
    sv.data[bits_to_index(s)] = 1.0
    return sv


GATE_KINDS = ("x", "z", "ry", "cx", "cry", "pauli_exp")


@dataclass(frozen=True)
class Gate:
    """One emulator gate.

    ``ry`` and ``cry`` use Ry(a) = exp(-i a Y / 2); ``pauli_exp`` applies
    exp(-i a P / 2) for the Pauli string ``pauli`` (letters over the register).
    """

    kind: str
    target: int = 0
    control: int | None = None
    angle: float = 0.0
    pauli: str | None = None


def _single_matrix(g: Gate) -> np.ndarray:
    if g.kind == "x" or g.kind == "cx":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if g.kind == "z":
        return np.diag([1.0, -1.0]).astype(complex)
    c, s = math.cos(g.angle / 2), math.sin(g.angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _check_gate(g: Gate, n: int):
    if g.kind not in GATE_KINDS:
        raise ValueError(f"unknown gate kind {g.kind!r}")
    if g.kind == "pauli_exp":
        if g.pauli is None or len(g.pauli) != n:
            raise ValueError("pauli_exp gate needs a Pauli string over the whole register")
        return
    if not 0 <= g.target < n:
        raise ValueError(f"target {g.target} outside register of {n} qubits")
    if g.kind in ("cx", "cry"):
        if g.control is None or not 0 <= g.control < n or g.control == g.target:
            raise ValueError("controlled gate needs a distinct control inside the register")


def _apply_gate(psi: np.ndarray, g: Gate, n: int) -> np.ndarray:
    if g.kind == "pauli_exp":
        p = PauliSum.from_strings([PauliString(g.pauli)])
        return math.cos(g.angle / 2) * psi - 1j * math.sin(g.angle / 2) * p.apply(psi)
    t = psi.reshape((2,) * n)
    m = _single_matrix(g)
    if g.kind in ("cx", "cry"):
        sel = [slice(None)] * n
        sel[g.control] = 1
        sub = t[tuple(sel)]
        axis = g.target if g.target < g.control else g.target - 1
        t = t.copy()
        t[tuple(sel)] = np.moveaxis(np.tensordot(m, sub, axes=([1], [axis])), 0, axis)
        return t.reshape(-1)
    return np.moveaxis(np.tensordot(m, t, axes=([1], [g.target])), 0, g.target).reshape(-1)


def apply_circuit(sv: StateVector, circuit: Sequence[Gate]) -> StateVector:
    psi = sv.data.copy()
    for g in circuit:
        _check_gate(g, sv.n_qubits)
        psi = _apply_gate(psi, g, sv.n_qubits)
    return StateVector(psi, sv.n_qubits)


def expectation(sv: StateVector, op: PauliSum, check_hermitian: bool = True) -> float:
    if check_hermitian and not op.is_hermitian():
        raise ValueError("expectation needs a Hermitian operator")
    val = np.vdot(sv.data, op.apply(sv.data))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"imaginary expectation {val.imag:.3e} for a Hermitian operator")
    return float(val.real)


def amplitude(sv: StateVector, bits) -> complex:
    if len(bits) != sv.n_qubits:
        raise ValueError("bit string length does not match the register")
    return complex(sv.data[bits_to_index(bits)])


def inner_product(a: StateVector, b: StateVector) -> complex:
    if a.n_qubits != b.n_qubits:
        raise ValueError("register size mismatch")
    return complex(np.vdot(a.data, b.data))
