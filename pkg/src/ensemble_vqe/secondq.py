"""Second-quantized Hamiltonian in an MO basis, the ONV basis and a dense FCI oracle.

Determinants are bit patterns over ``2 * n_orb`` spin-orbitals with the alpha
block first. Spin-orbital ``q`` is bit ``n - 1 - q`` of the integer index, so
sorting integers sorts ONVs lexicographically with the alpha block most
significant. The reference phase of an ONV is that of its creation operators
applied in ascending spin-orbital order, which makes every ONV a +1 basis
state under the Jordan-Wigner mapping used in :mod:`ensemble_vqe.qubits`.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
import json
import math

import numpy as np

from .integrals import AOIntegrals
from .scf import MOBasis


@dataclass(frozen=True)
class MOIntegrals:
    h: np.ndarray
    g: np.ndarray
    e_nuc: float
    basis_kind: str = "canonical-rohf"

    def __post_init__(self):
        n = self.h.shape[0]
        if self.h.shape != (n, n) or self.g.shape != (n,) * 4:
            raise ValueError("inconsistent MO integral shapes")
        if not np.allclose(self.h, self.h.T, atol=1e-10):
            raise ValueError("one-electron integrals are not symmetric")
        g = self.g
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(g, g.transpose(perm), atol=1e-10):
                raise ValueError("two-electron integrals lack 8-fold symmetry")

    @property
    def n_orb(self) -> int:
        return self.h.shape[0]


def ao_to_mo(ao: AOIntegrals, mo: MOBasis) -> MOIntegrals:
    C = np.asarray(mo.C)
    if C.shape[0] != ao.nao:
        raise ValueError(f"MO coefficients have {C.shape[0]} rows for {ao.nao} AOs")
    h = C.T @ ao.hcore @ C
    g = np.einsum("pqrs,pi,qj,rk,sl->ijkl", ao.ERI, C, C, C, C, optimize=True)
    # symmetrize away round-off so the invariants hold to machine precision
    h = 0.5 * (h + h.T)
    g = (g + g.transpose(1, 0, 2, 3) + g.transpose(0, 1, 3, 2) + g.transpose(1, 0, 3, 2)) / 4
    g = 0.5 * (g + g.transpose(2, 3, 0, 1))
    return MOIntegrals(h, g, ao.e_nuc, mo.kind)


@dataclass(frozen=True, order=True)
class Determinant:
    """ONV stored as an integer; ``n_so`` spin-orbitals, alpha block first."""

    index: int
    n_so: int

    @classmethod
    def from_bits(cls, bits: str) -> Determinant:
        return cls(int(bits, 2), len(bits))

    @classmethod
    def from_occupied(cls, occ, n_so: int) -> Determinant:
        idx = 0
        for q in occ:
            idx |= 1 << (n_so - 1 - q)
        return cls(idx, n_so)

    @property
    def bits(self) -> str:
        return format(self.index, f"0{self.n_so}b")

    @property
    def occupied(self) -> tuple[int, ...]:
        return tuple(q for q, b in enumerate(self.bits) if b == "1")

    @property
    def n_el(self) -> int:
        return bin(self.index).count("1")

    @property
    def ms(self) -> float:
        half = self.n_so // 2
        occ = self.occupied
        return 0.5 * (sum(q < half for q in occ) - sum(q >= half for q in occ))

    def __str__(self) -> str:
        return f"|{self.bits}>"


def determinant_basis(n_spatial: int, n_el: int, ms: float | None = None) -> list[Determinant]:
    """All ONVs with ``n_el`` electrons (optionally fixed M_S), ascending index order."""
    n_so = 2 * n_spatial
    if not 0 <= n_el <= n_so:
        raise ValueError(f"cannot place {n_el} electrons in {n_so} spin-orbitals")
    dets = [Determinant.from_occupied(occ, n_so) for occ in combinations(range(n_so), n_el)]
    if ms is not None:
        dets = [d for d in dets if abs(d.ms - ms) < 1e-12]
    return sorted(dets)


def _apply_ladder(occ: int, q: int, dagger: bool, n_so: int):
    """(new_occ, sign) for a_q^(dagger) acting on a bit pattern, or (None, 0)."""
    bit = 1 << (n_so - 1 - q)
    if bool(occ & bit) == dagger:
        return None, 0
    # count occupied spin-orbitals with index < q (higher bits)
    above = occ >> (n_so - q)
    sign = -1 if bin(above).count("1") & 1 else 1
    return occ ^ bit, sign


def _apply_string(occ: int, ops, n_so: int):
    """Apply ladder operators right to left; returns (occ, sign) or (None, 0)."""
    sign = 1
    for q, dag in reversed(ops):
        occ, s = _apply_ladder(occ, q, dag, n_so)
        if occ is None:
            return None, 0
        sign *= s
    return occ, sign


def _spin_orbital_tables(mi: MOIntegrals):
    n = mi.n_orb
    spin = np.repeat([0, 1], n)
    sp = np.tile(np.arange(n), 2)
    h = np.where(spin[:, None] == spin[None, :], mi.h[np.ix_(sp, sp)], 0.0)
    # <PQ|RS> = (PR|QS) with spin selection
    coul = mi.g[np.ix_(sp, sp, sp, sp)].transpose(0, 2, 1, 3)
    mask = (spin[:, None, None, None] == spin[None, None, :, None]) & (
        spin[None, :, None, None] == spin[None, None, None, :]
    )
    phys = np.where(mask, coul, 0.0)
    anti = phys - phys.transpose(0, 1, 3, 2)
    return h, anti


def slater_condon_element(di: Determinant, dj: Determinant, mi: MOIntegrals, _tables=None) -> float:
    """<di|H|dj> by the Slater-Condon rules, nuclear repulsion on the diagonal."""
    if di.n_so != dj.n_so or di.n_so != 2 * mi.n_orb:
        raise ValueError("determinant length does not match the MO basis")
    if di.n_el != dj.n_el:
        raise ValueError("determinants differ in particle number")
    h, anti = _tables if _tables is not None else _spin_orbital_tables(mi)
    occ_i, occ_j = set(di.occupied), set(dj.occupied)
    created = sorted(occ_i - occ_j)
    removed = sorted(occ_j - occ_i)
    if len(created) > 2:
        return 0.0
    if not created:
        occ = sorted(occ_j)
        e = sum(h[k, k] for k in occ)
        e += 0.5 * sum(anti[k, l, k, l] for k in occ for l in occ)
        return float(e + mi.e_nuc)
    if len(created) == 1:
        (p,), (m,) = created, removed
        _, sign = _apply_string(dj.index, [(p, True), (m, False)], dj.n_so)
        common = occ_i & occ_j
        return float(sign * (h[p, m] + sum(anti[p, k, m, k] for k in common)))
    p, q = created
    m, n = removed
    _, sign = _apply_string(dj.index, [(p, True), (q, True), (n, False), (m, False)], dj.n_so)
    return float(sign * anti[p, q, m, n])


def fci_matrix(mi: MOIntegrals, dets: list[Determinant]) -> np.ndarray:
    tables = _spin_orbital_tables(mi)
    n = len(dets)
    H = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            H[a, b] = H[b, a] = slater_condon_element(dets[a], dets[b], mi, tables)
    return H


def s2_matrix(n_spatial: int = 4, n_el: int = 3, ms: float | None = 0.5) -> np.ndarray:
    """S^2 = S- S+ + Sz (Sz + 1) over the sector determinants, via ladder operators."""
    dets = determinant_basis(n_spatial, n_el, ms)
    pos = {d.index: k for k, d in enumerate(dets)}
    n_so = 2 * n_spatial
    S = np.zeros((len(dets), len(dets)))
    for col, d in enumerate(dets):
        sz = d.ms
        S[col, col] += sz * (sz + 1)
        for p in range(n_spatial):
            for q in range(n_spatial):
                ops = [(p + n_spatial, True), (p, False), (q, True), (q + n_spatial, False)]
                occ, sign = _apply_string(d.index, ops, n_so)
                if occ is not None:
                    S[pos[occ], col] += sign
    return S


@dataclass(frozen=True)
class FCIResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    determinants: list
    s2: np.ndarray
    matrix: np.ndarray

    def to_json(self, geometry=None, n_leading: int = 4, n_roots: int = 3) -> str:
        roots = []
        for k in range(min(n_roots, len(self.eigenvalues))):
            v = self.eigenvectors[:, k]
            lead = np.argsort(-np.abs(v))[:n_leading]
            roots.append({
                "energy": float(self.eigenvalues[k]),
                "s2": float(self.s2[k]),
                "leading": [{"onv": self.determinants[i].bits, "coeff": float(v[i])} for i in lead],
            })
        geo = None
        if geometry is not None:
            geo = {"provenance": geometry.provenance, "coords_angstrom": geometry.coords.tolist()}
        return json.dumps({"geometry": geo, "eigenvalues": self.eigenvalues.tolist(), "roots": roots}, indent=2)


def _fix_vector_phases(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def fci_solve(mi: MOIntegrals, sector: tuple[int, float | None] = (3, 0.5), spin: float | None = None) -> FCIResult:
    """Dense diagonalization of a particle-number (and M_S) sector.

    Args:
        mi: MO integrals.
        sector: ``(n_el, ms)``; ``ms=None`` keeps every M_S.
        spin: when given, keep only roots with <S^2> = spin (spin + 1).
    """
    n_el, ms = sector
    dets = determinant_basis(mi.n_orb, n_el, ms)
    if not dets:
        raise ValueError(f"empty sector {sector}")
    H = fci_matrix(mi, dets)
    w, V = np.linalg.eigh(H)
    V = _fix_vector_phases(V)
    S2 = s2_matrix(mi.n_orb, n_el, ms) if ms is not None else None
    if S2 is None:
        s2 = np.full(len(w), math.nan)
    else:
        s2 = np.einsum("ik,ij,jk->k", V, S2, V)
    if spin is not None:
        if S2 is None:
            raise ValueError("spin filtering needs a fixed M_S sector")
        keep = np.abs(s2 - spin * (spin + 1)) < 1e-6
        w, V, s2 = w[keep], V[:, keep], s2[keep]
    return FCIResult(w, V, dets, s2, H)
