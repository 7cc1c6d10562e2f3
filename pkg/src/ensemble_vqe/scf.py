"""Molecular-orbital bases: canonical ROHF, Lowdin, and Procrustes-matched diabatic orbitals."""

from __future__ import annotations

from dataclasses import dataclass
import io
import logging

import numpy as np

from .integrals import AOIntegrals

log = logging.getLogger(__name__)

KINDS = ("canonical-rohf", "lowdin", "diabatic")


class SCFConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class IllMatchedReferenceError(ValueError):
    """The reference orbitals cannot be matched: the MO overlap is near singular."""


@dataclass(frozen=True)
class MOBasis:
    C: np.ndarray
    kind: str
    reference: str | None = None
    orbital_energies: np.ndarray | None = None
    energy: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown MO basis kind {self.kind!r}")

    def to_text(self, geometry_hash: str = "") -> str:
        buf = io.StringIO()
        buf.write(f"# kind: {self.kind}\n# geometry: {geometry_hash}\n")
        if self.reference:
            buf.write(f"# reference: {self.reference}\n")
        np.savetxt(buf, self.C, fmt="%.16e")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> MOBasis:
        header = {}
        for line in text.splitlines():
            if line.startswith("#") and ":" in line:
                key, val = line[1:].split(":", 1)
                header[key.strip()] = val.strip()
        C = np.loadtxt(io.StringIO(text), comments="#", ndmin=2)
        return cls(C, header.get("kind", "lowdin"), header.get("reference") or None)


def fix_phases(C: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude coefficient is positive."""
    C = np.array(C, dtype=float)
    rows = np.argmax(np.abs(C), axis=0)
    signs = np.sign(C[rows, np.arange(C.shape[1])])
    signs[signs == 0] = 1.0
    return C * signs


def _inv_sqrt(S: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    w, v = np.linalg.eigh(S)
    if w.min() < tol:
        raise np.linalg.LinAlgError(f"overlap matrix near singular (min eigenvalue {w.min():.3e})")
    return (v / np.sqrt(w)) @ v.T


def lowdin_orbitals(ao: AOIntegrals) -> MOBasis:
    return MOBasis(_inv_sqrt(ao.S), "lowdin")


def _jk(eri, D):
    J = np.einsum("pqrs,rs->pq", eri, D)
    K = np.einsum("prqs,rs->pq", eri, D)
    return J, K


class _DIIS:
    def __init__(self, size: int = 8):
        self.size = size
        self.focks: list[np.ndarray] = []
        self.errors: list[np.ndarray] = []

    def extrapolate(self, F, err):
        self.focks.append(F)
        self.errors.append(err)
        if len(self.focks) > self.size:
            self.focks.pop(0)
            self.errors.pop(0)
        n = len(self.focks)
        if n < 2:
            return F
        B = -np.ones((n + 1, n + 1))
        B[n, n] = 0.0
        for i in range(n):
            for j in range(n):
                B[i, j] = np.vdot(self.errors[i], self.errors[j])
        rhs = np.zeros(n + 1)
        rhs[n] = -1.0
        try:
            coef = np.linalg.solve(B, rhs)[:n]
        except np.linalg.LinAlgError:
            return F
        return sum(c * f for c, f in zip(coef, self.focks))


def rohf(
    ao: AOIntegrals,
    n_alpha: int = 2,
    n_beta: int = 1,
    max_iter: int = 200,
    e_tol: float = 1e-10,
    d_tol: float = 1e-8,
    diis_size: int = 8,
    damping: float = 0.3,
    damping_iters: int = 5,
) -> MOBasis:
    """Restricted open-shell HF with a single Roothaan effective Fock matrix.

    Effective Fock in the current MO basis (c = closed, o = open, v = virtual):
    diagonal blocks use Fc = (Fa + Fb) / 2, the c/o block uses Fb, the o/v block
    uses Fa and the c/v block uses Fc. Orbitals are returned in ascending
    orbital-energy order with the largest coefficient of each column positive.
    """
    nbf = ao.nao
    if not (n_alpha >= n_beta >= 0 and n_alpha + n_beta <= 2 * nbf and n_alpha <= nbf):
        raise ValueError("inconsistent electron counts")
    h = ao.hcore
    X = _inv_sqrt(ao.S)
    _, Cp = np.linalg.eigh(X.T @ h @ X)
    C = X @ Cp
    diis = _DIIS(diis_size)
    e_old, D_old, F_prev = None, None, None
    nc, no = n_beta, n_alpha - n_beta

    def fock_parts(C):
        Da = C[:, :n_alpha] @ C[:, :n_alpha].T
        Db = C[:, :n_beta] @ C[:, :n_beta].T
        J, Ka = _jk(ao.ERI, Da)
        Jb, Kb = _jk(ao.ERI, Db)
        Fa = h + J + Jb - Ka
        Fb = h + J + Jb - Kb
        e = 0.5 * (np.sum((Da + Db) * h) + np.sum(Da * Fa) + np.sum(Db * Fb)) + ao.e_nuc
        return Da, Db, Fa, Fb, e

    for it in range(1, max_iter + 1):
        Da, Db, Fa, Fb, e = fock_parts(C)
        fa, fb = C.T @ Fa @ C, C.T @ Fb @ C
        fmo = 0.5 * (fa + fb)
        c, o = slice(0, nc), slice(nc, nc + no)
        v = slice(nc + no, nbf)
        fmo[c, o], fmo[o, c] = fb[c, o], fb[o, c]
        fmo[o, v], fmo[v, o] = fa[o, v], fa[v, o]
        SC = ao.S @ C
        F = SC @ fmo @ SC.T
        D = Da + Db
        err = X.T @ (F @ D @ ao.S - ao.S @ D @ F) @ X
        if e_old is not None and abs(e - e_old) < e_tol and np.abs(D - D_old).max() < d_tol:
            eps, Cp = np.linalg.eigh(X.T @ F @ X)
            C_final = fix_phases(X @ Cp)
            log.debug("ROHF converged in %d iterations, E = %.12f", it, e)
            return MOBasis(C_final, "canonical-rohf", orbital_energies=eps, energy=e)
        if it <= damping_iters and F_prev is not None:
            F = (1.0 - damping) * F + damping * F_prev
        else:
            F = diis.extrapolate(F, err)
        F_prev = F
        e_old, D_old = e, D
        _, Cp = np.linalg.eigh(X.T @ F @ X)
        C = X @ Cp
    raise SCFConvergenceError("ROHF did not converge", float(np.abs(err).max()))


def procrustes_transform(C_ref: np.ndarray, C_cur: np.ndarray, M: np.ndarray, min_sv: float = 1e-6):
    """Orthogonal T maximizing tr(C_ref^T M C_cur T); returns (T, singular values)."""
    O_mo = C_ref.T @ M @ C_cur
    U, s, Vt = np.linalg.svd(O_mo)
    if s.min() < min_sv:
        raise IllMatchedReferenceError(f"MO overlap singular value {s.min():.3e} below {min_sv}")
    return Vt.T @ U.T, s


def diabatic_mos(C_ref: MOBasis, C_cur: MOBasis, M: np.ndarray, reference: str = "R0") -> MOBasis:
    """Rotate the current orbitals onto the reference ones (max orbital-resolved overlap).

    M is the cross AO overlap <chi(R0)|chi(R)>.
    """
    T, _ = procrustes_transform(C_ref.C, C_cur.C, M)
    return MOBasis(C_cur.C @ T, "diabatic", reference=reference)
