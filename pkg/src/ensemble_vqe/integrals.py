"""AO integrals over contracted s-type Gaussians.

All closed forms follow from the Gaussian product theorem; the only special
function needed is the zeroth-order Boys function.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
import math

import numpy as np
from scipy.special import erf

from .geometry import Geometry

BOYS_SWITCH = 1e-7


@dataclass(frozen=True)
class BasisShell:
    center: np.ndarray  # Bohr
    exponents: np.ndarray
    coefficients: np.ndarray  # multiply normalized primitives; contraction normalized

    def __post_init__(self):
        if len(self.exponents) < 1 or len(self.exponents) != len(self.coefficients):
            raise ValueError("shell needs matching, non-empty exponent/coefficient lists")
        if np.any(np.asarray(self.exponents) <= 0):
            raise ValueError("exponents must be positive")


@dataclass(frozen=True)
class AOIntegrals:
    S: np.ndarray
    T: np.ndarray
    V: np.ndarray
    ERI: np.ndarray  # chemists' notation (pq|rs)
    e_nuc: float

    @property
    def hcore(self) -> np.ndarray:
        return self.T + self.V

    @property
    def nao(self) -> int:
        return self.S.shape[0]


def parse_basis(text: str) -> list[list[tuple[float, float]]]:
    """Parse the primitive list format: "exponent coefficient" lines, blank line between shells."""
    shells: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current and not raw.strip().startswith("#"):
                shells.append(current)
                current = []
            continue
        exp, coef = (float(v) for v in line.split()[:2])
        current.append((exp, coef))
    if current:
        shells.append(current)
    return shells


def load_basis(name: str = "sto-3g_h") -> list[list[tuple[float, float]]]:
    text = resources.files("ensemble_vqe.data").joinpath(f"{name}.basis").read_text()
    return parse_basis(text)


def _normalized_contraction(exps, coefs) -> np.ndarray:
    exps = np.asarray(exps, dtype=float)
    c = np.asarray(coefs, dtype=float) * (2.0 * exps / np.pi) ** 0.75
    p = exps[:, None] + exps[None, :]
    self_overlap = c @ ((np.pi / p) ** 1.5) @ c
    return c / math.sqrt(self_overlap)


def build_basis(g: Geometry, shells=None) -> list[BasisShell]:
    """Place every shell of the basis rule on every atom (minimal basis for H)."""
    return basis_on_centers(g.coords_bohr, shells)


def boys_f0(x):
    """F0(x) = int_0^1 exp(-x u^2) du; Taylor series below BOYS_SWITCH, erf form above."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("boys_f0 needs finite x >= 0")
    small = arr < BOYS_SWITCH
    safe = np.where(small, 1.0, arr)
    out = np.where(small, 1.0 - arr / 3.0 + arr * arr / 10.0, 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe)))
    return float(out) if np.ndim(x) == 0 else out


def _flatten(basis):
    centers = np.concatenate([np.repeat(b.center[None, :], len(b.exponents), axis=0) for b in basis])
    exps = np.concatenate([b.exponents for b in basis])
    coefs = np.concatenate([b.coefficients for b in basis])
    owner = np.concatenate([np.full(len(b.exponents), i) for i, b in enumerate(basis)])
    return centers, exps, coefs, owner


def _contract2(prim, coefs, owner, nbf):
    w = coefs[:, None] * coefs[None, :] * prim
    out = np.zeros((nbf, nbf))
    np.add.at(out, (owner[:, None], owner[None, :]), w)
    return out


def _check_distinct(coords):
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    if np.any(d[np.triu_indices(len(coords), 1)] < 1e-8):
        raise ValueError("degenerate geometry: coincident nuclei")
    return d


def _centers(g) -> np.ndarray:
    """Bohr coordinates of a Geometry, or an (n, 3) array already in Bohr."""
    if isinstance(g, Geometry):
        return g.coords_bohr
    return np.asarray(g, dtype=float).reshape(-1, 3)


def nuclear_repulsion(g: Geometry | np.ndarray) -> float:
    """Sum of 1/r over nucleus pairs; ``g`` is a Geometry or unit-charge centers in Bohr."""
    coords = _centers(g)
    d = _check_distinct(coords)
    iu = np.triu_indices(len(coords), 1)
    return float(np.sum(1.0 / d[iu]))


def basis_on_centers(centers_bohr, shells=None) -> list[BasisShell]:
    shells = load_basis() if shells is None else shells
    out = []
    for center in np.asarray(centers_bohr, dtype=float).reshape(-1, 3):
        for prims in shells:
            exps = np.array([p[0] for p in prims])
            coefs = np.array([p[1] for p in prims])
            out.append(BasisShell(center.copy(), exps, _normalized_contraction(exps, coefs)))
    return out


def compute_ao_integrals(g: Geometry | np.ndarray, basis: list[BasisShell] | None = None) -> AOIntegrals:
    """All AO integrals for hydrogen nuclei at ``g`` (a Geometry or centers in Bohr)."""
    coords = _centers(g)
    _check_distinct(coords)
    basis = basis_on_centers(coords) if basis is None else basis
    nbf = len(basis)
    A, a, c, owner = _flatten(basis)

    p = a[:, None] + a[None, :]
    mu = a[:, None] * a[None, :] / p
    rab2 = np.sum((A[:, None, :] - A[None, :, :]) ** 2, axis=-1)
    K = np.exp(-mu * rab2)
    P = (a[:, None, None] * A[:, None, :] + a[None, :, None] * A[None, :, :]) / p[..., None]

    s_prim = (np.pi / p) ** 1.5 * K
    t_prim = mu * (3.0 - 2.0 * mu * rab2) * s_prim
    v_prim = np.zeros_like(p)
    for C in coords:
        rpc2 = np.sum((P - C) ** 2, axis=-1)
        v_prim -= 2.0 * np.pi / p * K * boys_f0(p * rpc2)

    S = _contract2(s_prim, c, owner, nbf)
    T = _contract2(t_prim, c, owner, nbf)
    V = _contract2(v_prim, c, owner, nbf)

    # (ab|cd) over primitive quadruples, then contracted
    pp = p[:, :, None, None]
    qq = p[None, None, :, :]
    rpq2 = np.sum((P[:, :, None, None, :] - P[None, None, :, :, :]) ** 2, axis=-1)
    prim = (
        2.0 * np.pi**2.5 / (pp * qq * np.sqrt(pp + qq))
        * K[:, :, None, None] * K[None, None, :, :]
        * boys_f0(pp * qq / (pp + qq) * rpq2)
    )
    w = c[:, None, None, None] * c[None, :, None, None] * c[None, None, :, None] * c[None, None, None, :]
    eri = np.zeros((nbf,) * 4)
    idx = np.ix_(owner, owner, owner, owner)
    np.add.at(eri, tuple(np.broadcast_arrays(*idx)), w * prim)

    return AOIntegrals(S, T, V, eri, nuclear_repulsion(coords) if len(coords) > 1 else 0.0)


def cross_ao_overlap(gA: Geometry, gB: Geometry, shells=None) -> np.ndarray:
    """M[mu, nu] = <chi_mu at gA | chi_nu at gB> with the same basis rule on both."""
    ba = build_basis(gA, shells)
    bb = build_basis(gB, shells)
    A, a, ca, oa = _flatten(ba)
    B, b, cb, ob = _flatten(bb)
    p = a[:, None] + b[None, :]
    mu = a[:, None] * b[None, :] / p
    r2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    prim = ca[:, None] * cb[None, :] * (np.pi / p) ** 1.5 * np.exp(-mu * r2)
    out = np.zeros((len(ba), len(bb)))
    np.add.at(out, (oa[:, None], ob[None, :]), prim)
    return out
