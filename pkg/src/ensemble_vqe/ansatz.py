"""Trotterized generalized UCCSD ansatz with exact adjoint gradients.

Every pool generator ``G`` is a real antisymmetric matrix on the qubit
register with ``G^3 = -G``. It pairs basis states as ``G|i> = s|j>``,
``G|j> = -s|i>`` and annihilates the rest, so ``exp(t G)`` is a set of
independent plane rotations. The pair tables are read off the
Jordan-Wigner image of each generator.

Application order: repetition-major, and inside a repetition the pool order
(singles, then doubles, each lexicographic). Parameter ``rep * len(pool) + k``
drives generator ``k`` in repetition ``rep``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numba
import numpy as np

from .qubits import PauliSum, StateVector, jw_fermion_terms, pauli_sum_matrix


@dataclass(frozen=True)
class Generator:
    """``kind`` is 'single' or 'double'.

    Singles ``(p, q)`` are spatial indices with p > q and stand for the
    spin-complemented E_pq - E_qp. Doubles ``(p, q, r, s)`` are spin-orbital
    indices for a+_p a+_q a_s a_r - h.c. with p < q, r < s.
    """

    kind: str
    indices: tuple[int, ...]
    pauli: PauliSum = field(repr=False, compare=False)
    # one (n_pairs, 3) int table per commuting elementary factor
    pairs: tuple[np.ndarray, ...] = field(repr=False, compare=False)

    def matrix(self) -> np.ndarray:
        return pauli_sum_matrix(self.pauli).real


def _fermion_terms(kind: str, idx: tuple[int, ...], n_spatial: int):
    if kind == "single":
        p, q = idx
        out = []
        for s in (0, n_spatial):
            out.append([(1.0, [(p + s, True), (q + s, False)]), (-1.0, [(q + s, True), (p + s, False)])])
        return out
    p, q, r, s = idx
    return [[(1.0, [(p, True), (q, True), (s, False), (r, False)]),
             (-1.0, [(r, True), (s, True), (q, False), (p, False)])]]


def _pairs_from_matrix(G: np.ndarray) -> np.ndarray:
    if not np.allclose(G, -G.T, atol=1e-12):
        raise ValueError("generator is not antisymmetric")
    rows = []
    cols, = np.nonzero(np.any(np.abs(G) > 1e-12, axis=0))
    for i in cols:
        (js,) = np.nonzero(np.abs(G[:, i]) > 1e-12)
        if len(js) != 1 or abs(abs(G[js[0], i]) - 1.0) > 1e-12:
            raise ValueError("generator does not pair basis states")
        j = js[0]
        if i < j:
            rows.append((i, j, int(round(G[j, i]))))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _make(kind: str, idx, n_spatial: int) -> Generator:
    n = 2 * n_spatial
    factors = [jw_fermion_terms(t, n) for t in _fermion_terms(kind, idx, n_spatial)]
    pauli = factors[0]
    for f in factors[1:]:
        pauli = pauli + f
    pauli = PauliSum(n, {k: c.real for k, c in pauli.xz_terms.items()})
    pairs = tuple(_pairs_from_matrix(pauli_sum_matrix(f).real) for f in factors)
    return Generator(kind, tuple(idx), pauli, pairs)


def _spin(q: int, n_spatial: int) -> int:
    return 0 if q < n_spatial else 1


def double_index_sets(n_spatial: int, overlapping: bool = False) -> list[tuple[int, int, int, int]]:
    """M_S-conserving spin-orbital doubles, one per +/- pair.

    By default the created and annihilated pairs are disjoint. With
    ``overlapping=True`` pairs sharing one index (number-conditioned
    singles) are included too.
    """
    n = 2 * n_spatial
    pairs = list(combinations(range(n), 2))
    out = []
    for a, (p, q) in enumerate(pairs):
        for r, s in pairs[a + 1:]:
            if {p, q} & {r, s} and not overlapping:
                continue
            if _spin(p, n_spatial) + _spin(q, n_spatial) != _spin(r, n_spatial) + _spin(s, n_spatial):
                continue
            out.append((p, q, r, s))
    return out


def build_guccsd_pool(n_spatial: int, overlapping: bool = False) -> list[Generator]:
    """Spin-complemented singles (p > q), then doubles, each lexicographic."""
    if n_spatial < 1:
        raise ValueError("need at least one spatial orbital")
    singles = [_make("single", (p, q), n_spatial) for p in range(n_spatial) for q in range(p)]
    singles.sort(key=lambda g: g.indices)
    doubles = [_make("double", idx, n_spatial) for idx in double_index_sets(n_spatial, overlapping)]
    return singles + doubles


def dump_pool(pool: Sequence[Generator]) -> str:
    chunks = []
    for k, g in enumerate(pool):
        chunks.append(f"# {k} {g.kind} {' '.join(map(str, g.indices))}\n{g.pauli.to_text()}")
    return "".join(chunks)


# --- compiled kernels ----------------------------------------------------

@numba.njit(cache=True)
def _rotate(psi, pairs, lo, hi, c, s_):
    for k in range(lo, hi):
        i = pairs[k, 0]
        j = pairs[k, 1]
        s = pairs[k, 2]
        for m in range(psi.shape[0]):
            vi = psi[m, i]
            vj = psi[m, j]
            psi[m, i] = c * vi - s * s_ * vj
            psi[m, j] = c * vj + s * s_ * vi


@numba.njit(cache=True)
def _forward(psi, t, op_param, op_start, pairs):
    for op in range(op_param.shape[0]):
        a = t[op_param[op]]
        _rotate(psi, pairs, op_start[op], op_start[op + 1], np.cos(a), np.sin(a))


@numba.njit(cache=True)
def _adjoint(psi, lam, t, op_param, op_start, pairs, grad):
    for op in range(op_param.shape[0] - 1, -1, -1):
        acc = 0.0
        for k in range(op_start[op], op_start[op + 1]):
            i = pairs[k, 0]
            j = pairs[k, 1]
            s = pairs[k, 2]
            for m in range(psi.shape[0]):
                # lam . G psi with G|i> = s|j>, G|j> = -s|i>
                acc += s * (lam[m, j] * psi[m, i] - lam[m, i] * psi[m, j])
        grad[op_param[op]] += acc
        a = t[op_param[op]]
        c, sn = np.cos(a), -np.sin(a)
        _rotate(psi, pairs, op_start[op], op_start[op + 1], c, sn)
        _rotate(lam, pairs, op_start[op], op_start[op + 1], c, sn)


class Ansatz:
    """Compiled application of the pool with ``repetitions`` independent copies."""

    def __init__(self, pool: Sequence[Generator], repetitions: int = 2):
        if repetitions < 1:
            raise ValueError("repetitions must be positive")
        self.pool = list(pool)
        self.repetitions = repetitions
        op_param, starts, tables = [], [0], []
        for rep in range(repetitions):
            for k, g in enumerate(self.pool):
                for tab in g.pairs:
                    op_param.append(rep * len(self.pool) + k)
                    tables.append(tab)
                    starts.append(starts[-1] + len(tab))
        self._op_param = np.array(op_param, dtype=np.int64)
        self._op_start = np.array(starts, dtype=np.int64)
        self._pairs = np.concatenate(tables) if tables else np.zeros((0, 3), dtype=np.int64)

    @property
    def n_params(self) -> int:
        return len(self.pool) * self.repetitions

    def _check(self, t) -> np.ndarray:
        t = np.ascontiguousarray(t, dtype=float)
        if t.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite ansatz parameters")
        return t

    def apply(self, states: np.ndarray, t) -> np.ndarray:
        """U(t) applied to each row of a real ``(n_states, 2^N)`` array."""
        t = self._check(t)
        psi = np.array(states, dtype=float, ndmin=2, order="C")
        _forward(psi, t, self._op_param, self._op_start, self._pairs)
        return psi

    def pullback(self, out_states: np.ndarray, cotangent: np.ndarray, t) -> np.ndarray:
        """Gradient of f given output states U(t)psi0 and df/d(output states)."""
        t = self._check(t)
        psi = np.array(out_states, dtype=float, ndmin=2, order="C")
        lam = np.array(cotangent, dtype=float, ndmin=2, order="C")
        if lam.shape != psi.shape:
            raise ValueError("cotangent shape does not match the states")
        grad = np.zeros(self.n_params)
        _adjoint(psi, lam, t, self._op_param, self._op_start, self._pairs, grad)
        return grad


def apply_ansatz(sv: StateVector, ansatz: Ansatz, t) -> StateVector:
    if np.any(np.abs(sv.data.imag) > 0):
        # generators are real: act on real and imaginary parts separately
        out = ansatz.apply(np.stack([sv.data.real, sv.data.imag]), t)
        return StateVector(out[0] + 1j * out[1], sv.n_qubits)
    return StateVector(ansatz.apply(sv.data.real, t)[0].astype(complex), sv.n_qubits)


StateObjective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


def objective_gradient(f: StateObjective, ansatz: Ansatz, initial_states: np.ndarray, t) -> tuple[float, np.ndarray]:
    """Value and exact gradient of ``f(U(t) psi0)``.

    ``f`` maps the stacked output states to ``(value, df/dstates)``.
    """
    out = ansatz.apply(initial_states, t)
    value, cot = f(out)
    if not np.isfinite(value) or not np.all(np.isfinite(cot)):
        raise FloatingPointError("objective is not finite")
    return float(value), ansatz.pullback(out, cot, t)


def finite_difference_gradient(fun: Callable[[np.ndarray], float], t, step: float = 1e-5) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    g = np.zeros_like(t)
    for k in range(t.size):
        e = np.zeros_like(t)
        e[k] = step
        g[k] = (fun(t + e) - fun(t - e)) / (2 * step)
    return g
