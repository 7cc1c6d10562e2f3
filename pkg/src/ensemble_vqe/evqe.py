"""Equi-weighted three-state ensemble VQE with spin penalty or spin constraint."""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging

import numpy as np
from scipy.optimize import minimize

from . import INITIAL_ONV, MODEL_ONVS
from .ansatz import Ansatz, build_guccsd_pool
from .qubits import PauliSum, jordan_wigner, jw_s2, pauli_sum_matrix
from .secondq import MOIntegrals

log = logging.getLogger(__name__)

MAX_ITER = 500
F_TOL = 1e-10
# gradient norm that must be met for a run to count as converged
G_FLAG = 1e-6


@dataclass(frozen=True)
class SpinMode:
    """``kind='penalty'`` uses ``weight``; ``kind='constrained'`` uses ``epsilon``."""

    kind: str = "penalty"
    weight: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("penalty", "constrained"):
            raise ValueError(f"unknown spin mode {self.kind!r}")
        if self.weight < 0 or self.epsilon <= 0:
            raise ValueError("penalty weight must be >= 0 and epsilon > 0")


class EnsembleProblem:
    """Operators, model states and ansatz for one geometry."""

    def __init__(
        self,
        hamiltonian: PauliSum,
        s2: PauliSum,
        model_onvs=MODEL_ONVS,
        pool=None,
        repetitions: int = 2,
        spin_targets=(0.5, 0.5, 0.5),
        mode: SpinMode | None = None,
    ):
        if len(set(model_onvs)) != len(model_onvs):
            raise ValueError("model ONVs must be distinct")
        n = hamiltonian.n_qubits
        half = n // 2
        for b in model_onvs:
            if len(b) != n:
                raise ValueError(f"ONV {b} does not fit {n} qubits")
            if b[:half].count("1") - b[half:].count("1") != 1:
                raise ValueError(f"ONV {b} does not have M_S = +1/2")
        self.hamiltonian = hamiltonian
        self.s2 = s2
        self.model_onvs = tuple(model_onvs)
        self.pool = pool if pool is not None else build_guccsd_pool(half)
        self.ansatz = Ansatz(self.pool, repetitions)
        self.spin_targets = np.asarray(spin_targets, dtype=float)
        self.mode = mode or SpinMode()
        self.H = pauli_sum_matrix(hamiltonian).real
        self.S2 = pauli_sum_matrix(s2).real
        self.initial_states = np.zeros((len(model_onvs), 1 << n))
        for k, b in enumerate(model_onvs):
            self.initial_states[k, int(b, 2)] = 1.0

    @classmethod
    def from_integrals(cls, mi: MOIntegrals, **kw) -> EnsembleProblem:
        return cls(jordan_wigner(mi), jw_s2(mi.n_orb), **kw)

    @property
    def n_params(self) -> int:
        return self.ansatz.n_params

    def states(self, t) -> np.ndarray:
        return self.ansatz.apply(self.initial_states, t)

    # objective pieces on output states: (value, d value / d states)
    def _energy(self, s):
        Hs = s @ self.H
        return float(np.einsum("kj,kj->", Hs, s)), 2 * Hs

    def _spin(self, s):
        Ss = s @ self.S2
        target = self.spin_targets * (self.spin_targets + 1)
        dev = np.einsum("kj,kj->k", Ss, s) - target
        return float(np.abs(dev).sum()), 2 * np.sign(dev)[:, None] * Ss


def diagonal_energies(problem: EnsembleProblem, t) -> np.ndarray:
    s = problem.states(t)
    return np.einsum("kj,ij,ki->k", s, problem.H, s)


def spin_expectations(problem: EnsembleProblem, t) -> np.ndarray:
    s = problem.states(t)
    return np.einsum("kj,ij,ki->k", s, problem.S2, s)


def ensemble_energy(problem: EnsembleProblem, t) -> float:
    return problem._energy(problem.states(t))[0]


def spin_deviation(problem: EnsembleProblem, t) -> float:
    return problem._spin(problem.states(t))[0]


def ensemble_objective(problem: EnsembleProblem, t, spin_weight: float | None = None) -> tuple[float, np.ndarray]:
    """Ensemble energy plus ``spin_weight`` times the spin deviation, with its analytic gradient.

    ``spin_weight`` defaults to the penalty weight in penalty mode and to 0 otherwise.
    """
    if spin_weight is None:
        spin_weight = problem.mode.weight if problem.mode.kind == "penalty" else 0.0
    t = np.asarray(t, dtype=float)
    out = problem.states(t)
    e, de = problem._energy(out)
    s, ds = problem._spin(out)
    return e + spin_weight * s, problem.ansatz.pullback(out, de + spin_weight * ds, t)


def subspace_hamiltonian(problem: EnsembleProblem, t) -> np.ndarray:
    """H-breve: matrix of H between the three optimized states."""
    s = problem.states(t)
    M = s @ problem.H @ s.T
    return 0.5 * (M + M.T)


@dataclass
class EnsembleResult:
    t_star: np.ndarray
    energies: np.ndarray
    ensemble_energy: float
    spin: np.ndarray
    spin_deviation: float
    trace: list = field(repr=False)
    iterations: int
    converged: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "t_star": self.t_star.tolist(),
            "energies": self.energies.tolist(),
            "ensemble_energy": self.ensemble_energy,
            "spin": self.spin.tolist(),
            "spin_deviation": self.spin_deviation,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
        }

    def to_json(self, geometry=None) -> str:
        d = self.to_dict()
        if geometry is not None:
            d["geometry"] = {"provenance": geometry.provenance, "coords_angstrom": geometry.coords.tolist()}
        return json.dumps(d, indent=2)


@dataclass(frozen=True)
class Constraint:
    """Inequality ``fun(states) <= bound``; ``fun`` returns (value, d value / d states)."""

    name: str
    fun: object
    bound: float


class _Tracker:
    """Evaluates objective pieces once per point and records accepted iterates."""

    def __init__(self, problem, constraints):
        self.problem = problem
        self.constraints = constraints
        self.trace = []
        self._last = None

    def evaluate(self, t):
        p = self.problem
        out = p.states(t)
        e, de = p._energy(out)
        s, ds = p._spin(out)
        cons = [c.fun(out) for c in self.constraints]
        self._last = (t.copy(), out, e, de, s, ds, cons)
        return self._last

    def record(self, t, objective):
        if self._last is None or not np.array_equal(self._last[0], t):
            self.evaluate(t)
        _, _, e, _, s, _, cons = self._last
        entry = {"objective": objective, "energy": e, "spin_deviation": s}
        entry.update({c.name: v for c, (v, _) in zip(self.constraints, cons)})
        self.trace.append(entry)


def _bfgs(fun, x0, tracker, max_iter, f_tol, g_tol):
    """Quasi-Newton inner solver; stops on |df| < f_tol once the gradient is small."""
    state = {"prev": None, "n": 0}

    def cb(intermediate_result):
        x, f = intermediate_result.x, intermediate_result.fun
        tracker.record(x, f)
        state["n"] += 1
        prev, state["prev"] = state["prev"], f
        if prev is not None and abs(prev - f) < f_tol and np.linalg.norm(fun(x)[1]) < g_tol:
            raise StopIteration

    res = minimize(fun, x0, jac=True, method="BFGS", callback=cb,
                   options={"maxiter": max(max_iter, 1), "gtol": 1e-12})
    return res, state["n"]


def optimize_ensemble(
    problem: EnsembleProblem,
    t0=None,
    max_iter: int = MAX_ITER,
    f_tol: float = F_TOL,
    g_tol: float = 1e-7,
    g_flag: float = G_FLAG,
    constraints: tuple[Constraint, ...] = (),
    max_outer: int = 30,
) -> EnsembleResult:
    """Minimize the ensemble energy from ``t0`` (zeros by default).

    Penalty mode adds ``weight * spin_deviation`` to the energy. Constrained
    mode turns ``spin_deviation <= epsilon`` into an inequality constraint.
    Inequality constraints (spin and any extra ``constraints``) are handled
    by an augmented Lagrangian around the quasi-Newton solver; ``max_iter``
    caps the total number of inner iterations. The inner solver stops once
    the objective changes by less than ``f_tol`` with a gradient norm below
    ``g_tol``, or when no further progress is possible. The run counts as
    converged when the final gradient norm is below ``g_flag`` and every
    constraint holds. Non-convergence is reported through ``converged``
    rather than raised.
    """
    t = np.zeros(problem.n_params) if t0 is None else np.array(t0, dtype=float)
    mode = problem.mode
    cons = list(constraints)
    if mode.kind == "constrained":
        cons.insert(0, Constraint("spin_deviation", problem._spin, mode.epsilon))
    tracker = _Tracker(problem, cons)
    tracker.record(t, np.nan)
    weight = mode.weight if mode.kind == "penalty" else 0.0

    lam = np.zeros(len(cons))
    mu = 10.0
    n_it, converged, message = 0, False, "outer loop exhausted"
    for _ in range(max_outer if cons else 1):
        def fun(x, lam=lam.copy(), mu=mu):
            _, out, e, de, s, ds, cvals = tracker.evaluate(x)
            val, cot = e + weight * s, de + weight * ds
            for k, (c, (v, dv)) in enumerate(zip(cons, cvals)):
                z = max(0.0, lam[k] + mu * (v - c.bound))
                val += (z * z - lam[k] ** 2) / (2 * mu)
                cot = cot + z * dv
            return val, problem.ansatz.pullback(out, cot, x)

        res, k = _bfgs(fun, t, tracker, max_iter - n_it, f_tol, g_tol)
        t, n_it = res.x, n_it + k
        gnorm = float(np.linalg.norm(fun(t)[1]))
        cvals = [c.fun(problem.states(t))[0] for c in cons]
        feasible = all(v <= c.bound for c, v in zip(cons, cvals))
        lam_new = np.array([max(0.0, l + mu * (v - c.bound)) for l, c, v in zip(lam, cons, cvals)])
        if feasible and gnorm < g_flag and np.all(np.abs(lam_new - lam) < 1e-10):
            converged = True
            message = "converged" if not cons else f"feasible, multipliers {np.round(lam_new, 12).tolist()}"
            break
        message = f"{res.message}; gradient norm {gnorm:.2e}"
        lam = lam_new
        if not feasible:
            mu = min(mu * 10, 1e12)
        if n_it >= max_iter:
            break

    energies = diagonal_energies(problem, t)
    spin = spin_expectations(problem, t)
    if n_it >= max_iter:
        converged, message = False, "iteration cap reached"
    log.debug("ensemble optimization: %d iterations, converged=%s", n_it, converged)
    return EnsembleResult(
        t_star=t,
        energies=energies,
        ensemble_energy=float(energies.sum()),
        spin=spin,
        spin_deviation=float(np.abs(spin - problem.spin_targets * (problem.spin_targets + 1)).sum()),
        trace=tracker.trace,
        iterations=n_it,
        converged=bool(converged),
        message=message,
    )
