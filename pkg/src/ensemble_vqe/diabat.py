"""Quasi-diabatic analysis: overlap block, descriptors d and r, and optimal diabatization.

``O[J, I] = <Phi0_J | Phi_I>`` is the block of model-ONV amplitudes in the
optimized states. With the SVD ``O = U diag(sigma) W^T`` the descriptors are
``d = ||sigma - 1||`` (fixed by the subspace) and ``r = ||U - W||`` (removable
by an in-subspace rotation). Pre-rotating the model states by ``R`` maps
``O`` to ``O R``, so the rotation ``R = W U^T = B^T`` with ``B = U W^T``
leaves the symmetric ``O_star = U diag(sigma) U^T`` and ``r = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import logging
import math

import numpy as np
from scipy.optimize import least_squares

from . import LABELS
from .evqe import Constraint, EnsembleProblem, EnsembleResult, optimize_ensemble
from .resolve import LATTICE, Angles, CircuitTarget, _minimize, rotated_model_states, rotation_xzy

log = logging.getLogger(__name__)

R_TOL = 1e-6


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubspaceOverlap:
    """``O`` (3x3) plus, when known, the complementary amplitude block ``X``."""

    O: np.ndarray
    X: np.ndarray | None = None

    @property
    def leakage(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - np.einsum("ji,ji->i", self.O, self.O), 0.0, None))

    def identity_residual(self) -> float:
        """||O^T O + X^T X - I||_F (diagonal of X^T X from leakage if X unknown)."""
        XtX = self.X.T @ self.X if self.X is not None else np.diag(self.leakage ** 2)
        return float(np.linalg.norm(self.O.T @ self.O + XtX - np.eye(len(self.O))))


@dataclass(frozen=True)
class DiabaticDecomposition:
    U: np.ndarray
    W: np.ndarray
    sigma: np.ndarray
    O_star: np.ndarray
    B: np.ndarray
    d: float
    r: float
    rank_deficient: bool = False
    improper: bool = False

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "O_star": self.O_star.tolist(),
            "Q_star": self.B.tolist(),
            "d": self.d,
            "r": self.r,
            "rank_deficient": self.rank_deficient,
            "improper": self.improper,
        }


def overlap_from_states(states: np.ndarray, model_indices) -> SubspaceOverlap:
    states = np.asarray(states)
    idx = np.asarray(model_indices)
    mask = np.ones(states.shape[1], dtype=bool)
    mask[idx] = False
    return SubspaceOverlap(states[:, idx].T.copy(), states[:, mask].T.copy())


def _model_indices(problem: EnsembleProblem) -> list[int]:
    return [int(b, 2) for b in problem.model_onvs]


def overlap_submatrix(problem: EnsembleProblem, t_star, a: Angles = Angles(), reflection: bool = False) -> SubspaceOverlap:
    states = CircuitTarget(problem, t_star, reflection).states(a.as_array())
    return overlap_from_states(states, _model_indices(problem))


def decompose(o: SubspaceOverlap | np.ndarray) -> DiabaticDecomposition:
    O = o.O if isinstance(o, SubspaceOverlap) else np.asarray(o, dtype=float)
    U, s, Vt = np.linalg.svd(O)
    W = Vt.T
    det_o = np.linalg.det(O)
    if np.linalg.det(U) < 0:
        # flipping a paired column leaves U diag(s) W^T unchanged
        U[:, -1] *= -1
        W[:, -1] *= -1
    improper = bool(np.linalg.det(W) < 0)
    B = U @ W.T
    return DiabaticDecomposition(
        U=U,
        W=W,
        sigma=s,
        O_star=U @ np.diag(s) @ U.T,
        B=B,
        d=float(np.linalg.norm(s - 1.0)),
        r=float(np.linalg.norm(U - W)),
        rank_deficient=bool(det_o <= 1e-12),
        improper=improper,
    )


def procrustes_qstar(dec: DiabaticDecomposition) -> np.ndarray:
    return dec.B


def r_squared_gradient(O: np.ndarray) -> tuple[float, np.ndarray]:
    """r^2 = ||U - W||^2 and its derivative with respect to O.

    ``r^2 = 2n - 2 tr(W^T U)``; the trace derivative follows from the
    derivative of the polar factor and is undefined where two singular
    values sum to zero. The value itself is taken from ``||U - W||^2`` to
    avoid cancellation when r is small.
    """
    dec = decompose(O)
    U, W, s = dec.U, dec.W, dec.sigma
    n = len(s)
    M = W.T @ U
    denom = s[:, None] + s[None, :]
    if np.any(denom < 1e-12):
        raise FloatingPointError("r is not differentiable at a rank-deficient overlap")
    G = (M.T - M) / denom
    d_trace = U @ G @ W.T
    return dec.r ** 2, -2.0 * d_trace


def angles_from_rotation(Q) -> tuple[Angles, bool]:
    """Angles with ``rotation_xzy(angles) @ diag(1, 1, -1 if reflection) == Q``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (3, 3) or np.linalg.norm(Q.T @ Q - np.eye(3)) > 1e-10:
        raise ValueError("input is not orthogonal")
    reflection = bool(np.linalg.det(Q) < 0)
    R = Q @ np.diag([1.0, 1.0, -1.0]) if reflection else Q
    phi = math.asin(float(np.clip(-R[0, 1], -1.0, 1.0)))
    if abs(math.cos(phi)) > 1e-8:
        theta = math.atan2(R[2, 1], R[1, 1])
        psi = math.atan2(R[0, 2], R[0, 0])
        a = Angles(theta, phi, psi)
    else:
        fit = least_squares(lambda x: (rotation_xzy(Angles.from_array(x)) - R).ravel(),
                            np.array([0.0, phi, 0.0]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        a = Angles.from_array(fit.x)
    err = np.linalg.norm(rotation_xzy(a) - R)
    if err > 1e-9:
        raise ExtractionError(f"angle reconstruction error {err:.2e}")
    return a.wrapped(), reflection


@dataclass
class DiabaticSolution:
    angles: Angles
    reflection: bool
    decomposition: DiabaticDecomposition
    initial: DiabaticDecomposition
    states: np.ndarray = field(repr=False)
    H_prime: np.ndarray
    route: str
    converged: bool

    @property
    def overlap(self) -> np.ndarray:
        return self.decomposition.U @ np.diag(self.decomposition.sigma) @ self.decomposition.W.T

    def to_dict(self) -> dict:
        return {
            "route": self.route,
            "angles": self.angles.as_array().tolist(),
            "reflection": self.reflection,
            "O_initial": (self.initial.U @ np.diag(self.initial.sigma) @ self.initial.W.T).tolist(),
            "r_initial": self.initial.r,
            "O": self.overlap.tolist(),
            **self.decomposition.to_dict(),
            "H_prime": self.H_prime.tolist(),
            "converged": self.converged,
        }


def _finish(problem, t_star, a: Angles, reflection: bool, initial, route: str) -> DiabaticSolution:
    target = CircuitTarget(problem, t_star, reflection)
    states = target.states(a.as_array())
    dec = decompose(overlap_from_states(states, _model_indices(problem)))
    H = states @ problem.H @ states.T
    return DiabaticSolution(a, reflection, dec, initial, states, 0.5 * (H + H.T), route, dec.r < R_TOL)


def _rotation_route(problem, t_star, initial) -> DiabaticSolution:
    a, reflection = angles_from_rotation(procrustes_qstar(initial).T)
    if reflection:
        log.warning("optimal in-subspace transformation is a rotoreflection")
    return _finish(problem, t_star, a, reflection, initial, "rotation")


def _descriptor_route(problem, t_star, initial) -> DiabaticSolution:
    """Minimize r^2 over the angles from measured overlaps (multi-start)."""
    idx = _model_indices(problem)
    target = CircuitTarget(problem, t_star)

    def overlap(x):
        return target.states(x)[:, idx].T

    def fun(x):
        return r_squared_gradient(overlap(x))[0]

    def grad(x):
        _, dO = r_squared_gradient(overlap(x))
        g = np.zeros(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = math.pi / 2
            # each overlap entry has frequency one in every angle
            g[k] = np.sum(dO * (overlap(x + e) - overlap(x - e)) / 2)
        return g

    best = None
    for start in [(0.0, 0.0, 0.0), *LATTICE]:
        try:
            x = _minimize(fun, grad, start)
        except FloatingPointError:
            continue
        if best is None or fun(x) < fun(best):
            best = x
        if fun(best) < 1e-14:
            break
    if best is None:
        raise ExtractionError("descriptor minimization failed from every start")
    return _finish(problem, t_star, Angles.from_array(best).wrapped(), False, initial, "descriptor")


def optimal_diabatic_states(problem: EnsembleProblem, t_star, route: str = "rotation") -> DiabaticSolution:
    """Rotate the model states so U(t*) maps them onto maximally diabatic states.

    ``route='rotation'`` uses the closed-form Procrustes rotation,
    ``route='descriptor'`` minimizes r over the angles iteratively.
    """
    initial = decompose(overlap_submatrix(problem, t_star))
    if initial.rank_deficient:
        log.warning("model subspace overlap is rank deficient (det %.2e)", np.linalg.det(initial.O_star))
    if route == "rotation":
        sol = _rotation_route(problem, t_star, initial)
    elif route == "descriptor":
        sol = _descriptor_route(problem, t_star, initial)
    else:
        raise ValueError(f"unknown diabatization route {route!r}")
    if not sol.converged:
        log.warning("%s route left r = %.2e", route, sol.decomposition.r)
    return sol


def route_agreement(a: DiabaticSolution, b: DiabaticSolution) -> float:
    """Largest entrywise difference of O_star between two solutions."""
    return float(np.abs(a.decomposition.O_star - b.decomposition.O_star).max())


def constrained_diabatic_optimize(problem: EnsembleProblem, epsilon: float = 1e-8, t0=None, **kw) -> EnsembleResult:
    """Ensemble optimization with r(t) <= epsilon as an extra inequality.

    The constraint acts on r rather than r^2: near the optimum r^2 falls
    below the resolution of an objective of the size of the energy, while
    a term linear in r stays visible.
    """
    idx = _model_indices(problem)

    def r_value(states):
        O = states[:, idx].T
        val, dO = r_squared_gradient(O)
        r = math.sqrt(val)
        cot = np.zeros_like(states)
        if r > 0:
            cot[:, idx] = dO.T / (2 * r)
        return r, cot

    return optimize_ensemble(problem, t0=t0, constraints=(Constraint("r", r_value, epsilon),), **kw)
