"""Eigenstate resolution inside the optimized three-state subspace.

The model states are pre-rotated by ``R = R_x(theta) R_z(phi) R_y(psi)``:
column ``I`` of ``R`` holds the coefficients of the rotated state
``|Phi'_I>`` on the model ONVs (A, B, C). After the common unitary U(t*)
the subspace Hamiltonian becomes ``R^T H R``. The solvers below only read
its diagonal, as a device would; off-diagonals are computed from state
inner products for verification.
"""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import logging
import math

import numpy as np
from scipy.optimize import minimize, root

from . import INITIAL_ONV, LABELS
from .qubits import Gate, StateVector, apply_circuit, prepare_onv

log = logging.getLogger(__name__)

OFFDIAG_TOL = 1e-12  # on the sum of squared off-diagonals, Ha^2
DEFAULT_WEIGHTS = (3.0, 2.0, 1.0)
LATTICE = tuple(itertools.product((-math.pi / 3, math.pi / 3), repeat=3))


def wrap_angle(x: float) -> float:
    """Representative in [-pi, pi)."""
    return float((x + math.pi) % (2 * math.pi) - math.pi)


@dataclass(frozen=True)
class Angles:
    theta: float = 0.0
    phi: float = 0.0
    psi: float = 0.0

    @classmethod
    def from_array(cls, x) -> Angles:
        return cls(*(float(v) for v in x))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.psi])

    def wrapped(self) -> Angles:
        return Angles(*(wrap_angle(v) for v in self.as_array()))


def _cross_matrix(n) -> np.ndarray:
    return np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]], dtype=float)


def rodrigues(n, alpha: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError("rotation axis must be a unit vector")
    K = _cross_matrix(n)
    return np.eye(3) + math.sin(alpha) * K + (1 - math.cos(alpha)) * (K @ K)


_AXES = np.eye(3)
_K = [_cross_matrix(v) for v in _AXES]


def _axis_rotation(axis: int, a: float) -> np.ndarray:
    """Closed form of ``rodrigues(e_axis, a)``."""
    c, s = math.cos(a), math.sin(a)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R = np.eye(3)
    R[i, i] = R[j, j] = c
    R[i, j], R[j, i] = -s, s
    return R


def rotation_xzy(a: Angles) -> np.ndarray:
    return _axis_rotation(0, a.theta) @ _axis_rotation(2, a.phi) @ _axis_rotation(1, a.psi)


def _rotation_derivatives(x) -> list[np.ndarray]:
    Rx, Rz, Ry = _axis_rotation(0, x[0]), _axis_rotation(2, x[1]), _axis_rotation(1, x[2])
    return [_K[0] @ Rx @ Rz @ Ry, Rx @ _K[2] @ Rz @ Ry, Rx @ Rz @ _K[1] @ Ry]


# --- state preparation ---------------------------------------------------

def model_rotation_circuit(label: str, a: Angles, reflection: bool = False) -> list[Gate]:
    """Gates that turn |10001000> into the rotated model state ``label``.

    Only the three alpha qubits 1, 2, 3 are touched (plus qubit 0 for the
    reflection branch of state C). ``Ry(2x)|0> = cos x|0> + sin x|1>``.
    """
    q2, q3, q4 = 1, 2, 3
    th, ph, ps = a.theta, a.phi, a.psi
    if label == "A":
        gates = [
            Gate("ry", q3, angle=2 * ps),
            Gate("cx", q2, control=q3),
            Gate("x", q2),
            Gate("cry", q4, control=q2, angle=2 * ph),
            Gate("cx", q2, control=q4),
            Gate("cx", q4, control=q3),
            Gate("cx", q3, control=q4),
            Gate("cry", q3, control=q4, angle=2 * th),
            Gate("cx", q4, control=q3),
            Gate("z", q4),
        ]
    elif label == "B":
        gates = [
            Gate("ry", q2, angle=2 * ph),
            Gate("cx", q3, control=q2),
            Gate("x", q3),
            Gate("cry", q4, control=q3, angle=2 * th),
            Gate("cx", q3, control=q4),
            Gate("z", q2),
        ]
    elif label == "C":
        gates = [
            Gate("ry", q2, angle=2 * ps),
            Gate("cx", q4, control=q2),
            Gate("x", q4),
            Gate("cry", q3, control=q2, angle=2 * ph),
            Gate("cx", q2, control=q3),
            Gate("cx", q3, control=q4),
            Gate("cry", q4, control=q3, angle=2 * th),
            Gate("cx", q3, control=q4),
        ]
        if reflection:
            gates.append(Gate("z", 0))
    else:
        raise ValueError(f"unknown model state {label!r}")
    return gates


def prepare_rotated_model(label: str, a: Angles, reflection: bool = False) -> StateVector:
    return apply_circuit(prepare_onv(INITIAL_ONV), model_rotation_circuit(label, a, reflection))


def rotated_model_states(a: Angles, reflection: bool = False) -> np.ndarray:
    return np.stack([prepare_rotated_model(L, a, reflection).data.real for L in LABELS])


# --- objective targets -----------------------------------------------------

class MatrixTarget:
    """Diagonal of ``R^T H R`` for an explicit symmetric 3x3 matrix."""

    def __init__(self, H: np.ndarray):
        H = np.asarray(H, dtype=float)
        if H.shape != (3, 3) or not np.allclose(H, H.T, atol=1e-10):
            raise ValueError("subspace matrix must be symmetric 3x3")
        self.H = 0.5 * (H + H.T)

    def matrix(self, x) -> np.ndarray:
        R = rotation_xzy(Angles.from_array(x))
        return R.T @ self.H @ R

    def values(self, x) -> np.ndarray:
        return np.diag(self.matrix(x)).copy()

    def jacobian(self, x) -> np.ndarray:
        """J[I, k] = d H'_II / d angle_k."""
        R = rotation_xzy(Angles.from_array(x))
        HR = self.H @ R
        return np.stack([2 * np.einsum("ji,ji->i", HR, dR) for dR in _rotation_derivatives(x)], axis=1)


class CircuitTarget:
    """Rotated model states pushed through U(t*), evaluated on the emulator.

    Diagonal elements are expectation values; their angle derivatives use an
    exact shift rule for trigonometric polynomials of degree two.
    """

    def __init__(self, problem, t_star, reflection: bool = False):
        self.problem = problem
        self.t_star = np.asarray(t_star, dtype=float)
        self.reflection = reflection
        self.n_evaluations = 0

    def states(self, x) -> np.ndarray:
        return self.problem.ansatz.apply(rotated_model_states(Angles.from_array(x), self.reflection), self.t_star)

    def matrix(self, x) -> np.ndarray:
        s = self.states(x)
        M = s @ self.problem.H @ s.T
        return 0.5 * (M + M.T)

    def values(self, x) -> np.ndarray:
        self.n_evaluations += 1
        s = self.states(x)
        return np.einsum("kj,ij,ki->k", s, self.problem.H, s)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = np.zeros((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            d1 = self.values(x + e * math.pi / 2) - self.values(x - e * math.pi / 2)
            d2 = self.values(x + e * math.pi / 4) - self.values(x - e * math.pi / 4)
            J[:, k] = d2 + d1 * (1 - math.sqrt(2)) / 2
        return J


def h_breve_prime(problem, t_star, a: Angles) -> np.ndarray:
    return CircuitTarget(problem, t_star).matrix(a.as_array())


# --- solvers ---------------------------------------------------------------

@dataclass
class Resolution:
    angles: Angles
    matrix: np.ndarray
    method: str
    converged: bool
    fallback: bool = False
    degenerate: bool = False

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def offdiagonal_residual(self) -> float:
        """Sum over I != J of H'_IJ^2."""
        M = self.matrix
        return float(np.sum((M - np.diag(np.diag(M))) ** 2))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "angles": list(self.angles.as_array()),
            "diagonal": self.diagonal.tolist(),
            "offdiagonal_residual": self.offdiagonal_residual,
            "converged": self.converged,
            "fallback": self.fallback,
            "degenerate": self.degenerate,
        }


def _newton(grad, x, n_iter: int = 20, step: float = 1e-4, g_tol: float = 1e-14):
    """Newton iterations on a stationary point with a finite-difference Hessian."""
    for _ in range(n_iter):
        g = grad(x)
        if np.linalg.norm(g) < g_tol:
            break
        Hs = np.zeros((len(x), len(x)))
        for k in range(len(x)):
            e = np.zeros(len(x))
            e[k] = step
            Hs[:, k] = (grad(x + e) - grad(x - e)) / (2 * step)
        dx = -np.linalg.pinv(0.5 * (Hs + Hs.T), rcond=1e-12) @ g
        if np.linalg.norm(dx) > 0.1:
            break
        x = x + dx
    return x


def _minimize(fun, grad, x0):
    """BFGS to a loose tolerance, then Newton to machine precision."""
    res = minimize(lambda x: (fun(x), grad(x)), np.asarray(x0, dtype=float), jac=True,
                   method="BFGS", options={"gtol": 1e-7, "maxiter": 500})
    x = res.x
    xp = _newton(grad, x)
    return xp if fun(xp) <= fun(x) + 1e-13 * max(1.0, abs(fun(x))) else x


def _eigen_gap(target, x) -> float:
    return float(np.min(np.diff(np.sort(target.values(x)))))


def _multistart(target, fun, grad, method: str, accept) -> Resolution:
    best = None
    for k, start in enumerate([(0.0, 0.0, 0.0), *LATTICE]):
        x = _minimize(fun, grad, start)
        M = target.matrix(x)
        cand = Resolution(Angles.from_array(x).wrapped(), M, method, bool(accept(M)))
        if best is None or fun(x) < fun(best.angles.as_array()) - 1e-14:
            best = cand
        if cand.converged:
            best = cand
            break
        log.debug("%s start %d rejected (residual %.2e)", method, k, cand.offdiagonal_residual)
    best.degenerate = _eigen_gap(target, best.angles.as_array()) < 1e-6
    return best


def _diagonal(M, tol=OFFDIAG_TOL) -> bool:
    return float(np.sum((M - np.diag(np.diag(M))) ** 2)) < tol


def solve_frobenius(target) -> Resolution:
    """Maximize the diagonal's squared norm, i.e. minimize -sum_I H'_II^2."""
    fun = lambda x: -float(np.sum(target.values(x) ** 2))
    grad = lambda x: -2.0 * target.values(x) @ target.jacobian(x)
    return _multistart(target, fun, grad, "frobenius", _diagonal)


def solve_weighted(target, weights=DEFAULT_WEIGHTS) -> Resolution:
    w = np.asarray(weights, dtype=float)
    if w.shape != (3,) or np.any(w <= 0):
        raise ValueError("need three positive weights")
    if not (w[0] >= w[1] >= w[2]):
        raise ValueError("weights must be non-increasing from A to C")
    fun = lambda x: float(w @ target.values(x))
    grad = lambda x: w @ target.jacobian(x)
    return _multistart(target, fun, grad, "weighted", _diagonal)


def two_step_stage_one(target, tol: float = 1e-10) -> tuple[float, float, bool]:
    """Stationary point of H'_BB over (theta, phi) at psi = 0.

    Solves dH'_BB/dtheta / (2 cos phi) = H'_BC = 0 and -dH'_BB/dphi / 2 =
    H'_AB = 0 from diagonal derivatives only. Dividing by cos phi removes the
    spurious roots on phi = pi/2 (mod pi). Returns ``(theta, phi, ok)`` where
    ``ok`` is False on that degenerate branch or when H'_AB, H'_BC are not
    actually zero.
    """
    def couplings(y):
        J = target.jacobian(np.array([y[0], y[1], 0.0]))[1]
        c = math.cos(y[1])
        return np.array([J[0] / (2 * c) if abs(c) > 1e-12 else J[0] * 1e12, -J[1] / 2])

    sol = root(couplings, np.zeros(2), method="hybr", options={"xtol": 1e-15})
    th, ph = (float(v) for v in sol.x)
    M1 = target.matrix(np.array([th, ph, 0.0]))
    degenerate_branch = abs(math.cos(ph)) < 1e-6
    zeroed = max(abs(M1[0, 1]), abs(M1[1, 2])) < tol * max(1.0, np.abs(M1).max())
    return th, ph, bool(zeroed and not degenerate_branch)


def solve_two_step(target, tol: float = 1e-10) -> Resolution:
    """Stage one (:func:`two_step_stage_one`), then the closed-form psi step.

    H'_CC is a degree-two trigonometric polynomial in psi whose stationary
    point zeroes H'_AC and keeps the stage-one zeros. If stage one fails, the
    Frobenius solver takes over and the result is flagged.
    """
    th, ph, ok = two_step_stage_one(target, tol)
    if not ok:
        log.info("two-step solver: step one unresolved (phi=%.3f); using the Frobenius solver", ph)
        res = solve_frobenius(target)
        res.method, res.fallback = "two-step", True
        return res

    # H'_CC(psi) = alpha + beta cos 2psi + gamma sin 2psi
    f = lambda p: target.values(np.array([th, ph, p]))[2]
    f0, f1, f2 = f(0.0), f(math.pi / 4), f(math.pi / 2)
    alpha = 0.5 * (f0 + f2)
    beta, gamma = f0 - alpha, f1 - alpha
    if abs(beta) < 1e-15 and abs(gamma) < 1e-15:
        psi = 0.0
    elif beta != 0:
        psi = 0.5 * math.atan(gamma / beta)
    else:
        psi = math.copysign(math.pi / 4, gamma)
    x = np.array([th, ph, psi])
    M = target.matrix(x)
    res = Resolution(Angles.from_array(x).wrapped(), M, "two-step", _diagonal(M))
    res.degenerate = _eigen_gap(target, x) < 1e-6
    return res


SOLVERS = {"frobenius": solve_frobenius, "two-step": solve_two_step, "weighted": solve_weighted}


def resolve(target, method: str = "frobenius", weights=DEFAULT_WEIGHTS) -> Resolution:
    if method not in SOLVERS:
        raise ValueError(f"unknown solver {method!r}")
    if method == "weighted":
        return solve_weighted(target, weights)
    return SOLVERS[method](target)


def assign_adiabatic_order(diagonals) -> tuple[list[tuple[int, ...]], bool]:
    """Ascending-energy permutation per point, and whether any point needed one."""
    perms = [tuple(int(i) for i in np.argsort(np.asarray(d), kind="stable")) for d in np.atleast_2d(diagonals)]
    reordered = any(p != tuple(range(len(p))) for p in perms)
    return perms, reordered
