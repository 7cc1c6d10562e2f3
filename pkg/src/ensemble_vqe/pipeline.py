"""Per-geometry pipeline: integrals, orbitals, FCI reference, ensemble VQE,
eigenstate resolution and diabatization."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging

import numpy as np

from .diabat import (
    constrained_diabatic_optimize,
    decompose,
    optimal_diabatic_states,
    overlap_submatrix,
    route_agreement,
)
from .evqe import EnsembleProblem, SpinMode, optimize_ensemble, subspace_hamiltonian
from .geometry import Distortion, Geometry, distort, td_reference
from .integrals import compute_ao_integrals, cross_ao_overlap
from .resolve import CircuitTarget, resolve
from .scf import MOBasis, diabatic_mos, lowdin_orbitals, rohf
from .secondq import MOIntegrals, ao_to_mo, fci_solve

log = logging.getLogger(__name__)

MO_KINDS = ("canonical", "lowdin", "diabatic")


@dataclass(frozen=True)
class PipelineSettings:
    """Everything a single scan point needs; plain data so it pickles cheaply."""

    mo: str = "canonical"
    ref_distortion: tuple[float, float, float] = (0.1, 0.0, -0.1)
    mode: str = "penalty"
    penalty_weight: float = 1.0
    spin_epsilon: float = 1e-8
    max_iter: int = 500
    f_tol: float = 1e-10
    repetitions: int = 2
    solver: str = "frobenius"
    weights: tuple[float, float, float] = (3.0, 2.0, 1.0)
    route: str = "rotation"
    r_epsilon: float = 1e-8

    def __post_init__(self):
        if self.mo not in MO_KINDS:
            raise ValueError(f"unknown MO basis {self.mo!r}")
        if self.route not in ("rotation", "constrained"):
            raise ValueError(f"unknown diabatization route {self.route!r}")
        if min(self.spin_epsilon, self.f_tol, self.r_epsilon) <= 0 or self.max_iter <= 0:
            raise ValueError("tolerances and iteration caps must be positive")


_REF_CACHE: dict = {}


def reference_orbitals(ref: tuple[float, float, float]) -> tuple[Geometry, MOBasis]:
    key = tuple(ref)
    if key not in _REF_CACHE:
        g0 = distort(td_reference(), Distortion(*ref))
        _REF_CACHE[key] = (g0, rohf(compute_ao_integrals(g0)))
    return _REF_CACHE[key]


def mo_integrals(geometry: Geometry, settings: PipelineSettings) -> MOIntegrals:
    ao = compute_ao_integrals(geometry)
    if settings.mo == "lowdin":
        mo = lowdin_orbitals(ao)
    else:
        mo = rohf(ao)
        if settings.mo == "diabatic":
            g0, ref = reference_orbitals(settings.ref_distortion)
            mo = diabatic_mos(ref, mo, cross_ao_overlap(g0, geometry), reference=str(settings.ref_distortion))
    return ao_to_mo(ao, mo)


def make_problem(mi: MOIntegrals, settings: PipelineSettings) -> EnsembleProblem:
    mode = SpinMode(settings.mode, settings.penalty_weight, settings.spin_epsilon)
    return EnsembleProblem.from_integrals(mi, repetitions=settings.repetitions, mode=mode)


@dataclass
class PointContext:
    """Live objects for one geometry, kept for further analysis in tests."""

    geometry: Geometry
    mi: MOIntegrals
    fci: object
    problem: EnsembleProblem
    vqe: object
    record: dict = field(default_factory=dict)


def _fci_record(fci) -> dict:
    return {"E": fci.eigenvalues[:3].tolist(), "s2": fci.s2[:3].tolist()}


def fci_point(d: Distortion, settings: PipelineSettings) -> dict:
    g = distort(td_reference(), d)
    fci = fci_solve(mo_integrals(g, settings))
    return {"distortion": list(d.as_tuple()), "fci": _fci_record(fci)}


def vqe_point(d: Distortion, settings: PipelineSettings, t0=None) -> PointContext:
    g = distort(td_reference(), d)
    mi = mo_integrals(g, settings)
    fci = fci_solve(mi)
    problem = make_problem(mi, settings)
    vqe = optimize_ensemble(problem, t0=t0, max_iter=settings.max_iter, f_tol=settings.f_tol)
    Hb = subspace_hamiltonian(problem, vqe.t_star)
    target = float(fci.eigenvalues[:3].sum())
    rec = {
        "distortion": list(d.as_tuple()),
        "geometry_hash": g.digest(),
        "mo": settings.mo,
        "fci": _fci_record(fci),
        "vqe": {
            **{k: v for k, v in vqe.to_dict().items() if k != "t_star"},
            "H": Hb.tolist(),
            "ensemble_error": vqe.ensemble_energy - target,
            "min_trace_margin": min(e["energy"] for e in vqe.trace) - target,
        },
    }
    return PointContext(g, mi, fci, problem, vqe, rec)


def adiabatic_analysis(ctx: PointContext, settings: PipelineSettings) -> dict:
    res = resolve(CircuitTarget(ctx.problem, ctx.vqe.t_star), settings.solver, settings.weights)
    E = ctx.fci.eigenvalues[:3]
    out = res.to_dict()
    out["H_prime"] = res.matrix.tolist()
    out["max_dev_fci"] = float(np.abs(np.sort(res.diagonal) - E).max())
    ctx.record["adiabatic"] = out
    return out


def diabatic_analysis(ctx: PointContext, settings: PipelineSettings) -> dict:
    p, t = ctx.problem, ctx.vqe.t_star
    o0 = overlap_submatrix(p, t)
    dec0 = decompose(o0)
    out = {"O": o0.O.tolist(), "d": dec0.d, "r": dec0.r, "identity_residual": o0.identity_residual()}
    if settings.route == "rotation":
        sol = optimal_diabatic_states(p, t, "rotation")
        alt = optimal_diabatic_states(p, t, "descriptor")
        out["optimal"] = sol.to_dict()
        out["route_agreement"] = route_agreement(sol, alt)
        out["r_descriptor_route"] = alt.decomposition.r
    else:
        cres = constrained_diabatic_optimize(p, settings.r_epsilon, max_iter=settings.max_iter, f_tol=settings.f_tol)
        oc = overlap_submatrix(p, cres.t_star)
        dc = decompose(oc)
        Hc = subspace_hamiltonian(p, cres.t_star)
        sol = optimal_diabatic_states(p, t, "rotation")
        out["optimal"] = {
            "route": "constrained",
            "O": oc.O.tolist(),
            **dc.to_dict(),
            "H_prime": Hc.tolist(),
            "converged": bool(cres.converged and dc.r < 1e-6),
            "ensemble_error": cres.ensemble_energy - float(ctx.fci.eigenvalues[:3].sum()),
            "spin_deviation": cres.spin_deviation,
            "iterations": cres.iterations,
        }
        out["route_agreement"] = float(np.abs(dc.O_star - sol.decomposition.O_star).max())
    ctx.record["diabatic"] = out
    return out


def settings_dict(settings: PipelineSettings) -> dict:
    return asdict(settings)
