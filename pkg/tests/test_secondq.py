from __future__ import annotations

import numpy as np
import pytest

from ensemble_vqe import MODEL_ONVS
from ensemble_vqe.geometry import td_reference
from ensemble_vqe.integrals import compute_ao_integrals
from ensemble_vqe.scf import MOBasis, rohf
from ensemble_vqe.secondq import (
    Determinant,
    MOIntegrals,
    ao_to_mo,
    determinant_basis,
    fci_matrix,
    fci_solve,
    s2_matrix,
    slater_condon_element,
)

from conftest import REFERENCE, canonical_mi, dense_hamiltonian_oracle, geometry_at


def test_determinant_basis_sizes():
    assert len(determinant_basis(4, 3)) == 56
    assert len(determinant_basis(4, 3, 0.5)) == 24
    vac = determinant_basis(4, 0, 0)
    assert len(vac) == 1 and vac[0].bits == "00000000"
    assert determinant_basis(4, 3, 2.5) == []
    idx = [d.index for d in determinant_basis(4, 3, 0.5)]
    assert idx == sorted(idx)


def test_determinant_properties():
    d = Determinant.from_bits("11001000")
    assert d.occupied == (0, 1, 4) and d.n_el == 3 and d.ms == 0.5
    assert Determinant.from_occupied((0, 1, 4), 8) == d


def test_ao_to_mo_identity():
    ao = compute_ao_integrals(td_reference())
    mi = ao_to_mo(ao, MOBasis(np.eye(4), "lowdin"))
    np.testing.assert_allclose(mi.h, ao.T + ao.V, atol=1e-15)
    np.testing.assert_allclose(mi.g, ao.ERI, atol=1e-15)


def test_mo_integrals_validation():
    with pytest.raises(ValueError):
        MOIntegrals(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros((2,) * 4), 0.0)


def test_orbital_rotation_leaves_spectrum(rng):
    ao = compute_ao_integrals(geometry_at((0.1, 0.05, 0.2)))
    C = rohf(ao).C
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    e1 = fci_solve(ao_to_mo(ao, MOBasis(C, "lowdin"))).eigenvalues
    e2 = fci_solve(ao_to_mo(ao, MOBasis(C @ Q, "lowdin"))).eigenvalues
    np.testing.assert_allclose(e1, e2, atol=1e-10)


def test_rohf_energy_reassembly():
    ao = compute_ao_integrals(td_reference())
    mo = rohf(ao)
    mi = ao_to_mo(ao, mo)
    dA = Determinant.from_bits(MODEL_ONVS[0])
    assert slater_condon_element(dA, dA, mi) == pytest.approx(mo.energy, abs=1e-8)


def test_diagonal_closed_form():
    mi = canonical_mi((0.1, 0.05, 0.2))
    h, g = mi.h, mi.g
    # alpha in orbitals 0, 1 and beta in orbital 0
    expected = (
        2 * h[0, 0] + h[1, 1]
        + g[0, 0, 1, 1] - g[0, 1, 1, 0]
        + g[0, 0, 0, 0] + g[1, 1, 0, 0]
        + mi.e_nuc
    )
    dA = Determinant.from_bits("11001000")
    assert slater_condon_element(dA, dA, mi) == pytest.approx(expected, abs=1e-13)


def test_three_fold_excitation_vanishes():
    mi = canonical_mi((0.1, 0.05, 0.2))
    a = Determinant.from_bits("11001000")
    b = Determinant.from_bits("00110100")
    assert slater_condon_element(a, b, mi) == 0.0


def test_slater_condon_against_kronecker_oracle():
    mi = canonical_mi((0.1, 0.05, 0.2))
    H = dense_hamiltonian_oracle(mi.h, mi.g, mi.e_nuc)
    dets = determinant_basis(4, 3, None)
    idx = [d.index for d in dets]
    np.testing.assert_allclose(fci_matrix(mi, dets), H[np.ix_(idx, idx)], atol=1e-10)


@pytest.mark.parametrize("d", sorted(REFERENCE))
def test_fci_matches_reference_package(d):
    res = fci_solve(canonical_mi(d))
    np.testing.assert_allclose(res.eigenvalues[:3], REFERENCE[d]["fci"], atol=1e-8)
    np.testing.assert_allclose(res.s2[:3], 0.75, atol=1e-10)
    assert np.all(np.diff(res.eigenvalues) >= 0)
    assert res.eigenvalues[0] <= REFERENCE[d]["e_rohf"]


def test_td_threefold_degeneracy():
    e = fci_solve(canonical_mi((0.0, 0.0, 0.0))).eigenvalues
    assert np.ptp(e[:3]) < 1e-8


def test_scan_shape_near_quasi_degeneracy():
    # the two upper roots are close near dz1 = 0 and separate as |dz1| grows
    gaps = {}
    for dz1 in (-0.3, 0.0, 0.3):
        e = fci_solve(canonical_mi((0.1, 0.05, dz1))).eigenvalues
        gaps[dz1] = e[2] - e[1]
    assert gaps[0.0] < gaps[-0.3] and gaps[0.0] < gaps[0.3]


def test_s2_matrix():
    S = s2_matrix(4, 3, 0.5)
    dets = determinant_basis(4, 3, 0.5)
    k = [d.bits for d in dets].index("11001000")
    assert S[k, k] == pytest.approx(0.75)
    np.testing.assert_allclose(S, S.T, atol=0)
    w = np.unique(np.round(np.linalg.eigvalsh(S), 10))
    np.testing.assert_allclose(w, [0.75, 3.75])


def test_h_commutes_with_s2():
    res = fci_solve(canonical_mi((0.1, 0.05, 0.2)))
    S = s2_matrix()
    assert np.abs(res.matrix @ S - S @ res.matrix).max() < 1e-12


def test_spin_filter_and_json():
    res = fci_solve(canonical_mi((0.1, 0.05, 0.2)), spin=1.5)
    np.testing.assert_allclose(res.s2, 3.75, atol=1e-8)
    full = fci_solve(canonical_mi((0.1, 0.05, 0.2)))
    assert '"eigenvalues"' in full.to_json(geometry_at((0.1, 0.05, 0.2)))
    with pytest.raises(ValueError):
        fci_solve(canonical_mi((0.1, 0.05, 0.2)), sector=(3, 2.5))
