import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqlab.currents import (
    CurrentMeasure, TestFunction, curvature_current, default_family, fs_current, lemma_identity,
    pair, pairing_table, siu_decompose, weak_distance,
)
from eqlab.errors import UndefinedSpace
from eqlab.geom import SingularWeight, VolumeDensity, apply_poincare_perturbation, fubini_study_weight
from eqlab.l2 import build_basis

FS = fubini_study_weight()


def fs_density(z):
    return 1.0 / (math.pi * (1 + np.abs(z) ** 2) ** 2)


# -- test functions -------------------------------------------------------------

def test_bump_values():
    tf = TestFunction(0.5j, 2.0)
    assert tf(np.array(0.5j)) == pytest.approx(1.0)
    assert tf(np.array(0.5j + 2.0)) == 0.0
    assert tf(complex(math.inf)) == 0.0
    with pytest.raises(ValueError):
        TestFunction(0, 0.0)


@pytest.mark.parametrize("t", [0.1, 0.4, 0.7, 0.9])
def test_bump_laplacian_matches_stencil(t):
    tf = TestFunction(0.3 - 0.1j, 1.5)
    z = tf.center + t * tf.radius * np.exp(0.7j)
    h = 1e-4
    fd = (tf(z + h) + tf(z - h) + tf(z + 1j * h) + tf(z - 1j * h) - 4 * tf(z)) / h**2
    assert float(tf.laplacian(np.array(z))) == pytest.approx(float(fd), rel=1e-5, abs=1e-8)


# -- Fubini-Study currents -----------------------------------------------------

@pytest.mark.parametrize("p", [1, 4, 9])
def test_fs_current_is_p_times_fs(p):
    g = fs_current(build_basis(p, FS))
    z = np.array([0, 0.4 + 0.3j, -3.0, 50j, 1e5 + 0j])
    assert g.atoms == ()
    assert np.allclose(g.eval_density(z), p * fs_density(z), rtol=1e-9, atol=0)
    assert g.integrated_ac_mass() == pytest.approx(p, rel=1e-7)


def test_fs_current_half_atom():
    g = fs_current(build_basis(4, fubini_study_weight([(0, 0.5)])))
    assert g.atom_at(0) == 2 and g.atom_mass == 2
    assert g.integrated_ac_mass() == pytest.approx(2.0, rel=1e-7)


def test_single_section_current_is_atomic():
    g = fs_current(build_basis(3, fubini_study_weight([(0, 1.0)])))
    assert g.atom_at(0) == 3
    assert g.atom_mass == 3 and g.declared_mass == 3
    assert np.all(g.eval_density(np.array([0.5, 2 + 1j])) == 0)


def test_fs_current_undefined_without_sections():
    zero = build_basis(2, SingularWeight(FS.smooth, ((0j, 1.0), (1 + 0j, 1.0))))
    with pytest.raises(UndefinedSpace):
        fs_current(zero)


def test_curvature_current_split():
    g = curvature_current(fubini_study_weight([(0, 0.5)]))
    assert g.atoms == ((0j, 0.5),)
    assert g.ac_mass == pytest.approx(0.5)
    assert g.integrated_ac_mass() == pytest.approx(0.5, rel=1e-7)
    smooth = curvature_current(FS)
    assert smooth.atoms == () and smooth.integrated_ac_mass() == pytest.approx(1.0, rel=1e-8)


def test_curvature_current_poincare_keeps_mass():
    w = apply_poincare_perturbation(fubini_study_weight([(0, 0.5)]), 0.05)
    g = curvature_current(w)
    assert g.atom_at(0) == 0.5
    assert g.atom_mass + g.integrated_ac_mass() == pytest.approx(1.0, abs=1e-5)


# -- pairings -----------------------------------------------------------------------

def test_pair_atoms_only():
    c = CurrentMeasure(((0j, 2.0), (3 + 0j, 1.0), (complex(math.inf), 4.0)), None, 7.0)
    tf = TestFunction(0, 1.0)
    assert pair(c, tf) == pytest.approx(2.0)
    assert pair(c, TestFunction(10, 1.0)) == 0.0


def test_pair_nearly_constant_bump_gives_mass():
    # a wide bump is ~1 where the mass of p FS lives
    g = fs_current(build_basis(3, fubini_study_weight([(0, 1 / 3)])))
    tf = TestFunction(0, 1e4)
    assert pair(g, tf) == pytest.approx(3.0, rel=1e-4)


@pytest.mark.parametrize("p", [1, 5, 12])
def test_fs_normalized_pairing_equals_fs(p):
    g = fs_current(build_basis(p, FS)).scaled(1 / p)
    ref = curvature_current(FS)
    assert np.allclose(pairing_table(g), pairing_table(ref), rtol=1e-9, atol=1e-12)


def test_weak_distance_examples():
    ref = curvature_current(FS)
    assert weak_distance(ref, ref) == 0.0
    a = CurrentMeasure(((0j, 1.0),), None, 1.0)
    b = CurrentMeasure(((0.1 + 0j, 1.0),), None, 1.0)
    expected = max(abs(tf(np.array(0j)) - tf(np.array(0.1 + 0j))) for tf in default_family())
    assert weak_distance(a, b) == pytest.approx(float(expected), rel=1e-12)


# -- Siu decomposition -------------------------------------------------------

@pytest.mark.parametrize("nu,p", [(0.5, 4), (0.5, 9), (1 / 3, 4), (1 / 3, 10)])
def test_siu_atom_within_one_over_p(nu, p):
    basis = build_basis(p, fubini_study_weight([(0, nu)]))
    atoms, ac = siu_decompose(fs_current(basis).scaled(1 / p))
    atom = dict(atoms).get(0j, 0.0)
    # k_min is the least integer above p nu - 1, so the atom sits in (nu - 1/p, nu]
    assert nu - 1 / p < atom <= nu + 1e-12
    assert ac.declared_mass == pytest.approx(1 - atom)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 16), st.sampled_from([0.0, 0.2, 1 / 3, 0.5, 0.75]))
def test_mass_conservation(p, nu):
    g = fs_current(build_basis(p, fubini_study_weight([(0, nu)] if nu else [])))
    assert g.atom_mass + g.integrated_ac_mass() == pytest.approx(p, abs=1e-4 * p)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_density_nonnegative(seed):
    rng = np.random.default_rng(seed)
    g = fs_current(build_basis(6, fubini_study_weight([(0.2 - 0.1j, 1 / 3)])))
    z = np.exp(rng.uniform(-4, 4, 50) + 1j * rng.uniform(0, 2 * np.pi, 50))
    assert np.all(g.eval_density(z) >= -1e-8)


# -- pairing identity ---------------------------------------------------------

def test_lemma_identity_fs_both_sides_zero():
    basis = build_basis(5, FS)
    lhs, rhs = lemma_identity(basis, default_family()[1])
    assert abs(lhs) < 1e-9 and abs(rhs) < 1e-9


@pytest.mark.parametrize("tf", default_family())
def test_lemma_identity_nu_third(tf):
    basis = build_basis(8, fubini_study_weight([(0, 1 / 3)]))
    lhs, rhs = lemma_identity(basis, tf)
    assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs), abs(rhs))


def test_lemma_identity_poincare():
    w = apply_poincare_perturbation(fubini_study_weight([(0, 0.5)]), 0.05)
    basis = build_basis(8, w, VolumeDensity("poincare", (0j,)))
    for tf in default_family():
        lhs, rhs = lemma_identity(basis, tf)
        assert abs(lhs - rhs) <= 1e-4 * max(1.0, abs(lhs), abs(rhs))
