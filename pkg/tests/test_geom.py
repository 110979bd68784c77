import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqlab.errors import DegenerateStencil, InvalidEpsilon, OutOfDomain
from eqlab.geom import (
    INF, PRODUCT, SPHERE, FubiniStudyPart, ModelSpace, QuadraticFSPart, SingularWeight,
    SkewFubiniStudyPart, VolumeDensity, apply_poincare_perturbation, cocycle_residual,
    curvature_density, distance_proxy, eval_weight, fubini_study_weight, is_semipositive,
    lelong_number, min_curvature_on_grid, poincare_F, transition_weight,
)

finite_pts = st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                                allow_infinity=False)


def test_model_spaces():
    assert SPHERE.dim == 1 and PRODUCT.dim == 2
    assert SPHERE.class_mass == 1.0 and PRODUCT.class_mass == 2.0
    with pytest.raises(ValueError):
        ModelSpace("torus")


@given(finite_pts)
def test_transition_is_involution(z):
    back = ModelSpace.transition(ModelSpace.transition(z))
    assert abs(back - z) <= 1e-12 * abs(z)


def test_eval_weight_examples():
    fs = fubini_study_weight()
    assert eval_weight(fs, np.array([0j]))[0] == 0.0
    w = fubini_study_weight([(0, 0.5)])
    # co-mass FS: (1/2)(1/2) log 2 at |x| = 1, log term vanishes
    assert eval_weight(w, np.array([1j]))[0] == pytest.approx(0.25 * math.log(2), abs=1e-15)
    raw = fubini_study_weight([(0, 0.5)], co_mass=False)
    assert eval_weight(raw, np.array([1.0 + 0j]))[0] == pytest.approx(0.5 * math.log(2), abs=1e-15)
    assert eval_weight(w, np.array([0j]))[0] == -np.inf


def test_curvature_density_fs():
    fs = fubini_study_weight()
    assert curvature_density(fs, 0j) == pytest.approx(1 / math.pi, rel=1e-14)
    assert curvature_density(fs, 0j, method="stencil") == pytest.approx(1 / math.pi, rel=1e-6)
    assert curvature_density(fs, 1e4 + 0j) < 1e-16


def test_curvature_density_quadratic_fixture():
    # closed form 1/pi + 1/(2 pi) at 0, cross-checked by the stencil
    w = SingularWeight(QuadraticFSPart())
    closed = curvature_density(w, 0j, method="closed")
    assert closed == pytest.approx(1 / math.pi + 1 / (2 * math.pi), rel=1e-14)
    assert curvature_density(w, 0j, method="stencil") == pytest.approx(closed, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(min_magnitude=0.2, max_magnitude=5.0, allow_nan=False,
                          allow_infinity=False))
def test_skew_density_stencil_matches_closed(z):
    w = SingularWeight(SkewFubiniStudyPart())
    assert curvature_density(w, z, method="stencil") == pytest.approx(
        curvature_density(w, z, method="closed"), rel=1e-5)


def test_stencil_refuses_near_atom():
    w = fubini_study_weight([(0, 0.5)])
    with pytest.raises(DegenerateStencil):
        curvature_density(w, 1e-5 + 0j, method="stencil")


def test_lelong_numbers():
    w = fubini_study_weight([(0, 0.5)])
    assert lelong_number(w, 0) == 0.5
    assert lelong_number(w, 1 + 1j) == 0.0
    pert = apply_poincare_perturbation(w, 0.1)
    assert lelong_number(pert, 0) == 0.5


def test_lelong_ratio_on_shrinking_circles():
    w = fubini_study_weight([(0.3, 0.25)])
    r = np.array([1e-6, 1e-8, 1e-10])
    vals = w(0.3 + r)
    ratio = np.diff(vals) / np.diff(np.log(r))
    assert np.allclose(ratio, 0.25, atol=1e-6)  # smooth part adds O(r)


def test_poincare_perturbation_examples():
    w = fubini_study_weight()
    assert apply_poincare_perturbation(w, 0.0) is w
    pw = apply_poincare_perturbation(w, 0.05, punctures=(0j,))
    x = np.array([math.exp(-math.e) + 0j])
    # -(eps/2) log(-log|z|) = -0.025 log(e)
    assert (pw(x) - w(x))[0] == pytest.approx(-0.025, abs=1e-14)
    with pytest.raises(InvalidEpsilon):
        apply_poincare_perturbation(w, 1e3, punctures=(0j,))
    with pytest.raises(InvalidEpsilon):
        apply_poincare_perturbation(w, -0.1, punctures=(0j,))


def test_poincare_F_examples():
    assert poincare_F([0j], math.exp(-1) + 0j, proxy=False) == pytest.approx(0.0, abs=1e-15)
    assert poincare_F([0j], math.exp(-math.e) + 0j, proxy=False) == pytest.approx(-0.5)
    # two punctures at distance e^-e from the query point
    x = 0j
    d = math.exp(-math.e)
    assert poincare_F([d, -d], x, proxy=False) == pytest.approx(-1.0)
    with pytest.raises(OutOfDomain):
        poincare_F([0j], 2.0 + 0j, proxy=False)


@given(st.floats(1e-6, math.exp(-1) * 0.99), st.floats(1.001, 50))
def test_poincare_F_monotone(r, factor):
    r2 = min(r * factor, math.exp(-1) * 0.999)
    if r2 <= r:
        return
    assert poincare_F([0j], r + 0j, proxy=False) < poincare_F([0j], r2 + 0j, proxy=False)


def test_distance_proxy_is_below_one_and_c1():
    r = np.linspace(0, 100, 100001)
    rho = distance_proxy(r)
    assert np.all(rho < 0.5 + 1e-15)
    # one-sided slopes agree at the knee r = 1/4
    h = 1e-7
    left = (distance_proxy(0.25) - distance_proxy(0.25 - h)) / h
    right = (distance_proxy(0.25 + h) - distance_proxy(0.25)) / h
    assert left == pytest.approx(right, abs=1e-5)


def test_transition_fs_and_atoms():
    fs = fubini_study_weight()
    t = transition_weight(fs)
    assert isinstance(t.smooth, FubiniStudyPart)
    w = np.array([0.5 + 0.2j, 3.0 - 1j])
    assert np.allclose(t(w), 0.5 * np.log1p(np.abs(w) ** 2), atol=1e-15)
    ta = transition_weight(fubini_study_weight([(0, 0.5)]))
    assert any(math.isinf(a.real) and nu == 0.5 for a, nu in ta.atoms)


@pytest.mark.parametrize("weight", [
    fubini_study_weight(),
    fubini_study_weight([(0, 0.5)]),
    fubini_study_weight([(0.5 + 0.5j, 1 / 3)]),
    SingularWeight(SkewFubiniStudyPart()),
    apply_poincare_perturbation(fubini_study_weight([(0, 0.5)]), 0.05),
])
def test_cocycle_at_random_points(weight):
    rng = np.random.default_rng(3)
    pts = np.exp(rng.uniform(-3, 3, 100) + 1j * rng.uniform(0, 2 * np.pi, 100))
    other = transition_weight(weight)
    assert np.max(cocycle_residual(weight, other, pts)) < 1e-10


@pytest.mark.parametrize("weight", [
    fubini_study_weight(),
    fubini_study_weight([(0, 0.5)]),
    fubini_study_weight([(0, 1 / 3)]),
    SingularWeight(SkewFubiniStudyPart()),
    apply_poincare_perturbation(fubini_study_weight([(0, 0.5)]), 0.05),
])
def test_shipped_weights_semipositive(weight):
    assert is_semipositive(weight)
    assert min_curvature_on_grid(weight) >= -1e-6


def test_volume_density_poincare_shape():
    vol = VolumeDensity("poincare", (0j,))
    r = np.logspace(-6, -3, 13)
    ratio = vol(r + 0j) / (1.0 / (r * np.log(r)) ** 2)
    # c = 1/pi from the FS factor at the puncture
    assert np.all((ratio * math.pi > 0.5) & (ratio * math.pi < 2.0))
    assert np.all(vol(np.array([1.0, 10.0, 1e3]) + 0j) > 0)


def test_fs_volume_total_mass_one():
    from scipy import integrate

    vol = VolumeDensity()
    val, _ = integrate.quad(lambda r: 2 * math.pi * r * float(vol(np.array([r + 0j]))[0]),
                            0, np.inf)
    assert val == pytest.approx(1.0, rel=1e-10)


def test_weight_rejects_negative_lelong():
    with pytest.raises(ValueError):
        SingularWeight(FubiniStudyPart(), ((0j, -0.1),))
    assert INF.real == math.inf
