import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from eqlab.errors import NonConvexProfile
from eqlab.geom import fubini_study_weight
from eqlab.l2 import ProductWeight, toric_basis
from eqlab.toric import (
    Box, MATable, MaxAffineProfile, SmoothProfile, TableProfile, box_grid, corner_profile,
    default_ma_regions, fs_profile_1d, ma_convergence_harness, parse_profile_table,
    pl_approximant, product_fs_mass, product_fs_profile, real_ma_measure, real_ma_measure_1d,
    softmax_profile, toric_fs_square, toric_potential, toric_total_mass, trend_pass,
)

FS = fubini_study_weight()


# -- exact oracle for max-affine profiles -------------------------------------------

def _exact_hull_area(pts):
    """Convex hull area of rational points (monotone chain + shoelace)."""
    pts = sorted(set(pts))
    if len(pts) < 3:
        return Fraction(0)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    for q in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    hull = lower[:-1] + upper[:-1]
    area = sum(hull[i][0] * hull[(i + 1) % len(hull)][1] - hull[(i + 1) % len(hull)][0] * hull[i][1]
               for i in range(len(hull)))
    return abs(Fraction(area, 2))


def exact_vertex_masses(slopes, intercepts):
    """Vertices of max_i(alpha_i . x + beta_i) and gradient-image areas, exactly."""
    n = len(intercepts)
    A = [(Fraction(a), Fraction(b)) for a, b in slopes]
    B = [Fraction(c) for c in intercepts]
    out = {}
    for i, j, k in itertools.combinations(range(n), 3):
        # alpha_i x + beta_i = alpha_j x + beta_j = alpha_k x + beta_k
        a11, a12 = A[i][0] - A[j][0], A[i][1] - A[j][1]
        a21, a22 = A[i][0] - A[k][0], A[i][1] - A[k][1]
        det = a11 * a22 - a12 * a21
        if det == 0:
            continue
        r1, r2 = B[j] - B[i], B[k] - B[i]
        x = ((r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det)
        vals = [A[m][0] * x[0] + A[m][1] * x[1] + B[m] for m in range(n)]
        top = max(vals)
        if vals[i] != top:
            continue
        active = [A[m] for m in range(n) if vals[m] == top]
        area = _exact_hull_area(active)
        if area > 0:
            out[x] = area
    return out


small = st.integers(-3, 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(small, small, st.integers(-4, 4)), min_size=3, max_size=7,
                unique_by=lambda r: (r[0], r[1])))
def test_max_affine_matches_exact_oracle(rows):
    slopes = [(a, b) for a, b, _ in rows]
    intercepts = [c for _, _, c in rows]
    exact = exact_vertex_masses(slopes, intercepts)
    got = MaxAffineProfile(np.array(slopes, float), np.array(intercepts, float)).vertex_masses()
    assert len(got) == len(exact)
    for x, area in got:
        key = min(exact, key=lambda e: abs(float(e[0]) - x[0]) + abs(float(e[1]) - x[1]))
        assert np.allclose(x, [float(key[0]), float(key[1])], atol=1e-9)
        assert area == pytest.approx(float(exact[key]), rel=1e-12)
    # all the gradient area is carried by vertices
    assert sum(a for _, a in got) == pytest.approx(float(_exact_hull_area(
        [(Fraction(a), Fraction(b)) for a, b in slopes])), rel=1e-12, abs=1e-12)


def test_corner_profile_mass():
    v = corner_profile()
    assert v.vertex_masses()[0][1] == pytest.approx(0.5)
    assert real_ma_measure(v, Box(-1, 1, -1, 1)) == pytest.approx(1.0)
    assert real_ma_measure(v, Box(1, 2, -3, -2)) == 0.0


def test_affine_profiles_have_no_mass():
    assert MaxAffineProfile(np.array([[1.0, 2.0]]), np.array([0.5])).vertex_masses() == []
    pts = np.array([[s, t] for s in range(-2, 3) for t in range(-2, 3)], float)
    tab = TableProfile(pts, 3 * pts[:, 0] - pts[:, 1] + 1)
    assert real_ma_measure(tab, Box(-1.5, 1.5, -1.5, 1.5)) == 0.0


def test_single_monomial_potential_is_flat():
    u = toric_potential([[2, 3]], [0.0], 4)
    assert real_ma_measure(u, Box(-2, 2, -2, 2)) == pytest.approx(0.0, abs=1e-12)


# -- smooth profiles ----------------------------------------------------------

def test_product_fs_total_mass():
    v = product_fs_profile()
    assert real_ma_measure(v, Box(-30, 30, -30, 30)) == pytest.approx(2.0, rel=1e-10)
    assert product_fs_mass(Box(-30, 30, -30, 30)) == pytest.approx(2.0, rel=1e-12)
    assert product_fs_mass(Box(-30, 30, -30, 30), 1 / 3) == pytest.approx(4 / 3, rel=1e-12)


@pytest.mark.parametrize("box", box_grid())
def test_product_fs_region_closed_form(box):
    for nu in (0.0, 1 / 3):
        assert real_ma_measure(product_fs_profile(nu), box) == pytest.approx(
            product_fs_mass(box, nu), rel=1e-6, abs=1e-12)


def test_one_dimensional_identity():
    s1, s2 = -0.7, 1.3
    dg = lambda s: expit(2 * s)  # derivative of fs_profile_1d
    h = 1e-6
    fd = lambda s: (fs_profile_1d(s + h) - fs_profile_1d(s - h)) / (2 * h)
    assert real_ma_measure_1d(dg, s1, s2) == pytest.approx(fd(s2) - fd(s1), rel=1e-8)
    with pytest.raises(NonConvexProfile):
        real_ma_measure_1d(lambda s: -s, 0.0, 1.0)


def test_nonconvex_inputs_raise():
    pts = np.array([[s, t] for s in range(-2, 3) for t in range(-2, 3)], float)
    tab = TableProfile(pts, -(pts ** 2).sum(axis=1))
    tab2 = TableProfile(pts, (pts ** 2).sum(axis=1) + np.where((pts == 0).all(axis=1), 5.0, 0.0))
    for t in (tab, tab2):
        with pytest.raises(NonConvexProfile):
            real_ma_measure(t, Box(-1.5, 1.5, -1.5, 1.5))
    saddle = SmoothProfile(lambda s, t: s**2 - t**2, lambda s, t: (2 * s, -2 * t))
    with pytest.raises(NonConvexProfile):
        real_ma_measure(saddle, Box(-1, 1, -1, 1))


def test_quadratic_pl_vertex_masses():
    # g = s^2 + t^2 on a unit grid: each interior vertex carries gradient area 4
    pts = np.array([[s, t] for s in range(-3, 4) for t in range(-3, 4)], float)
    tab = TableProfile(pts, (pts ** 2).sum(axis=1))
    assert real_ma_measure(tab, Box(-0.5, 0.5, -0.5, 0.5)) == pytest.approx(2 * 4.0)


def test_parse_profile_table():
    text = "# s t g\n0 0 0\n1 0 1\n0 1 1\n-1 0 1\n0 -1 1\n"
    tab = parse_profile_table(text)
    assert tab.points.shape == (5, 2)
    # g = |s| + |t| near 0: cell gradients (+-1, +-1) span a square of area 4
    assert real_ma_measure(tab, Box(-0.5, 0.5, -0.5, 0.5)) == pytest.approx(2 * 4.0)
    with pytest.raises(ValueError):
        parse_profile_table("1 2\n")


# -- harnesses ----------------------------------------------------------------

def test_trend_pass_rules():
    assert trend_pass([1.0, 0.5, 0.3])
    assert not trend_pass([1.0, 0.9, 0.8])
    assert trend_pass([1e-15, 2e-15, 3e-15])


def test_softmax_converges_to_corner():
    tab = ma_convergence_harness(softmax_profile, corner_profile())
    assert tab.verdict
    # the region holding the corner ends up with all of the corner mass
    assert tab.approx[-1, 0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(tab.errors[:, 0]) < 0)
    lines = tab.to_csv().splitlines()
    assert len(lines) == 1 + 4 * len(default_ma_regions())


def test_pl_approximant_matches_boundary_route():
    v = product_fs_profile()
    box = Box(-0.5, 0.5, 0.0, 1.0)
    pl = real_ma_measure(pl_approximant(v, box, 0.05), box)
    assert pl == pytest.approx(real_ma_measure(v, box), rel=5e-3)


# -- Fubini-Study potentials of toric section spaces ------------------------------------

@pytest.mark.parametrize("p", [2, 4, 8])
def test_product_fs_square_equals_limit(p):
    tb = toric_basis(p, ProductWeight(FS, FS))
    regions = box_grid()
    got = toric_fs_square(tb, regions)
    ref = np.array([product_fs_mass(b) for b in regions])
    assert np.allclose(got, ref, rtol=1e-6, atol=1e-12)
    assert toric_total_mass(tb) == pytest.approx(2.0)


def test_toric_methods_agree():
    tb = toric_basis(4, ProductWeight(fubini_study_weight([(0, 1 / 3)]), FS))
    regions = (Box(-0.5, 0.5, -0.5, 0.5), Box(0.5, 1.0, -1.0, 0.0))
    a = toric_fs_square(tb, regions)
    b = toric_fs_square(tb, regions, method="pl", h=0.05)
    assert np.allclose(a, b, rtol=1e-2)


def test_atom_line_trend():
    nu = 1 / 3
    w = ProductWeight(fubini_study_weight([(0, nu)]), FS)
    regions = box_grid()
    p_list = [4, 8, 16]
    approx = np.array([toric_fs_square(toric_basis(p, w), regions) for p in p_list])
    tab = MATable(p_list, regions, approx, np.array([product_fs_mass(b, nu) for b in regions]))
    assert tab.verdict
