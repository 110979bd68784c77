"""Real Monge-Ampere measures of convex toric profiles on R^2.

For a convex ``g(s, t)`` and ``u = g o Log`` on the torus, the mass of
``(dd^c u)^2`` over ``Log^{-1}(B)`` is ``2! * area(subgradient image of B)``.
Three profile kinds are supported:

* :class:`MaxAffineProfile` ``max_i (alpha_i . x + beta_i)``: masses are
  exact, read off the lower hull of the Legendre-dual points
  ``(alpha_i, -beta_i)``; each lower facet is a primal vertex whose mass is
  the facet's area in gradient space.
* :class:`TableProfile`: the convex piecewise-affine interpolant of a
  vertex/value table (lower hull of the lifted points); the mass at an
  interior vertex is the area of the convex hull of the incident cell
  gradients.
* :class:`SmoothProfile`: strictly convex with an evaluable gradient; the
  gradient image of a box is bounded by the image of its boundary, whose
  area is taken by the shoelace formula.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.special import expit, logsumexp

from .errors import NonConvexProfile, NotToric, UndefinedSpace

N_FACTORIAL = 2.0
TREND_RATIO = 0.6
EXACT_FLOOR = 1e-12
HULL_TOL = 1e-10


@dataclass(frozen=True)
class Box:
    """Half-open axis-aligned box ``[s0, s1) x [t0, t1)``."""

    s0: float
    s1: float
    t0: float
    t1: float

    def __post_init__(self):
        if not (self.s0 < self.s1 and self.t0 < self.t1):
            raise ValueError(f"degenerate box {self}")

    def contains(self, x, y):
        return (self.s0 <= x) & (x < self.s1) & (self.t0 <= y) & (y < self.t1)

    def boundary(self, n: int) -> np.ndarray:
        """Counter-clockwise boundary samples, n per side, shape (4n, 2)."""
        u = np.arange(n) / n
        sides = [
            np.c_[self.s0 + (self.s1 - self.s0) * u, np.full(n, self.t0)],
            np.c_[np.full(n, self.s1), self.t0 + (self.t1 - self.t0) * u],
            np.c_[self.s1 - (self.s1 - self.s0) * u, np.full(n, self.t1)],
            np.c_[np.full(n, self.s0), self.t1 - (self.t1 - self.t0) * u],
        ]
        return np.vstack(sides)


def polygon_area(pts: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon given by its vertices."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def hull_area(pts: np.ndarray) -> float:
    pts = np.unique(np.asarray(pts, dtype=float), axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0  # collinear gradients


# ---------------------------------------------------------------------------
# Profiles


@dataclass(frozen=True, eq=False)
class MaxAffineProfile:
    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        sl = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        ic = np.asarray(self.intercepts, dtype=float).ravel()
        if sl.shape != (len(ic), 2):
            raise ValueError("slopes must be (n, 2) matching intercepts")
        object.__setattr__(self, "slopes", sl)
        object.__setattr__(self, "intercepts", ic)

    def __call__(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        vals = s[..., None] * self.slopes[:, 0] + t[..., None] * self.slopes[:, 1] + self.intercepts
        return np.max(vals, axis=-1)

    def vertex_masses(self):
        """Primal vertices with their gradient-space areas: list of (x, area)."""
        pts = np.c_[self.slopes, -self.intercepts]
        pts = np.unique(pts, axis=0)
        if len(pts) < 3:
            return []
        try:
            hull = ConvexHull(pts, qhull_options="Qt")
        except QhullError:
            return self._coplanar_vertex(pts)
        out = []
        for simplex, eq in zip(hull.simplices, hull.equations):
            nx, ny, nz, off = eq
            if nz >= -HULL_TOL:
                continue  # upper or vertical facet
            # facet plane: -beta = a . alpha + c  =>  primal vertex x = a
            x = np.array([-nx / nz, -ny / nz])
            tri = pts[simplex, :2]
            area = abs(polygon_area(tri))
            if area > 0:
                out.append((x, area))
        return _merge_vertices(out)

    @staticmethod
    def _coplanar_vertex(pts):
        A = np.c_[pts[:, :2], np.ones(len(pts))]
        coef, *_ = np.linalg.lstsq(A, pts[:, 2], rcond=None)
        area = hull_area(pts[:, :2])
        return [(coef[:2].copy(), area)] if area > 0 else []

    def ma_measure(self, box: Box) -> float:
        return N_FACTORIAL * sum(a for x, a in self.vertex_masses() if box.contains(x[0], x[1]))


def _merge_vertices(items, tol=1e-9):
    merged = []
    for x, a in items:
        for k, (y, b) in enumerate(merged):
            if np.max(np.abs(x - y)) <= tol * (1 + np.max(np.abs(y))):
                merged[k] = (y, b + a)
                break
        else:
            merged.append((x, a))
    return merged


@dataclass(frozen=True, eq=False)
class TableProfile:
    """Convex piecewise-affine interpolant of scattered (s, t, g) data."""

    points: np.ndarray
    values: np.ndarray
    tol: float = 1e-9

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape != (len(vals), 2):
            raise ValueError("points must be (n, 2) matching values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def _hull(self):
        lifted = np.c_[self.points, self.values]
        try:
            return ConvexHull(lifted, qhull_options="Qt")
        except QhullError:
            return None

    def lower_facets(self):
        """(vertex index triples, plane coefficients (a, b, c) with g = a s + b t + c)."""
        hull = self._hull()
        if hull is None:
            return np.zeros((0, 3), dtype=int), np.zeros((0, 3))
        keep = hull.equations[:, 2] < -HULL_TOL
        eqs = hull.equations[keep]
        planes = np.c_[-eqs[:, 0] / eqs[:, 2], -eqs[:, 1] / eqs[:, 2], -eqs[:, 3] / eqs[:, 2]]
        return hull.simplices[keep], planes

    def check_convex(self):
        simp, planes = self.lower_facets()
        if len(planes) == 0:
            return  # all lifted points coplanar: affine data
        env = np.max(self.points @ planes[:, :2].T + planes[:, 2], axis=1)
        scale = 1.0 + np.max(np.abs(self.values))
        gap = self.values - env
        if np.max(gap) > self.tol * scale:
            i = int(np.argmax(gap))
            raise NonConvexProfile(
                f"value at {tuple(self.points[i])} lies {gap[i]:.3g} above the convex envelope")

    def __call__(self, s, t):
        simp, planes = self.lower_facets()
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        if len(planes) == 0:
            A = np.c_[self.points, np.ones(len(self.points))]
            coef, *_ = np.linalg.lstsq(A, self.values, rcond=None)
            return coef[0] * s + coef[1] * t + coef[2]
        return np.max(s[..., None] * planes[:, 0] + t[..., None] * planes[:, 1] + planes[:, 2],
                      axis=-1)

    def vertex_masses(self):
        """(vertex point, gradient-space area) for vertices interior to the data hull."""
        self.check_convex()
        simp, planes = self.lower_facets()
        if len(planes) == 0:
            return []
        try:
            boundary = set(ConvexHull(self.points).vertices.tolist())
        except QhullError:
            return []
        # points on hull edges (not only corners) are boundary too
        hull2 = ConvexHull(self.points)
        d = self.points @ hull2.equations[:, :2].T + hull2.equations[:, 2]
        on_edge = np.any(np.abs(d) <= 1e-12 * (1 + np.max(np.abs(self.points))), axis=1)
        incident: dict[int, list] = {}
        for tri, pl in zip(simp, planes):
            for v in tri:
                incident.setdefault(int(v), []).append(pl[:2])
        out = []
        for v, grads in incident.items():
            if v in boundary or on_edge[v]:
                continue
            area = hull_area(np.array(grads))
            if area > 0:
                out.append((self.points[v], area))
        return out

    def ma_measure(self, box: Box) -> float:
        return N_FACTORIAL * sum(a for x, a in self.vertex_masses() if box.contains(x[0], x[1]))


@dataclass(frozen=True, eq=False)
class SmoothProfile:
    """Strictly convex smooth profile with gradient ``grad(s, t) -> (gs, gt)``."""

    value: Callable
    grad: Callable
    polytope: np.ndarray | None = None
    name: str = "smooth"

    def __call__(self, s, t):
        return self.value(s, t)

    def ma_measure(self, box: Box, n: int = 4096) -> float:
        b = box.boundary(n)
        gs, gt = self.grad(b[:, 0], b[:, 1])
        area = polygon_area(np.c_[gs, gt])
        if area < -1e-12:
            raise NonConvexProfile("gradient map reverses orientation on the box boundary")
        return N_FACTORIAL * max(area, 0.0)


def real_ma_measure(profile, box: Box, **kw) -> float:
    """Mass of ``(dd^c (g o Log))^2`` over ``Log^{-1}(box)``."""
    return float(profile.ma_measure(box, **kw))


def real_ma_measure_1d(dg: Callable, s1: float, s2: float) -> float:
    """One-variable analogue: ``g'(s2) - g'(s1)``."""
    if s2 < s1:
        raise ValueError("need s1 <= s2")
    m = float(dg(s2) - dg(s1))
    if m < -1e-14:
        raise NonConvexProfile("derivative decreases on the interval")
    return m


def pl_approximant(profile, box: Box, h: float, margin: int = 2) -> TableProfile:
    """Piecewise-affine interpolant on a grid of step ``h`` offset by h/2 from
    the box corners, so no vertex lies on the box boundary."""
    s = np.arange(box.s0 - (margin - 0.5) * h, box.s1 + margin * h, h)
    t = np.arange(box.t0 - (margin - 0.5) * h, box.t1 + margin * h, h)
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.c_[S.ravel(), T.ravel()]
    return TableProfile(pts, profile(pts[:, 0], pts[:, 1]))


def parse_profile_table(text: str) -> TableProfile:
    """Plain-text vertex/value table: one ``s t g`` triple per line, ``#`` comments."""
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in line.replace(",", " ").split()])
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("profile table needs three columns: s t g")
    return TableProfile(arr[:, :2], arr[:, 2])


# ---------------------------------------------------------------------------
# Presets


def fs_profile_1d(s, scale: float = 1.0, shift: float = 0.0):
    """``scale/2 log(1 + e^{2s}) + shift s``."""
    return 0.5 * scale * np.logaddexp(0.0, 2.0 * np.asarray(s, dtype=float)) + shift * s


def product_fs_profile(nu: float = 0.0) -> SmoothProfile:
    """Toric potential of ``nu [z1 = 0] + (1 - nu) w1 + w2`` on P^1 x P^1."""

    def value(s, t):
        return fs_profile_1d(s, 1.0 - nu, nu) + fs_profile_1d(t)

    def grad(s, t):
        return (1.0 - nu) * expit(2.0 * np.asarray(s)) + nu, expit(2.0 * np.asarray(t))

    return SmoothProfile(value, grad, np.array([[nu, 0], [1, 0], [1, 1], [nu, 1]]),
                         f"product-fs(nu={nu})")


def product_fs_mass(box: Box, nu: float = 0.0) -> float:
    """Closed-form region mass of the product profile."""
    a = expit(2.0 * box.s1) - expit(2.0 * box.s0)
    b = expit(2.0 * box.t1) - expit(2.0 * box.t0)
    return N_FACTORIAL * (1.0 - nu) * a * b


def corner_profile() -> MaxAffineProfile:
    """``v = max(s, t, 0)``."""
    return MaxAffineProfile(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.zeros(3))


def softmax_profile(p: int) -> SmoothProfile:
    """``v_p = (1/p) log(e^{ps} + e^{pt} + 1)``, converging uniformly to ``max(s, t, 0)``."""

    def value(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        return logsumexp(np.stack([p * s, p * t, np.zeros_like(s)]), axis=0) / p

    def grad(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        z = np.stack([p * s, p * t, np.zeros_like(s)])
        w = np.exp(z - logsumexp(z, axis=0))
        return w[0], w[1]

    return SmoothProfile(value, grad, np.array([[0, 0], [1, 0], [0, 1]]), f"softmax(p={p})")


def default_ma_regions() -> tuple:
    return (
        Box(-1.0, 1.0, -1.0, 1.0),     # contains the corner of max(s, t, 0)
        Box(0.5, 2.0, 0.25, 2.5),      # straddles the ray s = t > 0
        Box(-2.0, -0.5, -0.5, 0.5),    # straddles the ray t = 0 > s
        Box(1.0, 2.0, -3.0, -2.0),     # v smooth (affine) here
    )


def box_grid(lo: float = -3.0, hi: float = 3.0, n: int = 3) -> tuple:
    e = np.linspace(lo, hi, n + 1)
    return tuple(Box(e[i], e[i + 1], e[j], e[j + 1]) for i in range(n) for j in range(n))


# ---------------------------------------------------------------------------
# Harnesses


def trend_pass(errors, ratio: float = TREND_RATIO, floor: float = EXACT_FLOOR) -> bool:
    """Last value <= ratio x first, or the whole sweep is exact to ``floor``."""
    errors = [abs(e) for e in errors]
    if max(errors) <= floor:
        return True
    return errors[-1] <= ratio * errors[0]


@dataclass
class MATable:
    p_list: list
    regions: tuple
    approx: np.ndarray   # (len(p_list), len(regions))
    limit: np.ndarray    # (len(regions),)

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.approx - self.limit[None, :])

    @property
    def verdicts(self) -> list:
        return [trend_pass(self.errors[:, j]) for j in range(len(self.regions))]

    @property
    def verdict(self) -> bool:
        return all(self.verdicts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "region", "s0", "s1", "t0", "t1", "mass", "limit_mass", "abs_error",
                    "verdict"])
        verd = self.verdicts
        for i, p in enumerate(self.p_list):
            for j, b in enumerate(self.regions):
                w.writerow([p, j, repr(b.s0), repr(b.s1), repr(b.t0), repr(b.t1),
                            repr(float(self.approx[i, j])), repr(float(self.limit[j])),
                            repr(float(self.errors[i, j])), "pass" if verd[j] else "fail"])
        return buf.getvalue()


def ma_convergence_harness(v_p: Callable, v, regions=None, p_list=(4, 8, 16, 32),
                           limit_masses=None) -> MATable:
    """Region masses of ``v_p(p)`` against those of the limit profile ``v``."""
    regions = default_ma_regions() if regions is None else tuple(regions)
    p_list = list(p_list)
    if limit_masses is None:
        limit = np.array([real_ma_measure(v, b) for b in regions])
    else:
        limit = np.asarray(limit_masses, dtype=float)
    approx = np.array([[real_ma_measure(v_p(p), b) for b in regions] for p in p_list])
    return MATable(p_list, regions, approx, limit)


# ---------------------------------------------------------------------------
# Fubini-Study potentials of toric section spaces


def toric_potential(exponents, log_abs_coeffs, p: int) -> SmoothProfile:
    """``u_p = (1/2p) log sum_j exp(2 (a_j s + b_j t) + 2 log|c_j|)``."""
    E = np.asarray(exponents, dtype=float)
    lc = np.asarray(log_abs_coeffs, dtype=float)

    def _z(s, t):
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        return 2.0 * (s[..., None] * E[:, 0] + t[..., None] * E[:, 1] + lc)

    def value(s, t):
        return logsumexp(_z(s, t), axis=-1) / (2.0 * p)

    def grad(s, t):
        z = _z(s, t)
        w = np.exp(z - logsumexp(z, axis=-1, keepdims=True))
        return (w @ E[:, 0]) / p, (w @ E[:, 1]) / p

    return SmoothProfile(value, grad, E / p, f"u_{p}")


def toric_fs_square(basis, regions=None, method: str = "boundary", h: float = 0.05):
    """Region masses of ``gamma_p^2 / p^2`` in the torus chart of P^1 x P^1.

    ``method`` is ``"boundary"`` (gradient image of the smooth potential) or
    ``"pl"`` (piecewise-affine approximant of step ``h``)."""
    if basis.d_p == 0:
        raise UndefinedSpace("empty toric section space")
    for b in (basis.first, basis.second):
        if b.gram is not None:
            off = b.gram - np.diag(np.diag(b.gram))
            if np.max(np.abs(off)) > 1e-10 * np.max(np.abs(b.gram)):
                raise NotToric("Gram matrix is not diagonal")
    regions = box_grid() if regions is None else tuple(regions)
    u = toric_potential(basis.exponents, basis.log_norm_coeffs, basis.p)
    if method == "boundary":
        return np.array([real_ma_measure(u, b) for b in regions])
    if method == "pl":
        return np.array([real_ma_measure(pl_approximant(u, b, h), b) for b in regions])
    raise ValueError(f"unknown method {method!r}")


def toric_total_mass(basis) -> float:
    """Torus mass of ``gamma_p^2/p^2``: 2 x area of the Newton polygon / p^2."""
    E = np.asarray(basis.exponents, dtype=float) / basis.p
    return N_FACTORIAL * hull_area(E)
