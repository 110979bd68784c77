"""L^2 holomorphic sections of O(p): admissible monomials, Gram matrices,
orthonormal bases.

Sections of O(p) on the sphere are polynomials of degree <= p in the chart
z.  A weight with Lelong number nu at a point a forces every L^2 section to
vanish there to order k_min(a); the admissible space is therefore

    P0(z) * span{z^m : 0 <= m <= D},  P0 = prod_a (z - a)^{k_min(a)},

with the degree bound D = p - k_inf - sum_a k_min(a).  Basis element m is
prescaled by the inverse of its Fubini-Study norm.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln

from .errors import IllConditioned, NotPD, NotToric, PTooLarge, QuadratureFailure
from .geom import (PRODUCT, SPHERE, ModelSpace, SingularWeight, VolumeDensity,
                   is_infinite)

P_MAX = 64
COND_MAX = 1e12
BOUNDARY_TOL = 1e-9
MATCH_TOL = 1e-12


@dataclass(frozen=True)
class GramSpec:
    """Quadrature settings for Gram assembly."""

    epsabs: float = 0.0
    epsrel: float = 1e-11
    limit: int = 400
    angular_nodes: int | None = None
    prescale: bool = True

    def __post_init__(self):
        if self.epsabs < 0 or self.epsrel <= 0 or (self.epsabs == 0 and self.epsrel == 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.angular_nodes is not None and self.angular_nodes < 4:
            raise ValueError("angular node count must be >= 4")

    def nodes_for(self, p: int) -> int:
        # non-radial weights make the angular integrand non-polynomial, so keep a floor
        n = self.angular_nodes if self.angular_nodes is not None else max(4 * p + 8, 64)
        if n < 4 * p + 4:
            raise ValueError(f"angular node count {n} below 4p+4 = {4 * p + 4}")
        return n

    def key(self) -> str:
        return f"gram:{self.epsabs!r}:{self.epsrel!r}:{self.limit}:{self.angular_nodes}:{self.prescale}"


# ---------------------------------------------------------------------------
# Integrability filter


def fs_gram_diagonal(p: int) -> np.ndarray:
    """``k!(p-k)!/(p+1)!``: FS Gram of the bare monomials (total volume 1)."""
    k = np.arange(p + 1)
    return np.exp(gammaln(k + 1) + gammaln(p - k + 1) - gammaln(p + 2))


def _local_exponents(p: int, weight: SingularWeight, volume: VolumeDensity, a, nu: float):
    """(r-exponent offset, log-exponent) of the integrand near ``a`` for k = 0.

    The integrand of |z - a|^{2k} near ``a`` behaves like
    ``r^(2k + e0) (-log r)^q dr``."""
    e0 = -2.0 * p * nu + 1.0
    q = 0.0
    if is_infinite(a):
        return e0, q
    if volume.kind == "poincare" and any(abs(a - b) <= MATCH_TOL for b in volume.punctures):
        e0 -= 2.0
        q -= 2.0
    if weight.epsilon > 0 and any(abs(a - b) <= MATCH_TOL for b in weight.punctures):
        q += p * weight.epsilon
    return e0, q


def _admissible_order(e0: float, q: float, k: int) -> bool:
    e = 2 * k + e0
    if e > -1.0 + BOUNDARY_TOL:
        return True
    if e < -1.0 - BOUNDARY_TOL:
        return False
    return q < -1.0 - BOUNDARY_TOL


def minimal_order(p: int, weight: SingularWeight, volume: VolumeDensity, a, nu: float) -> int:
    """Smallest vanishing order at ``a`` making the local L^2 integral finite."""
    e0, q = _local_exponents(p, weight, volume, a, nu)
    k = max(0, math.floor((-2.0 - e0) / 2.0) - 1)
    while not _admissible_order(e0, q, k):
        k += 1
    return k


def infinity_lelong(weight: SingularWeight, degree: float = 1.0) -> float:
    """Lelong number at infinity implied by the log growth of a weight for O(degree)."""
    growth = weight.smooth.growth + sum(nu for _, nu in weight.finite_atoms)
    return max(0.0, degree - growth) if math.isfinite(growth) else 0.0


@dataclass(frozen=True)
class SectionSpace:
    """Admissible L^2 sections of O(p) on the sphere.

    ``orders`` maps each constrained point (``complex(inf)`` for infinity)
    to its forced vanishing order; ``exponents`` lists the z-degrees of the
    monomial factors ``z^(k0 + m)`` multiplying the non-origin base factor.
    """

    p: int
    weight: SingularWeight
    volume: VolumeDensity
    orders: tuple
    model: ModelSpace = SPHERE

    @property
    def k0(self) -> int:
        return self.order_at(0j)

    @property
    def k_inf(self) -> int:
        return self.order_at(complex(math.inf))

    def order_at(self, a) -> int:
        for b, k in self.orders:
            if (is_infinite(a) and is_infinite(b)) or (not is_infinite(a) and not is_infinite(b)
                                                       and abs(complex(a) - b) <= MATCH_TOL):
                return k
        return 0

    @property
    def other_roots(self) -> tuple:
        """Finite nonzero base points with multiplicity (roots of P0 / z^k0)."""
        out = []
        for b, k in self.orders:
            if not is_infinite(b) and b != 0:
                out.extend([b] * k)
        return tuple(out)

    @property
    def free_degree(self) -> int:
        """D: degree bound of the free polynomial factor (may be negative)."""
        used = sum(k for b, k in self.orders)
        return self.p - used

    @property
    def d_p(self) -> int:
        return max(0, self.free_degree + 1)

    @property
    def exponents(self) -> tuple:
        return tuple(self.k0 + m for m in range(self.d_p))

    @property
    def base_polynomial(self) -> np.ndarray:
        """Coefficients (highest degree first) of P0."""
        return np.poly(np.array([0j] * self.k0 + list(self.other_roots), dtype=complex)) \
            if (self.k0 or self.other_roots) else np.array([1.0 + 0j])

    def log_abs_base(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        with np.errstate(divide="ignore"):
            if self.k0:
                out = out + self.k0 * np.log(np.abs(z))
            for b in self.other_roots:
                out = out + np.log(np.abs(z - b))
        return out

    @cached_property
    def prescale(self) -> np.ndarray:
        """Inverse FS norms of the basis polynomials ``z^m P0``."""
        if self.d_p == 0:
            return np.zeros(0)
        base = self.base_polynomial[::-1]  # ascending
        diag = fs_gram_diagonal(self.p)
        out = np.empty(self.d_p)
        for m in range(self.d_p):
            coeffs = np.zeros(self.p + 1, dtype=complex)
            coeffs[m:m + len(base)] = base
            out[m] = 1.0 / math.sqrt(float(np.sum(np.abs(coeffs) ** 2 * diag)))
        return out

    def is_radial(self) -> bool:
        return self.weight.is_radial() and self.volume.is_radial() and not self.other_roots

    def key(self) -> str | None:
        wk = self.weight.key()
        if wk is None:
            return None
        return f"model={self.model.kind}|p={self.p}|{wk}|{self.volume.key()}"


def integrability_filter(p: int, weight: SingularWeight, volume: VolumeDensity | None = None,
                         model: ModelSpace = SPHERE) -> SectionSpace:
    """Admissible section space of O(p) for a sphere weight.

    A d_p = 0 result is a valid empty space, not an error."""
    if volume is None:
        volume = VolumeDensity()
    if p < 0:
        raise ValueError("p must be >= 0")
    if p > P_MAX:
        raise PTooLarge(f"p = {p} exceeds the double-precision cap {P_MAX}")
    if model.kind != "sphere":
        raise ValueError("integrability_filter handles the sphere; use toric_space for products")
    points = {}
    for a, nu in weight.finite_atoms:
        points[a] = points.get(a, 0.0) + nu
    if weight.epsilon > 0:
        for a in weight.punctures:
            points.setdefault(a, 0.0)
    if volume.kind == "poincare":
        for a in volume.punctures:
            points.setdefault(a, 0.0)
    orders = []
    for a, nu in points.items():
        k = minimal_order(p, weight, volume, a, nu)
        if k:
            orders.append((a, k))
    inf = complex(math.inf)
    k_inf = minimal_order(p, weight, volume, inf, infinity_lelong(weight))
    if k_inf:
        orders.append((inf, k_inf))
    return SectionSpace(p, weight, volume, tuple(orders), model)


def brute_force_admissible(p: int, weight: SingularWeight, volume: VolumeDensity, k: int,
                           at_infinity: bool = False, levels: int = 10) -> bool:
    """Oracle for the local L^2 condition of ``z^k`` at the origin (or of a
    section vanishing to order ``k`` at infinity).

    Integrates the actual weight and volume along the ray in dyadic blocks
    L = -log r in [2^j, 2^(j+1)] and declares divergence unless the block
    integrals shrink geometrically."""
    from .geom import transition_weight

    w = transition_weight(weight, degree=1) if at_infinity else weight
    blocks = []
    for j in range(levels):
        L = np.linspace(2.0**j, 2.0 ** (j + 1), 801)
        s = -L
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if at_infinity:
                # FS volume is symmetric under w -> 1/w
                logvol = volume.log_density_polar(-s) if volume.kind == "fs" else \
                    VolumeDensity().log_density_polar(s)
            else:
                logvol = volume.log_density_polar(s)
            g = 2.0 * k * s - 2.0 * p * w.eval_polar(s) + logvol + 2.0 * s
        blocks.append(float(np.logaddexp.reduce(g + np.log(np.gradient(L)))))
    blocks = np.array(blocks)
    if not np.all(np.isfinite(blocks)):
        return bool(np.all(blocks[np.isfinite(blocks)] < 0)) and np.isneginf(blocks[-1])
    with np.errstate(over="ignore"):
        ratios = np.exp(np.diff(blocks[-4:]))
    return bool(np.all(ratios < 0.9))


# ---------------------------------------------------------------------------
# Gram matrices


def _safe_log(fun_log, x):
    with np.errstate(all="ignore"):
        v = np.asarray(fun_log(x), dtype=float)
    return np.where(np.isnan(v), -np.inf, v)


def _window_quad(fun_log, grid, spec: GramSpec, drop=60.0):
    """(log scale, integral of exp(fun_log - scale)) over the grid span,
    restricted to where the integrand is within ``exp(-drop)`` of its peak."""
    gv = _safe_log(fun_log, grid)
    gmax = float(np.max(gv))
    if not np.isfinite(gmax):
        return -np.inf, 0.0
    keep = np.nonzero(gv > gmax - drop)[0]
    a = grid[max(keep[0] - 1, 0)]
    b = grid[min(keep[-1] + 1, len(grid) - 1)]
    peak = float(grid[int(np.argmax(gv))])

    def f(x):
        v = float(_safe_log(fun_log, np.float64(x))) - gmax
        return math.exp(v) if v > -745 else 0.0

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val = integrate.quad(f, a, b, points=[peak] if a < peak < b else None,
                                 epsabs=spec.epsabs, epsrel=spec.epsrel, limit=spec.limit)[0]
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    return gmax, val


_TAIL_GRID = np.linspace(-40.0, 14.0, 1081)


def _power_tail(fun_log, s_c: float):
    """log of the integral over (-inf, s_c] assuming ``exp(fun_log(s)) = A |s|^q``.

    Beyond |s| ~ e^14 every integrand here is a pure power of |s| up to
    exponentially small terms, while direct evaluation would lose digits to
    cancellation between terms linear in s."""
    g1 = float(_safe_log(fun_log, np.float64(s_c)))
    g2 = float(_safe_log(fun_log, np.float64(2.0 * s_c)))
    if not np.isfinite(g1):
        return -np.inf
    q = (g2 - g1) / math.log(2.0)
    if not q < -1.0:
        raise QuadratureFailure(f"radial integrand decays like |s|^{q:.3g}: divergent")
    return g1 + math.log(abs(s_c)) - math.log(-q - 1.0)


def _quad_log(fun_log, spec: GramSpec, lo=-80.0, hi=80.0, npts=1281):
    """log of ``integral exp(fun_log(s)) ds`` over R.

    The core [lo, hi] is integrated directly; each tail is mapped by
    s = lo - e^u (resp. hi + e^u) so algebraic decay in s becomes
    exponential decay in u.  The far left tail is closed in power form."""
    s_c = lo - math.exp(_TAIL_GRID[-1])
    parts = [
        _window_quad(fun_log, np.linspace(lo, hi, npts), spec),
        _window_quad(lambda u: fun_log(lo - np.exp(u)) + u, _TAIL_GRID, spec),
        _window_quad(lambda u: fun_log(hi + np.exp(u)) + u, _TAIL_GRID, spec),
        (_power_tail(fun_log, s_c), 1.0),
    ]
    top = max(g for g, _ in parts)
    if not np.isfinite(top):
        raise QuadratureFailure("integrand vanishes on the search grid")
    total = sum(v * math.exp(g - top) for g, v in parts if np.isfinite(g))
    if not total > 0:
        raise QuadratureFailure("nonpositive radial integral")
    return top + math.log(total)


def radial_log_norms(space: SectionSpace, spec: GramSpec = GramSpec()) -> np.ndarray:
    """log of the diagonal Gram entries for a radial space."""
    w, vol, p = space.weight, space.volume, space.p
    logpre = np.log(space.prescale) if spec.prescale else np.zeros(space.d_p)

    def make(e, lp):
        def g(s):
            return (2.0 * lp + 2.0 * e * s - 2.0 * p * w.eval_polar(s)
                    + vol.log_density_polar(s) + 2.0 * s)
        return g

    out = np.empty(space.d_p)
    for m, e in enumerate(space.exponents):
        out[m] = math.log(2.0 * math.pi) + _quad_log(make(e, logpre[m]), spec)
    return out


def _log_sections_polar(space: SectionSpace, s, theta, logpre):
    """Complex log of ``pre_m z^(k0+m) prod(z-b) e^{-p phi} f^{1/2} r`` on a polar grid."""
    w, vol, p = space.weight, space.volume, space.p
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    zeta = s + 1j * theta
    base = space.k0 * zeta
    if space.other_roots:
        z = np.exp(zeta)
        for b in space.other_roots:
            base = base + np.log(z - b)
    common = base - p * w.eval_polar(s, theta) + 0.5 * vol.log_density_polar(s, theta) + s
    m = np.arange(space.d_p)
    return logpre[:, None] + m[:, None] * zeta[None, :] + common[None, :]


def _nonradial_gram(space: SectionSpace, spec: GramSpec) -> np.ndarray:
    d = space.d_p
    n_theta = spec.nodes_for(space.p)
    theta = (np.arange(n_theta) + 0.5) * (2 * np.pi / n_theta)
    logpre = np.log(space.prescale) if spec.prescale else np.zeros(d)

    # radial window from the diagonal-average profile
    grid = np.linspace(-80.0, 80.0, 641)
    with np.errstate(all="ignore"):
        prof = np.array([np.max(2 * _log_sections_polar(space, np.full(n_theta, s), theta,
                                                        logpre).real) for s in grid])
    prof = np.where(np.isnan(prof), -np.inf, prof)
    gmax = float(np.max(prof))
    keep = np.nonzero(prof > gmax - 60.0)[0]
    a = grid[max(keep[0] - 1, 0)]
    b = grid[min(keep[-1] + 1, len(grid) - 1)]

    def integrand(s):
        with np.errstate(all="ignore"):
            lu = _log_sections_polar(space, np.full(n_theta, s), theta, logpre)
            u = np.exp(lu - gmax / 2)
        u = np.where(np.isfinite(u), u, 0.0)
        g = (u @ u.conj().T) * (2 * np.pi / n_theta)
        return g.ravel().view(float)

    total = np.zeros(2 * d * d)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for lo, hi in ((a, b), (-np.inf, a), (b, np.inf)):
            res = integrate.quad_vec(integrand, lo, hi, epsabs=spec.epsabs, epsrel=spec.epsrel,
                                     limit=spec.limit, full_output=True)
            total += res[0]
            if not res[2].success:
                raise QuadratureFailure(f"quad_vec did not converge on [{lo}, {hi}]")
    g = total.view(complex).reshape(d, d) * math.exp(gmax)
    return 0.5 * (g + g.conj().T)


def gram_matrix(space: SectionSpace, spec: GramSpec = GramSpec()) -> np.ndarray:
    """Gram matrix of the (prescaled) admissible basis in the L^2 product
    ``integral s conj(s') e^{-2 p phi} f dlambda`` over the chart."""
    if space.d_p == 0:
        raise ValueError("empty section space has no Gram matrix")
    if space.is_radial():
        return np.diag(np.exp(radial_log_norms(space, spec))).astype(complex)
    return _nonradial_gram(space, spec)


# ---------------------------------------------------------------------------
# Orthonormal bases


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Rows of ``C`` are orthonormal sections in the prescaled basis."""

    space: SectionSpace
    C: np.ndarray
    gram: np.ndarray | None
    cond: float
    provenance: str | None = None
    prescaled: bool = True

    @property
    def d_p(self) -> int:
        return self.space.d_p

    @property
    def p(self) -> int:
        return self.space.p

    @cached_property
    def free_coeffs(self) -> np.ndarray:
        """Row j: ascending coefficients of q_j with s_j = P0 * q_j."""
        scale = self.space.prescale if self.prescaled else np.ones(self.d_p)
        return self.C * scale[None, :]

    def with_unitary(self, U: np.ndarray) -> "OrthoBasis":
        return OrthoBasis(self.space, U @ self.C, self.gram, self.cond, None, self.prescaled)


def orthonormalize(G: np.ndarray, space: SectionSpace | None = None, provenance=None,
                   prescaled: bool = True) -> OrthoBasis:
    """Cholesky orthonormalization: G = L L*, C = L^{-1}, so C G C* = I."""
    G = np.asarray(G, dtype=complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("Gram matrix must be square")
    if not np.allclose(G, G.conj().T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(G))))):
        raise NotPD("Gram matrix is not Hermitian")
    try:
        L = linalg.cholesky(G, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPD(f"Cholesky breakdown: {exc}") from exc
    cond = float(np.linalg.cond(G))
    if not cond <= COND_MAX:
        raise IllConditioned(f"Gram condition estimate {cond:.3g} exceeds {COND_MAX:g}")
    C = linalg.solve_triangular(L, np.eye(G.shape[0], dtype=complex), lower=True)
    return OrthoBasis(space, C, G, cond, provenance, prescaled)


def basis_key(space: SectionSpace, spec: GramSpec) -> str | None:
    k = space.key()
    if k is None:
        return None
    return hashlib.sha256(f"{k}|{spec.key()}".encode()).hexdigest()


def build_basis(p: int, weight: SingularWeight, volume: VolumeDensity | None = None,
                spec: GramSpec = GramSpec(), cache=None) -> OrthoBasis:
    """Filter, assemble the Gram matrix and orthonormalize (optionally cached)."""
    space = integrability_filter(p, weight, volume)
    if space.d_p == 0:
        return OrthoBasis(space, np.zeros((0, 0), dtype=complex), None, 1.0, None, spec.prescale)
    key = basis_key(space, spec)
    if cache is not None and key is not None:
        C = cache.load(key, space.d_p)
        if C is not None:
            return OrthoBasis(space, C, None, float("nan"), key, spec.prescale)
    G = gram_matrix(space, spec)
    basis = orthonormalize(G, space, key, spec.prescale)
    if cache is not None and key is not None:
        cache.store(key, basis.C)
    return basis


def section_eval(basis: OrthoBasis, a, x):
    """Value of ``sum_j a_j s_j`` at chart points ``x`` (Horner on the free part)."""
    a = np.asarray(a, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if basis.d_p == 0:
        return np.zeros(x.shape, dtype=complex)
    q = a @ basis.free_coeffs
    val = np.polyval(q[::-1], x)
    base = np.polyval(basis.space.base_polynomial, x)
    return val * base


def sections_eval(basis: OrthoBasis, x) -> np.ndarray:
    """All orthonormal sections at ``x``: shape (d_p,) + x.shape."""
    x = np.asarray(x, dtype=complex)
    V = np.power.outer(x, np.arange(basis.d_p)) if basis.d_p else np.zeros(x.shape + (0,))
    q = np.moveaxis(V @ basis.free_coeffs.T, -1, 0)
    return q * np.polyval(basis.space.base_polynomial, x)


# ---------------------------------------------------------------------------
# Product of two spheres (toric)


@dataclass(frozen=True)
class ProductWeight:
    """Split weight phi(z1) + phi(z2) for O(1,1) on P^1 x P^1."""

    first: SingularWeight
    second: SingularWeight

    def __post_init__(self):
        for w in (self.first, self.second):
            if not w.is_radial():
                raise NotToric("product weights must be radial in each factor")

    def __call__(self, z1, z2):
        return self.first(z1) + self.second(z2)

    def eval_polar(self, s, t):
        return self.first.eval_polar(s) + self.second.eval_polar(t)

    def key(self) -> str | None:
        a, b = self.first.key(), self.second.key()
        return None if a is None or b is None else f"({a})x({b})"


@dataclass(frozen=True, eq=False)
class ToricBasis:
    """Orthonormal basis of O(p,p) sections for a product weight.

    Sections are products ``s_i(z1) t_j(z2)`` of the factor bases; the joint
    Gram matrix is the Kronecker product of the factor Gram matrices."""

    first: OrthoBasis
    second: OrthoBasis
    model: ModelSpace = PRODUCT

    @property
    def p(self) -> int:
        return self.first.p

    @property
    def d_p(self) -> int:
        return self.first.d_p * self.second.d_p

    @property
    def exponents(self) -> tuple:
        return tuple((a, b) for a in self.first.space.exponents for b in self.second.space.exponents)

    @cached_property
    def log_norm_coeffs(self) -> np.ndarray:
        """log|c_ab|: orthonormal section j equals c_ab z1^a z2^b for radial factors."""
        fa = np.log(np.abs(np.diag(self.first.free_coeffs)))
        fb = np.log(np.abs(np.diag(self.second.free_coeffs)))
        return (fa[:, None] + fb[None, :]).ravel()


def toric_basis(p: int, weight: ProductWeight, spec: GramSpec = GramSpec(),
                diag_tol: float = 1e-10, cache=None) -> ToricBasis:
    b1 = build_basis(p, weight.first, None, spec, cache)
    b2 = build_basis(p, weight.second, None, spec, cache)
    for b in (b1, b2):
        if b.gram is not None and b.d_p:
            off = b.gram - np.diag(np.diag(b.gram))
            if np.max(np.abs(off)) > diag_tol * np.max(np.abs(b.gram)):
                raise NotToric("Gram matrix is not diagonal")
    return ToricBasis(b1, b2)


def section_coefficients_2d(basis: ToricBasis, a) -> np.ndarray:
    """Monomial coefficients ``c[i, j]`` of z1^i z2^j for ``S_a``."""
    p = basis.p
    a = np.asarray(a, dtype=complex).reshape(basis.first.d_p, basis.second.d_p)
    A = basis.first.free_coeffs   # (d1, D1+1) ascending, times z1^k0
    B = basis.second.free_coeffs
    inner = A.T @ a @ B           # coefficients of z1^(k0+m) z2^(l0+n)
    out = np.zeros((p + 1, p + 1), dtype=complex)
    k1, k2 = basis.first.space.k0, basis.second.space.k0
    if basis.first.space.other_roots or basis.second.space.other_roots:
        raise NotToric("toric bases need base points at 0 or infinity only")
    out[k1:k1 + inner.shape[0], k2:k2 + inner.shape[1]] = inner
    return out
