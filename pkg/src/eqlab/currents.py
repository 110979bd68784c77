"""Positive closed (1,1)-currents on the sphere: Fubini-Study currents of
section spaces, curvature currents of weights, and weak-convergence probes.

A current is stored as atoms (point, mass) plus an absolutely continuous
Lebesgue density on chart 0.  The point at infinity is ``complex(inf)``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import QuadratureFailure, UndefinedSpace
from .geom import SingularWeight, curvature_density, is_infinite
from .l2 import OrthoBasis, infinity_lelong

N_THETA = 64
CORE_LOG_RADIUS = -40.0


@dataclass(frozen=True)
class TestFunction:
    """Bump ``exp(1 - 1/(1 - t^2))``, ``t = |z - c| / R``, equal to 1 at the center."""

    __test__ = False  # not a pytest class
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")

    def _t(self, z):
        return np.abs(np.asarray(z, dtype=complex) - self.center) / self.radius

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        inside = t < 1.0
        tt = np.where(inside, t, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - tt**2)), 0.0)

    def __call__(self, z):
        if is_infinite(z) if np.ndim(z) == 0 else False:
            return 0.0
        return self.profile(self._t(z))

    def laplacian_profile(self, t):
        """Euclidean Laplacian of the bump as a function of t."""
        t = np.asarray(t, dtype=float)
        inside = t < 1.0
        tt = np.where(inside, t, 0.0)
        w = 1.0 - tt**2
        du = -2.0 * tt / w**2
        d2u = -2.0 / w**2 - 8.0 * tt**2 / w**3
        du_over_t = -2.0 / w**2
        chi = np.exp(1.0 - 1.0 / w)
        return np.where(inside, (d2u + du**2 + du_over_t) * chi / self.radius**2, 0.0)

    def laplacian(self, z):
        return self.laplacian_profile(self._t(z))


DEFAULT_BUMPS = ((0j, 1.0), (0.8 + 0j, 0.5), (-0.6 + 0.6j, 0.5), (1.5j, 0.8), (-1.8 + 0j, 1.2))


def default_family() -> tuple:
    return tuple(TestFunction(c, r) for c, r in DEFAULT_BUMPS)


@dataclass(frozen=True, eq=False)
class CurrentMeasure:
    """Atoms plus an absolutely continuous density (``None`` if absent)."""

    atoms: tuple
    density: Callable | None
    declared_mass: float
    ac_mass: float | None = None
    scale: float = 1.0
    label: str = ""
    cores: tuple = ()  # (point, eps): density carries eps * dd^c F near the point

    def __post_init__(self):
        atoms = tuple((complex(a), float(m)) for a, m in self.atoms if m != 0)
        for a, m in atoms:
            if m < 0:
                raise ValueError(f"negative atom mass {m} at {a}")
        object.__setattr__(self, "atoms", atoms)

    def eval_density(self, z):
        z = np.asarray(z, dtype=complex)
        if self.density is None:
            return np.zeros(z.shape)
        return self.scale * np.asarray(self.density(z), dtype=float)

    def scaled(self, c: float) -> "CurrentMeasure":
        return CurrentMeasure(tuple((a, c * m) for a, m in self.atoms), self.density,
                              c * self.declared_mass,
                              None if self.ac_mass is None else c * self.ac_mass,
                              c * self.scale, self.label, self.cores)

    def core_mass(self, a, r: float) -> float:
        """Density mass in B(a, r) carried by Poincare cores at ``a``
        (exact for r below the proxy knee: ``eps / (2 (-log r))``)."""
        tot = sum(eps for b, eps in self.cores if abs(complex(a) - b) <= 1e-12)
        return self.scale * tot / (2.0 * -math.log(r))

    @property
    def atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    def atom_at(self, a, tol: float = 1e-12) -> float:
        for b, m in self.atoms:
            if (is_infinite(a) and is_infinite(b)) or (
                    not is_infinite(a) and not is_infinite(b) and abs(complex(a) - b) <= tol):
                return m
        return 0.0

    def integrated_ac_mass(self, epsrel: float = 1e-9) -> float:
        """Numerical ``integral density dlambda`` over the whole chart."""
        if self.density is None:
            return 0.0
        theta = (np.arange(N_THETA) + 0.5) * (2 * np.pi / N_THETA)
        centers = [b for b, _ in self.cores] or [a for a, _ in self.atoms if not is_infinite(a)]
        c = centers[0] if len(set(centers)) == 1 else 0j

        def radial(s):
            z = c + np.exp(s) * np.exp(1j * theta)
            return 2 * np.pi * np.exp(2 * s) * float(np.mean(self.eval_density(z)))

        inner = self.core_mass(c, math.exp(CORE_LOG_RADIUS))
        return inner + _quad_sum(radial, [(CORE_LOG_RADIUS, -3.0), (-3.0, 3.0), (3.0, 60.0)],
                                 epsrel)

    def to_csv(self, samples=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "re", "im", "value"])
        for a, m in self.atoms:
            re, im = ("inf", "0") if is_infinite(a) else (repr(a.real), repr(a.imag))
            w.writerow(["atom", re, im, repr(m)])
        if samples is not None:
            samples = np.asarray(samples, dtype=complex)
            for z, d in zip(samples, self.eval_density(samples)):
                w.writerow(["density", repr(z.real), repr(z.imag), repr(float(d))])
        return buf.getvalue()


def _quad_sum(f, intervals, epsrel, limit=200, epsabs=1e-13):
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in intervals:
            try:
                total += integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)[0]
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(str(exc)) from exc
    return total


# ---------------------------------------------------------------------------
# Constructors


def _free_part_terms(F: np.ndarray, x: np.ndarray):
    """q_j(x) and q_j'(x), both divided by max(1, |x|)^D (the density is
    homogeneous of degree 0 in that rescaling)."""
    D = F.shape[1] - 1
    m = np.arange(D + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(x.astype(complex))
        shift = np.maximum(np.log(np.abs(x)), 0.0) * D
        pw = np.exp(m * logx[..., None] - shift[..., None])
        pw = np.where(np.isfinite(pw), pw, 0.0)
        pw[..., 0] = np.exp(-shift)
        dpw = np.zeros_like(pw)
        if D >= 1:
            dpw[..., 1:] = m[1:] * np.exp((m[1:] - 1) * logx[..., None] - shift[..., None])
            dpw[..., 1] = np.exp(-shift)
    return pw @ F.T, dpw @ F.T


def _fs_density_inner(F: np.ndarray, x):
    q, dq = _free_part_terms(F, x)
    Q = np.sum(np.abs(q) ** 2, axis=-1)
    num = np.sum(np.abs(dq) ** 2, axis=-1) * Q - np.abs(np.sum(dq * q.conj(), axis=-1)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / (np.pi * Q**2)


def fs_density_from_coeffs(F: np.ndarray, x):
    """AC density of ``(1/2) dd^c log sum_j |q_j|^2`` for polynomials with
    ascending coefficient rows ``F``.

    For |x| > 1 the density is computed in the chart w = 1/x from the
    reversed polynomials and pulled back by |x|^-4, which avoids the
    cancellation in the numerator at large |x|."""
    x = np.asarray(x, dtype=complex)
    big = np.abs(x) > 1.0
    out = np.empty(x.shape)
    out[~big] = _fs_density_inner(F, x[~big])
    if np.any(big):
        xb = x[big]
        out[big] = _fs_density_inner(F[:, ::-1], 1.0 / xb) / np.abs(xb) ** 4
    return out


def fs_current(basis: OrthoBasis) -> CurrentMeasure:
    """Fubini-Study current ``(1/2) dd^c log sum_j |s_j|^2`` of total mass p.

    Base points carry atoms equal to their forced vanishing orders; the
    point at infinity carries the degree drop."""
    if basis.d_p == 0:
        raise UndefinedSpace(f"d_p = 0 at p = {basis.p}: the Fubini-Study current is undefined")
    F = basis.free_coeffs
    atoms = tuple(basis.space.orders)
    return CurrentMeasure(atoms, lambda z: fs_density_from_coeffs(F, z), float(basis.p),
                          float(basis.d_p - 1), 1.0, f"gamma_{basis.p}")


def curvature_current(weight: SingularWeight, degree: float = 1.0) -> CurrentMeasure:
    """``dd^c phi`` split into Lelong atoms and the curvature density."""
    atoms = list(weight.finite_atoms)
    nu_inf = infinity_lelong(weight, degree)
    if nu_inf > 0:
        atoms.append((complex(math.inf), nu_inf))
    ac = degree - sum(m for _, m in atoms)
    cores = tuple((a, weight.epsilon) for a in weight.punctures) if weight.epsilon > 0 else ()
    return CurrentMeasure(tuple(atoms), lambda z: curvature_density(weight, z), float(degree),
                          ac, 1.0, "gamma", cores)


def siu_decompose(current: CurrentMeasure):
    """(atoms, absolutely continuous part) of a stored current."""
    ac = CurrentMeasure((), current.density, current.declared_mass - current.atom_mass,
                        current.ac_mass, current.scale, current.label + "_ac", current.cores)
    return current.atoms, ac


# ---------------------------------------------------------------------------
# Pairings


def _disk_integral(fun, tf: TestFunction, epsrel: float = 1e-9, log_start=-np.inf):
    """``integral fun(z) dlambda`` over the support disk of ``tf``; the
    radial variable near the center is log-scaled for integrable
    singularities there."""
    theta = (np.arange(N_THETA) + 0.5) * (2 * np.pi / N_THETA)
    ring = np.exp(1j * theta)
    R = tf.radius

    def by_rho(rho):
        v = fun(tf.center + rho * ring)
        return 2 * np.pi * rho * float(np.mean(np.where(np.isfinite(v), v, 0.0)))

    def by_s(s):
        rho = math.exp(s)
        return rho * by_rho(rho)

    cut = math.log(R / 8.0)
    lo = max(log_start, -700.0)
    total = _quad_sum(by_s, [(lo, min(-30.0, cut - 1.0)), (min(-30.0, cut - 1.0), cut)], epsrel)
    total += _quad_sum(by_rho, [(R / 8.0, R)], epsrel)
    return total


def pair(current: CurrentMeasure, tf: TestFunction, epsrel: float = 1e-9) -> float:
    """``sum_atoms chi(a) m + integral chi density``."""
    val = sum(m * float(tf(np.array(a))) for a, m in current.atoms if not is_infinite(a))
    if current.density is not None:
        start = -np.inf
        for a, _ in current.cores:
            d = abs(a - tf.center)
            if d <= 1e-12:
                start = CORE_LOG_RADIUS
            elif d < tf.radius:
                raise ValueError("test functions must be centered on Poincare cores they cover")
        if start > -np.inf:
            val += float(tf(np.array(tf.center))) * current.core_mass(tf.center, math.exp(start))
        val += _disk_integral(lambda z: tf(z) * current.eval_density(z), tf, epsrel, start)
    return float(val)


def weak_distance(c1: CurrentMeasure, c2: CurrentMeasure, family=None) -> float:
    family = default_family() if family is None else family
    return max(abs(pair(c1, tf) - pair(c2, tf)) for tf in family)


def pairing_table(current: CurrentMeasure, family=None) -> np.ndarray:
    family = default_family() if family is None else family
    return np.array([pair(current, tf) for tf in family])


def log_bergman_pairing(basis: OrthoBasis, tf: TestFunction, epsrel: float = 1e-9) -> float:
    """``(1/2) integral log P_p * Laplacian(chi) / (2 pi) dlambda``."""
    from .bergman import log_bergman

    def f(z):
        lp = log_bergman(basis, z)
        return np.where(np.isfinite(lp), lp, 0.0) * tf.laplacian(z)

    return 0.5 * _disk_integral(f, tf, epsrel) / (2 * np.pi)


def lemma_identity(basis: OrthoBasis, tf: TestFunction, gamma: CurrentMeasure | None = None):
    """Both sides of ``pair(gamma_p) - p pair(gamma) = (1/2) integral log P_p dd^c chi``."""
    gamma = curvature_current(basis.space.weight) if gamma is None else gamma
    lhs = pair(fs_current(basis), tf) - basis.p * pair(gamma, tf)
    rhs = log_bergman_pairing(basis, tf)
    return lhs, rhs
