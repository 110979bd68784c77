"""Model spaces and singular Hermitian weights.

Conventions
-----------
A weight ``phi`` on a chart defines the metric ``h(e, e) = exp(-2 phi)``.
Curvature is ``dd^c phi`` with ``d^c = (1/2 pi i)(d - dbar)``, so the
Lebesgue density of the curvature current is ``Laplacian(phi) / (2 pi)``
and ``dd^c log|z|`` is the unit Dirac mass at the origin.

Weights are made of a smooth part (a named preset, so configs can refer to
it), logarithmic atoms ``nu log|z - a|`` and an optional Poincare-type
perturbation ``-(eps/2) sum log(-log|sigma_j|)``.  The point at infinity of
a chart is written ``complex(inf)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DegenerateStencil, InvalidEpsilon, OutOfDomain

INF = complex(math.inf, 0.0)

# |sigma| proxy: equal to the distance up to the knee, then saturates
# smoothly (C^1) at 1/2 so that |sigma| < 1 holds everywhere.
PROXY_KNEE = 0.25
PROXY_CAP = 0.5

SEMIPOSITIVITY_TOL = 1e-6
VALIDATION_RADII = np.logspace(-2.0, 2.0, 64)
VALIDATION_ANGLES = (np.arange(64) + 0.5) * (2.0 * np.pi / 64)


def is_infinite(a) -> bool:
    return not np.isfinite(complex(a))


def _same_point(a, b, tol=1e-12) -> bool:
    if is_infinite(a) or is_infinite(b):
        return is_infinite(a) and is_infinite(b)
    return abs(complex(a) - complex(b)) <= tol


def distance_proxy(r):
    """Smooth stand-in for ``|sigma_j|`` as a function of the distance ``r``."""
    r = np.asarray(r, dtype=float)
    sat = PROXY_CAP - (PROXY_CAP - PROXY_KNEE) * np.exp(-(r - PROXY_KNEE) / (PROXY_CAP - PROXY_KNEE))
    return np.where(r <= PROXY_KNEE, r, sat)


def _proxy_derivatives(r):
    r = np.asarray(r, dtype=float)
    w = PROXY_CAP - PROXY_KNEE
    e = np.exp(-(r - PROXY_KNEE) / w)
    inner = r <= PROXY_KNEE
    rho = np.where(inner, r, PROXY_CAP - w * e)
    d1 = np.where(inner, 1.0, e)
    d2 = np.where(inner, 0.0, -e / w)
    return rho, d1, d2


def _neg_log_proxy_polar(s):
    """``-log(distance_proxy(exp(s)))`` evaluated stably for very negative ``s``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore"):
        r = np.exp(np.minimum(s, 700.0))
    with np.errstate(divide="ignore"):
        return np.where(s <= math.log(PROXY_KNEE), -s, -np.log(distance_proxy(r)))


def _poincare_F_density(r):
    """Lebesgue density of ``dd^c F`` for ``F = -(1/2) log(-log rho(r))`` (radial)."""
    rho, d1, d2 = _proxy_derivatives(r)
    L = -np.log(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = 0.5 * (d2 / (rho * L) - d1**2 / (rho**2 * L) + d1**2 / (rho**2 * L**2)) \
            + 0.5 * d1 / (r * rho * L)
    return lap / (2.0 * np.pi)


# ---------------------------------------------------------------------------
# Model spaces


@dataclass(frozen=True)
class ModelSpace:
    """``sphere``: P^1 with charts z and w = 1/z, bundle O(1).
    ``product``: P^1 x P^1 in the torus chart (z1, z2), bundle O(1, 1)."""

    kind: str = "sphere"

    def __post_init__(self):
        if self.kind not in ("sphere", "product"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return 1 if self.kind == "sphere" else 2

    @property
    def class_mass(self) -> float:
        # c_1(O(1))^n: 1 on P^1, c_1(O(1,1))^2 = 2 on P^1 x P^1
        return 1.0 if self.kind == "sphere" else 2.0

    @staticmethod
    def transition(z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return 1.0 / z


SPHERE = ModelSpace("sphere")
PRODUCT = ModelSpace("product")


# ---------------------------------------------------------------------------
# Smooth parts


class SmoothPart:
    """Smooth real function on a chart with optional closed-form curvature."""

    name = "abstract"
    radial = False
    growth = math.inf  # coefficient of log|z| as |z| -> infinity

    def value(self, z):
        raise NotImplementedError

    def value_polar(self, s, theta):
        s = np.asarray(s, dtype=float)
        return self.value(np.exp(s + 1j * np.asarray(theta, dtype=float)))

    def laplace_density(self, z):
        """Lebesgue density of dd^c of this part, or None if unknown."""
        return None

    def spec(self):
        """(preset id, scale) for serializable parts, otherwise None."""
        return None


@dataclass(frozen=True)
class FubiniStudyPart(SmoothPart):
    """``scale * (1/2) log(1 + |z|^2)``."""

    scale: float = 1.0
    name = "fs"
    radial = True

    @property
    def growth(self):
        return self.scale

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        return 0.5 * self.scale * np.log1p(np.abs(z) ** 2)

    def value_polar(self, s, theta):
        return 0.5 * self.scale * np.logaddexp(0.0, 2.0 * np.asarray(s, dtype=float))

    def laplace_density(self, z):
        r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
        return self.scale / (np.pi * (1.0 + r2) ** 2)

    def spec(self):
        return ("fs", self.scale)


@dataclass(frozen=True)
class SkewFubiniStudyPart(SmoothPart):
    """``scale * (1/2) log(|z|^2 + 1 + |z - 1|^2)``: pull-back of the
    Fubini-Study weight by a linear map into P^2; smooth, psh, not radial."""

    scale: float = 1.0
    name = "fs-skew"
    radial = False

    @property
    def growth(self):
        return self.scale

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        q = np.abs(z) ** 2 + 1.0 + np.abs(z - 1.0) ** 2
        return 0.5 * self.scale * np.log(q)

    def value_polar(self, s, theta):
        s = np.asarray(s, dtype=float)
        c = np.cos(np.asarray(theta, dtype=float))
        with np.errstate(over="ignore"):
            small = np.log1p(np.exp(2 * np.minimum(s, 0)) - np.exp(np.minimum(s, 0)) * c)
            big = 2 * s + np.log1p(np.exp(-2 * np.maximum(s, 0)) - np.exp(-np.maximum(s, 0)) * c)
        logq = math.log(2.0) + np.where(s <= 0, small, big)
        return 0.5 * self.scale * logq

    def laplace_density(self, z):
        z = np.asarray(z, dtype=complex)
        q = np.abs(z) ** 2 + 1.0 + np.abs(z - 1.0) ** 2
        return 3.0 * self.scale / (np.pi * q**2)

    def spec(self):
        return ("fs-skew", self.scale)


@dataclass(frozen=True)
class QuadraticFSPart(SmoothPart):
    """``scale * ((1/2) log(1 + |z|^2) + |z|^2 / 4)``; local fixture only
    (it does not extend to a metric on O(1))."""

    scale: float = 1.0
    name = "fs-quadratic"
    radial = True
    growth = math.inf

    def value(self, z):
        r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
        return self.scale * (0.5 * np.log1p(r2) + 0.25 * r2)

    def laplace_density(self, z):
        r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
        return self.scale * (1.0 / (np.pi * (1.0 + r2) ** 2) + 1.0 / (2.0 * np.pi))

    def spec(self):
        return ("fs-quadratic", self.scale)


@dataclass(frozen=True, eq=False)
class TransformedPart(SmoothPart):
    """Smooth part of a weight seen through the other chart of the sphere."""

    source: "SingularWeight"
    log_coef: float
    const: float
    name = "transformed"

    @property
    def radial(self):
        return self.source.is_radial()

    @property
    def growth(self):
        return self.log_coef

    def value(self, w):
        w = np.asarray(w, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = 1.0 / w
            return (self.source.smooth.value(z) + self.source.poincare_term(z)
                    + self.log_coef * np.log(np.abs(w)) + self.const)

    def value_polar(self, s, theta):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return (self.source.smooth.value_polar(-s, -theta)
                + self.source.poincare_term_polar(-s, -theta)
                + self.log_coef * s + self.const)


SMOOTH_PRESETS: dict[str, Callable[[float], SmoothPart]] = {
    "fs": FubiniStudyPart,
    "fs-skew": SkewFubiniStudyPart,
    "fs-quadratic": QuadraticFSPart,
    "zero": lambda scale=0.0: FubiniStudyPart(0.0),
}


def smooth_preset(name: str, scale: float = 1.0) -> SmoothPart:
    try:
        factory = SMOOTH_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown smooth-part preset {name!r}") from None
    return factory(scale)


# ---------------------------------------------------------------------------
# Weights


@dataclass(frozen=True)
class SingularWeight:
    """Local weight = smooth part + sum nu_i log|z - a_i| + Poincare term.

    ``atoms`` holds ``(point, nu)`` pairs; a point equal to ``complex(inf)``
    records a Lelong number at the chart's point at infinity (its log growth
    is then carried by the smooth part).  ``punctures`` are the finite points
    entering the Poincare perturbation with strength ``epsilon``.
    """

    smooth: SmoothPart = field(default_factory=FubiniStudyPart)
    atoms: tuple = ()
    epsilon: float = 0.0
    punctures: tuple = ()
    chart: str = "0"

    def __post_init__(self):
        atoms = tuple((complex(a), float(nu)) for a, nu in self.atoms)
        for a, nu in atoms:
            if not nu >= 0:
                raise ValueError(f"Lelong coefficient must be >= 0, got {nu} at {a}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "punctures", tuple(complex(a) for a in self.punctures))
        if self.epsilon < 0:
            raise InvalidEpsilon(f"epsilon must be >= 0, got {self.epsilon}")
        if any(is_infinite(a) for a in self.punctures):
            raise ValueError("Poincare punctures must be finite chart points")

    # -- bookkeeping
    @property
    def finite_atoms(self):
        return tuple((a, nu) for a, nu in self.atoms if not is_infinite(a))

    @property
    def nu_infinity(self) -> float:
        return sum(nu for a, nu in self.atoms if is_infinite(a))

    def is_radial(self) -> bool:
        return (self.smooth.radial
                and all(a == 0 or is_infinite(a) for a, _ in self.atoms)
                and all(a == 0 for a in self.punctures))

    def total_mass(self) -> float:
        """Cohomological mass implied by the growth at infinity plus atoms there."""
        return self.smooth.growth + sum(nu for _, nu in self.finite_atoms)

    def key(self):
        spec = self.smooth.spec()
        if spec is None:
            return None
        atoms = ";".join(f"{_fmt_point(a)}:{nu!r}" for a, nu in self.atoms)
        punct = ";".join(_fmt_point(a) for a in self.punctures)
        return f"smooth={spec[0]}:{spec[1]!r}|atoms={atoms}|eps={self.epsilon!r}|punct={punct}|chart={self.chart}"

    # -- evaluation
    def poincare_term(self, z):
        z = np.asarray(z, dtype=complex)
        if self.epsilon == 0 or not self.punctures:
            return np.zeros(z.shape)
        total = np.zeros(z.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            for a in self.punctures:
                total = total + np.log(-np.log(distance_proxy(np.abs(z - a))))
        return -0.5 * self.epsilon * total

    def poincare_term_polar(self, s, theta):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.epsilon == 0 or not self.punctures:
            return np.zeros(np.broadcast(s, theta).shape)
        total = np.zeros(np.broadcast(s, theta).shape)
        for a in self.punctures:
            if a == 0:
                total = total + np.log(_neg_log_proxy_polar(s) + 0 * theta)
            else:
                z = np.exp(s + 1j * theta)
                with np.errstate(divide="ignore", invalid="ignore"):
                    total = total + np.log(-np.log(distance_proxy(np.abs(z - a))))
        return -0.5 * self.epsilon * total

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        val = self.smooth.value(z) + self.poincare_term(z)
        with np.errstate(divide="ignore"):
            for a, nu in self.finite_atoms:
                if nu > 0:
                    val = val + nu * np.log(np.abs(z - a))
        return val

    def eval_polar(self, s, theta=0.0):
        """Weight at ``exp(s + i theta)``, stable for |s| in the hundreds."""
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        val = self.smooth.value_polar(s, theta) + self.poincare_term_polar(s, theta)
        for a, nu in self.finite_atoms:
            if nu == 0:
                continue
            if a == 0:
                val = val + nu * s
            else:
                z = np.exp(s + 1j * theta)
                with np.errstate(divide="ignore"):
                    val = val + nu * np.log(np.abs(z - a))
        return val


def _fmt_point(a) -> str:
    a = complex(a)
    if is_infinite(a):
        return "inf"
    return f"{a.real!r}{a.imag:+}j"


def fubini_study_weight(atoms=(), co_mass=True) -> SingularWeight:
    """FS weight for O(1), optionally with atoms at finite points.

    With ``co_mass`` the smooth part is scaled by ``1 - sum(nu)`` so that the
    curvature current keeps total mass 1."""
    atoms = tuple(atoms)
    scale = 1.0 - sum(nu for _, nu in atoms) if co_mass else 1.0
    if scale < 0:
        raise ValueError("atom masses exceed the class of O(1)")
    return SingularWeight(FubiniStudyPart(scale), atoms)


def eval_weight(w: SingularWeight, x):
    return w(x)


def lelong_number(w: SingularWeight, a) -> float:
    for b, nu in w.atoms:
        if _same_point(a, b):
            return nu
    return 0.0


def fd_step(x) -> float:
    return 1e-4 * (1.0 + abs(complex(x)))


def curvature_density(w: SingularWeight, x, method: str = "auto"):
    """Lebesgue density of ``dd^c w`` at a chart point off the atoms.

    ``method`` is ``"closed"``, ``"stencil"`` or ``"auto"`` (closed form when
    the smooth part provides one)."""
    closed = w.smooth.laplace_density(np.asarray(x, dtype=complex))
    if method == "closed" and closed is None:
        raise ValueError("no closed-form curvature for this smooth part")
    if closed is not None and method in ("auto", "closed"):
        x = np.asarray(x, dtype=complex)
        dens = closed
        if w.epsilon > 0:
            for a in w.punctures:
                dens = dens + w.epsilon * _poincare_F_density(np.abs(x - a))
        return dens
    x = np.asarray(x, dtype=complex)
    out = np.empty(x.shape)
    for idx, xi in np.ndenumerate(x):
        out[idx] = _stencil_density(w, complex(xi))
    return out if out.shape else float(out)


def _stencil_density(w: SingularWeight, x: complex) -> float:
    h = fd_step(x)
    for a, nu in w.finite_atoms:
        if abs(x - a) < 2 * h:
            raise DegenerateStencil(f"point {x} within 2h={2 * h:g} of atom {a}")
    for a in w.punctures:
        if w.epsilon > 0 and abs(x - a) < 2 * h:
            raise DegenerateStencil(f"point {x} within 2h={2 * h:g} of puncture {a}")
    pts = np.array([x + h, x - h, x + 1j * h, x - 1j * h, x])
    v = w(pts)
    lap = (v[0] + v[1] + v[2] + v[3] - 4.0 * v[4]) / h**2
    return float(lap / (2.0 * np.pi))


def validation_grid() -> np.ndarray:
    """Fixed 64 x 64 polar grid used for semipositivity checks."""
    return (VALIDATION_RADII[:, None] * np.exp(1j * VALIDATION_ANGLES[None, :])).ravel()


def min_curvature_on_grid(w: SingularWeight, delta_min: float = 0.0) -> float:
    pts = validation_grid()
    keep = np.ones(pts.shape, dtype=bool)
    guard = [a for a, _ in w.finite_atoms] + list(w.punctures)
    for a in guard:
        keep &= np.abs(pts - a) >= max(delta_min, 3 * fd_step(abs(a) + 1e2))
    return float(np.min(curvature_density(w, pts[keep])))


def is_semipositive(w: SingularWeight, tol: float = SEMIPOSITIVITY_TOL) -> bool:
    return min_curvature_on_grid(w) >= -tol


def apply_poincare_perturbation(w: SingularWeight, epsilon: float, punctures=None) -> SingularWeight:
    """Multiply the metric by ``prod(-log|sigma_j|)^epsilon``.

    ``punctures`` defaults to the finite atoms of ``w``.  Lelong numbers are
    untouched.  Raises :class:`InvalidEpsilon` if the perturbed curvature
    fails the semipositivity check on the validation grid."""
    if epsilon < 0:
        raise InvalidEpsilon(f"epsilon must be >= 0, got {epsilon}")
    if epsilon == 0:
        return w
    if punctures is None:
        punctures = tuple(a for a, _ in w.finite_atoms) or tuple(w.punctures)
    new = replace(w, epsilon=w.epsilon + epsilon,
                  punctures=tuple(dict.fromkeys(tuple(w.punctures) + tuple(punctures))))
    worst = min_curvature_on_grid(new)
    if worst < -SEMIPOSITIVITY_TOL:
        raise InvalidEpsilon(
            f"epsilon={epsilon} makes the curvature density negative (min {worst:.3g})")
    return new


def poincare_F(punctures, x, proxy: bool = True):
    """``F(x) = -(1/2) sum_j log(-log|sigma_j(x)|)``.

    With ``proxy=False`` the raw distances ``|x - a_j|`` are used as
    ``|sigma_j|`` and must be < 1."""
    x = np.asarray(x, dtype=complex)
    total = np.zeros(x.shape)
    for a in punctures:
        d = np.abs(x - complex(a))
        sig = distance_proxy(d) if proxy else d
        if np.any(sig >= 1):
            raise OutOfDomain(f"|sigma| >= 1 for puncture {a}")
        with np.errstate(divide="ignore"):
            total = total + np.log(-np.log(sig))
    out = -0.5 * total
    return out if out.shape else float(out)


def transition_weight(w: SingularWeight, degree: int = 1) -> SingularWeight:
    """Express a weight for O(degree) in the other chart of the sphere,
    ``phi_other(w) = phi(1/w) + degree * log|w|``."""
    target = "inf" if w.chart == "0" else "0"
    new_atoms = []
    for a, nu in w.atoms:
        if is_infinite(a):
            new_atoms.append((0j, nu))
        elif a == 0:
            new_atoms.append((INF, nu))
        else:
            new_atoms.append((1.0 / a, nu))
    nu_fin = sum(nu for _, nu in w.finite_atoms)
    log_coef = degree - nu_fin - w.nu_infinity
    const = sum(nu * math.log(abs(a)) for a, nu in w.finite_atoms if a != 0)
    sm = w.smooth
    if (isinstance(sm, FubiniStudyPart) and w.epsilon == 0 and const == 0.0
            and math.isclose(log_coef, sm.scale, abs_tol=1e-14)):
        # (s/2) log(1 + 1/|w|^2) + s log|w| = (s/2) log(1 + |w|^2)
        return SingularWeight(sm, tuple(new_atoms), 0.0, (), target)
    part = TransformedPart(w, log_coef, const)
    return SingularWeight(part, tuple(new_atoms), 0.0, (), target)


def cocycle_residual(w: SingularWeight, other: SingularWeight, pts, degree: int = 1):
    pts = np.asarray(pts, dtype=complex)
    return np.abs(other(pts) - w(1.0 / pts) - degree * np.log(np.abs(pts)))


# ---------------------------------------------------------------------------
# Volume forms


@dataclass(frozen=True)
class VolumeDensity:
    """Volume form ``f Omega`` expressed as a Lebesgue density on chart 0.

    ``fs``: total-mass-1 Fubini-Study area ``1 / (pi (1 + |z|^2)^2)``.
    ``poincare``: FS density times ``1 + kappa * sum_j (rho_j log rho_j)^-2``
    with ``rho_j`` the distance proxy to puncture ``a_j``; behaves like
    ``(|z - a| log|z - a|)^-2`` near each puncture and like FS at infinity.
    """

    kind: str = "fs"
    punctures: tuple = ()
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fs", "poincare"):
            raise ValueError(f"unknown volume kind {self.kind!r}")
        object.__setattr__(self, "punctures", tuple(complex(a) for a in self.punctures))
        if self.kind == "poincare" and not self.punctures:
            raise ValueError("poincare volume needs at least one puncture")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    def is_radial(self) -> bool:
        return all(a == 0 for a in self.punctures)

    def key(self) -> str:
        punct = ";".join(_fmt_point(a) for a in self.punctures)
        return f"vol={self.kind}|punct={punct}|kappa={self.kappa!r}"

    def __call__(self, z):
        return np.exp(self.log_density(z))

    def log_density(self, z):
        z = np.asarray(z, dtype=complex)
        out = -math.log(math.pi) - 2.0 * np.log1p(np.abs(z) ** 2)
        if self.kind == "poincare":
            acc = np.zeros(z.shape)
            with np.errstate(divide="ignore", invalid="ignore"):
                for a in self.punctures:
                    rho = distance_proxy(np.abs(z - a))
                    acc = acc + 1.0 / (rho * np.log(rho)) ** 2
            out = out + np.log1p(self.kappa * acc)
        return out

    def log_density_polar(self, s, theta=0.0):
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = -math.log(math.pi) - 2.0 * np.logaddexp(0.0, 2.0 * s) + 0.0 * theta
        if self.kind == "poincare":
            logs = []
            for a in self.punctures:
                if a == 0:
                    L = _neg_log_proxy_polar(s)
                    logrho = -L
                    logs.append(-2.0 * logrho - 2.0 * np.log(L) + 0.0 * theta)
                else:
                    z = np.exp(s + 1j * theta)
                    rho = distance_proxy(np.abs(z - a))
                    with np.errstate(divide="ignore"):
                        logs.append(-2.0 * np.log(rho * -np.log(rho)))
            acc = np.logaddexp.reduce(np.stack(logs), axis=0)
            out = out + np.logaddexp(0.0, math.log(self.kappa) + acc)
        return out

    def puncture_constant(self, a) -> float:
        """c in ``f ~ c (|z - a| log|z - a|)^-2`` near puncture ``a``."""
        return self.kappa / (math.pi * (1.0 + abs(complex(a)) ** 2) ** 2)
