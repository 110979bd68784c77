"""Bergman kernel function P_p and diagnostics for its logarithmic asymptotics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import BallTouchesAtom, QuadratureFailure, UndefinedSpace
from .geom import SingularWeight, VolumeDensity
from .l2 import GramSpec, OrthoBasis, build_basis

MAINHYP_RATIO = 0.6
DEFAULT_STANDOFF = 0.1
NORMALIZATION_TOL = 1e-9


def _require(basis: OrthoBasis):
    if basis.d_p == 0:
        raise UndefinedSpace(f"d_p = 0 at p = {basis.p}")


def log_section_norm(basis: OrthoBasis, x):
    """``u(x) = log sum_j |s_j(x)|^2`` (no weight), stable for large |x|."""
    _require(basis)
    x = np.asarray(x, dtype=complex)
    F = basis.free_coeffs
    D = F.shape[1] - 1
    ax = np.abs(x)
    big = ax > 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = np.where(big, 1.0 / x, x)
        # q_j(x) = x^D * sum_m F[j, m] x^(m - D) when |x| > 1
        powers = np.power.outer(xs, np.arange(D + 1))
        rev = np.where(big[..., None], powers[..., ::-1], powers)
        vals = rev @ F.T
        logq = np.log(np.sum(np.abs(vals) ** 2, axis=-1))
        logq = logq + np.where(big, 2.0 * D * np.log(ax), 0.0)
    return logq + 2.0 * basis.space.log_abs_base(x)


def log_bergman(basis: OrthoBasis, x):
    """``log P_p(x) = log sum_j |s_j(x)|^2 - 2 p phi(x)``."""
    x = np.asarray(x, dtype=complex)
    return log_section_norm(basis, x) - 2.0 * basis.p * basis.space.weight(x)


def bergman_eval(basis: OrthoBasis, x):
    """Bergman kernel function on the diagonal, ``sum_j |s_j(x)|^2_{h_p}``."""
    return np.exp(log_bergman(basis, x))


def log_bergman_polar(basis: OrthoBasis, s, theta=0.0):
    """``log P_p`` at ``exp(s + i theta)`` without forming z (works for |s| >> 700)."""
    _require(basis)
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, theta = np.broadcast_arrays(s, theta)
    space = basis.space
    F = basis.free_coeffs
    D = F.shape[1] - 1
    m = np.arange(D + 1)
    zeta = s + 1j * theta
    shift = np.where(s > 0, D, 0)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        terms = np.exp((m - shift[..., None]) * zeta[..., None])
        vals = terms @ F.T
        logq = np.log(np.sum(np.abs(vals) ** 2, axis=-1)) + 2.0 * shift * s
        base = 2.0 * space.k0 * s
        if space.other_roots:
            z = np.exp(zeta)
            for b in space.other_roots:
                base = base + 2.0 * np.log(np.abs(z - b))
        return logq + base - 2.0 * space.p * space.weight.eval_polar(s, theta)


def extremal_check(basis: OrthoBasis, x: complex, trials: int = 0, rng=None,
                   include_extremal: bool = True) -> float:
    """Max of ``|S_a(x)|^2_{h_p}`` over random unit ``a`` (plus the maximizer)."""
    _require(basis)

    x = complex(x)
    rng = np.random.default_rng(rng)
    F = basis.free_coeffs
    # free-part values and log of |P0|^2 e^{-2 p phi}, kept apart to avoid overflow
    q = F @ np.power(x, np.arange(F.shape[1]))
    with np.errstate(divide="ignore"):
        log_scale = float(2.0 * basis.space.log_abs_base(np.array([x]))[0]
                          - 2.0 * basis.p * basis.space.weight(np.array([x]))[0])
    A = []
    if trials:
        g = rng.standard_normal((trials, basis.d_p)) + 1j * rng.standard_normal((trials, basis.d_p))
        A.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    if include_extremal:
        nrm = np.linalg.norm(q)
        A.append((q.conj() / nrm)[None, :] if nrm > 0 else np.eye(1, basis.d_p))
    if not A:
        return 0.0
    A = np.vstack(A)
    with np.errstate(divide="ignore"):
        return float(np.exp(np.max(2.0 * np.log(np.abs(A @ q))) + log_scale))


def _tail_tanhsinh(f, a, b, rtol):
    res = integrate.tanhsinh(f, a, b, rtol=rtol, atol=0.0, maxlevel=14)
    if not np.all(res.success):
        raise QuadratureFailure(f"tanh-sinh failed on [{a}, {b}] (status {res.status})")
    return float(np.sum(res.integral))


def normalization_check(basis: OrthoBasis, volume: VolumeDensity | None = None,
                        rtol: float = NORMALIZATION_TOL, n_theta: int | None = None) -> float:
    """``integral P_p f dlambda`` by an independent route.

    Uses tanh-sinh quadrature on the log-radius with the tails mapped by
    s = -/+ e^v, and P_p evaluated from the orthonormal sections (not from
    the Gram entries).  Should equal d_p."""
    if basis.d_p == 0:
        return 0.0
    vol = volume if volume is not None else basis.space.volume
    radial = basis.space.is_radial() and vol.is_radial()
    if n_theta is None:
        n_theta = 1 if radial else 2 * (4 * basis.p + 8) + 1
    theta = (np.arange(n_theta) + 0.25) * (2 * np.pi / n_theta)

    def g_log(s):
        s = np.asarray(s, dtype=float)
        lp = log_bergman_polar(basis, s[..., None], theta) + vol.log_density_polar(s[..., None], theta)
        lp = lp + 2.0 * s[..., None]
        lp = np.where(np.isnan(lp), -np.inf, lp)
        top = np.max(lp, axis=-1)
        safe = np.where(np.isfinite(top), top, 0.0)
        return safe + np.log(np.mean(np.exp(lp - safe[..., None]), axis=-1)) + math.log(2 * math.pi)

    def core(s):
        return np.exp(g_log(s))

    v_cut = 14.0

    def left(v):
        return np.exp(g_log(-1.0 - np.exp(v)) + v)

    def right(v):
        return np.exp(g_log(1.0 + np.exp(v)) + v)

    total = _tail_tanhsinh(core, -1.0, 1.0, rtol)
    total += _tail_tanhsinh(left, -40.0, v_cut, rtol)
    total += _tail_tanhsinh(right, -40.0, v_cut, rtol)
    # beyond |s| = e^14 the left integrand is a pure power of |s|
    s_c = -1.0 - math.exp(v_cut)
    g1, g2 = float(g_log(np.array(s_c))), float(g_log(np.array(2 * s_c)))
    if np.isfinite(g1):
        q = (g2 - g1) / math.log(2.0)
        if not q < -1.0:
            raise QuadratureFailure("Bergman density not integrable at the origin")
        total += math.exp(g1) * abs(s_c) / (-q - 1.0)
    return total


# ---------------------------------------------------------------------------
# Sweeps


def annulus_grid(r_in: float = 0.5, r_out: float = 2.0, n_r: int = 16, n_theta: int = 32):
    r = np.linspace(r_in, r_out, n_r)
    th = (np.arange(n_theta) + 0.5) * (2 * np.pi / n_theta)
    return (r[:, None] * np.exp(1j * th[None, :])).ravel()


def standoff_region(weight: SingularWeight, grid=None, delta: float = DEFAULT_STANDOFF,
                    volume: VolumeDensity | None = None):
    """Grid points at distance >= delta from every atom and puncture."""
    pts = annulus_grid() if grid is None else np.asarray(grid, dtype=complex)
    bad = [a for a, _ in weight.finite_atoms] + list(weight.punctures)
    if volume is not None:
        bad += list(volume.punctures)
    keep = np.ones(pts.shape, dtype=bool)
    for a in bad:
        keep &= np.abs(pts - a) >= delta
    return pts[keep]


@dataclass
class BergmanDiagnostics:
    p_list: list
    sup_values: list
    grid_points: int
    delta: float = DEFAULT_STANDOFF
    ratio: float = MAINHYP_RATIO
    lower_fit: list = field(default_factory=list)

    @property
    def verdict(self) -> bool | None:
        """Heuristic pass/fail: value at the largest p <= ratio x value at the smallest."""
        if len(self.p_list) < 2:
            return None
        return bool(self.sup_values[-1] <= self.ratio * self.sup_values[0])

    def rows(self):
        v = self.verdict
        tag = "" if v is None else ("pass" if v else "fail")
        return [(p, val, self.grid_points, tag) for p, val in zip(self.p_list, self.sup_values)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "sup_abs_log_Pp_over_p", "grid_points", "verdict"])
        for p, val, n, tag in self.rows():
            w.writerow([p, repr(float(val)), n, tag])
        return buf.getvalue()


def mainhyp_diagnostic(weight: SingularWeight, volume: VolumeDensity | None, p_list,
                       region=None, delta: float = DEFAULT_STANDOFF,
                       spec: GramSpec = GramSpec(), cache=None, bases=None) -> BergmanDiagnostics:
    """Table of ``sup_K (1/p)|log P_p|`` over a standoff region K."""
    p_list = sorted(int(p) for p in p_list)
    pts = standoff_region(weight, region, delta, volume)
    if pts.size == 0:
        raise ValueError("standoff region is empty")
    sups, lows = [], []
    for p in p_list:
        basis = bases[p] if bases is not None else build_basis(p, weight, volume, spec, cache)
        lp = log_bergman(basis, pts)
        sups.append(float(np.max(np.abs(lp)) / p))
        lows.append(float(np.min(lp) / p))
    return BergmanDiagnostics(p_list, sups, int(pts.size), delta, MAINHYP_RATIO, lows)


def bke_upper_check(basis: OrthoBasis, z: complex, r: float,
                    volume: VolumeDensity | None = None, n_sample: int = 2049):
    """Both sides of the sub-mean-value upper bound at ``z`` on the ball B(z, r):

        (1/p) log P_p(z) <= (1/p) log(C r^-2) + 2 (max_B phi - phi(z)),

    with ``C = 1 / (pi min_B f)``; ``min_B f`` and ``max_B phi`` are taken over
    a polar sample of the closed ball."""
    _require(basis)
    z = complex(z)
    w = basis.space.weight
    vol = volume if volume is not None else basis.space.volume
    for a, nu in w.finite_atoms:
        if abs(z - a) <= r:
            raise BallTouchesAtom(f"B({z}, {r}) contains atom {a}")
    for a in list(w.punctures) + list(vol.punctures):
        if abs(z - a) <= r:
            raise BallTouchesAtom(f"B({z}, {r}) contains puncture {a}")
    p = basis.p
    n_r = 33
    n_t = max(8, n_sample // n_r)
    rr = np.linspace(0.0, r, n_r)
    tt = np.arange(n_t) * (2 * np.pi / n_t)
    ball = z + (rr[:, None] * np.exp(1j * tt[None, :])).ravel()
    phi_z = float(w(np.array([z]))[0])
    max_phi = max(float(np.max(w(ball))), phi_z)
    min_f = float(np.min(vol(ball)))
    C = 1.0 / (math.pi * min_f)
    lhs = float(log_bergman(basis, np.array([z]))[0]) / p
    rhs = math.log(C / r**2) / p + 2.0 * (max_phi - phi_z)
    return lhs, rhs


def lipschitz_estimate(basis: OrthoBasis, pts, h: float = 1e-5) -> float:
    """Largest finite-difference slope of P_p over a point set."""
    pts = np.asarray(pts, dtype=complex)
    P0 = bergman_eval(basis, pts)
    slopes = [np.abs(bergman_eval(basis, pts + h * d) - P0) / h for d in (1.0, 1j)]
    return float(np.max(np.maximum(*slopes)))
