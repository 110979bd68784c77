"""Random L^2 sections: sphere sampling, zero sets, empirical measures and
the Monte Carlo checks built on them."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .currents import CurrentMeasure, TestFunction, curvature_current, default_family, \
    fs_current, pair
from .errors import NumericallyDegenerate, PositiveDimensional, UndefinedSpace
from .l2 import OrthoBasis, ToricBasis, section_coefficients_2d

TOL_LEAD = 1e-12
TOL_CLUSTER = 1e-6
TOL_RES = 1e-8
BLOCK = 1024
SEQUENCE_RATIO = 0.7


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class SphereSampler:
    """Uniform points on the unit sphere of C^d.

    Sample ``i`` of stream ``k`` comes from block ``i // BLOCK`` of a
    generator seeded by ``SeedSequence(seed, spawn_key=(k, block))``, so
    any sample can be regenerated independently of evaluation order."""

    d: int
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise UndefinedSpace("cannot sample the sphere of C^0")

    def _block(self, b: int) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, b))
        rng = np.random.Generator(np.random.PCG64(ss))
        g = rng.standard_normal((BLOCK, 2 * self.d))
        v = g[:, : self.d] + 1j * g[:, self.d:]
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def sample(self, index: int = 0) -> np.ndarray:
        return self._block(index // BLOCK)[index % BLOCK].copy()

    def samples(self, start: int, count: int) -> np.ndarray:
        out = np.empty((count, self.d), dtype=complex)
        i = 0
        while i < count:
            j = start + i
            blk = self._block(j // BLOCK)
            take = min(count - i, BLOCK - j % BLOCK)
            out[i:i + take] = blk[j % BLOCK: j % BLOCK + take]
            i += take
        return out


def sample_sphere(sampler: SphereSampler, index: int = 0) -> np.ndarray:
    return sampler.sample(index)


# ---------------------------------------------------------------------------
# Zero sets on the sphere


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Finite roots with multiplicities plus the multiplicity at infinity."""

    roots: np.ndarray
    mult: np.ndarray
    inf_mult: int
    p: int
    degenerate: bool = False

    @property
    def total(self) -> int:
        return int(np.sum(self.mult)) + self.inf_mult

    def multiplicity_at(self, a, tol: float = TOL_CLUSTER) -> int:
        if not np.isfinite(complex(a)):
            return self.inf_mult
        near = np.abs(self.roots - complex(a)) <= tol
        return int(np.sum(self.mult[near]))

    def empirical_measure(self) -> CurrentMeasure:
        atoms = [(r, m / self.p) for r, m in zip(self.roots, self.mult)]
        if self.inf_mult:
            atoms.append((complex(math.inf), self.inf_mult / self.p))
        return CurrentMeasure(tuple(atoms), None, 1.0, 0.0, 1.0, "zeros")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "multiplicity"])
        for r, m in zip(self.roots, self.mult):
            w.writerow([repr(float(r.real)), repr(float(r.imag)), int(m)])
        if self.inf_mult:
            w.writerow(["inf", "0", self.inf_mult])
        return buf.getvalue()


def _cluster(roots: np.ndarray, tol: float):
    """Greedy clustering: (centers, counts)."""
    centers, counts = [], []
    for r in roots:
        for k, c in enumerate(centers):
            if abs(r - c) <= tol:
                counts[k] += 1
                centers[k] = c + (r - c) / counts[k]
                break
        else:
            centers.append(r)
            counts.append(1)
    return np.array(centers, dtype=complex), np.array(counts, dtype=int)


def _newton(coeffs_desc: np.ndarray, r: np.ndarray, steps: int = 2) -> np.ndarray:
    d = np.polyder(coeffs_desc)
    for _ in range(steps):
        f = np.polyval(coeffs_desc, r)
        fp = np.polyval(d, r)
        ok = np.abs(fp) > 0
        step = np.where(ok, f / np.where(ok, fp, 1.0), 0.0)
        r = r - step
    return r


def free_polynomial(basis: OrthoBasis, a) -> np.ndarray:
    """Ascending coefficients of q with S_a = P0 * q."""
    return np.asarray(a, dtype=complex) @ basis.free_coeffs


def zeros(basis: OrthoBasis, a, tol_lead: float = TOL_LEAD, tol_cluster: float = TOL_CLUSTER,
          tol_res: float = TOL_RES, strict: bool = True) -> ZeroSet:
    """Zeros of ``S_a`` on the sphere, with multiplicity, total mass p.

    Base-point multiplicities come from the admissible space; the free
    factor is solved by companion-matrix eigenvalues (``numpy.roots``) with
    two Newton steps.  Leading coefficients below ``tol_lead * max|c|`` are
    treated as a degree drop, i.e. mass at infinity."""
    a = np.asarray(a, dtype=complex)
    if not np.any(a):
        raise ValueError("zero coefficient vector has no zero divisor")
    space = basis.space
    q = free_polynomial(basis, a)
    scale = np.max(np.abs(q))
    nz = np.nonzero(np.abs(q) > tol_lead * scale)[0]
    top = int(nz[-1])
    drop = len(q) - 1 - top
    desc = q[: top + 1][::-1]
    free = np.roots(desc) if top > 0 else np.zeros(0, dtype=complex)
    # numpy.roots strips trailing zeros into exact roots at 0; keep them
    free = _newton(desc, free) if free.size else free
    # backward-error residual: |q(r)| relative to sum |c_k||r|^k
    degenerate = False
    if free.size:
        res = np.abs(np.polyval(desc, free))
        size = np.polyval(np.abs(desc), np.abs(free))
        bad = res > tol_res * np.maximum(size, 1e-300)
        if np.any(bad):
            # multiple roots converge slowly; accept if they sit in a cluster
            cen, cnt = _cluster(free, tol_cluster)
            lone = [r for r, b in zip(free, bad) if b and cnt[np.argmin(np.abs(cen - r))] == 1]
            if lone:
                degenerate = True
                if strict:
                    raise NumericallyDegenerate(
                        f"root residual {float(np.max(res[bad] / size[bad])):.3g} exceeds {tol_res:g}")
    structural = [0j] * space.k0 + list(space.other_roots)
    allroots = np.concatenate([np.array(structural, dtype=complex), free])
    cen, cnt = _cluster(allroots, tol_cluster) if allroots.size else (np.zeros(0, complex),
                                                                      np.zeros(0, int))
    zs = ZeroSet(cen, cnt, space.k_inf + drop, space.p, degenerate)
    if zs.total != space.p:
        raise NumericallyDegenerate(f"zero count {zs.total} != p = {space.p}")
    return zs


def pair_zero_set(zs: ZeroSet, tf: TestFunction) -> float:
    """``pair((1/p)[S = 0], chi)``."""
    if zs.roots.size == 0:
        return 0.0
    return float(np.sum(zs.mult * tf(zs.roots)) / zs.p)


# ---------------------------------------------------------------------------
# Expectation and sequences


@dataclass
class ExpectationRow:
    center: complex
    radius: float
    mean: float
    stderr: float
    reference: float

    @property
    def within(self) -> bool:
        return abs(self.mean - self.reference) <= 3.0 * self.stderr + 1e-12


@dataclass
class ExpectationTable:
    p: int
    n: int
    rows: list
    degenerate: int = 0

    @property
    def verdict(self) -> bool:
        return all(r.within for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "N", "center_re", "center_im", "radius", "mean", "stderr", "reference",
                    "within_3se"])
        for r in self.rows:
            w.writerow([self.p, self.n, repr(r.center.real), repr(r.center.imag), repr(r.radius),
                        repr(r.mean), repr(r.stderr), repr(r.reference), int(r.within)])
        return buf.getvalue()


def sample_pairings(basis: OrthoBasis, n: int, family, seed: int = 0, stream: int = 0,
                    start: int = 0):
    """(n, len(family)) pairings of (1/p)[S_a = 0] plus the degenerate-draw count."""
    sampler = SphereSampler(basis.d_p, seed, stream)
    A = sampler.samples(start, n)
    vals = np.empty((n, len(family)))
    keep = np.ones(n, dtype=bool)
    for i, a in enumerate(A):
        zs = zeros(basis, a, strict=False)
        keep[i] = not zs.degenerate
        vals[i] = [pair_zero_set(zs, tf) for tf in family]
    return vals[keep], int(np.sum(~keep))


def expectation_estimate(basis: OrthoBasis, n: int, family=None, seed: int = 0,
                         stream: int = 0, reference=None) -> ExpectationTable:
    """Monte Carlo mean of ``pair((1/p)[S = 0], chi)`` against ``pair(gamma_p / p, chi)``.

    Degenerate draws are counted and excluded."""
    if n < 2:
        raise ValueError("need N >= 2 samples")
    family = default_family() if family is None else tuple(family)
    vals, bad = sample_pairings(basis, n, family, seed, stream)
    gp = fs_current(basis).scaled(1.0 / basis.p)
    ref = [pair(gp, tf) for tf in family] if reference is None else list(reference)
    rows = []
    for j, tf in enumerate(family):
        col = vals[:, j]
        se = float(np.std(col, ddof=1) / math.sqrt(len(col)))
        rows.append(ExpectationRow(tf.center, tf.radius, float(np.mean(col)), se, float(ref[j])))
    return ExpectationTable(basis.p, n, rows, bad)


@dataclass
class SequenceTable:
    seed: int
    p_list: list
    deviations: np.ndarray   # (len(p_list), len(family))

    @property
    def rms(self) -> np.ndarray:
        return np.sqrt(np.mean(self.deviations**2, axis=1))

    @property
    def slope(self) -> float:
        """Least-squares slope of log2(rms) against log2(p)."""
        x = np.log2(np.asarray(self.p_list, dtype=float))
        y = np.log2(np.maximum(self.rms, 1e-300))
        return float(np.polyfit(x, y, 1)[0])

    @property
    def verdict(self) -> bool:
        if np.max(self.rms) <= 1e-12:
            return True
        return self.slope <= math.log2(SEQUENCE_RATIO)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.deviations.shape[1]
        w.writerow(["seed", "p"] + [f"dev_{j}" for j in range(k)] + ["rms", "verdict"])
        tag = "pass" if self.verdict else "fail"
        for i, p in enumerate(self.p_list):
            w.writerow([self.seed, p] + [repr(float(v)) for v in self.deviations[i]]
                       + [repr(float(self.rms[i])), tag])
        return buf.getvalue()


def sequence_run(bases: dict, seed: int, family=None, gamma: CurrentMeasure | None = None,
                 stream: int = 0) -> SequenceTable:
    """One sampled sequence {S_p}: deviations |pair((1/p)[S_p = 0]) - pair(gamma)|.

    Section p is draw 0 of stream ``(stream, p)`` so the sequence does not
    depend on which other p are included."""
    family = default_family() if family is None else tuple(family)
    p_list = sorted(bases)
    if gamma is None:
        gamma = curvature_current(bases[p_list[0]].space.weight)
    ref = np.array([pair(gamma, tf) for tf in family])
    dev = np.empty((len(p_list), len(family)))
    for i, p in enumerate(p_list):
        b = bases[p]
        a = SphereSampler(b.d_p, seed, stream * 1000 + p).sample(0)
        zs = zeros(b, a, strict=False)
        dev[i] = np.abs(np.array([pair_zero_set(zs, tf) for tf in family]) - ref)
    return SequenceTable(seed, p_list, dev)


# ---------------------------------------------------------------------------
# Dimensional constant


def harmonic(n: int) -> float:
    return float(sum(1.0 / k for k in range(1, n + 1)))


def cd_reference(d: int) -> float:
    """``E log|<a, u>| = -H_{d-1} / 2`` for a uniform on the unit sphere of C^d."""
    return -0.5 * harmonic(d - 1)


def cd_constant(d: int, u=None, n: int = 10**6, seed: int = 0, stream: int = 0):
    """Monte Carlo (mean, stderr) of ``log|<a, u>|`` over the unit sphere of C^d."""
    u = np.eye(d, dtype=complex)[0] if u is None else np.asarray(u, dtype=complex)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("u must be a unit vector")
    if d == 1:
        return 0.0, 0.0
    sampler = SphereSampler(d, seed, stream)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        take = min(BLOCK * 64, n - done)
        A = sampler.samples(done, take)
        x = np.log(np.abs(A @ u.conj()))
        total += float(np.sum(x))
        total_sq += float(np.sum(x * x))
        done += take
    mean = total / n
    var = (total_sq - n * mean * mean) / (n - 1)
    return mean, math.sqrt(max(var, 0.0) / n)


# ---------------------------------------------------------------------------
# Common zeros on P^1 x P^1


@dataclass(frozen=True, eq=False)
class CommonZeros:
    """Common zeros in homogeneous form: rows ``(x0, x1, y0, y1)`` for the
    point ``(x1/x0, y1/y0)`` (``x0 = 0`` means z1 = infinity)."""

    points: np.ndarray
    mult: np.ndarray
    p: int

    @property
    def total(self) -> int:
        return int(np.sum(self.mult))

    def affine(self) -> np.ndarray:
        """Points with both coordinates finite, as complex pairs."""
        x0, x1, y0, y1 = self.points.T
        ok = (np.abs(x0) > 1e-12) & (np.abs(y0) > 1e-12)
        return np.c_[x1[ok] / x0[ok], y1[ok] / y0[ok]]

    def torus_log_coords(self):
        """(s, t, mult) for points in the open torus."""
        x0, x1, y0, y1 = self.points.T
        ok = (np.abs(x0) > 1e-12) & (np.abs(y0) > 1e-12) & (np.abs(x1) > 1e-12) & \
            (np.abs(y1) > 1e-12)
        s = np.log(np.abs(x1[ok] / x0[ok]))
        t = np.log(np.abs(y1[ok] / y0[ok]))
        return s, t, self.mult[ok]


def _chordal(a0, a1, b0, b1) -> float:
    num = abs(a1 * b0 - a0 * b1)
    den = math.hypot(abs(a0), abs(a1)) * math.hypot(abs(b0), abs(b1))
    return num / den


def _homog_roots(desc: np.ndarray, degree: int, tol: float = 1e-10):
    """Roots of a formal degree-``degree`` polynomial as (h0, h1) pairs; a
    leading-coefficient deficit contributes roots at infinity (1, 0) -> (0, 1)."""
    desc = np.asarray(desc, dtype=complex)
    scale = np.max(np.abs(desc))
    if scale == 0:
        return None  # identically zero
    nz = np.nonzero(np.abs(desc) > tol * scale)[0]
    lead = int(nz[0])
    r = np.roots(desc[lead:]) if len(desc) - 1 - lead > 0 else np.zeros(0, complex)
    out = [(1.0 + 0j, complex(x)) for x in r]
    out += [(0j, 1.0 + 0j)] * lead
    return out


def _sylvester_blocks(F: np.ndarray, G: np.ndarray, p: int) -> list:
    """Coefficient matrices S_k of the Sylvester matrix in z2 as a polynomial in z1.

    ``F[i, j]`` is the coefficient of z1^i z2^j."""
    n = 2 * p
    blocks = [np.zeros((n, n), dtype=complex) for _ in range(p + 1)]
    for k in range(p + 1):
        fk = F[k, ::-1]  # descending in z2
        gk = G[k, ::-1]
        for r in range(p):
            blocks[k][r, r:r + p + 1] = fk
            blocks[k][p + r, r:r + p + 1] = gk
    return blocks


def _linearize(blocks):
    """Companion pencil (A, B) with A v = lambda B v iff det(sum S_k lambda^k) = 0."""
    p = len(blocks) - 1
    n = blocks[0].shape[0]
    N = n * p
    A = np.zeros((N, N), dtype=complex)
    B = np.eye(N, dtype=complex)
    for i in range(p - 1):
        A[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = np.eye(n)
    for k in range(p):
        A[(p - 1) * n:, k * n:(k + 1) * n] = -blocks[k]
    B[(p - 1) * n:, (p - 1) * n:] = blocks[p]
    return A, B


def common_zeros_pair(basis: ToricBasis, a1, a2, match_tol: float = 1e-4,
                      rank_tol: float = 1e-10, rng=0) -> CommonZeros:
    """Isolated common zeros of two sections of O(p, p) on P^1 x P^1.

    Hidden-variable resultant in z1: eigenvalues of the linearized Sylvester
    pencil give the z1-coordinates (infinite eigenvalues: z1 = infinity),
    then the z2-coordinate is the closest pair of roots of the two slices in
    the chordal metric.  Raises PositiveDimensional when the resultant
    vanishes identically or a slice pair has no common root."""
    p = basis.p
    F = section_coefficients_2d(basis, a1)
    G = section_coefficients_2d(basis, a2)
    blocks = _sylvester_blocks(F, G, p)
    # identically vanishing resultant <=> S(z1) singular for all z1
    rng = np.random.default_rng(rng)
    probes = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    for z in probes:
        S = sum(Bk * z**k for k, Bk in enumerate(blocks))
        sv = linalg.svdvals(S)
        if sv[-1] <= rank_tol * sv[0]:
            raise PositiveDimensional("resultant vanishes identically: common curve")
    A, B = _linearize(blocks)
    alpha, beta = linalg.eig(A, B, right=False, homogeneous_eigvals=True)
    pts = []
    for al, be in zip(alpha, beta):
        nrm = math.hypot(abs(al), abs(be))
        x0, x1 = be / nrm, al / nrm   # z1 = al / be
        if abs(x0) <= 1e-10:
            x0, x1 = 0j, 1.0 + 0j
        # slice polynomials in z2 at z1 = x1/x0, homogeneously in (x0, x1)
        powers = np.array([x0 ** (p - i) * x1**i for i in range(p + 1)])
        f = (powers @ F)[::-1]
        g = (powers @ G)[::-1]
        rf, rg = _homog_roots(f, p), _homog_roots(g, p)
        if rf is None and rg is None:
            raise PositiveDimensional("both sections vanish on a fibre")
        if rf is None or rg is None:
            cand = rg if rf is None else rf
            best = cand[0] if cand else None
            dist = 0.0
        else:
            best, dist = None, math.inf
            for u in rf:
                for v in rg:
                    dd = _chordal(u[0], u[1], v[0], v[1])
                    if dd < dist:
                        best, dist = ((u[0] + v[0]) / 2, (u[1] + v[1]) / 2) if abs(u[0]) > 1e-10 and abs(v[0]) > 1e-10 else (u if abs(u[0]) <= 1e-10 else v), dd
        if best is None or dist > match_tol:
            raise PositiveDimensional(f"no common z2-root over z1 = {x1}/{x0} (gap {dist:.3g})")
        y0, y1 = best
        ny = math.hypot(abs(y0), abs(y1))
        pts.append((x0, x1, y0 / ny, y1 / ny))
    pts = np.array(pts, dtype=complex)
    # cluster coincident points (chordal in both factors)
    centers, mult = [], []
    for row in pts:
        for k, c in enumerate(centers):
            if _chordal(row[0], row[1], c[0], c[1]) < TOL_CLUSTER * 10 and \
                    _chordal(row[2], row[3], c[2], c[3]) < TOL_CLUSTER * 10:
                mult[k] += 1
                break
        else:
            centers.append(row)
            mult.append(1)
    return CommonZeros(np.array(centers), np.array(mult, dtype=int), p)


def common_zero_region_counts(cz: CommonZeros, regions) -> np.ndarray:
    """Multiplicity-weighted counts of torus common zeros per (s, t) box."""
    s, t, m = cz.torus_log_coords()
    return np.array([float(np.sum(m[b.contains(s, t)])) for b in regions])


@dataclass
class RegionTable:
    """Mean regional zero fractions against the toric reference."""

    p: int
    n: int
    mean: np.ndarray
    stderr: np.ndarray
    reference: np.ndarray

    @property
    def within(self) -> np.ndarray:
        return np.abs(self.mean - self.reference) <= 3.0 * self.stderr + 1e-12

    @property
    def verdict(self) -> bool:
        return bool(np.all(self.within))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "N", "region", "mean_fraction", "stderr", "reference", "within_3se"])
        for j in range(len(self.mean)):
            w.writerow([self.p, self.n, j, repr(float(self.mean[j])), repr(float(self.stderr[j])),
                        repr(float(self.reference[j])), int(self.within[j])])
        return buf.getvalue()


def k2_expectation(basis: ToricBasis, regions, n: int = 200, seed: int = 0,
                   reference=None) -> RegionTable:
    """Mean of (common zeros in B) / (2 p^2) over ``n`` random pairs, against
    ``toric_fs_square`` masses / 2."""
    from .toric import toric_fs_square

    regions = tuple(regions)
    p = basis.p
    counts = np.empty((n, len(regions)))
    for i in range(n):
        a1 = SphereSampler(basis.d_p, seed, 1).sample(i)
        a2 = SphereSampler(basis.d_p, seed, 2).sample(i)
        counts[i] = common_zero_region_counts(common_zeros_pair(basis, a1, a2), regions)
    frac = counts / (2.0 * p * p)
    ref = toric_fs_square(basis, regions) / 2.0 if reference is None else np.asarray(reference)
    se = np.std(frac, axis=0, ddof=1) / math.sqrt(n)
    return RegionTable(p, n, frac.mean(axis=0), se, ref)
