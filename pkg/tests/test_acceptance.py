"""Acceptance suite: each test checks one criterion at its stated tolerance
and records a PASS/FAIL line that is printed in the terminal summary."""
import itertools
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from eqlab import config as cfgmod
from eqlab.bergman import annulus_grid, bergman_eval, mainhyp_diagnostic, normalization_check
from eqlab.bergman import NORMALIZATION_TOL
from eqlab.cli import run
from eqlab.currents import default_family, lemma_identity
from eqlab.errors import PositiveDimensional
from eqlab.geom import fubini_study_weight
from eqlab.l2 import ProductWeight, brute_force_admissible, build_basis, integrability_filter, \
    section_eval, toric_basis
from eqlab.random_sections import (
    SphereSampler, cd_constant, cd_reference, common_zeros_pair, expectation_estimate,
    sequence_run, zeros,
)
from eqlab.toric import (
    Box, MaxAffineProfile, TableProfile, corner_profile, ma_convergence_harness,
    product_fs_profile, real_ma_measure, softmax_profile, toric_fs_square,
)

SPHERE_PRESETS = ("fs-baseline", "nu-half", "nu-third", "nu-one", "poincare")


def _space(name):
    c = cfgmod.preset(name)
    return c.weight.build(), c.volume.build(), c.p_list


def _csv_rows(text):
    import csv

    return list(csv.DictReader(text.splitlines()[1:]))


# 1 ---------------------------------------------------------------------------------

def test_criterion_1_fs_baseline(criterion):
    t0 = time.perf_counter()
    x = annulus_grid(0.5, 2.0, 10, 10)
    worst = 0.0
    for p in (2, 4, 8, 16, 32):
        P = bergman_eval(build_basis(p, fubini_study_weight()), x)
        worst = max(worst, float(np.max(np.abs(P / (p + 1) - 1))))
    dt = time.perf_counter() - t0
    ok = x.size == 100 and worst <= 1e-6 and dt < 10
    criterion(1, ok, f"max rel |P_p/(p+1) - 1| = {worst:.2e} on 100 points, {dt:.1f} s")
    assert ok


# 2 ---------------------------------------------------------------------------------

def _radial_norm(basis, a):
    """Norm of one section: quad in r outside r = 1/4, in s = log r inside down
    to s = -40, then the exact tail.  With a Poincare puncture at 0 and the
    borderline exponent, the s-integrand is A |s|^(p eps - 2) there."""
    w, vol, p = basis.space.weight, basis.space.volume, basis.p

    def log_f(r):
        x = np.array([r + 0j])
        s = np.abs(section_eval(basis, a, x)[0])
        if s == 0:
            return -np.inf
        # log space: e^{-2 p phi} overflows next to an atom where |s| underflows
        return 2 * np.log(s) - 2 * p * w(x)[0] + np.log(vol(x)[0] * 2 * np.pi * r)

    outer = sum(integrate.quad(lambda r: np.exp(log_f(r)), lo, hi, epsrel=1e-11, limit=200)[0]
                for lo, hi in ((0.25, 2), (2, np.inf)))
    inner = integrate.quad(lambda s: np.exp(log_f(np.exp(s)) + s), -40, np.log(0.25),
                           epsrel=1e-11, limit=400)[0]
    tail = 0.0
    if vol.kind == "poincare":
        beta = p * w.epsilon - 2
        amp = np.exp(log_f(np.exp(-40.0)) - 40.0) / 40.0**beta
        tail = amp * 40.0 ** (beta + 1) / (-beta - 1)
    return outer + inner + tail


def test_criterion_2_hilbert_contracts(criterion):
    t0 = time.perf_counter()
    worst_id = worst_norm = worst_int = 0.0
    for name in SPHERE_PRESETS:
        w, vol, p_list = _space(name)
        for p in p_list:
            b = build_basis(p, w, vol)
            if b.d_p == 0:
                continue
            G = b.gram
            worst_id = max(worst_id, float(np.max(np.abs(b.C @ G @ b.C.conj().T
                                                             - np.eye(b.d_p)))))
            worst_int = max(worst_int, abs(normalization_check(b) - b.d_p) / b.d_p)
            if p <= 8:
                for j in range(b.d_p):
                    worst_norm = max(worst_norm, abs(_radial_norm(b, np.eye(b.d_p)[j]) - 1))
    ok = worst_id <= 1e-8 and worst_norm <= 1e-6 and worst_int <= 10 * NORMALIZATION_TOL
    criterion(2, ok, f"|CGC*-I| {worst_id:.1e}, |norm-1| {worst_norm:.1e}, "
                     f"|int P_p - d_p|/d_p {worst_int:.1e} (tol {10 * NORMALIZATION_TOL:.0e}), "
                     f"{time.perf_counter() - t0:.1f} s")
    assert ok


# 3 ---------------------------------------------------------------------------------

def test_criterion_3_vanishing_law(criterion):
    t0 = time.perf_counter()
    mismatches, draws_bad = 0, 0
    for nu in (Fraction(1, 3), Fraction(1, 2), Fraction(1, 1)):
        w = fubini_study_weight([(0, float(nu))])
        for p in range(1, 33):
            sp = integrability_filter(p, w)
            oracle = next((k for k in range(p + 1) if brute_force_admissible(p, w, sp.volume, k)),
                          p + 1)
            exact = max(0, math.floor(p * nu - 1) + 1)
            if not (sp.k0 == oracle == exact and sp.d_p == p + 1 - oracle):
                mismatches += 1
        b = build_basis(8, w)
        for a in SphereSampler(b.d_p, seed=0, stream=8).samples(0, 1000):
            if zeros(b, a, strict=False).multiplicity_at(0) != b.space.k0:
                draws_bad += 1
    ok = mismatches == 0 and draws_bad == 0
    criterion(3, ok, f"oracle mismatches {mismatches} over p <= 32 and nu in (1/3, 1/2, 1); "
                     f"draws off k_min {draws_bad}/3000, {time.perf_counter() - t0:.1f} s")
    assert ok


# 4 ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mainhyp_results():
    out = {}
    for name in ("fs-baseline", "nu-half", "poincare"):
        t0 = time.perf_counter()
        w, vol, _ = _space(name)
        d = mainhyp_diagnostic(w, vol, [4, 8, 16, 32])
        out[name] = (d, time.perf_counter() - t0)
    return out


def test_criterion_4_mainhyp_sweep(criterion, mainhyp_results):
    parts, ok = [], True
    for name, (d, dt) in mainhyp_results.items():
        ratio = d.sup_values[-1] / d.sup_values[0]
        good = bool(d.verdict) and dt < 120
        ok &= good
        parts.append(f"{name} last/first {ratio:.3f} ({dt:.1f} s)")
    criterion(4, ok, "; ".join(parts))
    assert ok


# 5 ---------------------------------------------------------------------------------

def test_criterion_5_fs_current(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("nu-third", "poincare", "nu-half"):
        cfg = cfgmod.with_overrides(cfgmod.preset(name), experiment="fscurrent")
        bundle = run(cfg, None)
        rows = _csv_rows(bundle.tables["fscurrent.csv"])
        dists = [float(r["weak_distance"]) for r in rows]
        strict = all(x > y for x, y in zip(dists, dists[1:]))
        exact = max(dists) <= 1e-12
        # nu = 1/2 is exact at every p; the others must strictly decrease
        good = (exact if name == "nu-half" else strict) and all(bundle.verdicts.values())
        ok &= good
        parts.append(f"{name} d=" + ",".join(f"{x:.1e}" for x in dists))
    worst = 0.0
    for name in ("nu-third", "poincare"):
        w, vol, _ = _space(name)
        b = build_basis(8, w, vol)
        for tf in default_family():
            lhs, rhs = lemma_identity(b, tf)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
    ok &= worst <= 1e-4
    criterion(5, ok, "; ".join(parts) + f"; gap, mass ok; pairing identity {worst:.1e}, "
                                        f"{time.perf_counter() - t0:.1f} s")
    assert ok


# 6 ---------------------------------------------------------------------------------

RATIONAL_FIXTURES = (
    # (slopes, intercepts, exact total vertex area)
    (((1, 0), (0, 1), (0, 0)), (0, 0, 0), Fraction(1, 2)),
    (((1, 1), (-1, 1), (1, -1), (-1, -1)), (0, 0, 0, 0), Fraction(4)),
    (((2, 0), (0, 3), (0, 0), (1, 1)), (0, 0, 0, 1), Fraction(3)),
    (((0, 0), (1, 0), (0, 1), (1, 1), (2, 1)), (0, -1, -1, -1, -3), Fraction(3, 2)),
)


def test_criterion_6_monge_ampere_engine(criterion):
    t0 = time.perf_counter()
    exact = True
    for slopes, icpt, area in RATIONAL_FIXTURES:
        prof = MaxAffineProfile(np.array(slopes, float), np.array(icpt, float))
        got = sum(a for _, a in prof.vertex_masses())
        exact &= abs(got - float(area)) <= 1e-12
    pts = np.array([[s, t] for s in range(-2, 3) for t in range(-2, 3)], float)
    quad = TableProfile(pts, (pts ** 2).sum(axis=1))
    exact &= real_ma_measure(quad, Box(-0.5, 0.5, -0.5, 0.5)) == 8.0
    total = real_ma_measure(product_fs_profile(), Box(-40, 40, -40, 40))
    total_ok = abs(total - 2) <= 0.02 * 2
    tab = ma_convergence_harness(softmax_profile, corner_profile())
    dt = time.perf_counter() - t0
    ok = exact and total_ok and tab.verdict and dt < 60
    criterion(6, ok, f"rational fixtures exact {exact}; product FS total {total:.6f}; "
                     f"softmax errors {np.round(tab.errors.max(axis=1), 6).tolist()}, {dt:.1f} s")
    assert ok


# 7 ---------------------------------------------------------------------------------

def test_criterion_7_toric_k2(criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("product-fs", "atom-line"):
        cfg = cfgmod.with_overrides(cfgmod.preset(name), experiment="ma2")
        bundle = run(cfg, None)
        rows = _csv_rows(bundle.tables["ma2.csv"])
        errs = {}
        for r in rows:
            errs.setdefault(int(r["p"]), []).append(float(r["abs_error"]))
        good = bundle.verdicts["ma2.trend"] and not bundle.errors
        ok &= good
        parts.append(f"{name} max err " + ",".join(f"{max(v):.1e}" for v in errs.values()))
    criterion(7, ok, "; ".join(parts) + f", {time.perf_counter() - t0:.1f} s")
    assert ok


# 8 ---------------------------------------------------------------------------------

def test_criterion_8_random_sections(criterion):
    t0 = time.perf_counter()
    tab = expectation_estimate(build_basis(10, fubini_study_weight()), 2000, seed=0)
    worst = max(abs(r.mean - r.reference) / r.stderr for r in tab.rows)
    cd = {}
    for d in (2, 3, 5, 8):
        mean, se = cd_constant(d, n=10**6, seed=0, stream=d)
        cd[d] = abs(mean - cd_reference(d)) / se
    bases = {p: build_basis(p, fubini_study_weight()) for p in (4, 8, 16, 32, 64)}
    seq = [sequence_run(bases, seed) for seed in range(10)]
    passed = sum(t.verdict for t in seq)
    dt = time.perf_counter() - t0
    ok = tab.verdict and all(v <= 3 for v in cd.values()) and passed == 10 and dt < 300
    criterion(8, ok, f"expectation max |dev|/se {worst:.2f}; cd |dev|/se "
                     + ",".join(f"{v:.2f}" for v in cd.values())
                     + f"; sequences {passed}/10, {dt:.1f} s")
    assert ok


# 9 ---------------------------------------------------------------------------------

def test_criterion_9_bezout(criterion):
    t0 = time.perf_counter()
    fs = fubini_study_weight()
    bad, posdim = 0, 0
    for p in (2, 4):
        tb = toric_basis(p, ProductWeight(fs, fs))
        s1, s2 = SphereSampler(tb.d_p, 0, 1), SphereSampler(tb.d_p, 0, 2)
        for i in range(100):
            try:
                cz = common_zeros_pair(tb, s1.sample(i), s2.sample(i))
            except PositiveDimensional:
                posdim += 1
                continue
            bad += cz.total != 2 * p * p
    ok = bad == 0 and posdim == 0
    criterion(9, ok, f"wrong counts {bad}/200, PositiveDimensional {posdim}, "
                     f"{time.perf_counter() - t0:.1f} s")
    assert ok


# 10 --------------------------------------------------------------------------------

def test_criterion_10_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    same = True
    n_files = 0
    for name in ("random-fs", "bezout", "nu-half"):
        outs = []
        for k in range(2):
            out = tmp_path / f"{name}-{k}"
            cmd = [sys.executable, "-c", "import sys; from eqlab.cli import main; "
                   "sys.exit(main(sys.argv[1:]))", "run", name, "--seed", "3", "--out", str(out)]
            if k:
                cmd.append("--no-cache")
            subprocess.run(cmd, check=False, capture_output=True,
                           env={**__import__("os").environ, "LAB_CACHE_DIR": str(tmp_path / "c")})
            outs.append(out)
        names = sorted(f.name for f in outs[0].glob("*.csv"))
        n_files += len(names)
        same &= bool(names) and names == sorted(f.name for f in outs[1].glob("*.csv"))
        same &= all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    criterion(10, same, f"{n_files} CSVs byte-identical across repeated runs, "
                        f"{time.perf_counter() - t0:.1f} s")
    assert same
