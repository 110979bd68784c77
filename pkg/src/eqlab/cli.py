"""Command-line experiment runner.

    lab run <config|preset> [--out DIR] [--seed N] [--no-cache] [--svg]
    lab cache-gc --max-bytes N [--dir DIR]
    lab presets

Exit status: 0 when every verdict passes, 2 on a numerical-contract
violation, 1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from .cache import BasisCache, cache_gc, default_cache_dir
from .config import ExperimentConfig
from .errors import ConfigError, IoFailure, LabError, NumericalError
from .report import ReportBundle, seeded

SPHERE_EXPERIMENTS = ("dim", "bergman", "fscurrent", "zeros", "expectation", "sequence")
PRODUCT_EXPERIMENTS = ("dim", "ma2", "zeros", "expectation")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class Context:
    def __init__(self, cfg: ExperimentConfig, cache: BasisCache | None):
        self.cfg = cfg
        self.cache = cache
        self._bases = {}
        self._tbases = {}

    @property
    def weight(self):
        return self.cfg.weight.build()

    @property
    def volume(self):
        return self.cfg.volume.build()

    def basis(self, p):
        from .l2 import build_basis

        if p not in self._bases:
            self._bases[p] = build_basis(p, self.weight, self.volume, cache=self.cache)
        return self._bases[p]

    def product_weight(self):
        from .l2 import ProductWeight

        if self.cfg.volume.kind != "fs":
            raise ConfigError("product model supports the FS volume only", key="volume.kind")
        return ProductWeight(self.cfg.weight.build(), self.cfg.weight2.build())

    def tbasis(self, p):
        from .l2 import toric_basis

        if p not in self._tbases:
            self._tbases[p] = toric_basis(p, self.product_weight(), cache=self.cache)
        return self._tbases[p]

    def regions(self):
        from .toric import box_grid

        c = self.cfg
        return box_grid(c.region_lo, c.region_hi, c.region_n)


# ---------------------------------------------------------------------------
# Sphere experiments


def exp_dim(ctx: Context, b: ReportBundle):
    from .l2 import brute_force_admissible, infinity_lelong, integrability_filter

    c = ctx.cfg
    if c.model == "product":
        w1, w2 = ctx.product_weight().first, ctx.product_weight().second
        rows = []
        for p in c.p_list:
            s1, s2 = integrability_filter(p, w1), integrability_filter(p, w2)
            rows.append((p, s1.d_p, s2.d_p, s1.d_p * s2.d_p, s1.k0, s2.k0))
        b.tables["dim.csv"] = _csv(["p", "d_p_first", "d_p_second", "d_p", "k_min_first",
                                    "k_min_second"], rows)
        return
    w, vol = ctx.weight, ctx.volume
    rows, ok = [], True
    for p in c.p_list:
        sp = integrability_filter(p, w, vol)
        bk0 = next(k for k in range(p + 2) if brute_force_admissible(p, w, vol, k))
        bkinf = next(k for k in range(p + 2)
                     if brute_force_admissible(p, w, vol, k, at_infinity=True))
        match = bk0 == sp.k0 and bkinf == sp.k_inf
        ok &= match
        rows.append((p, sp.d_p, sp.k0, sp.k_inf, float(infinity_lelong(w)), bk0, bkinf, int(match)))
    b.tables["dim.csv"] = _csv(["p", "d_p", "k_min", "k_inf", "nu_inf", "oracle_k_min",
                                "oracle_k_inf", "match"], rows)
    b.verdicts["dim.oracle_match"] = ok


def exp_bergman(ctx: Context, b: ReportBundle):
    from .bergman import (NORMALIZATION_TOL, annulus_grid, bergman_eval, mainhyp_diagnostic,
                          normalization_check, standoff_region)

    c = ctx.cfg
    grid = annulus_grid(c.r_in, c.r_out, c.n_r, c.n_theta)
    pts = standoff_region(ctx.weight, grid, c.delta, ctx.volume)
    rows, norm_rows, ok_norm, ok_id = [], [], True, True
    for p in c.p_list:
        basis = ctx.basis(p)
        if basis.d_p == 0:
            norm_rows.append((p, 0, 0.0, 0.0, "undefined"))
            continue
        P = bergman_eval(basis, pts)
        rows += [(p, float(x.real), float(x.imag), float(v)) for x, v in zip(pts, P)]
        integral = normalization_check(basis)
        rel = abs(integral - basis.d_p) / basis.d_p
        good = rel <= 10 * NORMALIZATION_TOL
        ok_norm &= good
        if basis.gram is not None:
            G = basis.gram
            Cm = basis.C
            resid = float(np.max(np.abs(Cm @ G @ Cm.conj().T - np.eye(basis.d_p))))
            ok_id &= resid <= 1e-8
        norm_rows.append((p, basis.d_p, float(integral), float(rel), "pass" if good else "fail"))
    b.tables["bergman.csv"] = _csv(["p", "x_re", "x_im", "P_p"], rows)
    b.tables["normalization.csv"] = _csv(["p", "d_p", "integral_P_p", "rel_error", "verdict"],
                                         norm_rows)
    b.verdicts["bergman.normalization"] = ok_norm
    b.verdicts["bergman.gram_identity"] = ok_id
    plist = [p for p in c.p_list if ctx.basis(p).d_p > 0]
    if len(plist) >= 2:
        diag = mainhyp_diagnostic(ctx.weight, ctx.volume, plist, grid, c.delta,
                                  bases={p: ctx.basis(p) for p in plist})
        b.tables["mainhyp.csv"] = diag.to_csv()
        b.verdicts["bergman.mainhyp_trend"] = bool(diag.verdict)
        b.plots["mainhyp.svg"] = (plist, {"sup |log P_p| / p": diag.sup_values},
                                  f"{c.name}: Bergman kernel sweep")


def exp_fscurrent(ctx: Context, b: ReportBundle):
    from .currents import curvature_current, default_family, fs_current, lemma_identity, \
        weak_distance
    from .toric import EXACT_FLOOR

    c = ctx.cfg
    gamma = curvature_current(ctx.weight)
    fam = default_family()
    rows, dists, ok_gap, ok_mass, ok_lemma, plist = [], [], True, True, True, []
    atoms = [a for a, _ in gamma.atoms]
    for p in c.p_list:
        basis = ctx.basis(p)
        if basis.d_p == 0:
            continue
        gp = fs_current(basis)
        d = weak_distance(gp.scaled(1.0 / p), gamma, fam)
        gaps = [abs(gp.atom_at(a) / p - gamma.atom_at(a)) for a in atoms]
        gap = max(gaps) if gaps else 0.0
        mass = gp.integrated_ac_mass() + gp.atom_mass
        lhs, rhs = lemma_identity(basis, fam[0], gamma)
        lemma = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
        ok_gap &= gap <= 1.0 / p + 1e-12
        ok_mass &= abs(mass - p) <= 1e-4 * p
        ok_lemma &= lemma <= 1e-4
        dists.append(d)
        plist.append(p)
        rows.append((p, float(d), float(gap), float(mass), float(lemma)))
    b.tables["fscurrent.csv"] = _csv(["p", "weak_distance", "lelong_gap", "mass_gamma_p",
                                      "lemma_rel_residual"], rows)
    strict = all(x > y for x, y in zip(dists, dists[1:])) or max(dists, default=0) <= EXACT_FLOOR
    b.verdicts["fscurrent.decreasing"] = bool(strict)
    b.verdicts["fscurrent.lelong_gap"] = bool(ok_gap)
    b.verdicts["fscurrent.mass"] = bool(ok_mass)
    b.verdicts["fscurrent.lemma_identity"] = bool(ok_lemma)
    if plist:
        b.plots["fscurrent.svg"] = (plist, {"weak distance": dists}, f"{c.name}: gamma_p / p")


def exp_zeros(ctx: Context, b: ReportBundle):
    from .random_sections import SphereSampler, zeros

    c = ctx.cfg
    if c.model == "product":
        return _exp_common_zeros(ctx, b)
    rows, ok = [], True
    first = None
    for p in c.p_list:
        basis = ctx.basis(p)
        if basis.d_p == 0:
            continue
        sampler = SphereSampler(basis.d_p, c.seed, p)
        A = sampler.samples(0, c.samples)
        sets = [zeros(basis, a, strict=False) for a in A]
        if first is None:
            first = (p, sets[0])
        ok &= all(z.total == p for z in sets)
        for pt, k in basis.space.orders:
            m = [z.multiplicity_at(pt) for z in sets]
            good = min(m) == k
            ok &= good
            rows.append((p, cfgmod._fmt_point(pt), k, min(m), max(m), len(m),
                         "pass" if good else "fail"))
    b.tables["vanishing.csv"] = _csv(["p", "point", "k_min", "min_multiplicity",
                                      "max_multiplicity", "draws", "verdict"], rows)
    if first is not None:
        b.tables[f"zeros_p{first[0]}.csv"] = first[1].to_csv()
    b.verdicts["zeros.vanishing_law"] = bool(ok)


def _exp_common_zeros(ctx: Context, b: ReportBundle):
    from .random_sections import SphereSampler, common_zeros_pair

    c = ctx.cfg
    rows, ok = [], True
    for p in c.p_list:
        tb = ctx.tbasis(p)
        s1, s2 = SphereSampler(tb.d_p, c.seed, 1), SphereSampler(tb.d_p, c.seed, 2)
        counts = [common_zeros_pair(tb, s1.sample(i), s2.sample(i)).total
                  for i in range(c.samples)]
        good = all(n == 2 * p * p for n in counts)
        ok &= good
        rows.append((p, c.samples, 2 * p * p, min(counts), max(counts), "pass" if good else "fail"))
    b.tables["common_zeros.csv"] = _csv(["p", "pairs", "bezout", "min_count", "max_count",
                                         "verdict"], rows)
    b.verdicts["zeros.bezout"] = bool(ok)


def exp_expectation(ctx: Context, b: ReportBundle):
    from .random_sections import expectation_estimate, k2_expectation

    c = ctx.cfg
    ok = True
    parts = []
    for p in c.p_list:
        if c.model == "product":
            tab = k2_expectation(ctx.tbasis(p), ctx.regions(), c.samples, c.seed)
        else:
            basis = ctx.basis(p)
            if basis.d_p == 0:
                continue
            tab = expectation_estimate(basis, c.samples, seed=c.seed, stream=p)
        ok &= tab.verdict
        body = tab.to_csv()
        parts.append(body if not parts else body.split("\n", 1)[1])
    b.tables["expectation.csv"] = "".join(parts)
    b.verdicts["expectation.within_3se"] = bool(ok)


def exp_sequence(ctx: Context, b: ReportBundle):
    from .random_sections import sequence_run

    c = ctx.cfg
    bases = {p: ctx.basis(p) for p in c.sequence_p if ctx.basis(p).d_p > 0}
    parts, ok = [], True
    for s in range(c.seed, c.seed + c.seeds):
        tab = sequence_run(bases, s)
        ok &= tab.verdict
        body = tab.to_csv()
        parts.append(body if not parts else body.split("\n", 1)[1])
    b.tables["sequence.csv"] = "".join(parts)
    b.verdicts["sequence.trend"] = bool(ok)


def exp_ma2(ctx: Context, b: ReportBundle):
    from .toric import MATable, product_fs_mass, toric_fs_square

    c = ctx.cfg
    if c.model != "product":
        raise ConfigError("ma2 needs the product model", key="model")
    w1, w2 = c.weight, c.weight2
    if w2.atoms or w1.smooth != "fs" or w2.smooth != "fs" or w1.epsilon or w2.epsilon \
            or any(a != 0 for a, _ in w1.atoms):
        raise ConfigError("ma2 reference masses need FS factors with atoms at 0 only",
                          key="weight.atoms")
    nu = sum(n for _, n in w1.atoms)
    regions = ctx.regions()
    approx = np.array([toric_fs_square(ctx.tbasis(p), regions) for p in c.p_list])
    limit = np.array([product_fs_mass(bx, nu) for bx in regions])
    tab = MATable(list(c.p_list), regions, approx, limit)
    b.tables["ma2.csv"] = tab.to_csv()
    b.verdicts["ma2.trend"] = tab.verdict
    b.plots["ma2.svg"] = (list(c.p_list), {"max region error": tab.errors.max(axis=1)},
                          f"{c.name}: toric masses")


EXPERIMENTS = {
    "dim": exp_dim, "bergman": exp_bergman, "fscurrent": exp_fscurrent, "zeros": exp_zeros,
    "expectation": exp_expectation, "sequence": exp_sequence, "ma2": exp_ma2,
}


def run(cfg: ExperimentConfig, cache: BasisCache | None = None) -> ReportBundle:
    """Execute the configured experiment(s) and collect tables and verdicts.

    Numerical errors are recorded with scenario context rather than raised."""
    allowed = PRODUCT_EXPERIMENTS if cfg.model == "product" else SPHERE_EXPERIMENTS
    todo = []
    for e in cfg.experiments:
        if e == "report-all":
            todo += [x for x in allowed if x not in todo]
        elif e in allowed:
            todo += [e] if e not in todo else []
        else:
            raise ConfigError(f"experiment {e!r} is not available on the {cfg.model} model",
                              key="experiment.kind")
    text = cfg.emit()
    b = ReportBundle(text, cfg.hash(), cfg.seed)
    ctx = Context(cfg, cache)
    for name in todo:
        t0 = time.perf_counter()
        try:
            EXPERIMENTS[name](ctx, b)
        except NumericalError as e:
            b.errors.append(f"{cfg.name}/{name}: {type(e).__name__}: {e}")
        b.wall_times[name] = round(time.perf_counter() - t0, 3)
    b.tables = {k: seeded(v, cfg.seed, cfg.name) for k, v in b.tables.items()}
    return b


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="Equidistribution lab experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a config file or named preset")
    r.add_argument("config")
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--no-cache", action="store_true")
    r.add_argument("--svg", action="store_true")
    g = sub.add_parser("cache-gc", help="evict least-recently-used cache records")
    g.add_argument("--max-bytes", type=int, required=True)
    g.add_argument("--dir", default=None)
    sub.add_parser("presets", help="list named presets")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        if args.cmd == "presets":
            for name, c in cfgmod.PRESETS.items():
                print(f"{name:12s} {c.model:8s} {c.experiment:12s} p={','.join(map(str, c.p_list))}")
            return 0
        if args.cmd == "cache-gc":
            rep = cache_gc(args.dir or default_cache_dir(), args.max_bytes)
            print(f"evicted {len(rep.evicted)} records, freed {rep.freed} bytes, "
                  f"{rep.remaining} bytes remain")
            return 0
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        cache = None if args.no_cache else BasisCache()
        bundle = run(cfg, cache)
        out = bundle.write(cfg.out, svg=args.svg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except IoFailure as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"numerical error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for name, ok in sorted(bundle.verdicts.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for err in bundle.errors:
        print(f"ERROR {err}")
    print(f"wrote {len(bundle.tables)} tables to {out}")
    return 0 if bundle.passed else 2


if __name__ == "__main__":
    sys.exit(main())
