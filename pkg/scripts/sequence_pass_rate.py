"""Empirical pass rate of the single-draw sequence verdict over many seeds.

Used to choose the p-list for the almost-sure convergence check; the rate
for a given weight tells how often one sampled sequence misses the slope
threshold by chance."""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from eqlab.geom import fubini_study_weight
from eqlab.l2 import build_basis
from eqlab.random_sections import sequence_run


@dataclass
class RateConfig:
    nu: float = 0.0
    p_list: tuple = (4, 8, 16, 32, 64)
    seeds: int = 300


def pass_rate(rc: RateConfig):
    w = fubini_study_weight([(0, rc.nu)] if rc.nu else [])
    bases = {p: build_basis(p, w) for p in rc.p_list}
    tabs = [sequence_run(bases, s) for s in range(rc.seeds)]
    ok = np.array([t.verdict for t in tabs])
    slopes = np.array([t.slope for t in tabs])
    return float(ok.mean()), np.nonzero(~ok)[0].tolist(), float(np.median(slopes))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nu", type=float, default=0.0)
    ap.add_argument("--p", default="4,8,16,32,64")
    ap.add_argument("--seeds", type=int, default=300)
    a = ap.parse_args()
    rc = RateConfig(a.nu, tuple(int(x) for x in a.p.split(",")), a.seeds)
    rate, failing, med = pass_rate(rc)
    print(f"nu={rc.nu} p={list(rc.p_list)} seeds={rc.seeds}: pass rate {rate:.3f}, "
          f"median slope {med:.3f}")
    print(f"failing seeds: {failing[:20]}{' ...' if len(failing) > 20 else ''}")
