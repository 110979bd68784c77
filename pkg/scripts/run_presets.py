"""Run every named preset (or a chosen subset) and print verdicts and wall times."""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field

from eqlab import config as cfgmod
from eqlab.cache import BasisCache
from eqlab.cli import run


@dataclass
class RunnerConfig:
    presets: list = field(default_factory=lambda: list(cfgmod.PRESETS))
    out_root: str = "lab-out"
    seed: int | None = None
    use_cache: bool = True


def main(rc: RunnerConfig) -> int:
    cache = BasisCache() if rc.use_cache else None
    failed = 0
    for name in rc.presets:
        cfg = cfgmod.with_overrides(cfgmod.preset(name), seed=rc.seed, out=f"{rc.out_root}/{name}")
        t0 = time.perf_counter()
        bundle = run(cfg, cache)
        bundle.write(cfg.out)
        dt = time.perf_counter() - t0
        verdict = "PASS" if bundle.passed else "FAIL"
        failed += not bundle.passed
        print(f"{name:12s} {verdict}  {dt:6.1f} s  -> {cfg.out}")
        for k, ok in sorted(bundle.verdicts.items()):
            if not ok:
                print(f"    failed verdict: {k}")
        for err in bundle.errors:
            print(f"    error: {err}")
    return 1 if failed else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("presets", nargs="*", default=None)
    ap.add_argument("--out-root", default="lab-out")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--no-cache", action="store_true")
    a = ap.parse_args()
    rc = RunnerConfig(out_root=a.out_root, seed=a.seed, use_cache=not a.no_cache)
    if a.presets:
        rc.presets = a.presets
    raise SystemExit(main(rc))
