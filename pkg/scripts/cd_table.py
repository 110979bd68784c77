"""Monte Carlo table of E log|<a, u>| on the unit sphere of C^d against -H_{d-1}/2."""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from eqlab.random_sections import cd_constant, cd_reference


@dataclass
class CdConfig:
    dims: tuple = (2, 3, 5, 8)
    n: int = 10**6
    seed: int = 0


def main(cc: CdConfig) -> None:
    print("d,mean,stderr,reference,z")
    for d in cc.dims:
        mean, se = cd_constant(d, n=cc.n, seed=cc.seed, stream=d)
        ref = cd_reference(d)
        z = (mean - ref) / se if se else 0.0
        print(f"{d},{mean!r},{se!r},{ref!r},{z:.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="2,3,5,8")
    ap.add_argument("--n", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    main(CdConfig(tuple(int(x) for x in a.dims.split(",")), a.n, a.seed))
