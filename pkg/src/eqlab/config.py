"""Experiment configuration: sectioned ``key = value`` files and named presets."""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError

EXPERIMENTS = ("dim", "bergman", "fscurrent", "zeros", "expectation", "sequence", "ma2",
               "report-all")
SMOOTH_IDS = ("fs", "fs-skew", "fs-quadratic", "zero")


def _parse_point(text: str) -> complex:
    t = text.strip().lower()
    if t in ("inf", "infinity", "oo"):
        return complex(math.inf)
    return complex(t.replace(" ", "").replace("i", "j"))


def _fmt_point(a: complex) -> str:
    if not math.isfinite(a.real):
        return "inf"
    if a.imag == 0:
        return repr(float(a.real))
    return repr(complex(a)).strip("()")


def _parse_fraction(text: str) -> float:
    t = text.strip()
    if "/" in t:
        num, den = t.split("/")
        return float(num) / float(den)
    return float(t)


@dataclass(frozen=True)
class WeightSpec:
    smooth: str = "fs"
    atoms: tuple = ()            # ((point, nu), ...)
    epsilon: float = 0.0
    co_mass: bool = True

    def build(self):
        from .geom import SingularWeight, apply_poincare_perturbation, smooth_preset

        finite = sum(nu for a, nu in self.atoms if math.isfinite(a.real))
        scale = 1.0 - finite if self.co_mass else 1.0
        if scale < 0:
            raise ConfigError("atom masses exceed the class of O(1)", key="atoms")
        w = SingularWeight(smooth_preset(self.smooth, scale), self.atoms)
        return apply_poincare_perturbation(w, self.epsilon) if self.epsilon else w


@dataclass(frozen=True)
class VolumeSpec:
    kind: str = "fs"
    punctures: tuple = ()
    kappa: float = 1.0

    def build(self):
        from .geom import VolumeDensity

        return VolumeDensity(self.kind, self.punctures, self.kappa)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run."""

    name: str = "custom"
    experiment: str = "report-all"
    model: str = "sphere"
    weight: WeightSpec = field(default_factory=WeightSpec)
    weight2: WeightSpec = field(default_factory=WeightSpec)
    volume: VolumeSpec = field(default_factory=VolumeSpec)
    p_list: tuple = (4, 8, 16)
    sequence_p: tuple = (4, 8, 16, 32, 64)
    r_in: float = 0.5
    r_out: float = 2.0
    n_r: int = 16
    n_theta: int = 32
    delta: float = 0.1
    region_lo: float = -3.0
    region_hi: float = 3.0
    region_n: int = 3
    seed: int = 0
    seeds: int = 10
    samples: int = 200
    out: str = "lab-out"

    def __post_init__(self):
        for e in self.experiments:
            if e not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment {e!r}", key="experiment")
        if self.model not in ("sphere", "product"):
            raise ConfigError(f"unknown model {self.model!r}", key="model")
        for w, sec in ((self.weight, "weight"), (self.weight2, "weight2")):
            if w.smooth not in SMOOTH_IDS:
                raise ConfigError(f"unknown smooth preset {w.smooth!r}", key=f"{sec}.smooth")
        if self.volume.kind not in ("fs", "poincare"):
            raise ConfigError(f"unknown volume kind {self.volume.kind!r}", key="volume.kind")
        if not self.p_list or list(self.p_list) != sorted(set(self.p_list)) or self.p_list[0] < 1:
            raise ConfigError("p list must be increasing positive integers", key="sweep.p")
        sp = list(self.sequence_p)
        if len(sp) < 2 or sp != sorted(set(sp)) or sp[0] < 1:
            raise ConfigError("sequence p list must be increasing, length >= 2",
                              key="sweep.sequence_p")

    @property
    def experiments(self) -> tuple:
        """``kind`` may be a comma-separated list of experiments."""
        return tuple(e.strip() for e in self.experiment.split(",") if e.strip())

    def emit(self) -> str:
        return emit(self)

    def hash(self) -> str:
        return hashlib.sha256(self.emit().encode()).hexdigest()


# ---------------------------------------------------------------------------
# Text form

_SCHEMA = {
    "experiment": {"name": str, "kind": str, "model": str},
    "weight": {"smooth": str, "atoms": "atoms", "epsilon": float, "co_mass": bool},
    "weight2": {"smooth": str, "atoms": "atoms", "epsilon": float, "co_mass": bool},
    "volume": {"kind": str, "punctures": "points", "kappa": float},
    "sweep": {"p": "ints", "sequence_p": "ints", "r_in": float, "r_out": float, "n_r": int, "n_theta": int,
              "delta": float},
    "regions": {"lo": float, "hi": float, "n": int},
    "random": {"seed": int, "seeds": int, "samples": int},
    "output": {"dir": str},
}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return i
        elif cur == section and key is not None and "=" in s and s.split("=")[0].strip() == key:
            return i
    return None


def _convert(kind, raw: str, key: str, line):
    try:
        if kind is str:
            return raw.strip()
        if kind is bool:
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if kind is float:
            return float(raw)
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind == "points":
            return tuple(_parse_point(x) for x in raw.split(",") if x.strip())
        if kind == "atoms":
            out = []
            for item in raw.split(","):
                if not item.strip():
                    continue
                pt, nu = item.rsplit(":", 1)
                out.append((_parse_point(pt), _parse_fraction(nu)))
            return tuple(out)
    except ValueError as e:
        raise ConfigError(f"bad value {raw!r} for {key}: {e}", key=key, line=line) from None
    raise AssertionError(kind)


def parse(text: str) -> ExperimentConfig:
    """Parse config text; unknown sections or keys raise ConfigError naming them."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", line=getattr(e, "lineno", None)) from None
    vals = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", key=sec, line=_line_of(text, sec, None))
        for key, raw in cp.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", key=key,
                                  line=_line_of(text, sec, key))
            vals[(sec, key)] = _convert(_SCHEMA[sec][key], raw, f"{sec}.{key}",
                                        _line_of(text, sec, key))

    def get(sec, key, default):
        return vals.get((sec, key), default)

    def wspec(sec):
        d = WeightSpec()
        return WeightSpec(get(sec, "smooth", d.smooth), get(sec, "atoms", d.atoms),
                          get(sec, "epsilon", d.epsilon), get(sec, "co_mass", d.co_mass))

    d = ExperimentConfig()
    try:
        return ExperimentConfig(
            name=get("experiment", "name", d.name),
            experiment=get("experiment", "kind", d.experiment),
            model=get("experiment", "model", d.model),
            weight=wspec("weight"),
            weight2=wspec("weight2"),
            volume=VolumeSpec(get("volume", "kind", "fs"), get("volume", "punctures", ()),
                              get("volume", "kappa", 1.0)),
            p_list=get("sweep", "p", d.p_list),
            sequence_p=get("sweep", "sequence_p", d.sequence_p),
            r_in=get("sweep", "r_in", d.r_in), r_out=get("sweep", "r_out", d.r_out),
            n_r=get("sweep", "n_r", d.n_r), n_theta=get("sweep", "n_theta", d.n_theta),
            delta=get("sweep", "delta", d.delta),
            region_lo=get("regions", "lo", d.region_lo), region_hi=get("regions", "hi", d.region_hi),
            region_n=get("regions", "n", d.region_n),
            seed=get("random", "seed", d.seed), seeds=get("random", "seeds", d.seeds),
            samples=get("random", "samples", d.samples),
            out=get("output", "dir", d.out),
        )
    except ConfigError as e:
        sec, _, key = (e.key or "").rpartition(".")
        line = _line_of(text, sec or "experiment", {"experiment": "kind", "sweep.p": "p", "sweep.sequence_p": "sequence_p"}.get(e.key, key))
        raise ConfigError(e.message, key=e.key, line=line) from None


def emit(cfg: ExperimentConfig) -> str:
    """Normalized text form; ``parse(emit(c)) == c``."""

    def atoms(w):
        return ", ".join(f"{_fmt_point(a)}:{nu!r}" for a, nu in w.atoms)

    def wsec(name, w):
        return [f"[{name}]", f"smooth = {w.smooth}", f"atoms = {atoms(w)}",
                f"epsilon = {w.epsilon!r}", f"co_mass = {str(w.co_mass).lower()}", ""]

    lines = ["[experiment]", f"name = {cfg.name}", "kind = " + ", ".join(cfg.experiments),
             f"model = {cfg.model}", ""]
    lines += wsec("weight", cfg.weight)
    lines += wsec("weight2", cfg.weight2)
    lines += ["[volume]", f"kind = {cfg.volume.kind}",
              "punctures = " + ", ".join(_fmt_point(a) for a in cfg.volume.punctures),
              f"kappa = {cfg.volume.kappa!r}", ""]
    lines += ["[sweep]", "p = " + ", ".join(str(p) for p in cfg.p_list),
              "sequence_p = " + ", ".join(str(p) for p in cfg.sequence_p),
              f"r_in = {cfg.r_in!r}", f"r_out = {cfg.r_out!r}", f"n_r = {cfg.n_r}",
              f"n_theta = {cfg.n_theta}", f"delta = {cfg.delta!r}", ""]
    lines += ["[regions]", f"lo = {cfg.region_lo!r}", f"hi = {cfg.region_hi!r}",
              f"n = {cfg.region_n}", ""]
    lines += ["[random]", f"seed = {cfg.seed}", f"seeds = {cfg.seeds}",
              f"samples = {cfg.samples}", ""]
    lines += ["[output]", f"dir = {cfg.out}", ""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Presets

# single-draw sequence verdicts are too noisy below p = 64, which singular
# weights cannot reach without IllConditioned
SINGULAR_KINDS = "dim, bergman, fscurrent, zeros, expectation"

PRESETS = {
    "fs-baseline": ExperimentConfig(name="fs-baseline", p_list=(2, 4, 8, 16, 32)),
    "nu-half": ExperimentConfig(name="nu-half", experiment=SINGULAR_KINDS,
                                weight=WeightSpec(atoms=((0j, 0.5),)), p_list=(4, 8, 16, 32)),
    "nu-third": ExperimentConfig(name="nu-third", experiment=SINGULAR_KINDS,
                                 weight=WeightSpec(atoms=((0j, 1 / 3),)), p_list=(4, 8, 16, 32)),
    "nu-one": ExperimentConfig(name="nu-one", experiment="dim",
                               weight=WeightSpec(atoms=((0j, 1.0),)),
                               p_list=(1, 2, 3, 4, 8, 16, 32)),
    "poincare": ExperimentConfig(name="poincare", experiment=SINGULAR_KINDS,
                                 weight=WeightSpec(atoms=((0j, 0.5),), epsilon=0.05),
                                 volume=VolumeSpec("poincare", (0j,)), p_list=(4, 8, 16, 32)),
    "random-fs": ExperimentConfig(name="random-fs", experiment="expectation, sequence",
                                  p_list=(10,), samples=2000),
    "product-fs": ExperimentConfig(name="product-fs", model="product", experiment="dim, ma2",
                                   p_list=(4, 8, 16)),
    "atom-line": ExperimentConfig(name="atom-line", model="product", experiment="dim, ma2",
                                  weight=WeightSpec(atoms=((0j, 1 / 3),)), p_list=(4, 8, 16)),
    "bezout": ExperimentConfig(name="bezout", model="product", experiment="zeros, expectation",
                               p_list=(2, 4), samples=100),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}", key=name) from None


def load(path_or_preset: str) -> ExperimentConfig:
    """A preset name or a path to a config file."""
    from pathlib import Path

    if path_or_preset in PRESETS:
        return PRESETS[path_or_preset]
    p = Path(path_or_preset)
    if not p.exists():
        raise ConfigError(f"no such config file or preset: {path_or_preset}")
    return parse(p.read_text())


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    names = {f.name for f in fields(cfg)}
    bad = set(kw) - names
    if bad:
        raise ConfigError(f"unknown field {sorted(bad)[0]!r}", key=sorted(bad)[0])
    from dataclasses import replace

    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
