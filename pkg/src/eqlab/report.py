"""Report bundles: seeded CSV tables, a JSON manifest and optional SVG plots."""
from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import IoFailure


def seeded(text: str, seed: int, scenario: str) -> str:
    """Prefix a CSV body with the ``# seed=...`` header line."""
    return f"# seed={seed} scenario={scenario}\n" + text


@dataclass
class ReportBundle:
    config_text: str
    config_hash: str
    seed: int
    tables: dict = field(default_factory=dict)      # filename -> csv text
    verdicts: dict = field(default_factory=dict)    # name -> bool
    wall_times: dict = field(default_factory=dict)  # experiment -> seconds
    plots: dict = field(default_factory=dict)       # filename -> (x, {label: y}, title)
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(self.verdicts.values())

    def manifest(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "versions": {"eqlab": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(self.tables.items())},
            "verdicts": {k: bool(v) for k, v in sorted(self.verdicts.items())},
            "errors": list(self.errors),
            "wall_times": self.wall_times,
        }

    def write(self, out: str | Path, svg: bool = False) -> Path:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.ini").write_text(self.config_text)
            for name, text in self.tables.items():
                (out / name).write_text(text)
            (out / "manifest.json").write_text(json.dumps(self.manifest(), indent=1, sort_keys=True))
        except OSError as e:
            raise IoFailure(f"cannot write report to {out}: {e}") from e
        if svg:
            self.write_svg(out)
        return out

    def write_svg(self, out: Path) -> list:
        """Best effort: silently skipped when matplotlib is missing."""
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not available; skipping SVG", file=sys.stderr)
            return []
        written = []
        for name, (x, series, title) in self.plots.items():
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for label, y in series.items():
                ax.plot(x, y, marker="o", label=label)
            ax.set_title(title)
            ax.set_xscale("log", base=2)
            if all(np.all(np.asarray(y) > 0) for y in series.values()):
                ax.set_yscale("log")
            ax.legend(fontsize=7)
            fig.tight_layout()
            fig.savefig(out / name, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(name)
        return written
