"""Acceptance criteria as runnable experiment configs.

Each criterion is one bundled experiment run; it passes when every gating
claim in the summary holds.  Non-gating criteria report but never fail.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs" / "acceptance"


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    experiment: str
    config: str
    budget_s: float
    gating: bool = True


CRITERIA = (
    Criterion(1, "virial identity at 4pi, 8pi, 12pi", "simulate2d", "c1_virial.json", 180),
    Criterion(2, "critical-mass dichotomy", "simulate2d", "c2_dichotomy.json", 300),
    Criterion(3, "free-energy monotonicity (finite volumes and JKO)", "jko", "c3_monotonicity.json", 120),
    Criterion(4, "stationarity and rescaled asymptotics", "rescaled", "c4_stationarity.json", 300),
    Criterion(5, "inequality suite on the seeded corpus", "inequalities", "c5_inequalities.json", 120),
    Criterion(6, "critical-case energy law", "simulate2d", "c6_critical_energy.json", 120),
    Criterion(7, "d = 3 porous-medium criticality", "pme", "c7_porous_medium.json", 600),
    Criterion(8, "shooting figures", "shoot", "c8_shooting.json", 60),
    Criterion(9, "JKO against finite volumes", "jko", "c9_cross_solver.json", 120),
    Criterion(10, "blowup zoom (non-gating)", "simulate2d", "c10_zoom.json", 300, gating=False),
)


@dataclass
class Outcome:
    criterion: Criterion
    exit_code: int
    wall_time: float
    claims: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        if not self.criterion.gating:
            return self.error is None
        return self.exit_code == 0

    @property
    def failed_claims(self) -> list:
        return [c for c in self.claims if c["gating"] and not c["passed"]]

    def line(self) -> str:
        c = self.criterion
        status = "PASS" if self.passed else "FAIL"
        if not c.gating:
            status += " (non-gating)"
            flagged = [cl["name"] for cl in self.claims if not cl["passed"]]
            if flagged:
                status += " flagged: " + ", ".join(flagged)
        extra = ""
        if self.error:
            extra = f" error: {self.error}"
        elif self.failed_claims:
            extra = " failed: " + ", ".join(f"{cl['name']}={cl['value']!r}" for cl in self.failed_claims)
        over = " over budget" if self.wall_time > c.budget_s else ""
        return f"criterion {c.number:2d} [{status}] {c.title} ({self.wall_time:.1f}s{over}){extra}"


def get(number: int) -> Criterion:
    for c in CRITERIA:
        if c.number == number:
            return c
    raise KeyError(f"no criterion {number}")


def run_criterion(number: int, out_root: Path | None = None, config_dir: Path = CONFIG_DIR) -> Outcome:
    from .cli import execute, load_config
    c = get(number)
    cfg = load_config(config_dir / c.config)
    cfg.setdefault("experiment", c.experiment)
    root = Path(out_root) if out_root is not None else Path(tempfile.mkdtemp(prefix="pkslab-acc-"))
    start = time.perf_counter()
    code, summary = execute(cfg, root / f"c{number:02d}", deterministic=True)
    return Outcome(c, code, time.perf_counter() - start, summary.get("claims", []), summary.get("error"))
