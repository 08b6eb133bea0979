"""Per-step diagnostics of a run."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional

FLIP_CATEGORIES = ("2d", "1d", "mortar")


@dataclass
class StepRecord:
    t: float
    dt: float
    newton_iters: int
    wasted_iters: int
    cuts: int
    flips: Dict[str, int]
    wasted_flips: Dict[str, int]
    mass_phase0: float
    mass_phase1: float
    clip_events: int

    def __post_init__(self):
        # every category is present so records compare equal after a CSV round trip
        self.flips = {k: int(self.flips.get(k, 0)) for k in FLIP_CATEGORIES}
        self.wasted_flips = {k: int(self.wasted_flips.get(k, 0)) for k in FLIP_CATEGORIES}


@dataclass
class RunReport:
    scheme: str = ""
    case: str = ""
    steps: List[StepRecord] = field(default_factory=list)
    status: str = "running"
    message: str = ""
    initial_mass: tuple = (0.0, 0.0)
    # effort spent after the last accepted step of a failed run
    unaccepted_iters: int = 0
    unaccepted_cuts: int = 0
    unaccepted_flips: Counter = field(default_factory=Counter)
    e_a: Optional[float] = None

    @property
    def last_t(self) -> float:
        return self.steps[-1].t if self.steps else 0.0

    @property
    def cumulative_newton_iterations(self) -> int:
        return sum(s.newton_iters for s in self.steps) + self.unaccepted_iters

    @property
    def cumulative_cuts(self) -> int:
        return sum(s.cuts for s in self.steps) + self.unaccepted_cuts

    def cumulative_flips(self, wasted: bool = False) -> Counter:
        total = Counter()
        for s in self.steps:
            total.update(s.wasted_flips if wasted else s.flips)
        if wasted:
            total.update(self.unaccepted_flips)
        return total

    def mass_drift(self) -> List[tuple]:
        """Relative change of each phase mass over every accepted step."""
        out = []
        prev = self.initial_mass
        for s in self.steps:
            cur = (s.mass_phase0, s.mass_phase1)
            out.append(tuple(abs(c - p) / max(abs(p), 1e-300) for c, p in zip(cur, prev)))
            prev = cur
        return out

    def summary(self) -> dict:
        flips = self.cumulative_flips()
        wasted = self.cumulative_flips(wasted=True)
        return {
            "case": self.case,
            "scheme": self.scheme,
            "status": self.status,
            "message": self.message,
            "last_t": self.last_t,
            "accepted_steps": len(self.steps),
            "cum_newton_iters": self.cumulative_newton_iterations,
            "cum_cuts": self.cumulative_cuts,
            "cum_flips": {k: int(flips.get(k, 0)) for k in FLIP_CATEGORIES},
            "cum_wasted_flips": {k: int(wasted.get(k, 0)) for k in FLIP_CATEGORIES},
            "E_A": self.e_a,
            "initial_mass": list(self.initial_mass),
            "max_mass_drift": max((max(d) for d in self.mass_drift()), default=0.0),
            "clip_events": sum(s.clip_events for s in self.steps),
        }
