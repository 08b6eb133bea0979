"""Run a case end to end: load, march, report."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import make_scheme
from .cases import CaseConfig, compute_EA, load_case
from .report import RunReport
from .solver import Assembler, DofLayout, TimeController, advance
from .topology import MixedDimDomain

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: CaseConfig
    domain: MixedDimDomain
    layout: DofLayout
    states: List[Tuple[float, np.ndarray]]
    report: RunReport

    @property
    def completed(self) -> bool:
        return self.report.status == "completed"


def run_case(
    case,
    scheme: Optional[str] = None,
    dt_max: Optional[float] = None,
    tol: Optional[float] = None,
    t_end: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> RunResult:
    """Simulate a bundled case or case file; ``None`` keeps the case's own setting."""
    domain, config, x0, layout = load_case(case)
    scheme = scheme or config.scheme
    dt_max = config.dt_max if dt_max is None else dt_max
    t_end = config.t_end if t_end is None else t_end
    tol = config.tol if tol is None else tol
    max_iter = config.max_iter if max_iter is None else max_iter
    if not (dt_max > 0 and t_end >= 0 and tol > 0 and max_iter > 0):
        raise ValueError("dt_max, tol and max_iter must be positive and t_end non-negative")
    e_a = compute_EA(config)
    logger.info("%s with %s: E_A = %.6g, t_end = %g, dt_max = %g", config.name, scheme, e_a, t_end, dt_max)
    asm = Assembler(domain, config.fluid, make_scheme(scheme), config.gravity, layout)
    report = RunReport(scheme=scheme, case=config.name, e_a=e_a)
    states, report = advance(asm, TimeController(dt_max, t_end), x0, tol, max_iter, report)
    return RunResult(config, domain, layout, states, report)
