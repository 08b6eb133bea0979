"""Fully implicit time stepping of the mixed-dimensional two-phase system.

Unknowns per subdomain are cell pressures ``p`` and heavy-phase saturations
``S0``; per mortar the two phase fluxes ``zeta0, zeta1``. Equations, in the same
block order: total mass balance, heavy-phase mass balance, mortar flux laws.

Cell balances are assembled in integrated form (multiplied by ``|c|``)::

    eps^a |c| (u - u_prev) / dt + eps^a sum_faces Q + (mortar outflow) - (mortar inflow) + f = 0

with ``u = u0 + u1`` (total) or ``u0`` (heavy phase).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import ad
from .fluid import FluidPair, density, mobility
from .flux import CellFields, FaceStencil, FluxScheme
from .grid import incidence
from .mortar import (
    coupling_sources,
    higher_side_cell_outflow,
    interface_upwind,
    lower_side_inflow,
    mortar_mass_flux,
    mortar_residual,
    zero_d_balance,
)
from .report import RunReport, StepRecord
from .topology import MixedDimDomain

logger = logging.getLogger(__name__)

DT_MIN = 1e-12


class AssemblyError(RuntimeError):
    """Raised when the residual contains non-finite entries."""


@dataclass(eq=False)
class DofLayout:
    """Position of every unknown block in the global vector.

    Block keys are ``("p", sd)``, ``("s0", sd)``, ``("z0", mortar)``, ``("z1", mortar)``.
    """

    blocks: List[Tuple[Tuple[str, int], int]]

    def __post_init__(self):
        self.offsets: Dict[Tuple[str, int], slice] = {}
        pos = 0
        for key, size in self.blocks:
            self.offsets[key] = slice(pos, pos + size)
            pos += size
        self.size = pos

    @classmethod
    def for_domain(cls, domain: MixedDimDomain, mortars_first: bool = False) -> "DofLayout":
        cells = []
        for sd in domain.subdomains:
            cells += [(("p", sd.id), sd.grid.num_cells), (("s0", sd.id), sd.grid.num_cells)]
        mortars = []
        for m in domain.mortars:
            mortars += [(("z0", m.id), m.num_cells), (("z1", m.id), m.num_cells)]
        return cls(mortars + cells if mortars_first else cells + mortars)

    def __getitem__(self, key) -> slice:
        return self.offsets[key]

    def saturation_index(self) -> np.ndarray:
        idx = [np.arange(self.size)[sl] for key, sl in self.offsets.items() if key[0] == "s0"]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)


@dataclass(eq=False)
class State:
    """Unknown vector together with its layout."""

    layout: DofLayout
    x: np.ndarray

    def p(self, sd: int) -> np.ndarray:
        return self.x[self.layout[("p", sd)]]

    def s0(self, sd: int) -> np.ndarray:
        return self.x[self.layout[("s0", sd)]]

    def zeta(self, mortar: int, phase: int) -> np.ndarray:
        return self.x[self.layout[(f"z{phase}", mortar)]]

    def copy(self) -> "State":
        return State(self.layout, self.x.copy())


@dataclass
class Evaluation:
    residual: ad.AdArray
    choices: Dict[Tuple[str, int, str], np.ndarray]


class Assembler:
    """Residual and exact Jacobian of one implicit Euler step.

    Args:
        domain: The mixed-dimensional domain with projections built.
        fluid: Heavy/light phase pair.
        scheme: Face-flux scheme (PPU or HU).
        gravity: Gravity constant ``g``.
        layout: Unknown ordering; defaults to subdomains first.
        withdrawal: Optional per-subdomain ``(total, phase0)`` mass withdrawal rates.
        anchor_pressure: Replace the total-mass equation of the first cell of the
            first subdomain by ``p = p_prev``. With incompressible phases and
            no-flow boundaries the pressure level is otherwise undetermined; that
            equation is then a linear combination of the others, so nothing is
            lost. Defaults to True exactly when both phases are incompressible
            and there is no withdrawal.
    """

    def __init__(
        self,
        domain: MixedDimDomain,
        fluid: FluidPair,
        scheme: FluxScheme,
        gravity: float = 1.0,
        layout: Optional[DofLayout] = None,
        withdrawal: Optional[Dict[int, Tuple[np.ndarray, np.ndarray]]] = None,
        anchor_pressure: Optional[bool] = None,
    ):
        self.domain = domain
        self.fluid = fluid
        self.scheme = scheme
        self.gravity = float(gravity)
        self.layout = layout or DofLayout.for_domain(domain)
        self.withdrawal = withdrawal or {}
        if anchor_pressure is None:
            incompressible = all(ph.compressibility == 0 for ph in fluid.phases)
            anchor_pressure = incompressible and not self.withdrawal
        self.anchor = self.layout[("p", domain.subdomains[0].id)].start if anchor_pressure else None
        self._stencil: Dict[int, FaceStencil] = {}
        self._incidence: Dict[int, sps.csr_matrix] = {}
        for sd in domain.subdomains:
            stencil = FaceStencil.from_grid(sd.grid)
            if stencil.num_faces:
                self._stencil[sd.id] = stencil
                self._incidence[sd.id] = incidence(sd.grid, stencil.faces)

    @property
    def num_unknowns(self) -> int:
        return self.layout.size

    def category(self, sd_id: int) -> str:
        return f"{self.domain.subdomain(sd_id).dim}d"

    def _cell_fields(self, p, s0) -> CellFields:
        heavy, light = self.fluid.phases
        rp = self.fluid.relperm
        return CellFields(
            p=p,
            s0=s0,
            rho=(density(heavy, p), density(light, p)),
            lam=(mobility(s0, heavy.viscosity, rp), mobility(1.0 - s0, light.viscosity, rp)),
        )

    def _accumulation(self, sd, p, s0):
        """Total and heavy-phase mass per cell (integrated, incl. eps^a)."""
        heavy, light = self.fluid.phases
        g = sd.grid
        weight = sd.codim_extension * g.cell_volumes * g.porosity
        u0 = weight * density(heavy, p) * s0
        u1 = weight * density(light, p) * (1.0 - s0)
        return u0 + u1, u0

    def masses(self, x: np.ndarray) -> Tuple[float, float]:
        """Total mass of the heavy and the light phase."""
        m0 = m1 = 0.0
        for sd in self.domain.subdomains:
            p, s0 = x[self.layout[("p", sd.id)]], x[self.layout[("s0", sd.id)]]
            total, u0 = self._accumulation(sd, p, s0)
            m0 += float(np.sum(u0))
            m1 += float(np.sum(total - u0))
        return m0, m1

    def evaluate(self, x: np.ndarray, x_prev: np.ndarray, dt: float) -> Evaluation:
        """Residual with Jacobian at ``x`` for the step ``x_prev -> x`` of length ``dt``."""
        n = self.num_unknowns
        lay = self.layout
        var = {key: ad.AdArray.variables(x[sl], sl.start, n) for key, sl in lay.offsets.items()}
        choices: Dict[Tuple[str, int, str], np.ndarray] = {}

        fields, storage, res_p, res_s = {}, {}, {}, {}
        for sd in self.domain.subdomains:
            p, s0 = var[("p", sd.id)], var[("s0", sd.id)]
            fields[sd.id] = self._cell_fields(p, s0)
            acc = self._accumulation(sd, p, s0)
            acc_prev = self._accumulation(sd, x_prev[lay[("p", sd.id)]], x_prev[lay[("s0", sd.id)]])
            storage[sd.id] = (acc, acc_prev)
            res_p[sd.id] = (acc[0] - acc_prev[0]) / dt
            res_s[sd.id] = (acc[1] - acc_prev[1]) / dt
            if sd.id in self._stencil:
                flux = self.scheme.fluxes(self._stencil[sd.id], fields[sd.id], self.gravity)
                div = self._incidence[sd.id]
                res_p[sd.id] = res_p[sd.id] + sd.codim_extension * ad.project(div, flux.total)
                res_s[sd.id] = res_s[sd.id] + sd.codim_extension * ad.project(div, flux.phase0)
                cat = self.category(sd.id)
                for label, up in flux.choices.items():
                    choices[(cat, sd.id, label)] = up

        inflows: Dict[int, list] = {sd.id: [] for sd in self.domain.subdomains}
        res_z = {}
        for m in self.domain.mortars:
            hi, lo = fields[m.higher], fields[m.lower]
            mass = []
            for phase in (0, 1):
                zeta = var[(f"z{phase}", m.id)]
                mass.append(
                    mortar_mass_flux(m, zeta, (hi.rho[phase], hi.lam[phase]), (lo.rho[phase], lo.lam[phase]))
                )
                rho_z = interface_upwind(m, zeta, hi.rho[phase], lo.rho[phase])
                res_z[(f"z{phase}", m.id)] = mortar_residual(m, zeta, hi.p, lo.p, rho_z, self.gravity)
                choices[("mortar", m.id, f"z{phase}")] = ad.value(zeta) >= 0
            total = mass[0] + mass[1]
            res_p[m.higher] = res_p[m.higher] + higher_side_cell_outflow(m, total)
            res_s[m.higher] = res_s[m.higher] + higher_side_cell_outflow(m, mass[0])
            inflows[m.lower].append((lower_side_inflow(m, total), lower_side_inflow(m, mass[0])))

        for sd in self.domain.subdomains:
            psi = coupling_sources(sd.grid.num_cells, inflows[sd.id], self.withdrawal.get(sd.id))
            if sd.dim == 0:
                # eps^a is already part of the stored mass
                res_p[sd.id], res_s[sd.id] = zero_d_balance(1.0, *storage[sd.id], dt, psi)
            else:
                res_p[sd.id] = res_p[sd.id] - psi[0]
                res_s[sd.id] = res_s[sd.id] - psi[1]

        parts = []
        for key, _ in lay.blocks:
            kind, ident = key
            if kind == "p":
                parts.append(res_p[ident])
            elif kind == "s0":
                parts.append(res_s[ident])
            else:
                parts.append(res_z[key])
        residual = ad.concatenate(parts)
        if self.anchor is not None:
            k = self.anchor
            residual.val[k] = x[k] - x_prev[k]
            row = sps.csr_matrix(([1.0], ([0], [k])), shape=(1, n))
            residual.jac = sps.vstack([residual.jac[:k], row, residual.jac[k + 1 :]], format="csr")
        bad = ~np.isfinite(residual.val)
        if np.any(bad):
            raise AssemblyError(f"non-finite residual in {self.describe(np.flatnonzero(bad)[0])}")
        return Evaluation(residual, choices)

    def describe(self, index: int) -> str:
        for (kind, ident), sl in self.layout.offsets.items():
            if sl.start <= index < sl.stop:
                owner = "mortar" if kind.startswith("z") else "subdomain"
                what = "cell" if owner == "subdomain" else "mortar cell"
                return f"{owner} {ident} ({kind} equation, {what} {index - sl.start})"
        return f"row {index}"


def count_flips(prev: Optional[dict], cur: dict) -> Counter:
    """Faces (or mortar cells) whose upwind side changed, per category."""
    flips = Counter()
    if prev is None:
        return flips
    for key, choice in cur.items():
        flips[key[0]] += int(np.count_nonzero(prev[key] != choice))
    return flips


@dataclass
class NewtonResult:
    converged: bool
    x: np.ndarray
    iterations: int
    error: float
    flips: Counter = field(default_factory=Counter)
    clip_events: int = 0
    reason: str = ""


def newton_solve(
    assembler: Assembler,
    x0: np.ndarray,
    x_prev: np.ndarray,
    dt: float,
    tol: float = 1e-6,
    max_iter: int = 15,
) -> NewtonResult:
    """Newton iteration for one time step.

    Convergence is declared when ``||dx||_2 / sqrt(len(dx)) < tol``; the error is
    measured on the raw update, before saturations are clipped to [0, 1].
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = x0.copy()
    sat = assembler.layout.saturation_index()
    flips = Counter()
    clips = 0
    prev_choices = None
    err = np.inf
    for it in range(1, max_iter + 1):
        try:
            ev = assembler.evaluate(x, x_prev, dt)
        except (AssemblyError, ValueError) as exc:
            return NewtonResult(False, x, it, err, flips, clips, f"assembly failed: {exc}")
        flips.update(count_flips(prev_choices, ev.choices))
        prev_choices = ev.choices
        try:
            dx = spla.splu(ev.residual.jac.tocsc()).solve(-ev.residual.val)
        except RuntimeError as exc:
            return NewtonResult(False, x, it, err, flips, clips, f"linear solve failed: {exc}")
        if not np.all(np.isfinite(dx)):
            return NewtonResult(False, x, it, err, flips, clips, "non-finite update")
        x = x + dx
        s = x[sat]
        outside = (s < 0) | (s > 1)
        if np.any(outside):
            clips += int(np.count_nonzero(outside))
            x[sat] = np.clip(s, 0.0, 1.0)
        err = float(np.linalg.norm(dx) / np.sqrt(dx.size))
        logger.debug("newton it %d err %.3e", it, err)
        if err < tol:
            return NewtonResult(True, x, it, err, flips, clips)
    return NewtonResult(False, x, max_iter, err, flips, clips, "maximum iterations reached")


@dataclass
class TimeController:
    """Step-size control: halve on failure, return to ``dt_max`` after success."""

    dt_max: float
    t_end: float
    t: float = 0.0
    dt_min: float = DT_MIN
    dt: float = None

    def __post_init__(self):
        if not (self.dt_max > 0 and self.t_end >= self.t):
            raise ValueError("need dt_max > 0 and t_end >= t")
        self.dt = self.dt_max if self.dt is None else self.dt

    @property
    def done(self) -> bool:
        return self.t_end - self.t <= 1e-12 * max(1.0, abs(self.t_end))

    def proposal(self) -> float:
        remaining = self.t_end - self.t
        dt = min(self.dt, remaining)
        # avoid leaving a sliver at the end
        if remaining - dt < 1e-9 * self.dt_max:
            dt = remaining
        return dt

    def cut(self) -> bool:
        """Halve the step; False once it drops below ``dt_min``."""
        self.dt = 0.5 * self.proposal()
        return self.dt >= self.dt_min

    def accept(self, dt: float) -> None:
        self.t += dt
        self.dt = self.dt_max


def advance(
    assembler: Assembler,
    controller: TimeController,
    x0: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 15,
    report: Optional[RunReport] = None,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
) -> Tuple[List[Tuple[float, np.ndarray]], RunReport]:
    """March from ``controller.t`` to ``controller.t_end``.

    Returns:
        Accepted ``(t, x)`` pairs (starting with the initial state) and the report.
        ``report.status`` is ``"completed"`` or ``"dt_underflow"``.
    """
    report = report or RunReport(scheme=assembler.scheme.name)
    report.initial_mass = assembler.masses(x0)
    states = [(controller.t, x0.copy())]
    x = x0.copy()
    while not controller.done:
        wasted_iters, cuts, wasted_flips = 0, 0, Counter()
        while True:
            dt = controller.proposal()
            result = newton_solve(assembler, x, x, dt, tol, max_iter)
            if result.converged:
                break
            wasted_iters += result.iterations
            wasted_flips.update(result.flips)
            cuts += 1
            logger.info("t=%.6g dt=%.3e: %s; halving", controller.t, dt, result.reason)
            if not controller.cut():
                report.unaccepted_iters += wasted_iters
                report.unaccepted_cuts += cuts
                report.unaccepted_flips.update(wasted_flips)
                report.status = "dt_underflow"
                report.message = f"time step below {controller.dt_min:g} at t={controller.t:.12g}"
                logger.warning(report.message)
                return states, report
        controller.accept(dt)
        x = result.x
        m0, m1 = assembler.masses(x)
        report.steps.append(
            StepRecord(
                t=controller.t,
                dt=dt,
                newton_iters=result.iterations + wasted_iters,
                wasted_iters=wasted_iters,
                cuts=cuts,
                flips=dict(result.flips),
                wasted_flips=dict(wasted_flips),
                mass_phase0=m0,
                mass_phase1=m1,
                clip_events=result.clip_events,
            )
        )
        states.append((controller.t, x.copy()))
        if on_step is not None:
            on_step(controller.t, x)
        logger.debug("accepted t=%.6g dt=%.3e iters=%d", controller.t, dt, result.iterations)
    report.status = "completed"
    return states, report
