"""Landscape climbing: adaptive fourth-order Runge-Kutta on the gradient flow.

The field evolves in an artificial index s via d(eps)/ds = grad P, so every
exact flow step cannot decrease P.  Steps are accepted when the step-doubling
error estimate on P (one full step against two half steps) stays within
tolerance and P does not decrease; the accepted state is the more accurate
half-step composite.  A stalled climb is rescued once per allowed refinement
by interpolating the field onto a grid twice as fine and continuing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dataclass_field
from typing import NamedTuple

import numpy as np

from . import backend
from .field import ControlField, field_distance, refine_grid
from .qsys import QuantumSystem

__all__ = [
    "ClimbSettings",
    "ClimbRecord",
    "Iterate",
    "MilestoneSample",
    "Outcome",
    "climb",
    "descend_to_floor",
    "effort_from_record",
    "flow_derivative",
    "rk4_step",
]

DEFAULT_MILESTONES = (0.001, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)

# An accepted step may lower P by at most this much (floating-point slack).
_MONOTONE_SLACK = 1e-12


class Outcome(enum.Enum):
    CONVERGED = "Converged"
    TRAPPED = "Trapped"
    ITERATION_CAP = "IterationCapHit"


class Iterate(NamedTuple):
    s: float
    p: float
    slope: float
    ds: float
    path_increment: float


class MilestoneSample(NamedTuple):
    milestone: float
    s: float
    p: float
    slope: float
    path_len: float
    euclid: float


@dataclass(frozen=True)
class ClimbSettings:
    """Knobs of the adaptive climber.

    ``initial_step`` of None scales the first step to 0.01 divided by the
    slope at the start field.  Effort counting begins at ``count_from_p``;
    callers enforce the discard rule (start fields with P >= discard_above_p
    are redrawn before climbing).
    """

    target_p: float = 0.999
    count_from_p: float = 0.001
    discard_above_p: float = 0.01
    initial_step: float | None = None
    step_tol: float = 1e-4
    max_iterations: int = 100_000
    stall_window: int = 50
    stall_delta: float = 1e-9
    max_refinements: int = 1
    # Absolute ceiling on the flow increment per accepted step.  Besides the
    # error test, this keeps one RK4 step from swallowing whole stretches of
    # the search trajectory, so the accepted-step count remains a meaningful
    # measure of how far the flow had to travel.
    step_max: float = 0.05
    track_milestones: bool = False
    milestones: tuple = DEFAULT_MILESTONES

    def __post_init__(self):
        if not 0.0 < self.count_from_p < self.discard_above_p < self.target_p <= 1.0:
            raise ValueError(
                "need 0 < count_from_p < discard_above_p < target_p <= 1, got "
                f"{self.count_from_p}, {self.discard_above_p}, {self.target_p}"
            )
        if self.step_tol <= 0 or self.max_iterations < 1 or self.stall_window < 2:
            raise ValueError("invalid step_tol / max_iterations / stall_window")
        if self.max_refinements < 0 or self.stall_delta < 0:
            raise ValueError("max_refinements and stall_delta must be nonnegative")


@dataclass
class ClimbRecord:
    """Per-iteration trace and outcome of one climb."""

    iterates: list
    initial_field: ControlField
    final_field: ControlField
    effort: int
    outcome: Outcome
    refinements_used: int
    refine_points: list = dataclass_field(default_factory=list)
    milestones: list = dataclass_field(default_factory=list)
    first_counted_field: ControlField | None = None
    near_top_field: ControlField | None = None

    @property
    def initial_p(self) -> float:
        return self.iterates[0].p

    @property
    def final_p(self) -> float:
        return self.iterates[-1].p

    @property
    def path_length(self) -> float:
        return float(sum(it.path_increment for it in self.iterates))


def effort_from_record(record: ClimbRecord, count_from_p: float = 0.001) -> int:
    """Number of accepted iterates (initial point included) with P >= threshold."""
    return sum(1 for it in record.iterates if it.p >= count_from_p)


class _Flow:
    """Raw-array view of one (system, field) climb with cheap kernel calls."""

    def __init__(self, system: QuantumSystem, fld: ControlField):
        self.system = system
        self.grid = fld.grid
        self.eps = np.asarray(fld.samples, dtype=np.float64)

    @property
    def dt(self) -> float:
        return self.grid.dt

    def grad(self, eps):
        _, _, g = backend.grad_p(
            self.system.energies, self.system.dipole, eps, self.dt,
            self.system.i_index, self.system.f_index,
        )
        return g

    def grad_p(self, eps):
        return backend.grad_p(
            self.system.energies, self.system.dipole, eps, self.dt,
            self.system.i_index, self.system.f_index,
        )

    def p_only(self, eps):
        p, _ = backend.evolve_p(
            self.system.energies, self.system.dipole, eps, self.dt,
            self.system.i_index, self.system.f_index,
        )
        return p

    def slope(self, g):
        return float(np.sqrt(np.sum(g * g) * self.dt))

    def distance(self, a, b):
        return float(np.sqrt(np.sum((a - b) ** 2) * self.dt))

    def rk4(self, eps, ds, k1, sign):
        k2 = self.grad(eps + sign * (0.5 * ds) * k1)
        k3 = self.grad(eps + sign * (0.5 * ds) * k2)
        k4 = self.grad(eps + sign * ds * k3)
        return eps + sign * (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def refine(self, factor=2):
        fld = refine_grid(ControlField(self.grid, self.eps), factor)
        self.grid = fld.grid
        self.eps = np.asarray(fld.samples, dtype=np.float64)

    def as_field(self) -> ControlField:
        return ControlField(self.grid, self.eps)


def flow_derivative(field: ControlField, system: QuantumSystem) -> np.ndarray:
    """Right-hand side of the climbing flow: the functional-density gradient."""
    return _Flow(system, field).grad(np.asarray(field.samples))


def rk4_step(field: ControlField, system: QuantumSystem, ds: float):
    """One classical RK4 update of the field over a flow increment ds.

    Returns the stepped field and its transfer probability.
    """
    if ds <= 0:
        raise ValueError(f"step size must be positive, got {ds}")
    flow = _Flow(system, field)
    eps = np.asarray(field.samples)
    new_eps = flow.rk4(eps, ds, flow.grad(eps), +1.0)
    return field.with_samples(new_eps), flow.p_only(new_eps)


def _attempt_step(flow: _Flow, eps, p, g, ds, tol, sign):
    """Full step vs two half steps; returns (accepted, state, err).

    state is (eps_new, p_new, g_new) from the half-step composite.
    """
    full = flow.rk4(eps, ds, g, sign)
    p_full = flow.p_only(full)
    mid = flow.rk4(eps, 0.5 * ds, g, sign)
    p_mid, _, g_mid = flow.grad_p(mid)
    half = flow.rk4(mid, 0.5 * ds, g_mid, sign)
    p_half, _, g_half = flow.grad_p(half)
    err = abs(p_full - p_half)
    monotone = (p_half >= p - _MONOTONE_SLACK) if sign > 0 else (p_half <= p + _MONOTONE_SLACK)
    return (err <= tol and monotone), (half, p_half, g_half), err


def climb(system: QuantumSystem, field0: ControlField, settings: ClimbSettings) -> ClimbRecord:
    """Integrate the climbing flow until the target, a stall, or the cap.

    The accepted-iterate P sequence is non-decreasing within each grid
    segment; a refinement re-evaluates P on the finer grid, which may shift
    it slightly, so segments are tracked via ``refine_points``.
    """
    flow = _Flow(system, field0)
    p, _, g = flow.grad_p(flow.eps)
    slope = flow.slope(g)

    record = ClimbRecord(
        iterates=[Iterate(0.0, p, slope, 0.0, 0.0)],
        initial_field=field0,
        final_field=field0,
        effort=0,
        outcome=Outcome.ITERATION_CAP,
        refinements_used=0,
    )
    milestones_left = list(settings.milestones) if settings.track_milestones else []
    initial_on_grid = flow.eps  # initial samples lifted to the current grid
    s = 0.0
    path_len = 0.0

    def note_progress():
        nonlocal milestones_left
        if settings.track_milestones:
            while milestones_left and p >= milestones_left[0]:
                m = milestones_left.pop(0)
                euclid = flow.distance(flow.eps, initial_on_grid)
                record.milestones.append(
                    MilestoneSample(m, s, p, slope, path_len, euclid)
                )
        if record.first_counted_field is None and p >= settings.count_from_p:
            record.first_counted_field = flow.as_field()
        if record.near_top_field is None and p >= 0.99:
            record.near_top_field = flow.as_field()

    note_progress()
    if p >= settings.target_p:
        record.outcome = Outcome.CONVERGED
        record.effort = effort_from_record(record, settings.count_from_p)
        return record

    if slope == 0.0 and settings.initial_step is None:
        # Stationary start (a critical point): nothing to scale the step to.
        ds = 0.0
    else:
        ds = settings.initial_step if settings.initial_step is not None else 0.01 / slope
        ds = min(ds, settings.step_max)
    ds_floor_scale = 1e-14

    accepted = 0
    consecutive = 0
    window_p = [p]

    while True:
        stalled = False
        if ds <= 0.0:
            stalled = True
        else:
            ok, state, _ = _attempt_step(
                flow, flow.eps, p, g, ds, settings.step_tol, +1.0
            )
            if ok:
                new_eps, p_new, g_new = state
                inc = flow.distance(new_eps, flow.eps)
                s += ds
                path_len += inc
                flow.eps = new_eps
                p, g = p_new, g_new
                slope = flow.slope(g)
                record.iterates.append(Iterate(s, p, slope, ds, inc))
                accepted += 1
                consecutive += 1
                if consecutive >= 5:
                    ds = min(1.5 * ds, settings.step_max)
                    consecutive = 0
                note_progress()
                window_p.append(p)
                if p >= settings.target_p:
                    record.outcome = Outcome.CONVERGED
                    break
                if accepted >= settings.max_iterations:
                    record.outcome = Outcome.ITERATION_CAP
                    break
                if len(window_p) > settings.stall_window:
                    window_p.pop(0)
                    if p - window_p[0] < settings.stall_delta:
                        stalled = True
            else:
                ds *= 0.5
                consecutive = 0
                if ds < ds_floor_scale * (settings.initial_step or 0.01 / max(slope, 1e-300)):
                    stalled = True

        if stalled:
            if record.refinements_used < settings.max_refinements:
                record.refinements_used += 1
                record.refine_points.append(len(record.iterates))
                old_grid = flow.grid
                flow.refine(2)
                initial_on_grid = refine_grid(
                    ControlField(old_grid, initial_on_grid), 2
                ).samples
                p, _, g = flow.grad_p(flow.eps)
                slope = flow.slope(g)
                window_p = [p]
                consecutive = 0
                ds = min(0.01 / slope, settings.step_max) if slope > 0 else 0.0
            else:
                record.outcome = Outcome.TRAPPED
                break

    record.final_field = flow.as_field()
    record.effort = effort_from_record(record, settings.count_from_p)
    return record


def descend_to_floor(
    system: QuantumSystem,
    field0: ControlField,
    floor_p: float = 1e-14,
    step_tol: float = 1e-4,
    max_iterations: int = 5000,
) -> ControlField:
    """Ride the flow downhill until P <= floor_p; used to prepare a point
    essentially on the bottom critical manifold for spectral analysis."""
    flow = _Flow(system, field0)
    p, _, g = flow.grad_p(flow.eps)
    slope = flow.slope(g)
    if slope == 0.0:
        return field0
    ds = 0.01 / slope
    it = 0
    best_stall = 0
    while p > floor_p and it < max_iterations:
        ok, state, _ = _attempt_step(flow, flow.eps, p, g, ds, step_tol, -1.0)
        it += 1
        if ok:
            new_eps, p_new, g_new = state
            improved = p_new < p
            flow.eps, p, g = new_eps, p_new, g_new
            ds = min(1.5 * ds, 1e6)
            best_stall = 0 if improved else best_stall + 1
            if best_stall > 50:
                break
        else:
            ds *= 0.5
            if ds < 1e-18:
                break
    return flow.as_field()
