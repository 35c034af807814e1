import numpy as np
import pytest

from conftest import make_field, make_system

from qlandscape import backend
from qlandscape.field import ControlField, TimeGrid, field_distance
from qlandscape.optimizer import (
    ClimbRecord,
    ClimbSettings,
    Iterate,
    Outcome,
    climb,
    descend_to_floor,
    effort_from_record,
    flow_derivative,
    rk4_step,
)


def quick_settings(**kw):
    base = dict(target_p=0.999, count_from_p=0.001, discard_above_p=0.01)
    base.update(kw)
    return ClimbSettings(**base)


class TestFlowDerivative:
    def test_zero_field_is_stationary(self, rotor5):
        grid = TimeGrid(28.0, 128)
        zero = ControlField(grid, np.zeros(128))
        np.testing.assert_array_equal(flow_derivative(zero, rotor5), 0.0)

    def test_directional_derivative_equals_slope_squared(self, rotor5):
        fld = make_field(rotor5, n_t=256, seed=12)
        g = flow_derivative(fld, rotor5)
        dt = fld.grid.dt
        slope_sq = float(np.sum(g * g) * dt)

        def p_of(eps):
            p, _ = backend.evolve_p(
                rotor5.energies, rotor5.dipole, eps, dt, rotor5.i_index, rotor5.f_index
            )
            return p

        h = 1e-6 / max(np.max(np.abs(g)), 1.0)
        fd = (p_of(fld.samples + h * g) - p_of(fld.samples - h * g)) / (2 * h)
        assert fd == pytest.approx(slope_sq, rel=1e-3)
        assert slope_sq >= 0.0


class TestRk4Step:
    def test_consistency_order(self, rotor5):
        fld = make_field(rotor5, n_t=256, seed=12)
        g = flow_derivative(fld, rotor5)

        def defect(ds):
            stepped, _ = rk4_step(fld, rotor5, ds)
            return float(
                np.linalg.norm(stepped.samples - fld.samples - ds * g)
            )

        d1, d2 = defect(0.02), defect(0.01)
        # remainder after the Euler part is O(ds^2)
        assert d1 / d2 == pytest.approx(4.0, rel=0.3)

    def test_small_step_ascends(self, rotor5):
        fld = make_field(rotor5, n_t=256, seed=12)
        p0, _ = backend.evolve_p(
            rotor5.energies, rotor5.dipole, fld.samples, fld.grid.dt,
            rotor5.i_index, rotor5.f_index,
        )
        _, p1 = rk4_step(fld, rotor5, 1e-3)
        assert p1 > p0

    def test_rejects_nonpositive_step(self, rotor5, small_field):
        with pytest.raises(ValueError):
            rk4_step(small_field, rotor5, 0.0)

    def test_deterministic(self, rotor5):
        fld = make_field(rotor5, n_t=256, seed=12)
        a, pa = rk4_step(fld, rotor5, 0.01)
        b, pb = rk4_step(fld, rotor5, 0.01)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert pa == pb


class TestClimb:
    def test_converges_small_system(self, rotor5):
        fld = make_field(rotor5, n_t=512, seed=14)
        rec = climb(rotor5, fld, quick_settings())
        assert rec.outcome == Outcome.CONVERGED
        assert rec.final_p >= 0.999
        ps = [it.p for it in rec.iterates]
        assert all(b >= a - 1e-12 for a, b in zip(ps[:-1], ps[1:]))
        assert rec.effort == effort_from_record(rec, 0.001)
        assert rec.iterates[-1].slope < max(it.slope for it in rec.iterates)

    def test_deterministic_records(self, rotor5):
        fld = make_field(rotor5, n_t=512, seed=14)
        a = climb(rotor5, fld, quick_settings())
        b = climb(rotor5, fld, quick_settings())
        assert a.iterates == b.iterates
        assert a.final_field.samples.tobytes() == b.final_field.samples.tobytes()

    def test_already_converged_start(self, rotor5):
        fld = make_field(rotor5, n_t=512, seed=14)
        rec = climb(rotor5, fld, quick_settings())
        again = climb(rotor5, rec.final_field, quick_settings())
        assert again.outcome == Outcome.CONVERGED
        assert len(again.iterates) == 1
        assert again.effort == 1

    def test_zero_field_start_traps(self, rotor5):
        grid = TimeGrid(28.0, 128)
        zero = ControlField(grid, np.zeros(128))
        rec = climb(rotor5, zero, quick_settings(max_refinements=1))
        assert rec.outcome == Outcome.TRAPPED
        assert rec.final_p == 0.0
        assert rec.refinements_used == 1  # refinement cannot rescue a critical point

    def test_milestone_tracking(self, rotor5):
        fld = make_field(rotor5, n_t=512, seed=14)
        rec = climb(rotor5, fld, quick_settings(track_milestones=True))
        assert rec.milestones, "expected milestone samples"
        ms = [m.milestone for m in rec.milestones]
        assert ms == sorted(ms)
        assert rec.first_counted_field is not None
        assert rec.near_top_field is not None
        for m in rec.milestones:
            assert m.p >= m.milestone

    def test_effort_counts_from_threshold(self):
        grid = TimeGrid(28.0, 8)
        f = ControlField(grid, np.zeros(8))
        rec = ClimbRecord(
            iterates=[
                Iterate(0.0, 1e-5, 0.1, 0.0, 0.0),
                Iterate(0.1, 5e-4, 0.2, 0.1, 0.5),
                Iterate(0.2, 2e-3, 0.3, 0.1, 0.5),
                Iterate(0.3, 0.5, 0.4, 0.1, 0.5),
            ],
            initial_field=f,
            final_field=f,
            effort=0,
            outcome=Outcome.CONVERGED,
            refinements_used=0,
        )
        assert effort_from_record(rec, 0.001) == 2
        assert effort_from_record(rec, 0.9) == 0


class TestDescend:
    def test_reaches_floor(self, rotor5):
        fld = make_field(rotor5, n_t=512, seed=14)
        bottom = descend_to_floor(rotor5, fld, floor_p=1e-12)
        p, _ = backend.evolve_p(
            rotor5.energies, rotor5.dipole, bottom.samples, bottom.grid.dt,
            rotor5.i_index, rotor5.f_index,
        )
        assert p <= 1e-12


@pytest.mark.slow
class TestTrapFreedomSmall:
    def test_twenty_seeds_converge_n8(self):
        # weakly coupled ladder: every climb tops out without refinement
        settings = quick_settings()
        for seed in range(20):
            system = make_system(8, "rotor", "dropoff", seed=200 + seed, drop_off=0.5)
            fld = None
            for attempt in range(200):
                cand = make_field(system, n_t=2048, seed=3000 * seed + attempt)
                p0, _ = backend.evolve_p(
                    system.energies, system.dipole, cand.samples, cand.grid.dt,
                    system.i_index, system.f_index,
                )
                if p0 < settings.discard_above_p:
                    fld = cand
                    break
            rec = climb(system, fld, settings)
            assert rec.outcome == Outcome.CONVERGED, f"seed {seed} failed"
            assert rec.final_p >= 0.999


class TestRefinementRescue:
    def test_stall_refine_continue_state_machine(self, rotor5):
        # force a stall verdict every window: the climb must refine once,
        # keep climbing on the doubled grid, then report Trapped when the
        # refinement budget is spent
        fld = make_field(rotor5, n_t=256, seed=14)
        settings = quick_settings(
            stall_window=2, stall_delta=1.0, max_refinements=1
        )
        rec = climb(rotor5, fld, settings)
        assert rec.outcome == Outcome.TRAPPED
        assert rec.refinements_used == 1
        assert rec.refine_points, "refinement event not recorded"
        assert rec.final_field.grid.n_points == 512
        # iterates continue past the refinement boundary on the finer grid
        assert len(rec.iterates) > rec.refine_points[0]
        # P is monotone within each grid segment
        bounds = [0, *rec.refine_points, len(rec.iterates)]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            ps = [it.p for it in rec.iterates[lo:hi]]
            assert all(b >= a - 1e-12 for a, b in zip(ps[:-1], ps[1:]))

    def test_refined_iterations_counted_in_effort(self, rotor5):
        fld = make_field(rotor5, n_t=256, seed=14)
        settings = quick_settings(
            stall_window=2, stall_delta=1.0, max_refinements=2
        )
        rec = climb(rotor5, fld, settings)
        assert rec.refinements_used == 2
        # effort spans all grid segments
        counted = sum(1 for it in rec.iterates if it.p >= settings.count_from_p)
        assert rec.effort == counted
