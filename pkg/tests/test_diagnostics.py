# tests/test_diagnostics.py
"""
Tests for critflow/diagnostics.py.

Focus areas:
- recorder accumulations against closed-form heat decay
- each monitor on a run where it must hold and on a series built to fail it
- bilinear chain and Young split
- continuation constants
- monitor dispatch
"""

import math

import numpy as np
import pytest

from critflow.data import random_divfree, shear_flow
from critflow.diagnostics import (
    MONITORS,
    DiagnosticsRecorder,
    DiagnosticsRow,
    MonitorSettings,
    RunContext,
    bilinear_chain,
    bkm_constants,
    bkm_monitor,
    cauchy_pair_monitor,
    difference_rows,
    dissipation_residual,
    energy_growth_monitor,
    run_monitors,
    theorem_monitor,
    time_derivative_budget,
    young_split_check,
)
from critflow.dynamics import StepperConfig, simulate
from critflow.spectral import make_grid


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def row(t: float, x_minus1: float, **fields) -> DiagnosticsRow:
    """A row with every unspecified functional set to a harmless value."""
    values = dict(
        x0=x_minus1, x1=1.0, int_x1=0.0, theorem_lhs=x_minus1, grad_linf=0.0,
        int_grad_linf=0.0, omega_x0=0.0, int_omega_x0=0.0, energy_l2=0.0, div_residual=0.0,
    )
    values.update(fields)
    return DiagnosticsRow(t=t, x_minus1=x_minus1, **values)


def shear_run(amplitude: float = 0.5, horizon: float = 1.0, dt: float = 0.01, n: int = 8):
    v0 = shear_flow(axis_dir=1, vary_dir=0, amplitude=amplitude, grid=make_grid(n))
    return simulate(v0, 1.0, horizon, StepperConfig(dt=dt), sample_every=1, keep_snapshots=True)


def random_run(size: float = 0.3, mu: float = 1.0, seed: int = 0):
    grid = make_grid(8)
    v0 = random_divfree(seed=seed, spectrum_slope=-1.0, k_max=2, target_x_minus1=size, grid=grid)
    return simulate(v0, mu, 0.5, StepperConfig(dt=0.05), sample_every=1, keep_snapshots=True)


@pytest.fixture(scope="module")
def shear_traj():
    return shear_run()


@pytest.fixture(scope="module")
def random_traj():
    return random_run()


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


class TestRecorder:
    def test_theorem_lhs_of_heat_decay(self, shear_traj):
        """X^-1 = X^1 = e^-t / 2, so the left-hand side is 1/4 + e^-t / 4."""
        for r in shear_traj.rows:
            assert r.x_minus1 == pytest.approx(0.5 * math.exp(-r.t), rel=1e-12)
            assert r.theorem_lhs == pytest.approx(0.25 + 0.25 * math.exp(-r.t), rel=2e-5)

    def test_integrals_accumulate(self, shear_traj):
        last = shear_traj.rows[-1]

        assert last.int_x1 == pytest.approx(0.5 * (1 - math.exp(-1.0)), rel=2e-5)
        assert last.int_grad_linf == pytest.approx(0.5 * (1 - math.exp(-1.0)), rel=2e-5)
        assert last.int_omega_x0 == pytest.approx(last.int_x1, rel=1e-12)

    def test_first_row_starts_the_integrals(self, shear_traj):
        first = shear_traj.rows[0]

        assert (first.int_x1, first.int_grad_linf, first.int_omega_x0) == (0.0, 0.0, 0.0)
        assert first.theorem_lhs == first.x_minus1

    def test_history_seeds_the_initial_norm(self, shear_traj):
        recorder = DiagnosticsRecorder(
            1.0, history=shear_traj.rows[:3], start=shear_traj.snapshots[2]
        )

        assert recorder.x_minus1_initial == shear_traj.rows[0].x_minus1
        new = recorder.record(shear_traj.snapshots[3])

        assert new == shear_traj.rows[3].model_copy(
            update={"dtv_x_minus1": None, "advection_x_minus1": None, "pressure_x_minus1": None}
        )

    def test_history_without_start_is_bridged(self, shear_traj, caplog):
        recorder = DiagnosticsRecorder(1.0, history=shear_traj.rows[:3])

        with caplog.at_level("WARNING", logger="critflow.diagnostics"):
            new = recorder.record(shear_traj.snapshots[5])

        assert "bridging to step 5" in caplog.text
        assert new.int_x1 == pytest.approx(shear_traj.rows[5].int_x1, rel=1e-12)

    def test_accumulate_is_idempotent(self, shear_traj):
        recorder = DiagnosticsRecorder(1.0)
        recorder.accumulate(shear_traj.snapshots[0])
        recorder.accumulate(shear_traj.snapshots[1])
        once = recorder.integrals

        recorder.accumulate(shear_traj.snapshots[1])
        assert recorder.integrals == once

    def test_sparse_samples_keep_exact_integrals(self):
        """Every step is integrated, so thinning the rows changes nothing."""
        v0 = shear_flow(axis_dir=1, vary_dir=0, amplitude=0.5, grid=make_grid(8))
        traj = simulate(v0, 1.0, 1.0, StepperConfig(dt=0.25), sample_every=4)

        assert [r.step for r in traj.rows] == [0, 4]
        assert traj.rows[-1].int_x1 == pytest.approx(0.5 * (1 - math.exp(-1.0)), rel=1e-12)
        assert traj.rows[-1].int_grad_linf == pytest.approx(0.5 * (1 - math.exp(-1.0)), rel=1e-12)

    def test_stiff_decay_is_not_overestimated(self):
        """A trapezoid over the single sample interval would overestimate this fivefold."""
        v0 = shear_flow(axis_dir=1, vary_dir=0, amplitude=0.5, grid=make_grid(8))
        traj = simulate(v0, 10.0, 1.0, StepperConfig(dt=0.25), sample_every=4)
        last = traj.rows[-1]

        assert last.int_x1 == pytest.approx(0.05 * (1 - math.exp(-10.0)), rel=1e-12)
        assert last.theorem_lhs == pytest.approx(
            0.5 * math.exp(-10.0) + 9.5 * 0.05 * (1 - math.exp(-10.0)), rel=1e-12
        )
        assert theorem_monitor(traj.rows, mu=10.0).holds

    def test_record_round_trip(self):
        r = row(0.5, 0.2, hk={1: 0.3, 3: 0.7}, dtv_x_minus1=0.1)
        record = r.to_record()

        assert record["hk1"] == 0.3 and record["hk3"] == 0.7
        assert "hk" not in record

        record["pressure_x_minus1"] = ""
        assert DiagnosticsRow.from_record(record) == r

    def test_difference_rows(self, shear_traj):
        other = shear_run(amplitude=0.4)
        diffs = difference_rows(shear_traj.snapshots, other.snapshots)

        assert diffs[0].x_minus1 == pytest.approx(0.1, rel=1e-12)
        assert diffs[-1].x1 == pytest.approx(0.1 * math.exp(-1.0), rel=1e-12)
        assert diffs[0].int_x1 == 0.0
        assert diffs[-1].int_x1 == pytest.approx(0.1 * (1 - math.exp(-1.0)), rel=1e-12)

    def test_difference_rows_need_matching_runs(self, shear_traj):
        with pytest.raises(ValueError, match="snapshots"):
            difference_rows(shear_traj.snapshots, shear_traj.snapshots[:-1])


# ---------------------------------------------------------------------------
# Static checks
# ---------------------------------------------------------------------------


class TestStaticChecks:
    def test_young_split(self):
        assert young_split_check(2.0, 2.0) == 0.0
        assert young_split_check(1.0, 4.0) == pytest.approx(9 / 8)

        a = np.geomspace(1e-6, 1e6, 101)
        assert np.all(young_split_check(a, a[::-1]) >= 0)

    def test_young_split_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="strictly positive"):
            young_split_check(0.0, 1.0)

    @pytest.mark.parametrize("n", [8, 16])
    def test_bilinear_chain_holds(self, n):
        grid = make_grid(n)
        k_max = grid.band_limit
        u = random_divfree(seed=1, spectrum_slope=-1.0, k_max=k_max, target_x_minus1=1.0, grid=grid)
        w = random_divfree(seed=2, spectrum_slope=0.0, k_max=k_max, target_x_minus1=1.0, grid=grid)

        chain = bilinear_chain(u, w)

        assert chain.holds
        assert chain.weighted <= chain.product <= chain.split <= chain.bound

    def test_bilinear_chain_methods_agree(self):
        grid = make_grid(8)
        u = random_divfree(seed=3, spectrum_slope=-1.0, k_max=2, target_x_minus1=1.0, grid=grid)

        direct = bilinear_chain(u, u)
        fast = bilinear_chain(u, u, "pseudo_spectral")

        assert fast.weighted == pytest.approx(direct.weighted, rel=1e-12)


# ---------------------------------------------------------------------------
# Series monitors
# ---------------------------------------------------------------------------


class TestTheoremMonitor:
    def test_holds_on_heat_decay(self, shear_traj):
        verdict = theorem_monitor(shear_traj.rows, mu=1.0)

        assert verdict.holds and verdict.applicable
        assert verdict.details["sup_lhs"] == pytest.approx(0.5)
        assert verdict.details["grad_budget"] == pytest.approx(1.0)

    def test_holds_on_random_data(self, random_traj):
        assert theorem_monitor(random_traj.rows, mu=1.0).holds

    def test_fails_on_growing_norm(self):
        series = [row(0.0, 0.5), row(1.0, 0.6)]
        verdict = theorem_monitor(series, mu=1.0)

        assert not verdict.holds
        assert verdict.worst_margin == pytest.approx((0.505 - 0.6) / 0.5)
        assert verdict.worst_t == 1.0
        assert verdict.details["worst_by_check"]["monotone"] < 0

    def test_supercritical_data_is_not_applicable(self):
        verdict = theorem_monitor([row(0.0, 1.5)], mu=1.0)

        assert not verdict.applicable
        assert not verdict.holds
        assert verdict.worst_margin is None

    def test_explicit_initial_norm(self):
        series = [row(0.0, 0.5), row(1.0, 0.5)]
        assert not theorem_monitor(series, mu=1.0, x_minus1_initial=1.0).applicable


class TestDissipation:
    def test_holds_on_runs(self, shear_traj, random_traj):
        assert dissipation_residual(shear_traj.rows, 1.0, dt_step=0.01).holds
        assert dissipation_residual(random_traj.rows, 1.0, dt_step=0.05).holds

    def test_fails_on_fast_growth(self):
        series = [row(0.0, 0.1, x1=0.1), row(0.1, 0.3, x1=0.1), row(0.2, 0.5, x1=0.1)]
        verdict = dissipation_residual(series, mu=1.0)

        assert not verdict.holds
        assert verdict.worst_t == 0.1
        assert verdict.details["samples_checked"] == 1

    def test_needs_three_samples(self):
        with pytest.raises(ValueError, match="at least 3 samples"):
            dissipation_residual([row(0.0, 0.1), row(0.1, 0.1)], mu=1.0)

    def test_tolerance_grows_with_sampling_interval(self):
        series = [row(0.0, 0.1), row(0.5, 0.1), row(1.0, 0.1)]
        loose = dissipation_residual(series, 1.0, MonitorSettings(c_sample=10.0))
        tight = dissipation_residual(series, 1.0, MonitorSettings(c_sample=0.0))

        assert loose.tolerances["tol_dyn_max"] > tight.tolerances["tol_dyn_max"] == 0.0

    def test_derivative_exact_for_quadratics_on_uneven_samples(self):
        """X^-1 = 0.2 + t^2, so the margin is 0.2 + t^2 - 2t - 1 at each interior sample."""
        series = [row(t, 0.2 + t**2) for t in (0.0, 0.1, 0.3, 0.6, 1.0)]
        verdict = dissipation_residual(series, 1.0, MonitorSettings(c_sample=0.0))

        assert verdict.worst_margin == pytest.approx(0.56 - 2.2, rel=1e-12)
        assert verdict.worst_t == 0.6
        assert verdict.details["samples_checked"] == 3


class TestCauchyPair:
    def test_holds_for_heat_decay(self, shear_traj):
        other = shear_run(amplitude=0.4)
        diffs = difference_rows(shear_traj.snapshots, other.snapshots)

        verdict = cauchy_pair_monitor(shear_traj.rows, other.rows, diffs, 1.0, data_gap=0.1)

        assert verdict.holds
        assert verdict.details["bound_factor"] == pytest.approx(math.e)
        assert verdict.details["observed_factor"] == pytest.approx(1.0, rel=1e-12)
        assert verdict.details["prerequisites_hold"] == [True, True]
        assert verdict.details["int_x1_difference"] == pytest.approx(
            0.1 * (1 - math.exp(-1.0)), rel=1e-12
        )

    def test_fails_when_gap_is_understated(self, shear_traj):
        other = shear_run(amplitude=0.4)
        diffs = difference_rows(shear_traj.snapshots, other.snapshots)

        verdict = cauchy_pair_monitor(shear_traj.rows, other.rows, diffs, 1.0, data_gap=0.01)
        assert not verdict.holds

    def test_mismatched_lengths(self):
        a = [row(0.0, 1.2)]
        b = [row(0.0, 1.1)]
        diffs = difference_rows([], [])

        with pytest.raises(ValueError, match="same number of samples"):
            cauchy_pair_monitor(a, b, diffs, 1.0, data_gap=0.1)

    def test_not_applicable_above_viscosity(self, shear_traj):
        other = shear_run(amplitude=0.4)
        diffs = difference_rows(shear_traj.snapshots, other.snapshots)

        verdict = cauchy_pair_monitor(shear_traj.rows, other.rows, diffs, 0.5, data_gap=0.1)
        assert not verdict.applicable

    def test_rejects_negative_gap(self, shear_traj):
        diffs = difference_rows(shear_traj.snapshots, shear_traj.snapshots)

        with pytest.raises(ValueError, match="data_gap"):
            cauchy_pair_monitor(shear_traj.rows, shear_traj.rows, diffs, 1.0, data_gap=-1.0)


class TestTimeDerivativeBudget:
    def test_holds_on_random_data(self, random_traj):
        verdict = time_derivative_budget(random_traj.rows, mu=1.0)

        assert verdict.holds
        assert verdict.details["int_dtv"] <= verdict.details["budget"] * 1.05

    def test_needs_rhs_norms(self):
        with pytest.raises(ValueError, match="RHS norms"):
            time_derivative_budget([row(0.0, 0.1)], mu=1.0)

    def test_fails_on_oversized_derivative(self):
        series = [
            row(0.0, 0.1, int_x1=0.0, dtv_x_minus1=5.0, advection_x_minus1=0.0, pressure_x_minus1=0.0),
            row(1.0, 0.1, int_x1=1.0, dtv_x_minus1=5.0, advection_x_minus1=0.0, pressure_x_minus1=0.0),
        ]
        assert not time_derivative_budget(series, mu=1.0).holds


class TestBkm:
    def test_holds_on_random_data(self, random_traj):
        assert bkm_monitor(random_traj.rows, mu=1.0).holds

    def test_holds_on_large_data(self):
        traj = random_run(size=1.5, mu=0.2, seed=4)
        assert bkm_monitor(traj.rows, mu=0.2).holds

    def test_fails_on_unexplained_growth(self):
        series = [row(0.0, 0.1, x0=0.1), row(1.0, 1.0, x0=0.1, int_omega_x0=0.1)]
        assert not bkm_monitor(series, mu=1.0).holds

    def test_constants_inside_band(self):
        series = [row(0.0, 0.5, x0=0.5)]
        constants = bkm_constants(1.0, series, mu=1.0, x0_initial=0.5, grid_n=32, samples=2000)

        assert constants.eps == pytest.approx(0.5)
        assert constants.M == 16
        assert constants.within_band
        assert constants.verified
        assert constants.violations == 0

    def test_constants_beyond_band(self):
        series = [row(0.0, 0.5, x0=0.5)]
        constants = bkm_constants(1.0, series, mu=1.0, x0_initial=0.5, grid_n=16, samples=2000)

        assert not constants.within_band
        assert constants.checked == 0
        assert constants.band_radius == pytest.approx(5 * math.sqrt(3))

    def test_constants_shrink_with_vorticity_budget(self):
        calm = bkm_constants(1.0, [row(0.0, 0.5, x0=0.5)], 1.0, 0.5, grid_n=32, samples=10)
        busy = bkm_constants(
            1.0, [row(0.0, 0.5, x0=0.5, int_omega_x0=1.0)], 1.0, 0.5, grid_n=32, samples=10
        )

        assert busy.eps == pytest.approx(calm.eps * math.exp(-2.0))
        assert busy.M >= calm.M

    def test_zero_data_is_vacuous(self):
        constants = bkm_constants(1.0, [row(0.0, 0.0, x0=0.0)], 1.0, 0.0, grid_n=32)

        assert constants.eps is None and constants.M is None
        assert constants.verified

    def test_rejects_nonpositive_regularity(self):
        with pytest.raises(ValueError, match="must be positive"):
            bkm_constants(0.0, [row(0.0, 0.1)], 1.0, 0.1, grid_n=32)


class TestEnergyGrowth:
    def test_holds_on_decay(self, shear_traj):
        verdict = energy_growth_monitor(shear_traj.rows, k=2)

        assert verdict.holds
        assert verdict.details["sup_rate"] < 0

    def test_fails_past_cap(self):
        series = [
            row(0.0, 0.1, hk={2: 1.0}),
            row(1.0, 0.1, hk={2: math.e**2}, int_grad_linf=0.1),
        ]
        verdict = energy_growth_monitor(series, k=2, settings=MonitorSettings(c_cap=10.0))

        assert not verdict.holds
        assert verdict.details["sup_rate"] == pytest.approx(20.0)

    def test_missing_order(self, shear_traj):
        with pytest.raises(ValueError, match="H\\^7"):
            energy_growth_monitor(shear_traj.rows, k=7)

    def test_zero_data_is_vacuous(self):
        verdict = energy_growth_monitor([row(0.0, 0.0, hk={2: 0.0})], k=2)

        assert verdict.holds
        assert verdict.details["vacuous"]


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


class TestDispatch:
    def test_registry(self):
        assert set(MONITORS) == {
            "dissipation", "theorem", "time_derivative", "bkm", "bkm_constants", "energy_growth",
        }

    def test_run_monitors_in_order(self, random_traj):
        ctx = RunContext(mu=1.0, dt_step=0.05, grid_n=8)
        settings = MonitorSettings(bkm_samples=100)

        verdicts = run_monitors(["theorem", "bkm_constants", "dissipation"], random_traj.rows, ctx, settings)

        assert [v.name for v in verdicts] == ["theorem", "bkm_constants", "dissipation"]
        assert verdicts[1].details["s"] == 1.0

    def test_short_series_is_not_applicable(self, random_traj):
        ctx = RunContext(mu=1.0, dt_step=0.05, grid_n=8)

        verdicts = run_monitors(["dissipation", "theorem"], random_traj.rows[:2], ctx)

        assert not verdicts[0].applicable and not verdicts[0].holds
        assert "at least 3 samples" in verdicts[0].details["error"]
        assert verdicts[1].applicable and verdicts[1].holds

    def test_unknown_monitor(self, random_traj):
        ctx = RunContext(mu=1.0, grid_n=8)

        with pytest.raises(ValueError, match="unknown monitor 'navier'"):
            run_monitors(["navier"], random_traj.rows, ctx)

    def test_settings_reject_unknown_keys(self):
        with pytest.raises(ValueError):
            MonitorSettings(tol_abs=0.1)

