# tests/test_data.py
"""
Tests for critflow/data.py.

Focus areas:
- generator registry and structural invariants of gridded data
- oscillating data: X^{-1} bounded while X^1 grows
- seeded random fields are reproducible
- mollifier symbols
- the continuum H^{1/2} counterexample
"""

import math

import numpy as np
import pytest

from critflow.data import (
    GENERATORS,
    CounterexamplePartial,
    MollifierSpec,
    RadialProfile,
    chemin_gallagher,
    chemin_gallagher_norms,
    counterexample_partial,
    generator,
    harmonic_number,
    make_data,
    mollify,
    random_divfree,
    shear_flow,
)
from critflow.norms import x_norm
from critflow.spectral import SpectralField, make_grid


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def assert_structured(v: SpectralField):
    """Hermitian, mean-free, band-limited and divergence-free."""
    assert v.hermitian_residual() < 1e-12
    assert v.mean_magnitude() == 0
    assert v.divergence_residual() < 1e-12
    assert np.all(v.coeffs[:, ~v.grid.dealias_mask] == 0)


def random_params(**overrides):
    params = dict(seed=7, spectrum_slope=-2.0, k_max=4, target_x_minus1=0.25)
    params.update(overrides)
    return params


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


class TestRegistry:
    def test_known_generators(self):
        assert {"zero", "chemin_gallagher", "shear_flow", "random_divfree"} <= set(GENERATORS)

    def test_make_data_dispatches_by_name(self):
        grid = make_grid(8)
        v = make_data("shear_flow", grid, axis_dir=1, vary_dir=0, amplitude=0.5)

        assert x_norm(v, -1) == pytest.approx(0.5)

    def test_unknown_generator(self):
        with pytest.raises(ValueError, match="unknown generator 'vortex_ring'"):
            make_data("vortex_ring", make_grid(8))

    def test_duplicate_registration_rejected(self):
        with pytest.raises(ValueError, match="already registered"):
            generator("zero")(lambda grid: SpectralField.zeros(grid))

    def test_zero_generator(self):
        assert make_data("zero", make_grid(8)).is_zero()


# ---------------------------------------------------------------------------
# Oscillating data
# ---------------------------------------------------------------------------


class TestCheminGallagher:
    def test_structure(self):
        assert_structured(chemin_gallagher(m=3, amplitude=0.2, grid=make_grid(16)))

    def test_closed_form_norms(self):
        """The lattice norms agree with the closed forms to round-off."""
        v = chemin_gallagher(m=4, amplitude=0.2, grid=make_grid(16))

        assert x_norm(v, -1) == pytest.approx(math.sqrt(2) * 0.2 * 4 / math.sqrt(18), rel=1e-12)
        assert x_norm(v, 0) == pytest.approx(math.sqrt(2) * 0.2 * 4, rel=1e-12)
        assert x_norm(v, 1) == pytest.approx(math.sqrt(2) * 0.2 * 4 * math.sqrt(18), rel=1e-12)

    def test_critical_norm_stays_bounded(self):
        """X^-1 approaches sqrt(2) a from below while X^1 grows like m^2."""
        norms = [chemin_gallagher_norms(m, 1.0) for m in (1, 2, 4, 8, 16, 32)]

        x_minus1 = [n[-1.0] for n in norms]
        x1 = [n[1.0] for n in norms]

        assert all(a < b for a, b in zip(x_minus1, x_minus1[1:]))
        assert max(x_minus1) < math.sqrt(2)
        assert x1[-1] / x1[0] > 32**2 / 2

    def test_rejects_unresolved_frequency(self):
        with pytest.raises(ValueError, match="does not survive dealiasing"):
            chemin_gallagher(m=6, amplitude=1.0, grid=make_grid(16))

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValueError, match="must be positive"):
            chemin_gallagher(m=0, amplitude=1.0, grid=make_grid(16))


# ---------------------------------------------------------------------------
# Shear flow
# ---------------------------------------------------------------------------


class TestShearFlow:
    def test_coefficients(self):
        grid = make_grid(8)
        v = shear_flow(axis_dir=0, vary_dir=2, amplitude=0.5, grid=grid)

        assert v.coeffs[0, 0, 0, 1] == 0.25
        assert v.coeffs[0, 0, 0, -1] == 0.25
        assert np.count_nonzero(v.coeffs) == 2
        assert_structured(v)

    @pytest.mark.parametrize(
        "axis_dir, vary_dir, message",
        [(1, 1, "different axis_dir"), (3, 0, "axis_dir must be"), (0, -1, "vary_dir must be")],
    )
    def test_rejects_bad_directions(self, axis_dir, vary_dir, message):
        with pytest.raises(ValueError, match=message):
            shear_flow(axis_dir=axis_dir, vary_dir=vary_dir, amplitude=1.0, grid=make_grid(8))


# ---------------------------------------------------------------------------
# Random data
# ---------------------------------------------------------------------------


class TestRandomDivfree:
    def test_same_seed_is_bit_identical(self):
        grid = make_grid(16)
        a = random_divfree(grid=grid, **random_params())
        b = random_divfree(grid=grid, **random_params())

        assert np.array_equal(a.coeffs, b.coeffs)

    def test_different_seeds_differ(self):
        grid = make_grid(16)
        a = random_divfree(grid=grid, **random_params(seed=1))
        b = random_divfree(grid=grid, **random_params(seed=2))

        assert not np.array_equal(a.coeffs, b.coeffs)

    def test_target_norm_and_structure(self):
        v = random_divfree(grid=make_grid(16), **random_params(target_x_minus1=0.4))

        assert x_norm(v, -1) == pytest.approx(0.4, rel=1e-12)
        assert_structured(v)

    def test_support_inside_shell(self):
        grid = make_grid(16)
        v = random_divfree(grid=grid, **random_params(k_max=3))

        radius = np.sqrt(np.sum(grid.integer_wavevectors.astype(float) ** 2, axis=0))
        assert np.all(v.magnitudes[radius > 3] == 0)

    def test_zero_target_gives_zero_field(self):
        v = random_divfree(grid=make_grid(16), **random_params(target_x_minus1=0.0))
        assert v.is_zero()

    @pytest.mark.parametrize("k_max", [0, 6])
    def test_rejects_shell_outside_band(self, k_max):
        with pytest.raises(ValueError, match="outside the dealiased band"):
            random_divfree(grid=make_grid(16), **random_params(k_max=k_max))

    def test_rejects_negative_target(self):
        with pytest.raises(ValueError, match="target_x_minus1"):
            random_divfree(grid=make_grid(16), **random_params(target_x_minus1=-1.0))


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------


class TestMollifier:
    @pytest.mark.parametrize("shape", ["gaussian", "poisson", "cutoff"])
    def test_symbol_is_normalised_and_bounded(self, shape):
        spec = MollifierSpec(shape=shape, lam=0.5)
        xi = np.linspace(0.0, 40.0, 401)
        values = spec.symbol(xi)

        assert values[0] == 1.0
        assert np.all((0 <= values) & (values <= 1))

    def test_lambda_alias(self):
        spec = MollifierSpec.model_validate({"shape": "poisson", "lambda": 0.25})
        assert spec.lam == 0.25

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            MollifierSpec(lam=0.0)

    def test_mollified_data_is_dominated(self):
        v0 = random_divfree(grid=make_grid(16), **random_params())
        v = mollify(v0, MollifierSpec(lam=0.5))

        assert np.all(v.magnitudes <= v0.magnitudes)
        assert x_norm(v, -1) < x_norm(v0, -1)
        assert_structured(v)

    def test_small_scale_approaches_data(self):
        v0 = random_divfree(grid=make_grid(16), **random_params())

        gaps = [x_norm(v0 - mollify(v0, MollifierSpec(lam=lam)), -1) for lam in (0.4, 0.2, 0.1, 0.05)]

        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.05 * x_norm(v0, -1)

    def test_cutoff_removes_high_modes(self):
        grid = make_grid(16)
        v = mollify(random_divfree(grid=grid, **random_params()), MollifierSpec(shape="cutoff", lam=0.5))

        assert np.all(v.magnitudes[grid.k_magnitude > 2] == 0)


# ---------------------------------------------------------------------------
# Counterexample
# ---------------------------------------------------------------------------


class TestRadialProfile:
    def test_rejects_empty_support(self):
        with pytest.raises(ValueError, match="is empty"):
            RadialProfile(inner=1.5, outer=1.5)

    def test_density_vanishes_off_support(self):
        profile = RadialProfile()
        r = np.array([0.5, 1.0, 1.5, 2.0, 3.0])
        values = profile.density(r)

        assert values[0] == values[1] == values[3] == values[4] == 0.0
        assert values[2] == pytest.approx(math.exp(-4.0))

    def test_tabulated_mass_matches_quadrature(self):
        profile = RadialProfile()
        assert profile.tabulated_mass() == pytest.approx(profile.l1_mass, rel=1e-8)

    def test_amplitude_scales_moments(self):
        one = RadialProfile()
        three = RadialProfile(amplitude=3.0)

        assert three.l1_mass == pytest.approx(3 * one.l1_mass, rel=1e-12)
        assert three.moment(1.0, density_power=2) == pytest.approx(9 * one.moment(1.0, density_power=2), rel=1e-12)


class TestCounterexample:
    def test_harmonic_numbers(self):
        assert harmonic_number(4) == pytest.approx(25 / 12)
        assert harmonic_number(3, power=2) == pytest.approx(1 + 1 / 4 + 1 / 9)

    def test_identity_is_exact(self):
        row = counterexample_partial(8)

        assert isinstance(row, CounterexamplePartial)
        assert row.identity_gap == 0.0
        assert row.harmonic == pytest.approx(harmonic_number(8))

    def test_critical_norm_diverges_logarithmically(self):
        rows = [counterexample_partial(J) for J in (1, 2, 4, 8, 16, 32)]
        l1 = rows[0].l1_mass

        x = [r.x_minus1_partial for r in rows]
        increments = [b - a for a, b in zip(x, x[1:])]

        assert all(a < b for a, b in zip(x, x[1:]))
        # H_{2J} - H_J tends to ln 2
        assert increments[-1] == pytest.approx(l1 * math.log(2), rel=0.03)

    def test_h_half_converges(self):
        rows = [counterexample_partial(J) for J in (1, 4, 16, 64)]
        h = [r.h_half_partial for r in rows]

        assert all(a < b for a, b in zip(h, h[1:]))
        assert h[-1] < h[0] * math.sqrt(math.pi**2 / 6)

    def test_weighted_value_sits_between_shell_bounds(self):
        """On 1 < r < 2 the exact weight lies between 1/2 and 1."""
        row = counterexample_partial(10)

        assert row.x_minus1_partial / 2 < row.x_minus1_weighted < row.x_minus1_partial

    def test_rejects_bad_truncation(self):
        with pytest.raises(ValueError, match="positive integer"):
            counterexample_partial(0)

    def test_rejects_profile_outside_unit_shell(self):
        with pytest.raises(ValueError, match=r"must lie in \(1, 2\)"):
            counterexample_partial(4, RadialProfile(inner=0.5, outer=2.0))
