"""
Initial data generators and the mollified approximation family.

Gridded generators return cleaned `SpectralField`s: Hermitian, mean-free,
band-limited and divergence-free. The H^{1/2} counterexample does not fit on a
grid (its support runs through every dyadic annulus), so it is evaluated by
radial quadrature on the continuum instead.
"""

from __future__ import annotations

import logging
import math
from functools import cached_property
from typing import Any, Callable, Literal, Self

import numpy as np
import scipy.integrate
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .norms import x_norm
from .spectral import Grid, SpectralField, leray_project, transform_forward

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-13

Generator = Callable[..., SpectralField]

GENERATORS: dict[str, Generator] = {}


def generator(name: str) -> Callable[[Generator], Generator]:
    """Registers a gridded data generator so configs can address it by name."""

    def decorator(func: Generator) -> Generator:
        if name in GENERATORS:
            raise ValueError(f"generator {name!r} is already registered")

        GENERATORS[name] = func
        return func

    return decorator


def make_data(name: str, grid: Grid, **params: Any) -> SpectralField:
    try:
        func = GENERATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown generator {name!r}, expected one of {sorted(GENERATORS)}"
        )

    return func(grid=grid, **params)


# ----------------------------------------------------------------------------
# Gridded generators
# ----------------------------------------------------------------------------


@generator("zero")
def zero_field(grid: Grid) -> SpectralField:
    return SpectralField.zeros(grid)


@generator("chemin_gallagher")
def chemin_gallagher(m: int, amplitude: float, grid: Grid) -> SpectralField:
    """
    Oscillating field m cos(m x3) (d2 phi, -d1 phi, 0) with stream function
    phi = amplitude cos(x1) cos(x2), i.e. epsilon = 1/m.

    For L = 2 pi its norms are X^{-1} = sqrt(2) a m / sqrt(2 + m^2),
    X^0 = sqrt(2) a m and X^1 = sqrt(2) a m sqrt(2 + m^2), so X^{-1} stays
    bounded as m grows while X^1 blows up.

    Raises:
        ValueError: If m is not positive or the mode (1, 1, m) falls outside
            the dealiased band.
    """
    if m < 1:
        raise ValueError(f"oscillation frequency m must be positive, got {m}")

    if m > grid.band_limit:
        raise ValueError(
            f"m={m} does not survive dealiasing on n={grid.n} "
            f"(largest resolvable frequency is {grid.band_limit})"
        )

    kappa = grid.kappa
    x1, x2, x3 = grid.coordinates()
    osc = m * np.cos(m * kappa * x3)

    u = np.stack(
        [
            -osc * amplitude * kappa * np.cos(kappa * x1) * np.sin(kappa * x2),
            osc * amplitude * kappa * np.sin(kappa * x1) * np.cos(kappa * x2),
            np.zeros(grid.shape),
        ]
    )

    return transform_forward(u, grid).clean()


def chemin_gallagher_norms(m: int, amplitude: float) -> dict[float, float]:
    """Closed-form X^s norms (s = -1, 0, 1) of `chemin_gallagher` on L = 2 pi."""
    x0 = math.sqrt(2) * abs(amplitude) * m
    radius = math.sqrt(2 + m * m)
    return {-1.0: x0 / radius, 0.0: x0, 1.0: x0 * radius}


@generator("shear_flow")
def shear_flow(axis_dir: int, vary_dir: int, amplitude: float, grid: Grid) -> SpectralField:
    """
    amplitude * cos(kappa x_vary) e_axis, with axes numbered 0, 1, 2.

    The flow only varies across its own direction, so v . grad v vanishes and
    the Navier-Stokes evolution is pure heat decay.
    """
    for name, axis in (("axis_dir", axis_dir), ("vary_dir", vary_dir)):
        if axis not in (0, 1, 2):
            raise ValueError(f"{name} must be 0, 1 or 2, got {axis}")

    if axis_dir == vary_dir:
        raise ValueError("shear flow needs different axis_dir and vary_dir")

    v = SpectralField.zeros(grid)

    for sign in (1, -1):
        index = [0, 0, 0]
        index[vary_dir] = sign % grid.n
        v.coeffs[(axis_dir, *index)] = amplitude / 2

    return v


@generator("random_divfree")
def random_divfree(
    seed: int,
    spectrum_slope: float,
    k_max: int,
    target_x_minus1: float,
    grid: Grid,
) -> SpectralField:
    """
    Random divergence-free field with |v_hat(k)| ~ |k|^slope on 0 < |k| <= k_max,
    rescaled to the requested X^{-1} norm.

    The draw comes from a Philox counter-based generator keyed by the seed, so
    the same seed gives a bit-identical field on every platform.
    """
    if not 1 <= k_max <= grid.band_limit:
        raise ValueError(
            f"k_max={k_max} outside the dealiased band [1, {grid.band_limit}]"
        )

    if target_x_minus1 < 0:
        raise ValueError(f"target_x_minus1 must be >= 0, got {target_x_minus1}")

    rng = np.random.Generator(np.random.Philox(key=seed))
    shape = (3, *grid.shape)
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    radius = np.sqrt(np.sum(grid.integer_wavevectors.astype(np.float64) ** 2, axis=0))
    shell = (radius > 0) & (radius <= k_max)
    amplitude = np.power(radius, spectrum_slope, out=np.zeros_like(radius), where=shell)

    v = SpectralField(grid=grid, coeffs=noise * amplitude / math.sqrt(2)).clean()
    norm = x_norm(v, -1)

    if target_x_minus1 == 0 or norm == 0:
        return SpectralField.zeros(grid)

    logger.debug("random_divfree seed=%d raw X^-1=%.6g", seed, norm)
    return v * (target_x_minus1 / norm)


# ----------------------------------------------------------------------------
# Mollification
# ----------------------------------------------------------------------------


class MollifierSpec(BaseModel):
    """
    Fourier symbol zeta_hat of the mollifier and its scale lambda.

    Every shape satisfies zeta_hat(0) = 1 and |zeta_hat| <= 1, which is all the
    approximation argument uses.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    shape: Literal["gaussian", "poisson", "cutoff"] = "gaussian"
    lam: float = Field(alias="lambda", gt=0.0)

    def symbol(self, xi: np.ndarray) -> np.ndarray:
        """zeta_hat evaluated at the scaled magnitudes lambda * |xi|."""
        r = self.lam * np.asarray(xi, dtype=np.float64)

        match self.shape:
            case "gaussian":
                return np.exp(-0.5 * r**2)
            case "poisson":
                return np.exp(-r)
            case "cutoff":
                return (r <= 1.0).astype(np.float64)


def mollify(v0: SpectralField, spec: MollifierSpec) -> SpectralField:
    """v0^lambda with coefficients zeta_hat(lambda k) v0_hat(k)."""
    return v0.with_coeffs(spec.symbol(v0.grid.k_magnitude) * v0.coeffs)


# ----------------------------------------------------------------------------
# Continuum counterexample
# ----------------------------------------------------------------------------


class RadialProfile(BaseModel):
    """
    Smooth nonnegative radial density f(r) = amplitude exp(-1/((r-a)(b-r)))
    supported on the shell a < r < b.

    Attributes:
        inner, outer: Support radii a < b.
        amplitude: Positive prefactor.
        n_nodes: Size of the tabulated (nodes, values) representation.
    """

    model_config = ConfigDict(frozen=True)

    inner: float = Field(default=1.0, gt=0.0)
    outer: float = Field(default=2.0, gt=0.0)
    amplitude: float = Field(default=1.0, gt=0.0)
    n_nodes: int = Field(default=2049, ge=3)

    @model_validator(mode="after")
    def _ordered(self) -> Self:
        if self.inner >= self.outer:
            raise ValueError(
                f"profile support ({self.inner}, {self.outer}) is empty"
            )
        return self

    def density(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        inside = (r > self.inner) & (r < self.outer)
        gap = np.where(inside, (r - self.inner) * (self.outer - r), 1.0)
        return np.where(inside, self.amplitude * np.exp(-1.0 / gap), 0.0)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.inner, self.outer, self.n_nodes)

    @cached_property
    def values(self) -> np.ndarray:
        return self.density(self.nodes)

    def moment(self, radial_power: float, density_power: int = 1) -> float:
        """
        Integral of |xi|^radial_power f(|xi|)^density_power over R^3, i.e.
        4 pi * int r^(2 + radial_power) f(r)^density_power dr.
        """

        def integrand(r: float) -> float:
            return 4 * math.pi * r ** (2 + radial_power) * float(self.density(r)) ** density_power

        value, _ = scipy.integrate.quad(
            integrand, self.inner, self.outer, epsabs=0.0, epsrel=QUAD_TOL, limit=200
        )
        return value

    @cached_property
    def l1_mass(self) -> float:
        """||f||_{L^1(R^3)}."""
        return self.moment(0.0)

    def tabulated_mass(self) -> float:
        """Trapezoid quadrature of 4 pi r^2 f(r) over the stored nodes."""
        return float(
            scipy.integrate.trapezoid(4 * math.pi * self.nodes**2 * self.values, self.nodes)
        )


class CounterexamplePartial(BaseModel):
    """
    Partial sums over the first J dyadic shells of the counterexample
    g_hat = sum_j (2^{-2j}/j) f(2^{-j} xi).

    `x_minus1_partial` uses the shell identity |xi|^{-1} ~ 2^{-j}, which turns
    every shell into ||f||_{L^1}/j. `x_minus1_weighted` keeps the exact weight;
    both grow like the harmonic numbers while `h_half_partial` converges.
    """

    model_config = ConfigDict(frozen=True)

    J: int
    harmonic: float
    l1_mass: float
    x_minus1_partial: float
    x_minus1_weighted: float
    h_half_partial: float

    @property
    def identity_gap(self) -> float:
        return self.x_minus1_partial - self.l1_mass * self.harmonic


def harmonic_number(J: int, power: int = 1) -> float:
    return math.fsum(1.0 / j**power for j in range(1, J + 1))


def counterexample_partial(J: int, profile: RadialProfile | None = None) -> CounterexamplePartial:
    """
    Evaluates the first J shells of the counterexample by change of variables
    xi = 2^j zeta, which maps every shell back onto the profile support and
    avoids overflowing 2^j for large J.

    Raises:
        ValueError: If J < 1 or the profile leaves the unit shell (1, 2), where
            the shells would overlap.
    """
    profile = profile or RadialProfile()

    if J < 1:
        raise ValueError(f"J must be a positive integer, got {J}")

    if profile.inner < 1.0 or profile.outer > 2.0:
        raise ValueError(
            f"profile support ({profile.inner}, {profile.outer}) must lie in (1, 2)"
        )

    harmonic = harmonic_number(J)
    l1 = profile.l1_mass

    # disjoint shells: the H^{1/2} cross terms vanish
    h_half = math.sqrt(harmonic_number(J, power=2) * profile.moment(1.0, density_power=2))

    return CounterexamplePartial(
        J=J,
        harmonic=harmonic,
        l1_mass=l1,
        x_minus1_partial=l1 * harmonic,
        x_minus1_weighted=harmonic * profile.moment(-1.0),
        h_half_partial=h_half,
    )
