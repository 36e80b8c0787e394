"""
Discrete Fourier representation of periodic vector fields on [0, L)^3.

Coefficients follow the box-average Fourier-series convention

    v(x) = sum_k v_hat(k) exp(i 2 pi k.x / L),

so every norm in `critflow.norms` is a plain lattice sum. Arrays are kept in
FFT index order with shape (3, n, n, n); the integer wavevector of index i
along an axis is i for i < n/2 and i - n otherwise.

Derivative symbols use `Grid.deriv_wavevectors`, in which the Nyquist
component (k_i = -n/2) is zeroed so that every operator maps real fields to
real fields.
"""

from __future__ import annotations

import logging
from functools import cached_property
from typing import Literal, Self, Sequence

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .utils import thread_count

logger = logging.getLogger(__name__)

AXES = (-3, -2, -1)
STRUCTURE_TOL = 1e-12


class Grid(BaseModel):
    """
    Immutable spectral discretization of the periodic box.

    Attributes:
        n: Resolution per axis (even, at least 8).
        box_size: Physical period L. The default 2*pi makes physical and
            integer wavevectors coincide.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=8, description="Resolution per axis")
    box_size: float = Field(default=2 * np.pi, gt=0.0, description="Period L")

    @field_validator("n")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2 != 0:
            raise ValueError(f"grid resolution must be even, got {v}")
        return v

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dx(self) -> float:
        return self.box_size / self.n

    @property
    def kappa(self) -> float:
        """Physical wavenumber of the integer mode 1."""
        return 2 * np.pi / self.box_size

    @property
    def band_limit(self) -> int:
        """Largest |k_i| kept by the 2/3 rule (|k_i| < n/3)."""
        return (self.n - 1) // 3

    @property
    def zero_mode(self) -> tuple[int, int, int]:
        return (0, 0, 0)

    @cached_property
    def integer_wavevectors(self) -> np.ndarray:
        """Integer triples k, shape (3, n, n, n), components in [-n/2, n/2)."""
        k1 = np.rint(np.fft.fftfreq(self.n, d=1.0 / self.n)).astype(np.int64)
        return np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Physical wavevectors 2*pi*k/L."""
        return self.kappa * self.integer_wavevectors.astype(np.float64)

    @cached_property
    def deriv_wavevectors(self) -> np.ndarray:
        """Physical wavevectors with the Nyquist component zeroed."""
        k = self.integer_wavevectors
        return np.where(k == -self.n // 2, 0.0, self.kappa * k.astype(np.float64))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavevectors**2, axis=0)

    @cached_property
    def k_magnitude(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def deriv_k_squared(self) -> np.ndarray:
        return np.sum(self.deriv_wavevectors**2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True iff |k_i| < n/3 on every axis."""
        return np.all(3 * np.abs(self.integer_wavevectors) < self.n, axis=0)

    @cached_property
    def nonzero_modes(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[self.zero_mode] = False
        return mask

    def coordinates(self) -> np.ndarray:
        """Physical grid points, shape (3, n, n, n)."""
        x1 = np.arange(self.n) * self.dx
        return np.stack(np.meshgrid(x1, x1, x1, indexing="ij"))

    def matches(self, other: Grid) -> bool:
        return self.n == other.n and self.box_size == other.box_size


def make_grid(n: int, box_size: float = 2 * np.pi) -> Grid:
    """
    Builds a grid, rejecting odd or too-small resolutions with a `ValueError`.
    """
    grid = Grid(n=n, box_size=box_size)
    logger.debug(
        "grid n=%d L=%.6g band_limit=%d", grid.n, grid.box_size, grid.band_limit
    )
    return grid


def reflect(a: np.ndarray) -> np.ndarray:
    """Maps the last three FFT axes by index i -> (-i) mod n, i.e. k -> -k."""
    flipped = a[..., ::-1, ::-1, ::-1]
    return np.roll(flipped, 1, axis=AXES)


class SpectralField(BaseModel):
    """
    A real vector field in Fourier representation.

    The coefficient array is owned by the field; operations return new fields.
    `solenoidal` records that the field was produced by a projection and is
    divergence-free to round-off.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    coeffs: np.ndarray
    solenoidal: bool = False

    @model_validator(mode="after")
    def _check_coeffs(self) -> Self:
        expected = (3, *self.grid.shape)

        if self.coeffs.shape != expected:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {expected}"
            )

        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        return self

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralField:
        return cls(
            grid=grid,
            coeffs=np.zeros((3, *grid.shape), dtype=np.complex128),
            solenoidal=True,
        )

    def copy(self) -> SpectralField:
        return SpectralField(
            grid=self.grid, coeffs=self.coeffs.copy(), solenoidal=self.solenoidal
        )

    def with_coeffs(self, coeffs: np.ndarray, solenoidal: bool | None = None) -> Self:
        return self.__class__(
            grid=self.grid,
            coeffs=coeffs,
            solenoidal=self.solenoidal if solenoidal is None else solenoidal,
        )

    def _same_grid(self, other: SpectralField) -> None:
        if not self.grid.matches(other.grid):
            raise ValueError("fields live on different grids")

    def __add__(self, other: SpectralField) -> SpectralField:
        self._same_grid(other)
        both = self.solenoidal and other.solenoidal
        return self.with_coeffs(self.coeffs + other.coeffs, solenoidal=both)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._same_grid(other)
        both = self.solenoidal and other.solenoidal
        return self.with_coeffs(self.coeffs - other.coeffs, solenoidal=both)

    def __mul__(self, scalar: complex) -> SpectralField:
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return self.with_coeffs(-self.coeffs)

    @property
    def magnitudes(self) -> np.ndarray:
        """Euclidean magnitude |v_hat(k)| of the coefficient 3-vector per mode."""
        return np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))

    def mean_magnitude(self) -> float:
        return float(np.linalg.norm(self.coeffs[(slice(None), *self.grid.zero_mode)]))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def hermitian_residual(self) -> float:
        """max |v_hat(-k) - conj v_hat(k)|, relative to the largest coefficient."""
        scale = float(np.max(np.abs(self.coeffs)))
        if scale == 0.0:
            return 0.0
        gap = np.abs(reflect(self.coeffs) - np.conj(self.coeffs))
        return float(np.max(gap)) / scale

    def divergence_residual(self) -> float:
        """max |k.v_hat(k)| relative to max |k||v_hat(k)|; zero for a zero field."""
        kd = self.grid.deriv_wavevectors
        scale = float(np.max(np.sqrt(self.grid.deriv_k_squared) * self.magnitudes))
        if scale == 0.0:
            return 0.0
        div = np.abs(np.sum(kd * self.coeffs, axis=0))
        return float(np.max(div)) / scale

    def symmetrize(self) -> SpectralField:
        """Projects onto real fields: v_hat(k) <- (v_hat(k) + conj v_hat(-k)) / 2."""
        sym = 0.5 * (self.coeffs + np.conj(reflect(self.coeffs)))
        return self.with_coeffs(sym)

    def truncate(self) -> SpectralField:
        """Zeroes every mode outside the 2/3-rule band."""
        return self.with_coeffs(self.coeffs * self.grid.dealias_mask)

    def without_mean(self) -> SpectralField:
        coeffs = self.coeffs.copy()
        coeffs[(slice(None), *self.grid.zero_mode)] = 0.0
        return self.with_coeffs(coeffs)

    def clean(self, project: bool = True) -> SpectralField:
        """
        Restores every structural invariant after round-off drift: band
        truncation, Hermitian symmetry, zero mean and (optionally) projection.
        """
        out = self.truncate().symmetrize().without_mean()
        return leray_project(out) if project else out


def transform_forward(
    physical: np.ndarray | Sequence[np.ndarray], grid: Grid
) -> SpectralField:
    """
    Real components (3, n, n, n) to box-average Fourier coefficients.
    """
    u = np.asarray(physical)

    if np.iscomplexobj(u):
        raise TypeError("transform_forward expects real-valued components")

    if u.shape != (3, *grid.shape):
        raise ValueError(
            f"physical array shape {u.shape} does not match grid {(3, *grid.shape)}"
        )

    coeffs = scipy.fft.fftn(u, axes=AXES, workers=thread_count()) / grid.n**3
    return SpectralField(grid=grid, coeffs=coeffs)


def transform_inverse(v: SpectralField) -> np.ndarray:
    """Fourier coefficients back to real components, shape (3, n, n, n)."""
    return to_physical(v.coeffs, v.grid)


def to_physical(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse transform of any stack of coefficient arrays over the last three axes."""
    out = scipy.fft.ifftn(coeffs, axes=AXES, workers=thread_count())
    return np.real(out) * grid.n**3


def to_spectral(physical: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward transform of any stack of real arrays over the last three axes."""
    return scipy.fft.fftn(physical, axes=AXES, workers=thread_count()) / grid.n**3


def leray_project(f: SpectralField) -> SpectralField:
    """
    Mode-wise orthogonal projection (I - k k^T / |k|^2) onto divergence-free
    fields; the zero mode is set to zero.
    """
    grid = f.grid
    kd = grid.deriv_wavevectors
    k2 = grid.deriv_k_squared

    kdotf = np.sum(kd * f.coeffs, axis=0)
    factor = np.divide(kdotf, k2, out=np.zeros_like(kdotf), where=k2 > 0)
    out = f.coeffs - kd * factor
    out[(slice(None), *grid.zero_mode)] = 0.0

    return f.with_coeffs(out, solenoidal=True)


def curl_hat(v: SpectralField) -> SpectralField:
    """Vorticity omega_hat(k) = i k x v_hat(k)."""
    kd = v.grid.deriv_wavevectors
    omega = 1j * np.cross(kd, v.coeffs, axis=0)
    return v.with_coeffs(omega, solenoidal=True)


def invert_curl(omega: SpectralField) -> SpectralField:
    """
    Velocity from vorticity, (-Delta)^{-1} curl omega. Recovers the
    divergence-free, mean-free part of any v with omega = curl v.
    """
    grid = omega.grid
    k2 = grid.deriv_k_squared
    curl = 1j * np.cross(grid.deriv_wavevectors, omega.coeffs, axis=0)
    v = np.divide(curl, k2, out=np.zeros_like(curl), where=k2 > 0)
    return omega.with_coeffs(v, solenoidal=True)


def gradient_physical(v: SpectralField) -> np.ndarray:
    """Velocity gradient d_m v_j on the physical grid, shape (3, 3, n, n, n)."""
    kd = v.grid.deriv_wavevectors
    grad_hat = 1j * kd[:, None] * v.coeffs[None, :]
    return to_physical(grad_hat, v.grid)


DIRECT_MAX_N = 16

BilinearMethod = Literal["pseudo_spectral", "direct_convolution"]


def bilinear(
    u: SpectralField, w: SpectralField, method: BilinearMethod = "pseudo_spectral"
) -> SpectralField:
    """
    Advective bilinear form in divergence form,

        B(u, w)_j(k) = i sum_eta [k . u_hat(eta)] w_hat_j(k - eta),

    restricted to the dealiased band. For divergence-free u this is the
    transform of (u . grad) w.

    `pseudo_spectral` forms the products u_m w_j on the physical grid. Inputs
    and output both sit inside |k_i| < n/3, so no alias of a product mode can
    land back in the band and the result equals the truncated convolution.
    `direct_convolution` evaluates the lattice sum term by term and serves as
    the oracle; it is refused above n = 16.
    """
    if not u.grid.matches(w.grid):
        raise ValueError("bilinear form needs both fields on the same grid")

    grid = u.grid
    u, w = u.truncate(), w.truncate()

    match method:
        case "pseudo_spectral":
            products = to_spectral(
                to_physical(u.coeffs, grid)[:, None] * to_physical(w.coeffs, grid)[None, :],
                grid,
            )
            out = 1j * np.einsum("m...,mj...->j...", grid.deriv_wavevectors, products)
        case "direct_convolution":
            out = _direct_convolution(u.coeffs, w.coeffs, grid)
        case _:
            raise ValueError(f"unknown bilinear method {method!r}")

    return SpectralField(grid=grid, coeffs=out * grid.dealias_mask)


def _direct_convolution(u: np.ndarray, w: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.n > DIRECT_MAX_N:
        raise ValueError(
            f"direct convolution is limited to n <= {DIRECT_MAX_N}, got n={grid.n}"
        )

    K = grid.band_limit
    size = 2 * K + 1

    u_c = to_centered(u, grid, K)
    # w on the doubled cube [-2K, 2K]^3 so every k - eta is addressable
    w_pad = np.zeros((3, 4 * K + 1, 4 * K + 1, 4 * K + 1), dtype=np.complex128)
    w_pad[:, K : K + size, K : K + size, K : K + size] = to_centered(w, grid, K)

    conv = np.zeros((3, 3, size, size, size), dtype=np.complex128)

    for a, b, c in np.argwhere(np.any(u_c != 0, axis=0)):
        # output index i holds k = i - K, so k - eta sits at i + K - eta
        s = (2 * K - a, 2 * K - b, 2 * K - c)
        shifted = w_pad[:, s[0] : s[0] + size, s[1] : s[1] + size, s[2] : s[2] + size]
        conv += u_c[:, a, b, c][:, None, None, None, None] * shifted[None]

    k1 = grid.kappa * np.arange(-K, K + 1, dtype=np.float64)
    k = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))
    out = 1j * np.einsum("m...,mj...->j...", k, conv)

    return from_centered(out, grid)


def centered_indices(grid: Grid, half_width: int) -> np.ndarray:
    """FFT indices of k = -K..K along one axis."""
    return np.arange(-half_width, half_width + 1) % grid.n


def to_centered(coeffs: np.ndarray, grid: Grid, half_width: int | None = None) -> np.ndarray:
    """
    Re-indexes the last three axes onto the centred cube [-K, K]^3
    (default K = grid.band_limit).
    """
    K = grid.band_limit if half_width is None else half_width
    idx = centered_indices(grid, K)
    return coeffs[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]]


def from_centered(centered: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of `to_centered`; modes outside the cube are zero."""
    K = (centered.shape[-1] - 1) // 2

    if 2 * K + 1 > grid.n:
        raise ValueError(f"centred cube of half width {K} does not fit grid n={grid.n}")

    out = np.zeros(centered.shape[:-3] + grid.shape, dtype=centered.dtype)
    idx = centered_indices(grid, K)
    out[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = centered
    return out
