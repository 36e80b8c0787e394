"""
Norm functionals over spectral fields.

The X^s family is the bare lattice sum

    ||v||_{X^s} = sum_{k != 0} |k|^s |v_hat(k)|,

with |k| the physical wavenumber 2*pi*|k_int|/L and |v_hat(k)| the Euclidean
magnitude of the coefficient 3-vector. Every sum goes through
`critflow.utils.lattice_sum`, so results do not depend on array layout or on
the FFT thread count.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .spectral import (
    STRUCTURE_TOL,
    Grid,
    SpectralField,
    curl_hat,
    from_centered,
    gradient_physical,
    to_centered,
    to_physical,
)
from .utils import lattice_sum

logger = logging.getLogger(__name__)

EMBEDDING_SLACK = 1e-10


def _require_mean_free(v: SpectralField, s: float):
    scale = float(np.max(np.abs(v.coeffs))) if v.coeffs.size else 0.0

    if v.mean_magnitude() > STRUCTURE_TOL * max(scale, 1.0):
        raise ValueError(
            f"field has a nonzero mean, so the weight |k|^{s} is undefined at k=0"
        )


def _weights(grid: Grid, power: float) -> np.ndarray:
    """|k|^power on nonzero modes, zero on the zero mode."""
    k = grid.k_magnitude
    return np.power(k, power, out=np.zeros_like(k), where=grid.nonzero_modes)


def x_norm(v: SpectralField, s: float) -> float:
    """
    Lattice X^s norm. Fields with a nonzero mean are rejected when s < 0.
    """
    if s < 0:
        _require_mean_free(v, s)

    return lattice_sum(_weights(v.grid, s) * v.magnitudes)


def hs_norm(v: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm (sum_{k != 0} |k|^{2s} |v_hat(k)|^2)^{1/2}."""
    if s < 0:
        _require_mean_free(v, s)

    return math.sqrt(lattice_sum(_weights(v.grid, 2 * s) * v.magnitudes**2))


def energy(v: SpectralField) -> float:
    """Box-averaged kinetic energy, 1/2 sum_k |v_hat(k)|^2."""
    return 0.5 * lattice_sum(np.abs(v.coeffs) ** 2)


def vorticity_x0(v: SpectralField) -> float:
    """X^0 norm of curl v, the lattice analogue of the integral of |omega_hat|."""
    return x_norm(curl_hat(v), 0.0)


def velocity_linf(v: SpectralField) -> float:
    """Grid maximum of the Euclidean velocity magnitude."""
    u = to_physical(v.coeffs, v.grid)
    return float(np.max(np.sqrt(np.sum(u**2, axis=0))))


def grad_linf(v: SpectralField) -> float:
    """
    Grid maximum of the Frobenius magnitude of the velocity gradient.

    Bounded above by `x_norm(v, 1)` because every Fourier term of d_m v_j has
    magnitude |k_m||v_hat_j(k)|.
    """
    grad = gradient_physical(v)
    return float(np.max(np.sqrt(np.sum(grad**2, axis=(0, 1)))))


def _riesz_hat(v: SpectralField) -> np.ndarray:
    grid = v.grid
    k2 = grid.k_squared
    inv = np.divide(-1.0, k2, out=np.zeros_like(k2), where=grid.nonzero_modes)
    return 1j * grid.deriv_wavevectors[:, None] * v.coeffs[None, :] * inv


def riesz_proxy_linf(v: SpectralField) -> float:
    """
    Grid maximum of |grad Delta^{-1} v|, the L-infinity proxy through which
    X^{-1} embeds into BMO^{-1}.

    Single-frequency fields saturate the bound `riesz_proxy_linf(v) <= x_norm(v, -1)`.

    Raises:
        ValueError: If `v` has a nonzero mean.
    """
    _require_mean_free(v, -1)
    field = to_physical(_riesz_hat(v), v.grid)
    return float(np.max(np.sqrt(np.sum(field**2, axis=(0, 1)))))


def lattice_constant(grid: Grid) -> float:
    """
    Cauchy-Schwarz constant C = (sum_{k != 0} |k|^{-4})^{1/2} of the grid, so
    that X^{-1} <= C * H^1 and X^1 <= C * H^3 for every field on it.
    """
    return math.sqrt(lattice_sum(_weights(grid, -4.0)))


def oversampled_linf(
    v: SpectralField,
    factor: int = 8,
    what: Literal["velocity", "gradient"] = "velocity",
) -> float:
    """
    Maximum of the band-limited interpolant on a grid refined `factor` times,
    obtained by zero padding. The Nyquist plane is dropped first since it has
    no real interpolant.
    """
    if factor < 1:
        raise ValueError(f"oversampling factor must be >= 1, got {factor}")

    grid = v.grid
    match what:
        case "velocity":
            coeffs = v.coeffs
        case "gradient":
            coeffs = 1j * grid.deriv_wavevectors[:, None] * v.coeffs[None, :]
        case _:
            raise ValueError(f"unknown oversampling target {what!r}")

    fine = Grid(n=factor * grid.n, box_size=grid.box_size)
    padded = from_centered(to_centered(coeffs, grid, grid.n // 2 - 1), fine)
    values = to_physical(padded, fine)

    axes = tuple(range(values.ndim - 3))
    return float(np.max(np.sqrt(np.sum(values**2, axis=axes))))


class NormReport(BaseModel):
    """
    Snapshot of every norm functional of one field.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x_minus1: float = Field(ge=0.0)
    x0: float = Field(ge=0.0)
    x1: float = Field(ge=0.0)
    hs: dict[float, float] = Field(default_factory=dict)
    grad_linf: float = Field(ge=0.0)
    riesz_linf: float = Field(ge=0.0)
    div_residual: float = Field(ge=0.0)

    def check_embeddings(self, slack: float = EMBEDDING_SLACK) -> list[str]:
        """
        Names of the embedding inequalities this report violates; empty when
        both hold.
        """
        violated = []

        if self.riesz_linf > self.x_minus1 + slack:
            violated.append("riesz_linf <= x_minus1")

        if self.grad_linf > self.x1 + slack:
            violated.append("grad_linf <= x1")

        return violated


def norm_report(v: SpectralField, hs: Iterable[float] = (1, 2, 3)) -> NormReport:
    report = NormReport(
        x_minus1=x_norm(v, -1),
        x0=x_norm(v, 0),
        x1=x_norm(v, 1),
        hs={float(s): hs_norm(v, s) for s in hs},
        grad_linf=grad_linf(v),
        riesz_linf=riesz_proxy_linf(v),
        div_residual=v.divergence_residual(),
    )

    if violated := report.check_embeddings():
        logger.warning("embedding inequalities violated: %s", ", ".join(violated))

    return report
