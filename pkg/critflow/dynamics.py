"""
Navier-Stokes evolution in Fourier variables,

    d/dt v_hat + B(v, v) + i k p_hat + mu |k|^2 v_hat = 0,

with B the advective bilinear form and p the pressure. Eliminating the
pressure by the Leray projection P gives d/dt v_hat = N(v) - mu |k|^2 v_hat
with N(v) = -P B(v, v). The linear part is integrated exactly by an
integrating factor and the rest with classical RK4.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .diagnostics import DiagnosticsRecorder, DiagnosticsRow
from .norms import velocity_linf
from .spectral import (
    BilinearMethod,
    Grid,
    SpectralField,
    bilinear,
    leray_project,
    to_physical,
    to_spectral,
)
from .state import SolverState
from .utils import tee

logger = logging.getLogger(__name__)

VELOCITY_FLOOR = 1e-8
STEP_ROUNDING = 1e-9


class NumericalBreakdown(RuntimeError):
    """
    Raised when a step produces non-finite coefficients.

    Attributes:
        last_state: The last state whose coefficients were all finite.
        step: Index of the step that broke down.
        trajectory: Partial trajectory up to `last_state`, when raised from
            `simulate`.
    """

    def __init__(self, message: str, last_state: SolverState, step: int):
        super().__init__(message)
        self.last_state = last_state
        self.step = step
        self.trajectory: Trajectory | None = None


class StepperConfig(BaseModel):
    """
    Time-stepping options.

    Attributes:
        dt: Fixed step or "auto" for the smaller of the advective CFL step
            cfl_safety * dx / max|v| and the viscous step
            viscous_safety / (mu * max |k|^2) over the dealiased band.
        cfl_safety: Safety factor of the advective CFL condition.
        viscous_safety: Largest mu |k|^2 dt an auto step may take on a
            resolved mode.
        scheme: Time integrator; integrating-factor RK4 is the only one.
    """

    model_config = ConfigDict(extra="forbid")

    dt: float | Literal["auto"] = "auto"
    cfl_safety: float = Field(default=0.5, gt=0.0, le=1.0)
    viscous_safety: float = Field(default=2.0, gt=0.0)
    scheme: Literal["ifrk4"] = "ifrk4"

    @field_validator("dt")
    @classmethod
    def _positive(cls, v: float | str) -> float | str:
        if v != "auto" and v <= 0:
            raise ValueError(f"dt must be positive or 'auto', got {v}")
        return v


# ----------------------------------------------------------------------------
# Right-hand side
# ----------------------------------------------------------------------------


def nonlinear_term(v: SpectralField, method: BilinearMethod = "pseudo_spectral") -> SpectralField:
    """N(v) = -P B(v, v); divergence-free and band-limited."""
    return leray_project(-bilinear(v, v, method))


def pressure_hat(v: SpectralField) -> np.ndarray:
    """
    Pressure coefficients p_hat(k) = -k_j k_m (v_j v_m)^(k) / |k|^2, zero at
    k = 0 and outside the dealiased band.

    With this sign B(v, v) + i k p_hat equals the projected P B(v, v).
    """
    grid = v.grid
    u = to_physical(v.truncate().coeffs, grid)
    stress = to_spectral(u[:, None] * u[None, :], grid)

    kd = grid.deriv_wavevectors
    k2 = grid.deriv_k_squared
    contraction = np.einsum("j...,m...,jm...->...", kd, kd, stress)

    p = np.divide(-contraction, k2, out=np.zeros_like(contraction), where=k2 > 0)
    return p * grid.dealias_mask


class RhsParts(BaseModel):
    """
    The three terms of d/dt v_hat: advection -B(v, v), pressure gradient
    -i k p_hat and viscous damping -mu |k|^2 v_hat.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    advection: SpectralField
    pressure: SpectralField
    viscous: SpectralField

    @property
    def total(self) -> SpectralField:
        return self.advection + self.pressure + self.viscous


def viscous_term(v: SpectralField, mu: float) -> SpectralField:
    return v.with_coeffs(-mu * v.grid.k_squared * v.coeffs)


def rhs_parts(v: SpectralField, mu: float) -> RhsParts:
    b = bilinear(v, v)
    gradient = b - leray_project(b)

    return RhsParts(
        advection=-b,
        pressure=gradient,
        viscous=viscous_term(v, mu),
    )


def rhs(v: SpectralField, mu: float) -> SpectralField:
    """d/dt v_hat = N(v) - mu |k|^2 v_hat."""
    return nonlinear_term(v) + viscous_term(v, mu)


# ----------------------------------------------------------------------------
# Time stepping
# ----------------------------------------------------------------------------


def cfl_dt(v: SpectralField, cfl_safety: float) -> float:
    """Advective step cfl_safety * dx / max(|v|_inf, 1e-8)."""
    return cfl_safety * v.grid.dx / max(velocity_linf(v), VELOCITY_FLOOR)


def viscous_dt(grid: Grid, mu: float, viscous_safety: float) -> float:
    """Step at which the stiffest dealiased mode has mu |k|^2 dt = viscous_safety."""
    k2_max = float(np.max(grid.k_squared[grid.dealias_mask]))
    return viscous_safety / (mu * k2_max) if k2_max > 0 else math.inf


def auto_dt(v: SpectralField, cfg: StepperConfig, mu: float | None = None) -> float:
    """The automatic step; without `mu` only the CFL condition applies."""
    dt = cfl_dt(v, cfg.cfl_safety)

    if mu is not None:
        dt = min(dt, viscous_dt(v.grid, mu, cfg.viscous_safety))

    return dt


def resolve_dt(
    v: SpectralField, cfg: StepperConfig, interval: float, mu: float | None = None
) -> tuple[float, int]:
    """
    Uniform step covering `interval` exactly: returns (interval / n, n) with n
    the fewest steps no longer than the requested (or automatic) step.
    """
    if interval <= 0:
        raise ValueError(f"time interval must be positive, got {interval}")

    dt = auto_dt(v, cfg, mu) if cfg.dt == "auto" else float(cfg.dt)
    n_steps = max(1, math.ceil(interval / dt - STEP_ROUNDING))

    return interval / n_steps, n_steps


def step(state: SolverState, cfg: StepperConfig, dt: float | None = None) -> SolverState:
    """
    One integrating-factor RK4 step. The viscous factor exp(-mu |k|^2 dt) is
    applied exactly, so the step has no viscous stability limit.

    Raises:
        NumericalBreakdown: If the new coefficients are not all finite.
    """
    v = state.v
    grid = v.grid

    if dt is None:
        dt = auto_dt(v, cfg, state.mu) if cfg.dt == "auto" else float(cfg.dt)

    decay = np.exp(-state.mu * grid.k_squared * dt)
    half = np.exp(-0.5 * state.mu * grid.k_squared * dt)

    def N(c: np.ndarray) -> np.ndarray:
        return nonlinear_term(v.with_coeffs(c)).coeffs

    c0 = v.coeffs
    a = N(c0)
    b = N(half * (c0 + 0.5 * dt * a))
    c = N(half * c0 + 0.5 * dt * b)
    d = N(decay * c0 + dt * half * c)

    new = decay * c0 + dt / 6 * (decay * a + 2 * half * (b + c) + d)

    if not np.all(np.isfinite(new)):
        logger.error("non-finite coefficients at step %d (t=%.6g)", state.step_count + 1, state.t)
        raise NumericalBreakdown(
            f"numerical breakdown at step {state.step_count + 1}, t={state.t + dt:.6g}",
            last_state=state,
            step=state.step_count + 1,
        )

    return state.advance(v.with_coeffs(new).clean(), state.t + dt)


class Trajectory(BaseModel):
    """
    Output of `simulate`.

    `snapshots` holds the sampled states when requested; `final` is always the
    last state reached.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: list[DiagnosticsRow] = Field(default_factory=list)
    snapshots: list[SolverState] = Field(default_factory=list)
    final: SolverState
    dt: float
    n_steps: int


def simulate(
    v0: SpectralField,
    mu: float,
    horizon: float,
    cfg: StepperConfig | None = None,
    sample_every: int = 1,
    *,
    on_sample: Callable[[SolverState, DiagnosticsRow], None] | None = None,
    on_step: Callable[[SolverState], None] | None = None,
    keep_snapshots: bool = False,
    record_rhs: bool = True,
    resume: SolverState | None = None,
    history: list[DiagnosticsRow] | None = None,
) -> Trajectory:
    """
    Integrates from `v0` at t = 0 (or from `resume`) to `horizon`.

    Samples are taken at the start, every `sample_every` steps and at the
    final step. With a fixed dt, time is step_count * dt_eff with dt_eff the
    uniformized step, so a run resumed from a checkpoint reproduces the
    uninterrupted one bit for bit; `history` seeds the series with the rows
    recorded before the checkpoint.

    The time integrals of the series advance at every step, not only at
    samples, so `sample_every` thins the rows without coarsening them.

    Args:
        on_sample: Called with every sampled state and its row.
        on_step: Called after every step (checkpoint hook).
        keep_snapshots: Keep every sampled state in the trajectory.
        record_rhs: Record the X^{-1} norms of the right-hand side terms.

    Raises:
        NumericalBreakdown: Carrying the partial trajectory.
    """
    cfg = cfg or StepperConfig()

    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")

    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")

    if resume is None:
        state = SolverState(v=v0.clean(), t=0.0, mu=mu, step_count=0)
    else:
        if resume.mu != mu:
            raise ValueError(f"resumed state has mu={resume.mu}, run expects mu={mu}")
        state = resume

    # the step grid is anchored at t = 0 for fixed dt and at the start state otherwise
    if cfg.dt == "auto":
        dt, remaining = resolve_dt(state.v, cfg, horizon - state.t, mu)
        origin, first_step = state.t, state.step_count
        total = first_step + remaining
    else:
        dt, total = resolve_dt(state.v, cfg, horizon)
        origin, first_step = 0.0, 0

        if not math.isclose(state.t, state.step_count * dt, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(
                f"resumed state t={state.t} is not on the step grid of dt={dt}"
            )

    logger.info(
        "simulate n=%d mu=%.6g horizon=%.6g dt=%.6g steps=%d",
        state.grid.n, mu, horizon, dt, total - state.step_count,
    )

    recorder = DiagnosticsRecorder(
        mu, history=history or [], start=state if history else None
    )
    snapshots: list[SolverState] = []

    def sample(s: SolverState):
        row = recorder.record(s, rhs_parts(s.v, mu) if record_rhs else None)
        cfl = velocity_linf(s.v) * dt / s.grid.dx

        if cfl > 1:
            logger.warning("CFL number %.3g above 1 at t=%.6g", cfl, s.t)

        if keep_snapshots:
            snapshots.append(s)

        if on_sample:
            on_sample(s, row)

    step_hook = tee(on_step)

    if not history:
        sample(state)
    elif keep_snapshots:
        snapshots.append(state)

    while state.step_count < total:
        try:
            state = step(state, cfg, dt)
        except NumericalBreakdown as e:
            e.trajectory = Trajectory(
                rows=recorder.rows, snapshots=snapshots, final=state, dt=dt, n_steps=total
            )
            raise

        # exact time on the step grid
        n = state.step_count
        t = origin + (n - first_step) * dt if cfg.dt == "auto" else n * dt
        if n == total:
            t = horizon
        state = state.model_copy(update={"t": t})
        recorder.accumulate(state)

        if n % sample_every == 0 or n == total:
            sample(state)

        step_hook(state)

    logger.info("simulate finished at t=%.6g after %d steps", state.t, state.step_count)

    return Trajectory(
        rows=recorder.rows, snapshots=snapshots, final=state, dt=dt, n_steps=total
    )
