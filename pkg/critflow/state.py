"""
Solver state and its binary checkpoint format.

Checkpoint layout (all little-endian):

    offset  type        field
    0       4 bytes     magic b"LLNS"
    4       u32         format version
    8       u32         n
    12      f64         box size L
    20      f64         t
    28      f64         mu
    36      u64         step count
    44      c16[3,n,n,n] coefficients as (re, im) f64 pairs

Coefficients are stored in C order over (component, i1, i2, i3), with each
index i in FFT order: integer wavenumber i for i < n/2 and i - n otherwise.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .spectral import Grid, SpectralField
from .utils import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"LLNS"
VERSION = 1
HEADER = struct.Struct("<4sIIdddQ")
COEFF_DTYPE = np.dtype("<c16")


class CheckpointError(ValueError):
    """A checkpoint file is corrupt, truncated or of an unknown version."""


class SolverState(BaseModel):
    """
    Velocity field plus the bookkeeping of a run: time, viscosity and number
    of steps taken.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    v: SpectralField
    t: float = Field(default=0.0, ge=0.0)
    mu: float = Field(gt=0.0)
    step_count: int = Field(default=0, ge=0)

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def advance(self, v: SpectralField, t: float) -> SolverState:
        """The state one step later."""
        if t < self.t:
            raise ValueError(f"time must not decrease (from {self.t} to {t})")

        return SolverState(v=v, t=t, mu=self.mu, step_count=self.step_count + 1)

    def render(self) -> str:
        """Short YAML summary, suitable for logs and the CLI."""
        data = {
            "n": self.grid.n,
            "box_size": self.grid.box_size,
            "t": self.t,
            "mu": self.mu,
            "step_count": self.step_count,
            "hermitian_residual": self.v.hermitian_residual(),
            "div_residual": self.v.divergence_residual(),
        }
        return yaml.safe_dump(data, default_flow_style=False, sort_keys=False).strip()


def encode_checkpoint(state: SolverState) -> bytes:
    grid = state.grid
    header = HEADER.pack(
        MAGIC, VERSION, grid.n, grid.box_size, state.t, state.mu, state.step_count
    )
    body = np.ascontiguousarray(state.v.coeffs, dtype=COEFF_DTYPE).tobytes(order="C")
    return header + body


def decode_checkpoint(payload: bytes) -> SolverState:
    if len(payload) < HEADER.size:
        raise CheckpointError(
            f"checkpoint truncated: {len(payload)} bytes, header needs {HEADER.size}"
        )

    magic, version, n, box_size, t, mu, step = HEADER.unpack_from(payload)

    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")

    if version != VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {VERSION}"
        )

    expected = HEADER.size + 3 * n**3 * COEFF_DTYPE.itemsize

    if len(payload) != expected:
        raise CheckpointError(
            f"checkpoint truncated or padded: {len(payload)} bytes, expected {expected}"
        )

    coeffs = np.frombuffer(payload, dtype=COEFF_DTYPE, offset=HEADER.size)
    coeffs = coeffs.reshape(3, n, n, n).astype(np.complex128)

    try:
        grid = Grid(n=n, box_size=box_size)
        v = SpectralField(grid=grid, coeffs=coeffs, solenoidal=True)
        return SolverState(v=v, t=t, mu=mu, step_count=step)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'state'}: {err['msg']}"
            for err in e.errors()
        )
        raise CheckpointError(f"checkpoint header holds an invalid state: {problems}") from e


def checkpoint_save(state: SolverState, path: str | Path) -> Path:
    path = atomic_write(path, encode_checkpoint(state))
    logger.info("checkpoint t=%.6g step=%d written to %s", state.t, state.step_count, path)
    return path


def checkpoint_load(path: str | Path) -> SolverState:
    """
    Reads a checkpoint written by `checkpoint_save`; the coefficients come back
    bit-identical.

    Raises:
        CheckpointError: On a wrong magic, an unknown version or a size that
            does not match the header.
    """
    state = decode_checkpoint(Path(path).read_bytes())
    logger.debug("checkpoint %s loaded at t=%.6g", path, state.t)
    return state
