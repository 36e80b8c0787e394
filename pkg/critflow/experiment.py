"""
Experiment runners and their on-disk artifacts.

Each runner writes into `config.output.dir`:

- `series.csv`: one `DiagnosticsRow` per sample, preceded by a
  `# critflow-series v<N>` comment line; floats use 17 significant digits.
- `verdicts.json`: the monitor verdicts.
- `manifest.json`: config echo, code version, thread count, wall time,
  verdict summary and the sha256 of every other file written.
- `checkpoints/*.llns`: optional solver checkpoints.

All files are written atomically.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from pathlib import Path
from typing import Any, Iterable, Sequence

from purely import ensure
from pydantic import BaseModel, Field

from .config import ConfigError, ExperimentConfig
from .data import MollifierSpec, RadialProfile, counterexample_partial, make_data, mollify
from .diagnostics import (
    DiagnosticsRow,
    MonitorVerdict,
    RunContext,
    cauchy_pair_monitor,
    difference_rows,
    run_monitors,
)
from .dynamics import NumericalBreakdown, Trajectory, resolve_dt, simulate
from .norms import x_norm
from .spectral import Grid, SpectralField, make_grid
from .state import SolverState, checkpoint_load, checkpoint_save
from .utils import atomic_write, format_float, render_table, thread_count

logger = logging.getLogger(__name__)

SERIES_VERSION = 1
SERIES_MARKER = "# critflow-series v"
HK_COLUMNS = ["hk1", "hk2", "hk3"]
SERIES_COLUMNS = [
    "step", "t", "x_minus1", "x0", "x1", "int_x1", "theorem_lhs",
    "grad_linf", "int_grad_linf", "omega_x0", "int_omega_x0",
    *HK_COLUMNS,
    "energy_l2", "div_residual",
    "dtv_x_minus1", "advection_x_minus1", "pressure_x_minus1",
]

THEOREM_BATTERY = ["dissipation", "theorem", "time_derivative", "energy_growth"]
BKM_BATTERY = ["bkm", "bkm_constants"]

EXIT_OK = 0
EXIT_MONITOR_FAILED = 1
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3


# ----------------------------------------------------------------------------
# Artifacts
# ----------------------------------------------------------------------------


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _csv_text(columns: Sequence[str], records: Iterable[dict[str, Any]], header: str | None = None) -> str:
    buffer = io.StringIO()

    if header:
        buffer.write(header + "\n")

    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)

    for record in records:
        writer.writerow([_cell(record.get(c)) for c in columns])

    return buffer.getvalue()


def write_series(rows: Sequence[DiagnosticsRow], path: str | Path) -> Path:
    header = f"{SERIES_MARKER}{SERIES_VERSION}"
    return atomic_write(path, _csv_text(SERIES_COLUMNS, (r.to_record() for r in rows), header))


def read_series(path: str | Path) -> list[DiagnosticsRow]:
    """
    Parses a series CSV back into rows; values round-trip exactly, so monitors
    re-run on the file reproduce the original verdicts.
    """
    lines = Path(path).read_text().splitlines()

    if not lines or not lines[0].startswith(SERIES_MARKER):
        raise ValueError(f"{path} is not a critflow series file")

    version = lines[0].removeprefix(SERIES_MARKER).strip()

    if version != str(SERIES_VERSION):
        raise ValueError(f"series version {version} not supported, expected {SERIES_VERSION}")

    return [DiagnosticsRow.from_record(record) for record in csv.DictReader(lines[1:])]


def write_verdicts(verdicts: Sequence[MonitorVerdict], path: str | Path) -> Path:
    payload = [v.model_dump(mode="json") for v in verdicts]
    return atomic_write(path, json.dumps(payload, indent=2) + "\n")


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunManifest(BaseModel):
    """Provenance of one invocation; checksums cover every file it lists."""

    command: str
    status: str
    config: dict[str, Any]
    version: str
    threads: int
    wall_time: float
    verdicts: list[dict[str, Any]] = Field(default_factory=list)
    files: dict[str, str] = Field(default_factory=dict)
    extra: dict[str, Any] = Field(default_factory=dict)


def write_manifest(
    out_dir: Path,
    command: str,
    status: str,
    config: ExperimentConfig,
    started: float,
    files: Sequence[Path],
    verdicts: Sequence[MonitorVerdict] = (),
    extra: dict[str, Any] | None = None,
) -> Path:
    from . import __version__

    manifest = RunManifest(
        command=command,
        status=status,
        config=config.model_dump(mode="json"),
        version=__version__,
        threads=thread_count(),
        wall_time=time.perf_counter() - started,
        verdicts=[
            {"name": v.name, "holds": v.holds, "applicable": v.applicable}
            for v in verdicts
        ],
        files={str(p.relative_to(out_dir)): sha256_file(p) for p in files},
        extra=extra or {},
    )

    path = atomic_write(out_dir / "manifest.json", manifest.model_dump_json(indent=2) + "\n")
    logger.info("manifest written to %s", path)
    return path


def exit_code_for(verdicts: Sequence[MonitorVerdict]) -> int:
    """1 if any applicable monitor fails, 0 otherwise."""
    failed = [v.name for v in verdicts if v.applicable and not v.holds]

    if failed:
        logger.warning("monitors failed: %s", ", ".join(failed))
        return EXIT_MONITOR_FAILED

    return EXIT_OK


# ----------------------------------------------------------------------------
# Runners
# ----------------------------------------------------------------------------


class RunResult(BaseModel):
    exit_code: int
    verdicts: list[MonitorVerdict] = Field(default_factory=list)
    rows: list[DiagnosticsRow] = Field(default_factory=list)
    files: list[Path] = Field(default_factory=list)
    extra: dict[str, Any] = Field(default_factory=dict)
    table: str | None = None


def build_initial_data(config: ExperimentConfig) -> tuple[Grid, SpectralField]:
    grid = make_grid(config.grid.n, config.grid.box_size)

    try:
        v0 = make_data(config.data.generator, grid, **config.generator_params())
    except (TypeError, ValueError) as e:
        raise ConfigError(f"data.params: {e}") from e

    return grid, v0


def _resume_inputs(
    path: Path, grid: Grid, config: ExperimentConfig
) -> tuple[SolverState, list[DiagnosticsRow]]:
    state = checkpoint_load(path)

    if not state.grid.matches(grid):
        raise ConfigError(
            f"checkpoint grid n={state.grid.n} does not match grid.n={grid.n}"
        )

    series = config.output.dir / "series.csv"
    history = []

    if series.exists():
        # rows up to the checkpoint; the next sample continues their integrals
        history = [r for r in read_series(series) if r.step <= state.step_count]

    logger.info("resuming from %s at t=%.6g with %d saved rows", path, state.t, len(history))
    return state, history


def run_simulation(
    config: ExperimentConfig,
    monitors: Sequence[str] | None = None,
    resume: str | Path | None = None,
    command: str = "simulate",
) -> RunResult:
    """
    Runs one simulation with its monitors and writes all artifacts.

    Raises:
        ConfigError: If the data cannot be built or a resume checkpoint does
            not fit the config.
    """
    started = time.perf_counter()
    out_dir = config.output.dir
    out_dir.mkdir(parents=True, exist_ok=True)

    grid, v0 = build_initial_data(config)
    names = list(monitors) if monitors is not None else config.monitors.names

    resume_state, history = (
        _resume_inputs(Path(resume), grid, config) if resume else (None, [])
    )

    checkpoints: list[Path] = []
    every = config.output.checkpoint_every

    rows: list[DiagnosticsRow] = list(history)

    def keep_row(state: SolverState, row: DiagnosticsRow):
        rows.append(row)

    def save_checkpoint(state: SolverState):
        if state.step_count % every == 0:
            # the series so far goes with the checkpoint, so a resumed run can continue it
            write_series(rows, out_dir / "series.csv")
            checkpoints.append(
                checkpoint_save(state, out_dir / "checkpoints" / f"step_{state.step_count:08d}.llns")
            )

    files: list[Path] = []

    try:
        trajectory = simulate(
            v0,
            config.mu,
            config.horizon,
            config.stepper,
            config.sample_every,
            on_sample=keep_row,
            on_step=save_checkpoint if every else None,
            resume=resume_state,
            history=history,
        )
    except NumericalBreakdown as e:
        partial = ensure(e.trajectory).rows
        files.append(write_series(partial, out_dir / "series.csv"))
        files.append(checkpoint_save(e.last_state, out_dir / "checkpoints" / "breakdown.llns"))
        files.extend(checkpoints)
        write_manifest(out_dir, command, "breakdown", config, started, files,
                       extra={"breakdown_step": e.step, "breakdown_t": e.last_state.t})
        return RunResult(exit_code=EXIT_BREAKDOWN, rows=partial, files=files)

    if every:
        checkpoints.append(checkpoint_save(trajectory.final, out_dir / "checkpoints" / "final.llns"))

    ctx = RunContext(
        mu=config.mu,
        dt_step=trajectory.dt,
        grid_n=grid.n,
        box_size=grid.box_size,
        seed=config.seed,
    )
    verdicts = run_monitors(names, trajectory.rows, ctx, config.monitors.settings())

    files.append(write_series(trajectory.rows, out_dir / "series.csv"))
    files.append(write_verdicts(verdicts, out_dir / "verdicts.json"))
    files.extend(checkpoints)

    code = exit_code_for(verdicts)
    extra = {"dt": trajectory.dt, "n_steps": trajectory.n_steps}
    write_manifest(out_dir, command, "ok" if code == EXIT_OK else "monitor_failed",
                   config, started, files, verdicts, extra)

    return RunResult(exit_code=code, verdicts=verdicts, rows=trajectory.rows, files=files, extra=extra)


class SweepPair(BaseModel):
    lambda_a: float
    lambda_b: float
    data_gap: float
    sup_difference: float
    bound: float
    holds: bool


def run_cauchy_sweep(config: ExperimentConfig, lambdas: Sequence[float] | None = None) -> RunResult:
    """
    Runs the mollified data v0^lambda for every lambda and checks the
    stability bound on consecutive pairs.

    All runs share one fixed step, resolved from the unmollified datum, so
    their samples are taken at the same times. If one of them breaks down,
    its partial series and last finite state are written and the sweep stops
    with exit code 3.

    Raises:
        ConfigError: With fewer than two scales or supercritical base data.
    """
    started = time.perf_counter()
    lambdas = list(lambdas if lambdas is not None else config.data.lambdas)

    if len(lambdas) < 2:
        raise ConfigError(f"data.lambdas: a Cauchy sweep needs at least two scales, got {lambdas}")

    if any(lam <= 0 for lam in lambdas):
        raise ConfigError(f"data.lambdas: scales must be positive, got {lambdas}")

    out_dir = config.output.dir
    out_dir.mkdir(parents=True, exist_ok=True)
    grid, v0 = build_initial_data(config)
    x0 = x_norm(v0, -1)

    if x0 >= config.mu:
        raise ConfigError(
            f"Cauchy sweep needs subcritical data, got X^-1 = {x0:.6g} >= mu = {config.mu}"
        )

    dt, _ = resolve_dt(v0, config.stepper, config.horizon, config.mu)
    stepper = config.stepper.model_copy(update={"dt": dt})

    data = [mollify(v0, MollifierSpec(shape=config.data.mollifier, lam=lam)) for lam in lambdas]
    runs: list[Trajectory] = []

    for lam, d in zip(lambdas, data):
        try:
            runs.append(
                simulate(d, config.mu, config.horizon, stepper, config.sample_every, keep_snapshots=True)
            )
        except NumericalBreakdown as e:
            logger.error("Cauchy sweep run at lambda=%g broke down at step %d", lam, e.step)
            partial = ensure(e.trajectory).rows
            files = [
                write_series(partial, out_dir / f"series_lambda_{lam:g}.csv"),
                checkpoint_save(e.last_state, out_dir / "checkpoints" / "breakdown.llns"),
            ]
            extra = {
                "lambdas": lambdas,
                "dt": dt,
                "breakdown_lambda": lam,
                "breakdown_step": e.step,
                "breakdown_t": e.last_state.t,
            }
            write_manifest(out_dir, "cauchy-sweep", "breakdown", config, started, files, extra=extra)
            return RunResult(exit_code=EXIT_BREAKDOWN, rows=partial, files=files, extra=extra)

    gaps_to_base = [x_norm(d - v0, -1) for d in data]
    pairs: list[SweepPair] = []
    verdicts: list[MonitorVerdict] = []

    for i in range(len(lambdas) - 1):
        a, b = runs[i], runs[i + 1]
        gap = x_norm(data[i] - data[i + 1], -1)
        diffs = difference_rows(a.snapshots, b.snapshots)
        verdict = cauchy_pair_monitor(
            a.rows, b.rows, diffs, config.mu, gap, settings=config.monitors.settings()
        )
        verdict.name = f"cauchy_pair[{lambdas[i]:g},{lambdas[i + 1]:g}]"
        verdicts.append(verdict)

        factor = verdict.details.get("bound_factor", float("nan"))
        pairs.append(
            SweepPair(
                lambda_a=lambdas[i],
                lambda_b=lambdas[i + 1],
                data_gap=gap,
                sup_difference=max(d.x_minus1 for d in diffs),
                bound=gap * factor,
                holds=verdict.holds,
            )
        )

    decreasing = all(g1 > g2 for g1, g2 in zip(gaps_to_base, gaps_to_base[1:]))

    if not decreasing:
        logger.warning("data gaps to the unmollified datum do not decrease: %s", gaps_to_base)

    columns = list(SweepPair.model_fields)
    table = _csv_text(columns, (p.model_dump() for p in pairs))
    files = [
        atomic_write(out_dir / "sweep.csv", table),
        write_verdicts(verdicts, out_dir / "verdicts.json"),
    ]

    code = exit_code_for(verdicts)
    extra = {"lambdas": lambdas, "gaps_to_base": gaps_to_base, "gaps_decreasing": decreasing, "dt": dt}
    text = render_table(columns, [[getattr(p, c) for c in columns] for p in pairs])
    write_manifest(out_dir, "cauchy-sweep", "ok" if code == EXIT_OK else "monitor_failed",
                   config, started, files, verdicts, extra)

    return RunResult(exit_code=code, verdicts=verdicts, files=files, extra=extra, table=text)


COUNTEREXAMPLE_COLUMNS = [
    "J", "x_minus1_partial", "h_half_partial", "identity_gap", "x_minus1_weighted",
]


def counterexample_table(J_list: Sequence[int], profile: RadialProfile | None = None) -> list[dict[str, Any]]:
    """
    One row per truncation J: the X^{-1} partial sum, the H^{1/2} partial norm
    and the gap to l1_mass * H_J.

    Raises:
        ConfigError: If the list is empty, not strictly ascending or holds a
            nonpositive J.
    """
    J_list = list(J_list)

    if not J_list or any(j < 1 for j in J_list):
        raise ConfigError(f"J list must hold positive integers, got {J_list}")

    if any(a >= b for a, b in zip(J_list, J_list[1:])):
        raise ConfigError(f"J list must be strictly ascending, got {J_list}")

    profile = profile or RadialProfile()
    rows = []

    for J in J_list:
        partial = counterexample_partial(J, profile)
        rows.append(
            {
                "J": J,
                "x_minus1_partial": partial.x_minus1_partial,
                "h_half_partial": partial.h_half_partial,
                "identity_gap": partial.identity_gap,
                "x_minus1_weighted": partial.x_minus1_weighted,
            }
        )

    return rows


def run_counterexample(
    J_list: Sequence[int],
    out_dir: str | Path,
    profile: RadialProfile | None = None,
) -> RunResult:
    rows = counterexample_table(J_list, profile)
    out_dir = Path(out_dir)

    path = atomic_write(out_dir / "counterexample.csv", _csv_text(COUNTEREXAMPLE_COLUMNS, rows))
    text = render_table(COUNTEREXAMPLE_COLUMNS, [[r[c] for c in COUNTEREXAMPLE_COLUMNS] for r in rows])
    table = atomic_write(out_dir / "counterexample.txt", text + "\n")

    logger.info("counterexample table written to %s", path)

    return RunResult(exit_code=EXIT_OK, files=[path, table], extra={"rows": rows}, table=text)
