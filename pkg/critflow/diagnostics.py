"""
Runtime monitors for the a priori estimates of the X^{-1} theory.

A run produces a series of `DiagnosticsRow`s. Every monitor is a pure
function of that series (and, for the Cauchy monitor, of paired difference
rows) that returns a `MonitorVerdict`; a failed inequality never raises.
Monitors raise `ValueError` only when the input itself is malformed.
"""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, Any, Callable, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.optimize
from pydantic import BaseModel, ConfigDict, Field

from .norms import energy, grad_linf, hs_norm, x_norm
from .spectral import BilinearMethod, SpectralField, bilinear, curl_hat
from .utils import lattice_sum, log_mean, trapezoid_increment

if TYPE_CHECKING:
    from .dynamics import RhsParts
    from .state import SolverState

logger = logging.getLogger(__name__)

HK_ORDERS = (1, 2, 3)
RATIO_FLOOR = 1e-8
CHAIN_SLACK = 1e-12


# ----------------------------------------------------------------------------
# Series records
# ----------------------------------------------------------------------------


class DiagnosticsRow(BaseModel):
    """One time sample of every monitored functional."""

    model_config = ConfigDict(frozen=True)

    step: int = 0
    t: float
    x_minus1: float
    x0: float
    x1: float
    int_x1: float
    theorem_lhs: float
    grad_linf: float
    int_grad_linf: float
    omega_x0: float
    int_omega_x0: float
    hk: dict[int, float] = Field(default_factory=dict)
    energy_l2: float
    div_residual: float
    dtv_x_minus1: float | None = None
    advection_x_minus1: float | None = None
    pressure_x_minus1: float | None = None

    def to_record(self) -> dict[str, Any]:
        """Flat mapping with `hk` spread into `hk1`, `hk2`, ... columns."""
        record = self.model_dump(exclude={"hk"})
        record.update({f"hk{k}": v for k, v in sorted(self.hk.items())})
        return record

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> DiagnosticsRow:
        data: dict[str, Any] = {}
        hk: dict[int, float] = {}

        for key, value in record.items():
            if key.startswith("hk") and key[2:].isdigit():
                hk[int(key[2:])] = float(value)
            elif value in ("", None):
                data[key] = None
            else:
                data[key] = value

        return cls(hk=hk, **data)


class DifferenceRow(BaseModel):
    """
    X^{-1} and X^1 norms of the difference of two paired snapshots, and the
    running integral of the latter.
    """

    model_config = ConfigDict(frozen=True)

    t: float
    x_minus1: float
    x1: float
    int_x1: float = 0.0


class MonitorVerdict(BaseModel):
    """
    Outcome of one monitor.

    `worst_margin` is the smallest slack observed (negative means violated),
    normalised by the bound it was measured against whenever that bound is
    positive. A monitor whose hypotheses fail is reported with
    `applicable=False` and `holds=False`.
    """

    name: str
    holds: bool
    applicable: bool = True
    worst_margin: float | None = None
    worst_t: float | None = None
    tolerances: dict[str, float] = Field(default_factory=dict)
    details: dict[str, Any] = Field(default_factory=dict)


class MonitorSettings(BaseModel):
    """
    Tolerance model shared by all monitors.

    Attributes:
        tol_rel: Relative slack for Gronwall-type and budget bounds.
        tol_mono: Slack for X^{-1} monotonicity, relative to X^{-1}(0).
        c_sample: Weight of the squared sampling interval in tol_dyn.
        c_step: Weight of the integrator error dt^4 in tol_dyn.
        c_cap: Cap on the empirical H^k growth ratio.
        energy_k: Sobolev order watched by the energy-growth monitor.
        bkm_s: Regularity index for the continuation constants.
        bkm_samples: Random lattice triples checked for the M_s inequality.
    """

    model_config = ConfigDict(extra="forbid")

    tol_rel: float = Field(default=0.05, ge=0.0)
    tol_mono: float = Field(default=0.01, ge=0.0)
    c_sample: float = Field(default=1.0, ge=0.0)
    c_step: float = Field(default=1.0, ge=0.0)
    c_cap: float = Field(default=10.0, gt=0.0)
    energy_k: int = Field(default=2, ge=1)
    bkm_s: float = Field(default=1.0, gt=0.0)
    bkm_samples: int = Field(default=200_000, ge=1)


class _Point(NamedTuple):
    """What the quadrature keeps of one solver state."""

    step: int
    t: float
    magnitudes: np.ndarray
    curl_magnitudes: np.ndarray
    x1: float
    omega_x0: float
    grad_linf: float


def _measure(state: SolverState) -> _Point:
    v = state.v
    curl_mags = curl_hat(v).magnitudes

    return _Point(
        step=state.step_count,
        t=state.t,
        magnitudes=v.magnitudes,
        curl_magnitudes=curl_mags,
        x1=x_norm(v, 1),
        omega_x0=lattice_sum(curl_mags),
        grad_linf=grad_linf(v),
    )


class DiagnosticsRecorder:
    """
    Builds the series of a run.

    `accumulate` is called after every solver step and advances the time
    integrals of X^1, ||grad v||_inf and the vorticity X^0 norm; `record`
    turns the current state into a row. Every lattice mode contributes one
    panel per step whose height is the logarithmic mean of its amplitude at
    both ends, so viscous decay is integrated exactly however stiff the mode
    is relative to the step.

    A recorder can be seeded with the rows of an earlier, interrupted run; it
    then keeps that run's initial X^{-1} and continues its accumulations from
    `start`, the state the last seeded row was taken from.
    """

    def __init__(
        self,
        mu: float,
        history: Sequence[DiagnosticsRow] = (),
        hk_orders: Iterable[int] = HK_ORDERS,
        start: SolverState | None = None,
    ):
        self.mu = mu
        self.hk_orders = tuple(hk_orders)
        self.rows: list[DiagnosticsRow] = list(history)

        last = self.rows[-1] if self.rows else None
        self._anchor = last
        self._point: _Point | None = None
        self._totals = (
            (0.0, 0.0, 0.0)
            if last is None
            else (last.int_x1, last.int_grad_linf, last.int_omega_x0)
        )

        if start is not None:
            self.accumulate(start)

    @property
    def x_minus1_initial(self) -> float | None:
        return self.rows[0].x_minus1 if self.rows else None

    @property
    def integrals(self) -> tuple[float, float, float]:
        """Running integrals of X^1, ||grad v||_inf and X^0(curl v)."""
        return self._totals

    def accumulate(self, state: SolverState) -> None:
        """Advances the time integrals to `state`. Repeating a step is a no-op."""
        if self._point is not None and self._point.step == state.step_count:
            return

        point = _measure(state)
        prev, anchor = self._point, self._anchor

        if prev is not None:
            h = point.t - prev.t
            panels = (
                lattice_sum(
                    state.grid.k_magnitude * log_mean(prev.magnitudes, point.magnitudes)
                ),
                float(log_mean(prev.grad_linf, point.grad_linf)),
                lattice_sum(log_mean(prev.curl_magnitudes, point.curl_magnitudes)),
            )
        elif anchor is not None and anchor.step != point.step:
            logger.warning(
                "no state for step %d, bridging to step %d with a single panel",
                anchor.step,
                point.step,
            )
            h = point.t - anchor.t
            panels = (
                float(log_mean(anchor.x1, point.x1)),
                float(log_mean(anchor.grad_linf, point.grad_linf)),
                float(log_mean(anchor.omega_x0, point.omega_x0)),
            )
        else:
            h, panels = 0.0, (0.0, 0.0, 0.0)

        self._totals = tuple(
            total + h * panel for total, panel in zip(self._totals, panels)
        )
        self._point = point
        self._anchor = None

    def record(self, state: SolverState, rhs: RhsParts | None = None) -> DiagnosticsRow:
        self.accumulate(state)

        v = state.v
        point = self._point
        x_minus1 = x_norm(v, -1)
        int_x1, int_g, int_w = self._totals
        initial = self.rows[0].x_minus1 if self.rows else x_minus1

        row = DiagnosticsRow(
            step=state.step_count,
            t=state.t,
            x_minus1=x_minus1,
            x0=x_norm(v, 0),
            x1=point.x1,
            int_x1=int_x1,
            theorem_lhs=x_minus1 + (self.mu - initial) * int_x1,
            grad_linf=point.grad_linf,
            int_grad_linf=int_g,
            omega_x0=point.omega_x0,
            int_omega_x0=int_w,
            hk={k: hs_norm(v, k) for k in self.hk_orders},
            energy_l2=energy(v),
            div_residual=v.divergence_residual(),
            dtv_x_minus1=None if rhs is None else x_norm(rhs.total, -1),
            advection_x_minus1=None if rhs is None else x_norm(rhs.advection, -1),
            pressure_x_minus1=None if rhs is None else x_norm(rhs.pressure, -1),
        )

        logger.debug(
            "t=%.6g X^-1=%.6g X^1=%.6g lhs=%.6g", row.t, x_minus1, point.x1, row.theorem_lhs
        )

        self.rows.append(row)
        return row


def difference_rows(
    snapshots_a: Sequence[SolverState], snapshots_b: Sequence[SolverState]
) -> list[DifferenceRow]:
    """
    Pairs snapshots taken at the same times and measures their differences.

    The running X^1 integral of the difference uses the same per-mode
    logarithmic mean as the recorder, over the snapshot intervals.
    """
    if len(snapshots_a) != len(snapshots_b):
        raise ValueError(
            f"runs have {len(snapshots_a)} and {len(snapshots_b)} snapshots"
        )

    rows = []
    prev_t = prev_mags = None
    int_x1 = 0.0

    for a, b in zip(snapshots_a, snapshots_b):
        if not math.isclose(a.t, b.t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"snapshots at different times {a.t} and {b.t}")

        diff = a.v - b.v
        mags = diff.magnitudes

        if prev_mags is not None:
            int_x1 += (a.t - prev_t) * lattice_sum(
                diff.grid.k_magnitude * log_mean(prev_mags, mags)
            )

        rows.append(
            DifferenceRow(
                t=a.t, x_minus1=x_norm(diff, -1), x1=x_norm(diff, 1), int_x1=int_x1
            )
        )
        prev_t, prev_mags = a.t, mags

    return rows


# ----------------------------------------------------------------------------
# Pointwise and static checks
# ----------------------------------------------------------------------------


def young_split_check(a: float | np.ndarray, b: float | np.ndarray) -> float | np.ndarray:
    """
    Slack of the pointwise split 1 <= (a/b + b/a)/2, i.e. (a/b + b/a)/2 - 1.

    Evaluated as (a - b)^2 / (2ab), which cannot round below zero.
    """
    a_arr, b_arr = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)

    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise ValueError("young_split_check needs strictly positive arguments")

    slack = (a_arr - b_arr) ** 2 / (2 * a_arr * b_arr)
    return float(slack) if slack.ndim == 0 else slack


class BilinearChain(BaseModel):
    """
    The chain behind the key bilinear estimate, evaluated on two fields:

        weighted = sum_k |k|^{-1} |B(u, w)(k)|
                <= product = X^0(u) X^0(w)
                <= split = (X^{-1}(u) X^1(w) + X^1(u) X^{-1}(w)) / 2
                <= bound = X^{-1}(u) X^1(w) + X^1(u) X^{-1}(w)
    """

    weighted: float
    product: float
    split: float
    bound: float

    @property
    def holds(self) -> bool:
        links = [
            (self.weighted, self.product),
            (self.product, self.split),
            (self.split, self.bound),
        ]
        return all(lo <= hi * (1 + CHAIN_SLACK) for lo, hi in links)


def bilinear_chain(
    u: SpectralField, w: SpectralField, method: BilinearMethod = "direct_convolution"
) -> BilinearChain:
    b = bilinear(u, w, method)
    um, u1 = x_norm(u, -1), x_norm(u, 1)
    wm, w1 = x_norm(w, -1), x_norm(w, 1)

    return BilinearChain(
        weighted=x_norm(b, -1),
        product=x_norm(u, 0) * x_norm(w, 0),
        split=0.5 * (um * w1 + u1 * wm),
        bound=um * w1 + u1 * wm,
    )


# ----------------------------------------------------------------------------
# Series monitors
# ----------------------------------------------------------------------------


def _relative(slack: float, scale: float) -> float:
    return slack / scale if scale > 0 else slack


def _worst(margins: list[tuple[float, float]]) -> tuple[float | None, float | None]:
    if not margins:
        return None, None
    margin, t = min(margins, key=lambda m: m[0])
    return margin, t


def _require(series: Sequence[DiagnosticsRow], count: int, monitor: str):
    if len(series) < count:
        raise ValueError(f"{monitor} needs at least {count} samples, got {len(series)}")


def dissipation_residual(
    series: Sequence[DiagnosticsRow],
    mu: float,
    settings: MonitorSettings | None = None,
    dt_step: float = 0.0,
) -> MonitorVerdict:
    """
    Checks d/dt X^{-1} + mu X^1 <= X^{-1} X^1 + tol_dyn at every interior sample.

    tol_dyn = (c_sample * h^2 + c_step * dt_step^4) * max_t mu X^1(t), with h
    the larger of the two sampling intervals around the sample. Endpoints are
    not judged.
    """
    settings = settings or MonitorSettings()
    _require(series, 3, "dissipation_residual")

    t = [r.t for r in series]
    # second-order on nonuniform samples; only interior values are used
    dxm = np.gradient([r.x_minus1 for r in series], t)
    scale = max(mu * r.x1 for r in series)

    margins = []
    tol_max = 0.0

    for i in range(1, len(series) - 1):
        h = max(t[i] - t[i - 1], t[i + 1] - t[i])
        tol_dyn = (settings.c_sample * h**2 + settings.c_step * dt_step**4) * scale
        tol_max = max(tol_max, tol_dyn)

        row = series[i]
        lhs = float(dxm[i]) + mu * row.x1
        rhs = row.x_minus1 * row.x1
        margins.append((rhs + tol_dyn - lhs, t[i]))

    worst, worst_t = _worst(margins)

    return MonitorVerdict(
        name="dissipation",
        holds=worst >= 0,
        worst_margin=worst,
        worst_t=worst_t,
        tolerances={
            "c_sample": settings.c_sample,
            "c_step": settings.c_step,
            "dt_step": dt_step,
            "tol_dyn_max": tol_max,
        },
        details={"samples_checked": len(margins)},
    )


def theorem_monitor(
    series: Sequence[DiagnosticsRow],
    mu: float,
    x_minus1_initial: float | None = None,
    settings: MonitorSettings | None = None,
) -> MonitorVerdict:
    """
    Checks the uniform estimate

        X^{-1}(t) + (mu - X0) int_0^t X^1 <= X0 (1 + tol_rel),

    the monotone decay of X^{-1} (slack tol_mono * X0), and the gradient budget
    int_0^t ||grad v||_inf <= X0 / (mu - X0) (1 + tol_rel), where X0 is the
    initial X^{-1} norm. With X0 >= mu the guarantee is void and the verdict
    is marked not applicable.
    """
    settings = settings or MonitorSettings()
    _require(series, 1, "theorem_monitor")
    x0 = series[0].x_minus1 if x_minus1_initial is None else x_minus1_initial
    tolerances = {"tol_rel": settings.tol_rel, "tol_mono": settings.tol_mono}

    if x0 >= mu:
        logger.warning(
            "theorem monitor skipped: X^-1(0)=%.6g is not below mu=%.6g", x0, mu
        )
        return MonitorVerdict(
            name="theorem",
            holds=False,
            applicable=False,
            tolerances=tolerances,
            details={"x_minus1_initial": x0, "mu": mu},
        )

    lhs_bound = x0 * (1 + settings.tol_rel)
    grad_bound = x0 / (mu - x0) * (1 + settings.tol_rel)

    uniform = [(_relative(lhs_bound - r.theorem_lhs, x0), r.t) for r in series]
    gradient = [(_relative(grad_bound - r.int_grad_linf, grad_bound), r.t) for r in series]
    monotone = [
        (_relative(prev.x_minus1 + settings.tol_mono * x0 - cur.x_minus1, x0), cur.t)
        for prev, cur in zip(series, series[1:])
    ]

    checks = {"uniform": uniform, "gradient": gradient, "monotone": monotone}
    worst_by_check = {name: _worst(m)[0] for name, m in checks.items()}
    worst, worst_t = _worst(uniform + gradient + monotone)

    return MonitorVerdict(
        name="theorem",
        holds=worst is None or worst >= 0,
        worst_margin=worst,
        worst_t=worst_t,
        tolerances=tolerances,
        details={
            "x_minus1_initial": x0,
            "sup_lhs": max(r.theorem_lhs for r in series),
            "int_grad_linf": series[-1].int_grad_linf,
            "grad_budget": x0 / (mu - x0),
            "worst_by_check": worst_by_check,
        },
    )


def cauchy_pair_monitor(
    series_a: Sequence[DiagnosticsRow],
    series_b: Sequence[DiagnosticsRow],
    differences: Sequence[DifferenceRow],
    mu: float,
    data_gap: float,
    x_minus1_initial: float | None = None,
    settings: MonitorSettings | None = None,
) -> MonitorVerdict:
    """
    Stability of two subcritical solutions:

        sup_t ||v_a - v_b||_{X^{-1}}            <= gap * exp(X0 / (mu - X0))
        (mu - X0) int_0^T ||v_a - v_b||_{X^1}   <= gap * exp(X0 / (mu - X0))

    with gap the initial X^{-1} distance and X0 the larger initial X^{-1} norm.
    Both runs must also pass the theorem monitor, whose bound the derivation
    relies on.
    """
    settings = settings or MonitorSettings()
    _require(series_a, 1, "cauchy_pair_monitor")

    if not (len(series_a) == len(series_b) == len(differences)):
        raise ValueError(
            "paired runs must have the same number of samples: "
            f"{len(series_a)}, {len(series_b)}, {len(differences)}"
        )

    for a, b, d in zip(series_a, series_b, differences):
        if not (math.isclose(a.t, b.t, abs_tol=1e-12) and math.isclose(a.t, d.t, abs_tol=1e-12)):
            raise ValueError(f"paired runs sampled at different times near t={a.t}")

    if data_gap < 0:
        raise ValueError(f"data_gap must be >= 0, got {data_gap}")

    x0 = x_minus1_initial
    if x0 is None:
        x0 = max(series_a[0].x_minus1, series_b[0].x_minus1)

    tolerances = {"tol_rel": settings.tol_rel}

    if x0 >= mu:
        logger.warning("cauchy monitor skipped: X^-1(0)=%.6g is not below mu=%.6g", x0, mu)
        return MonitorVerdict(
            name="cauchy_pair",
            holds=False,
            applicable=False,
            tolerances=tolerances,
            details={"x_minus1_initial": x0, "mu": mu},
        )

    factor = math.exp(x0 / (mu - x0))
    bound = data_gap * factor * (1 + settings.tol_rel)

    prerequisites = [
        theorem_monitor(series_a, mu, settings=settings),
        theorem_monitor(series_b, mu, settings=settings),
    ]

    sup_margins = [(_relative(bound - d.x_minus1, bound), d.t) for d in differences]

    int_margins = [
        (_relative(bound - (mu - x0) * d.int_x1, bound), d.t) for d in differences
    ]
    int_diff = differences[-1].int_x1

    worst, worst_t = _worst(sup_margins + int_margins)
    sup_diff = max(d.x_minus1 for d in differences)

    return MonitorVerdict(
        name="cauchy_pair",
        holds=(worst is None or worst >= 0) and all(p.holds for p in prerequisites),
        worst_margin=worst,
        worst_t=worst_t,
        tolerances=tolerances,
        details={
            "x_minus1_initial": x0,
            "data_gap": data_gap,
            "bound_factor": factor,
            "sup_difference": sup_diff,
            "observed_factor": sup_diff / data_gap if data_gap > 0 else None,
            "int_x1_difference": int_diff,
            "prerequisites_hold": [p.holds for p in prerequisites],
        },
    )


def time_derivative_budget(
    series: Sequence[DiagnosticsRow],
    mu: float,
    settings: MonitorSettings | None = None,
) -> MonitorVerdict:
    """
    Checks that dv/dt is integrable in X^{-1} within the budget

        int ||dv/dt||_{X^{-1}} <= mu int X^1 + 2 sup X^{-1} int X^1,

    one sup * int term each for advection and pressure. The advection and
    pressure integrals are also checked against their own share.
    """
    settings = settings or MonitorSettings()
    _require(series, 1, "time_derivative_budget")

    if any(r.dtv_x_minus1 is None for r in series):
        raise ValueError("time_derivative_budget needs rows recorded with RHS norms")

    sup_x = max(r.x_minus1 for r in series)
    margins = []
    totals = {"dtv": 0.0, "advection": 0.0, "pressure": 0.0}
    factor = 1 + settings.tol_rel

    for prev, cur in zip(series, series[1:]):
        totals["dtv"] += trapezoid_increment(prev.t, cur.t, prev.dtv_x_minus1, cur.dtv_x_minus1)
        totals["advection"] += trapezoid_increment(
            prev.t, cur.t, prev.advection_x_minus1, cur.advection_x_minus1
        )
        totals["pressure"] += trapezoid_increment(
            prev.t, cur.t, prev.pressure_x_minus1, cur.pressure_x_minus1
        )

        share = sup_x * cur.int_x1
        budget = mu * cur.int_x1 + 2 * share

        margins.append((_relative(budget * factor - totals["dtv"], budget), cur.t))
        margins.append((_relative(share * factor - totals["advection"], share), cur.t))
        margins.append((_relative(share * factor - totals["pressure"], share), cur.t))

    worst, worst_t = _worst(margins)

    return MonitorVerdict(
        name="time_derivative",
        holds=worst is None or worst >= 0,
        worst_margin=worst,
        worst_t=worst_t,
        tolerances={"tol_rel": settings.tol_rel},
        details={
            "int_dtv": totals["dtv"],
            "int_advection": totals["advection"],
            "int_pressure": totals["pressure"],
            "budget": mu * series[-1].int_x1 + 2 * sup_x * series[-1].int_x1,
        },
    )


def bkm_monitor(
    series: Sequence[DiagnosticsRow],
    mu: float,
    settings: MonitorSettings | None = None,
) -> MonitorVerdict:
    """
    Vorticity-controlled growth bounds, valid without any smallness:

        X^{-1}(t) <= X^{-1}(0) exp(W(t)),   X^0(t) <= X^0(0) exp(2 W(t)),

    with W(t) the time integral of the vorticity X^0 norm.
    """
    settings = settings or MonitorSettings()
    _require(series, 1, "bkm_monitor")

    first = series[0]
    factor = 1 + settings.tol_rel
    margins = []

    for r in series:
        bound_m = first.x_minus1 * math.exp(r.int_omega_x0)
        bound_0 = first.x0 * math.exp(2 * r.int_omega_x0)
        margins.append((_relative(bound_m * factor - r.x_minus1, bound_m), r.t))
        margins.append((_relative(bound_0 * factor - r.x0, bound_0), r.t))

    worst, worst_t = _worst(margins)

    return MonitorVerdict(
        name="bkm",
        holds=worst >= 0,
        worst_margin=worst,
        worst_t=worst_t,
        tolerances={"tol_rel": settings.tol_rel},
        details={"int_omega_x0": series[-1].int_omega_x0},
    )


class BkmConstants(BaseModel):
    """
    Constants of the continuation argument for C^s regularity.

    `eps` makes 2 eps X^0(v0) exp(2W) < mu with a factor-two margin; `M` is the
    smallest power of two beyond which |xi|^{s+1} <= eps (1 + |eta|^{s+2} +
    |xi - eta|^{s+2}) holds. `within_band` tells whether any retained lattice
    mode lies beyond M; `verified` is the pointwise check over sampled
    lattice triples with |xi| > M.
    """

    s: float
    eps: float | None
    M: float | None
    within_band: bool
    verified: bool
    band_radius: float
    checked: int = 0
    violations: int = 0
    W: float = 0.0


def _threshold(s: float, eps: float) -> float:
    """
    Largest r with r^{s+1} > eps (1 + (r/2)^{s+2}); beyond it the sufficient
    condition holds since max(|eta|, |xi - eta|) >= |xi| / 2.
    """

    def gap(r: float) -> float:
        return eps * (1 + (r / 2) ** (s + 2)) - r ** (s + 1)

    upper = 2 ** (s + 2) / eps
    radii = np.geomspace(1e-6, upper, 4096)
    negative = [r for r in radii if gap(r) < 0]

    if not negative:
        return 0.0

    # gap(upper) >= eps > 0, so the last negative radius has a right neighbour
    lo = max(negative)
    hi = radii[np.searchsorted(radii, lo) + 1]
    return scipy.optimize.brentq(gap, lo, hi)


def bkm_constants(
    s: float,
    series: Sequence[DiagnosticsRow],
    mu: float,
    x0_initial: float,
    grid_n: int,
    box_size: float = 2 * math.pi,
    samples: int = 200_000,
    seed: int = 0,
) -> BkmConstants:
    """
    Chooses eps_s and M_s for a completed run and samples the pointwise
    inequality over lattice triples of the dealiased band.

    A zero initial X^0 makes every bound vacuous.
    """
    if s <= 0:
        raise ValueError(f"regularity index s must be positive, got {s}")

    _require(series, 1, "bkm_constants")
    W = series[-1].int_omega_x0
    K = (grid_n - 1) // 3
    kappa = 2 * math.pi / box_size
    band_radius = math.sqrt(3) * K * kappa

    if x0_initial == 0:
        return BkmConstants(
            s=s, eps=None, M=None, within_band=True, verified=True,
            band_radius=band_radius, W=W,
        )

    eps = mu / (4 * x0_initial * math.exp(2 * W))
    M = 2.0 ** max(1, math.ceil(math.log2(max(_threshold(s, eps), 2.0))))
    within_band = M < band_radius

    if not within_band:
        logger.warning(
            "no admissible M_s inside the band: M=%g exceeds band radius %.4g (s=%g)",
            M, band_radius, s,
        )

    rng = np.random.Generator(np.random.Philox(key=seed))
    xi = rng.integers(-K, K + 1, size=(samples, 3)) * kappa
    eta = rng.integers(-K, K + 1, size=(samples, 3)) * kappa

    r_xi = np.linalg.norm(xi, axis=1)
    r_eta = np.linalg.norm(eta, axis=1)
    r_rest = np.linalg.norm(xi - eta, axis=1)

    beyond = r_xi > M
    lhs = r_xi[beyond] ** (s + 1)
    rhs = eps * (1 + r_eta[beyond] ** (s + 2) + r_rest[beyond] ** (s + 2))
    violations = int(np.count_nonzero(lhs > rhs))

    return BkmConstants(
        s=s,
        eps=eps,
        M=M,
        within_band=within_band,
        verified=violations == 0,
        band_radius=band_radius,
        checked=int(np.count_nonzero(beyond)),
        violations=violations,
        W=W,
    )


def energy_growth_monitor(
    series: Sequence[DiagnosticsRow],
    k: int,
    settings: MonitorSettings | None = None,
) -> MonitorVerdict:
    """
    Empirical rate r(t) = log(H^k(t) / H^k(0)) / int_0^t ||grad v||_inf of the
    energy-method bound; holds iff sup r <= c_cap.
    """
    settings = settings or MonitorSettings()
    _require(series, 1, "energy_growth_monitor")

    if k not in series[0].hk:
        raise ValueError(f"series does not record the H^{k} norm")

    h0 = series[0].hk[k]
    tolerances = {"c_cap": settings.c_cap}

    if h0 == 0:
        return MonitorVerdict(
            name="energy_growth", holds=True, tolerances=tolerances,
            details={"k": k, "vacuous": True},
        )

    rates = [
        (math.log(r.hk[k] / h0) / r.int_grad_linf, r.t)
        for r in series
        if r.int_grad_linf > RATIO_FLOOR and r.hk[k] > 0
    ]

    if not rates:
        return MonitorVerdict(
            name="energy_growth", holds=True, tolerances=tolerances,
            details={"k": k, "sup_rate": None},
        )

    sup_rate, sup_t = max(rates, key=lambda x: x[0])

    return MonitorVerdict(
        name="energy_growth",
        holds=sup_rate <= settings.c_cap,
        worst_margin=settings.c_cap - sup_rate,
        worst_t=sup_t,
        tolerances=tolerances,
        details={"k": k, "sup_rate": sup_rate},
    )


# ----------------------------------------------------------------------------
# Dispatch
# ----------------------------------------------------------------------------


class RunContext(BaseModel):
    """What a series monitor may need besides the series."""

    mu: float
    dt_step: float = 0.0
    grid_n: int
    box_size: float = 2 * math.pi
    seed: int = 0


SeriesMonitor = Callable[[Sequence[DiagnosticsRow], RunContext, MonitorSettings], MonitorVerdict]

MONITORS: dict[str, SeriesMonitor] = {}


def monitor(name: str) -> Callable[[SeriesMonitor], SeriesMonitor]:
    def decorator(func: SeriesMonitor) -> SeriesMonitor:
        MONITORS[name] = func
        return func

    return decorator


@monitor("dissipation")
def _dissipation(series, ctx, settings):
    return dissipation_residual(series, ctx.mu, settings, dt_step=ctx.dt_step)


@monitor("theorem")
def _theorem(series, ctx, settings):
    return theorem_monitor(series, ctx.mu, settings=settings)


@monitor("time_derivative")
def _time_derivative(series, ctx, settings):
    return time_derivative_budget(series, ctx.mu, settings)


@monitor("bkm")
def _bkm(series, ctx, settings):
    return bkm_monitor(series, ctx.mu, settings)


@monitor("bkm_constants")
def _bkm_constants(series, ctx, settings):
    constants = bkm_constants(
        settings.bkm_s,
        series,
        ctx.mu,
        series[0].x0,
        grid_n=ctx.grid_n,
        box_size=ctx.box_size,
        samples=settings.bkm_samples,
        seed=ctx.seed,
    )
    return MonitorVerdict(
        name="bkm_constants",
        holds=constants.verified,
        tolerances={"bkm_s": settings.bkm_s},
        details=constants.model_dump(),
    )


@monitor("energy_growth")
def _energy_growth(series, ctx, settings):
    return energy_growth_monitor(series, settings.energy_k, settings)


def run_monitors(
    names: Iterable[str],
    series: Sequence[DiagnosticsRow],
    ctx: RunContext,
    settings: MonitorSettings | None = None,
) -> list[MonitorVerdict]:
    """
    Runs the named monitors over one series.

    A monitor that rejects the series as input (too few samples, missing
    columns) is reported not applicable instead of aborting the others.
    """
    settings = settings or MonitorSettings()
    verdicts = []

    for name in names:
        if name not in MONITORS:
            raise ValueError(f"unknown monitor {name!r}, expected one of {sorted(MONITORS)}")

        try:
            verdict = MONITORS[name](series, ctx, settings)
        except ValueError as e:
            logger.warning("monitor %s cannot judge this series: %s", name, e)
            verdict = MonitorVerdict(
                name=name, holds=False, applicable=False, details={"error": str(e)}
            )

        logger.info(
            "monitor %s: %s (worst margin %s)",
            name,
            "holds" if verdict.holds else ("n/a" if not verdict.applicable else "FAILS"),
            verdict.worst_margin,
        )
        verdicts.append(verdict)

    return verdicts
