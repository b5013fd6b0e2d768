"""Homogenization harness: window averages, empirical measures, convergence.

Window averages are exact: every field is an exact piecewise-linear
descriptor, so the mean over ``(x - h/2, x + h/2) ∩ (-1, 1)`` is a
difference of antiderivatives divided by the window length.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import time as _time
from typing import Callable, Sequence

import numpy as np

from .core import MicroState, PhysParams, check_scaling
from .extend import extend_velocity, fluid_density_field, reconstruct_gas_indicator_fields
from .macro import MacroState, macro_from_init, macro_run
from .micro import MicroStepConfig, cfl_dt, monitor_bounds, run
from .piecewise import PiecewiseLinear
from .seed import MacroInitData, scaling_bounds_for, seed_micro

__all__ = [
    "AveragedFields",
    "ConvergenceReport",
    "EmpiricalMeasure",
    "FIELDS",
    "GridMismatch",
    "WindowTooNarrow",
    "compare_runs",
    "convergence_study",
    "empirical_measure",
    "fluid_indicator",
    "macro_window_average",
    "measure_moment",
    "window_average",
    "window_mean",
]

FIELDS = ("alpha_f", "af_rho_f", "ag_rho_g", "ag_fg", "u")


class WindowTooNarrow(ValueError):
    pass


class GridMismatch(ValueError):
    pass


def window_mean(d: PiecewiseLinear, h: float, grid) -> np.ndarray:
    """Exact top-hat mean of ``d`` over ``(x - h/2, x + h/2)`` clipped to the domain."""
    grid = np.asarray(grid, dtype=float)
    lo_d, hi_d = d.domain
    a = np.maximum(grid - 0.5 * h, lo_d)
    b = np.minimum(grid + 0.5 * h, hi_d)
    return (d.antiderivative(b) - d.antiderivative(a)) / (b - a)


@dataclass(frozen=True, eq=False)
class AveragedFields:
    h: float
    grid: np.ndarray
    alpha_f: np.ndarray
    af_rho_f: np.ndarray
    ag_rho_g: np.ndarray
    ag_fg: np.ndarray
    u: np.ndarray

    @property
    def alpha_g(self) -> np.ndarray:
        return 1.0 - self.alpha_f

    def fields(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in FIELDS}


def fluid_indicator(state: MicroState) -> PiecewiseLinear:
    """Indicator of the fluid domain F."""
    N = state.N
    if N == 0:
        return PiecewiseLinear.constant(-1.0, 1.0, 1.0)
    breaks = np.empty(2 * N + 2)
    breaks[0], breaks[-1] = -1.0, 1.0
    breaks[1:-1:2] = state.x[:-1, -1]
    breaks[2:-1:2] = state.x[1:, 0]
    vals = np.zeros(2 * N + 1)
    vals[0::2] = 1.0
    return PiecewiseLinear.piecewise_constant(breaks, vals)


def window_average(state: MicroState, h: float, grid) -> AveragedFields:
    """Top-hat averages of the microscopic indicator, density, covolume and velocity fields."""
    if state.N and h < 4.0 * state.R.max():
        raise WindowTooNarrow(f"h={h} is below 4 max R = {4.0 * state.R.max()}")
    grid = np.asarray(grid, dtype=float)
    rho_g, f_g = reconstruct_gas_indicator_fields(state)
    return AveragedFields(
        h=h, grid=grid,
        alpha_f=window_mean(fluid_indicator(state), h, grid),
        af_rho_f=window_mean(fluid_density_field(state), h, grid),
        ag_rho_g=window_mean(rho_g, h, grid),
        ag_fg=window_mean(f_g, h, grid),
        u=window_mean(extend_velocity(state), h, grid),
    )


def macro_window_average(state: MacroState, h: float, grid) -> AveragedFields:
    """The same top-hat filter applied to the macroscopic fields."""
    d = state.descriptors()
    grid = np.asarray(grid, dtype=float)
    return AveragedFields(
        h=h, grid=grid,
        alpha_f=window_mean(d["alpha_f"], h, grid),
        af_rho_f=window_mean(d["m_f"], h, grid),
        ag_rho_g=window_mean(d["m_g"], h, grid),
        ag_fg=window_mean(d["ag_fg"], h, grid),
        u=window_mean(d["u"], h, grid),
    )


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Points ``(c_k, N R_k)`` with weight ``1/N`` each."""

    positions: np.ndarray
    radii: np.ndarray

    @property
    def N(self) -> int:
        return self.positions.size

    @property
    def weight(self) -> float:
        return 1.0 / self.N


def empirical_measure(state: MicroState) -> EmpiricalMeasure:
    if state.N < 1:
        raise ValueError("the empirical measure needs at least one bubble")
    return EmpiricalMeasure(np.array(state.c), state.N * np.array(state.R))


def measure_moment(meas: EmpiricalMeasure, beta: Callable, phi: Callable) -> float:
    """``<S, phi ⊗ beta> = (1/N) sum_k beta(N R_k) phi(c_k)``."""
    b = np.broadcast_to(np.asarray(beta(meas.radii), dtype=float), meas.radii.shape)
    f = np.broadcast_to(np.asarray(phi(meas.positions), dtype=float), meas.positions.shape)
    return float(np.sum(b * f) / meas.N)


def _trapezoid_weights(grid):
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _as_averaged(item, like: AveragedFields) -> AveragedFields:
    if isinstance(item, AveragedFields):
        return item
    if isinstance(item, MacroState):
        return macro_window_average(item, like.h, like.grid)
    raise TypeError(f"cannot compare {type(item).__name__}")


def compare_runs(micro_avg: Sequence[AveragedFields], macro: Sequence, times=None) -> dict:
    """L2 (trapezoid weights) and Linf errors per field and per time.

    ``macro`` items may be :class:`AveragedFields` or :class:`MacroState`;
    the latter are filtered with the window width and grid of the matching
    micro average before comparison.

    Returns ``{field: {"L2": array, "Linf": array}}`` plus ``"times"``.
    """
    micro_avg = list(micro_avg)
    macro = list(macro)
    if len(micro_avg) != len(macro):
        raise GridMismatch("series have different lengths")
    out = {k: {"L2": np.zeros(len(macro)), "Linf": np.zeros(len(macro))} for k in FIELDS}
    for i, (a, b) in enumerate(zip(micro_avg, macro)):
        b = _as_averaged(b, a)
        if a.grid.shape != b.grid.shape or np.any(a.grid != b.grid):
            raise GridMismatch("averaged fields live on different grids")
        w = _trapezoid_weights(a.grid)
        fa, fb = a.fields(), b.fields()
        for k in FIELDS:
            d = fa[k] - fb[k]
            out[k]["L2"][i] = float(np.sqrt(np.sum(w * d * d)))
            out[k]["Linf"][i] = float(np.max(np.abs(d)))
    out["times"] = np.asarray(times if times is not None else np.arange(len(macro)), dtype=float)
    return out


@dataclass
class ConvergenceReport:
    Ns: list
    T: float
    h: list
    errors: dict            # field -> {"L2": [...per N], "Linf": [...]}
    margins: list           # per N: {bound: margin}
    monotone: dict          # field -> bool
    rates: dict             # field -> observed log-log slope of L2 error in N
    runtime_s: list = field(default_factory=list)

    @property
    def non_monotone(self) -> bool:
        return not all(self.monotone.values())

    def to_dict(self) -> dict:
        return {
            "Ns": list(self.Ns), "T": self.T, "h": list(self.h),
            "errors": self.errors, "margins": self.margins,
            "monotone": self.monotone, "non_monotone": self.non_monotone,
            "rates": self.rates,
        }


def _micro_job(args):
    init, N, T, h, grid, params, cells, dt = args
    t0 = _time.perf_counter()
    s0 = seed_micro(init, N, cells, params)
    step_dt = dt if dt is not None else 0.9 * cfl_dt(s0)
    cfg = MicroStepConfig(dt=step_dt, cells_per_segment=cells, max_dt_shrink=256)
    traj = run(s0, cfg, T, every=max(1, int(np.ceil(T / step_dt / 20))) if T > 0 else 1)
    avg = window_average(traj[-1], h, grid)
    sb = scaling_bounds_for(s0)
    margins = {k: v.margin for k, v in check_scaling(traj[-1], sb).items()}
    mon = monitor_bounds(traj)
    margins["Q5"] = float(sb.K - mon["Q5"][-1]) if N else float("nan")
    margins["int_max_Rdot_over_R_sq"] = float(mon["int_max_Rdot_over_R_sq"][-1])
    return avg, margins, _time.perf_counter() - t0


def convergence_study(init: MacroInitData, Ns: Sequence[int], T: float, h_rule: Callable[[int], float],
                      params: PhysParams, cells_per_segment: int = 8, macro_cells: int = 400,
                      grid_points: int = 201, micro_dt: float | None = None, workers: int = 1,
                      ) -> ConvergenceReport:
    """Seed, run and average the microscopic system for each N; compare to one macro run.

    The macro solution is filtered with the same window as each micro
    average.  Monotone decrease of the L2 error in N is reported per field
    (never raised).
    """
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns[:-1], Ns[1:])):
        raise ValueError("Ns must be increasing")
    grid = np.linspace(-1.0, 1.0, grid_points)
    hs = [float(h_rule(N)) for N in Ns]
    jobs = [(init, N, T, h, grid, params, cells_per_segment, micro_dt) for N, h in zip(Ns, hs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_micro_job, jobs))
    else:
        results = [_micro_job(j) for j in jobs]

    m_final = macro_run(macro_from_init(init, macro_cells, params), T)[-1]
    errors = {k: {"L2": [], "Linf": []} for k in FIELDS}
    for avg, _, _ in results:
        e = compare_runs([avg], [m_final], [T])
        for k in FIELDS:
            errors[k]["L2"].append(float(e[k]["L2"][0]))
            errors[k]["Linf"].append(float(e[k]["Linf"][0]))
    monotone = {k: bool(np.all(np.diff(errors[k]["L2"]) < 0)) for k in FIELDS}
    logN = np.log(Ns)
    rates = {}
    for k in FIELDS:
        e = np.array(errors[k]["L2"])
        rates[k] = float(-np.polyfit(logN, np.log(e), 1)[0]) if len(Ns) > 1 and np.all(e > 0) else float("nan")
    return ConvergenceReport(
        Ns=Ns, T=float(T), h=hs, errors=errors, margins=[r[1] for r in results],
        monotone=monotone, rates=rates, runtime_s=[r[2] for r in results],
    )
