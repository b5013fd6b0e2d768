"""Physical parameters, constitutive laws and state containers.

The microscopic state is stored as a structure of arrays: every fluid
segment carries the same number of Lagrangian cells, so node data live in
``(N + 1, n + 1)`` arrays and cell data in ``(N + 1, n)`` arrays, segment
``s`` being the fluid interval between bubble ``s`` and bubble ``s + 1``
(the walls at -1 and 1 close the first and last segments).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Bubble",
    "BoundStatus",
    "CollisionError",
    "DegenerateCell",
    "FluidSegment",
    "InvalidStateError",
    "MicroState",
    "NonPositiveRadius",
    "PhysParams",
    "ScalingBounds",
    "SolverError",
    "bubble_kappa",
    "bubble_total_pressure",
    "check_scaling",
    "internal_energy_fluid",
    "pressure_fluid",
    "pressure_fluid_derivative",
    "pressure_gas",
    "sound_speed_fluid",
]


class InvalidStateError(ValueError):
    """A configuration violates an ordering/continuity/positivity invariant."""


class NonPositiveRadius(ValueError):
    pass


class DegenerateCell(ValueError):
    pass


class CollisionError(RuntimeError):
    """A bubble radius or a fluid gap would become non-positive."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhysParams:
    """Fluid/gas constants.

    ``gamma_s_bar`` is the N-independent surface tension; a configuration
    with N bubbles uses ``gamma_s = gamma_s_bar / N``.
    """

    mu_f: float = 1.0
    mu_g: float = 1.0
    kappa_f: float = 1.0
    gamma_f: float = 2.0
    a_g: float = 1.0
    gamma_s_bar: float = 0.0

    def __post_init__(self):
        for name in ("mu_f", "mu_g", "kappa_f", "a_g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.gamma_f > 1:
            raise ValueError(f"gamma_f must be > 1, got {self.gamma_f}")
        if not self.gamma_s_bar >= 0:
            raise ValueError(f"gamma_s_bar must be >= 0, got {self.gamma_s_bar}")

    def gamma_s(self, N: int) -> float:
        return self.gamma_s_bar / N if N > 0 else 0.0


def pressure_fluid(rho, params: PhysParams):
    """Isentropic fluid pressure ``kappa_f * rho**gamma_f``."""
    return params.kappa_f * np.power(rho, params.gamma_f)


def pressure_fluid_derivative(rho, params: PhysParams):
    return params.kappa_f * params.gamma_f * np.power(rho, params.gamma_f - 1.0)


def sound_speed_fluid(rho, params: PhysParams):
    return np.sqrt(pressure_fluid_derivative(rho, params))


def internal_energy_fluid(rho, params: PhysParams):
    """Volumic internal energy q with ``q'(s) s - q(s) = p(s)``."""
    return params.kappa_f * np.power(rho, params.gamma_f) / (params.gamma_f - 1.0)


def pressure_gas(rho, params: PhysParams):
    """Isothermal gas law, normalised so that ``p_g(m / 2R) = a_g**2 m / R``."""
    return 2.0 * params.a_g**2 * np.asarray(rho)


def bubble_kappa(m, N: int, params: PhysParams):
    return params.a_g**2 * np.asarray(m) + 0.5 * params.gamma_s(N)


@dataclass(frozen=True)
class Bubble:
    c: float
    R: float
    c_dot: float
    R_dot: float
    m: float
    kappa_k: float


def bubble_total_pressure(b: Bubble) -> float:
    """Gas pressure plus half the surface-tension force, ``kappa_k / R``."""
    if not b.R > 0:
        raise NonPositiveRadius(f"bubble radius must be > 0, got {b.R}")
    return b.kappa_k / b.R


@dataclass(frozen=True)
class FluidSegment:
    node_positions: np.ndarray
    node_velocities: np.ndarray
    cell_masses: np.ndarray

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.node_positions)

    @property
    def cell_densities(self) -> np.ndarray:
        return self.cell_masses / self.cell_lengths


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


def state_margins(x, u, cell_mass, c, R, c_dot, R_dot, m, kappa, params, atol=1e-12):
    """Return ``{invariant: worst margin}`` for every invariant that applies.

    Margins are signed so that a negative (or NaN) value means violation.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    N = len(c)
    out = {}

    def record(name, margin):
        out[name] = float(margin)

    if x.shape != (N + 1, x.shape[1]) or u.shape != x.shape or np.shape(cell_mass) != (N + 1, x.shape[1] - 1):
        out["shapes"] = -1.0
        return out
    record("wall_left", -abs(x[0, 0] + 1.0) + atol)
    record("wall_right", -abs(x[N, -1] - 1.0) + atol)
    record("cell_ordering", float(np.min(np.diff(x, axis=1))))
    record("cell_mass_positive", float(np.min(cell_mass)))
    if N:
        R = np.asarray(R, dtype=float)
        record("radius_positive", float(np.min(R)))
        record("bubble_mass_positive", float(np.min(m)))
        left = np.asarray(c) - R
        right = np.asarray(c) + R
        record("interface_left", atol - float(np.max(np.abs(x[:-1, -1] - left))))
        record("interface_right", atol - float(np.max(np.abs(x[1:, 0] - right))))
        scale = 1.0 + float(np.max(np.abs(u)))
        record("velocity_continuity_left",
               atol * scale - float(np.max(np.abs(u[:-1, -1] - (np.asarray(c_dot) - np.asarray(R_dot))))))
        record("velocity_continuity_right",
               atol * scale - float(np.max(np.abs(u[1:, 0] - (np.asarray(c_dot) + np.asarray(R_dot))))))
        expected = bubble_kappa(m, N, params)
        record("kappa_consistency", 1e-12 * float(np.max(np.abs(expected))) - float(np.max(np.abs(np.asarray(kappa) - expected))))
    record("wall_velocity", atol - max(abs(u[0, 0]), abs(u[N, -1])))
    return out


def state_violations(*args, **kwargs):
    """Violated subset of :func:`state_margins`; empty for a valid state."""
    return {k: v for k, v in state_margins(*args, **kwargs).items() if not v >= 0}


@dataclass(frozen=True, eq=False)
class MicroState:
    """Microscopic configuration: N + 1 Lagrangian fluid segments and N bubbles.

    Construction validates the global ordering, interface coincidence,
    velocity continuity, no-slip walls and ``kappa_k`` consistency, and
    raises :class:`InvalidStateError` otherwise.  Arrays are read-only.
    """

    time: float
    params: PhysParams
    x: np.ndarray
    u: np.ndarray
    cell_mass: np.ndarray
    c: np.ndarray
    R: np.ndarray
    c_dot: np.ndarray
    R_dot: np.ndarray
    m: np.ndarray
    kappa: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        for name in ("x", "u", "cell_mass", "c", "R", "c_dot", "R_dot", "m", "kappa"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.validate:
            bad = state_violations(self.x, self.u, self.cell_mass, self.c, self.R, self.c_dot,
                                   self.R_dot, self.m, self.kappa, self.params)
            if bad:
                raise InvalidStateError(f"invalid micro state: {bad}")

    @classmethod
    def from_parts(cls, segments, bubbles, params, time=0.0):
        """Build from explicit :class:`FluidSegment` and :class:`Bubble` lists."""
        segments = list(segments)
        bubbles = list(bubbles)
        if len(segments) != len(bubbles) + 1:
            raise InvalidStateError("need exactly N + 1 segments for N bubbles")
        sizes = {len(s.node_positions) for s in segments}
        if len(sizes) != 1:
            raise InvalidStateError("all segments must have the same number of cells")
        return cls(
            time=time, params=params,
            x=np.stack([s.node_positions for s in segments]),
            u=np.stack([s.node_velocities for s in segments]),
            cell_mass=np.stack([s.cell_masses for s in segments]),
            c=[b.c for b in bubbles], R=[b.R for b in bubbles],
            c_dot=[b.c_dot for b in bubbles], R_dot=[b.R_dot for b in bubbles],
            m=[b.m for b in bubbles], kappa=[b.kappa_k for b in bubbles],
        )

    @property
    def N(self) -> int:
        return len(self.c)

    @property
    def cells_per_segment(self) -> int:
        return self.x.shape[1] - 1

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x, axis=1)

    @property
    def rho(self) -> np.ndarray:
        return self.cell_mass / self.dx

    @property
    def gap_lengths(self) -> np.ndarray:
        """Lengths of the fluid intervals F_0 .. F_N."""
        return self.x[:, -1] - self.x[:, 0]

    @property
    def segments(self) -> list[FluidSegment]:
        return [FluidSegment(self.x[s], self.u[s], self.cell_mass[s]) for s in range(self.N + 1)]

    @property
    def bubbles(self) -> list[Bubble]:
        return [Bubble(*(float(a[k]) for a in (self.c, self.R, self.c_dot, self.R_dot, self.m, self.kappa)))
                for k in range(self.N)]

    def replace(self, **changes) -> "MicroState":
        kw = {name: getattr(self, name) for name in
              ("time", "params", "x", "u", "cell_mass", "c", "R", "c_dot", "R_dot", "m", "kappa")}
        kw.update(changes)
        return MicroState(**kw)


@dataclass(frozen=True)
class ScalingBounds:
    M_inf: float
    d_inf: float
    rho_under: float
    rho_over: float
    K: float

    def __post_init__(self):
        for name in ("M_inf", "d_inf", "rho_under", "rho_over", "K"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


class BoundStatus(NamedTuple):
    margin: float
    satisfied: bool


def _status(margin: float) -> BoundStatus:
    margin = float(margin)
    return BoundStatus(margin, bool(margin >= 0))


def check_scaling(state: MicroState, sb: ScalingBounds) -> dict[str, BoundStatus]:
    """Worst margins of the scaling bounds on one state (never raises).

    Keys: ``IC0`` (N m_k and N kappa_k within [M_inf, 1/M_inf]), ``Q1``
    (N R_k within [d_inf, 1/d_inf]), ``Q2`` (N |F_k| within the same range,
    all N + 1 fluid intervals), ``Q3`` (fluid density within
    [rho_under, rho_over]) and ``Q4`` (K minus the velocity H1 functional).
    """
    N = state.N
    out = {}
    if N:
        Nm = N * state.m
        Nk = N * state.kappa
        out["IC0"] = _status(min(Nm.min() - sb.M_inf, 1 / sb.M_inf - Nm.max(),
                                 Nk.min() - sb.M_inf, 1 / sb.M_inf - Nk.max()))
        NR = N * state.R
        out["Q1"] = _status(min(NR.min() - sb.d_inf, 1 / sb.d_inf - NR.max()))
        NF = N * state.gap_lengths
        out["Q2"] = _status(min(NF.min() - sb.d_inf, 1 / sb.d_inf - NF.max()))
    rho = state.rho
    out["Q3"] = _status(min(rho.min() - sb.rho_under, sb.rho_over - rho.max()))
    slope = np.diff(state.u, axis=1) / state.dx
    q4 = 0.5 * state.params.mu_f * np.sum(slope**2 * state.dx)
    if N:
        with np.errstate(divide="ignore", invalid="ignore"):
            q4 += state.params.mu_g * np.sum(state.R_dot**2 / state.R)
        if not np.isfinite(q4):
            q4 = np.inf
    out["Q4"] = _status(sb.K - q4)
    return out
