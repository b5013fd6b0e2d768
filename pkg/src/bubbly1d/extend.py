"""Globally defined extensions of the microscopic fields.

Velocity and stresses are returned as exact :class:`PiecewiseLinear`
descriptors on the whole domain.  The fluid stress inside a segment is the
continuous piecewise-linear interpolant of the cell stresses at cell
midpoints (constant on the two end half-cells), so it lies in H1 and its
trace at an interface is the stress of the adjacent cell.

The transported densities live on a fixed uniform grid and are advanced by
a semi-Lagrangian scheme: RK2 characteristic feet, linear interpolation,
Heun integration of the source along the characteristic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import MicroState, PhysParams, pressure_fluid, pressure_gas
from .micro import bubble_stresses, cell_stresses
from .piecewise import PiecewiseLinear

__all__ = [
    "ExtendedFields",
    "StressBound",
    "advect_extended_fluid_density",
    "advect_extended_gas_fields",
    "build_extended_fields",
    "extend_stress_fluid",
    "extend_stress_gas",
    "extend_velocity",
    "extended_grid",
    "fit_stress_constant",
    "fluid_stress_segments",
    "h1_norms",
    "initial_extended_densities",
    "reconstruct_gas_indicator_fields",
    "stress_extension_bound",
]


def _bubble_piece(a, b, va, vb):
    return PiecewiseLinear([a, b], [va], [vb])


def extend_velocity(state: MicroState) -> PiecewiseLinear:
    """Fluid velocity on F and ``c_dot + (R_dot / R)(x - c)`` on each bubble."""
    parts = []
    for s in range(state.N + 1):
        parts.append(PiecewiseLinear.from_nodes(state.x[s], state.u[s]))
        if s < state.N:
            c, R, cd, rd = state.c[s], state.R[s], state.c_dot[s], state.R_dot[s]
            a, b = state.x[s, -1], state.x[s + 1, 0]
            parts.append(_bubble_piece(a, b, cd + rd / R * (a - c), cd + rd / R * (b - c)))
    return PiecewiseLinear.concatenate(parts)


def fluid_stress_segments(state: MicroState) -> list[PiecewiseLinear]:
    """Continuous reconstruction of the fluid stress on every segment."""
    sig = cell_stresses(state)
    out = []
    for s in range(state.N + 1):
        x = state.x[s]
        mid = 0.5 * (x[:-1] + x[1:])
        nodes = np.r_[x[0], mid, x[-1]]
        vals = np.r_[sig[s, 0], sig[s], sig[s, -1]]
        out.append(PiecewiseLinear.from_nodes(nodes, vals))
    return out


def _interface_stresses(state: MicroState):
    sig = cell_stresses(state)
    return sig[:-1, -1], sig[1:, 0]  # Sigma_f(x_k^-), Sigma_f(x_k^+)


def extend_stress_fluid(state: MicroState) -> PiecewiseLinear:
    """Fluid stress on F, affine interpolation of the two traces on each bubble."""
    segs = fluid_stress_segments(state)
    sm, sp_ = _interface_stresses(state)
    parts = []
    for s in range(state.N + 1):
        parts.append(segs[s])
        if s < state.N:
            c, R = state.c[s], state.R[s]
            a, b = state.x[s, -1], state.x[s + 1, 0]
            mean = 0.5 * (sm[s] + sp_[s])
            slope = -(sm[s] - sp_[s]) / (2.0 * R)
            parts.append(_bubble_piece(a, b, mean + slope * (a - c), mean + slope * (b - c)))
    return PiecewiseLinear.concatenate(parts)


def extend_stress_gas(state: MicroState) -> PiecewiseLinear:
    """Bubble stresses, constant on bubbles and wall gaps, affine on interior gaps."""
    N = state.N
    if N < 1:
        raise ValueError("the gas stress extension needs at least one bubble")
    sk = bubble_stresses(state)
    lo, hi = state.x[:-1, -1], state.x[1:, 0]  # x_k^-, x_k^+
    breaks = np.empty(2 * N + 2)
    breaks[0], breaks[-1] = -1.0, 1.0
    breaks[1:-1:2] = lo
    breaks[2:-1:2] = hi
    left = np.empty(2 * N + 1)
    right = np.empty(2 * N + 1)
    left[0::2] = np.r_[sk[0], sk]          # gaps F_0 .. F_N
    right[0::2] = np.r_[sk, sk[-1]]
    left[1::2] = sk                        # bubbles
    right[1::2] = sk
    return PiecewiseLinear(breaks, left, right)


def reconstruct_gas_indicator_fields(state: MicroState):
    """Piecewise-constant ``(rho_g^(N), f_g^(N))``: ``m/(2R)`` and ``1/(2NR)`` on bubbles, 0 on F."""
    N = state.N
    if N == 0:
        z = PiecewiseLinear.constant(-1.0, 1.0, 0.0)
        return z, z
    breaks = np.empty(2 * N + 2)
    breaks[0], breaks[-1] = -1.0, 1.0
    breaks[1:-1:2] = state.x[:-1, -1]
    breaks[2:-1:2] = state.x[1:, 0]
    rho = np.zeros(2 * N + 1)
    f = np.zeros(2 * N + 1)
    rho[1::2] = state.m / (2.0 * state.R)
    f[1::2] = 1.0 / (2.0 * N * state.R)
    return PiecewiseLinear.piecewise_constant(breaks, rho), PiecewiseLinear.piecewise_constant(breaks, f)


def fluid_density_field(state: MicroState) -> PiecewiseLinear:
    """Cell densities on F, zero on bubbles."""
    parts = []
    for s in range(state.N + 1):
        parts.append(PiecewiseLinear.piecewise_constant(state.x[s], state.rho[s]))
        if s < state.N:
            parts.append(PiecewiseLinear.constant(state.x[s, -1], state.x[s + 1, 0], 0.0))
    return PiecewiseLinear.concatenate(parts)


def extended_grid(state: MicroState, min_points: int = 101) -> np.ndarray:
    """Uniform grid on [-1, 1] with spacing at most ``min_k R_k / 4``."""
    npts = min_points
    if state.N:
        npts = max(npts, int(np.ceil(2.0 / (state.R.min() / 4.0))) + 1)
    return np.linspace(-1.0, 1.0, npts)


@dataclass(frozen=True, eq=False)
class ExtendedFields:
    """Extended fields at one time: exact descriptors plus grid samples.

    Any descriptor may be ``None`` when it is not needed; the transported
    densities are carried as grid samples only.
    """

    time: float
    grid: np.ndarray
    u: PiecewiseLinear | None = None
    sigma_f: PiecewiseLinear | None = None
    sigma_g: PiecewiseLinear | None = None
    rho_f: np.ndarray | None = None
    rho_g: np.ndarray | None = None
    f_g: np.ndarray | None = None

    def _sample(self, d):
        return None if d is None else d(self.grid)

    @property
    def u_tilde(self):
        return self._sample(self.u)

    @property
    def sigma_f_tilde(self):
        return self._sample(self.sigma_f)

    @property
    def sigma_g_tilde(self):
        return self._sample(self.sigma_g)


def build_extended_fields(state: MicroState, grid=None, rho_f=None, rho_g=None, f_g=None) -> ExtendedFields:
    grid = extended_grid(state) if grid is None else np.asarray(grid, dtype=float)
    return ExtendedFields(
        time=state.time, grid=grid,
        u=extend_velocity(state), sigma_f=extend_stress_fluid(state),
        sigma_g=extend_stress_gas(state) if state.N else None,
        rho_f=rho_f, rho_g=rho_g, f_g=f_g,
    )


def initial_extended_densities(state: MicroState, grid):
    """Initial ``(rho_f, rho_g, f_g)`` on ``grid``.

    Each field equals its native value on its own phase and is linearly
    interpolated across the other phase (constant next to the walls).
    """
    grid = np.asarray(grid, dtype=float)
    rho_f = np.empty_like(grid)
    on_fluid = np.zeros(grid.shape, dtype=bool)
    for s in range(state.N + 1):
        x = state.x[s]
        inside = (grid >= x[0]) & (grid <= x[-1])
        j = np.clip(np.searchsorted(x, grid[inside], side="right") - 1, 0, x.size - 2)
        rho_f[inside] = state.rho[s, j]
        on_fluid |= inside
    if state.N:
        # across bubbles: linear between the two adjacent cell densities
        lo, hi = state.x[:-1, -1], state.x[1:, 0]
        xs = np.ravel(np.column_stack([lo, hi]))
        vs = np.ravel(np.column_stack([state.rho[:-1, -1], state.rho[1:, 0]]))
        rho_f[~on_fluid] = np.interp(grid[~on_fluid], xs, vs)
        rg_b = state.m / (2.0 * state.R)
        fg_b = 1.0 / (2.0 * state.N * state.R)
        rho_g = np.interp(grid, xs, np.repeat(rg_b, 2))
        f_g = np.interp(grid, xs, np.repeat(fg_b, 2))
    else:
        rho_g = np.zeros_like(grid)
        f_g = np.zeros_like(grid)
    return rho_f, rho_g, f_g


def _feet(grid, u_old: PiecewiseLinear, u_new: PiecewiseLinear, dt):
    x_star = grid - dt * u_new(grid)
    feet = grid - 0.5 * dt * (u_new(grid) + u_old(np.clip(x_star, -1.0, 1.0)))
    if feet.min() < -1.0 - 1e-12 or feet.max() > 1.0 + 1e-12:
        raise RuntimeError("characteristic left the domain")
    return np.clip(feet, -1.0, 1.0)


def advect_extended_fluid_density(rho0, trajectory: Sequence[ExtendedFields], params: PhysParams):
    """Transport ``rho`` with ``d rho/dt = -(rho / mu_f)(Sigma_f + p_f(rho))`` along ``u``.

    Parameters
    ----------
    rho0 : array_like
        Initial samples on the common grid of ``trajectory``.
    trajectory : sequence of ExtendedFields
        Fields with ``u`` and ``sigma_f`` descriptors at increasing times.

    Returns
    -------
    ndarray, shape (len(trajectory), npts)
    """
    grid = trajectory[0].grid
    rho = np.array(rho0, dtype=float)
    out = np.empty((len(trajectory), grid.size))
    out[0] = rho

    def src(r, sig):
        return -(r / params.mu_f) * (sig + pressure_fluid(r, params))

    for i in range(1, len(trajectory)):
        old, new = trajectory[i - 1], trajectory[i]
        dt = new.time - old.time
        feet = _feet(grid, old.u, new.u, dt)
        r0 = np.interp(feet, grid, rho)
        k1 = src(r0, old.sigma_f(feet))
        k2 = src(r0 + dt * k1, new.sigma_f(grid))
        rho = r0 + 0.5 * dt * (k1 + k2)
        out[i] = rho
    return out


def advect_extended_gas_fields(rho_g0, f_g0, trajectory: Sequence[ExtendedFields], params: PhysParams):
    """Transport the pair ``(rho_g, f_g)`` with the common rate
    ``-(Sigma_g + p_g(rho_g) + gamma_s_bar f_g) / mu_g``.

    Returns two arrays of shape ``(len(trajectory), npts)``.
    """
    grid = trajectory[0].grid
    r = np.array(rho_g0, dtype=float)
    f = np.array(f_g0, dtype=float)
    out_r = np.empty((len(trajectory), grid.size))
    out_f = np.empty_like(out_r)
    out_r[0], out_f[0] = r, f

    def rate(r_, f_, sig):
        return -(sig + pressure_gas(r_, params) + params.gamma_s_bar * f_) / params.mu_g

    for i in range(1, len(trajectory)):
        old, new = trajectory[i - 1], trajectory[i]
        dt = new.time - old.time
        feet = _feet(grid, old.u, new.u, dt)
        r0 = np.interp(feet, grid, r)
        f0 = np.interp(feet, grid, f)
        a1 = rate(r0, f0, old.sigma_g(feet))
        rp, fp = r0 + dt * a1 * r0, f0 + dt * a1 * f0
        a2 = rate(rp, fp, new.sigma_g(grid))
        r = r0 + 0.5 * dt * (a1 * r0 + a2 * rp)
        f = f0 + 0.5 * dt * (a1 * f0 + a2 * fp)
        out_r[i], out_f[i] = r, f
    return out_r, out_f


def _norms(d: PiecewiseLinear) -> dict:
    l2 = d.l2_norm_sq()
    semi = d.h1_seminorm_sq()
    return {"L2": float(np.sqrt(l2)), "H1_semi": float(np.sqrt(semi)), "H1": float(np.sqrt(l2 + semi))}


def h1_norms(fields: ExtendedFields) -> dict:
    """L2, H1-seminorm and H1 norms of the extended stresses and fluid density.

    Descriptors are integrated exactly; the sampled density is treated as
    its piecewise-linear interpolant on the grid.
    """
    out = {}
    if fields.sigma_f is not None:
        out["sigma_f"] = _norms(fields.sigma_f)
    if fields.sigma_g is not None:
        out["sigma_g"] = _norms(fields.sigma_g)
    if fields.rho_f is not None:
        out["rho_f"] = _norms(PiecewiseLinear.from_nodes(fields.grid, fields.rho_f))
    return out


class StressBound(NamedTuple):
    lhs: float
    bracket: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.bracket


def stress_extension_bound(state: MicroState) -> StressBound:
    """Both sides of the squared H1 bound of the extended fluid stress.

    ``lhs`` is ``||Sigma_f~||^2_{H1(Omega)}``; ``bracket`` is
    ``||Sigma_f||^2_{H1(F)} + sum m^2 (R_dd^2 R + c_dd^2 (1/R + R))
    + sum (mu_g^2 R_dot^2 / R + kappa^2 / R)`` with the accelerations
    defined from the bubble Newton laws.
    """
    p = state.params
    lhs = extend_stress_fluid(state).h1_norm_sq()
    bracket = sum(s.h1_norm_sq() for s in fluid_stress_segments(state))
    if state.N:
        sm, sp_ = _interface_stresses(state)
        sk = bubble_stresses(state)
        m, R = state.m, state.R
        c_dd = (sp_ - sm) / m
        R_dd = 3.0 * (sm + sp_ - 2.0 * sk) / m
        bracket += float(np.sum(m**2 * (R_dd**2 * R + c_dd**2 * (1.0 / R + R))))
        bracket += float(np.sum((p.mu_g**2 * state.R_dot**2 + state.kappa**2) / R))
    return StressBound(lhs, bracket)


def fit_stress_constant(states) -> float:
    """Smallest C with ``lhs <= C * bracket`` over the given states."""
    return max(stress_extension_bound(s).ratio for s in states)
