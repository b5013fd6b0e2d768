"""Semi-implicit Lagrangian integrator for the N-bubble fluid system.

Unknowns of the momentum solve are the interior node velocities of every
fluid segment and, per bubble, the pair ``(c_dot, R_dot)``; the two
interface nodes of bubble k carry ``c_dot -/+ R_dot``, which makes velocity
continuity hold by construction.  With the block ordering

    seg 0 interior nodes, (c_dot_0, R_dot_0), seg 1 interior nodes, ...

the viscous/mass matrix is symmetric positive definite with half bandwidth 2.
The scheme is a variational discretization: pressures enter through the
transposed cell-length operator, the gas term ``2 kappa / R`` on the radial
row, and lumped node masses (half of each adjacent cell) on the velocity rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solveh_banded

from .core import (
    Bubble,
    CollisionError,
    DegenerateCell,
    FluidSegment,
    MicroState,
    NonPositiveRadius,
    PhysParams,
    SolverError,
    internal_energy_fluid,
    pressure_fluid,
    sound_speed_fluid,
)

__all__ = [
    "EnergyReport",
    "MicroStepConfig",
    "advance",
    "bubble_stress",
    "cfl_dt",
    "energy_slack",
    "face_stress",
    "monitor_bounds",
    "regularity_functional",
    "run",
    "step",
    "total_energy",
]


@dataclass(frozen=True)
class MicroStepConfig:
    """Time-stepping options.

    ``max_dt_shrink`` caps how many CFL sub-steps one requested step may be
    split into before the run is declared unstable.
    """

    dt: float
    cells_per_segment: int = 20
    theta: float = 1.0
    max_dt_shrink: int = 64
    cfl_guard: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.cells_per_segment < 2:
            raise ValueError("cells_per_segment must be >= 2")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.max_dt_shrink < 1:
            raise ValueError("max_dt_shrink must be >= 1")


@dataclass(frozen=True)
class EnergyReport:
    kinetic_fluid: float
    internal_fluid: float
    kinetic_bubbles: float
    log_bubbles: float
    total: float
    dissipation_fluid: float
    dissipation_bubbles: float

    @property
    def dissipation(self) -> float:
        return self.dissipation_fluid + self.dissipation_bubbles


# -- local laws -------------------------------------------------------------

def face_stress(segment: FluidSegment, cell_index: int, params: PhysParams) -> float:
    """Cell stress ``mu_f du/dx - p_f(rho)`` of one Lagrangian cell."""
    x = segment.node_positions
    u = segment.node_velocities
    j = cell_index
    dx = x[j + 1] - x[j]
    if not dx > 0:
        raise DegenerateCell(f"cell {j} has length {dx}")
    rho = segment.cell_masses[j] / dx
    return params.mu_f * (u[j + 1] - u[j]) / dx - float(pressure_fluid(rho, params))


def cell_stresses(state: MicroState) -> np.ndarray:
    """All cell stresses, shape ``(N + 1, n)``."""
    dx = state.dx
    return state.params.mu_f * np.diff(state.u, axis=1) / dx - pressure_fluid(state.rho, state.params)


def bubble_stress(b: Bubble, params: PhysParams) -> float:
    """Gas stress ``mu_g R_dot / R - kappa / R``."""
    if not b.R > 0:
        raise NonPositiveRadius(f"bubble radius must be > 0, got {b.R}")
    return (params.mu_g * b.R_dot - b.kappa_k) / b.R


def bubble_stresses(state: MicroState) -> np.ndarray:
    return (state.params.mu_g * state.R_dot - state.kappa) / state.R


# -- linear algebra skeleton --------------------------------------------------

def _gram_scatter(B, bw: int, ndof: int):
    """Scatter plan for the upper band of ``B.T @ diag(w) @ B``.

    Returns ``(src, coef, flat)`` such that the band is
    ``bincount(flat, coef * w[src])`` reshaped to ``(bw + 1, ndof)``.
    """
    B = B.tocsr()
    src, coef, flat = [], [], []
    for r in range(B.shape[0]):
        lo, hi = B.indptr[r], B.indptr[r + 1]
        cols, vals = B.indices[lo:hi], B.data[lo:hi]
        for ca, ga in zip(cols, vals):
            for cb, gb in zip(cols, vals):
                if ca <= cb:
                    src.append(r)
                    coef.append(ga * gb)
                    flat.append((bw + ca - cb) * ndof + cb)
    return np.array(src, dtype=int), np.array(coef), np.array(flat, dtype=int)


@lru_cache(maxsize=64)
def _operators(N: int, n: int):
    """Sparse prolongation/difference operators and banded scatter plans."""
    block = n + 1
    ndof = (N + 1) * (n - 1) + 2 * N
    nnode = (N + 1) * (n + 1)
    rows, cols, vals = [], [], []
    for s in range(N + 1):
        base = s * (n + 1)
        for i in range(1, n):
            rows.append(base + i)
            cols.append(s * block + i - 1)
            vals.append(1.0)
        if s < N:  # node (s, n) = c_dot - R_dot of bubble s
            cd, rd = s * block + n - 1, s * block + n
            rows += [base + n, base + n]
            cols += [cd, rd]
            vals += [1.0, -1.0]
            nxt = (s + 1) * (n + 1)  # node (s + 1, 0) = c_dot + R_dot
            rows += [nxt, nxt]
            cols += [cd, rd]
            vals += [1.0, 1.0]
    P = sp.csr_matrix((vals, (rows, cols)), shape=(nnode, ndof))
    # cell (s, j) spans nodes (s, j), (s, j + 1)
    cell = np.arange((N + 1) * n)
    s_idx, j_idx = np.divmod(cell, n)
    left = s_idx * (n + 1) + j_idx
    D = sp.csr_matrix(
        (np.r_[-np.ones(cell.size), np.ones(cell.size)], (np.r_[cell, cell], np.r_[left, left + 1])),
        shape=(cell.size, nnode),
    )
    G = (D @ P).tocsr()
    cdot = np.array([s * block + n - 1 for s in range(N)], dtype=int)
    rdot = cdot + 1
    pattern = (G.T @ G + P.T @ P).tocoo()
    bw = max(int(np.max(np.abs(pattern.row - pattern.col))), 1)
    return {
        "P": P, "G": G, "GT": G.T.tocsr(), "PT": P.T.tocsr(),
        "cdot": cdot, "rdot": rdot, "bw": bw, "ndof": ndof,
        "mass_plan": _gram_scatter(P, bw, ndof),
        "visc_plan": _gram_scatter(G, bw, ndof),
    }


def _node_masses(state: MicroState) -> np.ndarray:
    cm = state.cell_mass
    w = np.zeros(state.x.shape)
    w[:, :-1] += 0.5 * cm
    w[:, 1:] += 0.5 * cm
    return w.ravel()


def _band(plan, w, bw, ndof):
    src, coef, flat = plan
    return np.bincount(flat, coef * w[src], minlength=(bw + 1) * ndof).reshape(bw + 1, ndof)


def _dofs(state: MicroState, ops) -> np.ndarray:
    N, n = state.N, state.cells_per_segment
    v = np.empty(ops["ndof"])
    block = n + 1
    for s in range(N + 1):
        v[s * block:s * block + n - 1] = state.u[s, 1:n]
    if N:
        v[ops["cdot"]] = state.c_dot
        v[ops["rdot"]] = state.R_dot
    return v


def step(state: MicroState, cfg: MicroStepConfig, dt: float | None = None) -> MicroState:
    """Advance one semi-implicit step of size ``dt`` (default ``cfg.dt``).

    Viscous terms are weighted ``theta`` at the new level, pressure and the
    bubble term ``kappa / R`` are explicit.  Cell masses and bubble masses
    are copied unchanged.
    """
    dt = cfg.dt if dt is None else dt
    N, n = state.N, state.cells_per_segment
    p = state.params
    ops = _operators(N, n)
    P, G, GT, PT = ops["P"], ops["G"], ops["GT"], ops["PT"]
    cdot, rdot, bw, ndof = ops["cdot"], ops["rdot"], ops["bw"], ops["ndof"]
    w_mass = _node_masses(state)
    w_visc = p.mu_f / state.dx.ravel()
    v0 = _dofs(state, ops)

    Mv0 = PT @ (w_mass * (P @ v0))
    Kv0 = GT @ (w_visc * (G @ v0))
    force = GT @ pressure_fluid(state.rho, p).ravel()
    theta = cfg.theta
    ab = _band(ops["mass_plan"], w_mass, bw, ndof) + (theta * dt) * _band(ops["visc_plan"], w_visc, bw, ndof)
    if N:
        bub_visc = 2.0 * p.mu_g / state.R
        ab[bw, cdot] += state.m
        ab[bw, rdot] += state.m / 3.0 + theta * dt * bub_visc
        Mv0[cdot] += state.m * v0[cdot]
        Mv0[rdot] += state.m / 3.0 * v0[rdot]
        Kv0[rdot] += bub_visc * v0[rdot]
        force[rdot] += 2.0 * state.kappa / state.R
    rhs = Mv0 + dt * force
    if theta < 1.0:
        rhs -= (1.0 - theta) * dt * Kv0
    try:
        v1 = solveh_banded(ab, rhs, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SolverError(f"momentum solve failed at t={state.time}: {exc}") from exc
    if not np.all(np.isfinite(v1)):
        raise SolverError(f"non-finite velocities at t={state.time}")

    u_new = (P @ v1).reshape(N + 1, n + 1)
    x_new = state.x + dt * u_new
    c_new = state.c + dt * v1[cdot] if N else state.c.copy()
    R_new = state.R + dt * v1[rdot] if N else state.R.copy()
    if N:
        if np.any(R_new <= 0):
            raise CollisionError(f"bubble radius would vanish at t={state.time + dt}")
        x_new[:-1, -1] = c_new - R_new
        x_new[1:, 0] = c_new + R_new
        u_new[:-1, -1] = v1[cdot] - v1[rdot]
        u_new[1:, 0] = v1[cdot] + v1[rdot]
    x_new[0, 0] = -1.0
    x_new[-1, -1] = 1.0
    u_new[0, 0] = 0.0
    u_new[-1, -1] = 0.0
    if np.any(np.diff(x_new, axis=1) <= 0):
        raise CollisionError(f"fluid cell would collapse at t={state.time + dt}")
    return MicroState(
        time=state.time + dt, params=state.params, x=x_new, u=u_new,
        cell_mass=state.cell_mass, c=c_new, R=R_new,
        c_dot=v1[cdot] if N else state.c_dot, R_dot=v1[rdot] if N else state.R_dot,
        m=state.m, kappa=state.kappa,
    )


def cfl_dt(state: MicroState, safety: float = 0.25) -> float:
    """Explicit-pressure limit ``safety * min dx / max(|u| + c)``."""
    speed = np.max(np.abs(state.u)) + np.max(sound_speed_fluid(state.rho, state.params))
    return safety * float(np.min(state.dx)) / float(speed)


def advance(state: MicroState, cfg: MicroStepConfig) -> MicroState:
    """One step of size ``cfg.dt``, split into CFL sub-steps if needed."""
    k = 1
    if cfg.cfl_guard:
        k = max(1, math.ceil(cfg.dt / cfl_dt(state)))
        if k > cfg.max_dt_shrink:
            raise SolverError(f"dt={cfg.dt} exceeds the CFL limit by a factor {k} at t={state.time}")
    h = cfg.dt / k
    for _ in range(k):
        state = step(state, cfg, h)
    return state


def run(state: MicroState, cfg: MicroStepConfig, T: float, every: int = 1) -> list[MicroState]:
    """Integrate to time ``T`` with a uniform step not larger than ``cfg.dt``.

    Returns the states at every ``every``-th step, first and last included.
    """
    nsteps = max(0, math.ceil(T / cfg.dt - 1e-12))
    if nsteps == 0:
        return [state]
    local = MicroStepConfig(T / nsteps, cfg.cells_per_segment, cfg.theta, cfg.max_dt_shrink, cfg.cfl_guard)
    out = [state]
    for i in range(1, nsteps + 1):
        state = advance(state, local)
        if i % every == 0 or i == nsteps:
            out.append(state)
    return out


# -- diagnostics ----------------------------------------------------------------

def total_energy(state: MicroState, R_ref: float = 1.0) -> EnergyReport:
    """Discrete energy and dissipation rate of a state."""
    if not R_ref > 0:
        raise ValueError("R_ref must be > 0")
    p = state.params
    w = _node_masses(state)
    kin_f = 0.5 * float(np.dot(w, state.u.ravel() ** 2))
    internal = float(np.sum(internal_energy_fluid(state.rho, p) * state.dx))
    kin_b = float(np.sum(state.m * (0.5 * state.c_dot**2 + state.R_dot**2 / 6.0)))
    log_b = float(-2.0 * np.sum(state.kappa * np.log(state.R / R_ref)))
    dis_f = float(p.mu_f * np.sum(np.diff(state.u, axis=1) ** 2 / state.dx))
    dis_b = float(2.0 * p.mu_g * np.sum(state.R_dot**2 / state.R))
    return EnergyReport(kin_f, internal, kin_b, log_b, kin_f + internal + kin_b + log_b, dis_f, dis_b)


def energy_slack(trajectory, R_ref: float = 1.0) -> np.ndarray:
    """Per-step defect ``E^{n+1} - E^n + dt D^{n+1}`` of the energy identity."""
    reps = [total_energy(s, R_ref) for s in trajectory]
    E = np.array([r.total for r in reps])
    D = np.array([r.dissipation for r in reps])
    t = np.array([s.time for s in trajectory])
    return E[1:] - E[:-1] + np.diff(t) * D[1:]


def regularity_functional(state: MicroState) -> float:
    """Bracket ``int(mu_f |u_x|^2 / 2 - p u_x) + sum(mu_g R_dot^2 / R - 2 kappa R_dot / R)``."""
    p = state.params
    slope = np.diff(state.u, axis=1) / state.dx
    val = float(np.sum((0.5 * p.mu_f * slope**2 - pressure_fluid(state.rho, p) * slope) * state.dx))
    if state.N:
        val += float(np.sum((p.mu_g * state.R_dot**2 - 2.0 * state.kappa * state.R_dot) / state.R))
    return val


def monitor_bounds(trajectory) -> dict[str, np.ndarray]:
    """Per-state monitored quantities along a trajectory.

    Returns arrays keyed by ``t``, ``max_Rdot_over_R``, ``int_max_Rdot_over_R_sq``
    (running time integral of its square), ``min_gap``, ``min_radius``,
    ``rho_min``, ``rho_max``, ``NR_min``, ``NR_max``, ``NF_min``, ``NF_max``,
    ``Q4`` and ``Q5`` (running integral of the extended-stress H1 norms plus
    bubble accelerations, the latter by finite differences).
    """
    from .extend import extend_stress_fluid, extend_stress_gas

    traj = list(trajectory)
    keys = ("t", "max_Rdot_over_R", "min_gap", "min_radius", "rho_min", "rho_max",
            "NR_min", "NR_max", "NF_min", "NF_max", "Q4", "Q5_integrand")
    out = {k: np.zeros(len(traj)) for k in keys}
    for i, s in enumerate(traj):
        N = s.N
        rep = total_energy(s)
        out["t"][i] = s.time
        out["rho_min"][i] = s.rho.min()
        out["rho_max"][i] = s.rho.max()
        out["min_gap"][i] = s.gap_lengths.min()
        out["NF_min"][i] = N * s.gap_lengths.min()
        out["NF_max"][i] = N * s.gap_lengths.max()
        out["Q4"][i] = 0.5 * rep.dissipation_fluid + 0.5 * rep.dissipation_bubbles
        if N:
            out["max_Rdot_over_R"][i] = np.max(np.abs(s.R_dot / s.R))
            out["min_radius"][i] = s.R.min()
            out["NR_min"][i] = N * s.R.min()
            out["NR_max"][i] = N * s.R.max()
            q5 = extend_stress_fluid(s).h1_norm_sq() + extend_stress_gas(s).h1_norm_sq()
            if i > 0:
                dt = s.time - traj[i - 1].time
                acc_c = (s.c_dot - traj[i - 1].c_dot) / dt
                acc_R = (s.R_dot - traj[i - 1].R_dot) / dt
                q5 += float(np.sum(s.m * (acc_c**2 + acc_R**2)))
            out["Q5_integrand"][i] = q5
        else:
            out["min_radius"][i] = np.nan
    dt = np.diff(out["t"])
    out["int_max_Rdot_over_R_sq"] = np.r_[0.0, np.cumsum(dt * out["max_Rdot_over_R"][1:] ** 2)]
    out["Q5"] = np.r_[0.0, np.cumsum(dt * out["Q5_integrand"][1:])]
    return out
