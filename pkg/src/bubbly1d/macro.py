"""Staggered finite-volume solver for the averaged two-phase model.

Cell unknowns: ``alpha_f``, ``ag_fg = alpha_g f_g``, ``m_f = alpha_f rho_f``
and ``m_g = alpha_g rho_g``; the velocity lives on the M + 1 faces with
``u = 0`` at both walls.  ``alpha_g`` is never stored, it is ``1 - alpha_f``.

One step:

1. first-order upwind update of the conservative cell fields (zero flux
   through the walls);
2. ``alpha_f`` in conservative form with the explicit source
   ``(alpha_f / mu_f)(Sigma + p_f)``;
3. momentum on faces: upwind convection, explicit pressure part of the
   mixture stress, backward-Euler viscous part with the effective viscosity;
4. clamp of ``alpha_f`` to ``[eps, 1 - eps]``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from scipy.linalg import solve_banded

from .core import PhysParams, SolverError, pressure_fluid, pressure_fluid_derivative, pressure_gas
from .piecewise import PiecewiseLinear

__all__ = [
    "MacroState",
    "NonPositiveMass",
    "consistency_check",
    "macro_cfl_dt",
    "macro_from_init",
    "macro_run",
    "macro_step",
    "mixture_stress",
    "relaxation_term",
]

log = logging.getLogger(__name__)

ALPHA_EPS = 1e-6


class NonPositiveMass(RuntimeError):
    pass


def _ratio(a, b):
    """``a / b`` with 0 where the phase is absent."""
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


@dataclass(frozen=True, eq=False)
class MacroState:
    time: float
    params: PhysParams
    alpha_f: np.ndarray
    ag_fg: np.ndarray
    m_f: np.ndarray
    m_g: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.alpha_f).size
        for name in ("alpha_f", "ag_fg", "m_f", "m_g", "u"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.u.shape != (M + 1,):
            raise ValueError("u must have one value per face")
        if self.u[0] != 0.0 or self.u[-1] != 0.0:
            raise ValueError("u must vanish at the walls")

    @property
    def M(self) -> int:
        return self.alpha_f.size

    @property
    def dx(self) -> float:
        return 2.0 / self.M

    @property
    def faces(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.M + 1)

    @property
    def centers(self) -> np.ndarray:
        f = self.faces
        return 0.5 * (f[:-1] + f[1:])

    @property
    def alpha_g(self) -> np.ndarray:
        return 1.0 - self.alpha_f

    @property
    def rho_f(self) -> np.ndarray:
        return _ratio(self.m_f, self.alpha_f)

    @property
    def rho_g(self) -> np.ndarray:
        return _ratio(self.m_g, self.alpha_g)

    @property
    def f_g(self) -> np.ndarray:
        return _ratio(self.ag_fg, self.alpha_g)

    @property
    def rho(self) -> np.ndarray:
        return self.m_f + self.m_g

    def integrals(self) -> dict[str, float]:
        """Totals of the three transported conservative fields."""
        return {k: float(np.sum(getattr(self, k)) * self.dx) for k in ("m_f", "m_g", "ag_fg")}

    def descriptors(self) -> dict[str, PiecewiseLinear]:
        """Exact piecewise descriptors: cell fields constant, velocity linear."""
        f = self.faces
        out = {
            name: PiecewiseLinear.piecewise_constant(f, getattr(self, name))
            for name in ("alpha_f", "m_f", "m_g", "ag_fg")
        }
        out["u"] = PiecewiseLinear.from_nodes(f, self.u)
        return out


def macro_from_init(init, M: int, params: PhysParams) -> MacroState:
    """Cell averages of the interpolated initial data on ``M`` uniform cells."""
    faces = np.linspace(-1.0, 1.0, M + 1)

    def avg(values):
        F = PiecewiseLinear.from_nodes(init.x, values).antiderivative(faces)
        return np.diff(F) / np.diff(faces)

    u = np.interp(faces, init.x, init.u0)
    u[0] = u[-1] = 0.0
    return MacroState(
        time=0.0, params=params,
        alpha_f=avg(init.alpha_f0),
        ag_fg=avg(init.alpha_g0 * init.f_g0),
        m_f=avg(init.alpha_f0 * init.rho_f0),
        m_g=avg(init.alpha_g0 * init.rho_g0),
        u=u,
    )


def _closure_parts(state: MacroState):
    p = state.params
    af, ag = state.alpha_f, state.alpha_g
    denom = af * p.mu_g + ag * p.mu_f
    mu_eff = p.mu_g * p.mu_f / denom
    pf = pressure_fluid(state.rho_f, p)
    pg_tot = pressure_gas(state.rho_g, p) + p.gamma_s_bar * state.f_g
    du = np.diff(state.u) / state.dx
    return af, ag, denom, mu_eff, pf, pg_tot, du


def mixture_stress(state: MacroState) -> np.ndarray:
    """Cell-centred mixture stress
    ``mu_eff [du - (alpha_f p_f / mu_f + alpha_g p_g / mu_g) - gamma_s alpha_g f_g / mu_g]``."""
    p = state.params
    af, ag, _, mu_eff, pf, pg_tot, du = _closure_parts(state)
    return mu_eff * (du - (af * pf / p.mu_f + ag * pg_tot / p.mu_g))


def relaxation_term(state: MacroState) -> np.ndarray:
    """``alpha_g alpha_f / (alpha_f mu_g + alpha_g mu_f) [(mu_g - mu_f) du + p_f - p_g - gamma_s f_g]``."""
    p = state.params
    af, ag, denom, _, pf, pg_tot, du = _closure_parts(state)
    return ag * af / denom * ((p.mu_g - p.mu_f) * du + pf - pg_tot)


def consistency_check(state: MacroState) -> np.ndarray:
    """Residual of ``(alpha_f / mu_f)(Sigma + p_f) - alpha_f du = RT`` per cell."""
    p = state.params
    af = state.alpha_f
    du = np.diff(state.u) / state.dx
    pf = pressure_fluid(state.rho_f, p)
    return af / p.mu_f * (mixture_stress(state) + pf) - af * du - relaxation_term(state)


def _upwind_flux(u, q):
    """Face fluxes ``u * q_upwind`` with zero flux at the walls."""
    F = np.zeros(u.size)
    ui = u[1:-1]
    F[1:-1] = ui * np.where(ui > 0, q[:-1], q[1:])
    return F


def macro_cfl_dt(state: MacroState, cfl: float = 0.4) -> float:
    p = state.params
    c2 = np.maximum(pressure_fluid_derivative(state.rho_f, p), 2.0 * p.a_g**2)
    speed = np.max(np.abs(state.u)) + float(np.sqrt(np.max(c2)))
    return cfl * state.dx / speed


def macro_step(state: MacroState, dt: float, alpha_eps: float = ALPHA_EPS) -> MacroState:
    p = state.params
    dx = state.dx
    u = state.u
    lam = dt / dx

    new = {}
    for name in ("m_f", "m_g", "ag_fg"):
        q = getattr(state, name)
        new[name] = q - lam * np.diff(_upwind_flux(u, q))
        if new[name].min() < -1e-13:
            raise NonPositiveMass(f"{name} became negative at t={state.time + dt}")

    sigma = mixture_stress(state)
    pf = pressure_fluid(state.rho_f, p)
    src = state.alpha_f / p.mu_f * (sigma + pf)
    af = state.alpha_f - lam * np.diff(_upwind_flux(u, state.alpha_f)) + dt * src
    if af.min() < alpha_eps or af.max() > 1.0 - alpha_eps:
        log.warning("alpha_f clamped to [%g, %g] at t=%g", alpha_eps, 1 - alpha_eps, state.time + dt)
        af = np.clip(af, alpha_eps, 1.0 - alpha_eps)

    # momentum on interior faces
    _, _, _, mu_eff, _, _, _ = _closure_parts(state)
    s_press = sigma - mu_eff * np.diff(u) / dx  # explicit part of the stress
    rho_n = state.rho
    rho_new = new["m_f"] + new["m_g"]
    rf_n = 0.5 * (rho_n[:-1] + rho_n[1:])
    rf_new = 0.5 * (rho_new[:-1] + rho_new[1:])
    qf = np.zeros(u.size)
    qf[1:-1] = rf_n * u[1:-1]
    uc = 0.5 * (u[:-1] + u[1:])
    conv = uc * np.where(uc > 0, qf[:-1], qf[1:])
    rhs = rf_n * u[1:-1] - lam * np.diff(conv) + lam * np.diff(s_press)

    nf = state.M - 1
    coef = dt / dx**2
    ab = np.zeros((3, nf))
    ab[1] = rf_new + coef * (mu_eff[:-1] + mu_eff[1:])
    ab[0, 1:] = -coef * mu_eff[1:-1]
    ab[2, :-1] = -coef * mu_eff[1:-1]
    try:
        ui = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"macro momentum solve failed at t={state.time}: {exc}") from exc
    if not np.all(np.isfinite(ui)):
        raise SolverError(f"non-finite macro velocity at t={state.time}")
    u_new = np.zeros_like(u)
    u_new[1:-1] = ui
    return replace(state, time=state.time + dt, alpha_f=af, u=u_new, **new)


def macro_run(state: MacroState, T: float, dt: float | None = None, cfl: float = 0.4,
              every: int | None = None) -> list[MacroState]:
    """Integrate to ``T`` with a uniform step bounded by ``dt`` and the CFL limit.

    The step is fixed from the initial state with a safety factor of one
    half on the CFL bound.  Returns the recorded states (first and last
    always included; intermediate ones every ``every`` steps).
    """
    if T <= 0:
        return [state]
    h = 0.5 * macro_cfl_dt(state, cfl)
    if dt is not None:
        h = min(h, dt)
    n = math.ceil(T / h - 1e-12)
    h = T / n
    out = [state]
    for i in range(1, n + 1):
        state = macro_step(state, h)
        if (every and i % every == 0) or i == n:
            out.append(state)
    return out
