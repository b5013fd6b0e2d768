"""Microscopic initial data from sampled macroscopic fields.

Bubble centres are quantiles of the gas covolume distribution
``alpha_g0 * f_g0``; each bubble takes its radius from the covolume
density and its mass from the gas density at its centre.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Bubble,
    InvalidStateError,
    MicroState,
    PhysParams,
    ScalingBounds,
    bubble_kappa,
)
from .piecewise import PiecewiseLinear

__all__ = [
    "MacroInitData",
    "NotAProbability",
    "OverlapAtThisN",
    "assemble_micro_initial",
    "gas_cdf",
    "place_bubbles",
    "scaling_bounds_for",
    "seed_micro",
]


class NotAProbability(ValueError):
    pass


class OverlapAtThisN(ValueError):
    """Seeded bubbles touch each other or a wall for this N."""


_FIELDS = ("rho_f0", "rho_g0", "alpha_f0", "alpha_g0", "f_g0", "u0")


@dataclass(frozen=True, eq=False)
class MacroInitData:
    """Macroscopic initial fields sampled on a uniform grid of [-1, 1].

    Values between samples are obtained by linear interpolation.
    """

    x: np.ndarray
    rho_f0: np.ndarray
    rho_g0: np.ndarray
    alpha_f0: np.ndarray
    alpha_g0: np.ndarray
    f_g0: np.ndarray
    u0: np.ndarray
    rho_min: float
    alpha_min: float
    f_min: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < 2 or x[0] != -1.0 or x[-1] != 1.0:
            raise InvalidStateError("x must be a grid of [-1, 1] including both ends")
        if not np.allclose(np.diff(x), 2.0 / (x.size - 1), rtol=0, atol=1e-12):
            raise InvalidStateError("x must be uniform")
        for name in _FIELDS:
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != x.shape or not np.all(np.isfinite(a)):
                raise InvalidStateError(f"{name} must be finite with the shape of x")
            object.__setattr__(self, name, a)
        if np.max(np.abs(self.alpha_f0 + self.alpha_g0 - 1.0)) > 1e-12:
            raise InvalidStateError("alpha_f0 + alpha_g0 must equal 1")
        if not (self.rho_min > 0 and self.alpha_min > 0 and self.f_min > 0):
            raise InvalidStateError("rho_min, alpha_min and f_min must be > 0")
        if min(self.rho_f0.min(), self.rho_g0.min()) < self.rho_min:
            raise InvalidStateError("densities fall below rho_min")
        if min(self.alpha_f0.min(), self.alpha_g0.min()) < self.alpha_min:
            raise InvalidStateError("volume fractions fall below alpha_min")
        if self.f_g0.min() < self.f_min:
            raise InvalidStateError("f_g0 falls below f_min")
        if abs(self.u0[0]) > 1e-14 or abs(self.u0[-1]) > 1e-14:
            raise InvalidStateError("u0 must vanish at the walls")
        mass = PiecewiseLinear.from_nodes(x, self.alpha_g0 * self.f_g0).integrate()
        if abs(mass - 1.0) > 1e-10:
            raise NotAProbability(f"integral of alpha_g0 * f_g0 is {mass!r}, not 1")

    @classmethod
    def from_functions(cls, npts, rho_f0, rho_g0, alpha_g0, f_g0, u0, normalize=False, **mins):
        """Sample callables on ``npts`` uniform points.

        With ``normalize=True`` the sampled ``f_g0`` is rescaled so that the
        discrete covolume integral is exactly one.  Missing lower bounds are
        taken from the samples.
        """
        x = np.linspace(-1.0, 1.0, npts)
        ag = np.asarray(alpha_g0(x), dtype=float) * np.ones_like(x)
        fg = np.asarray(f_g0(x), dtype=float) * np.ones_like(x)
        if normalize:
            fg = fg / PiecewiseLinear.from_nodes(x, ag * fg).integrate()
        u = np.asarray(u0(x), dtype=float) * np.ones_like(x)
        u[0] = u[-1] = 0.0
        rf = np.asarray(rho_f0(x), dtype=float) * np.ones_like(x)
        rg = np.asarray(rho_g0(x), dtype=float) * np.ones_like(x)
        af = 1.0 - ag
        return cls(
            x=x, rho_f0=rf, rho_g0=rg, alpha_f0=af, alpha_g0=ag, f_g0=fg, u0=u,
            rho_min=mins.get("rho_min", min(rf.min(), rg.min())),
            alpha_min=mins.get("alpha_min", min(af.min(), ag.min())),
            f_min=mins.get("f_min", fg.min()),
        )

    def field(self, name: str) -> PiecewiseLinear:
        return PiecewiseLinear.from_nodes(self.x, getattr(self, name))

    def __call__(self, name: str, pts):
        return np.interp(pts, self.x, getattr(self, name))


class GasCDF:
    """Exact antiderivative of the interpolated covolume density."""

    def __init__(self, init: MacroInitData):
        self._pl = PiecewiseLinear.from_nodes(init.x, init.alpha_g0 * init.f_g0)
        total = self._pl.integrate()
        if abs(total - 1.0) > 1e-10:
            raise NotAProbability(f"covolume mass is {total!r}, not 1")
        self._total = total

    def __call__(self, x):
        return self._pl.antiderivative(x)

    def inverse(self, q, tol=1e-15, maxiter=200):
        """Vectorized bisection of ``F(x) = q`` on [-1, 1]."""
        q = np.asarray(q, dtype=float)
        lo = np.full(q.shape, -1.0)
        hi = np.full(q.shape, 1.0)
        for _ in range(maxiter):
            mid = 0.5 * (lo + hi)
            below = self(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)


def gas_cdf(init: MacroInitData) -> GasCDF:
    """``F_g(x) = int_{-1}^x alpha_g0 f_g0``, exact for the sampled interpolant."""
    return GasCDF(init)


def place_bubbles(init: MacroInitData, N: int, params: PhysParams) -> list[Bubble]:
    """Quantile placement: ``c_k = F_g^{-1}(k / (N + 1))``, ``R_k = 1 / (2 N f_g0(c_k))``,
    ``m_k = 2 R_k rho_g0(c_k)``.  Velocities are set to zero."""
    if N < 1:
        raise ValueError("N must be >= 1")
    F = gas_cdf(init)
    c = F.inverse(np.arange(1, N + 1) / (N + 1.0))
    R = 1.0 / (2.0 * N * init("f_g0", c))
    m = 2.0 * R * init("rho_g0", c)
    edges = np.r_[-1.0, np.ravel(np.column_stack([c - R, c + R])), 1.0]
    gaps = edges[1::2] - edges[0::2]
    if np.any(gaps <= 0):
        k = int(np.argmin(gaps))
        raise OverlapAtThisN(f"fluid gap {k} has length {gaps[k]:.3e} at N={N}")
    kappa = bubble_kappa(m, N, params)
    return [Bubble(float(c[k]), float(R[k]), 0.0, 0.0, float(m[k]), float(kappa[k])) for k in range(N)]


def assemble_micro_initial(init: MacroInitData, bubbles, cells_per_segment: int,
                           params: PhysParams) -> MicroState:
    """Mesh the fluid gaps uniformly and attach velocities and cell masses.

    Cell masses are exact integrals of the interpolated ``rho_f0``; node
    velocities sample ``u0``; bubble velocities are the mean and half
    difference of ``u0`` at the two interfaces.
    """
    n = int(cells_per_segment)
    if n < 2:
        raise ValueError("cells_per_segment must be >= 2")
    bubbles = list(bubbles)
    N = len(bubbles)
    c = np.array([b.c for b in bubbles])
    R = np.array([b.R for b in bubbles])
    starts = np.r_[-1.0, c + R]
    ends = np.r_[c - R, 1.0]
    frac = np.linspace(0.0, 1.0, n + 1)
    x = starts[:, None] + (ends - starts)[:, None] * frac[None, :]
    x[:, 0], x[:, -1] = starts, ends
    rho = init.field("rho_f0")
    cell_mass = np.diff(rho.antiderivative(x), axis=1)
    u = init("u0", x)
    u_lo = init("u0", c - R)
    u_hi = init("u0", c + R)
    c_dot = 0.5 * (u_hi + u_lo)
    R_dot = 0.5 * (u_hi - u_lo)
    if N:
        u[:-1, -1] = c_dot - R_dot
        u[1:, 0] = c_dot + R_dot
    u[0, 0] = u[-1, -1] = 0.0
    return MicroState(
        time=0.0, params=params, x=x, u=u, cell_mass=cell_mass,
        c=c, R=R, c_dot=c_dot, R_dot=R_dot,
        m=[b.m for b in bubbles], kappa=[b.kappa_k for b in bubbles],
    )


def seed_micro(init: MacroInitData, N: int, cells_per_segment: int, params: PhysParams) -> MicroState:
    """Place ``N`` bubbles (none for ``N = 0``) and assemble the state."""
    bubbles = place_bubbles(init, N, params) if N else []
    return assemble_micro_initial(init, bubbles, cells_per_segment, params)


def scaling_bounds_for(state: MicroState, slack: float = 0.5, K: float | None = None) -> ScalingBounds:
    """Scaling constants that the given state satisfies with room ``slack``.

    ``d_inf`` and ``M_inf`` are ``slack`` times the worst initial ratios,
    the density window is widened by ``1/slack`` on both sides and ``K``
    defaults to ``1/slack`` times the initial velocity functional plus one.
    """
    N = max(state.N, 1)
    ratios = [1.0]
    if state.N:
        for a in (N * state.R, N * state.gap_lengths):
            ratios += [a.min(), 1.0 / a.max()]
        m_ratios = [N * state.m.min(), 1.0 / (N * state.m.max()),
                    N * state.kappa.min(), 1.0 / (N * state.kappa.max())]
    else:
        m_ratios = [1.0]
    rho = state.rho
    if K is None:
        slope = np.diff(state.u, axis=1) / state.dx
        q4 = 0.5 * state.params.mu_f * np.sum(slope**2 * state.dx)
        if state.N:
            q4 += state.params.mu_g * np.sum(state.R_dot**2 / state.R)
        K = float(q4) / slack + 1.0
    return ScalingBounds(
        M_inf=slack * min(m_ratios), d_inf=slack * min(ratios),
        rho_under=slack * rho.min(), rho_over=rho.max() / slack, K=K,
    )
