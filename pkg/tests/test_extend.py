import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bubbly1d.core import MicroState, PhysParams, bubble_kappa, pressure_gas
from bubbly1d.extend import (
    ExtendedFields,
    advect_extended_fluid_density,
    advect_extended_gas_fields,
    build_extended_fields,
    extend_stress_fluid,
    extend_stress_gas,
    extend_velocity,
    fit_stress_constant,
    h1_norms,
    initial_extended_densities,
    reconstruct_gas_indicator_fields,
    stress_extension_bound,
)
from bubbly1d.micro import MicroStepConfig, bubble_stresses, cell_stresses, run
from bubbly1d.piecewise import PiecewiseLinear

from _states import PARAMS, equilibrium_state, layout, random_state


def _single(c_dot=0.0, R_dot=0.0, R=0.5, n=4, u=None):
    x, c = layout([R], [1 - R, 1 - R], n)
    uu = np.zeros_like(x) if u is None else u
    uu[0, -1], uu[1, 0] = c_dot - R_dot, c_dot + R_dot
    m = np.array([0.3])
    return MicroState(0.0, PARAMS, x, uu, np.diff(x, axis=1), c, np.array([R]), np.array([c_dot]),
                      np.array([R_dot]), m, bubble_kappa(m, 1, PARAMS))


def test_velocity_formula_on_bubble():
    s = _single(c_dot=1.0, R_dot=2.0, R=0.5)
    ut = extend_velocity(s)
    for y in np.linspace(-0.5, 0.5, 7):
        assert ut(y) == pytest.approx(1 + 4 * y, rel=1e-14, abs=1e-14)


def test_velocity_zero():
    ut = extend_velocity(equilibrium_state(N=3, n=4))
    assert np.all(ut(np.linspace(-1, 1, 101)) == 0.0)


def _fluid_stress_state(s_minus, s_plus, R=0.1):
    """Single bubble with prescribed adjacent cell stresses (pure viscous)."""
    n = 4
    x, c = layout([R], [1 - R, 1 - R], n)
    u = np.zeros_like(x)
    # zero masses: Sigma = mu_f * slope; the wall node is pinned to 0
    h0 = x[0, -1] - x[0, -2]
    h1 = x[1, 1] - x[1, 0]
    # choose a rigid bubble translation so both interfaces share one velocity
    cd = 0.0
    u[0, -1] = u[1, 0] = cd
    u[0, -2] = cd - s_minus * h0
    u[1, 1] = cd + s_plus * h1
    u[0, 1:-2] = np.linspace(0, u[0, -2], n)[1:-2] if n > 3 else u[0, 1:-2]
    m = np.array([0.2])
    return MicroState(0.0, PARAMS, x, u, np.zeros((2, n)), c, np.array([R]), np.array([cd]),
                      np.zeros(1), m, bubble_kappa(m, 1, PARAMS))


def test_fluid_stress_formula_on_bubble():
    s = _fluid_stress_state(1.0, 3.0, R=0.1)
    sig = cell_stresses(s)
    assert sig[0, -1] == pytest.approx(1.0) and sig[1, 0] == pytest.approx(3.0)
    st = extend_stress_fluid(s)
    for y in np.linspace(-0.1, 0.1, 5):
        assert st(y) == pytest.approx(2 + 10 * y, rel=1e-12, abs=1e-12)
    # the exact seminorm on the bubble is 100 * 0.2 = 20
    assert st.restrict(s.x[0, -1], s.x[1, 0]).h1_seminorm_sq() == pytest.approx(20.0, rel=1e-12)


def test_fluid_stress_symmetric_constant_on_bubble():
    st = extend_stress_fluid(_fluid_stress_state(2.0, 2.0, R=0.1))
    assert np.allclose(st(np.linspace(-0.1, 0.1, 9)), 2.0, rtol=1e-12)


def test_gas_stress_slope_between_two_bubbles():
    R = np.array([0.1, 0.1])
    x, c = layout(R, [0.55, 0.5, 0.55], 3)
    m = np.array([0.1, 0.1])
    p = PhysParams(mu_g=1.0, a_g=1.0, gamma_s_bar=0.0)
    # Sigma_k = (mu_g R_dot - kappa) / R with kappa = m; choose R_dot to hit 1 and 3
    rd = (np.array([1.0, 3.0]) * R + m) / p.mu_g
    cd = np.zeros(2)
    u = np.zeros_like(x)
    u[0, -1], u[1, 0] = cd[0] - rd[0], cd[0] + rd[0]
    u[1, -1], u[2, 0] = cd[1] - rd[1], cd[1] + rd[1]
    s = MicroState(0.0, p, x, u, np.diff(x, axis=1), c, R, cd, rd, m, bubble_kappa(m, 2, p))
    np.testing.assert_allclose(bubble_stresses(s), [1.0, 3.0], rtol=1e-13)
    sg = extend_stress_gas(s)
    a, b = x[1, 0], x[1, -1]
    assert b - a == pytest.approx(0.5)
    assert (sg(b, side="left") - sg(a)) / (b - a) == pytest.approx(4.0, rel=1e-12)
    assert sg(-1.0) == pytest.approx(1.0) and sg(1.0) == pytest.approx(3.0)


def test_gas_stress_single_bubble_constant():
    s = random_state(np.random.default_rng(0), N=1, n=3)
    sg = extend_stress_gas(s)
    assert np.all(sg.slopes == 0) and np.all(sg.jumps() == 0)
    with pytest.raises(ValueError):
        extend_stress_gas(MicroState(0.0, PARAMS, np.array([[-1.0, 0.0, 1.0]]), np.zeros((1, 3)),
                                     np.ones((1, 2)), *(np.zeros(0) for _ in range(6))))


def test_indicator_fields_example():
    p = PhysParams()
    N = 10
    R = np.full(N, 0.05)
    x, c = layout(R, np.full(N + 1, 1.0 / (N + 1)), 2)
    m = np.full(N, 0.1)
    s = MicroState(0.0, p, x, np.zeros_like(x), np.diff(x, axis=1), c, R, np.zeros(N), np.zeros(N), m,
                   bubble_kappa(m, N, p))
    rg, fg = reconstruct_gas_indicator_fields(s)
    assert rg(c[3]) == pytest.approx(1.0) and fg(c[3]) == pytest.approx(1.0)
    assert rg(x[0, 1]) == 0.0 and fg(x[0, 1]) == 0.0
    # total covolume mass equals one
    assert fg.integrate(-1, 1) == pytest.approx(1.0, rel=1e-14)


def test_indicator_fields_without_bubbles():
    s = MicroState(0.0, PARAMS, np.array([[-1.0, 0.0, 1.0]]), np.zeros((1, 3)), np.ones((1, 2)),
                   *(np.zeros(0) for _ in range(6)))
    rg, fg = reconstruct_gas_indicator_fields(s)
    assert rg(0.3) == 0.0 and fg(-0.2) == 0.0


def test_covolume_mass_random_states():
    rng = np.random.default_rng(1)
    for _ in range(10):
        s = random_state(rng)
        _, fg = reconstruct_gas_indicator_fields(s)
        assert fg.integrate(-1, 1) == pytest.approx(1.0, rel=1e-13)


def test_extensions_continuous_and_native_random():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = random_state(rng)
        ut, sf, sg = extend_velocity(s), extend_stress_fluid(s), extend_stress_gas(s)
        for d in (ut, sf, sg):
            assert np.max(np.abs(d.jumps())) <= 1e-12
        np.testing.assert_allclose(ut(s.x[0]), s.u[0], atol=1e-13)
        np.testing.assert_allclose(sg(s.c), bubble_stresses(s), rtol=1e-13, atol=1e-13)


def test_constant_field_norms():
    f = ExtendedFields(0.0, np.linspace(-1, 1, 11), sigma_f=PiecewiseLinear.constant(-1, 1, 2.5),
                       sigma_g=PiecewiseLinear.constant(-1, 1, -1.0), rho_f=np.full(11, 3.0))
    n = h1_norms(f)
    assert n["sigma_f"]["L2"] == pytest.approx(2.5 * np.sqrt(2))
    assert n["sigma_f"]["H1_semi"] == 0.0
    assert n["rho_f"]["L2"] == pytest.approx(3 * np.sqrt(2))


def _frozen_trajectory(grid, times, sigma_f=None, sigma_g=None):
    zero = PiecewiseLinear.constant(-1, 1, 0.0)
    return [ExtendedFields(t, grid, u=zero, sigma_f=sigma_f, sigma_g=sigma_g) for t in times]


def test_fluid_density_equilibrium_constant():
    p = PhysParams(kappa_f=1, gamma_f=2, mu_f=1)
    grid = np.linspace(-1, 1, 21)
    rho0 = 1.3
    traj = _frozen_trajectory(grid, np.linspace(0, 1, 101),
                              sigma_f=PiecewiseLinear.constant(-1, 1, -rho0**2))
    out = advect_extended_fluid_density(np.full(21, rho0), traj, p)
    np.testing.assert_allclose(out, rho0, rtol=1e-14)


def test_fluid_density_scalar_ode():
    p = PhysParams(kappa_f=1, gamma_f=2, mu_f=2.0)
    grid = np.linspace(-1, 1, 5)
    rho0 = np.array([0.5, 1.0, 1.5, 2.0, 1.0])
    traj = _frozen_trajectory(grid, np.linspace(0, 1, 1001), sigma_f=PiecewiseLinear.constant(-1, 1, 0.0))
    out = advect_extended_fluid_density(rho0, traj, p)
    exact = rho0 * (1 + 2 * rho0**2 * 1.0 / p.mu_f) ** -0.5
    np.testing.assert_allclose(out[-1], exact, rtol=1e-6)


def test_gas_fields_equilibrium_constant():
    p = PhysParams(a_g=1.0, gamma_s_bar=0.2, mu_g=1.0)
    grid = np.linspace(-1, 1, 11)
    r0, f0 = 0.7, 1.5
    sig = -(float(pressure_gas(r0, p)) + p.gamma_s_bar * f0)
    traj = _frozen_trajectory(grid, np.linspace(0, 0.5, 51), sigma_g=PiecewiseLinear.constant(-1, 1, sig))
    r, f = advect_extended_gas_fields(np.full(11, r0), np.full(11, f0), traj, p)
    np.testing.assert_allclose(r, r0, rtol=1e-14)
    np.testing.assert_allclose(f, f0, rtol=1e-14)


def test_gas_fields_match_ode_reference():
    p = PhysParams(a_g=1.2, gamma_s_bar=0.3, mu_g=0.7)
    sig = 0.4
    grid = np.linspace(-1, 1, 3)
    traj = _frozen_trajectory(grid, np.linspace(0, 0.5, 8001), sigma_g=PiecewiseLinear.constant(-1, 1, sig))
    r, f = advect_extended_gas_fields(np.full(3, 0.8), np.full(3, 1.1), traj, p)

    def rhs(t, y):
        rate = -(sig + 2 * p.a_g**2 * y[0] + p.gamma_s_bar * y[1]) / p.mu_g
        return [rate * y[0], rate * y[1]]

    ref = solve_ivp(rhs, (0, 0.5), [0.8, 1.1], method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1]
    assert abs(r[-1, 1] - ref[0]) < 1e-8
    assert abs(f[-1, 1] - ref[1]) < 1e-8


def _transport_error(n, dt):
    from bubbly1d.seed import seed_micro
    from _states import smooth_init

    s = seed_micro(smooth_init(), 4, n, PARAMS)
    traj = run(s, MicroStepConfig(dt=dt, cells_per_segment=n), T=0.02)
    grid = np.linspace(-1, 1, 801)
    fields = [build_extended_fields(t, grid) for t in traj]
    rho_f0, rho_g0, f_g0 = initial_extended_densities(traj[0], grid)
    rho = advect_extended_fluid_density(rho_f0, fields, PARAMS)[-1]
    rg, fg = advect_extended_gas_fields(rho_g0, f_g0, fields, PARAMS)
    end = traj[-1]
    err_f = 0.0
    for seg in range(end.N + 1):
        xs = end.x[seg]
        mids = 0.5 * (xs[1:] + xs[:-1])
        err_f = max(err_f, np.max(np.abs(np.interp(mids, grid, rho) - end.rho[seg])))
    err_g = np.max(np.abs(np.interp(end.c, grid, rg[-1]) - end.m / (2 * end.R)))
    return err_f, err_g


def test_transported_densities_match_native_under_refinement():
    coarse = _transport_error(8, 2e-3)
    fine = _transport_error(32, 5e-4)
    assert fine[0] < coarse[0]
    assert fine[1] < coarse[1] + 1e-12


def test_stress_bound_constant_is_moderate():
    rng = np.random.default_rng(3)
    states = [random_state(rng) for _ in range(30)]
    C = fit_stress_constant(states)
    assert 0 < C <= 8.0
    b = stress_extension_bound(states[0])
    assert b.lhs <= C * b.bracket


def test_initial_densities_native_on_phase():
    s = random_state(np.random.default_rng(4), N=3, n=4)
    grid = np.linspace(-1, 1, 401)
    rf, rg, fg = initial_extended_densities(s, grid)
    inside = (grid > s.c[1] - s.R[1]) & (grid < s.c[1] + s.R[1])
    np.testing.assert_allclose(rg[inside], s.m[1] / (2 * s.R[1]), rtol=1e-13)
    np.testing.assert_allclose(fg[inside], 1 / (2 * s.N * s.R[1]), rtol=1e-13)
    j = np.searchsorted(grid, s.x[0, 1])
    assert rf[j] == pytest.approx(s.rho[0, 1])
