import numpy as np
import pytest

from bubbly1d.core import MicroState, bubble_kappa
from bubbly1d.homog import (
    AveragedFields,
    GridMismatch,
    WindowTooNarrow,
    compare_runs,
    convergence_study,
    empirical_measure,
    macro_window_average,
    measure_moment,
    window_average,
    window_mean,
)
from bubbly1d.macro import macro_from_init
from bubbly1d.micro import MicroStepConfig, run
from bubbly1d.piecewise import PiecewiseLinear
from bubbly1d.seed import MacroInitData, gas_cdf, seed_micro

from _states import PARAMS, equilibrium_state, layout, random_state, smooth_init, trapezoid

GRID = np.linspace(-1, 1, 101)


def _periodic(N, n=2):
    w = 2.0 / (2 * N + 1)
    R = np.full(N, w / 2)
    x, c = layout(R, np.full(N + 1, w), n)
    m = np.full(N, 0.5 / N)
    return MicroState(0.0, PARAMS, x, np.zeros_like(x), np.diff(x, axis=1), c, R, np.zeros(N), np.zeros(N),
                      m, bubble_kappa(m, N, PARAMS))


def test_window_mean_exact():
    d = PiecewiseLinear.from_nodes([-1, 1], [0, 2])  # 1 + x
    vals = window_mean(d, 0.4, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(vals, [1.0, 1.5, 1.9], rtol=1e-14)


def test_periodic_pattern_half_fraction():
    for N in (20, 80):
        s = _periodic(N)
        h = 0.4
        avg = window_average(s, h, GRID)
        inner = np.abs(GRID) <= 1 - h / 2
        w = 2.0 / (2 * N + 1)
        assert np.max(np.abs(avg.alpha_f[inner] - 0.5)) <= w / h + 1e-12
        np.testing.assert_array_equal(avg.alpha_f + avg.alpha_g, np.ones_like(GRID))
        assert np.all((avg.alpha_f >= 0) & (avg.alpha_f <= 1))


def test_no_bubbles():
    s = MicroState(0.0, PARAMS, np.array([[-1.0, 0.0, 1.0]]), np.zeros((1, 3)), np.ones((1, 2)),
                   *(np.zeros(0) for _ in range(6)))
    avg = window_average(s, 0.3, GRID)
    np.testing.assert_allclose(avg.alpha_f, 1.0, rtol=1e-15)
    assert np.all(avg.ag_rho_g == 0) and np.all(avg.ag_fg == 0)
    with pytest.raises(ValueError):
        empirical_measure(s)


def test_window_too_narrow():
    s = _periodic(4)
    with pytest.raises(WindowTooNarrow):
        window_average(s, 2 * s.R.max(), GRID)


def test_measure_total_weight():
    rng = np.random.default_rng(0)
    for _ in range(10):
        meas = empirical_measure(random_state(rng))
        assert measure_moment(meas, lambda r: np.ones_like(r), lambda x: np.ones_like(x)) == 1.0
        assert meas.weight * meas.N == pytest.approx(1.0)


def test_measure_constant_on_equilibrium_run():
    s = equilibrium_state(N=6, n=4)
    traj = run(s, MicroStepConfig(dt=1e-3, cells_per_segment=4), T=0.02)
    a, b = empirical_measure(traj[0]), empirical_measure(traj[-1])
    np.testing.assert_allclose(b.positions, a.positions, atol=1e-12)
    np.testing.assert_allclose(b.radii, a.radii, atol=1e-12)


def test_uniform_seed_measure():
    init = MacroInitData.from_functions(
        201, rho_f0=lambda x: np.ones_like(x), rho_g0=lambda x: np.ones_like(x),
        alpha_g0=lambda x: np.full_like(x, 0.4), f_g0=lambda x: np.full_like(x, 1.25), u0=lambda x: 0 * x)
    N = 19
    meas = empirical_measure(seed_micro(init, N, 2, PARAMS))
    np.testing.assert_allclose(np.diff(meas.positions), 2 / (N + 1), rtol=1e-10)
    np.testing.assert_allclose(meas.radii, 1 / (2 * 1.25), rtol=1e-12)


def test_bubble_length_moment_against_window_average():
    init = smooth_init()
    errs = []
    for N in (8, 64):
        s = seed_micro(init, N, 2, PARAMS)
        meas = empirical_measure(s)
        total = measure_moment(meas, lambda r: 2 * r, lambda x: np.ones_like(x))
        assert total == pytest.approx(2 * s.R.sum(), rel=1e-14)
        h = N ** -0.5
        avg = window_average(s, h, np.linspace(-1, 1, 401))
        errs.append(abs(total - trapezoid(avg.alpha_g, avg.grid)))
    assert errs[1] < errs[0]


def _fields(rng, grid=GRID):
    vals = {k: rng.normal(size=grid.size) for k in ("alpha_f", "af_rho_f", "ag_rho_g", "ag_fg", "u")}
    return AveragedFields(h=0.2, grid=grid, **vals)


def test_compare_runs_metric():
    rng = np.random.default_rng(1)
    a, b, c = _fields(rng), _fields(rng), _fields(rng)
    zero = compare_runs([a], [a])
    assert all(zero[k]["L2"][0] == 0 and zero[k]["Linf"][0] == 0 for k in ("alpha_f", "u"))
    ab, ba = compare_runs([a], [b]), compare_runs([b], [a])
    bc, ac = compare_runs([b], [c]), compare_runs([a], [c])
    for k in ("alpha_f", "af_rho_f", "ag_rho_g", "ag_fg", "u"):
        assert ab[k]["L2"][0] == ba[k]["L2"][0]
        assert ac[k]["L2"][0] <= ab[k]["L2"][0] + bc[k]["L2"][0] + 1e-14


def test_compare_runs_constant_offset():
    rng = np.random.default_rng(2)
    a = _fields(rng)
    delta = 0.3
    b = AveragedFields(a.h, a.grid, a.alpha_f, a.af_rho_f, a.ag_rho_g + delta, a.ag_fg, a.u)
    e = compare_runs([a], [b], times=[0.5])
    assert e["ag_rho_g"]["L2"][0] == pytest.approx(delta * np.sqrt(2), rel=1e-12)
    assert e["ag_rho_g"]["Linf"][0] == pytest.approx(delta, rel=1e-12)
    assert e["u"]["L2"][0] == 0.0 and e["times"][0] == 0.5


def test_compare_runs_grid_mismatch():
    rng = np.random.default_rng(3)
    with pytest.raises(GridMismatch):
        compare_runs([_fields(rng)], [_fields(rng, np.linspace(-1, 1, 51))])
    with pytest.raises(GridMismatch):
        compare_runs([_fields(rng)], [])


def test_macro_state_is_filtered_before_comparison():
    init = smooth_init()
    m = macro_from_init(init, 200, PARAMS)
    filt = macro_window_average(m, 0.25, GRID)
    e = compare_runs([filt], [m])
    assert all(e[k]["L2"][0] == 0 for k in ("alpha_f", "u"))


def test_initial_time_errors_shrink():
    init = smooth_init()
    rep = convergence_study(init, [8, 32], 0.0, lambda N: N ** -0.5, PARAMS, cells_per_segment=4)
    for k, e in rep.errors.items():
        assert e["L2"][1] < e["L2"][0], k
    d = rep.to_dict()
    assert d["Ns"] == [8, 32] and d["non_monotone"] is False


def test_stationary_datum_errors_do_not_move():
    # balanced pressures: the seeded bubbles sit exactly at equilibrium
    a_g, gs = PARAMS.a_g, PARAMS.gamma_s_bar
    init = MacroInitData.from_functions(
        201, rho_f0=lambda x: np.ones_like(x), rho_g0=lambda x: np.full_like(x, (1.0 - gs * 1.25) / (2 * a_g**2)),
        alpha_g0=lambda x: np.full_like(x, 0.4), f_g0=lambda x: np.full_like(x, 1.25), u0=lambda x: 0 * x)
    r0 = convergence_study(init, [8, 16], 0.0, lambda N: N ** -0.5, PARAMS, cells_per_segment=4)
    r1 = convergence_study(init, [8, 16], 0.02, lambda N: N ** -0.5, PARAMS, cells_per_segment=4)
    for k in r0.errors:
        np.testing.assert_allclose(r1.errors[k]["L2"], r0.errors[k]["L2"], atol=1e-9)


def test_study_rejects_unsorted_ns():
    with pytest.raises(ValueError):
        convergence_study(smooth_init(), [16, 8], 0.0, lambda N: N ** -0.5, PARAMS)


def test_cdf_of_placed_bubbles_matches_quantiles():
    init = smooth_init()
    s = seed_micro(init, 16, 2, PARAMS)
    F = gas_cdf(init)
    np.testing.assert_allclose(F(s.c), np.arange(1, 17) / 17, atol=1e-10)
