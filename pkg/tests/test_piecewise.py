import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from bubbly1d.piecewise import PiecewiseLinear


def _random_pl(rng, m=7):
    b = np.sort(rng.uniform(-1, 1, m - 1))
    breaks = np.r_[-1.0, b, 1.0]
    return PiecewiseLinear(breaks, rng.normal(size=m), rng.normal(size=m))


def test_evaluation_and_limits():
    f = PiecewiseLinear([0, 1, 2], [0, 5], [1, 7])
    assert f(0.5) == pytest.approx(0.5)
    assert f(1.0) == 5.0
    assert f(1.0, side="left") == 1.0
    np.testing.assert_array_equal(f.jumps(), [4.0])


def test_integrals_match_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(10):
        f = _random_pl(rng)
        a, b = sorted(rng.uniform(-1, 1, 2))
        ref = quad(lambda t: float(f(t)), a, b, points=f.breaks, limit=200)[0]
        assert f.integrate(a, b) == pytest.approx(ref, abs=1e-12)


def test_norms_match_quadrature():
    rng = np.random.default_rng(1)
    f = _random_pl(rng)
    l2 = sum(quad(lambda t: float(f(t)) ** 2, f.breaks[i], f.breaks[i + 1])[0] for i in range(f.left.size))
    assert f.l2_norm_sq() == pytest.approx(l2, rel=1e-12)
    semi = np.sum(f.slopes**2 * np.diff(f.breaks))
    assert f.h1_seminorm_sq() == pytest.approx(semi, rel=1e-12)


def test_constant_norms():
    f = PiecewiseLinear.constant(-1, 1, 3.0)
    assert np.sqrt(f.l2_norm_sq()) == pytest.approx(3 * np.sqrt(2))
    assert f.h1_seminorm_sq() == 0.0


def test_concatenate_and_restrict():
    f = PiecewiseLinear.from_nodes([0, 1, 2], [0, 1, 0])
    g = PiecewiseLinear.from_nodes([2, 3], [0, 3])
    h = PiecewiseLinear.concatenate([f, g])
    assert h(2.5) == 1.5
    r = h.restrict(1, 3)
    assert r.domain == (1.0, 3.0)
    with pytest.raises(ValueError):
        PiecewiseLinear.concatenate([g, f])


def test_rejects_bad_breaks():
    with pytest.raises(ValueError):
        PiecewiseLinear([0, 0, 1], [1, 1], [1, 1])


@given(
    st.lists(st.floats(-5, 5), min_size=4, max_size=4),
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
)
def test_integral_is_additive(vals, a, b, c):
    f = PiecewiseLinear.from_nodes([-1.0, -0.2, 0.3, 1.0], vals)
    lhs = f.integrate(a, b) + f.integrate(b, c)
    assert lhs == pytest.approx(f.integrate(a, c), abs=1e-12)
