import numpy as np
import pytest
from scipy import integrate, special

from logvlasov.dawson import dawson


def quad_dawson(x):
    val, _ = integrate.quad(lambda y: np.exp(y * y - x * x), 0.0, x, epsabs=0, epsrel=1e-13)
    return val


def test_zero():
    assert dawson(0.0) == 0.0


def test_odd():
    x = np.linspace(0.01, 40, 500)
    np.testing.assert_array_equal(dawson(-x), -dawson(x))


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_against_quadrature(x):
    assert dawson(x) == pytest.approx(quad_dawson(x), abs=1e-13)


def test_against_scipy_over_range():
    x = np.concatenate([np.linspace(-60, 60, 4001), [4.9999999, 5.0, 5.0000001]])
    np.testing.assert_allclose(dawson(x), special.dawsn(x), atol=1e-14, rtol=1e-13)


def test_ode_residual_complex_step():
    x = np.linspace(-12, 12, 1000)
    h = 1e-30
    deriv = dawson(x + 1j * h).imag / h
    assert np.max(np.abs(deriv - (1 - 2 * x * dawson(x)))) <= 1e-10


def test_tail_ratio():
    x = np.linspace(3, 200, 400)
    r = 2 * x * dawson(x)
    assert np.all(np.diff(r) < 0)
    assert np.all(r > 1)
    assert abs(2 * 4 * dawson(4.0) - 1) < 0.05
    assert abs(r[-1] - 1) < 1e-4


def test_scalar_in_scalar_out():
    assert np.ndim(dawson(1.3)) == 0
    assert dawson(np.array([1.3])).shape == (1,)
