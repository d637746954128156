import numpy as np
import pytest
from hypothesis import given, strategies as st

from incstab.errors import PreconditionError
from incstab.rates import envelope_check, fit_exponential

T = np.linspace(0.0, 3.0, 301)


def test_exact_exponential():
    f = fit_exponential((T, 5.0 * np.exp(-2.0 * T)), (0.0, 3.0))
    assert f.K == pytest.approx(5.0, rel=1e-10)
    assert f.c == pytest.approx(2.0, rel=1e-10)
    assert f.residual < 1e-12


def test_perturbed_exponential():
    y = 5.0 * np.exp(-2.0 * T) * (1 + 0.01 * np.sin(10 * T))
    assert 1.9 <= fit_exponential((T, y)).c <= 2.1


def test_constant():
    f = fit_exponential((T, np.ones_like(T)))
    assert f.c == 0.0 and f.K == 1.0


def test_default_window():
    f = fit_exponential((T, np.exp(-T)))
    assert f.window == pytest.approx((0.3, 3.0))


def test_errors():
    y = np.exp(-T)
    y[200] = -1.0
    with pytest.raises(PreconditionError, match="nonpositive"):
        fit_exponential((T, y))
    with pytest.raises(PreconditionError, match="at least 10"):
        fit_exponential((T[:8], np.exp(-T[:8])), (0.0, T[7]))
    with pytest.raises(PreconditionError):
        fit_exponential((T, np.exp(-T)), (0.0, 5.0))
    with pytest.raises(PreconditionError):
        fit_exponential((T[::-1], np.exp(-T)))


def test_floor_truncation():
    y = np.exp(-20.0 * T)
    f = fit_exponential((T, y), (0.0, 3.0))
    assert f.points < len(T)
    assert f.c == pytest.approx(20.0, rel=1e-9)


@given(st.floats(1e-3, 1e3), st.floats(-10, 10))
def test_exact_on_noiseless(K, c):
    f = fit_exponential((T, K * np.exp(-c * T)), (0.0, 3.0))
    assert f.residual < 1e-12
    assert f.K == pytest.approx(K, rel=1e-10)
    assert f.c == pytest.approx(c, rel=1e-10, abs=1e-10)


@given(st.floats(1e-3, 1e3), st.floats(0.1, 5))
def test_shift_invariance(a, c):
    y = (1 + 0.1 * np.cos(3 * T)) * np.exp(-c * T)
    f1 = fit_exponential((T, y))
    f2 = fit_exponential((T, a * y))
    assert f2.K == pytest.approx(a * f1.K, rel=1e-10)
    assert f2.c == pytest.approx(f1.c, abs=1e-10)


def test_envelope_examples():
    y = 3.0 * np.exp(-2.0 * T)
    f = fit_exponential((T, y), (0.0, 3.0))
    assert envelope_check((T, y), f.K / y[0], f.c, 0.0).passed or \
        envelope_check((T, y), f.K / y[0], f.c, 1e-12).passed
    bad = envelope_check((T, y), 1.0, 2.5, 0.05)
    assert not bad.passed and bad.violation > 0
    assert bad.worst_t == 3.0


def test_envelope_offset_start():
    y = np.exp(-T)
    r = envelope_check((T, y), 1.0, 1.0, 1e-12, t0=1.0)
    assert r.passed and r.worst_t >= 1.0
