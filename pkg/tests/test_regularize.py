import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from incstab import cases, regularize as rg
from incstab.errors import PreconditionError
from incstab.model import field_eval, freeze

KINDS = ["sine", "linear"]


def test_zeta_examples():
    assert rg.zeta(1.0, "sine") == 1.0
    assert rg.zeta(0.0, "sine") == 0.0 and rg.zeta(0.0, "linear") == 0.0
    assert rg.zeta(-3.0, "linear") == -1.0
    assert rg.zeta(0.5, "linear") == 0.5
    with pytest.raises(PreconditionError):
        rg.zeta(0.0, "cubic")


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from(KINDS))
def test_zeta_properties(a, b, kind):
    za, zb = rg.zeta(a, kind), rg.zeta(b, kind)
    assert -1.0 <= za <= 1.0
    assert rg.zeta(-a, kind) == -za
    if a <= b:
        assert za <= zb


def _sys(name="case2", index=0):
    ic = cases.load_case(name)
    return ic.systems[index]


@pytest.mark.parametrize("kind", KINDS)
def test_psi_gamma_examples(kind):
    s = _sys()
    eps = 0.01
    assert rg.psi_gamma({"x1": eps, "x2": 0.0}, s, eps, kind) == (1.0, 0.0)
    assert rg.psi_gamma({"x1": 0.0, "x2": 0.0}, s, eps, kind) == (0.5, 0.5)
    assert rg.psi_gamma({"x1": -2 * eps, "x2": 0.0}, s, eps, kind) == (0.0, 1.0)
    with pytest.raises(PreconditionError):
        rg.psi_gamma({"x1": 0.0, "x2": 0.0}, s, 0.0, kind)


def test_blended_examples():
    s = _sys()
    assert rg.blended_field({"x1": 0.0, "x2": 0.0}, s).tolist() == [0.0]
    # f_pos(0.5) = -4.25, f_neg(0.5) = 0.25, Psi = 0.75
    assert rg.blended_field({"x1": 0.5, "x2": 0.0}, s, 1.0, "linear")[0] == pytest.approx(-3.125, abs=1e-15)


def test_chi_examples():
    s = _sys()
    at0 = {"x1": 0.0, "x2": 0.0}
    assert rg.chi({"x1": 0.5, "x2": 0.0}, s, 0.01, "sine").value == 0.0
    assert rg.chi(at0, s, 0.01, "linear").value == pytest.approx(50.0, rel=1e-15)
    assert rg.chi(at0, s, 0.01, "sine").value == pytest.approx(math.pi / 0.04, rel=1e-15)
    # finite-difference check of zeta' at 0
    h = 1e-6
    fd = (rg.zeta(h, "sine") - rg.zeta(-h, "sine")) / (2 * h)
    assert rg.chi(at0, s, 0.01, "sine").value == pytest.approx(fd / 0.02, rel=1e-9)


def test_chi_linear_kink_is_flagged():
    s = _sys()
    c = rg.chi({"x1": 0.01, "x2": 0.0}, s, 0.01, "linear")
    assert c.one_sided
    assert math.isfinite(c.value)
    assert not rg.chi({"x1": 0.005, "x2": 0.0}, s, 0.01, "linear").one_sided


@pytest.mark.parametrize("name,index", [("case1", 0), ("case1", 1), ("case2", 0), ("case2", 1)])
@pytest.mark.parametrize("kind", KINDS)
def test_outside_layer_matches_modes(name, index, kind, rng):
    ic = cases.load_case(name)
    s = ic.systems[index]
    own = s.states[0]
    eps = 0.05
    for _ in range(1000):
        p = {"x1": float(rng.uniform(-2, 2)), "x2": float(rng.uniform(-2, 2))}
        if abs(p[own]) < eps:
            continue
        tag = "pos" if p[own] >= eps else "neg"
        assert rg.blended_field(p, s, eps, kind).tolist() == field_eval(s, tag, p).tolist()


@pytest.mark.parametrize("kind", KINDS)
def test_psi_gamma_sum_exact(kind, rng):
    s = _sys("case1", 0)
    for _ in range(500):
        p = {"x1": float(rng.uniform(-0.02, 0.02)), "x2": 0.0}
        psi, gamma = rg.psi_gamma(p, s, 0.01, kind)
        assert psi + gamma == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_psi_gamma_gradients_antisymmetric(kind, rng):
    s = _sys("case1", 0)
    eps, h = 0.01, 1e-7
    for _ in range(100):
        x = float(rng.uniform(-0.9 * eps, 0.9 * eps))
        pp, gp = rg.psi_gamma({"x1": x + h, "x2": 0.0}, s, eps, kind)
        pm, gm = rg.psi_gamma({"x1": x - h, "x2": 0.0}, s, eps, kind)
        assert (pp - pm) / (2 * h) == pytest.approx(-(gp - gm) / (2 * h), abs=1e-9 * max(1.0, abs(pp - pm) / h))


@pytest.mark.parametrize("name,index", [("case1", 0), ("case1", 1), ("case2", 0), ("case2", 1)])
@pytest.mark.parametrize("kind", KINDS)
def test_layer_jacobian_reconstruction(name, index, kind, rng):
    ic = cases.load_case(name)
    s = ic.systems[index]
    own = s.states[0]
    eps = 1e-2
    for _ in range(100):
        p = {"x1": float(rng.uniform(-2, 2)), "x2": float(rng.uniform(-2, 2))}
        p[own] = float(rng.uniform(-eps, eps))
        wrt = ic.states
        J_ad = rg.blended_jacobian(p, s, eps, kind, wrt)
        col = ic.states.index(own)
        assert np.allclose(J_ad[:, [col]], rg.layer_jacobian(p, s, eps, kind), rtol=0, atol=1e-8)


def test_regularized_field_object():
    s = _sys()
    f = rg.RegularizedField(s, 0.1, "linear")
    p = {"x1": 0.05, "x2": 0.0}
    assert f(p).tolist() == rg.blended_field(p, s, 0.1, "linear").tolist()
    assert f.jacobian(p).shape == (1, 1)
    with pytest.raises(PreconditionError):
        rg.RegularizedField(s, -1.0)


def test_frozen_case1_layer():
    ic = freeze(cases.load_case("case1"), 0, {"x2": 1.0})
    s = ic.systems[0]
    J = rg.blended_jacobian({"x1": 1e-4}, s, 1e-3, "sine")
    assert J == pytest.approx(rg.layer_jacobian({"x1": 1e-4}, s, 1e-3, "sine"), abs=1e-12)
