import copy
import json
import math

import numpy as np
import pytest

from incstab import cases, certify as ct
from incstab.errors import PreconditionError
from incstab.measure import mu, opnorm
from incstab.model import from_dict, load_config, mode_jacobian

NORMS = ["one", "two", "inf"]
FAST = ct.SamplingPlan(grid=16, samples=100, seed=1)


def single(pos, neg, manifold="x", region=(-2, 2), states=("x",)):
    return from_dict({
        "name": "s", "topology": "single",
        "systems": [{"states": list(states), "manifold": manifold, "mode_pos": list(pos), "mode_neg": list(neg)}],
        "region": {s: list(region) for s in states},
    })


@pytest.mark.parametrize("p", NORMS)
def test_case1_values(case1, p, backend):
    rep = ct.certify(case1, p)
    b = rep.bounds
    for k, v in {"p1": 4, "p2": 4, "q1": 8, "q2": 8, "k1": 2, "k2": 2, "m1": 3, "m2": 3, "k": 2, "m": 3}.items():
        assert abs(b[k] - v) <= 1e-9, k
    assert abs(rep.rates["gamma_product"] - 0.1875) <= 1e-9
    assert rep.condition("sys1.manifold").value <= 1e-8
    assert rep.condition("sys2.manifold").value <= 1e-8
    assert rep.verdict
    assert rep.rates["eta"] == pytest.approx(ct.comparison_rate(4, 8, 2, 3), abs=1e-12)


@pytest.mark.parametrize("p", NORMS)
def test_case2_values(case2, p, backend):
    rep = ct.certify(case2, p)
    for k, v in {"p": 4, "q": 8, "c": 4, "p1": 4, "p2": 4, "q1": 8, "q2": 8}.items():
        assert abs(rep.bounds[k] - v) <= 1e-9, k
    assert abs(rep.rates["eta"] - 4.0) <= 1e-9
    assert rep.rates["gamma_product"] is None
    assert rep.verdict


def test_single_contraction_examples(case2):
    b = ct.check_mode_contraction(case2, 0, "pos", "two")
    assert b.value == -4.0 and b.argmax["x1"] == 0.0 and b.kind == "measure-max"
    expanding = single(["x"], ["x"])
    rep = ct.certify(expanding, "two", FAST)
    assert rep.condition("sys1.pos.contraction").value == pytest.approx(1.0)
    assert not rep.verdict
    assert rep.rates["eta"] is None


def test_case1_sys2_pos(case1):
    assert ct.check_mode_contraction(case1, 1, "pos", "two").value == -8.0


def test_interconnection_bounds(case1, case2):
    for side in ("pos", "neg"):
        assert ct.check_interconnection_bound(case1, 0, side).value == 2.0
        assert ct.check_interconnection_bound(case1, 1, side).value == 3.0
        assert ct.check_interconnection_bound(case2, 1, side).value == 4.0
    with pytest.raises(PreconditionError):
        ct.check_interconnection_bound(single(["-x"], ["-x"]), 0, "pos")


def test_manifold_examples(case1, case2):
    for ic in (case1, case2):
        b, ok = ct.check_manifold(ic, 0)
        assert ok and b.value == 0.0
    jump = single(["-x + 1"], ["-x"])
    b, ok = ct.check_manifold(jump, 0, "two", FAST)
    assert not ok and b.value == pytest.approx(1.0)
    rep = ct.certify(jump, "two", FAST)
    assert not rep.condition("sys1.manifold").passed and not rep.verdict


def test_manifold_off_grid_bisection():
    ic = single(["-x"], ["-x"], manifold="x - 0.3333")
    M = ct.level_points(ic, 0, ct.SamplingPlan(grid=8))
    assert len(M) == 1
    assert abs(M[0, 0] - 0.3333) <= 1e-12


def test_no_manifold_points_is_reported():
    ic = single(["-x"], ["-x"], manifold="x - 5")
    with pytest.raises(ct.CertificationError):
        ct.check_manifold(ic, 0, "two", FAST)
    rep = ct.certify(ic, "two", FAST)
    cond = rep.condition("sys1.manifold")
    assert not cond.passed and "no manifold points" in cond.detail
    assert not rep.verdict


def test_empty_half_region_is_reported():
    ic = single(["-x"], ["-x"], manifold="x^2 + 1")
    rep = ct.certify(ic, "two", FAST)
    assert not rep.condition("sys1.neg.contraction").passed
    assert "empty half-region" in rep.condition("sys1.neg.contraction").detail


def test_strict_mode_checks_whole_box(case2):
    # Case II sys-I pos field at x1 < 0 has Jacobian -4 - 18 x1 > 0 for x1 < -2/9
    rep = ct.certify(case2, "two", FAST, ct.Tolerances(strict=True))
    assert not rep.condition("sys1.pos.contraction").passed
    assert rep.condition("sys1.pos.contraction").value == pytest.approx(32.0)


def test_small_gain_examples():
    assert ct.small_gain(2, 3, 4, 8) == 0.1875
    assert ct.small_gain(0, 123.0, 4, 8) == 0.0
    assert ct.small_gain(4, 8, 4, 8) == 1.0
    for pf, pg in ((0, 8), (4, -1)):
        with pytest.raises(PreconditionError):
            ct.small_gain(1, 1, pf, pg)


def test_small_gain_fail_boundary():
    doc = copy.deepcopy(cases.CASE1)
    doc["systems"][0]["mode_pos"] = ["-4*x1 - 3*x1^2 + 4*x2"]
    doc["systems"][0]["mode_neg"] = ["-4*x1 + 3*x1^2 + 4*x2"]
    doc["systems"][1]["mode_pos"] = ["-8*x2 - 3*x2^2 + 8*x1"]
    doc["systems"][1]["mode_neg"] = ["-8*x2 + 3*x2^2 + 8*x1"]
    rep = ct.certify(from_dict(doc), "two", FAST)
    sg = rep.condition("small_gain")
    assert sg.value == 1.0 and not sg.passed and not rep.verdict


def test_comparison_rate():
    assert ct.comparison_rate(4, 8, 0, 3) == 4.0
    assert ct.comparison_rate(4, 8, 4, 8) == pytest.approx(0.0, abs=1e-12)
    lam = np.linalg.eigvals(np.array([[-4.0, 2.0], [3.0, -8.0]])).real.max()
    assert ct.comparison_rate(4, 8, 2, 3) == pytest.approx(-lam, rel=1e-12)


def test_relaxed_blend():
    rb = ct.check_relaxed_blend(cases.load_case("case2"), 0, "two", eps=1e-3)
    assert rb.value == pytest.approx(-4.0, abs=1e-9)
    # pos mode alone is expanding near the manifold; the linear blend stays contracting
    ic = single(["x^2 - x^3"], ["-3*x"])
    pos = ct.check_mode_contraction(ic, 0, "pos", "two", FAST)
    assert pos.value > 0.3
    blend = ct.check_relaxed_blend(ic, 0, "two", FAST, eps=1.0, kind="linear")
    assert blend.value < 0.0
    with pytest.raises(PreconditionError):
        ct.check_relaxed_blend(ic, 0, "two", FAST, eps=0.0)


def test_relaxed_blend_implied_by_modes(case1):
    for i in (0, 1):
        assert ct.check_relaxed_blend(case1, i, "two", FAST, eps=0.05).value < 0.0


def test_argmax_reproduces_value(case1):
    rep = ct.certify(case1, "two", FAST)
    for cond in rep.conditions:
        if cond.argmax is None or not cond.name.endswith(("contraction", "coupling")):
            continue
        s, side, kind = cond.name.split(".")
        sys = case1.systems[int(s[3:]) - 1]
        if kind == "contraction":
            v = mu(mode_jacobian(sys, side, cond.argmax), "two")
        else:
            v = opnorm(mode_jacobian(sys, side, cond.argmax, "other"), "two")
        assert abs(v - cond.value) <= 1e-12


def test_determinism(case1):
    a = ct.certify(case1, "two", ct.SamplingPlan(32, 500, 7)).to_json()
    b = ct.certify(case1, "two", ct.SamplingPlan(32, 500, 7)).to_json()
    assert a == b


def test_backends_give_identical_reports(case1):
    from incstab import kernels
    out = []
    for name in kernels.available_backends():
        prev = kernels.set_backend(name)
        try:
            out.append(ct.certify(case1, "two", FAST).to_json())
        finally:
            kernels.set_backend(prev)
    assert all(o == out[0] for o in out)


NONLINEAR = {
    "name": "nl", "topology": "feedback",
    "systems": [
        {"states": ["a", "b"], "manifold": "a - 0.3*b",
         "mode_pos": ["-3*a + sin(b) - 0.4*a^3 + 0.5*u", "-2*b + 0.3*a*b + cos(v)"],
         "mode_neg": ["-3*a - sin(b) + 0.2*a^2", "-2.5*b + tanh(a) + 0.1*u*v"]},
        {"states": ["u", "v"], "manifold": "u + v^2 - 0.5",
         "mode_pos": ["-4*u + 0.3*sin(a*v)", "-3*v + 0.2*u^2 + 0.1*b"],
         "mode_neg": ["-4*u - 0.2*v^3", "-3*v + 0.25*exp(0.3*a)"]},
    ],
    "region": {"a": [-1, 1.3], "b": [-0.7, 1], "u": [-1, 0.9], "v": [-1.1, 1]},
}


@pytest.mark.parametrize("p", NORMS)
def test_refinement_monotone(p):
    ic = from_dict(NONLINEAR)
    prev = None
    for grid in (4, 8, 16):
        rep = ct.certify(ic, p, ct.SamplingPlan(grid, 50, 3))
        vals = {c.name: c.value for c in rep.conditions
                if c.name.endswith(("contraction", "coupling", "manifold")) and c.value is not None}
        if prev is not None:
            for k, v in vals.items():
                assert v >= prev[k], (k, grid)
        prev = vals
    for i in (0, 1):
        r = [ct.check_relaxed_blend(ic, i, p, ct.SamplingPlan(g, 50, 3), eps=0.1).value for g in (4, 8, 16)]
        assert r[0] <= r[1] <= r[2]


def _scaled(doc, index, c):
    d = copy.deepcopy(doc)
    s = d["systems"][index]
    for tag in ("mode_pos", "mode_neg"):
        s[tag] = [f"{c!r}*({e})" for e in s[tag]]
    return from_dict(d)


@pytest.mark.parametrize("c", [2.0, 0.5, 3.0, 0.1])
@pytest.mark.parametrize("p", NORMS)
def test_norm_scaling(c, p):
    plan = ct.SamplingPlan(6, 30, 5)
    base = ct.certify(from_dict(NONLINEAR), p, plan)
    for index in (0, 1):
        rep = ct.certify(_scaled(NONLINEAR, index, c), p, plan)
        for cb, cs in zip(base.conditions, rep.conditions):
            assert cb.name == cs.name
            if cs.name.startswith(f"sys{index + 1}.") and not cs.name.endswith("manifold"):
                assert cs.value == pytest.approx(c * cb.value, rel=1e-12, abs=1e-14)
                if cs.name.endswith("contraction"):
                    assert cs.passed == cb.passed


def test_report_json_shape(case2):
    rep = ct.certify(case2, "inf", FAST)
    d = json.loads(rep.to_json())
    assert {"topology", "norm", "conditions", "rates", "verdict", "plan"} <= set(d)
    assert set(d["rates"]) == {"p", "q", "eta", "gamma_product"}
    assert d["plan"] == {"grid": 16, "samples": 100, "seed": 1}
    assert d["norm"] == "inf" and d["verdict"] == "pass"
    for c in d["conditions"]:
        assert {"name", "value", "threshold", "pass", "argmax"} <= set(c)
    assert any("sampled estimates" in n for n in d["notes"])


def test_time_dependent_note():
    ic = single(["-x + 0.1*sin(t)"], ["-x"])
    rep = ct.certify(ic, "two", FAST)
    assert any("t = 0" in n for n in rep.notes)


def test_plan_validation():
    with pytest.raises(PreconditionError):
        ct.SamplingPlan(grid=1)
    with pytest.raises(PreconditionError):
        ct.SamplingPlan(samples=-1)


def test_grid_size_guard():
    ic = from_dict(NONLINEAR)
    with pytest.raises(PreconditionError, match="exceeds"):
        ct.certify(ic, "two", ct.SamplingPlan(grid=100))
