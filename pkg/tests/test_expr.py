import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import exprgen
from incstab import expr as ex
from incstab.errors import EvalDomainError, ExprSyntaxError, PreconditionError


def ev(text, **env):
    t = env.pop("t", 0.0)
    return ex.evaluate(ex.parse(text), env, t)


class TestParse:
    def test_case_field(self):
        assert ev("-4*x1 - 3*x1^2 + 2*y1", x1=1.0, y1=1.0) == -5.0

    def test_power_right_associative(self):
        assert ev("2^3^2") == 512.0

    def test_trailing_operator_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            ex.parse("4*")
        assert info.value.offset == 2
        assert "offset 2" in str(info.value)

    @pytest.mark.parametrize("text,value", [
        ("-2^2", -4.0),           # power binds tighter than unary minus
        ("2^-1", 0.5),
        ("1 - 2 - 3", -4.0),      # left-assoc
        ("8 / 4 / 2", 1.0),
        ("2 + 3 * 4", 14.0),
        ("(2 + 3) * 4", 20.0),
        ("--3", 3.0),
        ("1e-3 * 1000", 1.0),
        ("2.5E1", 25.0),
    ])
    def test_precedence(self, text, value):
        assert ev(text) == value

    @pytest.mark.parametrize("text", ["", "   ", "(1 + 2", "1 + 2)", "foo(1)", "sin 1", "1 +* 2",
                                      "x1 x2", "3 $ 4", "sin()", "^2", "abs(x)"])
    def test_syntax_errors(self, text):
        with pytest.raises(ExprSyntaxError):
            ex.parse(text)

    def test_unknown_function_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            ex.parse("1 + foo(x)")
        assert info.value.offset == 4

    def test_variables(self):
        assert ex.variables(ex.parse("x*y + sin(t) - x")) == {"x", "y", "t"}

    def test_substitute(self):
        e = ex.substitute(ex.parse("x*y + y"), {"y": 2.0})
        assert ex.variables(e) == {"x"}
        assert ex.evaluate(e, {"x": 3.0}) == 8.0


class TestEvaluate:
    def test_case2_field(self):
        assert ev("-8*x2 - 3*x2^2 + 4*y1", x2=0.0, y1=0.5) == 2.0

    def test_time(self):
        assert ev("sin(t)", t=0.0) == 0.0
        assert ev("t^2", t=3.0) == 9.0

    @pytest.mark.parametrize("text,env", [
        ("log(x1)", {"x1": -1.0}),
        ("log(x1)", {"x1": 0.0}),
        ("1 / x", {"x": 0.0}),
        ("sqrt(x)", {"x": -1e-300}),
        ("x^0.5", {"x": -2.0}),
        ("x^(-1)", {"x": 0.0}),
        ("exp(x)", {"x": 1000.0}),
    ])
    def test_domain_errors(self, text, env):
        with pytest.raises(EvalDomainError):
            ex.evaluate(ex.parse(text), env)

    def test_domain_error_names_node(self):
        with pytest.raises(EvalDomainError) as info:
            ex.evaluate(ex.parse("1 + log(x)"), {"x": -1.0})
        assert "log" in ex.to_text(info.value.expr)

    def test_unbound_variable(self):
        with pytest.raises(Exception):
            ex.evaluate(ex.parse("x + y"), {"x": 1.0})

    def test_integer_power_of_negative(self):
        assert ev("x^3", x=-2.0) == -8.0


class TestJacobian:
    def test_case2_sys1(self):
        J = ex.jacobian([ex.parse("-4*x1 - 9*x1^2")], {"x1": 0.5}, 0.0, ["x1"])
        assert J.tolist() == [[-13.0]]

    def test_identity(self):
        J = ex.jacobian([ex.parse("x1"), ex.parse("x2")], {"x1": 0.3, "x2": -1.0}, 0.0, ["x1", "x2"])
        assert J.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_coupling(self):
        for pt in ({"x2": 0.0, "y1": 0.0}, {"x2": 1.7, "y1": -3.0}):
            J = ex.jacobian([ex.parse("-8*x2 - 3*x2^2 + 4*y1")], pt, 0.0, ["y1"])
            assert J.tolist() == [[4.0]]

    def test_fd_examples(self):
        f = [ex.parse("x1^2")]
        assert abs(ex.fd_jacobian(f, {"x1": 1.0}, 0.0, ["x1"], 1e-5)[0, 0] - 2.0) <= 1e-9
        g = [ex.parse("-4*x1 - 9*x1^2")]
        assert ex.fd_jacobian(g, {"x1": 0.5}, 0.0, ["x1"], 1e-6)[0, 0] == pytest.approx(-13.0, rel=1e-6)

    def test_fd_rejects_zero_step(self):
        with pytest.raises(PreconditionError):
            ex.fd_jacobian([ex.parse("x")], {"x": 1.0}, 0.0, ["x"], 0.0)

    def test_wrt_time(self):
        J = ex.jacobian([ex.parse("x*sin(t)")], {"x": 2.0}, 0.5, ["t"])
        assert J[0, 0] == pytest.approx(2.0 * math.cos(0.5), abs=1e-15)

    def test_sqrt_derivative_at_zero(self):
        with pytest.raises(EvalDomainError):
            ex.jacobian([ex.parse("sqrt(x)")], {"x": 0.0}, 0.0, ["x"])

    def test_pow_zero_base_positive_exponent(self):
        J = ex.jacobian([ex.parse("x^2")], {"x": 0.0}, 0.0, ["x"])
        assert J[0, 0] == 0.0

    def test_random_against_fd(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            f = [ex.parse(exprgen.gen(rng, 4))]
            p = exprgen.point(rng)
            J = ex.jacobian(f, p, 0.0, exprgen.VARS)
            for j, v in enumerate(exprgen.VARS):
                F = ex.fd_jacobian(f, p, 0.0, [v], 1e-6 * max(1.0, abs(p[v])))[0, 0]
                true = J[0, j]
                assert abs(true - F) <= 1e-6 * abs(true) or (abs(true) < 1e-3 and abs(true - F) <= 1e-9)


seeds = st.integers(0, 2 ** 32 - 1)


@given(seeds)
def test_print_parse_roundtrip(seed):
    rng = np.random.default_rng(seed)
    e = ex.parse(exprgen.gen(rng, 4))
    text = ex.to_text(e)
    e2 = ex.parse(text)
    assert ex.to_text(e2) == text
    for _ in range(100):
        p = exprgen.point(rng)
        assert ex.evaluate(e, p) == ex.evaluate(e2, p)


@given(seeds, st.floats(-5, 5), st.floats(-5, 5))
def test_dual_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    e1 = ex.parse(exprgen.gen(rng, 3))
    e2 = ex.parse(exprgen.gen(rng, 3))
    combo = ex.BinOp("+", ex.BinOp("*", ex.Const(a), e1), ex.BinOp("*", ex.Const(b), e2))
    p = exprgen.point(rng)
    seed_dir = {v: float(rng.uniform(-1, 1)) for v in exprgen.VARS}
    d = ex.evaluate_dual(combo, p, 0.0, seed_dir)
    d1 = ex.evaluate_dual(e1, p, 0.0, seed_dir)
    d2 = ex.evaluate_dual(e2, p, 0.0, seed_dir)
    scale = 1.0 + abs(a * d1.deriv) + abs(b * d2.deriv)
    assert d.deriv == pytest.approx(a * d1.deriv + b * d2.deriv, abs=1e-12 * scale)
    assert d.value == pytest.approx(a * d1.value + b * d2.value, abs=1e-12 * (1 + abs(a * d1.value) + abs(b * d2.value)))


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_dual_product_rule(av, ad, bv, bd):
    r = ex.Dual(av, ad) * ex.Dual(bv, bd)
    assert r.value == av * bv
    assert r.deriv == pytest.approx(av * bd + ad * bv, abs=1e-12)


def test_const_rejects_nonfinite():
    with pytest.raises(Exception):
        ex.Const(float("nan"))


def test_compiled_program_matches_tree(backend):
    from incstab import kernels

    rng = np.random.default_rng(11)
    for _ in range(100):
        e = ex.parse(exprgen.gen(rng, 4))
        prog = ex.compile_expr(e, exprgen.VARS + ("t",))
        p = exprgen.point(rng)
        x = np.array([p["x"], p["y"], p["z"], 0.0])
        v = kernels.eval_value(prog.ops, prog.args, prog.consts, 0, len(prog), x)
        assert v == ex.evaluate(e, p)
        dv, dd = kernels.eval_dual(prog.ops, prog.args, prog.consts, 0, len(prog), x,
                                   np.array([1.0, 0.0, 0.0, 0.0]))
        assert dd == ex.evaluate_dual(e, p, 0.0, {"x": 1.0}).deriv
