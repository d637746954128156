import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from incstab.errors import PreconditionError
from incstab.measure import (MeasureNorm, mu, mu_batch, mu_limit_oracle, opnorm, opnorm_batch,
                             sym_eig_max)

NORMS = ["one", "two", "inf"]


def test_examples(backend):
    assert mu(np.eye(2), "inf") == 1.0
    assert mu(np.diag([-4.0, -8.0]), "two") == -4.0
    assert mu([[-2.0, 1.0], [0.0, -3.0]], "one") == -2.0
    assert mu_limit_oracle([[-2.0, 1.0], [0.0, -3.0]], "one") == pytest.approx(-2.0, abs=1e-6)
    assert mu([[0.0, 1.0], [-1.0, 0.0]], "two") == 0.0
    assert mu([[0.0, 1.0], [-1.0, 0.0]], "inf") == 1.0


def test_closed_forms():
    A = np.array([[1.0, -2.0, 0.5], [3.0, -4.0, 1.0], [-1.0, 0.0, 2.0]])
    assert mu(A, 1) == max(1 + 3 + 1, -4 + 2 + 0, 2 + 0.5 + 1)
    assert mu(A, "inf") == max(1 + 2 + 0.5, -4 + 3 + 1, 2 + 1 + 0)
    assert mu(A, 2) == pytest.approx(np.linalg.eigvalsh((A + A.T) / 2).max(), abs=1e-12)


def test_sym_eig_max(backend):
    assert sym_eig_max(np.diag([3.0, 1.0, -2.0])) == 3.0
    assert sym_eig_max([[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(1.0, abs=1e-15)
    rng = np.random.default_rng(1)
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        lam = rng.uniform(-5, 5, size=5)
        S = (Q * lam) @ Q.T
        S = 0.5 * (S + S.T)
        assert sym_eig_max(S) == pytest.approx(lam.max(), abs=1e-10)
    with pytest.raises(PreconditionError):
        sym_eig_max([[0.0, 1.0], [2.0, 0.0]])


def test_oracle_examples():
    assert mu_limit_oracle(np.diag([-4.0, -8.0]), "two", 1e-8) == pytest.approx(-4.0, abs=1e-6)
    for h in (1e-8, 1e-6, 1e-4):
        assert mu_limit_oracle(np.zeros((3, 3)), "two", h) == 0.0
    assert mu_limit_oracle(np.eye(2), "one", 1e-8) == pytest.approx(1.0, abs=1e-7)
    for h in (0.0, -1e-8, 1e-3):
        with pytest.raises(PreconditionError):
            mu_limit_oracle(np.eye(2), "two", h)


def test_opnorm(backend):
    for p in NORMS:
        assert opnorm([[4.0]], p) == 4.0
        assert opnorm(np.eye(3), p) == pytest.approx(1.0, abs=1e-15)
    assert opnorm([[3.0, 0.0], [0.0, -2.0]], "two") == pytest.approx(3.0, abs=1e-14)
    A = np.array([[1.0, 2.0, 3.0], [-4.0, 5.0, 6.0]])
    for p in NORMS:
        assert opnorm(A, p) == pytest.approx(np.linalg.norm(A, MeasureNorm.coerce(p).numpy_ord), rel=1e-12)


def test_input_validation():
    with pytest.raises(PreconditionError):
        mu(np.ones((2, 3)))
    with pytest.raises(PreconditionError):
        mu([[np.nan]])
    with pytest.raises(PreconditionError):
        mu(np.zeros((0, 0)))
    with pytest.raises(PreconditionError):
        MeasureNorm.coerce("fro")
    assert MeasureNorm.coerce(2) is MeasureNorm.TWO
    assert MeasureNorm.coerce("INF") is MeasureNorm.INF


def test_batch_matches_scalar(backend):
    rng = np.random.default_rng(2)
    As = rng.uniform(-5, 5, size=(50, 3, 3))
    for p in NORMS:
        np.testing.assert_array_equal(mu_batch(As, p), [mu(A, p) for A in As])
        np.testing.assert_array_equal(opnorm_batch(As, p), [opnorm(A, p) for A in As])
    assert mu_batch(np.zeros((0, 2, 2))).shape == (0,)


def test_oracle_consistency(backend):
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        A = rng.uniform(-5, 5, size=(n, n))
        for p in NORMS:
            scale = max(1.0, opnorm(A, p))
            assert abs(mu(A, p) - mu_limit_oracle(A, p, 1e-8)) <= 1e-5 * scale


square = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-5, 5, allow_nan=False)))
pairs = st.integers(1, 6).flatmap(
    lambda n: st.tuples(arrays(np.float64, (n, n), elements=st.floats(-5, 5)),
                        arrays(np.float64, (n, n), elements=st.floats(-5, 5))))


@given(pairs, st.sampled_from(NORMS))
def test_subadditivity(AB, p):
    A, B = AB
    assert mu(A + B, p) <= mu(A, p) + mu(B, p) + 1e-9


@given(square, st.floats(0, 10), st.sampled_from(NORMS))
def test_homogeneity(A, c, p):
    assert mu(c * A, p) == pytest.approx(c * mu(A, p), abs=1e-9 * max(1.0, c * opnorm(A, p)))


@given(square, st.sampled_from(NORMS))
def test_bounds(A, p):
    m = mu(A, p)
    nrm = opnorm(A, p)
    tol = 1e-9 * max(1.0, nrm)
    assert -nrm - tol <= m <= nrm + tol
    assert np.trace(A) / A.shape[0] <= m + tol
    assert np.linalg.eigvals(A).real.max() <= m + 1e-9 * max(1.0, nrm) + 1e-7
