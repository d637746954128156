"""Matrix measures (logarithmic norms) and induced norms for the 1, 2 and inf norms.

Closed forms::

    mu_1(A)   = max_j ( a_jj + sum_{i != j} |a_ij| )      column-wise
    mu_inf(A) = max_i ( a_ii + sum_{j != i} |a_ij| )      row-wise
    mu_2(A)   = lambda_max( (A + A^T) / 2 )

``mu_limit_oracle`` evaluates the defining one-sided limit
``(||I + hA|| - 1) / h`` with numpy's induced norms, independently of the
closed forms above.
"""
from __future__ import annotations

import enum

import numpy as np

from . import kernels
from .errors import PreconditionError
from .kernels import opcodes as oc


class MeasureNorm(str, enum.Enum):
    ONE = "one"
    TWO = "two"
    INF = "inf"

    @classmethod
    def coerce(cls, value) -> "MeasureNorm":
        """Accept a MeasureNorm, ``"one"/"two"/"inf"`` or ``1/2/"1"/"2"/"inf"``."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"1": cls.ONE, "one": cls.ONE, "2": cls.TWO, "two": cls.TWO,
                   "inf": cls.INF, "infinity": cls.INF}
        if key not in aliases:
            raise PreconditionError(f"unknown norm {value!r}; expected 1, 2 or inf")
        return aliases[key]

    @property
    def code(self):
        return {"one": oc.NORM_ONE, "two": oc.NORM_TWO, "inf": oc.NORM_INF}[self.value]

    @property
    def numpy_ord(self):
        return {"one": 1, "two": 2, "inf": np.inf}[self.value]

    @property
    def label(self):
        return {"one": "1", "two": "2", "inf": "inf"}[self.value]


def as_matrix(A) -> np.ndarray:
    M = np.array(A, dtype=np.float64, ndmin=2, copy=True)
    if M.ndim != 2:
        raise PreconditionError(f"expected a 2-D matrix, got shape {M.shape}")
    if M.size == 0:
        raise PreconditionError("empty matrix")
    if not np.all(np.isfinite(M)):
        raise PreconditionError("matrix has non-finite entries")
    return M


def _square(A) -> np.ndarray:
    M = as_matrix(A)
    if M.shape[0] != M.shape[1]:
        raise PreconditionError(f"matrix measure needs a square matrix, got {M.shape}")
    return M


def mu(A, p="two") -> float:
    """Matrix measure of square ``A`` for the induced ``p`` norm."""
    M = _square(A)
    return float(kernels.mu(M, MeasureNorm.coerce(p).code))


def sym_eig_max(S) -> float:
    """Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations."""
    M = _square(S)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-12 * scale:
        raise PreconditionError("sym_eig_max needs a symmetric matrix")
    return float(kernels.sym_eig_max(M))


def opnorm(A, p="two") -> float:
    """Induced operator norm (any shape)."""
    M = as_matrix(A)
    return float(kernels.opnorm(M, MeasureNorm.coerce(p).code))


def mu_limit_oracle(A, p="two", h=1e-8) -> float:
    """First-order approximation of the measure from its limit definition."""
    M = _square(A)
    if not (0.0 < h <= 1e-4):
        raise PreconditionError("oracle step h must lie in (0, 1e-4]")
    norm = np.linalg.norm(np.eye(M.shape[0]) + h * M, MeasureNorm.coerce(p).numpy_ord)
    return float((norm - 1.0) / h)


def mu_batch(As, p="two") -> np.ndarray:
    """Measures of a stack of square matrices with shape (N, n, n)."""
    As = np.ascontiguousarray(As, dtype=np.float64)
    if As.ndim != 3 or As.shape[1] != As.shape[2]:
        raise PreconditionError(f"expected (N, n, n) stack, got {As.shape}")
    if As.shape[0] == 0:
        return np.zeros(0)
    return kernels.mu_batch(As, MeasureNorm.coerce(p).code)


def opnorm_batch(As, p="two") -> np.ndarray:
    As = np.ascontiguousarray(As, dtype=np.float64)
    if As.ndim != 3:
        raise PreconditionError(f"expected (N, m, k) stack, got {As.shape}")
    if As.shape[0] == 0:
        return np.zeros(0)
    return kernels.opnorm_batch(As, MeasureNorm.coerce(p).code)
