"""Transition functions, blending weights and the regularised vector field.

Inside the boundary layer ``|H| < eps`` the two modes are blended::

    f_eps = Psi * f_pos + Gamma * f_neg,   Psi = (1 + zeta(H/eps)) / 2,  Gamma = 1 - Psi

and the Jacobian picks up the rank-one term ``(f_pos - f_neg) chi grad(H)`` with
``chi = zeta'(H/eps) / (2 eps)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from . import expr as ex
from .errors import PreconditionError
from .kernels import opcodes as oc
from .model import SwitchedSystem, field_eval, manifold_gradient, mode_jacobian

HALF_PI = 0.5 * math.pi
DEFAULT_EPS = 1e-3


class TransitionKind(str, enum.Enum):
    SINE = "sine"
    LINEAR = "linear"

    @classmethod
    def coerce(cls, value) -> "TransitionKind":
        try:
            return cls(value.value if isinstance(value, cls) else str(value).lower())
        except ValueError:
            raise PreconditionError(f"unknown transition kind {value!r}") from None

    @property
    def code(self):
        return oc.ZETA_SINE if self is TransitionKind.SINE else oc.ZETA_LINEAR


def zeta(r: float, kind="sine") -> float:
    """Odd, nondecreasing saturation onto [-1, 1]; exactly +-1 for ``|r| >= 1``."""
    kind = TransitionKind.coerce(kind)
    if r >= 1.0:
        return 1.0
    if r <= -1.0:
        return -1.0
    if kind is TransitionKind.SINE:
        return math.sin(HALF_PI * r)
    return float(r)


class Slope(NamedTuple):
    value: float
    one_sided: bool


def zeta_slope(r: float, kind="sine") -> Slope:
    """d zeta / dr. At the linear kind's kinks the inner one-sided value is flagged."""
    kind = TransitionKind.coerce(kind)
    if kind is TransitionKind.LINEAR and abs(r) == 1.0:
        return Slope(1.0, True)
    if r >= 1.0 or r <= -1.0:
        return Slope(0.0, False)
    if kind is TransitionKind.SINE:
        return Slope(HALF_PI * math.cos(HALF_PI * r), False)
    return Slope(1.0, False)


def zeta_dual(r: ex.Dual, kind="sine") -> ex.Dual:
    kind = TransitionKind.coerce(kind)
    if r.value >= 1.0:
        return ex.Dual(1.0, 0.0)
    if r.value <= -1.0:
        return ex.Dual(-1.0, 0.0)
    if kind is TransitionKind.SINE:
        return ex.dual_call("sin", r * HALF_PI)
    return r


def _check_eps(eps):
    if not eps > 0.0:
        raise PreconditionError("regularisation parameter eps must be positive")


def _h(sys, x):
    return ex.evaluate(sys.manifold, x, float(x.get("t", 0.0)))


def psi_gamma(x: Mapping[str, float], sys: SwitchedSystem, eps=DEFAULT_EPS, kind="sine"):
    """Blending weights (Psi, Gamma); Gamma is built as 1 - Psi so they sum to 1 exactly."""
    _check_eps(eps)
    psi = 0.5 * (1.0 + zeta(_h(sys, x) / eps, kind))
    return psi, 1.0 - psi


def blended_field(x: Mapping[str, float], sys: SwitchedSystem, eps=DEFAULT_EPS, kind="sine") -> np.ndarray:
    psi, gamma = psi_gamma(x, sys, eps, kind)
    return psi * field_eval(sys, "pos", x) + gamma * field_eval(sys, "neg", x)


class Chi(NamedTuple):
    value: float
    one_sided: bool


def chi(x: Mapping[str, float], sys: SwitchedSystem, eps=DEFAULT_EPS, kind="sine") -> Chi:
    """Boundary-layer factor zeta'(H/eps) / (2 eps)."""
    _check_eps(eps)
    slope = zeta_slope(_h(sys, x) / eps, kind)
    return Chi(slope.value / (2.0 * eps), slope.one_sided)


def blended_jacobian(x: Mapping[str, float], sys: SwitchedSystem, eps=DEFAULT_EPS,
                     kind="sine", wrt=None) -> np.ndarray:
    """Jacobian of the blended field by dual numbers pushed through the whole blend."""
    _check_eps(eps)
    wrt = tuple(sys.states if wrt is None else wrt)
    t = float(x.get("t", 0.0))
    J = np.empty((sys.dim, len(wrt)))
    for j, name in enumerate(wrt):
        seed = {name: 1.0}
        h = ex.evaluate_dual(sys.manifold, x, t, seed)
        psi = 0.5 * (1.0 + zeta_dual(h / eps, kind))
        gamma = 1.0 - psi
        for i in range(sys.dim):
            fp = ex.evaluate_dual(sys.mode_pos.field[i], x, t, seed)
            fn = ex.evaluate_dual(sys.mode_neg.field[i], x, t, seed)
            J[i, j] = (psi * fp + gamma * fn).deriv
    return J


def layer_jacobian(x: Mapping[str, float], sys: SwitchedSystem, eps=DEFAULT_EPS, kind="sine") -> np.ndarray:
    """Term-by-term Jacobian: Psi J_pos + Gamma J_neg + (f_pos - f_neg) chi grad H."""
    psi, gamma = psi_gamma(x, sys, eps, kind)
    jump = field_eval(sys, "pos", x) - field_eval(sys, "neg", x)
    c = chi(x, sys, eps, kind).value
    return (psi * mode_jacobian(sys, "pos", x) + gamma * mode_jacobian(sys, "neg", x)
            + c * np.outer(jump, manifold_gradient(sys, x)))


@dataclass(frozen=True)
class RegularizedField:
    source: SwitchedSystem
    eps: float = DEFAULT_EPS
    kind: TransitionKind = TransitionKind.SINE

    def __post_init__(self):
        _check_eps(self.eps)
        object.__setattr__(self, "kind", TransitionKind.coerce(self.kind))

    def __call__(self, x):
        return blended_field(x, self.source, self.eps, self.kind)

    def jacobian(self, x, wrt=None):
        return blended_jacobian(x, self.source, self.eps, self.kind, wrt)
