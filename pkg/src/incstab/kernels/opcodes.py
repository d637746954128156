"""Instruction and status codes shared by both kernel backends.

The Cython source hard-codes the same integers; keep them in sync.
"""

CONST = 0
VAR = 1
NEG = 2
ADD = 3
SUB = 4
MUL = 5
DIV = 6
POW = 7
SIN = 8
COS = 9
EXP = 10
LOG = 11
SQRT = 12
TANH = 13

OK = 0
E_DIV_ZERO = 1
E_POW_DOMAIN = 2
E_LOG_DOMAIN = 3
E_SQRT_DOMAIN = 4
E_SQRT_DERIV = 5
E_POW_DERIV = 6
E_NONFINITE = 7
E_STATE_NONFINITE = 8

REASONS = {
    E_DIV_ZERO: "division by zero",
    E_POW_DOMAIN: "negative base with non-integer exponent",
    E_LOG_DOMAIN: "log of non-positive argument",
    E_SQRT_DOMAIN: "sqrt of negative argument",
    E_SQRT_DERIV: "sqrt derivative at zero",
    E_POW_DERIV: "exponent derivative undefined for non-positive base",
    E_NONFINITE: "non-finite result",
    E_STATE_NONFINITE: "non-finite state",
}

NORM_ONE = 1
NORM_TWO = 2
NORM_INF = 3

ZETA_SINE = 0
ZETA_LINEAR = 1
