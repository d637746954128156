"""Exponential decay fits ``y ~ K exp(-c t)`` and envelope checks on norm traces."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import PreconditionError

FLOOR = 1e-14
MIN_POINTS = 10
DEFAULT_WINDOW_START = 0.1


class Series(NamedTuple):
    t: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class RateFit:
    K: float
    c: float
    window: tuple
    residual: float
    points: int

    def predict(self, t):
        return self.K * np.exp(-self.c * np.asarray(t, dtype=np.float64))

    def to_dict(self):
        return {"K": self.K, "c": self.c, "window": list(self.window),
                "residual": self.residual, "points": self.points}


@dataclass(frozen=True)
class EnvelopeResult:
    passed: bool
    worst_ratio: float
    worst_t: float
    violation: float  # worst_ratio - (1 + slack); positive means fail

    def to_dict(self):
        return {"pass": self.passed, "worst_ratio": self.worst_ratio,
                "worst_t": self.worst_t, "violation": self.violation}


def as_series(t, y=None) -> Series:
    if y is None:
        t, y = t
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.ndim != 1 or t.shape != y.shape:
        raise PreconditionError("series needs matching 1-D time and value arrays")
    if len(t) > 1 and np.any(np.diff(t) <= 0.0):
        raise PreconditionError("series times must be strictly increasing")
    return Series(t, y)


def default_window(t):
    span = float(t[-1] - t[0])
    return (float(t[0]) + DEFAULT_WINDOW_START * span, float(t[-1]))


def fit_exponential(series, window=None) -> RateFit:
    """Least squares fit of ``log y = log K - c t`` over ``window``.

    The default window skips the first tenth of the span.  Samples below
    ``1e-14`` are treated as the floating-point floor and dropped.
    """
    t, y = as_series(series)
    if len(t) == 0:
        raise PreconditionError("empty series")
    lo, hi = default_window(t) if window is None else (float(window[0]), float(window[1]))
    if not lo < hi:
        raise PreconditionError(f"window [{lo}, {hi}] is empty")
    if lo < t[0] or hi > t[-1]:
        raise PreconditionError(f"window [{lo}, {hi}] exceeds the trace span [{t[0]}, {t[-1]}]")
    sel = (t >= lo) & (t <= hi)
    tw, yw = t[sel], y[sel]
    bad = ~(yw > 0.0) | ~np.isfinite(yw)
    if bad.any():
        k = int(np.argmax(bad))
        raise PreconditionError(f"nonpositive sample y={yw[k]!r} at t={tw[k]!r} in fit window")
    keep = yw >= FLOOR
    tw, yw = tw[keep], yw[keep]
    if len(tw) < MIN_POINTS:
        raise PreconditionError(f"need at least {MIN_POINTS} points above {FLOOR} in the window, got {len(tw)}")
    ly = np.log(yw)
    tm = tw.mean()
    lm = ly.mean()
    dt = tw - tm
    c = -float(np.dot(dt, ly - lm) / np.dot(dt, dt))
    logK = lm + c * tm
    resid = ly - (logK - c * tw)
    return RateFit(float(math.exp(logK)), c, (lo, hi), float(np.sqrt(np.mean(resid ** 2))), len(tw))


def envelope_check(series, K, c, slack=0.0, t0=None) -> EnvelopeResult:
    """Check ``y(t) <= (1 + slack) K exp(-c (t - t0)) y(t0)`` for every sample with ``t >= t0``.

    ``t0`` defaults to the first sample; ``y(t0)`` is interpolated when ``t0``
    falls between samples.
    """
    t, y = as_series(series)
    if len(t) == 0:
        raise PreconditionError("empty series")
    t0 = float(t[0]) if t0 is None else float(t0)
    y0 = float(np.interp(t0, t, y))
    sel = t >= t0
    ts, ys = t[sel], y[sel]
    bound = K * np.exp(-c * (ts - t0)) * y0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0.0, ys / bound, np.where(ys > 0.0, np.inf, 0.0))
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    limit = 1.0 + slack
    return EnvelopeResult(bool(worst <= limit), worst, float(ts[k]), worst - limit)
