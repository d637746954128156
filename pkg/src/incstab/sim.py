"""Fixed-step RK4 simulation of switched, regularised and variational dynamics.

Event-driven runs keep one active mode per system, locate manifold crossings
by bisection on the step fraction and insert the crossing as an extra sample.
Regularised runs integrate the blended field of every system jointly; the
variational run carries ``d_xi`` along, using the exact directional derivative
of the blended field (including the boundary-layer term).
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import BlowUpError, PreconditionError, SlidingModeError
from .kernels import opcodes as oc
from .measure import MeasureNorm
from .model import Interconnection, active_mode
from .rates import Series
from .regularize import DEFAULT_EPS, TransitionKind

EVENT_TOL = 1e-10
MAX_CROSSINGS_PER_STEP = 50
METHODS = ("event", "regularized")
_BLOWUP = (oc.E_STATE_NONFINITE, oc.E_NONFINITE)


@dataclass(frozen=True)
class SimConfig:
    method: str = "event"
    t0: float = 0.0
    tf: float = 5.0
    dt: float = 1e-3
    eps: float = DEFAULT_EPS
    kind: str = "sine"
    x0: Mapping[str, float] = field(default_factory=dict)
    dx0: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise PreconditionError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("t0", "tf", "dt", "eps"):
            if not math.isfinite(getattr(self, name)):
                raise PreconditionError(f"{name} must be finite")
        if not self.tf > self.t0:
            raise PreconditionError("tf must exceed t0")
        if not 0.0 < self.dt <= (self.tf - self.t0) / 10.0:
            raise PreconditionError("dt must lie in (0, (tf - t0) / 10]")
        if self.method == "regularized" and not self.eps > 0.0:
            raise PreconditionError("eps must be positive for regularized runs")
        TransitionKind.coerce(self.kind)

    def replace(self, **kw) -> "SimConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SimConfig(**d)


@dataclass(frozen=True)
class Event:
    t: float
    system: int  # 1-based
    direction: str  # "+" into mode_pos, "-" into mode_neg


@dataclass(frozen=True, eq=False)
class Trace:
    times: np.ndarray
    states: np.ndarray
    names: tuple
    var: np.ndarray | None = None
    events: tuple = ()
    is_event: np.ndarray | None = None

    def __post_init__(self):
        if self.is_event is None:
            object.__setattr__(self, "is_event", np.zeros(len(self.times), dtype=bool))

    def __len__(self):
        return len(self.times)

    def column(self, name):
        if name in self.names:
            return self.states[:, self.names.index(name)]
        if name.startswith("d_") and self.var is not None and name[2:] in self.names:
            return self.var[:, self.names.index(name[2:])]
        raise KeyError(name)

    def nominal(self) -> "Trace":
        """The trace without inserted event points."""
        keep = ~self.is_event
        var = None if self.var is None else self.var[keep]
        return Trace(self.times[keep], self.states[keep], self.names, var, self.events, self.is_event[keep])

    def norm_series(self, p="two", variational=True) -> Series:
        data = self.var if variational else self.states
        if data is None:
            raise PreconditionError("trace has no variational block")
        return Series(self.times.copy(), _norms(data, p))

    def to_csv(self) -> str:
        out = io.StringIO()
        for e in self.events:
            out.write(f"# event t={e.t:.17g} system={e.system} dir={e.direction}\n")
        cols = ["t", *self.names]
        if self.var is not None:
            cols += [f"d_{n}" for n in self.names]
        out.write(",".join(cols) + "\n")
        data = [self.times[:, None], self.states]
        if self.var is not None:
            data.append(self.var)
        for row in np.concatenate(data, axis=1):
            out.write(",".join("%.17g" % v for v in row) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        events = []
        lines = []
        for line in text.splitlines():
            if line.startswith("#"):
                m = re.match(r"#\s*event t=(\S+) system=(\d+) dir=([+-])\s*$", line)
                if m:
                    events.append(Event(float(m.group(1)), int(m.group(2)), m.group(3)))
                continue
            if line.strip():
                lines.append(line)
        rows = list(csv.reader(lines))
        if not rows or rows[0][0] != "t":
            raise PreconditionError("trace CSV needs a header starting with 't'")
        header = rows[0]
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
        except ValueError as err:
            raise PreconditionError(f"malformed trace CSV: {err}") from None
        if data.size == 0:
            data = data.reshape(0, len(header))
        if data.shape[1] != len(header):
            raise PreconditionError("trace CSV rows do not match the header")
        names = tuple(h for h in header[1:] if not h.startswith("d_"))
        dnames = [h for h in header[1:] if h.startswith("d_")]
        extra = [h for h in header[1:] if h not in names and h not in dnames]
        if extra:
            raise PreconditionError(f"unexpected trace columns {extra}")
        times = data[:, 0]
        states = data[:, 1:1 + len(names)]
        var = data[:, 1 + len(names):] if dnames else None
        et = {e.t for e in events}
        is_event = np.array([t in et for t in times.tolist()], dtype=bool)
        return cls(times, states, names, var, tuple(events), is_event)


def _norms(data, p):
    return np.linalg.norm(data, MeasureNorm.coerce(p).numpy_ord, axis=1)


def time_grid(t0, tf, dt) -> np.ndarray:
    """Nominal sample times ``t0 + k dt``; the last step is shortened to end at ``tf``."""
    k = int(math.ceil((tf - t0) / dt - 1e-9))
    grid = t0 + dt * np.arange(k + 1, dtype=np.float64)
    grid[-1] = tf
    return grid


# ---------------------------------------------------------------------------
# generic integrator


def rk4_step(f: Callable, x, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(x, t)``."""
    x = np.asarray(x, dtype=np.float64)

    def ev(y, tt):
        d = np.asarray(f(y, tt), dtype=np.float64)
        if not np.all(np.isfinite(d)):
            raise BlowUpError("non-finite derivative", t)
        return d

    k1 = ev(x, t)
    k2 = ev(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = ev(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = ev(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# event-driven integration


def _initial_state(ic: Interconnection, x0: Mapping[str, float]) -> np.ndarray:
    v = ic.vector({**x0, "t": 0.0})[:-1]
    if not np.all(np.isfinite(v)):
        raise PreconditionError("initial state must be finite")
    return v


class _EventStepper:
    def __init__(self, ic: Interconnection):
        self.ic = ic
        self.b = ic.bundle
        self.S = len(ic.systems)

    def step(self, x, t, h, modes):
        try:
            return kernels.rk4_switched(self.b, x, t, h, modes)
        except kernels.KernelError as err:
            if err.code in _BLOWUP:
                raise BlowUpError("state or field became non-finite", t) from None
            raise self.ic.domain_error(err) from None

    def h(self, x, t):
        try:
            return kernels.h_values(self.b, np.append(x, t))
        except kernels.KernelError as err:
            raise self.ic.domain_error(err) from None

    @staticmethod
    def crossed(h, mode):
        return (mode > 0 and h < 0.0) or (mode < 0 and h > 0.0)

    def locate(self, x, t, h, modes, s):
        """Smallest step fraction whose end state lies on the new side of manifold ``s``
        within ``EVENT_TOL``; returns (fraction, state)."""
        lo, hi = 0.0, 1.0
        y_hi = self.step(x, t, h, modes)
        for _ in range(200):
            g = self.h(y_hi, t + hi * h)[s]
            if abs(g) <= EVENT_TOL:
                break
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            y_mid = self.step(x, t, mid * h, modes)
            if self.crossed(self.h(y_mid, t + mid * h)[s], modes[s]):
                hi, y_hi = mid, y_mid
            else:
                lo = mid
        return hi, y_hi


def integrate_event(ic: Interconnection, cfg: SimConfig) -> Trace:
    """Switched dynamics with active modes; crossings are located and inserted."""
    if cfg.method != "event":
        raise PreconditionError("integrate_event needs method='event'")
    st = _EventStepper(ic)
    x = _initial_state(ic, cfg.x0)
    grid = time_grid(cfg.t0, cfg.tf, cfg.dt)
    point = {**ic.point(x), "t": cfg.t0}
    modes = [1 if active_mode(sys, point) == "pos" else -1 for sys in ic.systems]
    times, states, flags, events = [grid[0]], [x], [False], []
    t = grid[0]
    for t_next in grid[1:]:
        counts = [0] * st.S
        while True:
            h = t_next - t
            y = st.step(x, t, h, modes)
            hv = st.h(y, t_next)
            hits = [s for s in range(st.S) if st.crossed(hv[s], modes[s])]
            if not hits:
                break
            best = None
            for s in hits:
                frac, ys = st.locate(x, t, h, modes, s)
                if best is None or frac < best[0]:
                    best = (frac, ys, s)
            frac, ys, s = best
            counts[s] += 1
            if counts[s] > MAX_CROSSINGS_PER_STEP:
                raise SlidingModeError(
                    f"system {s + 1} crossed its manifold more than {MAX_CROSSINGS_PER_STEP} "
                    "times in one step: possible sliding mode", t)
            modes = list(modes)
            modes[s] = -modes[s]
            te = t + frac * h
            events.append(Event(float(te) if te < t_next else float(t_next), s + 1,
                                "+" if modes[s] > 0 else "-"))
            if te >= t_next:
                y = ys
                break
            if te > t:
                times.append(te)
                states.append(ys)
                flags.append(True)
                x, t = ys, te
        x, t = y, t_next
        times.append(t)
        states.append(x)
        flags.append(False)
    return Trace(np.array(times), np.array(states), ic.states, None, tuple(events), np.array(flags))


# ---------------------------------------------------------------------------
# regularised and variational integration


def _blended_run(ic, cfg, times, dx0, variational):
    b = ic.bundle
    x = _initial_state(ic, cfg.x0)
    code = TransitionKind.coerce(cfg.kind).code
    X, DX, n_ok, status, instr = kernels.rk4_blended(
        b, x, dx0, np.asarray(times, dtype=np.float64), float(cfg.eps), code, bool(variational))
    if status != oc.OK:
        t_last = float(times[max(n_ok - 1, 0)])
        if status in _BLOWUP:
            raise BlowUpError("state or field became non-finite", t_last)
        err = ic.domain_error(kernels.KernelError(status, instr))
        err.t_last = t_last
        raise err
    return X, DX


def _check_regularized(cfg):
    if cfg.method != "regularized":
        raise PreconditionError("regularised integration needs method='regularized'")


def integrate_regularized(ic: Interconnection, cfg: SimConfig, times: Sequence[float] | None = None) -> Trace:
    """Blended field of every system; ``times`` overrides the nominal grid."""
    _check_regularized(cfg)
    times = time_grid(cfg.t0, cfg.tf, cfg.dt) if times is None else np.asarray(times, dtype=np.float64)
    X, _ = _blended_run(ic, cfg, times, np.zeros(ic.n), False)
    return Trace(times, X, ic.states)


def integrate_variational(ic: Interconnection, cfg: SimConfig) -> Trace:
    """Blended field together with its variational equation for ``d_xi``."""
    _check_regularized(cfg)
    if cfg.dx0 is None:
        raise PreconditionError("variational run needs an initial variation dx0")
    missing = [s for s in ic.states if s not in cfg.dx0]
    if missing:
        raise PreconditionError(f"initial variation does not bind {missing}")
    d0 = np.array([float(cfg.dx0[s]) for s in ic.states])
    times = time_grid(cfg.t0, cfg.tf, cfg.dt)
    X, DX = _blended_run(ic, cfg, times, d0, True)
    return Trace(times, X, ic.states, DX)


def simulate(ic: Interconnection, cfg: SimConfig) -> Trace:
    if cfg.method == "event":
        return integrate_event(ic, cfg)
    return integrate_regularized(ic, cfg)


# ---------------------------------------------------------------------------
# studies


def pair_trace(ic: Interconnection, cfg: SimConfig, ic_a: Mapping[str, float],
               ic_b: Mapping[str, float], p="two") -> Series:
    """Distance ``||xi_a(t) - xi_b(t)||_p`` on the nominal grid."""
    ta = simulate(ic, cfg.replace(x0=dict(ic_a))).nominal()
    tb = simulate(ic, cfg.replace(x0=dict(ic_b))).nominal()
    return Series(ta.times.copy(), _norms(ta.states - tb.states, p))


@dataclass(frozen=True)
class EpsStudy:
    levels: tuple
    errors: tuple
    ratios: tuple
    event_count: int

    def to_dict(self):
        return {"levels": list(self.levels), "errors": list(self.errors),
                "ratios": list(self.ratios), "event_count": self.event_count}


def eps_error_study(ic: Interconnection, cfg: SimConfig, levels: Sequence[float], p="two") -> EpsStudy:
    """Max over time of ``||xi_eps - xi_event||`` for each regularisation level.

    The regularised runs use the event trace's own time grid (crossings
    included), so no interpolation error enters the comparison.
    """
    levels = [float(e) for e in levels]
    if len(levels) < 3:
        raise PreconditionError("eps study needs at least 3 levels")
    if any(not e > 0.0 for e in levels):
        raise PreconditionError("eps levels must be positive")
    ref = integrate_event(ic, cfg.replace(method="event"))
    errors = []
    for e in levels:
        reg = integrate_regularized(ic, cfg.replace(method="regularized", eps=e), ref.times)
        errors.append(float(np.max(_norms(reg.states - ref.states, p))))
    ratios = [errors[i + 1] / errors[i] if errors[i] > 0.0 else math.nan for i in range(len(errors) - 1)]
    return EpsStudy(tuple(levels), tuple(errors), tuple(ratios), len(ref.events))


__all__ = ["SimConfig", "Trace", "Event", "EpsStudy", "rk4_step", "time_grid", "integrate_event",
           "integrate_regularized", "integrate_variational", "simulate", "pair_trace",
           "eps_error_study"]
