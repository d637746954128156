"""Sampled checks of the matrix-measure conditions and certification reports.

Every bound is a sampled supremum over the user's box: a deterministic grid
(``grid`` intervals per dimension, so ``grid + 1`` points) plus ``samples``
seeded uniform points, plus manifold points located by bisection along grid
segments.  The report labels these as estimates, never as proofs.

Per-topology conditions:

* single   -- both modes contracting on their half-regions, manifold residual zero;
              rate ``p = min(p1, p2)``.
* cascade  -- the above for system I; system II contracting in its own states,
              manifold residual zero, bounded coupling ``c``; rate ``min(q, p)``.
* feedback -- both systems as above plus coupling bounds ``k``, ``m`` and the
              small-gain product ``k m / (p q) < 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import expr as ex
from . import kernels
from .errors import PreconditionError
from .measure import MeasureNorm, mu_batch, opnorm_batch
from .model import Interconnection
from .regularize import DEFAULT_EPS, TransitionKind

MAX_GRID_POINTS = 4_000_000
LAYER_LEVELS = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class SamplingPlan:
    grid: int = 64
    samples: int = 1000
    seed: int = 42

    def __post_init__(self):
        if int(self.grid) < 2:
            raise PreconditionError("grid resolution must be >= 2")
        if int(self.samples) < 0:
            raise PreconditionError("sample count must be >= 0")
        if int(self.seed) < 0:
            raise PreconditionError("seed must be non-negative")


@dataclass(frozen=True)
class Tolerances:
    manifold: float = 1e-8  # relative: residual <= manifold * (1 + local field scale)
    level: float = 1e-12  # bisection target for |H - level|
    strict: bool = False  # check both modes on the whole box


@dataclass
class SampledBound:
    kind: str
    value: float
    argmax: dict
    samples: int


@dataclass
class Condition:
    name: str
    value: float | None
    threshold: float | None
    passed: bool
    argmax: dict | None = None
    detail: str = ""

    def to_dict(self):
        d = {"name": self.name, "value": _num(self.value), "threshold": _num(self.threshold),
             "pass": self.passed, "argmax": self.argmax}
        if self.detail:
            d["detail"] = self.detail
        return d


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class CertReport:
    name: str
    topology: str
    norm: MeasureNorm
    conditions: list
    bounds: dict
    rates: dict
    verdict: bool
    plan: SamplingPlan
    notes: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def condition(self, name) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "name": self.name,
            "topology": self.topology,
            "norm": self.norm.label,
            "conditions": [c.to_dict() for c in self.conditions],
            "bounds": {k: _num(v) for k, v in self.bounds.items()},
            "rates": {k: _num(v) for k, v in self.rates.items()},
            "verdict": "pass" if self.verdict else "fail",
            "plan": asdict(self.plan),
            "settings": self.settings,
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


class CertificationError(PreconditionError):
    """A check could not be carried out (empty half-region, no manifold points)."""


# ---------------------------------------------------------------------------
# sampling


def grid_axis(lo, hi, intervals):
    """Nested grid: the points for ``N`` intervals are a subset of those for ``2N``."""
    k = np.arange(intervals + 1)
    pts = lo + (hi - lo) * (k / intervals)
    pts[-1] = hi
    return pts


def _grid_points(ic: Interconnection, intervals):
    lo, hi = ic.bounds()
    total = (intervals + 1) ** ic.n
    if total > MAX_GRID_POINTS:
        raise PreconditionError(
            f"grid of {intervals + 1}^{ic.n} = {total} points exceeds {MAX_GRID_POINTS}; "
            "lower --grid")
    axes = [grid_axis(lo[d], hi[d], intervals) for d in range(ic.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), axes


def region_samples(ic: Interconnection, plan: SamplingPlan, t=0.0) -> np.ndarray:
    """Grid plus seeded uniform samples as slot rows (states, then t)."""
    G, _ = _grid_points(ic, int(plan.grid))
    lo, hi = ic.bounds()
    rng = np.random.default_rng(int(plan.seed))
    U = lo + (hi - lo) * rng.random((int(plan.samples), ic.n))
    X = np.concatenate([G, U], axis=0)
    return np.concatenate([X, np.full((X.shape[0], 1), float(t))], axis=1)


def _batch(ic, prog_index, X, seed=None):
    b = ic.bundle
    dx = np.zeros(ic.n + 1) if seed is None else seed
    try:
        return kernels.eval_dual_batch(b.ops, b.args, b.consts, int(b.starts[prog_index]),
                                       int(b.ends[prog_index]), X, dx)
    except kernels.KernelError as err:
        raise ic.domain_error(err) from None


def h_batch(ic, index, X):
    return _batch(ic, int(ic.bundle.sys_h[index]), X)[0]


def _state_programs(ic, index, tag):
    sl = ic.offsets(index)
    progs = ic.bundle.state_pos if tag == "pos" else ic.bundle.state_neg
    return [int(p) for p in progs[sl]]


def field_batch(ic, index, tag, X):
    return np.stack([_batch(ic, p, X)[0] for p in _state_programs(ic, index, tag)], axis=1)


def _columns(ic, index, wrt):
    if wrt == "own":
        sl = ic.offsets(index)
        return list(range(sl.start, sl.stop))
    if wrt == "other":
        if len(ic.systems) < 2:
            raise PreconditionError("wrt='other' needs an interconnected system")
        sl = ic.offsets(1 - index)
        return list(range(sl.start, sl.stop))
    raise PreconditionError(f"wrt must be 'own' or 'other', got {wrt!r}")


def jacobian_batch(ic, index, tag, X, wrt="own"):
    """Stack of mode Jacobian blocks, shape (N, dim, len(wrt block))."""
    progs = _state_programs(ic, index, tag)
    cols = _columns(ic, index, wrt)
    J = np.empty((X.shape[0], len(progs), len(cols)))
    for c, col in enumerate(cols):
        seed = np.zeros(ic.n + 1)
        seed[col] = 1.0
        for r, p in enumerate(progs):
            J[:, r, c] = _batch(ic, p, X, seed)[1]
    return J


def h_gradient_batch(ic, index, X):
    cols = _columns(ic, index, "own")
    prog = int(ic.bundle.sys_h[index])
    G = np.empty((X.shape[0], len(cols)))
    for c, col in enumerate(cols):
        seed = np.zeros(ic.n + 1)
        seed[col] = 1.0
        G[:, c] = _batch(ic, prog, X, seed)[1]
    return G


def _bisect_levels(ic, index, A, B, axis, level, tol):
    """Vectorised bisection of H - level along segments A->B that differ in ``axis``."""
    ha = h_batch(ic, index, A) - level
    a = A[:, axis].copy()
    b = B[:, axis].copy()
    P = A.copy()
    done = np.zeros(len(A), dtype=bool)
    for _ in range(200):
        mid = 0.5 * (a + b)
        stalled = (mid == a) | (mid == b)
        P[:, axis] = np.where(done, P[:, axis], mid)
        hm = h_batch(ic, index, P) - level
        done |= (np.abs(hm) <= tol) | stalled
        if done.all():
            break
        same = np.sign(hm) == np.sign(ha)
        move_a = ~done & same
        move_b = ~done & ~same
        a = np.where(move_a, mid, a)
        ha = np.where(move_a, hm, ha)
        b = np.where(move_b, mid, b)
    return P


def level_points(ic: Interconnection, index: int, plan: SamplingPlan, level=0.0,
                 tol=1e-12, t=0.0) -> np.ndarray:
    """Points with ``H_index == level`` on grid segments, for this grid and its dyadic coarsenings.

    Including the coarser grids keeps the point set nested under grid doubling.
    """
    N = int(plan.grid)
    levels = [N]
    while levels[-1] % 2 == 0 and levels[-1] // 2 >= 2:
        levels.append(levels[-1] // 2)
    own = _columns(ic, index, "own")
    found = []
    for M in levels:
        G, axes = _grid_points(ic, M)
        shape = tuple(len(a) for a in axes)
        Xg = np.concatenate([G, np.full((len(G), 1), float(t))], axis=1)
        H = (h_batch(ic, index, Xg) - level).reshape(shape)
        Xr = Xg.reshape(shape + (ic.n + 1,))
        exact = Xg[np.abs(H.ravel()) <= tol]
        if len(exact):
            found.append(exact)
        for d in own:
            lo_sl = [slice(None)] * ic.n
            hi_sl = [slice(None)] * ic.n
            lo_sl[d] = slice(0, shape[d] - 1)
            hi_sl[d] = slice(1, shape[d])
            ha, hb = H[tuple(lo_sl)], H[tuple(hi_sl)]
            mask = (ha * hb < 0.0) & (np.abs(ha) > tol) & (np.abs(hb) > tol)
            if not mask.any():
                continue
            A = Xr[tuple(lo_sl)][mask]
            B = Xr[tuple(hi_sl)][mask]
            found.append(_bisect_levels(ic, index, A, B, d, level, tol))
    if not found:
        return np.zeros((0, ic.n + 1))
    P = np.concatenate(found, axis=0)
    return np.unique(P, axis=0)


class _Samples:
    """Region and manifold samples shared by every check of one certification."""

    def __init__(self, ic, plan, tol):
        self.ic = ic
        self.plan = plan
        self.tol = tol
        self.X = region_samples(ic, plan)
        self._h = {}
        self._manifold = {}

    def h(self, index):
        if index not in self._h:
            self._h[index] = h_batch(self.ic, index, self.X)
        return self._h[index]

    def manifold(self, index):
        if index not in self._manifold:
            self._manifold[index] = level_points(self.ic, index, self.plan, 0.0, self.tol.level)
        return self._manifold[index]

    def side(self, index, tag):
        """Samples of the mode's closed half-region (manifold points included)."""
        if self.tol.strict:
            return np.concatenate([self.X, self.manifold(index)], axis=0)
        h = self.h(index)
        mask = h > 0.0 if tag == "pos" else h < 0.0
        return np.concatenate([self.X[mask], self.manifold(index)], axis=0)


def _argmax_point(ic, X, values):
    k = int(np.argmax(values))
    return k, ic.point(X[k])


def _require_samples(X, what):
    if len(X) == 0:
        raise CertificationError(f"no samples for {what}")


# ---------------------------------------------------------------------------
# individual checks


def _ctx(ic, plan, tol, samples):
    if samples is not None:
        return samples
    return _Samples(ic, plan or SamplingPlan(), tol or Tolerances())


def check_mode_contraction(ic: Interconnection, index: int, side: str, p="two",
                           plan: SamplingPlan | None = None, wrt="own",
                           tol: Tolerances | None = None, _samples=None) -> SampledBound:
    """Max of mu(d f_side / d own) over the side's half-region; contracting iff < 0."""
    S = _ctx(ic, plan, tol, _samples)
    X = S.side(index, side)
    _require_samples(X, f"system {index + 1} mode {side} (empty half-region)")
    vals = mu_batch(jacobian_batch(ic, index, side, X, wrt), p)
    k, pt = _argmax_point(ic, X, vals)
    return SampledBound("measure-max", float(vals[k]), pt, len(X))


def manifold_residuals(ic, index, M, p):
    """(|mu((f_pos - f_neg) grad H)|, local field scale) at manifold points ``M``."""
    jump = field_batch(ic, index, "pos", M) - field_batch(ic, index, "neg", M)
    grad = h_gradient_batch(ic, index, M)
    mats = jump[:, :, None] * grad[:, None, :]
    res = np.abs(mu_batch(mats, p))
    scale = (np.maximum(np.abs(field_batch(ic, index, "pos", M)).max(axis=1),
                        np.abs(field_batch(ic, index, "neg", M)).max(axis=1))
             * np.abs(grad).max(axis=1))
    return res, scale


def check_manifold(ic: Interconnection, index: int, p="two", plan: SamplingPlan | None = None,
                   tol: Tolerances | None = None, _samples=None):
    """Max manifold residual; returns (SampledBound, passed)."""
    S = _ctx(ic, plan, tol, _samples)
    M = S.manifold(index)
    if len(M) == 0:
        raise CertificationError(f"no manifold points of system {index + 1} found in the region")
    res, scale = manifold_residuals(ic, index, M, p)
    passed = bool(np.all(res <= S.tol.manifold * (1.0 + scale)))
    k, pt = _argmax_point(ic, M, res)
    return SampledBound("residual-max", float(res[k]), pt, len(M)), passed


def check_interconnection_bound(ic: Interconnection, index: int, side: str, p="two",
                                plan: SamplingPlan | None = None,
                                tol: Tolerances | None = None, _samples=None) -> SampledBound:
    """Sampled sup of the coupling block norm ||d f_side / d partner||."""
    if ic.topology == "single":
        raise PreconditionError("interconnection bound needs a cascade or feedback topology")
    S = _ctx(ic, plan, tol, _samples)
    X = S.side(index, side)
    _require_samples(X, f"system {index + 1} mode {side} (empty half-region)")
    vals = opnorm_batch(jacobian_batch(ic, index, side, X, "other"), p)
    k, pt = _argmax_point(ic, X, vals)
    return SampledBound("norm-max", float(vals[k]), pt, len(X))


def check_relaxed_blend(ic: Interconnection, index: int, p="two", plan: SamplingPlan | None = None,
                        eps=DEFAULT_EPS, kind="sine", tol: Tolerances | None = None,
                        _samples=None) -> SampledBound:
    """Max of mu(Psi J_pos + Gamma J_neg) over the box and boundary-layer level sets."""
    if not eps > 0.0:
        raise PreconditionError("regularisation parameter eps must be positive")
    S = _ctx(ic, plan, tol, _samples)
    parts = [S.X]
    for s in LAYER_LEVELS:
        parts.append(level_points(ic, index, S.plan, s * eps, S.tol.level))
    X = np.concatenate(parts, axis=0)
    code = TransitionKind.coerce(kind).code
    h = h_batch(ic, index, X)
    psi = np.array([0.5 * (1.0 + kernels.zeta(v / eps, code)[0]) for v in h.tolist()])
    gamma = 1.0 - psi
    J = (psi[:, None, None] * jacobian_batch(ic, index, "pos", X)
         + gamma[:, None, None] * jacobian_batch(ic, index, "neg", X))
    vals = mu_batch(J, p)
    k, pt = _argmax_point(ic, X, vals)
    return SampledBound("measure-max", float(vals[k]), pt, len(X))


def small_gain(k: float, m: float, pF: float, pG: float) -> float:
    """Loop gain k m / (pF pG); the loop is certified iff the result is < 1."""
    if not (pF > 0.0 and pG > 0.0):
        raise PreconditionError("small-gain needs positive contraction rates")
    return (k * m) / (pF * pG)


def comparison_rate(p: float, q: float, k: float, m: float) -> float:
    """Decay rate of the comparison system [[-p, k], [m, -q]].

    Positive exactly when k m < p q; reduces to min(p, q) when k m = 0.
    """
    return 0.5 * ((p + q) - math.sqrt((p - q) ** 2 + 4.0 * k * m))


# ---------------------------------------------------------------------------
# full certification


def _uses_time(ic):
    for sys in ic.systems:
        for e in (sys.manifold,) + sys.mode_pos.field + sys.mode_neg.field:
            if "t" in ex.variables(e):
                return True
    return False


class _Builder:
    def __init__(self, ic, p, S):
        self.ic = ic
        self.p = p
        self.S = S
        self.conditions = []
        self.bounds = {}

    def contraction(self, index, label_prefix, rate_names):
        rates = []
        for side, rname in zip(("pos", "neg"), rate_names):
            name = f"sys{index + 1}.{side}.contraction"
            try:
                b = check_mode_contraction(self.ic, index, side, self.p, _samples=self.S)
            except CertificationError as err:
                self.conditions.append(Condition(name, None, 0.0, False, None, str(err)))
                rates.append(math.nan)
                continue
            self.conditions.append(Condition(name, b.value, 0.0, b.value < 0.0, b.argmax,
                                             f"{label_prefix} {side}: max mu over {b.samples} samples"))
            self.bounds[rname] = -b.value
            rates.append(-b.value)
        return rates

    def manifold(self, index):
        name = f"sys{index + 1}.manifold"
        try:
            b, ok = check_manifold(self.ic, index, self.p, _samples=self.S)
        except CertificationError as err:
            self.conditions.append(Condition(name, None, self.S.tol.manifold, False, None, str(err)))
            return
        self.conditions.append(Condition(name, b.value, self.S.tol.manifold, ok, b.argmax,
                                         f"max |mu((f_pos - f_neg) grad H)| over {b.samples} "
                                         "manifold points; threshold scaled by 1 + local field size"))

    def coupling(self, index, names):
        vals = []
        for side, bname in zip(("pos", "neg"), names):
            name = f"sys{index + 1}.{side}.coupling"
            try:
                b = check_interconnection_bound(self.ic, index, side, self.p, _samples=self.S)
            except CertificationError as err:
                self.conditions.append(Condition(name, None, None, False, None, str(err)))
                vals.append(math.nan)
                continue
            self.conditions.append(Condition(name, b.value, None, math.isfinite(b.value), b.argmax,
                                             f"sampled sup of the coupling block norm over {b.samples} samples"))
            self.bounds[bname] = b.value
            vals.append(b.value)
        return max(vals)


def _pos_min(values):
    if any(not math.isfinite(v) for v in values):
        return math.nan
    return min(values)


def certify(ic: Interconnection, p="two", plan: SamplingPlan | None = None,
            tol: Tolerances | None = None) -> CertReport:
    """Run every check that applies to the topology and assemble a report."""
    norm = MeasureNorm.coerce(p)
    plan = plan or SamplingPlan()
    tol = tol or Tolerances()
    S = _Samples(ic, plan, tol)
    B = _Builder(ic, norm, S)
    rates = {"p": None, "q": None, "eta": None, "gamma_product": None}
    notes = [
        "all bounds are sampled estimates over the user-supplied region, not proofs",
        "forward invariance of the region is assumed, not verified",
        "manifold condition checked in rank-one form (f_pos - f_neg) grad(H)",
    ]
    if _uses_time(ic):
        notes.append("time-dependent expressions were sampled at t = 0 only")

    p1, p2 = B.contraction(0, "system 1", ("p1", "p2"))
    B.manifold(0)
    p_rate = _pos_min([p1, p2])
    rates["p"] = p_rate
    B.bounds["p"] = p_rate

    if ic.topology == "single":
        eta = p_rate
    else:
        q1, q2 = B.contraction(1, "system 2", ("q1", "q2"))
        B.manifold(1)
        q_rate = _pos_min([q1, q2])
        rates["q"] = q_rate
        B.bounds["q"] = q_rate
        if ic.topology == "cascade":
            c_bound = B.coupling(1, ("c1", "c2"))
            B.bounds["c"] = c_bound
            eta = min(q_rate, p_rate)
        else:
            k_bound = B.coupling(0, ("k1", "k2"))
            m_bound = B.coupling(1, ("m1", "m2"))
            B.bounds["k"] = k_bound
            B.bounds["m"] = m_bound
            if p_rate > 0.0 and q_rate > 0.0 and math.isfinite(k_bound) and math.isfinite(m_bound):
                gamma = small_gain(k_bound, m_bound, p_rate, q_rate)
                B.conditions.append(Condition("small_gain", gamma, 1.0, gamma < 1.0, None,
                                              "k m / (p q) with k, m the worst-case coupling bounds"))
                rates["gamma_product"] = gamma
                eta = comparison_rate(p_rate, q_rate, k_bound, m_bound)
            else:
                B.conditions.append(Condition("small_gain", None, 1.0, False, None,
                                              "undefined: a subsystem is not contracting"))
                eta = math.nan

    verdict = all(c.passed for c in B.conditions)
    rates["eta"] = eta if verdict else None
    settings = {"grid_points_per_dim": plan.grid + 1, "manifold_tol": tol.manifold,
                "level_tol": tol.level, "strict": tol.strict}
    return CertReport(ic.name, ic.topology, norm, B.conditions, B.bounds, rates,
                      verdict, plan, notes, settings)
