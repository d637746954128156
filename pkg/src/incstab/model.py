"""Bimodal switched systems, their interconnections, and JSON config ingestion.

Conventions:

* ``mode_pos`` is active where the manifold ``H > 0``, ``mode_neg`` where ``H < 0``.
* At ``H == 0`` the previously active mode is kept; without history, ``pos``.
* A manifold depends only on its own system's states.
* In a cascade, system I (index 0) may not reference system II's states.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from . import kernels
from .errors import (EvalDomainError, ExprSyntaxError, PreconditionError,
                     SchemaError, TopologyError, UnknownVariableError)

TOPOLOGIES = ("single", "cascade", "feedback")
MODE_TAGS = ("pos", "neg")
IDENTIFIER = re.compile(r"[a-zA-Z][a-zA-Z0-9_]*\Z")

_TOP_KEYS = {"name", "topology", "systems", "region"}
_SYS_KEYS = {"states", "manifold", "mode_pos", "mode_neg"}


@dataclass(frozen=True)
class Mode:
    field: tuple

    def __len__(self):
        return len(self.field)


@dataclass(frozen=True)
class SwitchedSystem:
    states: tuple
    manifold: ex.Expr
    mode_pos: Mode
    mode_neg: Mode
    partner_states: tuple = ()

    @property
    def dim(self):
        return len(self.states)

    def mode(self, tag) -> Mode:
        if tag == "pos":
            return self.mode_pos
        if tag == "neg":
            return self.mode_neg
        raise PreconditionError(f"mode tag must be 'pos' or 'neg', got {tag!r}")


@dataclass(frozen=True)
class Interconnection:
    name: str
    topology: str
    systems: tuple
    region: Mapping[str, tuple] = field(hash=False)

    @property
    def states(self) -> tuple:
        return tuple(s for sys in self.systems for s in sys.states)

    @property
    def slots(self) -> tuple:
        """Evaluation layout used by compiled programs: states, then ``t``."""
        return self.states + ("t",)

    @property
    def n(self):
        return len(self.states)

    def offsets(self, index) -> slice:
        start = sum(s.dim for s in self.systems[:index])
        return slice(start, start + self.systems[index].dim)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.region[s][0] for s in self.states], dtype=np.float64)
        hi = np.array([self.region[s][1] for s in self.states], dtype=np.float64)
        return lo, hi

    def vector(self, x: Mapping[str, float]) -> np.ndarray:
        """Slot vector (states then ``t``) for a state point mapping."""
        missing = [s for s in self.states if s not in x]
        if missing:
            raise PreconditionError(f"state point does not bind {missing}")
        return np.array([float(x[s]) for s in self.states] + [float(x.get("t", 0.0))])

    def point(self, v, t=None) -> dict:
        out = {s: float(v[i]) for i, s in enumerate(self.states)}
        if t is not None:
            out["t"] = float(t)
        elif len(v) > self.n:
            out["t"] = float(v[self.n])
        return out

    @cached_property
    def bundle(self) -> kernels.Bundle:
        slots = self.slots
        programs, sys_h, state_sys, state_pos, state_neg = [], [], [], [], []
        for s, sys in enumerate(self.systems):
            sys_h.append(len(programs))
            programs.append(ex.compile_expr(sys.manifold, slots))
        for s, sys in enumerate(self.systems):
            for k in range(sys.dim):
                state_sys.append(s)
                state_pos.append(len(programs))
                programs.append(ex.compile_expr(sys.mode_pos.field[k], slots))
                state_neg.append(len(programs))
                programs.append(ex.compile_expr(sys.mode_neg.field[k], slots))
        return kernels.make_bundle(programs, sys_h, state_sys, state_pos, state_neg, self.n)

    def domain_error(self, err: kernels.KernelError) -> EvalDomainError:
        """Translate a kernel fault on this interconnection's bundle."""
        node = None
        if err.instr is not None and err.instr >= 0:
            _, node = self.bundle.locate(err.instr)
        return EvalDomainError(err.reason, node)


# ---------------------------------------------------------------------------
# queries


def _t(x):
    return float(x.get("t", 0.0))


def active_mode(sys: SwitchedSystem, x: Mapping[str, float], previous: str | None = None) -> str:
    """Active mode tag at ``x``; ``previous`` breaks ties on the manifold."""
    h = ex.evaluate(sys.manifold, x, _t(x))
    if h > 0.0:
        return "pos"
    if h < 0.0:
        return "neg"
    return previous if previous in MODE_TAGS else "pos"


def field_eval(sys: SwitchedSystem, tag: str, x: Mapping[str, float]) -> np.ndarray:
    t = _t(x)
    return np.array([ex.evaluate(e, x, t) for e in sys.mode(tag).field])


def mode_jacobian(sys: SwitchedSystem, tag: str, x: Mapping[str, float], wrt="own") -> np.ndarray:
    """Jacobian block of a mode w.r.t. the system's own or its partner's states."""
    if wrt == "own":
        names = sys.states
    elif wrt == "other":
        if not sys.partner_states:
            raise PreconditionError("wrt='other' needs an interconnected system")
        names = sys.partner_states
    else:
        raise PreconditionError(f"wrt must be 'own' or 'other', got {wrt!r}")
    return ex.jacobian(sys.mode(tag).field, x, _t(x), names)


def manifold_gradient(sys: SwitchedSystem, x: Mapping[str, float]) -> np.ndarray:
    return ex.jacobian([sys.manifold], x, _t(x), sys.states)[0]


# ---------------------------------------------------------------------------
# config ingestion


def _require_keys(obj, required, where):
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", where)
    unknown = sorted(set(obj) - required)
    if unknown:
        raise SchemaError(f"unknown key(s) {unknown}", where)


def _parse_expr(text, where):
    if not isinstance(text, str):
        raise SchemaError("expected an expression string", where)
    try:
        return ex.parse(text)
    except ExprSyntaxError as err:
        raise SchemaError(f"{err} in {text!r}", where) from None


def _check_refs(e, allowed, where, topology_limited=None):
    for name in sorted(ex.variables(e)):
        if name in allowed:
            continue
        if topology_limited and name in topology_limited:
            raise TopologyError(
                f"cascade system I may not reference system II state {name!r}", where)
        raise UnknownVariableError(f"unknown variable {name!r}", where)


def from_dict(doc: dict) -> Interconnection:
    """Validate a parsed config document and build the interconnection."""
    _require_keys(doc, _TOP_KEYS, "")
    missing = sorted(_TOP_KEYS - set(doc))
    if missing:
        raise SchemaError(f"missing key(s) {missing}", "")
    name = doc["name"]
    if not isinstance(name, str):
        raise SchemaError("expected a string", "name")
    topology = doc["topology"]
    if topology not in TOPOLOGIES:
        raise SchemaError(f"topology must be one of {list(TOPOLOGIES)}", "topology")
    raw_systems = doc["systems"]
    if not isinstance(raw_systems, list):
        raise SchemaError("expected an array", "systems")
    want = 1 if topology == "single" else 2
    if len(raw_systems) != want:
        raise SchemaError(f"topology {topology!r} needs exactly {want} system(s), "
                          f"got {len(raw_systems)}", "systems")

    state_lists = []
    seen = set()
    for i, raw in enumerate(raw_systems):
        where = f"systems[{i}]"
        _require_keys(raw, _SYS_KEYS, where)
        if "mode_pos" not in raw or "mode_neg" not in raw:
            raise SchemaError("exactly two modes required (mode_pos and mode_neg)", where)
        for key in ("states", "manifold"):
            if key not in raw:
                raise SchemaError(f"missing key {key!r}", where)
        states = raw["states"]
        if not isinstance(states, list) or not states:
            raise SchemaError("expected a non-empty array of identifiers", f"{where}.states")
        for s in states:
            if not isinstance(s, str) or not IDENTIFIER.match(s):
                raise SchemaError(f"invalid identifier {s!r}", f"{where}.states")
            if s == "t":
                raise SchemaError("'t' is reserved for time", f"{where}.states")
            if s in seen:
                raise SchemaError(f"duplicate state {s!r}", f"{where}.states")
            seen.add(s)
        state_lists.append(tuple(states))

    all_states = set(seen)
    systems = []
    for i, raw in enumerate(raw_systems):
        where = f"systems[{i}]"
        own = set(state_lists[i])
        partner = state_lists[1 - i] if want == 2 else ()
        manifold = _parse_expr(raw["manifold"], f"{where}.manifold")
        _check_refs(manifold, own, f"{where}.manifold")
        if topology == "cascade" and i == 0:
            allowed = own | {"t"}
            limited = set(partner)
        else:
            allowed = all_states | {"t"}
            limited = None
        modes = []
        for key in ("mode_pos", "mode_neg"):
            raw_field = raw[key]
            if not isinstance(raw_field, list):
                raise SchemaError("expected an array of expression strings", f"{where}.{key}")
            if len(raw_field) != len(state_lists[i]):
                raise SchemaError(f"needs {len(state_lists[i])} component(s), "
                                  f"got {len(raw_field)}", f"{where}.{key}")
            exprs = []
            for k, text in enumerate(raw_field):
                e = _parse_expr(text, f"{where}.{key}[{k}]")
                _check_refs(e, allowed, f"{where}.{key}[{k}]", limited)
                exprs.append(e)
            modes.append(Mode(tuple(exprs)))
        systems.append(SwitchedSystem(state_lists[i], manifold, modes[0], modes[1], tuple(partner)))

    region_raw = doc["region"]
    if not isinstance(region_raw, dict):
        raise SchemaError("expected an object mapping states to [lo, hi]", "region")
    unknown = sorted(set(region_raw) - all_states)
    if unknown:
        raise SchemaError(f"unknown state(s) {unknown}", "region")
    region = {}
    for s in (s for states in state_lists for s in states):
        if s not in region_raw:
            raise SchemaError(f"no interval for state {s!r}", "region")
        iv = region_raw[s]
        if (not isinstance(iv, list) or len(iv) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in iv)):
            raise SchemaError("expected [lo, hi]", f"region.{s}")
        lo, hi = float(iv[0]), float(iv[1])
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise SchemaError("region must be a finite box", f"region.{s}")
        if lo > hi:
            raise SchemaError("empty interval (lo > hi)", f"region.{s}")
        region[s] = (lo, hi)
    return Interconnection(name, topology, tuple(systems), region)


def load_config(text: str) -> Interconnection:
    """Parse and validate a JSON config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"invalid JSON: {err.msg} (line {err.lineno}, column {err.colno})") from None
    return from_dict(doc)


def load_config_file(path) -> Interconnection:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def to_dict(ic: Interconnection) -> dict:
    return {
        "name": ic.name,
        "topology": ic.topology,
        "systems": [
            {
                "states": list(sys.states),
                "manifold": ex.to_text(sys.manifold),
                "mode_pos": [ex.to_text(e) for e in sys.mode_pos.field],
                "mode_neg": [ex.to_text(e) for e in sys.mode_neg.field],
            }
            for sys in ic.systems
        ],
        "region": {s: [ic.region[s][0], ic.region[s][1]] for s in ic.states},
    }


def serialize(ic: Interconnection) -> str:
    return json.dumps(to_dict(ic), indent=2)


def freeze(ic: Interconnection, index: int, values: Mapping[str, float]) -> Interconnection:
    """Single-topology copy of system ``index`` with partner states fixed to constants."""
    sys = ic.systems[index]
    missing = [s for s in sys.partner_states if s not in values]
    if missing:
        raise PreconditionError(f"freeze needs values for {missing}")
    sub = {s: float(values[s]) for s in sys.partner_states}

    def fix(mode):
        return Mode(tuple(ex.substitute(e, sub) for e in mode.field))

    frozen = SwitchedSystem(sys.states, sys.manifold, fix(sys.mode_pos), fix(sys.mode_neg), ())
    region = {s: ic.region[s] for s in sys.states}
    return Interconnection(f"{ic.name}[{index}]", "single", (frozen,), region)


def with_region(ic: Interconnection, region: Mapping[str, Sequence[float]]) -> Interconnection:
    merged = dict(ic.region)
    merged.update({k: (float(v[0]), float(v[1])) for k, v in region.items()})
    return replace(ic, region=merged)
