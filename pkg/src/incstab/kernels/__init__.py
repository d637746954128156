"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension ``_ckernels`` is used when it was built and
``INCSTAB_NO_EXT`` is unset; otherwise the numpy/pure-Python ``_pykernels``
twin is selected at import.  Both expose the same functions, listed in ``API``.  :func:`set_backend` switches explicitly
(tests and the benchmark use it to compare the two).
"""
from __future__ import annotations

import bisect
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _pykernels
from ._common import KernelError

if os.environ.get("INCSTAB_NO_EXT"):
    _ckernels = None
else:
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None

API = (
    "eval_value", "eval_dual", "eval_batch", "eval_dual_batch",
    "mu", "opnorm", "sym_eig_max", "mu_batch", "opnorm_batch",
    "zeta", "h_values", "field_switched", "field_blended",
    "rk4_switched", "rk4_blended",
)

_backend = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return ["python"] + (["compiled"] if _ckernels is not None else [])


def backend_name():
    return _backend.BACKEND


def get_backend(name=None):
    """Module implementing ``API`` for ``name`` (default: the active backend)."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Select the active backend; returns the previous backend's name."""
    global _backend
    previous = _backend.BACKEND
    _backend = get_backend(name)
    return previous


def __getattr__(attr):
    if attr in API:
        return getattr(_backend, attr)
    raise AttributeError(attr)


@dataclass(eq=False)
class Bundle:
    """Several compiled programs in one flat instruction stream.

    Layout of the evaluation vector: ``n`` states followed by the time slot.
    For each system ``s``, ``sys_h[s]`` is its manifold program; for each
    state ``i``, ``state_pos[i]``/``state_neg[i]`` are the mode programs and
    ``state_sys[i]`` the owning system.
    """

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    sys_h: np.ndarray
    state_sys: np.ndarray
    state_pos: np.ndarray
    state_neg: np.ndarray
    n: int
    max_len: int
    programs: tuple = field(repr=False)

    def locate(self, instr):
        """(program index, node) for a global instruction index."""
        p = bisect.bisect_right(self.starts.tolist(), instr) - 1
        prog = self.programs[p]
        return p, prog.nodes[instr - int(self.starts[p])]


def make_bundle(programs: Sequence, sys_h, state_sys, state_pos, state_neg, n) -> Bundle:
    ops, args, consts, starts, ends = [], [], [], [], []
    pos = 0
    for prog in programs:
        a = prog.args.copy()
        a[prog.ops == 0] += len(consts)
        ops.append(prog.ops)
        args.append(a)
        consts.extend(prog.consts.tolist())
        starts.append(pos)
        pos += len(prog.ops)
        ends.append(pos)
    return Bundle(
        ops=np.concatenate(ops).astype(np.int32) if ops else np.zeros(0, np.int32),
        args=np.concatenate(args).astype(np.int32) if args else np.zeros(0, np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        starts=np.asarray(starts, dtype=np.intp),
        ends=np.asarray(ends, dtype=np.intp),
        sys_h=np.asarray(sys_h, dtype=np.int32),
        state_sys=np.asarray(state_sys, dtype=np.int32),
        state_pos=np.asarray(state_pos, dtype=np.int32),
        state_neg=np.asarray(state_neg, dtype=np.int32),
        n=int(n),
        max_len=max((len(p.ops) for p in programs), default=1),
        programs=tuple(programs),
    )


__all__ = ["API", "Bundle", "KernelError", "make_bundle", "set_backend",
           "get_backend", "backend_name", "available_backends"]
