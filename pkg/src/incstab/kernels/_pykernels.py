"""Pure-Python/numpy kernels. Reference fallback for ``_ckernels``.

Every function here has a twin with the same signature and the same
floating-point operation order in ``_ckernels.pyx``.
"""
import math

import numpy as np

from . import opcodes as oc
from ._common import KernelError

BACKEND = "python"
HALF_PI = 0.5 * math.pi


class _Fault(Exception):
    def __init__(self, code, instr):
        self.code = code
        self.instr = instr


# ---------------------------------------------------------------------------
# scalar virtual machine


def _pow_value(a, b, k):
    if a < 0.0 and b != math.floor(b):
        raise _Fault(oc.E_POW_DOMAIN, k)
    if a == 0.0 and b < 0.0:
        raise _Fault(oc.E_DIV_ZERO, k)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise _Fault(oc.E_NONFINITE, k) from None


def _exec(ops, args, consts, start, end, x, dx):
    """Run instructions [start, end). ``dx`` None means value only (deriv 0)."""
    sv = []
    sd = []
    isfinite = math.isfinite
    for k in range(start, end):
        op = ops[k]
        if op == 0:
            sv.append(consts[args[k]])
            sd.append(0.0)
            continue
        if op == 1:
            sv.append(x[args[k]])
            sd.append(dx[args[k]] if dx is not None else 0.0)
            continue
        if op == 2:
            sv[-1] = -sv[-1]
            sd[-1] = -sd[-1]
            continue
        if op <= 7:
            b = sv.pop()
            db = sd.pop()
            a = sv[-1]
            da = sd[-1]
            if op == 3:
                v = a + b
                d = da + db
            elif op == 4:
                v = a - b
                d = da - db
            elif op == 5:
                v = a * b
                d = a * db + da * b
            elif op == 6:
                if b == 0.0:
                    raise _Fault(oc.E_DIV_ZERO, k)
                v = a / b
                d = (da * b - a * db) / (b * b)
            else:
                v = _pow_value(a, b, k)
                d = 0.0
                if da != 0.0 and b != 0.0:
                    d = b * _pow_value(a, b - 1.0, k) * da
                if db != 0.0:
                    if a > 0.0:
                        d = d + v * math.log(a) * db
                    elif not (a == 0.0 and b > 0.0):
                        raise _Fault(oc.E_POW_DERIV, k)
        else:
            a = sv[-1]
            da = sd[-1]
            if op == 8:
                v = math.sin(a)
                d = math.cos(a) * da
            elif op == 9:
                v = math.cos(a)
                d = -math.sin(a) * da
            elif op == 10:
                try:
                    v = math.exp(a)
                except OverflowError:
                    raise _Fault(oc.E_NONFINITE, k) from None
                d = v * da
            elif op == 11:
                if a <= 0.0:
                    raise _Fault(oc.E_LOG_DOMAIN, k)
                v = math.log(a)
                d = da / a
            elif op == 12:
                if a < 0.0:
                    raise _Fault(oc.E_SQRT_DOMAIN, k)
                v = math.sqrt(a)
                if v == 0.0:
                    if da != 0.0:
                        raise _Fault(oc.E_SQRT_DERIV, k)
                    d = 0.0
                else:
                    d = da / (2.0 * v)
            else:
                v = math.tanh(a)
                d = (1.0 - v * v) * da
        if not (isfinite(v) and isfinite(d)):
            raise _Fault(oc.E_NONFINITE, k)
        sv[-1] = v
        sd[-1] = d
    return sv[0], sd[0]


def _lists(ops, args, consts):
    return ops.tolist(), args.tolist(), consts.tolist()


def eval_value(ops, args, consts, start, end, x):
    o, a, c = _lists(ops, args, consts)
    try:
        return _exec(o, a, c, start, end, list(map(float, x)), None)[0]
    except _Fault as f:
        raise KernelError(f.code, f.instr) from None


def eval_dual(ops, args, consts, start, end, x, dx):
    o, a, c = _lists(ops, args, consts)
    try:
        return _exec(o, a, c, start, end, list(map(float, x)), list(map(float, dx)))
    except _Fault as f:
        raise KernelError(f.code, f.instr) from None


# ---------------------------------------------------------------------------
# vectorised virtual machine over a batch of points


def _raise_first(mask, code, k):
    if mask.any():
        raise KernelError(code, k, int(np.argmax(mask)))


def _inf_on_overflow(fn):
    def g(*v):
        try:
            return fn(*v)
        except OverflowError:
            return math.inf
    return g


_EXP = _inf_on_overflow(math.exp)
_POW = _inf_on_overflow(math.pow)


def _libm(fn, *arrays):
    """Elementwise libm call; numpy's SIMD transcendentals can differ in the last bit."""
    n = len(arrays[0])
    return np.fromiter(map(fn, *(a.tolist() for a in arrays)), dtype=np.float64, count=n)


def eval_dual_batch(ops, args, consts, start, end, X, dx):
    """Values and directional derivatives at every row of ``X`` for one seed ``dx``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    N = X.shape[0]
    sv = []
    sd = []
    with np.errstate(all="ignore"):
        for k in range(start, end):
            op = int(ops[k])
            if op == oc.CONST:
                sv.append(np.full(N, consts[args[k]]))
                sd.append(np.zeros(N))
                continue
            if op == oc.VAR:
                j = int(args[k])
                sv.append(X[:, j].copy())
                sd.append(np.full(N, float(dx[j])))
                continue
            if op == oc.NEG:
                sv[-1] = -sv[-1]
                sd[-1] = -sd[-1]
                continue
            if op <= oc.POW:
                b = sv.pop()
                db = sd.pop()
                a = sv[-1]
                da = sd[-1]
                if op == oc.ADD:
                    v = a + b
                    d = da + db
                elif op == oc.SUB:
                    v = a - b
                    d = da - db
                elif op == oc.MUL:
                    v = a * b
                    d = a * db + da * b
                elif op == oc.DIV:
                    _raise_first(b == 0.0, oc.E_DIV_ZERO, k)
                    v = a / b
                    d = (da * b - a * db) / (b * b)
                else:
                    _raise_first((a < 0.0) & (b != np.floor(b)), oc.E_POW_DOMAIN, k)
                    _raise_first((a == 0.0) & (b < 0.0), oc.E_DIV_ZERO, k)
                    v = _libm(_POW, a, b)
                    d = np.zeros(N)
                    m = (da != 0.0) & (b != 0.0)
                    if m.any():
                        _raise_first(m & (a == 0.0) & (b - 1.0 < 0.0), oc.E_DIV_ZERO, k)
                        d[m] = b[m] * _libm(_POW, a[m], b[m] - 1.0) * da[m]
                    m = db != 0.0
                    if m.any():
                        bad = m & ~(a > 0.0) & ~((a == 0.0) & (b > 0.0))
                        _raise_first(bad, oc.E_POW_DERIV, k)
                        pos = m & (a > 0.0)
                        d[pos] = d[pos] + v[pos] * _libm(math.log, a[pos]) * db[pos]
            else:
                a = sv[-1]
                da = sd[-1]
                if op == oc.SIN:
                    v = _libm(math.sin, a)
                    d = _libm(math.cos, a) * da
                elif op == oc.COS:
                    v = _libm(math.cos, a)
                    d = -_libm(math.sin, a) * da
                elif op == oc.EXP:
                    v = _libm(_EXP, a)
                    d = v * da
                elif op == oc.LOG:
                    _raise_first(a <= 0.0, oc.E_LOG_DOMAIN, k)
                    v = _libm(math.log, a)
                    d = da / a
                elif op == oc.SQRT:
                    _raise_first(a < 0.0, oc.E_SQRT_DOMAIN, k)
                    v = np.sqrt(a)
                    zero = v == 0.0
                    _raise_first(zero & (da != 0.0), oc.E_SQRT_DERIV, k)
                    d = np.where(zero, 0.0, da / (2.0 * np.where(zero, 1.0, v)))
                else:
                    v = _libm(math.tanh, a)
                    d = (1.0 - v * v) * da
            _raise_first(~(np.isfinite(v) & np.isfinite(d)), oc.E_NONFINITE, k)
            sv[-1] = v
            sd[-1] = d
    return sv[0], sd[0]


def eval_batch(ops, args, consts, start, end, X):
    X = np.asarray(X, dtype=np.float64)
    return eval_dual_batch(ops, args, consts, start, end, X, np.zeros(X.shape[1]))[0]


# ---------------------------------------------------------------------------
# matrix measures


def _jacobi_max(S):
    """Largest eigenvalue of a symmetric list-of-lists matrix by cyclic Jacobi."""
    n = len(S)
    A = [row[:] for row in S]
    frob = math.sqrt(sum(v * v for row in A for v in row))
    tol = 1e-12 * frob
    for _ in range(100):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p][q] * A[p][q]
        if math.sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p][q]
                if apq == 0.0:
                    continue
                tau = (A[q][q] - A[p][p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k][p]
                    akq = A[k][q]
                    A[k][p] = c * akp - s * akq
                    A[k][q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p][k]
                    aqk = A[q][k]
                    A[p][k] = c * apk - s * aqk
                    A[q][k] = s * apk + c * aqk
                A[p][q] = 0.0
                A[q][p] = 0.0
    return max(A[i][i] for i in range(n))


def sym_eig_max(S):
    return _jacobi_max(np.asarray(S, dtype=np.float64).tolist())


def _mu_list(A, code):
    n = len(A)
    if code == oc.NORM_TWO:
        S = [[0.5 * (A[i][j] + A[j][i]) for j in range(n)] for i in range(n)]
        return _jacobi_max(S)
    best = -math.inf
    for i in range(n):
        acc = A[i][i]
        for j in range(n):
            if j != i:
                acc += abs(A[j][i]) if code == oc.NORM_ONE else abs(A[i][j])
        if acc > best:
            best = acc
    return best


def _opnorm_list(A, code):
    m = len(A)
    k = len(A[0]) if m else 0
    if code == oc.NORM_TWO:
        G = [[sum(A[r][i] * A[r][j] for r in range(m)) for j in range(k)] for i in range(k)]
        return math.sqrt(max(_jacobi_max(G), 0.0))
    if code == oc.NORM_ONE:
        return max(sum(abs(A[r][j]) for r in range(m)) for j in range(k))
    return max(sum(abs(v) for v in row) for row in A)


def mu(A, code):
    return _mu_list(np.asarray(A, dtype=np.float64).tolist(), code)


def opnorm(A, code):
    return _opnorm_list(np.asarray(A, dtype=np.float64).tolist(), code)


def mu_batch(As, code):
    As = np.asarray(As, dtype=np.float64)
    return np.array([_mu_list(A, code) for A in As.tolist()])


def opnorm_batch(As, code):
    As = np.asarray(As, dtype=np.float64)
    return np.array([_opnorm_list(A, code) for A in As.tolist()])


# ---------------------------------------------------------------------------
# switched / regularised vector fields


def zeta(r, kind):
    """Transition function and its derivative; linear kinks use the outside value."""
    if r >= 1.0:
        return 1.0, 0.0
    if r <= -1.0:
        return -1.0, 0.0
    if kind == oc.ZETA_SINE:
        a = HALF_PI * r
        return math.sin(a), HALF_PI * math.cos(a)
    return r, 1.0


class _BundleLists:
    __slots__ = ("ops", "args", "consts", "starts", "ends", "sys_h",
                 "state_sys", "state_pos", "state_neg", "n", "S")

    def __init__(self, b):
        self.ops = b.ops.tolist()
        self.args = b.args.tolist()
        self.consts = b.consts.tolist()
        self.starts = b.starts.tolist()
        self.ends = b.ends.tolist()
        self.sys_h = b.sys_h.tolist()
        self.state_sys = b.state_sys.tolist()
        self.state_pos = b.state_pos.tolist()
        self.state_neg = b.state_neg.tolist()
        self.n = b.n
        self.S = len(self.sys_h)


def _run(L, prog, x, dx):
    return _exec(L.ops, L.args, L.consts, L.starts[prog], L.ends[prog], x, dx)


def _h_values(L, x):
    return [_run(L, L.sys_h[s], x, None)[0] for s in range(L.S)]


def _switched(L, x, modes):
    out = []
    for i in range(L.n):
        prog = L.state_pos[i] if modes[L.state_sys[i]] > 0 else L.state_neg[i]
        out.append(_run(L, prog, x, None)[0])
    return out


def _blended(L, x, dx, eps, kind):
    psi = []
    dpsi = []
    for s in range(L.S):
        h, dh = _run(L, L.sys_h[s], x, dx)
        z, zp = zeta(h / eps, kind)
        chi = 0.5 * zp / eps
        psi.append(0.5 * (1.0 + z))
        dpsi.append(chi * dh)
    f = []
    df = []
    for i in range(L.n):
        s = L.state_sys[i]
        fp, dfp = _run(L, L.state_pos[i], x, dx)
        fn, dfn = _run(L, L.state_neg[i], x, dx)
        p = psi[s]
        g = 1.0 - p
        f.append(p * fp + g * fn)
        df.append(p * dfp + g * dfn + (fp - fn) * dpsi[s])
    return f, df


def _wrap(fn):
    def inner(*a, **kw):
        try:
            return fn(*a, **kw)
        except _Fault as f:
            raise KernelError(f.code, f.instr) from None
    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


@_wrap
def h_values(bundle, x):
    L = _BundleLists(bundle)
    return np.array(_h_values(L, list(map(float, x))))


@_wrap
def field_switched(bundle, x, modes):
    L = _BundleLists(bundle)
    return np.array(_switched(L, list(map(float, x)), list(modes)))


@_wrap
def field_blended(bundle, x, dx, eps, kind):
    L = _BundleLists(bundle)
    f, df = _blended(L, list(map(float, x)), list(map(float, dx)), float(eps), int(kind))
    return np.array(f), np.array(df)


@_wrap
def rk4_switched(bundle, x, t, dt, modes):
    """One classical RK4 step with frozen modes. ``x`` excludes the time slot."""
    L = _BundleLists(bundle)
    modes = list(modes)
    n = L.n
    x = list(map(float, x))

    def f(y, tt):
        return _switched(L, y + [tt], modes)

    k1 = f(x, t)
    k2 = f([x[i] + 0.5 * dt * k1[i] for i in range(n)], t + 0.5 * dt)
    k3 = f([x[i] + 0.5 * dt * k2[i] for i in range(n)], t + 0.5 * dt)
    k4 = f([x[i] + dt * k3[i] for i in range(n)], t + dt)
    out = [x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]
    for v in out:
        if not math.isfinite(v):
            raise _Fault(oc.E_STATE_NONFINITE, -1)
    return np.array(out)


def rk4_blended(bundle, x0, dx0, times, eps, kind, variational):
    """Integrate the regularised field (and its variational equation) on ``times``.

    Returns ``(X, DX, n_ok, code, instr)``: rows ``[0, n_ok)`` are valid; on
    failure ``code`` is nonzero and rows past ``n_ok`` are unspecified.
    """
    L = _BundleLists(bundle)
    n = L.n
    T = np.asarray(times, dtype=np.float64).tolist()
    M = len(T)
    X = np.zeros((M, n))
    DX = np.zeros((M, n))
    x = list(map(float, x0))
    d = list(map(float, dx0)) if variational else [0.0] * n
    X[0] = x
    DX[0] = d
    eps = float(eps)
    kind = int(kind)

    def f(y, dy, tt):
        return _blended(L, y + [tt], dy + [0.0], eps, kind)

    try:
        for m in range(1, M):
            t = T[m - 1]
            h = T[m] - t
            k1, l1 = f(x, d, t)
            y = [x[i] + 0.5 * h * k1[i] for i in range(n)]
            dy = [d[i] + 0.5 * h * l1[i] for i in range(n)]
            k2, l2 = f(y, dy, t + 0.5 * h)
            y = [x[i] + 0.5 * h * k2[i] for i in range(n)]
            dy = [d[i] + 0.5 * h * l2[i] for i in range(n)]
            k3, l3 = f(y, dy, t + 0.5 * h)
            y = [x[i] + h * k3[i] for i in range(n)]
            dy = [d[i] + h * l3[i] for i in range(n)]
            k4, l4 = f(y, dy, t + h)
            x = [x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]
            d = [d[i] + (h / 6.0) * (l1[i] + 2.0 * l2[i] + 2.0 * l3[i] + l4[i]) for i in range(n)]
            if not all(math.isfinite(v) for v in x) or not all(math.isfinite(v) for v in d):
                return X, DX, m, oc.E_STATE_NONFINITE, -1
            X[m] = x
            DX[m] = d
    except _Fault as fault:
        return X, DX, m, fault.code, fault.instr
    return X, DX, M, oc.OK, -1
