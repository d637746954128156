# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Twin of ``_pykernels``: same signatures, same operation order.

Opcode and status integers mirror ``opcodes.py``.
"""
import numpy as np

from libc.math cimport sin, cos, exp, log, sqrt, tanh, pow, floor, fabs, isfinite, M_PI
from libc.stdlib cimport malloc, free

from ._common import KernelError

BACKEND = "compiled"

cdef enum:
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

cdef enum:
    OK = 0
    E_DIV_ZERO = 1
    E_POW_DOMAIN = 2
    E_LOG_DOMAIN = 3
    E_SQRT_DOMAIN = 4
    E_SQRT_DERIV = 5
    E_POW_DERIV = 6
    E_NONFINITE = 7
    E_STATE_NONFINITE = 8

cdef enum:
    NORM_ONE = 1
    NORM_TWO = 2
    NORM_INF = 3

cdef enum:
    ZETA_SINE = 0
    ZETA_LINEAR = 1

cdef double HALF_PI = 0.5 * M_PI


# ---------------------------------------------------------------------------
# scalar virtual machine

cdef int _exec(const int* ops, const int* args, const double* consts,
               Py_ssize_t start, Py_ssize_t end,
               const double* x, const double* dx,
               double* sv, double* sd,
               double* out_v, double* out_d, Py_ssize_t* err_at) noexcept nogil:
    cdef Py_ssize_t k, top = -1
    cdef int op
    cdef double a, b, da, db, v, d, pw
    for k in range(start, end):
        op = ops[k]
        if op == CONST:
            top += 1
            sv[top] = consts[args[k]]
            sd[top] = 0.0
            continue
        if op == VAR:
            top += 1
            sv[top] = x[args[k]]
            sd[top] = dx[args[k]] if dx != NULL else 0.0
            continue
        if op == NEG:
            sv[top] = -sv[top]
            sd[top] = -sd[top]
            continue
        if op <= POW:
            b = sv[top]
            db = sd[top]
            top -= 1
            a = sv[top]
            da = sd[top]
            if op == ADD:
                v = a + b
                d = da + db
            elif op == SUB:
                v = a - b
                d = da - db
            elif op == MUL:
                v = a * b
                d = a * db + da * b
            elif op == DIV:
                if b == 0.0:
                    err_at[0] = k
                    return E_DIV_ZERO
                v = a / b
                d = (da * b - a * db) / (b * b)
            else:
                if a < 0.0 and b != floor(b):
                    err_at[0] = k
                    return E_POW_DOMAIN
                if a == 0.0 and b < 0.0:
                    err_at[0] = k
                    return E_DIV_ZERO
                v = pow(a, b)
                if not isfinite(v):
                    err_at[0] = k
                    return E_NONFINITE
                d = 0.0
                if da != 0.0 and b != 0.0:
                    if a == 0.0 and b - 1.0 < 0.0:
                        err_at[0] = k
                        return E_DIV_ZERO
                    pw = pow(a, b - 1.0)
                    if not isfinite(pw):
                        err_at[0] = k
                        return E_NONFINITE
                    d = b * pw * da
                if db != 0.0:
                    if a > 0.0:
                        d = d + v * log(a) * db
                    elif not (a == 0.0 and b > 0.0):
                        err_at[0] = k
                        return E_POW_DERIV
        else:
            a = sv[top]
            da = sd[top]
            if op == SIN:
                v = sin(a)
                d = cos(a) * da
            elif op == COS:
                v = cos(a)
                d = -sin(a) * da
            elif op == EXP:
                v = exp(a)
                d = v * da
            elif op == LOG:
                if a <= 0.0:
                    err_at[0] = k
                    return E_LOG_DOMAIN
                v = log(a)
                d = da / a
            elif op == SQRT:
                if a < 0.0:
                    err_at[0] = k
                    return E_SQRT_DOMAIN
                v = sqrt(a)
                if v == 0.0:
                    if da != 0.0:
                        err_at[0] = k
                        return E_SQRT_DERIV
                    d = 0.0
                else:
                    d = da / (2.0 * v)
            else:
                v = tanh(a)
                d = (1.0 - v * v) * da
        if not (isfinite(v) and isfinite(d)):
            err_at[0] = k
            return E_NONFINITE
        sv[top] = v
        sd[top] = d
    out_v[0] = sv[0]
    out_d[0] = sd[0]
    return OK


cdef class _Stack:
    cdef double* sv
    cdef double* sd

    def __cinit__(self, Py_ssize_t size):
        if size < 1:
            size = 1
        self.sv = <double*>malloc(size * sizeof(double))
        self.sd = <double*>malloc(size * sizeof(double))
        if self.sv == NULL or self.sd == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.sv)
        free(self.sd)


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _i32(x):
    return np.ascontiguousarray(x, dtype=np.int32)


def eval_value(ops, args, consts, Py_ssize_t start, Py_ssize_t end, x):
    return eval_dual(ops, args, consts, start, end, x, None)[0]


def eval_dual(ops, args, consts, Py_ssize_t start, Py_ssize_t end, x, dx):
    cdef const int[::1] o = _i32(ops)
    cdef const int[::1] a = _i32(args)
    cdef const double[::1] c = _f64(consts)
    cdef const double[::1] xv = _f64(x)
    cdef const double[::1] dv
    cdef const double* dptr = NULL
    if dx is not None:
        dv = _f64(dx)
        dptr = &dv[0]
    cdef _Stack st = _Stack(end - start)
    cdef double v = 0.0, d = 0.0
    cdef Py_ssize_t err = -1
    cdef const double* cptr = &c[0] if c.shape[0] > 0 else NULL
    cdef int code = _exec(&o[0], &a[0], cptr, start, end, &xv[0], dptr,
                          st.sv, st.sd, &v, &d, &err)
    if code != OK:
        raise KernelError(code, err)
    return v, d


def eval_dual_batch(ops, args, consts, Py_ssize_t start, Py_ssize_t end, X, dx):
    cdef const int[::1] o = _i32(ops)
    cdef const int[::1] a = _i32(args)
    cdef const double[::1] c = _f64(consts)
    cdef const double[:, ::1] Xv = _f64(X)
    cdef const double[::1] dv = _f64(dx)
    cdef Py_ssize_t N = Xv.shape[0], i
    vals = np.empty(N)
    ders = np.empty(N)
    cdef double[::1] vo = vals
    cdef double[::1] do = ders
    cdef _Stack st = _Stack(end - start)
    cdef Py_ssize_t err = -1
    cdef int code = OK
    cdef const double* cptr = &c[0] if c.shape[0] > 0 else NULL
    if N == 0:
        return vals, ders
    with nogil:
        for i in range(N):
            code = _exec(&o[0], &a[0], cptr, start, end, &Xv[i, 0], &dv[0],
                         st.sv, st.sd, &vo[i], &do[i], &err)
            if code != OK:
                break
    if code != OK:
        raise KernelError(code, err, i)
    return vals, ders


def eval_batch(ops, args, consts, Py_ssize_t start, Py_ssize_t end, X):
    X = _f64(X)
    return eval_dual_batch(ops, args, consts, start, end, X, np.zeros(X.shape[1]))[0]


# ---------------------------------------------------------------------------
# matrix measures

cdef double _jacobi_max(double* A, Py_ssize_t n) noexcept nogil:
    """Largest eigenvalue of symmetric row-major ``A`` (destroyed) by cyclic Jacobi."""
    cdef Py_ssize_t p, q, k, sweep
    cdef double frob = 0.0, off, tol, apq, tau, t, c, s, akp, akq, apk, aqk, best
    for k in range(n * n):
        frob += A[k] * A[k]
    tol = 1e-12 * sqrt(frob)
    for sweep in range(100):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p * n + q] * A[p * n + q]
        if sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p * n + q]
                if apq == 0.0:
                    continue
                tau = (A[q * n + q] - A[p * n + p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = A[k * n + p]
                    akq = A[k * n + q]
                    A[k * n + p] = c * akp - s * akq
                    A[k * n + q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p * n + k]
                    aqk = A[q * n + k]
                    A[p * n + k] = c * apk - s * aqk
                    A[q * n + k] = s * apk + c * aqk
                A[p * n + q] = 0.0
                A[q * n + p] = 0.0
    best = A[0]
    for k in range(1, n):
        if A[k * n + k] > best:
            best = A[k * n + k]
    return best


cdef double _mu(const double* A, Py_ssize_t n, int code, double* work) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc, best
    if code == NORM_TWO:
        for i in range(n):
            for j in range(n):
                work[i * n + j] = 0.5 * (A[i * n + j] + A[j * n + i])
        return _jacobi_max(work, n)
    best = -1.0 / 0.0
    for i in range(n):
        acc = A[i * n + i]
        for j in range(n):
            if j != i:
                if code == NORM_ONE:
                    acc += fabs(A[j * n + i])
                else:
                    acc += fabs(A[i * n + j])
        if acc > best:
            best = acc
    return best


cdef double _opnorm(const double* A, Py_ssize_t m, Py_ssize_t k, int code, double* work) noexcept nogil:
    cdef Py_ssize_t i, j, r
    cdef double acc, best = 0.0, g
    if code == NORM_TWO:
        for i in range(k):
            for j in range(k):
                g = 0.0
                for r in range(m):
                    g += A[r * k + i] * A[r * k + j]
                work[i * k + j] = g
        g = _jacobi_max(work, k)
        return sqrt(g if g > 0.0 else 0.0)
    if code == NORM_ONE:
        for j in range(k):
            acc = 0.0
            for r in range(m):
                acc += fabs(A[r * k + j])
            if j == 0 or acc > best:
                best = acc
        return best
    for r in range(m):
        acc = 0.0
        for j in range(k):
            acc += fabs(A[r * k + j])
        if r == 0 or acc > best:
            best = acc
    return best


def sym_eig_max(S):
    cdef double[:, ::1] W = np.array(S, dtype=np.float64, order="C", copy=True)
    return _jacobi_max(&W[0, 0], W.shape[0])


def mu(A, int code):
    cdef const double[:, ::1] Av = _f64(A)
    cdef Py_ssize_t n = Av.shape[0]
    cdef double[::1] work = np.empty(n * n)
    return _mu(&Av[0, 0], n, code, &work[0])


def opnorm(A, int code):
    cdef const double[:, ::1] Av = _f64(A)
    cdef Py_ssize_t m = Av.shape[0], k = Av.shape[1]
    cdef double[::1] work = np.empty(k * k)
    return _opnorm(&Av[0, 0], m, k, code, &work[0])


def mu_batch(As, int code):
    cdef const double[:, :, ::1] Av = _f64(As)
    cdef Py_ssize_t N = Av.shape[0], n = Av.shape[1], i
    out = np.empty(N)
    cdef double[::1] ov = out
    cdef double[::1] work = np.empty(max(n * n, 1))
    with nogil:
        for i in range(N):
            ov[i] = _mu(&Av[i, 0, 0], n, code, &work[0])
    return out


def opnorm_batch(As, int code):
    cdef const double[:, :, ::1] Av = _f64(As)
    cdef Py_ssize_t N = Av.shape[0], m = Av.shape[1], k = Av.shape[2], i
    out = np.empty(N)
    cdef double[::1] ov = out
    cdef double[::1] work = np.empty(max(k * k, 1))
    with nogil:
        for i in range(N):
            ov[i] = _opnorm(&Av[i, 0, 0], m, k, code, &work[0])
    return out


# ---------------------------------------------------------------------------
# switched / regularised vector fields

cdef inline void _zeta(double r, int kind, double* z, double* zp) noexcept nogil:
    cdef double a
    if r >= 1.0:
        z[0] = 1.0
        zp[0] = 0.0
    elif r <= -1.0:
        z[0] = -1.0
        zp[0] = 0.0
    elif kind == ZETA_SINE:
        a = HALF_PI * r
        z[0] = sin(a)
        zp[0] = HALF_PI * cos(a)
    else:
        z[0] = r
        zp[0] = 1.0


def zeta(double r, int kind):
    cdef double z, zp
    _zeta(r, kind, &z, &zp)
    return z, zp


cdef class CBundle:
    """C view of a ``Bundle``: flat program storage plus system wiring."""
    cdef const int[::1] ops
    cdef const int[::1] args
    cdef const double[::1] consts
    cdef const Py_ssize_t[::1] starts
    cdef const Py_ssize_t[::1] ends
    cdef const int[::1] sys_h
    cdef const int[::1] state_sys
    cdef const int[::1] state_pos
    cdef const int[::1] state_neg
    cdef Py_ssize_t n, S
    cdef _Stack st
    cdef double[::1] psi
    cdef double[::1] dpsi
    cdef double[::1] zerod
    cdef const double* cptr

    def __init__(self, b):
        self.ops = _i32(b.ops)
        self.args = _i32(b.args)
        consts = _f64(b.consts)
        if consts.shape[0] == 0:
            consts = np.zeros(1)
        self.consts = consts
        self.cptr = &self.consts[0]
        self.starts = np.ascontiguousarray(b.starts, dtype=np.intp)
        self.ends = np.ascontiguousarray(b.ends, dtype=np.intp)
        self.sys_h = _i32(b.sys_h)
        self.state_sys = _i32(b.state_sys)
        self.state_pos = _i32(b.state_pos)
        self.state_neg = _i32(b.state_neg)
        self.n = b.n
        self.S = self.sys_h.shape[0]
        self.st = _Stack(max(b.max_len, 1))
        self.psi = np.empty(max(self.S, 1))
        self.dpsi = np.empty(max(self.S, 1))
        self.zerod = np.zeros(self.n + 1)

    cdef inline int run(self, Py_ssize_t prog, const double* x, const double* dx,
                        double* v, double* d, Py_ssize_t* err) noexcept nogil:
        return _exec(&self.ops[0], &self.args[0], self.cptr,
                     self.starts[prog], self.ends[prog], x, dx,
                     self.st.sv, self.st.sd, v, d, err)

    cdef int h_values(self, const double* x, double* out, Py_ssize_t* err) noexcept nogil:
        cdef Py_ssize_t s
        cdef double d
        cdef int code
        for s in range(self.S):
            code = self.run(self.sys_h[s], x, NULL, &out[s], &d, err)
            if code != OK:
                return code
        return OK

    cdef int switched(self, const double* x, const signed char* modes, double* out,
                      Py_ssize_t* err) noexcept nogil:
        cdef Py_ssize_t i, prog
        cdef double d
        cdef int code
        for i in range(self.n):
            prog = self.state_pos[i] if modes[self.state_sys[i]] > 0 else self.state_neg[i]
            code = self.run(prog, x, NULL, &out[i], &d, err)
            if code != OK:
                return code
        return OK

    cdef int blended(self, const double* x, const double* dx, double eps, int kind,
                     double* f, double* df, Py_ssize_t* err) noexcept nogil:
        cdef Py_ssize_t s, i
        cdef double h, dh, z, zp, chi, fp, dfp, fn, dfn, p, g
        cdef int code
        for s in range(self.S):
            code = self.run(self.sys_h[s], x, dx, &h, &dh, err)
            if code != OK:
                return code
            _zeta(h / eps, kind, &z, &zp)
            chi = 0.5 * zp / eps
            self.psi[s] = 0.5 * (1.0 + z)
            self.dpsi[s] = chi * dh
        for i in range(self.n):
            s = self.state_sys[i]
            code = self.run(self.state_pos[i], x, dx, &fp, &dfp, err)
            if code != OK:
                return code
            code = self.run(self.state_neg[i], x, dx, &fn, &dfn, err)
            if code != OK:
                return code
            p = self.psi[s]
            g = 1.0 - p
            f[i] = p * fp + g * fn
            df[i] = p * dfp + g * dfn + (fp - fn) * self.dpsi[s]
        return OK


def _get(bundle):
    cb = getattr(bundle, "_keepalive_cbundle", None)
    if cb is None:
        cb = CBundle(bundle)
        bundle._keepalive_cbundle = cb
    return cb


def h_values(bundle, x):
    cdef CBundle cb = _get(bundle)
    cdef const double[::1] xv = _f64(x)
    out = np.empty(cb.S)
    cdef double[::1] ov = out
    cdef Py_ssize_t err = -1
    cdef int code = cb.h_values(&xv[0], &ov[0], &err)
    if code != OK:
        raise KernelError(code, err)
    return out


def field_switched(bundle, x, modes):
    cdef CBundle cb = _get(bundle)
    cdef const double[::1] xv = _f64(x)
    cdef const signed char[::1] mv = np.ascontiguousarray(modes, dtype=np.int8)
    out = np.empty(cb.n)
    cdef double[::1] ov = out
    cdef Py_ssize_t err = -1
    cdef int code = cb.switched(&xv[0], &mv[0], &ov[0], &err)
    if code != OK:
        raise KernelError(code, err)
    return out


def field_blended(bundle, x, dx, double eps, int kind):
    cdef CBundle cb = _get(bundle)
    cdef const double[::1] xv = _f64(x)
    cdef const double[::1] dv = _f64(dx)
    f = np.empty(cb.n)
    df = np.empty(cb.n)
    cdef double[::1] fv = f
    cdef double[::1] dfv = df
    cdef Py_ssize_t err = -1
    cdef int code = cb.blended(&xv[0], &dv[0], eps, kind, &fv[0], &dfv[0], &err)
    if code != OK:
        raise KernelError(code, err)
    return f, df


def rk4_switched(bundle, x, double t, double dt, modes):
    """One classical RK4 step with frozen modes. ``x`` excludes the time slot."""
    cdef CBundle cb = _get(bundle)
    cdef Py_ssize_t n = cb.n, i
    cdef const signed char[::1] mv = np.ascontiguousarray(modes, dtype=np.int8)
    cdef const double[::1] x0 = _f64(x)
    cdef double[::1] y = np.empty(n + 1)
    cdef double[:, ::1] k = np.empty((4, n))
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t err = -1
    cdef int code
    for i in range(n):
        y[i] = x0[i]
    y[n] = t
    code = cb.switched(&y[0], &mv[0], &k[0, 0], &err)
    if code == OK:
        for i in range(n):
            y[i] = x0[i] + 0.5 * dt * k[0, i]
        y[n] = t + 0.5 * dt
        code = cb.switched(&y[0], &mv[0], &k[1, 0], &err)
    if code == OK:
        for i in range(n):
            y[i] = x0[i] + 0.5 * dt * k[1, i]
        code = cb.switched(&y[0], &mv[0], &k[2, 0], &err)
    if code == OK:
        for i in range(n):
            y[i] = x0[i] + dt * k[2, i]
        y[n] = t + dt
        code = cb.switched(&y[0], &mv[0], &k[3, 0], &err)
    if code != OK:
        raise KernelError(code, err)
    for i in range(n):
        ov[i] = x0[i] + (dt / 6.0) * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
        if not isfinite(ov[i]):
            raise KernelError(E_STATE_NONFINITE, -1)
    return out


def rk4_blended(bundle, x0, dx0, times, double eps, int kind, bint variational):
    """Integrate the regularised field (and its variational equation) on ``times``.

    Returns ``(X, DX, n_ok, code, instr)``; see the Python twin.
    """
    cdef CBundle cb = _get(bundle)
    cdef Py_ssize_t n = cb.n, i, m, M
    cdef const double[::1] T = _f64(times)
    M = T.shape[0]
    X = np.zeros((M, n))
    DX = np.zeros((M, n))
    cdef double[:, ::1] Xv = X
    cdef double[:, ::1] Dv = DX
    cdef const double[::1] xi = _f64(x0)
    cdef double[::1] x = np.empty(n)
    cdef double[::1] d = np.zeros(n)
    cdef double[::1] y = np.empty(n + 1)
    cdef double[::1] dy = np.zeros(n + 1)
    cdef double[:, ::1] kk = np.empty((4, n))
    cdef double[:, ::1] ll = np.empty((4, n))
    cdef double t, h
    cdef Py_ssize_t err = -1
    cdef int code = OK
    cdef bint bad
    cdef const double[::1] di
    for i in range(n):
        x[i] = xi[i]
    if variational:
        di = _f64(dx0)
        for i in range(n):
            d[i] = di[i]
    for i in range(n):
        Xv[0, i] = x[i]
        Dv[0, i] = d[i]
    m = 1
    with nogil:
        while m < M:
            t = T[m - 1]
            h = T[m] - t
            for i in range(n):
                y[i] = x[i]
                dy[i] = d[i]
            y[n] = t
            code = cb.blended(&y[0], &dy[0], eps, kind, &kk[0, 0], &ll[0, 0], &err)
            if code != OK:
                break
            for i in range(n):
                y[i] = x[i] + 0.5 * h * kk[0, i]
                dy[i] = d[i] + 0.5 * h * ll[0, i]
            y[n] = t + 0.5 * h
            code = cb.blended(&y[0], &dy[0], eps, kind, &kk[1, 0], &ll[1, 0], &err)
            if code != OK:
                break
            for i in range(n):
                y[i] = x[i] + 0.5 * h * kk[1, i]
                dy[i] = d[i] + 0.5 * h * ll[1, i]
            code = cb.blended(&y[0], &dy[0], eps, kind, &kk[2, 0], &ll[2, 0], &err)
            if code != OK:
                break
            for i in range(n):
                y[i] = x[i] + h * kk[2, i]
                dy[i] = d[i] + h * ll[2, i]
            y[n] = t + h
            code = cb.blended(&y[0], &dy[0], eps, kind, &kk[3, 0], &ll[3, 0], &err)
            if code != OK:
                break
            bad = False
            for i in range(n):
                x[i] = x[i] + (h / 6.0) * (kk[0, i] + 2.0 * kk[1, i] + 2.0 * kk[2, i] + kk[3, i])
                d[i] = d[i] + (h / 6.0) * (ll[0, i] + 2.0 * ll[1, i] + 2.0 * ll[2, i] + ll[3, i])
                if not (isfinite(x[i]) and isfinite(d[i])):
                    bad = True
            if bad:
                code = E_STATE_NONFINITE
                err = -1
                break
            for i in range(n):
                Xv[m, i] = x[i]
                Dv[m, i] = d[i]
            m += 1
    return X, DX, m, code, err
