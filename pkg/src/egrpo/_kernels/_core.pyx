# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the dense-network hot loops.

Mirrors ``numpy_backend`` exactly (same formulas, float32 arithmetic); the
win over numpy is fusing elementwise chains into single passes, which
matters at the small batch sizes this project runs at.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrtf, tanhf

cnp.import_array()

cdef float GELU_C0 = 0.7978845608028654
cdef float GELU_C1 = 0.044715
cdef float LN_EPS = 1e-5


def gelu_fwd(object x):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float32)
    cdef cnp.ndarray out = np.empty_like(xa)
    cdef float[::1] xv = xa.ravel()
    cdef float[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef float xi, u
    with nogil:
        for i in range(n):
            xi = xv[i]
            u = GELU_C0 * (xi + GELU_C1 * xi * xi * xi)
            ov[i] = 0.5 * xi * (1.0 + tanhf(u))
    return out


def gelu_bwd(object x, object gout):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float32)
    cdef cnp.ndarray ga = np.ascontiguousarray(gout, dtype=np.float32)
    cdef cnp.ndarray out = np.empty_like(xa)
    cdef float[::1] xv = xa.ravel()
    cdef float[::1] gv = ga.ravel()
    cdef float[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef float xi, x2, u, t, du
    with nogil:
        for i in range(n):
            xi = xv[i]
            x2 = xi * xi
            u = GELU_C0 * (xi + GELU_C1 * xi * x2)
            t = tanhf(u)
            du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x2)
            ov[i] = gv[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du)
    return out


def layernorm_fwd(object x, object scale, object shift):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float32)
    cdef cnp.ndarray sa = np.ascontiguousarray(scale, dtype=np.float32)
    cdef cnp.ndarray ba = np.ascontiguousarray(shift, dtype=np.float32)
    cdef Py_ssize_t B = xa.shape[0], D = xa.shape[1]
    cdef cnp.ndarray out = np.empty((B, D), dtype=np.float32)
    cdef cnp.ndarray mean = np.empty(B, dtype=np.float32)
    cdef cnp.ndarray rstd = np.empty(B, dtype=np.float32)
    cdef float[:, ::1] xv = xa
    cdef float[:, ::1] ov = out
    cdef float[::1] sv = sa, bv = ba, mv = mean, rv = rstd
    cdef Py_ssize_t i, j
    cdef float acc, mu, var, rs
    with nogil:
        for i in range(B):
            acc = 0.0
            for j in range(D):
                acc += xv[i, j]
            mu = acc / D
            acc = 0.0
            for j in range(D):
                acc += (xv[i, j] - mu) * (xv[i, j] - mu)
            var = acc / D
            rs = 1.0 / sqrtf(var + LN_EPS)
            mv[i] = mu
            rv[i] = rs
            for j in range(D):
                ov[i, j] = (xv[i, j] - mu) * rs * sv[j] + bv[j]
    return out, mean, rstd


def layernorm_bwd(object x, object scale, object mean, object rstd, object gout):
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float32)
    cdef cnp.ndarray sa = np.ascontiguousarray(scale, dtype=np.float32)
    cdef cnp.ndarray ma = np.ascontiguousarray(mean, dtype=np.float32)
    cdef cnp.ndarray ra = np.ascontiguousarray(rstd, dtype=np.float32)
    cdef cnp.ndarray ga = np.ascontiguousarray(gout, dtype=np.float32)
    cdef Py_ssize_t B = xa.shape[0], D = xa.shape[1]
    cdef cnp.ndarray gx = np.empty((B, D), dtype=np.float32)
    cdef cnp.ndarray gscale = np.zeros(D, dtype=np.float32)
    cdef cnp.ndarray gshift = np.zeros(D, dtype=np.float32)
    cdef float[:, ::1] xv = xa, gv = ga, gxv = gx
    cdef float[::1] sv = sa, mv = ma, rv = ra, gsv = gscale, gbv = gshift
    cdef Py_ssize_t i, j
    cdef float m1, m2, xhat, gxhat, mu, rs
    with nogil:
        for i in range(B):
            mu = mv[i]
            rs = rv[i]
            m1 = 0.0
            m2 = 0.0
            for j in range(D):
                xhat = (xv[i, j] - mu) * rs
                gxhat = gv[i, j] * sv[j]
                m1 += gxhat
                m2 += gxhat * xhat
            m1 /= D
            m2 /= D
            for j in range(D):
                xhat = (xv[i, j] - mu) * rs
                gxhat = gv[i, j] * sv[j]
                gxv[i, j] = rs * (gxhat - m1 - xhat * m2)
                gsv[j] += gv[i, j] * xhat
                gbv[j] += gv[i, j]
    return gx, gscale, gshift


def adam_update(object p, object g, object m, object v,
                long t, double lr, double b1, double b2, double eps):
    cdef float[::1] pv = p.ravel()
    cdef float[::1] gv = np.ascontiguousarray(g, dtype=np.float32).ravel()
    cdef float[::1] mv = m.ravel()
    cdef float[::1] vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef float fb1 = <float> b1, fb2 = <float> b2
    cdef float flr = <float> lr, feps = <float> eps
    cdef float c1 = <float> (1.0 - pow(b1, t))
    cdef float c2 = <float> (1.0 - pow(b2, t))
    cdef float gi, mhat, vhat
    with nogil:
        for i in range(n):
            gi = gv[i]
            mv[i] = fb1 * mv[i] + (1.0 - fb1) * gi
            vv[i] = fb2 * vv[i] + (1.0 - fb2) * gi * gi
            mhat = mv[i] / c1
            vhat = vv[i] / c2
            pv[i] -= flr * mhat / (sqrtf(vhat) + feps)


def polyak(object target, object online, double rho):
    cdef float[::1] tv = target.ravel()
    cdef float[::1] ov = np.ascontiguousarray(online, dtype=np.float32).ravel()
    cdef Py_ssize_t i, n = tv.shape[0]
    cdef float fr = <float> rho
    with nogil:
        for i in range(n):
            tv[i] = (1.0 - fr) * tv[i] + fr * ov[i]
