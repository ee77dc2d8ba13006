# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: phase tables, fused NUDFT backward combine,
exact GeLU, and a fused Adam step.

Signatures mirror geofno._kernels.numpy_impl; the import-time dispatcher
picks whichever backend is available.  The inner loops live in embedded C
with restrict pointers so the compiler can vectorize them.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #include <math.h>

    static void geofno_combine_axis2(double* restrict co, double* restrict so,
                                     const double* restrict tc0, const double* restrict ts0,
                                     const double* restrict tc1, const double* restrict ts1,
                                     const long* restrict k0, const long* restrict k1,
                                     long K) {
        for (long k = 0; k < K; k++) {
            double c1 = tc0[k0[k]], s1 = ts0[k0[k]];
            double c2 = tc1[k1[k]], s2 = ts1[k1[k]];
            co[k] = c1 * c2 - s1 * s2;
            so[k] = c1 * s2 + s1 * c2;
        }
    }

    static void geofno_dtheta(double* restrict out,
                              const double* restrict cm, const double* restrict sm,
                              const double* restrict a, const double* restrict b,
                              double ca, double cb, long n) {
        for (long j = 0; j < n; j++)
            out[j] = ca * a[j] * sm[j] + cb * b[j] * cm[j];
    }

    static void geofno_gelu_fwd(double* restrict y, double* restrict big, double* restrict small,
                                const double* restrict x, long n) {
        const double s12 = 0.7071067811865476;
        const double inv_s2pi = 0.3989422804014327;
        for (long j = 0; j < n; j++) {
            double xv = x[j];
            double ph = 0.5 * (1.0 + erf(xv * s12));
            big[j] = ph;
            small[j] = inv_s2pi * exp(-0.5 * xv * xv);
            y[j] = xv * ph;
        }
    }

    static void geofno_gelu_bwd(double* restrict out, const double* restrict g,
                                const double* restrict x, const double* restrict big,
                                const double* restrict small, long n) {
        for (long j = 0; j < n; j++)
            out[j] = g[j] * (big[j] + x[j] * small[j]);
    }

    static void geofno_adam(double* restrict pn, double* restrict mn, double* restrict vn,
                            const double* restrict p, const double* restrict g,
                            const double* restrict m, const double* restrict v,
                            long n, double b1, double b2,
                            double lr_bc1, double inv_sqrt_bc2, double eps) {
        double om1 = 1.0 - b1, om2 = 1.0 - b2;
        for (long j = 0; j < n; j++) {
            double mj = b1 * m[j] + om1 * g[j];
            double vj = b2 * v[j] + om2 * g[j] * g[j];
            mn[j] = mj;
            vn[j] = vj;
            pn[j] = p[j] - lr_bc1 * mj / (sqrt(vj) * inv_sqrt_bc2 + eps);
        }
    }
    """
    void geofno_combine_axis2(double*, double*, const double*, const double*,
                              const double*, const double*, const long*, const long*, long) nogil
    void geofno_dtheta(double*, const double*, const double*, const double*,
                       const double*, double, double, long) nogil
    void geofno_gelu_fwd(double*, double*, double*, const double*, long) nogil
    void geofno_gelu_bwd(double*, const double*, const double*, const double*,
                         const double*, long) nogil
    void geofno_adam(double*, double*, double*, const double*, const double*,
                     const double*, const double*, long, double, double,
                     double, double, double) nogil

from libc.math cimport cos, sin, sqrt

IS_COMPILED = True

cdef double TWO_PI = 6.283185307179586


def phase_build(cnp.ndarray[cnp.float64_t, ndim=3] xi,
                cnp.ndarray[cnp.int64_t, ndim=2] kfreq):
    """cos/sin of 2*pi*<xi, k> via per-axis power tables (2 sincos per point/axis)."""
    cdef Py_ssize_t B = xi.shape[0], N = xi.shape[1], d = xi.shape[2]
    cdef Py_ssize_t K = kfreq.shape[0]
    cdef long kmin = 0, kmax = 0
    cdef Py_ssize_t b, i, k, ax, t
    cdef long kv
    for ax in range(d):
        for k in range(K):
            kv = kfreq[k, ax]
            if kv < kmin: kmin = kv
            if kv > kmax: kmax = kv
    cdef Py_ssize_t tsize = kmax - kmin + 1
    cdef Py_ssize_t zoff = -kmin
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cos_out = np.empty((B, N, K))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] sin_out = np.empty((B, N, K))
    # table offsets pre-resolved per mode so the combine loop reads linearly
    cdef cnp.ndarray[cnp.int64_t, ndim=2] koff = np.ascontiguousarray(kfreq + zoff)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] koff0 = np.ascontiguousarray(koff[:, 0])
    cdef cnp.ndarray[cnp.int64_t, ndim=1] koff1 = np.ascontiguousarray(koff[:, 1]) if d > 1 else koff0
    cdef cnp.ndarray[cnp.float64_t, ndim=2] tc = np.empty((3, tsize))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ts = np.empty((3, tsize))
    cdef double c1, s1, cm1, sm1, cc, ss, cr, sr, ang
    cdef double* pco
    cdef double* pso
    cdef long kv0, kv1, kv2
    for b in range(B):
        for i in range(N):
            for ax in range(d):
                ang = TWO_PI * xi[b, i, ax]
                c1 = cos(ang); s1 = sin(ang)
                tc[ax, zoff] = 1.0; ts[ax, zoff] = 0.0
                cc = 1.0; ss = 0.0
                for t in range(1, kmax + 1):
                    cr = cc * c1 - ss * s1
                    sr = cc * s1 + ss * c1
                    cc = cr; ss = sr
                    tc[ax, zoff + t] = cc; ts[ax, zoff + t] = ss
                cm1 = c1; sm1 = -s1
                cc = 1.0; ss = 0.0
                for t in range(1, -kmin + 1):
                    cr = cc * cm1 - ss * sm1
                    sr = cc * sm1 + ss * cm1
                    cc = cr; ss = sr
                    tc[ax, zoff - t] = cc; ts[ax, zoff - t] = ss
            pco = &cos_out[b, i, 0]
            pso = &sin_out[b, i, 0]
            if d == 2:
                geofno_combine_axis2(pco, pso, &tc[0, 0], &ts[0, 0], &tc[1, 0], &ts[1, 0],
                                     <const long*> &koff0[0], <const long*> &koff1[0], K)
            elif d == 1:
                for k in range(K):
                    kv0 = koff[k, 0]
                    pco[k] = tc[0, kv0]
                    pso[k] = ts[0, kv0]
            else:
                for k in range(K):
                    kv0 = koff[k, 0]; kv1 = koff[k, 1]; kv2 = koff[k, 2]
                    c1 = tc[0, kv0]; s1 = ts[0, kv0]
                    cc = tc[1, kv1]; ss = ts[1, kv1]
                    cr = c1 * cc - s1 * ss
                    sr = c1 * ss + s1 * cc
                    c1 = tc[2, kv2]; s1 = ts[2, kv2]
                    pco[k] = cr * c1 - sr * s1
                    pso[k] = cr * s1 + sr * c1
    return cos_out, sin_out


def dtheta_combine(cnp.ndarray cos_m, cnp.ndarray sin_m,
                   cnp.ndarray a, cnp.ndarray b, double ca, double cb):
    cdef cnp.ndarray cm = np.ascontiguousarray(cos_m)
    cdef cnp.ndarray sm = np.ascontiguousarray(sin_m)
    cdef cnp.ndarray aa = np.ascontiguousarray(a)
    cdef cnp.ndarray bb = np.ascontiguousarray(b)
    cdef cnp.ndarray out = np.empty_like(cm)
    geofno_dtheta(<double*> cnp.PyArray_DATA(out),
                  <double*> cnp.PyArray_DATA(cm), <double*> cnp.PyArray_DATA(sm),
                  <double*> cnp.PyArray_DATA(aa), <double*> cnp.PyArray_DATA(bb),
                  ca, cb, cm.size)
    return out


def gelu_fwd(cnp.ndarray x_in):
    cdef cnp.ndarray x = np.ascontiguousarray(x_in)
    cdef cnp.ndarray y = np.empty_like(x)
    cdef cnp.ndarray big = np.empty_like(x)
    cdef cnp.ndarray small = np.empty_like(x)
    geofno_gelu_fwd(<double*> cnp.PyArray_DATA(y), <double*> cnp.PyArray_DATA(big),
                    <double*> cnp.PyArray_DATA(small), <double*> cnp.PyArray_DATA(x), x.size)
    return y, big, small


def gelu_bwd(cnp.ndarray g_in, cnp.ndarray x_in, cnp.ndarray big_in, cnp.ndarray small_in):
    cdef cnp.ndarray g = np.ascontiguousarray(g_in)
    cdef cnp.ndarray x = np.ascontiguousarray(x_in)
    cdef cnp.ndarray big = np.ascontiguousarray(big_in)
    cdef cnp.ndarray small = np.ascontiguousarray(small_in)
    cdef cnp.ndarray out = np.empty_like(g)
    geofno_gelu_bwd(<double*> cnp.PyArray_DATA(out), <double*> cnp.PyArray_DATA(g),
                    <double*> cnp.PyArray_DATA(x), <double*> cnp.PyArray_DATA(big),
                    <double*> cnp.PyArray_DATA(small), g.size)
    return out


def adam_update(cnp.ndarray[cnp.float64_t, ndim=1] p,
                cnp.ndarray[cnp.float64_t, ndim=1] g,
                cnp.ndarray[cnp.float64_t, ndim=1] m,
                cnp.ndarray[cnp.float64_t, ndim=1] v,
                long step, double lr, double beta1, double beta2, double eps):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p_new = np.empty_like(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m_new = np.empty_like(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_new = np.empty_like(p)
    cdef double bc1 = 1.0 - beta1 ** step
    cdef double bc2 = 1.0 - beta2 ** step
    geofno_adam(&p_new[0], &m_new[0], &v_new[0], &p[0], &g[0], &m[0], &v[0],
                p.shape[0], beta1, beta2, lr / bc1, 1.0 / sqrt(bc2), eps)
    return p_new, m_new, v_new
