# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inflow-angle solver; same residual as ``_model.residual``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, acos, sqrt, fabs, floor, M_PI, isfinite

cnp.import_array()

DEF PHI_EPS = 1e-6
DEF FTOL = 1e-12
DEF MAXITER = 200


cdef struct Polars:
    const double* alpha
    const double* cl
    const double* cd
    const double* dcl
    const double* dcd
    Py_ssize_t n


cdef inline double _hermite(double x, const double* xp, const double* fp,
                            const double* dfp, Py_ssize_t n) nogil:
    cdef Py_ssize_t lo = 0, hi = n - 1, mid
    # largest k with xp[k] <= x, clipped to [0, n-2]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xp[mid] <= x:
            lo = mid
        else:
            hi = mid
    cdef double h = xp[lo + 1] - xp[lo]
    cdef double t = (x - xp[lo]) / h
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * fp[lo] + (t3 - 2 * t2 + t) * h * dfp[lo]
            + (-2 * t3 + 3 * t2) * fp[lo + 1] + (t3 - t2) * h * dfp[lo + 1])


cdef double _residual(double phi, double x, double sigma_p, double theta,
                      double ftip, double fhub, double offset, Polars* P) nogil:
    cdef double sphi = sin(phi), cphi = cos(phi)
    cdef double alpha = (phi - theta) * (180.0 / M_PI)
    if alpha < -180.0 or alpha > 180.0:
        alpha = alpha - 360.0 * floor((alpha + 180.0) / 360.0)
    alpha += offset
    cdef double cl = _hermite(alpha, P.alpha, P.cl, P.dcl, P.n)
    cdef double cd = _hermite(alpha, P.alpha, P.cd, P.dcd, P.n)
    cdef double cn = cl * cphi + cd * sphi
    cdef double ct = cl * sphi - cd * cphi
    cdef double abs_s = fabs(sphi)
    cdef double F = (2.0 / M_PI) * acos(exp(-ftip / abs_s)) * (2.0 / M_PI) * acos(exp(-fhub / abs_s))
    cdef double k = sigma_p * cn / (4.0 * F * sphi * sphi)
    cdef double kp = sigma_p * ct / (4.0 * F * sphi * cphi)
    cdef double a, g1, g2, g3
    if phi > 0:
        if k <= 2.0 / 3.0:
            a = k / (1.0 + k)
        else:
            g1 = 2.0 * F * k - (10.0 / 9.0 - F)
            g2 = 2.0 * F * k - F * (4.0 / 3.0 - F)
            g3 = 2.0 * F * k - (25.0 / 9.0 - 2.0 * F)
            if g2 <= 0:
                g2 = 1e-30
            if fabs(g3) < 1e-6:
                a = 1.0 - 1.0 / (2.0 * sqrt(g2))
            else:
                a = (g1 - sqrt(g2)) / g3
        return sphi / (1.0 - a) - cphi / x * (1.0 - kp)
    return sphi * (1.0 - k) - cphi / x * (1.0 - kp)


cdef int _brent(double a, double b, double fa, double fb, double x, double sigma_p,
                double theta, double ftip, double fhub, double offset, Polars* P,
                double* root) nogil:
    cdef double c = b, fc = fb, d = b - a, e = b - a
    cdef double tol, m, p, q, r, s, min1, min2
    cdef int it
    for it in range(MAXITER):
        if (fb > 0 and fc > 0) or (fb < 0 and fc < 0):
            c = a
            fc = fa
            d = b - a
            e = d
        if fabs(fc) < fabs(fb):
            a = b
            b = c
            c = a
            fa = fb
            fb = fc
            fc = fa
        tol = 4e-16 * fabs(b) + 1e-300
        m = 0.5 * (c - b)
        if fabs(fb) <= FTOL or fabs(m) <= tol:
            # a bracket collapsed to rounding width holds the root as exactly
            # as doubles allow, even where the residual slope is huge
            root[0] = b
            return 0
        if fabs(e) >= tol and fabs(fa) > fabs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = fabs(p)
            min1 = 3.0 * m * q - fabs(tol * q)
            min2 = fabs(e * q)
            if 2.0 * p < (min1 if min1 < min2 else min2):
                e = d
                d = p / q
            else:
                d = m
                e = d
        else:
            d = m
            e = d
        a = b
        fa = fb
        if fabs(d) > tol:
            b += d
        else:
            b += tol if m > 0 else -tol
        fb = _residual(b, x, sigma_p, theta, ftip, fhub, offset, P)
    root[0] = b
    return 0 if fabs(fb) <= 1e-10 else -1


def solve_phi(x, sigma_p, theta, ftip, fhub, offset, stack):
    """Compiled counterpart of ``_fallback.solve_phi`` (same contract)."""
    arrays = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64)
                                   for v in (x, sigma_p, theta, ftip, fhub, offset)))
    shape = arrays[0].shape
    cdef double[::1] X = np.ascontiguousarray(arrays[0]).ravel()
    cdef double[::1] SP = np.ascontiguousarray(arrays[1]).ravel()
    cdef double[::1] TH = np.ascontiguousarray(arrays[2]).ravel()
    cdef double[::1] FT = np.ascontiguousarray(arrays[3]).ravel()
    cdef double[::1] FH = np.ascontiguousarray(arrays[4]).ravel()
    cdef double[::1] OF = np.ascontiguousarray(arrays[5]).ravel()
    cdef double[::1] pa = np.ascontiguousarray(stack.alpha, dtype=np.float64)
    cdef double[::1] pcl = np.ascontiguousarray(stack.cl, dtype=np.float64)
    cdef double[::1] pcd = np.ascontiguousarray(stack.cd, dtype=np.float64)
    cdef double[::1] pdcl = np.ascontiguousarray(stack.dcl, dtype=np.float64)
    cdef double[::1] pdcd = np.ascontiguousarray(stack.dcd, dtype=np.float64)
    cdef Polars P
    P.alpha = &pa[0]
    P.cl = &pcl[0]
    P.cd = &pcd[0]
    P.dcl = &pdcl[0]
    P.dcd = &pdcd[0]
    P.n = pa.shape[0]

    cdef Py_ssize_t n = X.shape[0], i
    phi_out = np.empty(n)
    status_out = np.empty(n, dtype=np.int64)
    cdef double[::1] PHI = phi_out
    cdef long long[::1] ST = status_out
    cdef double lo[3]
    cdef double hi[3]
    lo[0] = PHI_EPS; hi[0] = M_PI / 2
    lo[1] = -M_PI / 4; hi[1] = -PHI_EPS
    lo[2] = M_PI / 2; hi[2] = M_PI - PHI_EPS
    cdef double fa, fb, root
    cdef int b, rc
    with nogil:
        for i in range(n):
            if X[i] <= 0:
                PHI[i] = M_PI / 2
                ST[i] = 3
                continue
            ST[i] = -1
            PHI[i] = M_PI / 2
            for b in range(3):
                fa = _residual(lo[b], X[i], SP[i], TH[i], FT[i], FH[i], OF[i], &P)
                fb = _residual(hi[b], X[i], SP[i], TH[i], FT[i], FH[i], OF[i], &P)
                if not (isfinite(fa) and isfinite(fb)) or fa * fb > 0:
                    continue
                if fa == 0:
                    PHI[i] = lo[b]; ST[i] = b
                elif fb == 0:
                    PHI[i] = hi[b]; ST[i] = b
                else:
                    rc = _brent(lo[b], hi[b], fa, fb, X[i], SP[i], TH[i], FT[i], FH[i], OF[i], &P, &root)
                    PHI[i] = root
                    ST[i] = b if rc == 0 else -1
                break
    return phi_out.reshape(shape), status_out.reshape(shape)
