# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics mirror ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp

cnp.import_array()


def mixture_plogp(const double[::1] wu, const double[::1] wv,
                  const double[::1] fu1, const double[::1] fv1,
                  const double[::1] fu2, const double[::1] fv2,
                  double c1, double c2):
    cdef Py_ssize_t i, j, nu = wu.shape[0], nv = wv.shape[0]
    cdef double a1, a2, p, mass = 0.0, plogp = 0.0, rm, rp
    with nogil:
        for i in range(nu):
            a1 = c1 * fu1[i]
            a2 = c2 * fu2[i]
            rm = 0.0
            rp = 0.0
            for j in range(nv):
                p = a1 * fv1[j] + a2 * fv2[j]
                if p > 0.0:
                    rm = rm + wv[j] * p
                    rp = rp + wv[j] * p * log(p)
            mass = mass + wu[i] * rm
            plogp = plogp + wu[i] * rp
    return mass, plogp


cdef inline bint _earlier(long dy, long dx) nogil:
    return dy < 0 or (dy == 0 and dx < 0)


def find_peaks(const double[:, ::1] signal, double threshold, double radius):
    cdef Py_ssize_t h = signal.shape[0], w = signal.shape[1]
    cdef long r = <long>radius
    cdef long y, x, dy, dx, qy, qx
    cdef double pv, qv, r2 = radius * radius
    cdef bint keep
    ys = []
    xs = []
    for y in range(h):
        for x in range(w):
            pv = signal[y, x]
            if not pv > threshold:
                continue
            keep = True
            for dy in range(-r, r + 1):
                if not keep:
                    break
                qy = y + dy
                if qy < 0 or qy >= h:
                    continue
                for dx in range(-r, r + 1):
                    if dx * dx + dy * dy > r2 or (dx == 0 and dy == 0):
                        continue
                    qx = x + dx
                    if qx < 0 or qx >= w:
                        continue
                    qv = signal[qy, qx]
                    if qv > pv or (qv == pv and _earlier(dy, dx)):
                        keep = False
                        break
            if keep:
                ys.append(y)
                xs.append(x)
    return np.array(ys, dtype=np.int64), np.array(xs, dtype=np.int64)


cdef bint _solve6(double[:, ::1] a, double[::1] b, double[::1] out) nogil:
    cdef int n = 6, i, j, k, piv
    cdef double m, t, big
    for k in range(n):
        piv = k
        big = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                piv = i
        if big == 0.0:
            return False
        if piv != k:
            for j in range(n):
                t = a[k, j]
                a[k, j] = a[piv, j]
                a[piv, j] = t
            t = b[k]
            b[k] = b[piv]
            b[piv] = t
        for i in range(k + 1, n):
            m = a[i, k] / a[k, k]
            for j in range(k, n):
                a[i, j] = a[i, j] - m * a[k, j]
            b[i] = b[i] - m * b[k]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, n):
            t = t - a[i, j] * out[j]
        out[i] = t / a[i, i]
    return True


def fit_peaks(const double[:, ::1] signal, const cnp.uint16_t[:, ::1] raw,
              const long[::1] ys, const long[::1] xs, double radius, double saturation):
    cdef Py_ssize_t h = signal.shape[0], w = signal.shape[1]
    cdef Py_ssize_t n = ys.shape[0], k
    cdef long r = <long>radius
    cdef long py, px, dy, dx, qy, qx
    cdef int i, j, used
    cdef double s, z, wt, r2 = radius * radius
    cdef double hxx, hyy, hxy, det, cx, cy, logamp, wsum, sx, sy
    cdef double basis[6]
    cdef bint ok
    normal_np = np.zeros((6, 6))
    rhs_np = np.zeros(6)
    coef_np = np.zeros(6)
    cdef double[:, ::1] normal = normal_np
    cdef double[::1] rhs = rhs_np
    cdef double[::1] c = coef_np
    out_x = np.empty(n)
    out_y = np.empty(n)
    out_a = np.empty(n)
    out_s = np.zeros(n, dtype=bool)
    cdef double[::1] ox = out_x, oy = out_y, oa = out_a
    cdef cnp.npy_bool[::1] osat = out_s
    for k in range(n):
        py = ys[k]
        px = xs[k]
        for i in range(6):
            rhs[i] = 0.0
            for j in range(6):
                normal[i, j] = 0.0
        used = 0
        wsum = 0.0
        sx = 0.0
        sy = 0.0
        for dy in range(-r, r + 1):
            qy = py + dy
            if qy < 0 or qy >= h:
                continue
            for dx in range(-r, r + 1):
                if dx * dx + dy * dy > r2:
                    continue
                qx = px + dx
                if qx < 0 or qx >= w:
                    continue
                s = signal[qy, qx]
                if s > 0.0:
                    wsum += s
                    sx += s * dx
                    sy += s * dy
                if raw[qy, qx] >= saturation:
                    osat[k] = True
                    continue
                if s < 1.0:
                    continue
                used += 1
                z = log(s)
                wt = s * s
                basis[0] = 1.0
                basis[1] = dx
                basis[2] = dy
                basis[3] = dx * dx
                basis[4] = dy * dy
                basis[5] = dx * dy
                for i in range(6):
                    rhs[i] += wt * basis[i] * z
                    for j in range(6):
                        normal[i, j] += wt * basis[i] * basis[j]
        ok = used >= 6 and _solve6(normal, rhs, c)
        if ok:
            hxx = 2.0 * c[3]
            hyy = 2.0 * c[4]
            hxy = c[5]
            det = hxx * hyy - hxy * hxy
            ok = hxx < 0.0 and det > 0.0
        if ok:
            cx = (-c[1] * hyy + c[2] * hxy) / det
            cy = (-c[2] * hxx + c[1] * hxy) / det
            ok = cx * cx + cy * cy <= r2
        if ok:
            logamp = (c[0] + c[1] * cx + c[2] * cy + c[3] * cx * cx
                      + c[4] * cy * cy + c[5] * cx * cy)
            ox[k] = px + cx
            oy[k] = py + cy
            oa[k] = exp(logamp)
        else:
            ox[k] = px + sx / wsum
            oy[k] = py + sy / wsum
            oa[k] = signal[py, px]
    return out_x, out_y, out_a, out_s
