# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: tree aggregation and the Bellman table sweep.

Contracts match dyadtest._kernels_py (the numpy fallback).
"""

import numpy as np
from libc.math cimport pow, INFINITY


def cube_sums(double[:, ::1] leaf_vals, int branching, int depth, long[::1] offsets):
    cdef Py_ssize_t d = leaf_vals.shape[1]
    cdef Py_ssize_t n_cubes = offsets[depth + 1]
    out_arr = np.zeros((n_cubes, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t lo = offsets[depth]
    cdef Py_ssize_t i, j, level, c, child0
    for i in range(leaf_vals.shape[0]):
        for j in range(d):
            out[lo + i, j] = leaf_vals[i, j]
    for level in range(depth - 1, -1, -1):
        lo = offsets[level]
        child0 = offsets[level + 1]
        for i in range(offsets[level + 1] - offsets[level]):
            for c in range(branching):
                for j in range(d):
                    out[lo + i, j] += out[child0 + i * branching + c, j]
    return out_arr


def scatter_ancestor_sums(double[:, ::1] cube_vals, long[:, ::1] anc):
    cdef Py_ssize_t n_leaves = anc.shape[0]
    cdef Py_ssize_t n_lev = anc.shape[1]
    cdef Py_ssize_t d = cube_vals.shape[1]
    out_arr = np.zeros((n_leaves, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t x, l, j, q
    for x in range(n_leaves):
        for l in range(n_lev):
            q = anc[x, l]
            for j in range(d):
                out[x, j] += cube_vals[q, j]
    return out_arr


def max_over_ancestors(double[:, ::1] cube_vals, unsigned char[::1] eligible, long[:, ::1] anc):
    cdef Py_ssize_t n_leaves = anc.shape[0]
    cdef Py_ssize_t n_lev = anc.shape[1]
    cdef Py_ssize_t d = cube_vals.shape[1]
    out_arr = np.zeros((n_leaves, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t x, l, j, q
    cdef double v
    cdef bint any_ok
    for x in range(n_leaves):
        for j in range(d):
            v = -INFINITY
            any_ok = False
            for l in range(n_lev):
                q = anc[x, l]
                if eligible[q]:
                    any_ok = True
                    if cube_vals[q, j] > v:
                        v = cube_vals[q, j]
            out[x, j] = v if any_ok else 0.0
    return out_arr


cdef inline Py_ssize_t _bracket(double[::1] axis, Py_ssize_t n, double x) nogil:
    """Index i with axis[i] <= x < axis[i+1] (clamped to [0, n-2])."""
    cdef Py_ssize_t lo = 0, hi = n - 1, mid
    if x <= axis[0]:
        return 0
    if x >= axis[n - 1]:
        return n - 2
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if axis[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


cdef inline double _interp2(double[:, :, ::1] prev, Py_ssize_t k,
                            double[::1] fax, double[::1] Fax,
                            Py_ssize_t nf, Py_ssize_t nF, double x, double y) nogil:
    cdef Py_ssize_t i, j
    cdef double tx, ty
    if x < fax[0]:
        x = fax[0]
    elif x > fax[nf - 1]:
        x = fax[nf - 1]
    if y < Fax[0]:
        y = Fax[0]
    elif y > Fax[nF - 1]:
        y = Fax[nF - 1]
    i = _bracket(fax, nf, x)
    j = _bracket(Fax, nF, y)
    tx = (x - fax[i]) / (fax[i + 1] - fax[i])
    ty = (y - Fax[j]) / (Fax[j + 1] - Fax[j])
    return (prev[i, j, k] * (1 - tx) * (1 - ty) + prev[i + 1, j, k] * tx * (1 - ty)
            + prev[i, j + 1, k] * (1 - tx) * ty + prev[i + 1, j + 1, k] * tx * ty)


cdef inline Py_ssize_t _bisect_left(double[::1] axis, Py_ssize_t n, double x) nogil:
    """First index with axis[idx] >= x (n when none)."""
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if axis[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline double _pair_value(double[:, :, ::1] prev, Py_ssize_t k,
                               double[::1] fax, double[::1] Fax,
                               Py_ssize_t nf, Py_ssize_t nF,
                               double fm, double Fm, double fp, double Fp) nogil:
    return 0.5 * (_interp2(prev, k, fax, Fax, nf, nF, fm, Fm)
                  + _interp2(prev, k, fax, Fax, nf, nF, fp, Fp))


cdef inline double _eval_split(double[:, :, ::1] prev, Py_ssize_t k,
                               double[::1] fax, double[::1] Fax,
                               Py_ssize_t nf, Py_ssize_t nF,
                               double f, double F, double F_max,
                               double fm, double p, int n_split,
                               double best) nogil:
    """Best value over the F-split candidates for a fixed mean split fm."""
    cdef double fp = 2.0 * f - fm
    cdef double wlo = 2.0 * F - F_max
    cdef double fmp = pow(fm, p)
    cdef double whi = 2.0 * F - pow(fp, p)
    cdef double Fm, val
    cdef Py_ssize_t c0, c1, s, count, stride
    if fmp > wlo:
        wlo = fmp
    if whi > F_max:
        whi = F_max
    if whi < wlo:
        return best
    # candidates: the window edges plus the axis nodes inside, stride-limited
    val = _pair_value(prev, k, fax, Fax, nf, nF, fm, wlo, fp, 2.0 * F - wlo)
    if val > best:
        best = val
    val = _pair_value(prev, k, fax, Fax, nf, nF, fm, whi, fp, 2.0 * F - whi)
    if val > best:
        best = val
    c0 = _bisect_left(Fax, nF, wlo)
    c1 = _bisect_left(Fax, nF, whi)
    if c1 >= nF or (c1 >= 0 and Fax[c1] > whi):
        c1 -= 1
    count = c1 - c0 + 1
    if count <= 0:
        return best
    stride = 1
    if count > n_split:
        stride = (count + n_split - 1) / n_split
    s = 0
    while s < count:
        Fm = Fax[c0 + s]
        val = _pair_value(prev, k, fax, Fax, nf, nF, fm, Fm, fp, 2.0 * F - Fm)
        if val > best:
            best = val
        s += stride
    return best


def bellman_sweep(double[:, :, ::1] prev, double[::1] f_axis, double[::1] F_axis,
                  double p, int n_split):
    cdef Py_ssize_t nf = f_axis.shape[0]
    cdef Py_ssize_t nF = F_axis.shape[0]
    cdef double f_max = f_axis[nf - 1]
    cdef double F_max = F_axis[nF - 1]
    out_arr = np.zeros((nf, nF, nf), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t k, i, j, s, c0, count, stride
    cdef double f, F, lo, fm, best
    with nogil:
        for k in range(nf):
            for i in range(k + 1):
                f = f_axis[i]
                lo = 2.0 * f - f_max
                if lo < 0.0:
                    lo = 0.0
                c0 = _bisect_left(f_axis, nf, lo)
                count = i - c0 + 1
                stride = 1
                if count > n_split:
                    stride = (count + n_split - 1) / n_split
                for j in range(i, nF):
                    F = F_axis[j]
                    best = prev[i, j, k]  # exact trivial split
                    best = _eval_split(prev, k, f_axis, F_axis, nf, nF,
                                       f, F, F_max, lo, p, n_split, best)
                    best = _eval_split(prev, k, f_axis, F_axis, nf, nF,
                                       f, F, F_max, f, p, n_split, best)
                    s = 0
                    while s < count:
                        fm = f_axis[c0 + s]
                        best = _eval_split(prev, k, f_axis, F_axis, nf, nF,
                                           f, F, F_max, fm, p, n_split, best)
                        s += stride
                    out[i, j, k] = best
    return out_arr
