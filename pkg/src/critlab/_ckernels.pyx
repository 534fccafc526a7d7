# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: multilinear interpolation, batched Newton
inversion of ``x + u(x)``, and the lattice-ball maximal function.

Lattice dimension is limited to 3 (the box is at most 3-dimensional).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, fabs

cnp.import_array()

BACKEND = "cython"

DEF MAXD = 3
DEF MAXC = 9
DEF EDGE_TOL = 1e-12


cdef inline bint _eval(const double[:, ::1] vals, const long* shape,
                       const long* strides, const double* lo, const double* h,
                       int D, int C, const double* p, double* out) nogil:
    """Interpolate all C channels at one point; returns False outside."""
    cdef long base[MAXD]
    cdef double frac[MAXD]
    cdef double s, w
    cdef int a, c, corner, ncorner
    cdef long flat
    for a in range(D):
        s = (p[a] - lo[a]) / h[a]
        if s < -EDGE_TOL or s > (shape[a] - 1) + EDGE_TOL:
            for c in range(C):
                out[c] = 0.0
            return False
        base[a] = <long>floor(s)
        if base[a] < 0:
            base[a] = 0
        if base[a] > shape[a] - 2:
            base[a] = shape[a] - 2
        frac[a] = s - base[a]
    for c in range(C):
        out[c] = 0.0
    ncorner = 1 << D
    for corner in range(ncorner):
        w = 1.0
        flat = 0
        for a in range(D):
            if (corner >> a) & 1:
                w *= frac[a]
                flat += (base[a] + 1) * strides[a]
            else:
                w *= 1.0 - frac[a]
                flat += base[a] * strides[a]
        if w != 0.0:
            for c in range(C):
                out[c] += w * vals[flat, c]
    return True


cdef void _setup(tuple shape_t, long* shape, long* strides, int D):
    cdef int a
    for a in range(D):
        shape[a] = shape_t[a]
    strides[D - 1] = 1
    for a in range(D - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]


def interp(values, lo, h, pts):
    values = np.ascontiguousarray(values, dtype=np.float64)
    cdef int D = values.ndim - 1
    cdef int C = values.shape[values.ndim - 1]
    if D > MAXD or C > MAXC:
        raise ValueError("lattice dimension or channel count too large")
    cdef long shape[MAXD]
    cdef long strides[MAXD]
    _setup(values.shape[:D], shape, strides, D)
    cdef const double[:, ::1] vals = values.reshape(-1, C)
    cdef const double[::1] lo_v = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] h_v = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t M = P.shape[0], i
    out_arr = np.zeros((M, C))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(M):
            _eval(vals, shape, strides, &lo_v[0], &h_v[0], D, C, &P[i, 0], &out[i, 0])
    return out_arr


cdef bint _solve(double* A, double* b, int d) nogil:
    """In-place Gaussian elimination with partial pivoting (d <= 3)."""
    cdef int i, j, k, piv
    cdef double m, t
    for k in range(d):
        piv = k
        for i in range(k + 1, d):
            if fabs(A[i * d + k]) > fabs(A[piv * d + k]):
                piv = i
        if A[piv * d + k] == 0.0:
            return False
        if piv != k:
            for j in range(d):
                t = A[k * d + j]; A[k * d + j] = A[piv * d + j]; A[piv * d + j] = t
            t = b[k]; b[k] = b[piv]; b[piv] = t
        for i in range(k + 1, d):
            m = A[i * d + k] / A[k * d + k]
            for j in range(k, d):
                A[i * d + j] -= m * A[k * d + j]
            b[i] -= m * b[k]
    for i in range(d - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, d):
            t -= A[i * d + j] * b[j]
        b[i] = t / A[i * d + i]
    return True


def newton_invert(u, jac, lo, h, y, double tol, int maxit):
    u = np.ascontiguousarray(u, dtype=np.float64)
    jac = np.ascontiguousarray(jac, dtype=np.float64)
    cdef int d = u.shape[u.ndim - 1]
    cdef int D = u.ndim - 1
    if D > MAXD or d > MAXD or D != d:
        raise ValueError("newton_invert needs matching lattice/field dimension <= 3")
    cdef long shape[MAXD]
    cdef long strides[MAXD]
    _setup(u.shape[:D], shape, strides, D)
    cdef const double[:, ::1] uv = u.reshape(-1, d)
    cdef const double[:, ::1] jv = jac.reshape(-1, d * d)
    cdef const double[::1] lo_v = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] h_v = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t M = Y.shape[0], i
    x_arr = np.array(Y, copy=True)
    it_arr = np.zeros(M, dtype=np.int64)
    ok_arr = np.zeros(M, dtype=np.uint8)
    cdef double[:, ::1] X = x_arr
    cdef long long[::1] IT = it_arr
    cdef unsigned char[::1] OK = ok_arr
    cdef double uu[MAXD]
    cdef double r[MAXD]
    cdef double A[MAXC]
    cdef double nrm
    cdef int a, b, k
    with nogil:
        for i in range(M):
            for k in range(maxit + 1):
                _eval(uv, shape, strides, &lo_v[0], &h_v[0], D, d, &X[i, 0], uu)
                nrm = 0.0
                for a in range(d):
                    r[a] = X[i, a] + uu[a] - Y[i, a]
                    nrm += r[a] * r[a]
                if sqrt(nrm) < tol:
                    OK[i] = 1
                    break
                if k == maxit:
                    break
                _eval(jv, shape, strides, &lo_v[0], &h_v[0], D, d * d, &X[i, 0], A)
                for a in range(d):
                    A[a * d + a] += 1.0
                if not _solve(A, r, d):
                    break
                for a in range(d):
                    X[i, a] -= r[a]
                IT[i] += 1
    return x_arr, it_arr, ok_arr.astype(bool)


def maximal(absf, int kmax):
    from critlab._pykernels import ball_offsets
    absf = np.ascontiguousarray(absf, dtype=np.float64)
    cdef int D = absf.ndim
    if D > MAXD:
        raise ValueError("lattice dimension too large")
    cdef long shape[MAXD]
    cdef long strides[MAXD]
    _setup(absf.shape, shape, strides, D)
    offs_arr, ends_arr = ball_offsets(D, kmax)
    cdef const long long[:, ::1] offs = offs_arr
    cdef const long long[::1] ends = ends_arr
    cdef const double[::1] f = absf.reshape(-1)
    out_arr = np.empty(absf.size)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t N = absf.size, node, p, P = offs.shape[0]
    cdef long idx[MAXD]
    cdef long rem, nb, q
    cdef int a, k
    cdef double ssum, best, avg
    cdef long cnt
    cdef bint ok
    with nogil:
        for node in range(N):
            rem = node
            for a in range(D):
                idx[a] = rem // strides[a]
                rem = rem % strides[a]
            ssum = 0.0
            cnt = 0
            best = f[node]
            k = 0
            for p in range(P):
                ok = True
                nb = 0
                for a in range(D):
                    q = idx[a] + offs[p, a]
                    if q < 0 or q >= shape[a]:
                        ok = False
                        break
                    nb += q * strides[a]
                if ok:
                    ssum += f[nb]
                    cnt += 1
                while k <= kmax and ends[k] == p + 1:
                    avg = ssum / cnt
                    if avg > best:
                        best = avg
                    k += 1
            out[node] = best
    return out_arr.reshape(absf.shape)
