# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, NAN

cnp.import_array()

NAME = "cython"

PCC_COMPLEX = 0
PCC_MAGNITUDE = 1

cdef int _MAGNITUDE = 1

cdef double _SERIES_LIMIT = 8.0


cdef double _j0_series(double x) noexcept nogil:
    cdef double q = 0.25 * x * x
    cdef double term = 1.0
    cdef double total = 1.0
    cdef int k = 0
    while True:
        k += 1
        term *= -q / (<double>k * k)
        total += term
        if fabs(term) < 1e-17 * (fabs(total) if fabs(total) > 1.0 else 1.0):
            return total


cdef double _j0_miller(double x) noexcept nogil:
    cdef int start = <int>(x + 12.0 * pow(x, 1.0 / 3.0) + 30.0)
    cdef int n
    cdef double j_next = 0.0
    cdef double j_cur = 1e-30
    cdef double j_prev
    cdef double norm = 0.0
    start += start % 2
    n = start
    while n > 0:
        j_prev = (2.0 * n / x) * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * j_cur
        if fabs(j_cur) > 1e250:
            j_cur *= 1e-250
            j_next *= 1e-250
            norm *= 1e-250
        n -= 1
    norm += j_cur
    return j_cur / norm


cdef double _j0(double x) noexcept nogil:
    x = fabs(x)
    if x == 0.0:
        return 1.0
    if x <= _SERIES_LIMIT:
        return _j0_series(x)
    return _j0_miller(x)


def j0_scalar(double x):
    return _j0(x)


def j0_array(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i
    with nogil:
        for i in range(src.shape[0]):
            dst[i] = _j0(src[i])
    return out


cdef void _sc_row(const double complex[::1] r, double[::1] out, Py_ssize_t half) noexcept nogil:
    cdef Py_ssize_t d, m
    cdef Py_ssize_t ndel = out.shape[0]
    cdef double pr, pi, energy, ar, ai, br, bi, den
    for d in range(ndel):
        pr = 0.0
        pi = 0.0
        energy = 0.0
        for m in range(half):
            ar = r[d + m].real
            ai = r[d + m].imag
            br = r[d + m + half].real
            bi = r[d + m + half].imag
            # conj(a) * b
            pr += ar * br + ai * bi
            pi += ar * bi - ai * br
            energy += ar * ar + ai * ai + br * br + bi * bi
        energy *= 0.5
        den = energy * energy
        if den > 0.0:
            out[d] = (pr * pr + pi * pi) / den
        else:
            out[d] = 0.0


def sc_metric(rx, Py_ssize_t half):
    arr = np.ascontiguousarray(rx, dtype=np.complex128)
    cdef Py_ssize_t win = 2 * half
    if arr.shape[arr.ndim - 1] < win:
        raise ValueError(f"need at least {win} samples, got {arr.shape[arr.ndim - 1]}")
    squeeze = arr.ndim == 1
    rows = arr.reshape(-1, arr.shape[arr.ndim - 1])
    cdef Py_ssize_t nrows = rows.shape[0]
    cdef Py_ssize_t ndel = rows.shape[1] - win + 1
    out = np.empty((nrows, ndel), dtype=np.float64)
    cdef const double complex[:, ::1] rv = rows
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(nrows):
            _sc_row(rv[i], ov[i], half)
    if squeeze:
        return out[0]
    return out.reshape(arr.shape[:arr.ndim - 1] + (ndel,))


def gauss_markov(h0, double rho, innovations):
    w_arr = np.ascontiguousarray(innovations, dtype=np.complex128)
    h_arr = np.array(h0, dtype=np.complex128)
    cdef double scale = sqrt(max(0.0, 1.0 - rho * rho))
    out = np.empty_like(w_arr)
    cdef const double complex[:, ::1] w = w_arr
    cdef double complex[::1] h = h_arr
    cdef double complex[:, ::1] o = out
    cdef Py_ssize_t k, p
    with nogil:
        for k in range(w.shape[0]):
            for p in range(w.shape[1]):
                h[p] = rho * h[p] + scale * w[k, p]
                o[k, p] = h[p]
    return out


def convolve_rows(frames, taps):
    f_arr = np.ascontiguousarray(frames, dtype=np.complex128)
    t_arr = np.ascontiguousarray(taps, dtype=np.complex128)
    cdef Py_ssize_t count = f_arr.shape[0]
    cdef Py_ssize_t n = f_arr.shape[1]
    cdef Py_ssize_t num_taps = t_arr.shape[1]
    out = np.zeros((count, n + num_taps - 1), dtype=np.complex128)
    cdef const double complex[:, ::1] f = f_arr
    cdef const double complex[:, ::1] t = t_arr
    cdef double complex[:, ::1] o = out
    cdef Py_ssize_t k, p, i
    cdef double complex h
    with nogil:
        for k in range(count):
            for p in range(num_taps):
                h = t[k, p]
                for i in range(n):
                    o[k, i + p] = o[k, i + p] + h * f[k, i]
    return out


cdef double _pcc(const double complex[::1] x, const double complex[::1] y,
                 int mode) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double mu = 0.0, mv = 0.0, su = 0.0, sv = 0.0, suv = 0.0
    cdef double u, v, r, count
    if mode == _MAGNITUDE:
        count = n
        for i in range(n):
            mu += sqrt(x[i].real * x[i].real + x[i].imag * x[i].imag)
            mv += sqrt(y[i].real * y[i].real + y[i].imag * y[i].imag)
        mu /= count
        mv /= count
        for i in range(n):
            u = sqrt(x[i].real * x[i].real + x[i].imag * x[i].imag) - mu
            v = sqrt(y[i].real * y[i].real + y[i].imag * y[i].imag) - mv
            su += u * u
            sv += v * v
            suv += u * v
    else:
        count = 2 * n
        for i in range(n):
            mu += x[i].real + x[i].imag
            mv += y[i].real + y[i].imag
        mu /= count
        mv /= count
        for i in range(n):
            u = x[i].real - mu
            v = y[i].real - mv
            su += u * u
            sv += v * v
            suv += u * v
            u = x[i].imag - mu
            v = y[i].imag - mv
            su += u * u
            sv += v * v
            suv += u * v
    if su <= 0.0 or sv <= 0.0:
        return NAN
    r = suv / sqrt(su * sv)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def cpm_trace(snaps, valid, ref, double e_th, bint update_always, int pcc_mode):
    s_arr = np.ascontiguousarray(snaps, dtype=np.complex128)
    v_arr = np.ascontiguousarray(valid, dtype=np.uint8)
    r_arr = np.array(ref, dtype=np.complex128)
    cdef Py_ssize_t count = s_arr.shape[0]
    cdef Py_ssize_t width = s_arr.shape[1]
    errors = np.full(count, np.nan)
    pccs = np.full(count, np.nan)
    accepted = np.zeros(count, dtype=np.uint8)
    cdef const double complex[:, ::1] s = s_arr
    cdef const unsigned char[::1] ok_in = v_arr
    cdef double complex[::1] r = r_arr
    cdef double[::1] ev = errors
    cdef double[::1] pv = pccs
    cdef unsigned char[::1] av = accepted
    cdef Py_ssize_t k, j
    cdef double e, dr, di
    with nogil:
        for k in range(count):
            if not ok_in[k]:
                continue
            e = 0.0
            for j in range(width):
                dr = s[k, j].real - r[j].real
                di = s[k, j].imag - r[j].imag
                e += dr * dr + di * di
            e /= width
            ev[k] = e
            pv[k] = _pcc(s[k], r, pcc_mode)
            if e < e_th:
                av[k] = 1
            if av[k] or update_always:
                for j in range(width):
                    r[j] = s[k, j]
    return errors, pccs, accepted.astype(bool), r_arr
