"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
``cpm_auth._backend`` picks one of the two at import time.
"""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"

PCC_COMPLEX = 0
PCC_MAGNITUDE = 1

_SERIES_LIMIT = 8.0


def _j0_series(x):
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= -q / (k * k)
        total += term
        if abs(term) < 1e-17 * max(1.0, abs(total)):
            return total


def _j0_miller(x):
    # Backward recurrence normalised by J0 + 2*sum(J_2k) = 1.
    start = int(x + 12.0 * x ** (1.0 / 3.0) + 30.0)
    start += start % 2
    j_next = 0.0
    j_cur = 1e-30
    norm = 0.0
    for n in range(start, 0, -1):
        j_prev = (2.0 * n / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * j_cur
        if abs(j_cur) > 1e250:
            j_cur *= 1e-250
            j_next *= 1e-250
            norm *= 1e-250
    norm += j_cur
    return j_cur / norm


def j0_scalar(x):
    x = abs(float(x))
    if x == 0.0:
        return 1.0
    if x <= _SERIES_LIMIT:
        return _j0_series(x)
    return _j0_miller(x)


def j0_array(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape, dtype=np.float64)
    flat_in = x.ravel()
    flat_out = out.ravel()
    for i, xi in enumerate(flat_in):
        flat_out[i] = j0_scalar(xi)
    return out


def sc_metric(rx, half):
    """Schmidl-Cox metric for every window start of a 1-D or 2-D buffer.

    Energy normalisation uses half the energy of the full 2*half window, which
    bounds the metric to [0, 1].
    """
    rx = np.asarray(rx, dtype=np.complex128)
    win = 2 * half
    if rx.shape[-1] < win:
        raise ValueError(f"need at least {win} samples, got {rx.shape[-1]}")
    frames = sliding_window_view(rx, win, axis=-1)
    a = frames[..., :half]
    b = frames[..., half:]
    p = np.sum(a.conj() * b, axis=-1)
    energy = 0.5 * np.sum(frames.real ** 2 + frames.imag ** 2, axis=-1)
    num = p.real ** 2 + p.imag ** 2
    den = energy * energy
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def gauss_markov(h0, rho, innovations):
    """Run ``h[k] = rho*h[k-1] + sqrt(1-rho^2)*w[k]`` from ``h0``.

    ``innovations`` already carries the per-tap standard deviation.
    """
    h = np.array(h0, dtype=np.complex128)
    w = np.asarray(innovations, dtype=np.complex128)
    scale = math.sqrt(max(0.0, 1.0 - rho * rho))
    out = np.empty(w.shape, dtype=np.complex128)
    for k in range(w.shape[0]):
        h = rho * h + scale * w[k]
        out[k] = h
    return out


def convolve_rows(frames, taps):
    """Row-wise linear convolution of (K, n) frames with (K, P) taps."""
    frames = np.asarray(frames, dtype=np.complex128)
    taps = np.asarray(taps, dtype=np.complex128)
    count, n = frames.shape
    num_taps = taps.shape[1]
    out = np.zeros((count, n + num_taps - 1), dtype=np.complex128)
    for p in range(num_taps):
        out[:, p:p + n] += taps[:, p:p + 1] * frames
    return out


def _pcc(x, y, mode):
    if mode == PCC_MAGNITUDE:
        u = np.abs(x)
        v = np.abs(y)
    else:
        u = np.concatenate((x.real, x.imag))
        v = np.concatenate((y.real, y.imag))
    u = u - u.mean()
    v = v - v.mean()
    su = np.dot(u, u)
    sv = np.dot(v, v)
    if su <= 0.0 or sv <= 0.0:
        return math.nan
    r = np.dot(u, v) / math.sqrt(su * sv)
    return min(1.0, max(-1.0, r))


def cpm_trace(snaps, valid, ref, e_th, update_always, pcc_mode):
    """Sequential accept/drop loop over a stack of channel snapshots.

    Returns (errors, pccs, accepted, final_reference). Invalid rows (failed
    sync) are dropped without touching the reference and get NaN metrics.
    """
    snaps = np.asarray(snaps, dtype=np.complex128)
    valid = np.asarray(valid, dtype=bool)
    ref = np.array(ref, dtype=np.complex128)
    count, width = snaps.shape
    errors = np.full(count, np.nan)
    pccs = np.full(count, np.nan)
    accepted = np.zeros(count, dtype=bool)
    for k in range(count):
        if not valid[k]:
            continue
        d = snaps[k] - ref
        e = float(np.sum(d.real * d.real + d.imag * d.imag)) / width
        errors[k] = e
        pccs[k] = _pcc(snaps[k], ref, pcc_mode)
        ok = e < e_th
        accepted[k] = ok
        if ok or update_always:
            ref = snaps[k].copy()
    return errors, pccs, accepted, ref
