"""OFDM framing, Schmidl-Cox synchronisation and per-packet channel estimation.

A frame is one Schmidl-Cox training symbol followed by QPSK data symbols,
each carrying a cyclic prefix. The training symbol only sounds the even bins,
so its time-domain body has two identical halves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._backend import kernels


class SyncError(RuntimeError):
    """No usable preamble was found in the received samples."""


@dataclass(frozen=True)
class OfdmNumerology:
    fft_size: int = 64
    data_subcarriers: int = 48
    cp_len: int = 16
    sample_rate: float = 3.125e6
    data_syms_per_preamble: int = 4
    carrier_freq: float = 2.45e9

    def __post_init__(self):
        if self.fft_size < 4 or self.fft_size % 2:
            raise ValueError(f"fft_size must be an even integer >= 4, got {self.fft_size}")
        if not 0 <= self.cp_len < self.fft_size:
            raise ValueError(f"cp_len must satisfy 0 <= cp_len < fft_size, got {self.cp_len}")
        if not 1 <= self.data_subcarriers < self.fft_size:
            raise ValueError(
                f"data_subcarriers must lie in [1, fft_size), got {self.data_subcarriers}")
        if self.data_syms_per_preamble < 0:
            raise ValueError("data_syms_per_preamble must be >= 0")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if not self.carrier_freq > 0:
            raise ValueError(f"carrier_freq must be > 0, got {self.carrier_freq}")

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def frame_len(self) -> int:
        return (1 + self.data_syms_per_preamble) * self.symbol_len

    @property
    def frame_duration(self) -> Fraction:
        """Exact frame duration in seconds."""
        return Fraction(self.frame_len) / Fraction(self.sample_rate)

    @property
    def subcarrier_spacing(self) -> float:
        return self.sample_rate / self.fft_size

    @property
    def bits_per_frame(self) -> int:
        return 2 * self.data_subcarriers * self.data_syms_per_preamble

    @property
    def data_bins(self) -> np.ndarray:
        return data_subcarrier_map(self.fft_size, self.data_subcarriers)


def data_subcarrier_map(fft_size: int, count: int) -> np.ndarray:
    """FFT bin indices carrying data.

    For the 64/48 layout this is the 802.11a allocation (bins +-1..+-26 minus
    the pilot positions +-7, +-21). Other sizes take the ``count`` bins closest
    to DC, DC excluded.
    """
    if fft_size == 64 and count == 48:
        signed = [k for k in range(-26, 27) if k != 0 and abs(k) not in (7, 21)]
    else:
        signed = []
        k = 1
        while len(signed) < count:
            signed.append(k)
            if len(signed) < count:
                signed.append(-k)
            k += 1
        signed.sort()
    return np.array(signed, dtype=np.int64) % fft_size


def qpsk_map(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int8).reshape(*np.shape(bits)[:-1], -1, 2)
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / math.sqrt(2)


def qpsk_demap(symbols) -> np.ndarray:
    symbols = np.asarray(symbols)
    bits = np.stack((symbols.real < 0, symbols.imag < 0), axis=-1)
    return bits.reshape(*symbols.shape[:-1], -1).astype(np.uint8)


def add_cp(symbols: np.ndarray, cp_len: int) -> np.ndarray:
    if cp_len == 0:
        return symbols.copy()
    return np.concatenate((symbols[..., -cp_len:], symbols), axis=-1)


def sc_preamble_bins(numerology: OfdmNumerology, pn_seed: int) -> np.ndarray:
    """Frequency-domain training symbol: sqrt(2)-scaled QPSK on even bins."""
    rng = np.random.default_rng(pn_seed)
    half = numerology.fft_size // 2
    bits = rng.integers(0, 2, size=2 * half)
    bins = np.zeros(numerology.fft_size, dtype=np.complex128)
    bins[0::2] = math.sqrt(2) * qpsk_map(bits)
    return bins


def gen_sc_preamble(numerology: OfdmNumerology, pn_seed: int) -> np.ndarray:
    """Time-domain training symbol with cyclic prefix (unit mean power body)."""
    body = np.fft.ifft(sc_preamble_bins(numerology, pn_seed), norm="ortho")
    return add_cp(body, numerology.cp_len)


@dataclass(frozen=True)
class OfdmFrame:
    preamble: np.ndarray
    data_symbols: np.ndarray
    subcarrier_map: np.ndarray
    payload_bits: np.ndarray

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate((self.preamble, self.data_symbols.reshape(-1)))


def _pad_bits(numerology: OfdmNumerology, payload_bits) -> np.ndarray:
    bits = np.asarray(payload_bits, dtype=np.uint8)
    capacity = numerology.bits_per_frame
    if bits.shape[-1] > capacity:
        raise ValueError(f"payload of {bits.shape[-1]} bits exceeds frame capacity {capacity}")
    if np.any(bits > 1):
        raise ValueError("payload bits must be 0 or 1")
    pad = [(0, 0)] * (bits.ndim - 1) + [(0, capacity - bits.shape[-1])]
    return np.pad(bits, pad)


def modulate_data(numerology: OfdmNumerology, payload_bits) -> np.ndarray:
    """QPSK data symbols with CP, shape (..., n_syms, symbol_len).

    Data bins are scaled so each symbol has unit mean power.
    """
    bits = _pad_bits(numerology, payload_bits)
    n_syms = numerology.data_syms_per_preamble
    nd = numerology.data_subcarriers
    symbols = qpsk_map(bits).reshape(*bits.shape[:-1], n_syms, nd)
    grid = np.zeros(symbols.shape[:-1] + (numerology.fft_size,), dtype=np.complex128)
    grid[..., numerology.data_bins] = symbols * math.sqrt(numerology.fft_size / nd)
    return add_cp(np.fft.ifft(grid, norm="ortho", axis=-1), numerology.cp_len)


def modulate_frame(numerology: OfdmNumerology, payload_bits, pn_seed: int) -> OfdmFrame:
    bits = _pad_bits(numerology, np.asarray(payload_bits).reshape(-1))
    return OfdmFrame(
        preamble=gen_sc_preamble(numerology, pn_seed),
        data_symbols=modulate_data(numerology, bits),
        subcarrier_map=numerology.data_bins,
        payload_bits=bits,
    )


def modulate_batch(numerology: OfdmNumerology, payload_bits, preamble) -> np.ndarray:
    """Stack of complete frames, shape (K, frame_len), sharing one preamble."""
    data = modulate_data(numerology, payload_bits)
    data = data.reshape(data.shape[0], -1)
    pre = np.broadcast_to(preamble, (data.shape[0], len(preamble)))
    return np.concatenate((pre, data), axis=1)


def demodulate_frame(rx, numerology: OfdmNumerology, channel=None) -> np.ndarray:
    """Hard-decision QPSK bits from an aligned frame, equalised by ``channel``."""
    rx = np.asarray(rx, dtype=np.complex128)
    if rx.shape[-1] < numerology.frame_len:
        raise ValueError(f"need {numerology.frame_len} samples, got {rx.shape[-1]}")
    sl = numerology.symbol_len
    data = rx[numerology.symbol_len:numerology.frame_len]
    data = data.reshape(numerology.data_syms_per_preamble, sl)[:, numerology.cp_len:]
    grid = np.fft.fft(data, norm="ortho", axis=-1)
    if channel is not None:
        grid = grid / np.asarray(channel)
    return qpsk_demap(grid[:, numerology.data_bins].reshape(-1))


def sc_timing_metric(rx, numerology: OfdmNumerology) -> np.ndarray:
    """Schmidl-Cox metric ``|P(d)|^2 / (R(d))^2`` for every candidate start ``d``.

    ``R(d)`` is half the energy of the full window, which keeps the metric in
    [0, 1]. Works on 1-D buffers or (K, n) stacks.
    """
    rx = np.asarray(rx, dtype=np.complex128)
    if rx.shape[-1] < numerology.fft_size:
        raise ValueError(f"rx needs at least {numerology.fft_size} samples")
    return kernels.sc_metric(rx, numerology.fft_size // 2)


def _half_correlation(rx, half):
    a = rx[..., :half]
    b = rx[..., half:2 * half]
    p = np.sum(a.conj() * b, axis=-1)
    energy = 0.5 * np.sum(rx.real ** 2 + rx.imag ** 2, axis=-1)
    return p, energy


def estimate_cfo(rx_preamble, numerology: OfdmNumerology, min_corr: float = 0.3) -> float:
    """Coarse CFO in Hz from the two halves of a CP-free training symbol.

    Raises SyncError when the normalised half-symbol correlation is below
    ``min_corr``.
    """
    rx = np.asarray(rx_preamble, dtype=np.complex128)
    if rx.shape != (numerology.fft_size,):
        raise ValueError(f"rx_preamble must have length {numerology.fft_size}")
    f, ok = estimate_cfo_rows(rx[None, :], numerology, min_corr)
    if not ok[0]:
        raise SyncError("half-symbol correlation below floor; no preamble present")
    return float(f[0])


def estimate_cfo_rows(rx, numerology: OfdmNumerology, min_corr: float = 0.3):
    """Vectorised CFO estimate over rows; returns (cfo_hz, ok)."""
    half = numerology.fft_size // 2
    p, energy = _half_correlation(rx, half)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(energy > 0, np.abs(p) / energy, 0.0)
    cfo = np.angle(p) / (2 * math.pi * half / numerology.sample_rate)
    return cfo, corr >= min_corr


def apply_cfo(samples, cfo_hz: float, sample_rate: float, start: int = 0) -> np.ndarray:
    """Rotate samples by a frequency offset; sample ``start`` has phase zero."""
    samples = np.asarray(samples, dtype=np.complex128)
    n = np.arange(samples.shape[-1]) - start
    return samples * np.exp(2j * math.pi * np.multiply.outer(np.asarray(cfo_hz), n) / sample_rate)


@dataclass(frozen=True)
class ChannelSnapshot:
    """Per-bin frequency response estimated from one packet.

    ``source_label`` is ground truth for evaluation and never read by the
    detector.
    """

    h: np.ndarray
    timestamp_k: int = 0
    source_label: str = ""

    def __post_init__(self):
        h = np.array(self.h, dtype=np.complex128).reshape(-1)
        if not np.all(np.isfinite(h)):
            raise ValueError("channel snapshot contains non-finite values")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)


def ls_estimate(rx_body, known_bins) -> np.ndarray:
    """Least-squares estimate on even bins, odd bins linearly interpolated.

    ``rx_body`` is a CP-free training symbol (or a (K, M) stack of them).
    """
    known = np.asarray(known_bins, dtype=np.complex128)
    even = known[0::2]
    if np.any(even == 0):
        raise ValueError("known preamble must be non-zero on every even bin")
    y = np.fft.fft(np.asarray(rx_body, dtype=np.complex128), norm="ortho", axis=-1)
    h = np.empty(y.shape, dtype=np.complex128)
    h_even = y[..., 0::2] / even
    h[..., 0::2] = h_even
    h[..., 1::2] = 0.5 * (h_even + np.roll(h_even, -1, axis=-1))
    return h


def estimate_channel(rx_preamble, known_preamble_bins, numerology: OfdmNumerology,
                     timestamp_k: int = 0, source_label: str = "") -> ChannelSnapshot:
    rx = np.asarray(rx_preamble, dtype=np.complex128)
    if rx.shape != (numerology.fft_size,):
        raise ValueError(f"rx_preamble must have length {numerology.fft_size}")
    return ChannelSnapshot(ls_estimate(rx, known_preamble_bins), timestamp_k, source_label)


@dataclass
class ReceiveResult:
    snapshots: np.ndarray
    sync_ok: np.ndarray
    cfo_hz: np.ndarray
    metric_peak: np.ndarray


def receive_batch(buffers, numerology: OfdmNumerology, known_bins, frame_start: int,
                  sync_threshold: float = 0.3, min_corr: float = 0.3) -> ReceiveResult:
    """Turn received buffers (K, n) into channel snapshots.

    The receiver is slot-synchronous: the FFT window sits at ``frame_start``.
    The Schmidl-Cox metric over the slot decides whether a preamble is present,
    the half-symbol correlation gives the CFO, which is removed before the LS
    estimate.
    """
    buffers = np.atleast_2d(np.asarray(buffers, dtype=np.complex128))
    m = numerology.fft_size
    cp = numerology.cp_len
    search_end = min(buffers.shape[1], 2 * frame_start + cp + m)
    metric = sc_timing_metric(buffers[:, :search_end], numerology)
    peak = metric.max(axis=1)
    body_start = frame_start + cp
    body = buffers[:, body_start:body_start + m]
    cfo, corr_ok = estimate_cfo_rows(body, numerology, min_corr)
    n = np.arange(cp, cp + m)
    body = body * np.exp(-2j * math.pi * np.outer(cfo, n) / numerology.sample_rate)
    return ReceiveResult(
        snapshots=ls_estimate(body, known_bins),
        sync_ok=(peak >= sync_threshold) & corr_ok,
        cfo_hz=cfo,
        metric_peak=peak,
    )


def write_iq(path, samples) -> None:
    """Dump samples as interleaved little-endian float32 I/Q pairs."""
    samples = np.asarray(samples, dtype=np.complex128).reshape(-1)
    iq = np.empty(2 * samples.size, dtype="<f4")
    iq[0::2] = samples.real
    iq[1::2] = samples.imag
    iq.tofile(path)


def read_iq(path) -> np.ndarray:
    iq = np.fromfile(path, dtype="<f4")
    if iq.size % 2:
        raise ValueError(f"{path}: odd number of floats in IQ dump")
    return iq[0::2].astype(np.float64) + 1j * iq[1::2].astype(np.float64)
