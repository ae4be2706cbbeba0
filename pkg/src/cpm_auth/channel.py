"""Tapped-delay-line Rayleigh links for the Bob->Alice and Eve->Alice paths.

Each link is a set of complex Gaussian taps with an exponential power delay
profile. Taps evolve between packets as a first-order Gauss-Markov process.
Eve's taps start out correlated with Bob's through Clarke's isotropic
scattering model, ``J0(2*pi*d/wavelength)``.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_NUM_TAPS = 8
DEFAULT_FLOOR_DB = 20.0


def bessel_j0(x: float) -> float:
    """Bessel function of the first kind, order zero."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"bessel_j0 needs a finite argument, got {x}")
    return kernels.j0_scalar(x)


@dataclass(frozen=True)
class SpatialGeometry:
    """Distances in metres between Alice (receiver), Bob and Eve."""

    d_ab: float = 3.0
    d_ae: float = 3.0
    d_be: float = 0.10
    carrier_freq: float = 2.45e9

    def __post_init__(self):
        for name in ("d_ab", "d_ae", "d_be"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite distance >= 0, got {value}")
        if not math.isfinite(self.carrier_freq) or self.carrier_freq <= 0:
            raise ValueError(f"carrier_freq must be > 0, got {self.carrier_freq}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq


def spatial_correlation(geometry: SpatialGeometry) -> float:
    rho = bessel_j0(2.0 * math.pi * geometry.d_be / geometry.wavelength)
    return min(1.0, max(-1.0, rho))


def default_pdp_decay(num_taps: int, floor_db: float = DEFAULT_FLOOR_DB) -> float:
    """Decay constant (in taps) putting the last tap ``floor_db`` below the first."""
    if num_taps <= 1:
        return 1.0
    return (num_taps - 1) / math.log(10 ** (floor_db / 10))


def exponential_pdp(num_taps: int, decay: float) -> np.ndarray:
    """Per-tap variances ``exp(-p/decay)`` normalised to unit total power."""
    if num_taps < 1:
        raise ValueError(f"num_taps must be >= 1, got {num_taps}")
    if not decay > 0:
        raise ValueError(f"pdp decay must be > 0, got {decay}")
    powers = np.exp(-np.arange(num_taps) / decay)
    return powers / powers.sum()


def rng_stream(seed: int, *names: str) -> np.random.Generator:
    """Independent generator keyed by ``seed`` and a path of stream names.

    The same (seed, names) always yields the same stream, whatever else has
    been drawn, so runs do not depend on execution order.
    """
    key = tuple(zlib.crc32(name.encode()) for name in names)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def complex_gaussian(rng: np.random.Generator, shape, std=1.0) -> np.ndarray:
    """Circular complex Gaussian samples with ``E|z|^2 = std**2``."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    return z * (np.asarray(std) / math.sqrt(2.0))


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray
    freq_response: np.ndarray = field(repr=False)

    @classmethod
    def from_taps(cls, taps, fft_size: int = 64) -> "ChannelRealization":
        taps = np.array(taps, dtype=np.complex128)
        taps.setflags(write=False)
        resp = np.fft.fft(taps, fft_size)
        resp.setflags(write=False)
        return cls(taps, resp)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


class FadingLink:
    """Single-owner, stateful link from one transmitter to Alice."""

    def __init__(self, taps, pdp: float, temporal_rho: float, rng: np.random.Generator,
                 fft_size: int = 64):
        if not 0.0 <= temporal_rho <= 1.0:
            raise ValueError(f"temporal_rho must lie in [0, 1], got {temporal_rho}")
        taps = np.asarray(taps, dtype=np.complex128)
        self.pdp = pdp
        self.num_taps = len(taps)
        self.temporal_rho = float(temporal_rho)
        self.tap_std = np.sqrt(exponential_pdp(self.num_taps, pdp))
        self.rng = rng
        self.fft_size = fft_size
        self.state = ChannelRealization.from_taps(taps, fft_size)

    def step(self) -> ChannelRealization:
        """Advance one packet interval and return the new realization."""
        return ChannelRealization.from_taps(self.advance(1)[0], self.fft_size)

    def advance(self, count: int) -> np.ndarray:
        """Advance ``count`` packet intervals; returns the (count, P) tap history."""
        if count < 0:
            raise ValueError("count must be >= 0")
        w = complex_gaussian(self.rng, (count, self.num_taps), self.tap_std)
        history = kernels.gauss_markov(self.state.taps, self.temporal_rho, w)
        if count:
            self.state = ChannelRealization.from_taps(history[-1], self.fft_size)
        return history


def make_linked_pair(geometry: SpatialGeometry, pdp: float | None = None,
                     num_taps: int = DEFAULT_NUM_TAPS, temporal_rho: float = 1.0,
                     seed: int = 0, phase: str = "eval", fft_size: int = 64):
    """Build Bob's and Eve's links for one placement.

    The initial taps depend only on ``seed`` and the geometry. ``phase`` selects
    the stream driving the temporal evolution, so a calibration phase and an
    evaluation phase share the placement but not the fading innovations.
    """
    if num_taps < 1:
        raise ValueError(f"num_taps must be >= 1, got {num_taps}")
    if pdp is None:
        pdp = default_pdp_decay(num_taps)
    if not 0.0 <= temporal_rho <= 1.0:
        raise ValueError(f"temporal_rho must lie in [0, 1], got {temporal_rho}")
    std = np.sqrt(exponential_pdp(num_taps, pdp))
    h_bob = complex_gaussian(rng_stream(seed, "placement", "bob"), num_taps, std)
    g = complex_gaussian(rng_stream(seed, "placement", "eve"), num_taps, std)
    rho_s = spatial_correlation(geometry)
    h_eve = rho_s * h_bob + math.sqrt(max(0.0, 1.0 - rho_s * rho_s)) * g
    bob = FadingLink(h_bob, pdp, temporal_rho, rng_stream(seed, phase, "fading", "bob"), fft_size)
    eve = FadingLink(h_eve, pdp, temporal_rho, rng_stream(seed, phase, "fading", "eve"), fft_size)
    return bob, eve


def noise_variance(samples, snr_db: float) -> float:
    """AWGN variance giving ``snr_db`` for unit average channel gain; 0 when noiseless."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    power = float(np.mean(np.abs(samples) ** 2))
    return power * 10 ** (-snr_db / 10)


def apply_channel(samples, real: ChannelRealization, snr_db: float,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Linear convolution with the taps plus AWGN.

    Output length is ``len(samples) + P - 1``. ``snr_db=inf`` disables noise.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    out = np.convolve(samples, real.taps)
    var = noise_variance(samples, snr_db)
    if var > 0:
        if rng is None:
            raise ValueError("a random generator is needed when noise is enabled")
        out = out + complex_gaussian(rng, out.shape, math.sqrt(var))
    return out


def convolve_rows(frames: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Row-wise linear convolution of (K, n) frames with (K, P) taps."""
    if frames.shape[0] != taps.shape[0]:
        raise ValueError("frames and taps need the same number of rows")
    return kernels.convolve_rows(frames, taps)
