"""End-to-end experiments: calibration, attack scenarios, sweeps and CSV output.

Packets are simulated in chunks: frames are modulated, sent through the
transmitter's fading link with AWGN, and turned into channel snapshots by the
slot-synchronous receiver. The snapshots then go through the detector in
transmission order.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (
    FadingLink,
    complex_gaussian,
    convolve_rows,
    make_linked_pair,
    rng_stream,
)
from .config import ScenarioConfig
from .detector import (
    DetectorState,
    ErrorRecord,
    ReferenceSet,
    Verdict,
    calibrate_threshold,
    run_trace,
)
from .ofdm import (
    ChannelSnapshot,
    apply_cfo,
    gen_sc_preamble,
    modulate_batch,
    receive_batch,
    sc_preamble_bins,
)

log = logging.getLogger(__name__)

CHUNK = 2048
SWEEP_AXES = ("d_BE", "snr_db", "temporal_rho", "e_th")
PACKET_CSV_HEADER = ("k", "truth", "e", "pcc", "verdict", "sync_ok")
SUMMARY_CSV_HEADER = ("axis_value", "seed", "bob_drop_rate", "eve_drop_rate", "e_th")

# (system, MIC bytes, MAC payload bytes)
MIC_TABLE_ROWS = (
    ("IEEE 802.15.4", 4, 113),
    ("IEEE 802.15.4", 8, 113),
    ("IEEE 802.15.4", 16, 113),
    ("MC-MTC", 4, 40),
    ("MC-MTC", 8, 40),
    ("MC-MTC", 16, 40),
)


def mic_overhead(mic_bytes: int, payload_bytes: int) -> float:
    """MIC size as a percentage of the MAC payload, rounded to two decimals."""
    if payload_bytes < 1:
        raise ValueError(f"payload_bytes must be >= 1, got {payload_bytes}")
    if mic_bytes < 0:
        raise ValueError(f"mic_bytes must be >= 0, got {mic_bytes}")
    return round(100.0 * mic_bytes / payload_bytes, 2)


def mic_overhead_table():
    return [(system, mic, payload, mic_overhead(mic, payload))
            for system, mic, payload in MIC_TABLE_ROWS]


def format_mic_table() -> str:
    lines = [f"{'System':<15}{'MIC size':>10}{'MAC payload':>13}{'MIC overhead':>14}"]
    for system, mic, payload, pct in mic_overhead_table():
        lines.append(f"{system:<15}{mic:>10}{payload:>13}{pct:>13.2f}%")
    return "\n".join(lines)


def _tap_history(link: FadingLink, n_slots: int) -> np.ndarray:
    """Taps in force for slots 0..n_slots-1; slot 0 uses the initial state."""
    first = link.state.taps[None, :]
    if n_slots == 1:
        return first.copy()
    return np.vstack((first, link.advance(n_slots - 1)))


def _simulate_packets(config: ScenarioConfig, taps: np.ndarray, bits: np.ndarray,
                      cfo_hz: np.ndarray, noise_rng: np.random.Generator):
    """Send one packet per row through its taps; returns (snapshots, sync_ok)."""
    num = config.numerology
    rx_cfg = config.receiver
    preamble = gen_sc_preamble(num, rx_cfg.pn_seed)
    known = sc_preamble_bins(num, rx_cfg.pn_seed)
    guard = rx_cfg.guard
    n = len(taps)
    snaps = np.empty((n, num.fft_size), dtype=np.complex128)
    sync_ok = np.empty(n, dtype=bool)
    noiseless = math.isinf(config.snr_db)
    for lo in range(0, n, CHUNK):
        hi = min(n, lo + CHUNK)
        frames = modulate_batch(num, bits[lo:hi], preamble)
        rx = convolve_rows(frames, taps[lo:hi])
        if np.any(cfo_hz[lo:hi]):
            rx = apply_cfo(rx, cfo_hz[lo:hi], num.sample_rate)
        buf = np.zeros((hi - lo, guard + rx.shape[1]), dtype=np.complex128)
        buf[:, guard:] = rx
        if not noiseless:
            power = np.mean(frames.real ** 2 + frames.imag ** 2, axis=1, keepdims=True)
            std = np.sqrt(power * 10 ** (-config.snr_db / 10))
            buf += complex_gaussian(noise_rng, buf.shape, std)
        res = receive_batch(buf, num, known, guard, rx_cfg.sync_threshold, rx_cfg.cfo_floor)
        snaps[lo:hi] = res.snapshots
        sync_ok[lo:hi] = res.sync_ok
    return snaps, sync_ok


def _links(config: ScenarioConfig, geometry, phase: str):
    ch = config.channel
    return make_linked_pair(geometry, ch.pdp_decay, ch.num_taps, config.temporal_rho,
                            config.seed, phase=phase, fft_size=config.numerology.fft_size)


def _random_bits(rng, n, width):
    return rng.integers(0, 2, size=(n, width), dtype=np.uint8)


def _row_mse(a, b):
    d = a - b
    return np.mean(d.real * d.real + d.imag * d.imag, axis=1)


def calibration_geometry(config: ScenarioConfig):
    d_be = config.detector.calibration_d_be
    if d_be is None:
        return config.geometry
    return dataclasses.replace(config.geometry, d_be=d_be)


def run_calibration(config: ScenarioConfig) -> ReferenceSet:
    """Labelled reference phase: Bob and Eve both transmit in every slot.

    For k = 1..N, Bob's and Eve's snapshots are compared with Bob's snapshot of
    slot k-1. Pairs touching a failed sync are skipped; the count is stored in
    ``ReferenceSet.skipped``. Channel placement is shared with the evaluation
    run; fading innovations, payloads and noise come from separate streams.
    """
    n_slots = config.num_packets + 1
    bob, eve = _links(config, calibration_geometry(config), "calibration")
    bob_taps = _tap_history(bob, n_slots)
    eve_taps = _tap_history(eve, n_slots)
    width = config.numerology.bits_per_frame
    payload_rng = rng_stream(config.seed, "calibration", "payload")
    bits_bob = _random_bits(payload_rng, n_slots, width)
    bits_eve = _random_bits(payload_rng, n_slots, width)
    rx = config.receiver
    h_bob, ok_bob = _simulate_packets(
        config, bob_taps, bits_bob, np.full(n_slots, rx.bob_cfo_hz),
        rng_stream(config.seed, "calibration", "noise", "bob"))
    h_eve, ok_eve = _simulate_packets(
        config, eve_taps[1:], bits_eve[1:], np.full(n_slots - 1, rx.eve_cfo_hz),
        rng_stream(config.seed, "calibration", "noise", "eve"))
    e_ab = _row_mse(h_bob[1:], h_bob[:-1])
    e_ae = _row_mse(h_eve, h_bob[:-1])
    keep = ok_bob[1:] & ok_bob[:-1] & ok_eve
    skipped = int(np.count_nonzero(~keep))
    if skipped:
        log.warning("calibration skipped %d of %d slots after sync failures",
                    skipped, config.num_packets)
    return ReferenceSet(e_ab[keep], e_ae[keep], skipped)


@dataclass
class RunReport:
    bob_drop_rate: float
    eve_drop_rate: float
    e_th_used: float
    records: list = field(repr=False)
    reference: ReferenceSet | None = field(default=None, repr=False)
    sync_failures: int = 0
    csv_path: str | None = None

    @property
    def num_bob(self) -> int:
        return sum(r.truth == "bob" for r in self.records)

    @property
    def num_eve(self) -> int:
        return sum(r.truth == "eve" for r in self.records)


def drop_rate(records, truth: str) -> float:
    """Dropped / total packets of one transmitter; NaN when it sent none."""
    sent = [r for r in records if r.truth == truth]
    if not sent:
        return math.nan
    return sum(r.verdict is Verdict.DROP for r in sent) / len(sent)


def run_scenario(config: ScenarioConfig, threshold: float | None = None) -> RunReport:
    """Simulate ``num_packets`` packets under the attack schedule and classify them.

    A bootstrap packet from Bob, sent before packet 0 and not reported, seeds
    the detector reference. The threshold is, in order of precedence,
    ``threshold``, ``config.detector.e_th`` or a fresh calibration run.
    """
    refset = None
    e_th = threshold if threshold is not None else config.detector.e_th
    if e_th is None:
        refset = run_calibration(config)
        e_th = calibrate_threshold(refset, config.detector.threshold_rule)

    n = config.num_packets
    n_slots = n + 1
    eve_mask = np.concatenate(([False], config.attack.eve_slots(n)))
    bob, eve = _links(config, config.geometry, "eval")
    taps = np.where(eve_mask[:, None], _tap_history(eve, n_slots), _tap_history(bob, n_slots))

    bits = _random_bits(rng_stream(config.seed, "eval", "payload"), n_slots,
                        config.numerology.bits_per_frame)
    src = config.attack.replay_sources(n)
    for k in np.flatnonzero(src != -1):
        # bootstrap packet sits at slot 0, packet k at slot k + 1
        bits[k + 1] = bits[0] if src[k] == -2 else bits[src[k] + 1]

    rx = config.receiver
    cfo = np.where(eve_mask, rx.eve_cfo_hz, rx.bob_cfo_hz)
    snaps, sync_ok = _simulate_packets(config, taps, bits, cfo,
                                       rng_stream(config.seed, "eval", "noise"))
    if not sync_ok[0]:
        log.warning("bootstrap packet failed sync; seeding the detector anyway")

    state = DetectorState(e_th, config.update_policy, pcc_mode=config.detector.pcc_mode)
    state.seed(ChannelSnapshot(snaps[0], -1, "bob"))
    errors, pccs, accepted = run_trace(state, snaps[1:], sync_ok[1:])

    truth = np.where(eve_mask[1:], "eve", "bob")
    records = [
        ErrorRecord(k, float(errors[k]), float(pccs[k]),
                    Verdict.ACCEPT if accepted[k] else Verdict.DROP,
                    str(truth[k]), bool(sync_ok[k + 1]))
        for k in range(n)
    ]
    return RunReport(
        bob_drop_rate=drop_rate(records, "bob"),
        eve_drop_rate=drop_rate(records, "eve"),
        e_th_used=float(e_th),
        records=records,
        reference=refset,
        sync_failures=int(np.count_nonzero(~sync_ok[1:])),
    )


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def write_packet_csv(report: RunReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PACKET_CSV_HEADER)
        for r in report.records:
            w.writerow((r.k, r.truth, _fmt(r.e), _fmt(r.pcc), r.verdict.value, int(r.sync_ok)))
    report.csv_path = str(path)
    return path


def read_packet_csv(path):
    """Parse a per-packet CSV back into ErrorRecords."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ErrorRecord(int(r["k"]), float(r["e"]), float(r["pcc"]), Verdict(r["verdict"]),
                        r["truth"], r["sync_ok"] == "1") for r in rows]


def write_reference_csv(refset: ReferenceSet, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("k", "e_ab_ref", "e_ae_ref"))
        for k, (a, b) in enumerate(zip(refset.e_ab_ref, refset.e_ae_ref)):
            w.writerow((k, _fmt(float(a)), _fmt(float(b))))
    return path


@dataclass
class SweepRow:
    axis_value: float
    seed: int
    bob_drop_rate: float
    eve_drop_rate: float
    e_th: float
    error: str = ""


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "d_BE":
        return config.replace(geometry=dataclasses.replace(config.geometry, d_be=value))
    if axis == "snr_db":
        return config.replace(snr_db=value)
    if axis == "temporal_rho":
        return config.replace(temporal_rho=value)
    if axis == "e_th":
        return config.replace(detector=dataclasses.replace(config.detector, e_th=value))
    raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def _sweep_cell(args):
    config, axis, value, seed = args
    try:
        report = run_scenario(apply_axis(config.replace(seed=seed), axis, value))
    except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the sweep
        return SweepRow(value, seed, math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    return SweepRow(value, seed, report.bob_drop_rate, report.eve_drop_rate, report.e_th_used)


@dataclass
class SweepResult:
    axis: str
    rows: list

    def summary(self):
        """Per axis value: (value, mean/std of both drop rates over successful seeds)."""
        out = []
        for value in dict.fromkeys(r.axis_value for r in self.rows):
            cells = [r for r in self.rows if r.axis_value == value and not r.error]
            bob = np.array([r.bob_drop_rate for r in cells])
            eve = np.array([r.eve_drop_rate for r in cells])
            out.append({
                "axis_value": value,
                "n": len(cells),
                "bob_mean": _nanstat(np.nanmean, bob),
                "bob_std": _nanstat(np.nanstd, bob),
                "eve_mean": _nanstat(np.nanmean, eve),
                "eve_std": _nanstat(np.nanstd, eve),
            })
        return out

    def cell(self, value, seed) -> SweepRow:
        return next(r for r in self.rows if r.axis_value == value and r.seed == seed)


def _nanstat(fn, arr):
    if arr.size == 0 or np.all(np.isnan(arr)):
        return math.nan
    return float(fn(arr))


def sweep(config: ScenarioConfig, axis: str, values, seeds, workers: int = 1) -> SweepResult:
    """Run one scenario per (value, seed) cell.

    Cells are independent, so ``workers > 1`` runs them in a process pool; the
    rows come back in (value, seed) order either way.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = [float(v) for v in values]
    seeds = [int(s) for s in seeds]
    if not values:
        raise ValueError("sweep needs at least one value")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    cells = [(config, axis, v, s) for v in values for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    return SweepResult(axis, rows)


def write_summary_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_CSV_HEADER)
        for r in rows:
            w.writerow((_fmt(float(r.axis_value)), r.seed, _fmt(r.bob_drop_rate),
                        _fmt(r.eve_drop_rate), _fmt(r.e_th)))
    return path
