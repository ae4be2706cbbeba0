"""Acceptance gate: one test per primary criterion, one PASS/FAIL line each.

The lines are collected in ``conftest.ACCEPTANCE_LINES`` and printed in the
terminal summary, so a plain ``pytest`` run shows the whole gate at a glance.
"""
import math
import subprocess
import sys
import time

import mpmath
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from cpm_auth.channel import (
    ChannelRealization,
    SpatialGeometry,
    apply_channel,
    bessel_j0,
    complex_gaussian,
)
from cpm_auth.config import config_from_dict
from cpm_auth.detector import (
    DetectorState,
    ReferenceSet,
    Verdict,
    calibrate_threshold,
    decide,
    mse,
    run_trace,
)
from cpm_auth.harness import mic_overhead, run_scenario
from cpm_auth.ofdm import (
    ChannelSnapshot,
    OfdmNumerology,
    apply_cfo,
    demodulate_frame,
    estimate_cfo,
    estimate_channel,
    gen_sc_preamble,
    modulate_frame,
    sc_preamble_bins,
)

SEEDS = range(10)
WAVELENGTH = SpatialGeometry().wavelength


class Gate:
    """Collects named checks for one criterion and reports a single line."""

    def __init__(self, name):
        self.name = name
        self.failed = []
        self.notes = []

    def check(self, ok, label):
        if not ok:
            self.failed.append(label)
        return ok

    def note(self, text):
        self.notes.append(text)

    def finish(self):
        status = "FAIL" if self.failed else "PASS"
        detail = "; ".join(self.notes)
        if self.failed:
            detail = "failed: " + ", ".join(self.failed) + (f" | {detail}" if detail else "")
        line = f"[{status}] {self.name}" + (f" -- {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not self.failed, line


_runs = {}


def scenario(d_be, seed):
    """Default scenario (N = 10000, 20 dB, static) at one Eve distance; cached."""
    key = (d_be, seed)
    if key not in _runs:
        cfg = config_from_dict({"geometry": {"d_be": d_be}, "seed": seed})
        _runs[key] = run_scenario(cfg)
    return _runs[key]


def test_mic_overhead_table_exact():
    gate = Gate("MIC overhead table exact")
    t0 = time.perf_counter()
    rows = [(4, 113, 3.54), (8, 113, 7.08), (16, 113, 14.16),
            (4, 40, 10.0), (8, 40, 20.0), (16, 40, 40.0)]
    for mic, payload, pct in rows:
        got = mic_overhead(mic, payload)
        gate.check(f"{got:.2f}" == f"{pct:.2f}", f"({mic}, {payload}) gave {got}")
    elapsed = time.perf_counter() - t0
    gate.check(elapsed < 1.0, f"runtime {elapsed:.3f} s")
    gate.note(f"6 rows, {elapsed * 1e3:.2f} ms")
    gate.finish()


def test_mse_oracle_equivalence():
    gate = Gate("MSE oracle equivalence")
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(200):
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 9)))
        x = complex_gaussian(rng, shape) * rng.uniform(0.1, 10)
        y = complex_gaussian(rng, shape) * rng.uniform(0.1, 10)
        total = 0.0
        for i in range(shape[0]):
            for j in range(shape[1]):
                d = x[i, j] - y[i, j]
                total += d.real * d.real + d.imag * d.imag
        brute = total / (shape[0] * shape[1])
        worst = max(worst, abs(mse(x, y) - brute))
    gate.check(worst <= 1e-12, f"max |diff| {worst:.3g}")
    gate.note(f"200 matrices, max |diff| {worst:.3g}")
    gate.finish()


def test_threshold_verbatim():
    gate = Gate("Threshold half-gap verbatim")
    gate.check(calibrate_threshold(ReferenceSet([0, 0, 0], [4, 4, 4])) == 2.0, "example")
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 200))
        ab = rng.exponential(rng.uniform(1e-3, 1), n)
        ae = rng.exponential(rng.uniform(1e-3, 5), n)
        expected = 0.5 * abs(sum(ab) / n - sum(ae) / n)
        worst = max(worst, abs(calibrate_threshold(ReferenceSet(ab, ae)) - expected))
    gate.check(worst <= 1e-12, f"max |diff| {worst:.3g}")
    gate.note(f"example 2.0, 100 random sets, max |diff| {worst:.3g}")
    gate.finish()


def test_decision_boundary():
    gate = Gate("Decision boundary")
    rng = np.random.default_rng(3)
    ref = ChannelSnapshot(complex_gaussian(rng, 64))
    pkt = ChannelSnapshot(complex_gaussian(rng, 64), 1)
    e = mse(pkt.h, ref.h)
    for e_th, want, label in ((e, Verdict.DROP, "e = e_th"),
                              (e * (1 + 1e-12), Verdict.ACCEPT, "e = e_th - eps")):
        state = DetectorState(e_th=e_th)
        state.seed(ref)
        gate.check(decide(state, pkt).verdict is want, f"decide at {label}")
        state = DetectorState(e_th=e_th)
        state.seed(ref)
        _, _, accepted = run_trace(state, pkt.h[None, :])
        gate.check(bool(accepted[0]) == (want is Verdict.ACCEPT), f"trace at {label}")
    gate.note("drop at e = e_th, accept at e_th(1 + 1e-12)")
    gate.finish()


@pytest.mark.slow
def test_setup_a_colocated():
    gate = Gate("Setup A co-located")
    t0 = time.perf_counter()
    report = scenario(0.0, 0)
    elapsed = time.perf_counter() - t0
    gate.check(report.bob_drop_rate == 0.0, f"bob {report.bob_drop_rate:.4%}")
    gate.check(report.eve_drop_rate <= 0.20, f"eve {report.eve_drop_rate:.4%}")
    gate.check(elapsed < 30.0, f"runtime {elapsed:.1f} s")
    gate.note(f"bob {report.bob_drop_rate:.2%}, eve {report.eve_drop_rate:.2%}, "
              f"e_th {report.e_th_used:.4g}, {elapsed:.1f} s")
    gate.finish()


@pytest.mark.slow
def test_setup_b_separated():
    gate = Gate("Setup B separated (10 seeds)")
    t0 = time.perf_counter()
    reports = [scenario(0.10, s) for s in SEEDS]
    elapsed = time.perf_counter() - t0
    bob = np.mean([r.bob_drop_rate for r in reports])
    eve = np.mean([r.eve_drop_rate for r in reports])
    gate.check(bob <= 0.001, f"bob {bob:.4%}")
    gate.check(eve >= 0.90, f"eve {eve:.4%}")
    gate.check(elapsed < 300.0, f"runtime {elapsed:.1f} s")
    gate.note(f"mean bob {bob:.3%}, mean eve {eve:.3%}, {elapsed:.1f} s")
    gate.finish()


@pytest.mark.slow
def test_spatial_monotonicity():
    gate = Gate("Spatial monotonicity (10 seeds)")
    base = [scenario(0.0, s).eve_drop_rate for s in SEEDS]
    notes = [f"d=0: {np.mean(base):.3f}"]
    for label, d in (("lambda/2", WAVELENGTH / 2), ("lambda", WAVELENGTH), ("3 m", 3.0)):
        eve = [scenario(d, s).eve_drop_rate for s in SEEDS]
        wins = sum(a > b for a, b in zip(eve, base))
        gate.check(np.mean(eve) > np.mean(base), f"mean at {label}")
        gate.check(wins >= 9, f"{label} beats d=0 in {wins}/10 seeds")
        notes.append(f"{label}: {np.mean(eve):.3f} ({wins}/10)")
    gate.note(", ".join(notes))
    gate.finish()


def test_ofdm_pipeline_soundness():
    gate = Gate("OFDM pipeline soundness")
    num = OfdmNumerology()
    rng = np.random.default_rng(11)

    exact = True
    for _ in range(20):
        bits = rng.integers(0, 2, num.bits_per_frame, dtype=np.uint8)
        exact &= np.array_equal(demodulate_frame(modulate_frame(num, bits, 1).samples, num), bits)
    gate.check(exact, "loopback")

    known = sc_preamble_bins(num, 1)
    pre = gen_sc_preamble(num, 1)
    worst = 0.0
    for _ in range(20):
        taps = complex_gaussian(rng, 8, np.sqrt(np.exp(-np.arange(8) / 1.52)))
        real = ChannelRealization.from_taps(taps)
        rx = apply_channel(pre, real, math.inf)
        h = estimate_channel(rx[16:80], known, num).h
        worst = max(worst, float(np.max(np.abs(h[0::2] - real.freq_response[0::2]))))
    gate.check(worst <= 1e-9, f"even-bin error {worst:.3g}")

    body = apply_cfo(pre, 10e3, num.sample_rate)[16:80]
    noiseless = estimate_cfo(body, num) - 10e3
    gate.check(abs(noiseless) < 1.0, f"noiseless CFO error {noiseless:.3g} Hz")

    std = math.sqrt(10 ** (-20 / 10))
    est = np.array([estimate_cfo(body + complex_gaussian(rng, 64, std), num) for _ in range(1000)])
    inside = float(np.mean(np.abs(est - 10e3) <= 200.0))
    gate.check(inside >= 0.95, f"20 dB CFO within 200 Hz in {inside:.1%} of trials")
    gate.note(f"loopback exact, even-bin error {worst:.2g}, noiseless CFO error "
              f"{abs(noiseless):.2g} Hz, 20 dB: {inside:.1%} within 200 Hz "
              f"(CFO std {est.std():.0f} Hz)")
    gate.finish()


def test_numerology():
    gate = Gate("Numerology")
    num = OfdmNumerology()
    frame = modulate_frame(num, np.zeros(num.bits_per_frame, dtype=np.uint8), 1)
    gate.check(num.frame_len == 400 == frame.samples.size, "400 samples")
    gate.check(num.frame_len / num.sample_rate == 128e-6, "128 us")
    gate.check(num.frame_duration * 1_000_000 == 128, "exact duration")
    gate.note(f"{num.frame_len} samples, {float(num.frame_duration) * 1e6:g} us")
    gate.finish()


@pytest.mark.slow
def test_determinism(tmp_path):
    gate = Gate("Determinism")
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        subprocess.run([sys.executable, "-m", "cpm_auth", "run", "--seed", "7", "--out", str(out)],
                       check=True, capture_output=True)
        outputs.append(out)
    for name in ("packets.csv", "summary.csv"):
        same = (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
        gate.check(same, f"{name} differs")
    gate.note("packets.csv and summary.csv byte-identical across two processes")
    gate.finish()


def series_j0(x):
    # independent oracle: power series at 60 digits
    x = mpmath.mpf(x)
    q = x * x / 4
    term = mpmath.mpf(1)
    total = mpmath.mpf(1)
    k = 0
    while True:
        k += 1
        term *= -q / (k * k)
        total += term
        if abs(term) < mpmath.mpf(10) ** -55 and k > q:
            return total


def test_bessel_j0_oracle():
    gate = Gate("bessel_j0 vs series oracle")
    with mpmath.workdps(60):
        xs = np.linspace(0.0, 50.0, 1000)
        worst = max(abs(bessel_j0(x) - float(series_j0(x))) for x in xs)
    gate.check(worst < 1e-10, f"max error {worst:.3g}")

    lo, hi = 2.0, 3.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if bessel_j0(mid) > 0:
            lo = mid
        else:
            hi = mid
    zero = 0.5 * (lo + hi)
    gate.check(abs(zero - 2.404825557695773) <= 1e-9, f"first zero {zero!r}")
    gate.note(f"max error {worst:.2g} on 1000 points, first zero {zero:.15f}")
    gate.finish()


@pytest.fixture(scope="module", autouse=True)
def _clear_cache():
    yield
    _runs.clear()
