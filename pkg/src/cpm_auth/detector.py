"""Channel Profile Monitoring decision core.

Each packet's channel snapshot is compared with the last accepted one; the
packet is processed when the mean square error is strictly below the
threshold and dropped otherwise.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .ofdm import ChannelSnapshot


class UndefinedMetricError(ValueError):
    """The metric is undefined for these inputs (e.g. zero variance)."""


class Verdict(str, enum.Enum):
    ACCEPT = "accept"
    DROP = "drop"


class UpdatePolicy(str, enum.Enum):
    ON_ACCEPT = "on-accept"
    ALWAYS = "always"


PCC_MODES = {"complex": kernels.PCC_COMPLEX, "magnitude": kernels.PCC_MAGNITUDE}


def mse(x, y) -> float:
    """Mean of ``|x - y|^2`` over all L*M elements of two equally shaped arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("mse of empty arrays is undefined")
    d = x - y
    return float(np.mean(d.real * d.real + d.imag * d.imag))


def _flatten_for_pcc(x, mode):
    x = np.asarray(x).reshape(-1)
    if mode == "magnitude":
        return np.abs(x).astype(np.float64)
    if mode != "complex":
        raise ValueError(f"unknown pcc mode {mode!r}")
    x = x.astype(np.complex128)
    return np.concatenate((x.real, x.imag))


def pcc(x, y, mode: str = "complex") -> float:
    """Pearson correlation of two snapshots.

    In ``complex`` mode the inputs are flattened to [real parts, imaginary
    parts]; ``magnitude`` mode correlates ``|x|`` and ``|y|``.
    """
    u = _flatten_for_pcc(x, mode)
    v = _flatten_for_pcc(y, mode)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    if mode == "complex" and u.size < 4 or mode == "magnitude" and u.size < 2:
        raise ValueError("pcc needs at least two elements per input")
    u = u - u.mean()
    v = v - v.mean()
    su = float(np.dot(u, u))
    sv = float(np.dot(v, v))
    if su <= 0.0 or sv <= 0.0:
        raise UndefinedMetricError("pcc is undefined for an input with zero variance")
    return min(1.0, max(-1.0, float(np.dot(u, v)) / math.sqrt(su * sv)))


@dataclass
class ReferenceSet:
    e_ab_ref: np.ndarray
    e_ae_ref: np.ndarray
    skipped: int = 0

    def __post_init__(self):
        self.e_ab_ref = np.asarray(self.e_ab_ref, dtype=np.float64).reshape(-1)
        self.e_ae_ref = np.asarray(self.e_ae_ref, dtype=np.float64).reshape(-1)
        if self.e_ab_ref.shape != self.e_ae_ref.shape:
            raise ValueError("reference vectors must have equal length")
        if np.any(self.e_ab_ref < 0) or np.any(self.e_ae_ref < 0):
            raise ValueError("reference errors must be >= 0")

    def __len__(self):
        return len(self.e_ab_ref)

    @property
    def mean_ab(self) -> float:
        return float(np.mean(self.e_ab_ref))

    @property
    def mean_ae(self) -> float:
        return float(np.mean(self.e_ae_ref))


def calibrate_threshold(refset: ReferenceSet, rule: str = "half-gap") -> float:
    """Decision threshold from a labelled reference set.

    ``half-gap`` (the default) is half the absolute difference of the two mean
    errors. ``midpoint`` is the average of the two means.
    """
    if len(refset) == 0:
        raise ValueError("reference set is empty")
    if rule == "half-gap":
        return 0.5 * abs(refset.mean_ab - refset.mean_ae)
    if rule == "midpoint":
        return 0.5 * (refset.mean_ab + refset.mean_ae)
    raise ValueError(f"unknown threshold rule {rule!r}")


@dataclass
class ErrorRecord:
    k: int
    e: float
    pcc: float
    verdict: Verdict
    truth: str = ""
    sync_ok: bool = True


@dataclass
class DetectorState:
    """Last accepted snapshot plus threshold; owned by one receive link."""

    e_th: float | None = None
    update_policy: UpdatePolicy = UpdatePolicy.ON_ACCEPT
    reference: ChannelSnapshot | None = None
    pcc_mode: str = "complex"

    def __post_init__(self):
        self.update_policy = UpdatePolicy(self.update_policy)
        if self.e_th is not None and not self.e_th >= 0:
            raise ValueError(f"e_th must be >= 0, got {self.e_th}")
        if self.pcc_mode not in PCC_MODES:
            raise ValueError(f"unknown pcc mode {self.pcc_mode!r}")

    def seed(self, snapshot: ChannelSnapshot) -> None:
        """Trust ``snapshot`` as the initial reference (bootstrap by fiat)."""
        self.reference = snapshot


def packet_error(state: DetectorState, snapshot: ChannelSnapshot) -> float:
    if state.reference is None:
        raise ValueError("detector has no reference snapshot")
    return mse(snapshot.h, state.reference.h)


def decide(state: DetectorState, snapshot: ChannelSnapshot, truth: str = "") -> ErrorRecord:
    if state.e_th is None:
        raise ValueError("detector threshold not calibrated")
    e = packet_error(state, snapshot)
    try:
        r = pcc(snapshot.h, state.reference.h, state.pcc_mode)
    except UndefinedMetricError:
        r = math.nan
    verdict = Verdict.ACCEPT if e < state.e_th else Verdict.DROP
    if verdict is Verdict.ACCEPT or state.update_policy is UpdatePolicy.ALWAYS:
        state.reference = snapshot
    return ErrorRecord(snapshot.timestamp_k, e, r, verdict, truth)


def run_trace(state: DetectorState, snapshots, sync_ok=None):
    """Feed a (K, M) stack of snapshots through ``state`` in order.

    Same decisions as calling :func:`decide` per row, computed by the active
    kernel. Rows with ``sync_ok`` False are dropped without metrics and never
    become the reference. Returns (errors, pccs, accepted).
    """
    if state.e_th is None:
        raise ValueError("detector threshold not calibrated")
    if state.reference is None:
        raise ValueError("detector has no reference snapshot")
    snaps = np.ascontiguousarray(snapshots, dtype=np.complex128)
    if sync_ok is None:
        sync_ok = np.ones(len(snaps), dtype=bool)
    sync_ok = np.asarray(sync_ok, dtype=bool)
    always = state.update_policy is UpdatePolicy.ALWAYS
    errors, pccs, accepted, _ = kernels.cpm_trace(
        snaps, sync_ok, state.reference.h, float(state.e_th), always,
        PCC_MODES[state.pcc_mode])
    updated = np.flatnonzero(sync_ok if always else accepted)
    if updated.size:
        k = int(updated[-1])
        state.reference = ChannelSnapshot(snaps[k], k)
    return errors, pccs, accepted
