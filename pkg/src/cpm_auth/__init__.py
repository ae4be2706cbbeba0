"""Channel Profile Monitoring (CPM) packet authentication.

Simulates Bob->Alice and Eve->Alice OFDM links, estimates a channel snapshot
per packet and accepts a packet only when its snapshot stays close to the
last accepted one.
"""
from ._backend import BACKEND
from .channel import (
    ChannelRealization,
    FadingLink,
    SpatialGeometry,
    apply_channel,
    bessel_j0,
    make_linked_pair,
    spatial_correlation,
)
from .config import AttackSchedule, ConfigError, ScenarioConfig, parse_config
from .detector import (
    DetectorState,
    ErrorRecord,
    ReferenceSet,
    UndefinedMetricError,
    Verdict,
    calibrate_threshold,
    decide,
    mse,
    packet_error,
    pcc,
)
from .harness import RunReport, mic_overhead, run_calibration, run_scenario, sweep
from .ofdm import (
    ChannelSnapshot,
    OfdmFrame,
    OfdmNumerology,
    SyncError,
    estimate_cfo,
    estimate_channel,
    gen_sc_preamble,
    modulate_frame,
    sc_timing_metric,
)

__version__ = "0.1.0"
