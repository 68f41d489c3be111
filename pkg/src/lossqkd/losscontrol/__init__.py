"""Loss control: lock-in transmittometry and reflectogram analysis."""
from .l1filter import ConvergenceError, TrendFit, l1_trend_filter, solve_trend, trend_objective
from .otdr import (
    LossEvent,
    OTDRTrace,
    TraceParseError,
    localize_losses,
    read_events_json,
    spatial_resolution,
    synthesize_otdr,
    unexplained_leaks,
    write_events_json,
)
from .splice import splice_leak_budget
from .transmittometry import (
    LossSeries,
    ProbeError,
    TransmitProbe,
    alarm_onsets,
    detect_intervention,
    exceedance_probability,
    lockin_amplitude,
    loss_estimate,
    simulate_loss_series,
)

__all__ = [
    "ConvergenceError",
    "LossEvent",
    "LossSeries",
    "OTDRTrace",
    "ProbeError",
    "TraceParseError",
    "TransmitProbe",
    "TrendFit",
    "alarm_onsets",
    "detect_intervention",
    "exceedance_probability",
    "l1_trend_filter",
    "localize_losses",
    "lockin_amplitude",
    "loss_estimate",
    "read_events_json",
    "simulate_loss_series",
    "solve_trend",
    "spatial_resolution",
    "splice_leak_budget",
    "synthesize_otdr",
    "trend_objective",
    "unexplained_leaks",
    "write_events_json",
]
