"""Netlist-to-MPC toolkit for phase-shift-modulated converters."""

from ._dtmpc import (
    ConverterModel,
    Error,
    Harness,
    InputError,
    MissingArtifactError,
    NumericalError,
    PhaseShiftCommand,
    Scheme,
    TopologyError,
    config_json,
    default_dab_netlist,
    event_times,
    optimize_sso,
)

__all__ = [
    "ConverterModel",
    "Error",
    "Harness",
    "InputError",
    "MissingArtifactError",
    "NumericalError",
    "PhaseShiftCommand",
    "Scheme",
    "TopologyError",
    "config_json",
    "default_dab_netlist",
    "event_times",
    "optimize_sso",
]
