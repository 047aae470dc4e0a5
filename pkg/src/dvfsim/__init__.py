"""Discrete-event energy simulator for a DVFS-capable 802.15.4 IoT node."""

from .powermodel import CalibrationProfile, ClockConfig, ClockSource, SourceKind, default_profile
from .simcore import Scenario, run

__all__ = ["CalibrationProfile", "ClockConfig", "ClockSource", "SourceKind", "Scenario", "default_profile", "run"]
__version__ = "0.1.0"
