"""Single atom in a high-finesse cavity: spectra, photon emission and shaping,
impedance-matched absorption, and two-photon interference."""

from .qcore import (
    AmplitudeTrajectory,
    CavityForgeError,
    GridTooCoarseError,
    InfeasibleTargetError,
    InvalidParameterError,
    PhotonWaveform,
    PulseEnvelope,
    SystemParams,
    TimeGrid,
    WeakCouplingError,
    l2_norm,
    make_params,
    sin2_photon,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeTrajectory", "CavityForgeError", "GridTooCoarseError", "InfeasibleTargetError",
    "InvalidParameterError", "PhotonWaveform", "PulseEnvelope", "SystemParams", "TimeGrid",
    "WeakCouplingError", "l2_norm", "make_params", "sin2_photon",
]
