"""Closed-form dressed-state spectra and cavity figures of merit.

Eigenfrequencies are reported relative to the cavity ladder offset
omega_cav (n + 1/2) unless ``omega_cav`` is given explicitly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .qcore import InvalidParameterError, SystemParams

SPEED_OF_LIGHT = 299_792_458.0

#: a >> b is read as a >= MUCH_GREATER * b.  Heuristic; chosen as the largest
#: round value that still labels both fig3a/fig3b preset parameter sets as intended
#: (strong coupling and bad cavity respectively).
MUCH_GREATER = 1.5


@dataclass(frozen=True)
class CavityGeometry:
    length: float
    reflectivity: float
    wavelength: float = 780e-9
    mode_volume: float = float("nan")
    quality_factor: float = float("nan")

    def __post_init__(self):
        if not 0 < self.reflectivity < 1:
            raise InvalidParameterError(f"reflectivity must lie in (0, 1), got {self.reflectivity}")
        if self.length <= 0:
            raise InvalidParameterError(f"cavity length must be positive, got {self.length}")


@dataclass(frozen=True)
class DressedDoublet:
    n: int
    omega_plus: float
    omega_minus: float
    splitting: float


@dataclass(frozen=True)
class DressedTriplet:
    n: int
    omega_0: float
    omega_plus: float
    omega_minus: float
    theta: float
    phi: float
    dark_state: np.ndarray
    bright_plus: np.ndarray
    bright_minus: np.ndarray
    splitting: float

    @property
    def eigenvectors(self) -> np.ndarray:
        """Columns (phi0, phi+, phi-) over the basis (|e,n-1>, |x,n-1>, |g,n>)."""
        return np.column_stack([self.dark_state, self.bright_plus, self.bright_minus])

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.omega_0, self.omega_plus, self.omega_minus])


class Regime(enum.Enum):
    STRONG_COUPLING = "strong-coupling"
    BAD_CAVITY = "bad-cavity"
    NEITHER = "neither"


def finesse(R: float) -> float:
    if not 0 < R < 1:
        raise InvalidParameterError(f"reflectivity must lie in (0, 1), got {R}")
    return math.pi * math.sqrt(R) / (1.0 - R)


def kappa_from_finesse(length: float, F: float) -> float:
    """Field decay rate from 2 kappa = free spectral range / finesse."""
    fsr = 2.0 * math.pi * SPEED_OF_LIGHT / (2.0 * length)
    return fsr / F / 2.0


def kappa_from_geometry(geom: CavityGeometry) -> float:
    return kappa_from_finesse(geom.length, finesse(geom.reflectivity))


def doublet_frequencies(g: float, delta_cav: float, n: int, omega_cav: float = 0.0) -> DressedDoublet:
    """Jaynes-Cummings doublet for raw rates (g may be zero here)."""
    if n < 1:
        raise InvalidParameterError("the n = 0 ground state |g,0> never splits; need n >= 1")
    split = math.sqrt(4 * n * g * g + delta_cav * delta_cav)
    base = omega_cav * (n + 0.5)
    return DressedDoublet(n, base + 0.5 * (delta_cav + split),
                          base + 0.5 * (delta_cav - split), split)


def doublet(params: SystemParams, n: int, omega_cav: float = 0.0) -> DressedDoublet:
    return doublet_frequencies(params.g, params.delta_cav, n, omega_cav)


def triplet_hamiltonian(g: float, omega_rabi: float, delta: float, n: int) -> np.ndarray:
    """Raman-resonant n-manifold block over (|e,n-1>, |x,n-1>, |g,n>), in rad/s.

    The common detuning sits on the excited atomic state, which places the
    dark state at zero and the bright pair at (delta +- sqrt(...))/2.
    """
    gn = g * math.sqrt(n)
    return np.array([[0.0, -omega_rabi / 2, 0.0],
                     [-omega_rabi / 2, delta, -gn],
                     [0.0, -gn, 0.0]])


def triplet(params: SystemParams, n: int, omega_rabi: float, omega_cav: float = 0.0) -> DressedTriplet:
    if n < 1:
        raise InvalidParameterError("triplets exist for n >= 1 only")
    if not math.isclose(params.delta_L, params.delta_cav, rel_tol=1e-12, abs_tol=1e-9):
        raise InvalidParameterError("triplet formulas need Raman resonance, delta_L == delta_cav")
    delta = params.delta_cav
    g, om = params.g, float(omega_rabi)
    w = math.sqrt(4 * n * g * g + om * om)
    s = math.sqrt(w * w + delta * delta)
    theta = math.atan2(om, 2 * g * math.sqrt(n))
    phi = math.atan2(w, s - delta)
    ct, st, cp, sp = math.cos(theta), math.sin(theta), math.cos(phi), math.sin(phi)
    dark = np.array([ct, 0.0, -st])
    plus = np.array([cp * st, -sp, cp * ct])
    minus = np.array([sp * st, cp, sp * ct])
    base = omega_cav * (n + 0.5)
    return DressedTriplet(
        n=n, omega_0=base, omega_plus=base + 0.5 * (delta + s),
        omega_minus=base + 0.5 * (delta - s), theta=theta, phi=phi,
        dark_state=dark, bright_plus=plus, bright_minus=minus, splitting=s)


def purcell_factor(geom: CavityGeometry) -> float:
    """Geometric Purcell factor 3 Q lambda^3 / (4 pi^2 V)."""
    return 3.0 * geom.quality_factor * geom.wavelength ** 3 / (4.0 * math.pi ** 2 * geom.mode_volume)


def purcell_factor_rates(params: SystemParams) -> float:
    """Rate form g^2 / (kappa gamma), equal to twice the cooperativity."""
    if params.gamma == 0:
        return math.inf
    return params.g ** 2 / (params.kappa * params.gamma)


def cooperativity(params: SystemParams) -> float:
    return params.cooperativity


def beta_factor(f: float) -> float:
    """Fraction of spontaneous emission going into the cavity mode."""
    if math.isinf(f):
        return 1.0
    return f / (f + 1.0)


def emission_limit(params: SystemParams) -> float:
    """Best-case photon emission (and storage) probability 2C/(2C+1)."""
    c = params.cooperativity
    if math.isinf(c):
        return 1.0
    return 2 * c / (2 * c + 1)


def _much_greater(a: float, b: float) -> bool:
    return a >= MUCH_GREATER * b


def classify_regime(params: SystemParams) -> Regime:
    g, k, gam = params.g, params.kappa, params.gamma
    if _much_greater(g, max(k, gam)):
        return Regime.STRONG_COUPLING
    if _much_greater(k, g * g / k) and _much_greater(g * g / k, gam):
        return Regime.BAD_CAVITY
    return Regime.NEITHER
