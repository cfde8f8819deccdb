"""Shared domain types, unit handling, time grids and waveform containers.

Units: every quantity is stored in SI (rates in rad/s, times in s,
running-wave amplitudes in 1/sqrt(s)).  Rates quoted in the customary
"2pi x MHz" form are converted exactly once, by :func:`make_params` or
:meth:`SystemParams.from_paper_units`.

All integrals over waveforms use the trapezoidal rule on the uniform grid.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import CubicSpline

#: One "2pi x MHz" in rad/s.
TWO_PI_MHZ = 2.0 * math.pi * 1e6

NORM_SLACK = 1e-9


class CavityForgeError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(CavityForgeError, ValueError):
    """A physical parameter or container violates its invariants."""


class GridTooCoarseError(CavityForgeError, ValueError):
    """The sampling grid cannot resolve the fastest rate in the problem."""


class InfeasibleTargetError(CavityForgeError):
    """A requested photon cannot be produced or absorbed by the system."""


class WeakCouplingError(InfeasibleTargetError):
    """Impedance matching is impossible because C <= 1/2."""


@dataclass(frozen=True)
class SystemParams:
    g: float
    kappa: float
    gamma: float
    delta_L: float = 0.0
    delta_cav: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "delta_L", "delta_cav"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.g <= 0:
            raise InvalidParameterError(f"coupling g must be > 0, got {self.g}")
        if self.kappa <= 0:
            raise InvalidParameterError(f"cavity decay kappa must be > 0, got {self.kappa}")
        if self.gamma < 0:
            raise InvalidParameterError(f"atomic decay gamma must be >= 0, got {self.gamma}")

    @classmethod
    def from_paper_units(cls, g, kappa, gamma, delta_L=0.0, delta_cav=0.0):
        """Build from rates given in units of 2pi x MHz."""
        return cls(g * TWO_PI_MHZ, kappa * TWO_PI_MHZ, gamma * TWO_PI_MHZ,
                   delta_L * TWO_PI_MHZ, delta_cav * TWO_PI_MHZ)

    def to_paper_units(self) -> tuple[float, float, float, float, float]:
        return tuple(v / TWO_PI_MHZ for v in
                     (self.g, self.kappa, self.gamma, self.delta_L, self.delta_cav))

    @property
    def cooperativity(self) -> float:
        """C = g^2 / (2 kappa gamma); infinite for a lossless atom."""
        if self.gamma == 0:
            return math.inf
        return self.g ** 2 / (2.0 * self.kappa * self.gamma)

    @property
    def max_rate(self) -> float:
        return max(self.g, self.kappa, self.gamma, abs(self.delta_L), abs(self.delta_cav))

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)


def make_params(g_2piMHz, kappa_2piMHz, gamma_2piMHz, delta_L_2piMHz=0.0,
                delta_cav_2piMHz=0.0) -> SystemParams:
    """Convenience constructor taking the (g, kappa, gamma) triple in 2pi x MHz."""
    return SystemParams.from_paper_units(g_2piMHz, kappa_2piMHz, gamma_2piMHz,
                                         delta_L_2piMHz, delta_cav_2piMHz)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParameterError(f"a grid needs n >= 2 samples, got {self.n}")
        if not math.isfinite(self.t_start):
            raise InvalidParameterError("t_start must be finite")

    @classmethod
    def spanning(cls, t_start: float, t_end: float, n: int) -> "TimeGrid":
        """Grid of ``n`` samples with both endpoints included."""
        if t_end <= t_start:
            raise InvalidParameterError("t_end must exceed t_start")
        return cls(t_start, (t_end - t_start) / (n - 1), n)

    @property
    def t_end(self) -> float:
        return self.t_start + (self.n - 1) * self.dt

    @property
    def span(self) -> float:
        return (self.n - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    def matches(self, other: "TimeGrid") -> bool:
        """Same sample count, and start and step equal to 1e-12 relative.

        Tolerant so that grids rebuilt from decimal text still match.
        """
        scale = max(abs(self.t_start), abs(self.t_end), self.dt)
        return (self.n == other.n
                and math.isclose(self.dt, other.dt, rel_tol=1e-12, abs_tol=0.0)
                and abs(self.t_start - other.t_start) <= 1e-12 * scale)

    def require_same(self, other: "TimeGrid") -> None:
        if not self.matches(other):
            raise InvalidParameterError(f"grids differ: {self} vs {other}")


def support_runs(values: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of the non-zero runs of ``values``.

    Each run is widened by one sample on either side so that it includes the
    bounding zeros (where they exist); a waveform with finite support is
    smooth on each widened run.
    """
    nz = np.asarray(values) != 0
    if not nz.any():
        return []
    idx = np.flatnonzero(nz)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks], [idx[-1]]))
    last = len(nz) - 1
    return [(max(int(a) - 1, 0), min(int(b) + 1, last)) for a, b in zip(starts, stops)]


def derivative(values: np.ndarray, dt: float,
               runs: Optional[Sequence[tuple[int, int]]] = None) -> np.ndarray:
    """Second-order finite-difference derivative, evaluated run by run.

    Central differences inside each run, one-sided second-order stencils at
    the run edges; zero outside all runs.  Differencing never straddles a
    support edge, where the sampled function is typically only C^1.
    """
    values = np.asarray(values)
    if runs is None:
        runs = support_runs(values)
    out = np.zeros_like(values)
    for a, b in runs:
        seg = values[a:b + 1]
        if len(seg) >= 3:
            out[a:b + 1] = np.gradient(seg, dt, edge_order=2)
        elif len(seg) == 2:
            out[a:b + 1] = (seg[1] - seg[0]) / dt
    return out


@dataclass(frozen=True, eq=False)
class PhotonWaveform:
    """Running-wave probability amplitude psi(t) sampled on a grid (1/sqrt(s))."""

    grid: TimeGrid
    amp: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amp, dtype=complex)
        if amp.shape != (self.grid.n,):
            raise InvalidParameterError(
                f"expected {self.grid.n} samples, got shape {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise InvalidParameterError("waveform samples must be finite")
        amp.flags.writeable = False
        object.__setattr__(self, "amp", amp)
        norm = _trap_sq(amp, self.grid.dt)
        if norm > 1.0 + NORM_SLACK:
            raise InvalidParameterError(f"waveform norm {norm:.12g} exceeds 1")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.amp.imag == 0))

    def scaled(self, factor: complex) -> "PhotonWaveform":
        return PhotonWaveform(self.grid, self.amp * factor)

    def reversed(self) -> "PhotonWaveform":
        """psi(T - t) on the same grid."""
        return PhotonWaveform(self.grid, self.amp[::-1].copy())

    def __eq__(self, other):
        if not isinstance(other, PhotonWaveform):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.amp, other.amp)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PulseEnvelope:
    """Real Rabi frequency Omega(t) of the control laser (rad/s).

    ``segments`` lists inclusive index ranges on which the pulse is smooth;
    the pulse is zero outside them.  When omitted they are inferred from the
    non-zero runs of ``omega`` widened by one sample (continuous switch-on).
    Synthesised pulses that jump at a photon's support edge pass explicit
    segments so interpolation does not smear the jump.
    """

    grid: TimeGrid
    omega: np.ndarray
    segments: Optional[tuple[tuple[int, int], ...]] = None

    def __post_init__(self):
        om = np.array(self.omega, dtype=float)
        if om.shape != (self.grid.n,):
            raise InvalidParameterError(
                f"expected {self.grid.n} samples, got shape {om.shape}")
        if not np.all(np.isfinite(om)):
            raise InvalidParameterError("Rabi frequency must be finite everywhere")
        om.flags.writeable = False
        object.__setattr__(self, "omega", om)
        if self.segments is None:
            segs = tuple(support_runs(om))
        else:
            segs = tuple((int(a), int(b)) for a, b in self.segments)
            for a, b in segs:
                if not (0 <= a <= b < self.grid.n):
                    raise InvalidParameterError(f"segment {(a, b)} outside grid")
        object.__setattr__(self, "segments", segs)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.omega)))

    def area_sq(self) -> float:
        """Integral of Omega^2 dt."""
        return float(trapezoid(self.omega ** 2, dx=self.grid.dt))

    def shifted(self, k: int) -> "PulseEnvelope":
        """Delay the pulse by ``k`` samples (content shifted off the end is lost)."""
        om = np.zeros_like(self.omega)
        if k >= 0:
            om[k:] = self.omega[:self.grid.n - k]
        else:
            om[:k] = self.omega[-k:]
        segs = tuple((a + k, b + k) for a, b in self.segments
                     if 0 <= a + k and b + k < self.grid.n)
        return PulseEnvelope(self.grid, om, segs)


@dataclass(frozen=True, eq=False)
class AmplitudeTrajectory:
    """Single-excitation amplitudes of |e,0>, |x,0>, |g,1> plus the output field."""

    grid: TimeGrid
    c_e: np.ndarray
    c_x: np.ndarray
    c_g: np.ndarray
    phi_out: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def populations(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.abs(self.c_e) ** 2, np.abs(self.c_x) ** 2, np.abs(self.c_g) ** 2

    @property
    def total_population(self) -> np.ndarray:
        pe, px, pg = self.populations
        return pe + px + pg


def _trap_sq(amp: np.ndarray, dt: float) -> float:
    return float(trapezoid(np.abs(amp) ** 2, dx=dt))


def integrate(values: np.ndarray, dt: float) -> float:
    """Trapezoidal integral of sampled values."""
    return float(trapezoid(values, dx=dt))


def cumulative(values: np.ndarray, dt: float) -> np.ndarray:
    """Running trapezoidal integral, starting at 0 on the first sample."""
    return cumulative_trapezoid(values, dx=dt, initial=0.0)


def flux_cumulative(values: np.ndarray, dt: float) -> np.ndarray:
    """Running integral through a not-a-knot cubic spline (fourth order in dt).

    Used for fluxes of integrated trajectories (emission, loss, reflection),
    whose end points are generally not smooth zeros.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 4:
        return cumulative(values, dt)
    t = np.arange(len(values)) * dt
    return CubicSpline(t, values).antiderivative()(t)


def flux_integral(values: np.ndarray, dt: float) -> float:
    return float(flux_cumulative(values, dt)[-1])


def l2_norm(w: PhotonWaveform) -> float:
    """Photon probability, the integral of |psi|^2 dt."""
    return _trap_sq(w.amp, w.grid.dt)


def sin2_photon(grid: TimeGrid, duration: float, t0: Optional[float] = None,
                norm: float = 1.0, phase: float = 0.0) -> PhotonWaveform:
    """psi(t) proportional to sin^2(pi (t - t0)/duration) on [t0, t0 + duration].

    The samples are rescaled so that the trapezoidal norm equals ``norm``
    exactly.  ``t0`` defaults to the start of the grid.
    """
    if t0 is None:
        t0 = grid.t_start
    if duration <= 0:
        raise InvalidParameterError("photon duration must be positive")
    if t0 < grid.t_start - 1e-15 or t0 + duration > grid.t_end * (1 + 1e-12) + 1e-18:
        raise InvalidParameterError(
            f"photon [{t0:g}, {t0 + duration:g}] s does not fit the grid "
            f"[{grid.t_start:g}, {grid.t_end:g}] s")
    if not 0 <= norm <= 1 + NORM_SLACK:
        raise InvalidParameterError("photon norm must lie in [0, 1]")
    t = grid.times
    s = (t - t0) / duration
    # open interval with a small tolerance: the edge samples must be exact zeros
    inside = (s > 1e-12) & (s < 1 - 1e-12)
    amp = np.where(inside, np.sin(np.pi * np.clip(s, 0, 1)) ** 2, 0.0)
    total = _trap_sq(amp, grid.dt)
    if total == 0:
        raise InvalidParameterError("photon duration is shorter than one grid step")
    amp = amp * math.sqrt(norm / total) * np.exp(1j * phase)
    return PhotonWaveform(grid, amp)


# -- serialisation ---------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def waveform_to_csv(w: PhotonWaveform) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "re", "im"])
    for t, a in zip(w.times, w.amp):
        writer.writerow([_fmt(t), _fmt(a.real), _fmt(a.imag)])
    return buf.getvalue()


def waveform_from_csv(text: str) -> PhotonWaveform:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "re", "im"]:
        raise InvalidParameterError("waveform CSV must start with header t,re,im")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if data.shape[0] < 2:
        raise InvalidParameterError("waveform CSV needs at least two samples")
    t = data[:, 0]
    dts = np.diff(t)
    dt = float(dts.mean())
    if not np.allclose(dts, dt, rtol=1e-9, atol=0):
        raise InvalidParameterError("waveform CSV samples are not uniformly spaced")
    grid = TimeGrid(float(t[0]), dt, len(t))
    return PhotonWaveform(grid, data[:, 1] + 1j * data[:, 2])


def waveform_to_json(w: PhotonWaveform) -> str:
    doc = {
        "grid": {"t_start": w.grid.t_start, "dt": w.grid.dt, "n": w.grid.n},
        "re": [float(v) for v in w.amp.real],
        "im": [float(v) for v in w.amp.imag],
    }
    return json.dumps(doc)


def waveform_from_json(text: str) -> PhotonWaveform:
    doc = json.loads(text)
    g = doc["grid"]
    grid = TimeGrid(float(g["t_start"]), float(g["dt"]), int(g["n"]))
    return PhotonWaveform(grid, np.asarray(doc["re"], float) + 1j * np.asarray(doc["im"], float))


def pulse_to_csv(p: PulseEnvelope) -> str:
    lines = ["t,omega"]
    lines += [f"{_fmt(t)},{_fmt(o)}" for t, o in zip(p.times, p.omega)]
    return "\n".join(lines) + "\n"


def pulse_from_csv(text: str) -> PulseEnvelope:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "omega"]:
        raise InvalidParameterError("pulse CSV must start with header t,omega")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    t = data[:, 0]
    dt = float(np.diff(t).mean())
    return PulseEnvelope(TimeGrid(float(t[0]), dt, len(t)), data[:, 1])


def write_table(columns: dict[str, Iterable[float]]) -> str:
    """CSV text with fixed column order and 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(list(c) if not isinstance(c, np.ndarray) else c) for c in columns.values()]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"
