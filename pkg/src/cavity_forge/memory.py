"""Impedance-matched absorption of a single photon by the atom-cavity system.

The cavity is driven through its coupling mirror by a running-wave photon
phi_in(t); the reflected field is phi_out = sqrt(2 kappa) c_g - phi_in
(mirror reflectivity taken to 1 in the continuum limit).  A control pulse
that keeps phi_out = 0 at all times maps the photon onto |e,0>.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .qcore import (
    AmplitudeTrajectory,
    InfeasibleTargetError,
    InvalidParameterError,
    PhotonWaveform,
    PulseEnvelope,
    SystemParams,
    WeakCouplingError,
    cumulative,
    derivative,
    flux_integral,
    l2_norm,
    support_runs,
)
from . import dynamics, shaper

log = logging.getLogger(__name__)

DEFAULT_C0_SQ = 0.005


@dataclass(frozen=True, eq=False)
class AbsorptionProblem:
    params: SystemParams
    phi_in: PhotonWaveform
    c0_sq: float = DEFAULT_C0_SQ

    def __post_init__(self):
        if not 0 <= self.c0_sq < 1:
            raise InvalidParameterError(f"c0_sq must lie in [0, 1), got {self.c0_sq}")
        amp = self.phi_in.amp
        if amp[0] != 0:
            raise InvalidParameterError("incoming photon must start at zero amplitude")
        # smooth start: the first derivative vanishes at the first support edge
        runs = support_runs(amp)
        if runs:
            a = runs[0][0]
            d = derivative(amp, self.phi_in.grid.dt, runs)
            scale = np.max(np.abs(d)) or 1.0
            if abs(d[a]) > 1e-2 * scale:
                raise InvalidParameterError("incoming photon must start smoothly (zero slope)")


@dataclass(frozen=True, eq=False)
class AbsorptionResult:
    traj: AmplitudeTrajectory
    p_reflected: float
    p_stored: float
    p_spont: float
    p_in: float
    c0_sq: float

    @property
    def residual(self) -> float:
        return float(abs(self.traj.c_x[-1]) ** 2 + abs(self.traj.c_g[-1]) ** 2)

    @property
    def bookkeeping_error(self) -> float:
        """p_reflected + p_stored + p_spont + residual - (p_in + c0_sq)."""
        return (self.p_reflected + self.p_stored + self.p_spont + self.residual
                - self.p_in - self.c0_sq)


@dataclass(frozen=True, eq=False)
class MatchedAmplitudes:
    c_e: np.ndarray
    c_x: np.ndarray
    c_g: np.ndarray
    pulse: PulseEnvelope
    clipped: np.ndarray


class _EmptyCavity:
    """Rate bundle for a cavity with no atom (g = 0); bypasses SystemParams checks."""

    def __init__(self, kappa: float):
        self.g = 0.0
        self.kappa = kappa
        self.gamma = 0.0
        self.delta_L = 0.0
        self.delta_cav = 0.0
        self.max_rate = kappa


def inout_step_matrix(kappa: float) -> np.ndarray:
    """Map (c_cav, phi_in) to (dc_cav/dt, phi_out) for a lossless coupling mirror."""
    if kappa <= 0:
        raise InvalidParameterError("kappa must be positive")
    s = math.sqrt(2 * kappa)
    return np.array([[-kappa, s], [s, -1.0]])


def empty_cavity_response(kappa: float, phi_in: PhotonWaveform, c_cav0: complex = 0.0) -> AmplitudeTrajectory:
    """Drive an empty cavity; c_g holds the intra-cavity amplitude."""
    return dynamics.propagate(_EmptyCavity(kappa), phi_in.grid, phi_in=phi_in,
                              initial=(0.0, 0.0, c_cav0))


def matched_amplitudes(problem: AbsorptionProblem,
                       epsilon_guard: float = shaper.EPSILON_GUARD,
                       d_phi: Optional[np.ndarray] = None,
                       dd_phi: Optional[np.ndarray] = None) -> MatchedAmplitudes:
    """Amplitudes and control pulse that keep phi_out identically zero."""
    params, photon = problem.params, problem.phi_in
    if params.gamma > 0 and params.cooperativity <= 0.5:
        raise WeakCouplingError(
            f"impedance matching needs C > 1/2; C = {params.cooperativity:.4g}")
    if problem.c0_sq <= 0:
        raise InfeasibleTargetError(
            "a finite-support photon needs a small initial |e,0> population (c0_sq > 0)")
    grid = photon.grid
    dt = grid.dt
    k, g, gam = params.kappa, params.g, params.gamma
    amp = photon.amp
    runs = support_runs(amp)
    phase = np.zeros(grid.n)
    if np.any(amp.imag != 0):
        phase = shaper._run_phases(photon, runs)
    real = (amp * np.exp(-1j * phase)).real
    if d_phi is None:
        dphi = derivative(real, dt, runs)
    else:
        dphi = np.asarray(d_phi * np.exp(-1j * phase)).real
    if dd_phi is None:
        ddphi = shaper.second_derivative(real, dt, runs)
    else:
        ddphi = np.asarray(dd_phi * np.exp(-1j * phase)).real
    s2k = math.sqrt(2 * k)
    cg = real / s2k
    y = (dphi / s2k - k * cg) / g
    dy = (ddphi / s2k - k * dphi / s2k) / g
    radicand = (problem.c0_sq - cg ** 2 - y ** 2
                + cumulative(real ** 2 - 2 * gam * y ** 2, dt))
    if np.min(radicand) < -shaper.RADICAND_TOL:
        i = int(np.argmin(radicand))
        msg = (f"impedance matching fails: |c_e|^2 = {radicand[i]:.3g} at "
               f"t = {grid.times[i]:.6g} s")
        if params.gamma > 0 and params.cooperativity <= 0.5:
            raise WeakCouplingError(msg)
        raise InfeasibleTargetError(msg + "; increase c0_sq or lengthen the photon")
    ce = np.sqrt(np.clip(radicand, 0.0, None))
    numer = 2.0 * (dy + gam * y + g * cg)

    omega = np.zeros(grid.n)
    clipped = np.zeros(grid.n, dtype=bool)
    for a, b in runs:
        last = 0.0
        for i in range(a, b + 1):
            if ce[i] > epsilon_guard:
                last = numer[i] / ce[i]
            else:
                clipped[i] = True
            omega[i] = last
    rot = np.exp(1j * phase)
    return MatchedAmplitudes(ce.astype(complex), 1j * y * rot, cg * rot,
                             PulseEnvelope(grid, omega, tuple(runs)), clipped)


def synthesize_absorption_pulse(problem: AbsorptionProblem, **kw) -> PulseEnvelope:
    """Control pulse for complete absorption of ``problem.phi_in``."""
    runs = support_runs(problem.phi_in.amp)
    if runs:
        a, b = runs[0][0], runs[-1][1]
        duration = (b - a) * problem.phi_in.grid.dt
        if duration < 1.0 / problem.params.kappa:
            warnings.warn("photon is shorter than the cavity build-up time 1/kappa; "
                          "matching relies on strong driving", RuntimeWarning, stacklevel=2)
    return matched_amplitudes(problem, **kw).pulse


def run_absorption(problem: AbsorptionProblem, pulse: Optional[PulseEnvelope] = None,
                   initial_c_e: Optional[complex] = None, **kw) -> AbsorptionResult:
    """Integrate the driven system; ``pulse=None`` means no control laser.

    The atom starts in |e,0> with amplitude sqrt(c0_sq) unless
    ``initial_c_e`` overrides it.
    """
    params, photon = problem.params, problem.phi_in
    c0 = math.sqrt(problem.c0_sq) if initial_c_e is None else initial_c_e
    traj = dynamics.propagate(params, photon.grid, pulse=pulse, phi_in=photon,
                              initial=(c0, 0.0, 0.0), **kw)
    dt = photon.grid.dt
    return AbsorptionResult(
        traj=traj,
        p_reflected=flux_integral(np.abs(traj.phi_out) ** 2, dt),
        p_stored=float(abs(traj.c_e[-1]) ** 2),
        p_spont=flux_integral(2 * params.gamma * np.abs(traj.c_x) ** 2, dt),
        p_in=l2_norm(photon),
        c0_sq=float(abs(c0) ** 2),
    )


@dataclass(frozen=True)
class SweepRow:
    C: float
    p_stored: float
    p_reflected: float
    optimum: float
    feasible: bool
    message: str = ""


def _threads() -> int:
    env = os.environ.get("CAVITY_FORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidParameterError(f"CAVITY_FORGE_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def storage_row(kappa: float, gamma: float, photon: PhotonWaveform, C: float,
                c0_sq: float = DEFAULT_C0_SQ) -> SweepRow:
    optimum = 2 * C / (2 * C + 1)
    if C <= 0.5:
        return SweepRow(C, math.nan, math.nan, optimum, False,
                        f"impedance matching needs C > 1/2; C = {C:.4g}")
    params = SystemParams(math.sqrt(2 * C * kappa * gamma), kappa, gamma)
    problem = AbsorptionProblem(params, photon, c0_sq)
    try:
        pulse = synthesize_absorption_pulse(problem)
    except InfeasibleTargetError as exc:
        return SweepRow(C, math.nan, math.nan, optimum, False, str(exc))
    res = run_absorption(problem, pulse)
    return SweepRow(C, res.p_stored, res.p_reflected, optimum, True)


def efficiency_sweep(kappa: float, gamma: float, photon: PhotonWaveform,
                     C_values: Sequence[float], c0_sq: float = DEFAULT_C0_SQ,
                     threads: Optional[int] = None) -> list[SweepRow]:
    """Storage efficiency and residual reflection versus cooperativity.

    g is set to sqrt(2 C kappa gamma) per row.  Rows with C <= 1/2 are
    returned as infeasible instead of raising.
    """
    if gamma <= 0:
        raise InvalidParameterError("a cooperativity sweep needs gamma > 0")
    n = threads or _threads()
    args = [(kappa, gamma, photon, float(C), c0_sq) for C in C_values]
    if n == 1 or len(args) == 1:
        return [storage_row(*a) for a in args]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda a: storage_row(*a), args))


def cooperativity_grid(c_min: float = 0.6, c_max: float = 50.0, n: int = 16) -> np.ndarray:
    """Log-spaced cooperativities for efficiency sweeps."""
    return np.geomspace(c_min, c_max, n)


@dataclass(frozen=True, eq=False)
class TimeReversal:
    max_deviation: float
    omega_emit: PulseEnvelope
    omega_abs: PulseEnvelope
    c0_sq: float


def time_reversal_check(params: SystemParams, target_photon: PhotonWaveform) -> TimeReversal:
    """Compare the absorption pulse with the mirror image of the emission pulse.

    The emitter is shaped to produce ``target_photon``; its leftover |e,0>
    population becomes the absorber's initial population, and the absorber
    receives the time-reversed photon.  Deviation is the largest pointwise
    relative difference over samples where neither pulse is guard-clipped.
    """
    emit = shaper.synthesize_emission_pulse(params, target_photon)
    residual = float(abs(emit.c_e[-1]) ** 2)
    if residual <= 0:
        raise InfeasibleTargetError(
            "emission leaves no |e,0> population; use a target with norm below 1")
    reversed_photon = target_photon.reversed().scaled(1.0)
    if params.gamma > 0 and params.cooperativity <= 0.5:
        raise WeakCouplingError("impedance matching needs C > 1/2")
    absorb = matched_amplitudes(AbsorptionProblem(params, _conjugate(reversed_photon), residual))
    om_e_rev = emit.pulse.omega[::-1]
    om_a = absorb.pulse.omega
    ok = (om_e_rev != 0) & ~emit.clipped[::-1] & ~absorb.clipped
    dev = np.abs(om_a[ok] - om_e_rev[ok]) / np.abs(om_e_rev[ok])
    grid = target_photon.grid
    rev_segments = tuple((grid.n - 1 - b, grid.n - 1 - a) for a, b in emit.pulse.segments)
    return TimeReversal(float(dev.max()) if dev.size else 0.0,
                        PulseEnvelope(grid, om_e_rev, rev_segments), absorb.pulse, residual)


def _conjugate(w: PhotonWaveform) -> PhotonWaveform:
    return PhotonWaveform(w.grid, np.conj(w.amp))
