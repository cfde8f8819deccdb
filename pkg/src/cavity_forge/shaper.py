"""Driving pulses for photons of prescribed shape, plus round-trip validation.

Given a target running-wave amplitude psi(t), the cavity amplitude is fixed
to c_g = psi / sqrt(2 kappa), the excited-state amplitude follows from the
cavity equation of motion, the ground-state population from excitation
continuity, and the Rabi frequency from the excited-state equation.  See
:mod:`cavity_forge.dynamics` for the sign convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .qcore import (
    InfeasibleTargetError,
    InvalidParameterError,
    PhotonWaveform,
    PulseEnvelope,
    SystemParams,
    TimeGrid,
    cumulative,
    derivative,
    integrate,
    l2_norm,
    support_runs,
)
from . import dressed, dynamics

EPSILON_GUARD = 1e-3
RADICAND_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ShapingSolution:
    target: PhotonWaveform
    pulse: PulseEnvelope
    c_e: np.ndarray
    c_x: np.ndarray
    c_g: np.ndarray
    clipped: np.ndarray
    drive_phase: np.ndarray

    @property
    def n_clipped(self) -> int:
        return int(np.count_nonzero(self.clipped))


def second_derivative(values: np.ndarray, dt: float,
                      runs: Optional[Sequence[tuple[int, int]]] = None) -> np.ndarray:
    """Three-point second difference per run; one-sided second-order at run edges."""
    values = np.asarray(values)
    if runs is None:
        runs = support_runs(values)
    out = np.zeros_like(values)
    for a, b in runs:
        u = values[a:b + 1]
        if len(u) < 4:
            continue
        d = np.empty_like(u)
        d[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
        d[0] = 2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]
        d[-1] = 2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]
        out[a:b + 1] = d / dt ** 2
    return out


def _run_phases(target: PhotonWaveform, runs) -> np.ndarray:
    """Per-sample constant phase of each support run; rejects chirped targets."""
    amp = target.amp
    phase = np.zeros(target.grid.n)
    scale = np.max(np.abs(amp)) if amp.size else 0.0
    for a, b in runs:
        seg = amp[a:b + 1]
        ph = float(np.angle(seg[np.argmax(np.abs(seg))]))
        if np.max(np.abs((seg * np.exp(-1j * ph)).imag)) > 1e-9 * scale:
            raise InvalidParameterError(
                "target phase must be constant on each support run "
                "(phase jumps are allowed only between separated time bins)")
        phase[a:b + 1] = ph
    return phase


def max_feasible_norm(params: SystemParams, target: PhotonWaveform) -> float:
    """Largest photon probability the target shape can be emitted with.

    The depletion term of the continuity balance scales with the square of
    the target amplitude, so the answer is 1 / max_t Q(t) for the unit-norm
    shape.  Equal to 1 in the lossless case.
    """
    unit = target.scaled(1 / math.sqrt(l2_norm(target)))
    q = _depletion(params, unit.amp, target.grid.dt)[0]
    return float(1.0 / np.max(q))


def _depletion(params, amp, dt, d_amp=None, dd_amp=None):
    runs = support_runs(amp)
    k, g, gam = params.kappa, params.g, params.gamma
    # rotate each run onto the real axis; the phase returns on the laser
    phase = np.zeros(len(amp))
    if np.iscomplexobj(amp) and np.any(amp.imag != 0):
        phase = _run_phases(PhotonWaveform(TimeGrid(0.0, dt, len(amp)), amp), runs)
    real = (amp * np.exp(-1j * phase)).real
    cg = real / math.sqrt(2 * k)
    if d_amp is None:
        dcg = derivative(cg, dt, runs)
    else:
        dcg = np.asarray(d_amp * np.exp(-1j * phase)).real / math.sqrt(2 * k)
    if dd_amp is None:
        ddcg = second_derivative(cg, dt, runs)
    else:
        ddcg = np.asarray(dd_amp * np.exp(-1j * phase)).real / math.sqrt(2 * k)
    # c_x = i y with y real
    y = (dcg + k * cg) / g
    dy = (ddcg + k * dcg) / g
    q = y ** 2 + cg ** 2 + cumulative(2 * gam * y ** 2 + 2 * k * cg ** 2, dt)
    numer = 2.0 * (dy + gam * y + g * cg)
    return q, cg, y, numer, phase, runs


def synthesize_emission_pulse(params: SystemParams, target: PhotonWaveform,
                              epsilon_guard: float = EPSILON_GUARD,
                              d_target: Optional[np.ndarray] = None,
                              dd_target: Optional[np.ndarray] = None) -> ShapingSolution:
    """Rabi frequency that makes the cavity emit ``target`` from |e,0>.

    ``d_target``/``dd_target`` optionally supply analytic first and second
    time derivatives of psi; otherwise second-order finite differences are
    used on each support run.  Where |c_e| drops to ``epsilon_guard`` the
    pulse is frozen at its last valid value and the sample is flagged.
    """
    grid = target.grid
    amp = target.amp
    if amp[0] != 0 or amp[-1] != 0:
        raise InvalidParameterError("target must vanish at both ends of the grid")
    norm = l2_norm(target)
    if params.gamma > 0 and norm > dressed.emission_limit(params) + 1e-6:
        raise InfeasibleTargetError(
            f"target norm {norm:.6f} exceeds the emission limit 2C/(2C+1) = "
            f"{dressed.emission_limit(params):.6f}")
    q, cg, y, numer, phase, runs = _depletion(params, amp, grid.dt, d_target, dd_target)
    radicand = 1.0 - q
    if np.min(radicand) < -RADICAND_TOL:
        i = int(np.argmin(radicand))
        raise InfeasibleTargetError(
            f"target needs more excitation than available: |c_e|^2 = {radicand[i]:.3g} "
            f"at t = {grid.times[i]:.6g} s (max feasible norm {1 / np.max(q) * norm:.6f})")
    ce = np.sqrt(np.clip(radicand, 0.0, None))

    in_support = np.zeros(grid.n, dtype=bool)
    for a, b in runs:
        in_support[a:b + 1] = True
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
    pulse = PulseEnvelope(grid, omega, tuple(runs))
    rot = np.exp(1j * phase)
    return ShapingSolution(target=target, pulse=pulse, c_e=ce.astype(complex),
                           c_x=1j * y * rot, c_g=cg * rot, clipped=clipped,
                           drive_phase=np.where(in_support, phase, 0.0))


def forward_validate(params: SystemParams, solution: ShapingSolution, **kw) -> tuple[float, float]:
    """Integrate the synthesised pulse and compare emitted and target intensity.

    Returns (normalised L2 distance between achieved and target |amplitude|,
    achieved emission probability).
    """
    res = dynamics.integrate_lambda(params, solution.pulse, initial=(1.0, 0.0, 0.0), **kw)
    achieved = np.sqrt(res.rate)
    wanted = np.abs(solution.target.amp)
    dt = solution.target.grid.dt
    err = math.sqrt(integrate((achieved - wanted) ** 2, dt) / integrate(wanted ** 2, dt))
    return err, res.p_emit


@dataclass(frozen=True)
class TimeBin:
    amplitude: float
    phase: float
    t_center: float
    width: float


def phase_programmed_target(grid: TimeGrid, bins: Sequence[TimeBin | tuple]) -> PhotonWaveform:
    """Multi-peak photon, one sin^2 lobe per time bin with a constant phase each.

    Amplitudes are relative: bin k carries probability |a_k|^2 / sum |a|^2 of
    a unit-norm photon, evaluated with the grid quadrature.  Lobe edges are
    snapped to the nearest grid samples: a lobe ending between two samples
    leaves a small cavity field that leaks into the following gap, an O(dt)
    error in the emitted shape.
    """
    bins = [b if isinstance(b, TimeBin) else TimeBin(*b) for b in bins]
    if not bins:
        raise InvalidParameterError("need at least one time bin")
    order = sorted(bins, key=lambda b: b.t_center)
    for lo, hi in zip(order, order[1:]):
        if lo.t_center + lo.width / 2 > hi.t_center - hi.width / 2:
            raise InvalidParameterError("time bins overlap")
    t = grid.times
    total_w = sum(b.amplitude ** 2 for b in bins)
    amp = np.zeros(grid.n, dtype=complex)
    for b in bins:
        start = b.t_center - b.width / 2
        if start < grid.t_start - 1e-15 or start + b.width > grid.t_end + 1e-15:
            raise InvalidParameterError("time bin outside the grid")
        i0 = int(round((start - grid.t_start) / grid.dt))
        i1 = int(round((start + b.width - grid.t_start) / grid.dt))
        start, width = t[i0], t[i1] - t[i0]
        if width <= 0:
            raise InvalidParameterError("time bin narrower than the grid step")
        s = (t - start) / width
        inside = (s > 1e-12) & (s < 1 - 1e-12)
        lobe = np.where(inside, np.sin(np.pi * np.clip(s, 0, 1)) ** 2, 0.0)
        if np.any((amp != 0) & (lobe != 0)):
            raise InvalidParameterError("time bins overlap on the grid")
        p = integrate(lobe ** 2, grid.dt)
        if p == 0:
            raise InvalidParameterError("time bin narrower than the grid step")
        amp += lobe * math.sqrt(b.amplitude ** 2 / total_w / p) * np.exp(1j * b.phase)
    return PhotonWaveform(grid, amp)


def bin_probabilities(w: PhotonWaveform) -> list[float]:
    """Photon probability inside each support run, in time order."""
    return [integrate(np.abs(w.amp[a:b + 1]) ** 2, w.grid.dt) for a, b in support_runs(w.amp)]


def twin_peak_target(grid: TimeGrid, duration: float, t0: Optional[float] = None) -> PhotonWaveform:
    """Two equal lobes, psi proportional to sin^2(2 pi (t - t0)/duration).

    The lobes touch with a double zero in the middle, so the photon is one
    smooth support run (no phase freedom between the peaks).
    """
    t0 = grid.t_start if t0 is None else t0
    s = (grid.times - t0) / duration
    inside = (s > 1e-12) & (s < 1 - 1e-12)
    amp = np.where(inside, np.sin(2 * np.pi * np.clip(s, 0, 1)) ** 2, 0.0)
    amp = amp / math.sqrt(integrate(amp ** 2, grid.dt))
    return PhotonWaveform(grid, amp)
