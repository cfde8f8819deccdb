"""Two-photon interference on a 50:50 beam splitter, resolved in detection time.

Photon A enters one port, photon B the other; detectors C and D watch the
outputs.  For detection times t1 (at C) and t2 (at D) the joint density is

    p_CD(t1, t2) = 1/4 |a(t1) b(t2) - a(t2) b(t1)|^2

with cross terms weighted by a mode-overlap scalar eta and an optional
Gaussian mutual-coherence factor exp(-(dtau / T_coh)^2 / 2).  Detectors are
ideal: unit efficiency, no dark counts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .qcore import InvalidParameterError, PhotonWaveform, TimeGrid

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
CHUNK = 100_000


class Port(enum.Enum):
    C = "C"
    D = "D"


@dataclass(frozen=True)
class DetectionEvent:
    port: Port
    time: float


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """C-D coincidence density versus dtau = t_D - t_C.

    ``density`` is probability per unit delay (1/s) on bins centred at
    ``delta_tau``; multiply by ``bin_width`` for per-bin probabilities.
    """

    delta_tau: np.ndarray
    density: np.ndarray
    bin_width: float
    normalization: str = "probability density per second of delay"

    def __post_init__(self):
        if self.delta_tau.shape != self.density.shape:
            raise InvalidParameterError("delta_tau and density must have equal length")
        if not np.allclose(self.delta_tau, -self.delta_tau[::-1], rtol=0, atol=1e-6 * self.bin_width):
            raise InvalidParameterError("binning must be symmetric around zero delay")

    @property
    def total(self) -> float:
        return float(np.sum(self.density) * self.bin_width)

    @property
    def probabilities(self) -> np.ndarray:
        return self.density * self.bin_width


@dataclass(frozen=True)
class TimeBinPhoton:
    """Photon spread over k disjoint time windows with one phase per window."""

    phases: tuple
    amplitudes: Optional[tuple] = None
    windows: Optional[tuple] = None

    def __post_init__(self):
        k = len(self.phases)
        if k < 1:
            raise InvalidParameterError("need at least one time bin")
        if self.amplitudes is None:
            object.__setattr__(self, "amplitudes", (1.0 / math.sqrt(k),) * k)
        if len(self.amplitudes) != k:
            raise InvalidParameterError("one amplitude per time bin")
        if abs(sum(a * a for a in self.amplitudes) - 1.0) > 1e-9:
            raise InvalidParameterError("bin amplitudes must satisfy sum |a|^2 = 1")
        if self.windows is not None:
            if len(self.windows) != k:
                raise InvalidParameterError("one window per time bin")
            spans = sorted(self.windows)
            for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
                if a1 > b0:
                    raise InvalidParameterError("time-bin windows overlap")

    @property
    def k(self) -> int:
        return len(self.phases)

    def waveform(self, grid: TimeGrid) -> PhotonWaveform:
        """sin^2 lobes filling each window, carrying the bin amplitude and phase."""
        from .shaper import TimeBin, phase_programmed_target
        if self.windows is None:
            raise InvalidParameterError("windows are needed to build a waveform")
        bins = [TimeBin(a, p, 0.5 * (w0 + w1), w1 - w0)
                for a, p, (w0, w1) in zip(self.amplitudes, self.phases, self.windows)]
        return phase_programmed_target(grid, bins)


def second_click_probability(delta_phi: float) -> float:
    """Chance the second photon leaves by the other port, given a phase step delta_phi."""
    return math.sin(delta_phi / 2) ** 2


def same_port_probability(delta_phi: float) -> float:
    return math.cos(delta_phi / 2) ** 2


def coherence_time_for_dip_width(width: float) -> float:
    """T_coh whose coherence factor gives a dip of the given full width at half depth.

    For identical photons the dephased histogram divided by the
    distinguishable reference is exactly 1 - exp(-(dtau/T_coh)^2/2).
    """
    if width <= 0:
        raise InvalidParameterError("dip width must be positive")
    return width / FWHM_PER_SIGMA


def _coherence(lag_times: np.ndarray, dephasing_time: Optional[float]) -> np.ndarray:
    if dephasing_time is None or math.isinf(dephasing_time):
        return np.ones_like(lag_times)
    if dephasing_time <= 0:
        raise InvalidParameterError("dephasing_time must be positive")
    return np.exp(-0.5 * (lag_times / dephasing_time) ** 2)


def _check_pair(psi_A: PhotonWaveform, psi_B: PhotonWaveform):
    psi_A.grid.require_same(psi_B.grid)


def _check_overlap(overlap: float):
    if not 0.0 <= overlap <= 1.0:
        raise InvalidParameterError(f"mode overlap must lie in [0, 1], got {overlap}")


def hom_correlation(psi_A: PhotonWaveform, psi_B: PhotonWaveform,
                    dephasing_time: Optional[float] = None,
                    overlap: float = 1.0) -> CoincidenceHistogram:
    """Coincidence density of C-D detections against delay, one bin per grid lag.

    ``overlap`` = 0 gives the non-interfering reference (e.g. orthogonal
    polarisations); ``dephasing_time`` narrows the dip.
    """
    _check_pair(psi_A, psi_B)
    _check_overlap(overlap)
    grid = psi_A.grid
    a, b = psi_A.amp, psi_B.amp
    n, dt = grid.n, grid.dt
    lags = np.arange(-(n - 1), n)
    coh = overlap * _coherence(lags * dt, dephasing_time)
    dens = np.zeros(2 * n - 1)
    for idx, k in enumerate(lags):
        if k >= 0:
            a1, b1, a2, b2 = a[:n - k], b[:n - k], a[k:], b[k:]
        else:
            a1, b1, a2, b2 = a[-k:], b[-k:], a[:n + k], b[:n + k]
        u = a1 * b2
        v = a2 * b1
        # |u - v|^2 + 2 (1 - coh) Re(u v*) == |u|^2 + |v|^2 - 2 coh Re(u v*),
        # written so identical photons give an exact zero
        val = np.abs(u - v) ** 2 + 2.0 * (1.0 - coh[idx]) * (u * np.conj(v)).real
        dens[idx] = 0.25 * float(np.sum(val)) * dt
    return CoincidenceHistogram(lags * dt, dens, dt)


def two_photon_overlap(psi_A: PhotonWaveform, psi_B: PhotonWaveform) -> complex:
    _check_pair(psi_A, psi_B)
    return complex(np.sum(np.conj(psi_A.amp) * psi_B.amp) * psi_A.grid.dt)


def joint_density(psi_A: PhotonWaveform, psi_B: PhotonWaveform,
                  dephasing_time: Optional[float] = None, overlap: float = 1.0) -> np.ndarray:
    """Full n x n density p_CD(t1, t2); quadratic memory, intended for small grids."""
    _check_pair(psi_A, psi_B)
    _check_overlap(overlap)
    a, b = psi_A.amp, psi_B.amp
    t = psi_A.grid.times
    u = np.outer(a, b)
    v = u.T
    coh = overlap * _coherence(t[None, :] - t[:, None], dephasing_time)
    return 0.25 * (np.abs(u - v) ** 2 + 2.0 * (1.0 - coh) * (u * np.conj(v)).real)


def overlap_window(psi: PhotonWaveform) -> np.ndarray:
    """sum_t |psi(t)|^2 |psi(t + dtau)|^2 dt on the symmetric lag grid."""
    p = np.abs(psi.amp) ** 2
    return np.correlate(p, p, mode="full") * psi.grid.dt


def beat_coincidence_density(delta_omega: float, delta_tau_grid: np.ndarray,
                             psi: Optional[PhotonWaveform] = None) -> np.ndarray:
    """sin^2(delta_omega * dtau / 2), optionally times the two-photon overlap window.

    With ``psi`` the delay grid must be the symmetric lag grid of ``psi``
    (as returned by :func:`hom_correlation`).
    """
    dtau = np.asarray(delta_tau_grid, dtype=float)
    env = np.sin(0.5 * delta_omega * dtau) ** 2
    if psi is None:
        return env
    window = overlap_window(psi)
    if window.shape != dtau.shape:
        raise InvalidParameterError("delay grid does not match the photon's lag grid")
    return env * window


def frequency_shifted(psi: PhotonWaveform, delta_omega: float) -> PhotonWaveform:
    """Same envelope detuned by delta_omega (rad/s), phase zero at the grid start."""
    t = psi.grid.times - psi.grid.t_start
    return PhotonWaveform(psi.grid, psi.amp * np.exp(-1j * delta_omega * t))


def dip_width(hist: CoincidenceHistogram, reference: CoincidenceHistogram) -> float:
    """Full width at half depth of hist/reference around zero delay.

    Only lags where the reference exceeds 1e-6 of its peak enter; the
    crossing is linearly interpolated.
    """
    ok = reference.density > 1e-6 * reference.density.max()
    x = hist.delta_tau[ok]
    r = hist.density[ok] / reference.density[ok]
    pos = x >= 0
    xp, rp = x[pos], r[pos]
    above = np.flatnonzero(rp >= 0.5)
    if above.size == 0:
        return math.inf
    i = above[0]
    if i == 0:
        return 0.0
    x0, x1, r0, r1 = xp[i - 1], xp[i], rp[i - 1], rp[i]
    return 2.0 * (x0 + (0.5 - r0) * (x1 - x0) / (r1 - r0))


def qutrit_coincidence_map(signal: TimeBinPhoton, lo: TimeBinPhoton) -> np.ndarray:
    """P(C in bin i, D in bin j) for a time-bin signal against a time-bin local oscillator.

    Both photons share identical lobe shapes per bin.  Under equal
    amplitudes 1/sqrt(k) the entries reduce to sin^2((dphi_i - dphi_j)/2)/k^2,
    with dphi_m the signal-minus-LO phase in bin m.
    """
    if signal.k != lo.k:
        raise InvalidParameterError(f"bin counts differ: {signal.k} vs {lo.k}")
    s = np.asarray(signal.amplitudes, dtype=float)
    l = np.asarray(lo.amplitudes, dtype=float)
    dphi = np.asarray(signal.phases, dtype=float) - np.asarray(lo.phases, dtype=float)
    diff = dphi[:, None] - dphi[None, :]
    out = 0.25 * (np.outer(s * s, l * l) + np.outer(l * l, s * s)
                  - 2.0 * np.outer(s * l, s * l) * np.cos(diff))
    np.fill_diagonal(out, 0.0)
    return np.clip(out, 0.0, None)


def _sampler(p: np.ndarray):
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return cdf


def _draw(cdf: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    # side='right' never lands on a zero-probability cell
    return np.searchsorted(cdf, rng.random(size), side="right").clip(0, len(cdf) - 1)


def sample_detection_arrays(psi_A: PhotonWaveform, psi_B: PhotonWaveform, n_pairs: int,
                            seed: int = 0, dephasing_time: Optional[float] = None,
                            overlap: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monte Carlo detection pairs as arrays (pattern, i1, i2).

    pattern is 0 for C-D (i1 at C, i2 at D), 1 for C-C and 2 for D-D;
    i1 and i2 are grid indices.  Photon A and B times are drawn from the
    symmetrised product density s = (|u|^2 + |v|^2)/2, then the port pattern
    from the exact conditional, so identical photons never give C-D pairs.
    Each chunk of draws uses its own child of the seed's counter-based stream,
    so results do not depend on how chunks are scheduled.
    """
    if n_pairs < 1:
        raise InvalidParameterError("n_pairs must be at least 1")
    _check_pair(psi_A, psi_B)
    _check_overlap(overlap)
    a, b = psi_A.amp, psi_B.amp
    dt = psi_A.grid.dt
    cdf_a = _sampler(np.abs(a) ** 2)
    cdf_b = _sampler(np.abs(b) ** 2)
    n_chunks = -(-n_pairs // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    pats, i1s, i2s = [], [], []
    for c, ss in enumerate(children):
        m = min(CHUNK, n_pairs - c * CHUNK)
        rng = np.random.Generator(np.random.Philox(ss))
        swap = rng.random(m) < 0.5
        ia = _draw(cdf_a, rng, m)
        ib = _draw(cdf_b, rng, m)
        # A detected at t1, B at t2 unless swapped
        i1 = np.where(swap, ib, ia)
        i2 = np.where(swap, ia, ib)
        u = a[i1] * b[i2]
        v = a[i2] * b[i1]
        s = 0.5 * (np.abs(u) ** 2 + np.abs(v) ** 2)
        coh = overlap * _coherence((i2 - i1) * dt, dephasing_time)
        x = coh * (u * np.conj(v)).real
        p_cd = 0.5 * (1.0 - x / s)
        r = rng.random(m)
        pat = np.where(r < p_cd, 0, np.where(r < p_cd + 0.5 * (1.0 - p_cd), 1, 2))
        pats.append(pat)
        i1s.append(i1)
        i2s.append(i2)
    return np.concatenate(pats), np.concatenate(i1s), np.concatenate(i2s)


def sample_detections(psi_A: PhotonWaveform, psi_B: PhotonWaveform, n_pairs: int,
                      seed: int = 0, **kw) -> list[tuple[DetectionEvent, DetectionEvent]]:
    """Seeded detection-event pairs, earliest click first for same-port pairs."""
    pat, i1, i2 = sample_detection_arrays(psi_A, psi_B, n_pairs, seed, **kw)
    t = psi_A.grid.times
    out = []
    for p, j1, j2 in zip(pat.tolist(), i1.tolist(), i2.tolist()):
        if p == 0:
            out.append((DetectionEvent(Port.C, t[j1]), DetectionEvent(Port.D, t[j2])))
        else:
            port = Port.C if p == 1 else Port.D
            lo, hi = sorted((j1, j2))
            out.append((DetectionEvent(port, t[lo]), DetectionEvent(port, t[hi])))
    return out


def coincidence_counts(pattern: np.ndarray, i1: np.ndarray, i2: np.ndarray, n: int) -> np.ndarray:
    """C-D counts per grid lag (i_D - i_C) on the symmetric lag grid of n samples."""
    cd = pattern == 0
    return np.bincount(i2[cd] - i1[cd] + (n - 1), minlength=2 * n - 1)


def bell_state(kind: str = "psi-minus") -> np.ndarray:
    """Two-qubit singlet (|01> - |10>)/sqrt 2 over the ordered basis (|00>, |01>, |10>, |11>).

    Both the atom-photon state (|sigma+, down> - |sigma-, up>)/sqrt 2 and the
    photon-photon state (|sigma+, sigma-> - |sigma-, sigma+>)/sqrt 2 take this
    form with sigma+ -> 0, sigma- -> 1, up -> 0, down -> 1.
    """
    if kind not in ("psi-minus", "atom-photon", "photon-photon"):
        raise InvalidParameterError(f"unknown Bell state {kind!r}")
    return np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / math.sqrt(2)


def validate_density_matrix(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidParameterError(f"need a 4x4 density matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidParameterError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise InvalidParameterError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise InvalidParameterError(f"density matrix trace is {np.trace(rho).real:.12g}, not 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise InvalidParameterError("density matrix is not positive semidefinite")
    return rho


def bell_fidelity(rho: np.ndarray, state: Optional[np.ndarray] = None) -> float:
    """<psi|rho|psi> against the singlet (or a supplied pure state)."""
    rho = validate_density_matrix(rho)
    psi = bell_state() if state is None else np.asarray(state, dtype=complex)
    return float(np.real(np.conj(psi) @ rho @ psi))


def werner_state(fidelity_weight: float, state: Optional[np.ndarray] = None) -> np.ndarray:
    """p |psi><psi| + (1 - p) I/4."""
    psi = bell_state() if state is None else np.asarray(state, dtype=complex)
    return fidelity_weight * np.outer(psi, np.conj(psi)) + (1 - fidelity_weight) * np.eye(4) / 4
