"""Command-line front end: scenarios from flags, INI files or named presets.

Every subcommand writes one CSV table (``--out``, default stdout) and can
write a JSON summary (``--json``).  Rates are given in 2pi x MHz, times in
microseconds unless the key name says otherwise.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible physics.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__, dressed, dynamics, interfere, memory, shaper
from .qcore import (
    TWO_PI_MHZ,
    CavityForgeError,
    InfeasibleTargetError,
    InvalidParameterError,
    PhotonWaveform,
    SystemParams,
    TimeGrid,
    flux_integral,
    l2_norm,
    pulse_from_csv,
    pulse_to_csv,
    sin2_photon,
    waveform_from_csv,
    write_table,
)

log = logging.getLogger(__name__)

REPORT_VERSION = "1.0"
COMMANDS = ("dressed", "emit", "shape", "absorb", "sweep-c", "hom", "qutrit")
PRESETS = ("fig3a", "fig3b", "fig3c", "fig3d", "fig11-sin2", "fig13-case-a", "fig13-case-b",
           "fig13-case-c", "fig14-sweep", "fig5-beat", "fig9-qutrit")
US = 1e-6
#: automatic grids keep dt * (estimated fastest rate) at this value
AUTO_RESOLUTION = 0.05

PARAM_KEYS = ("g", "kappa", "gamma", "delta_L", "delta_cav")
GRID_KEYS = ("t_start_us", "t_end_us", "samples")
PAYLOAD_KEYS = {
    "dressed": ("n_max", "omega"),
    "emit": ("mode", "peak", "duration_us", "rise_us", "pulse_file"),
    "shape": ("target", "duration_us", "t0_us", "phases", "norm", "norm_fraction", "target_file"),
    "absorb": ("case", "photon_duration_us", "t0_us", "c0_sq"),
    "sweep-c": ("photon_duration_us", "t0_us", "c0_sq", "c_min", "c_max", "points", "c_values"),
    "hom": ("duration_us", "t0_us", "delta_omega", "overlap", "dip_width_ns", "coherence_ns",
            "pairs", "seed"),
    "qutrit": ("signal_phases", "lo_phases"),
}
OUTPUT_KEYS = ("csv", "json")


class ConfigError(InvalidParameterError):
    pass


class UsageError(CavityForgeError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    command: str
    params: Optional[SystemParams]
    grid: Optional[TimeGrid]
    payload: Mapping[str, str] = field(default_factory=dict)
    outputs: Mapping[str, str] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.payload.get(key, default)


# ---------------------------------------------------------------- parsing

def _line_of(text: str, section: Optional[str], key: str) -> Optional[int]:
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return None


class _Source:
    """Raw key/value layers plus enough provenance for line-numbered errors."""

    def __init__(self, sections: dict[str, dict[str, str]], text: str = "", origin: str = "<flags>"):
        self.sections = sections
        self.text = text
        self.origin = origin

    def where(self, section: str, key: str) -> str:
        no = _line_of(self.text, section, key) if self.text else None
        if no is None:
            return f"{self.origin}: [{section}] {key}"
        return f"{self.origin}:{no}: [{section}] {key}"

    def raw(self, section: str, key: str) -> Optional[str]:
        return self.sections.get(section, {}).get(key)

    def number(self, section: str, key: str, default=None, kind=float):
        val = self.raw(section, key)
        if val is None or val == "":
            return default
        try:
            out = kind(_eval_number(val)) if kind is float else kind(val)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: expected a number, got {val!r}") from None
        return out


def _eval_number(text: str) -> float:
    """Float literal, optionally a multiple of pi ('pi', '2pi', '-pi/2', '0.5*pi')."""
    s = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([+-]?[0-9.e+-]*)\*?pi(?:/([0-9.e+-]+))?", s)
    if m:
        coef = m.group(1)
        c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
        d = float(m.group(2)) if m.group(2) else 1.0
        return c * math.pi / d
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(text)
    return v


def _number_list(src: _Source, section: str, key: str, default=None) -> Optional[list[float]]:
    val = src.raw(section, key)
    if val is None or val == "":
        return default
    try:
        return [_eval_number(p) for p in val.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"{src.where(section, key)}: expected comma-separated numbers, got {val!r}") from None


def _read_config_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def _parse_ini(text: str, origin: str) -> _Source:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    src = _Source(sections, text, origin)
    allowed = {"scenario": ("name", "command"), "params": PARAM_KEYS, "grid": GRID_KEYS,
               "outputs": OUTPUT_KEYS}
    command = sections.get("scenario", {}).get("command")
    for sec, keys in sections.items():
        if sec == "payload":
            known = PAYLOAD_KEYS.get(command, ())
        elif sec in allowed:
            known = allowed[sec]
        else:
            raise ConfigError(f"{origin}: unknown section [{sec}]")
        for key in keys:
            if key not in known:
                raise ConfigError(f"{src.where(sec, key)}: unknown key")
    return src


def _merge(base: _Source, overrides: dict[str, dict[str, str]]) -> _Source:
    merged = {s: dict(v) for s, v in base.sections.items()}
    for sec, kv in overrides.items():
        for k, v in kv.items():
            if v is not None:
                merged.setdefault(sec, {})[k] = v
    return _Source(merged, base.text, base.origin)


def _estimated_rate(command: str, params: SystemParams, src: _Source) -> float:
    rate = params.max_rate
    if command == "emit":
        rate = max(rate, (src.number("payload", "peak", params.g / TWO_PI_MHZ)) * TWO_PI_MHZ)
    elif command in ("shape", "absorb"):
        # synthesised pulses peak at several g for sub-microsecond photons
        rate = max(rate, 8.0 * params.g)
    return rate


def _default_span(command: str, src: _Source) -> tuple[float, float]:
    t0 = src.number("payload", "t0_us", 0.0)
    if command in ("shape", "hom"):
        dur = src.number("payload", "duration_us", 0.5 if command == "shape" else 1.0)
    elif command in ("absorb", "sweep-c"):
        dur = src.number("payload", "photon_duration_us", 3.14)
    else:
        return 0.0, 1.0
    return 0.0, t0 + 1.25 * dur


def _build(src: _Source, command: Optional[str] = None) -> Scenario:
    command = command or src.raw("scenario", "command")
    if command is None:
        raise ConfigError(f"{src.origin}: [scenario] command is required")
    if command not in COMMANDS:
        raise ConfigError(f"{src.where('scenario', 'command')}: unknown command {command!r}")
    name = src.raw("scenario", "name") or command
    for sec in ("payload",):
        for key in src.sections.get(sec, {}):
            if key not in PAYLOAD_KEYS[command]:
                raise ConfigError(f"{src.where(sec, key)}: unknown key for {command}")

    params = None
    if command in ("dressed", "emit", "shape", "absorb"):
        vals = {}
        for key in PARAM_KEYS[:3]:
            v = src.number("params", key)
            if v is None:
                raise ConfigError(f"{src.where('params', key)}: required key missing")
            if v < 0 or (v == 0 and key != "gamma"):
                bound = ">= 0" if key == "gamma" else "> 0"
                raise ConfigError(f"{src.where('params', key)}: must be {bound}, got {v:g}")
            vals[key] = v
        try:
            params = SystemParams.from_paper_units(
                vals["g"], vals["kappa"], vals["gamma"],
                src.number("params", "delta_L", 0.0), src.number("params", "delta_cav", 0.0))
        except InvalidParameterError as exc:
            raise ConfigError(f"{src.origin}: [params] {exc}") from None
    elif command == "sweep-c":
        for key in ("kappa", "gamma"):
            v = src.number("params", key)
            if v is None:
                raise ConfigError(f"{src.where('params', key)}: required key missing")
            if v <= 0:
                raise ConfigError(f"{src.where('params', key)}: must be positive")

    grid = None
    if command != "dressed" and command != "qutrit":
        lo, hi = _default_span(command, src)
        t_start = src.number("grid", "t_start_us", lo) * US
        t_end = src.number("grid", "t_end_us", hi) * US
        if t_end <= t_start:
            raise ConfigError(f"{src.where('grid', 't_end_us')}: must exceed t_start_us")
        raw_n = src.raw("grid", "samples")
        if raw_n is None or raw_n.strip().lower() == "auto":
            if params is not None:
                rate = _estimated_rate(command, params, src)
            elif command == "sweep-c":
                # strongest coupling of the sweep sets the pace
                c_max = max(_sweep_values(src))
                k = src.number("params", "kappa") * TWO_PI_MHZ
                gm = src.number("params", "gamma") * TWO_PI_MHZ
                rate = max(k, gm, 8.0 * math.sqrt(2 * c_max * k * gm))
            else:
                rate = 0.0
            n = max(2001, int(math.ceil((t_end - t_start) * rate / AUTO_RESOLUTION / 1000.0)) * 1000 + 1)
        else:
            n = src.number("grid", "samples", kind=int)
            if n < 2:
                raise ConfigError(f"{src.where('grid', 'samples')}: need at least 2 samples")
        grid = TimeGrid.spanning(t_start, t_end, n)

    payload = dict(src.sections.get("payload", {}))
    if command == "sweep-c":
        payload["kappa"] = src.raw("params", "kappa")
        payload["gamma"] = src.raw("params", "gamma")
    _validate_payload(command, src)
    return Scenario(name, command, params, grid, MappingProxyType(payload),
                    MappingProxyType(dict(src.sections.get("outputs", {}))))


def _validate_payload(command: str, src: _Source) -> None:
    """Type-check every numeric payload key early, with file/line context."""
    numeric = {"n_max": int, "omega": float, "peak": float, "duration_us": float, "rise_us": float,
               "t0_us": float, "norm": float, "norm_fraction": float, "photon_duration_us": float,
               "c0_sq": float, "c_min": float, "c_max": float, "points": int,
               "delta_omega": float, "overlap": float, "dip_width_ns": float,
               "coherence_ns": float, "pairs": int, "seed": int}
    for key in PAYLOAD_KEYS[command]:
        if key in numeric:
            src.number("payload", key, kind=numeric[key])
        elif key in ("phases", "c_values", "signal_phases", "lo_phases"):
            _number_list(src, "payload", key)
    choices = {"mode": ("two-level", "sin", "ramp", "csv"),
               "target": ("sin2", "twin", "triple", "csv"),
               "case": ("matched", "ground", "empty")}
    for key, allowed in choices.items():
        val = src.raw("payload", key)
        if val is not None and key in PAYLOAD_KEYS[command] and val not in allowed:
            raise ConfigError(f"{src.where('payload', key)}: expected one of {', '.join(allowed)}, got {val!r}")


def _sweep_values(src: _Source) -> list[float]:
    vals = _number_list(src, "payload", "c_values")
    if vals:
        return vals
    c_min = src.number("payload", "c_min", 0.6)
    c_max = src.number("payload", "c_max", 50.0)
    n = src.number("payload", "points", 12, kind=int)
    if n < 1 or c_min <= 0 or c_max < c_min:
        raise ConfigError(f"{src.origin}: [payload] need 0 < c_min <= c_max and points >= 1")
    return [float(c) for c in np.geomspace(c_min, c_max, n)]


def load_config(path) -> Scenario:
    """Parse and validate an INI scenario file."""
    path = Path(path)
    text = _read_config_text(path)
    return _build(_parse_ini(text, str(path)))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("cavity_forge").joinpath("presets", f"{name}.ini").read_text()


def load_preset(name: str) -> Scenario:
    return _build(_parse_ini(preset_text(name), f"preset:{name}"))


# ---------------------------------------------------------------- running

def _paper_params(p: SystemParams) -> dict:
    g, k, gm, dl, dc = p.to_paper_units()
    return {"g": g, "kappa": k, "gamma": gm, "delta_L": dl, "delta_cav": dc}


def _grid_info(grid: TimeGrid) -> dict:
    return {"t_start": grid.t_start, "dt": grid.dt, "n": grid.n}


def _report(sc: Scenario, kind: str, **body) -> dict:
    rep = {"version": REPORT_VERSION, "kind": kind, "scenario": sc.name}
    if sc.params is not None:
        rep["params_2pi_MHz"] = _paper_params(sc.params)
    if sc.grid is not None:
        rep["grid"] = _grid_info(sc.grid)
    rep.update(body)
    return rep


def _f(sc: Scenario, key: str, default: float) -> float:
    v = sc.get(key)
    return default if v in (None, "") else _eval_number(v)


def _phases(sc: Scenario, key: str, default: Sequence[float]) -> list[float]:
    v = sc.get(key)
    if v in (None, ""):
        return list(default)
    return [_eval_number(p) for p in v.split(",") if p.strip()]


def _finite(x: float) -> Optional[float]:
    return None if x is None or not math.isfinite(x) else float(x)


def run_dressed(sc: Scenario) -> tuple[str, dict]:
    p = sc.params
    n_max = int(_f(sc, "n_max", 5))
    if n_max < 1:
        raise InvalidParameterError("n_max must be at least 1")
    omega = _f(sc, "omega", p.g / TWO_PI_MHZ) * TWO_PI_MHZ
    rows = {k: [] for k in ("n", "doublet_plus", "doublet_minus", "doublet_splitting",
                            "triplet_0", "triplet_plus", "triplet_minus", "triplet_splitting",
                            "theta", "phi")}
    for n in range(1, n_max + 1):
        d = dressed.doublet(p, n)
        t = dressed.triplet(p.replace(delta_L=p.delta_cav), n, omega)
        for key, val in (("n", n), ("doublet_plus", d.omega_plus / TWO_PI_MHZ),
                         ("doublet_minus", d.omega_minus / TWO_PI_MHZ),
                         ("doublet_splitting", d.splitting / TWO_PI_MHZ),
                         ("triplet_0", t.omega_0 / TWO_PI_MHZ),
                         ("triplet_plus", t.omega_plus / TWO_PI_MHZ),
                         ("triplet_minus", t.omega_minus / TWO_PI_MHZ),
                         ("triplet_splitting", t.splitting / TWO_PI_MHZ),
                         ("theta", t.theta), ("phi", t.phi)):
            rows[key].append(val)
    rep = _report(sc, "dressed", n_max=n_max, omega_2pi_MHz=omega / TWO_PI_MHZ,
                  regime=dressed.classify_regime(p).value,
                  cooperativity=_finite(p.cooperativity),
                  emission_limit=dressed.emission_limit(p))
    return write_table(rows), rep


def run_emit(sc: Scenario) -> tuple[str, dict]:
    p, grid = sc.params, sc.grid
    mode = sc.get("mode", "sin")
    if mode == "two-level":
        res = dynamics.integrate_two_level(p, grid)
    else:
        if mode == "sin":
            pulse = dynamics.sin_pulse(grid, _f(sc, "peak", p.g / TWO_PI_MHZ) * TWO_PI_MHZ,
                                       _f(sc, "duration_us", 0.2) * US)
        elif mode == "ramp":
            pulse = dynamics.ramp_pulse(grid, _f(sc, "peak", p.g / TWO_PI_MHZ) * TWO_PI_MHZ,
                                        _f(sc, "rise_us", 1.0) * US)
        else:
            pulse = _load_pulse(sc.get("pulse_file"), grid)
        res = dynamics.integrate_lambda(p, pulse)
    pe, px, pg = res.traj.populations
    table = write_table({"t": grid.times, "pop_e": pe, "pop_x": px, "pop_g": pg, "R_ph": res.rate})
    rep = _report(sc, "emit", mode=mode, p_emit=res.p_emit, p_spont=res.p_spont,
                  residual=res.residual, regime=dressed.classify_regime(p).value,
                  emission_limit=dressed.emission_limit(p))
    return table, rep


def _load_pulse(path: Optional[str], grid: TimeGrid):
    if not path:
        raise InvalidParameterError("mode=csv needs pulse_file")
    try:
        pulse = pulse_from_csv(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read pulse file {path}: {exc.strerror}") from None
    grid.require_same(pulse.grid)
    return pulse


def _shape_target(sc: Scenario) -> PhotonWaveform:
    grid = sc.grid
    kind = sc.get("target", "sin2")
    dur = _f(sc, "duration_us", 0.5) * US
    t0 = _f(sc, "t0_us", 0.0) * US
    if kind == "sin2":
        return sin2_photon(grid, dur, t0=t0)
    if kind == "twin":
        return shaper.twin_peak_target(grid, dur, t0)
    if kind == "triple":
        phases = _phases(sc, "phases", (0.0, 0.0, 0.0))
        k = len(phases)
        slot = dur / k
        # lobes fill 80% of each slot so neighbouring bins stay separated
        bins = [shaper.TimeBin(1.0, ph, t0 + (i + 0.5) * slot, 0.8 * slot)
                for i, ph in enumerate(phases)]
        return shaper.phase_programmed_target(grid, bins)
    path = sc.get("target_file")
    if not path:
        raise InvalidParameterError("target=csv needs target_file")
    try:
        w = waveform_from_csv(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read target file {path}: {exc.strerror}") from None
    grid.require_same(w.grid)
    return w


def run_shape(sc: Scenario) -> tuple[str, dict]:
    p = sc.params
    target = _shape_target(sc)
    unit = target.scaled(1.0 / math.sqrt(l2_norm(target)))
    feasible = shaper.max_feasible_norm(p, unit)
    if sc.get("norm") not in (None, ""):
        norm = _f(sc, "norm", 1.0)
    else:
        norm = _f(sc, "norm_fraction", 0.99) * min(feasible, dressed.emission_limit(p))
    if not 0 < norm <= 1:
        raise InvalidParameterError(f"photon norm must lie in (0, 1], got {norm}")
    target = unit.scaled(math.sqrt(norm))
    sol = shaper.synthesize_emission_pulse(p, target)
    l2, p_emit = shaper.forward_validate(p, sol)
    rep = _report(sc, "shape", target=sc.get("target", "sin2"), norm=norm,
                  max_feasible_norm=feasible, emission_limit=dressed.emission_limit(p),
                  l2_error=l2, p_emit=p_emit, clipped_samples=sol.n_clipped,
                  peak_omega_2pi_MHz=sol.pulse.peak / TWO_PI_MHZ)
    return pulse_to_csv(sol.pulse), rep


def _absorb_photon(sc: Scenario) -> PhotonWaveform:
    return sin2_photon(sc.grid, _f(sc, "photon_duration_us", 3.14) * US,
                       t0=_f(sc, "t0_us", 0.0) * US)


def _phase_flip(phi_out: np.ndarray, times: np.ndarray) -> Optional[float]:
    re_ = phi_out.real
    live = np.abs(phi_out) > 1e-9 * np.max(np.abs(phi_out))
    for i in range(1, len(re_)):
        if live[i - 1] and live[i] and re_[i - 1] * re_[i] < 0:
            # linear interpolation of the zero crossing
            return float(times[i - 1] + (times[i] - times[i - 1]) * re_[i - 1] / (re_[i - 1] - re_[i]))
    return None


def run_absorb(sc: Scenario) -> tuple[str, dict]:
    p, grid = sc.params, sc.grid
    photon = _absorb_photon(sc)
    c0_sq = _f(sc, "c0_sq", memory.DEFAULT_C0_SQ)
    case = sc.get("case", "matched")
    problem = memory.AbsorptionProblem(p, photon, c0_sq)
    if case == "empty":
        traj = memory.empty_cavity_response(p.kappa, photon)
        zeros = np.zeros(grid.n)
        table = write_table({"t": grid.times, "pop_e": zeros, "pop_x": zeros,
                             "pop_g": np.abs(traj.c_g) ** 2, "phi_in_re": photon.amp.real,
                             "phi_out_re": traj.phi_out.real, "phi_out_im": traj.phi_out.imag})
        refl = flux_integral(np.abs(traj.phi_out) ** 2, grid.dt)
        body = dict(case=case, c0_sq=0.0, p_in=l2_norm(photon), p_reflected=refl,
                    p_stored=0.0, p_spont=0.0, residual=float(abs(traj.c_g[-1]) ** 2),
                    bookkeeping_error=refl + float(abs(traj.c_g[-1]) ** 2) - l2_norm(photon))
        flip = _phase_flip(traj.phi_out, grid.times)
    else:
        pulse = memory.synthesize_absorption_pulse(problem)
        res = memory.run_absorption(problem, pulse, initial_c_e=0.0 if case == "ground" else None)
        pe, px, pg = res.traj.populations
        table = write_table({"t": grid.times, "pop_e": pe, "pop_x": px, "pop_g": pg,
                             "phi_in_re": photon.amp.real, "phi_out_re": res.traj.phi_out.real,
                             "phi_out_im": res.traj.phi_out.imag, "omega": pulse.omega})
        body = dict(case=case, c0_sq=res.c0_sq, p_in=res.p_in, p_reflected=res.p_reflected,
                    p_stored=res.p_stored, p_spont=res.p_spont, residual=res.residual,
                    bookkeeping_error=res.bookkeeping_error)
        flip = None
    body["phase_flip_us"] = None if flip is None else flip / US
    return table, _report(sc, "absorb", **body)


def run_sweep(sc: Scenario, threads: Optional[int] = None) -> tuple[str, dict]:
    kappa = _eval_number(sc.get("kappa")) * TWO_PI_MHZ
    gamma = _eval_number(sc.get("gamma")) * TWO_PI_MHZ
    src = _Source({"payload": dict(sc.payload)})
    values = _sweep_values(src)
    photon = sin2_photon(sc.grid, _f(sc, "photon_duration_us", 3.14) * US,
                         t0=_f(sc, "t0_us", 0.0) * US)
    rows = memory.efficiency_sweep(kappa, gamma, photon, values,
                                   c0_sq=_f(sc, "c0_sq", memory.DEFAULT_C0_SQ), threads=threads)
    table = write_table({"C": [r.C for r in rows], "efficiency": [r.p_stored for r in rows],
                         "mismatch": [r.p_reflected for r in rows],
                         "reference": [r.optimum for r in rows]})
    bad = [r for r in rows if not r.feasible]
    rep = _report(sc, "sweep-c", kappa_2pi_MHz=kappa / TWO_PI_MHZ, gamma_2pi_MHz=gamma / TWO_PI_MHZ,
                  rows=len(rows), infeasible=len(bad),
                  messages=[r.message for r in bad])
    return table, rep


def run_hom(sc: Scenario) -> tuple[str, dict]:
    grid = sc.grid
    a = sin2_photon(grid, _f(sc, "duration_us", 1.0) * US, t0=_f(sc, "t0_us", 0.0) * US)
    dw = _f(sc, "delta_omega", 0.0) * TWO_PI_MHZ
    b = interfere.frequency_shifted(a, dw) if dw else a
    overlap = _f(sc, "overlap", 1.0)
    t_coh = None
    if sc.get("coherence_ns") not in (None, ""):
        t_coh = _f(sc, "coherence_ns", 0.0) * 1e-9
    elif sc.get("dip_width_ns") not in (None, ""):
        t_coh = interfere.coherence_time_for_dip_width(_f(sc, "dip_width_ns", 0.0) * 1e-9)
    hist = interfere.hom_correlation(a, b, t_coh, overlap)
    ref = interfere.hom_correlation(a, b, None, 0.0)
    cols = {"delta_tau": hist.delta_tau, "density": hist.density, "reference": ref.density}
    pairs = int(_f(sc, "pairs", 0))
    if pairs > 0:
        pat, i1, i2 = interfere.sample_detection_arrays(a, b, pairs, int(_f(sc, "seed", 0)),
                                                        dephasing_time=t_coh, overlap=overlap)
        cols["mc_counts"] = interfere.coincidence_counts(pat, i1, i2, grid.n)
    width = interfere.dip_width(hist, ref) if dw == 0 else math.nan
    rep = _report(sc, "hom", delta_omega_2pi_MHz=dw / TWO_PI_MHZ, overlap=overlap,
                  coherence_time_ns=None if t_coh is None else t_coh * 1e9,
                  total_cd=hist.total, reference_total=ref.total,
                  dip_width_ns=_finite(width * 1e9), mc_pairs=pairs)
    return write_table(cols), rep


def run_qutrit(sc: Scenario) -> tuple[str, dict]:
    sig = _phases(sc, "signal_phases", (0.0, math.pi, 0.0))
    lo = _phases(sc, "lo_phases", (0.0,) * len(sig))
    m = interfere.qutrit_coincidence_map(interfere.TimeBinPhoton(tuple(sig)),
                                         interfere.TimeBinPhoton(tuple(lo)))
    cols = {"bin": np.arange(1, len(sig) + 1)}
    for j in range(len(sig)):
        cols[f"D{j + 1}"] = m[:, j]
    rep = _report(sc, "qutrit", signal_phases=sig, lo_phases=lo, matrix=m.tolist())
    return write_table(cols), rep


RUNNERS = {"dressed": run_dressed, "emit": run_emit, "shape": run_shape, "absorb": run_absorb,
           "sweep-c": run_sweep, "hom": run_hom, "qutrit": run_qutrit}


def run_scenario(sc: Scenario) -> tuple[str, dict]:
    return RUNNERS[sc.command](sc)


def dumps_report(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _emit(text: str, dest: Optional[str]) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(dest)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------- argparse

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


FLAG_MAP = {
    # flag dest -> (section, key)
    "g": ("params", "g"), "kappa": ("params", "kappa"), "gamma": ("params", "gamma"),
    "delta_L": ("params", "delta_L"), "delta_cav": ("params", "delta_cav"),
    "t_start_us": ("grid", "t_start_us"), "t_end_us": ("grid", "t_end_us"),
    "samples": ("grid", "samples"), "name": ("scenario", "name"),
}


def _add_common(sp: argparse.ArgumentParser, params: bool = True, grid: bool = True):
    sp.add_argument("--config", help="INI scenario file; flags override its values")
    sp.add_argument("--name", help="scenario name recorded in the JSON report")
    if params:
        g = sp.add_argument_group("system (2pi x MHz)")
        for flag in ("g", "kappa", "gamma"):
            g.add_argument(f"--{flag}")
        g.add_argument("--delta-L", dest="delta_L")
        g.add_argument("--delta-cav", dest="delta_cav")
    if grid:
        g = sp.add_argument_group("time grid")
        g.add_argument("--t-start-us", dest="t_start_us")
        g.add_argument("--t-end-us", dest="t_end_us")
        g.add_argument("--samples", help="sample count or 'auto'")
    sp.add_argument("--out", default="-", help="CSV destination (default stdout)")
    sp.add_argument("--json", help="write the JSON summary here ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cavity-forge", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("dressed", help="doublet and triplet tables for n = 1..N")
    _add_common(sp, grid=False)
    sp.add_argument("--n-max", dest="n_max")
    sp.add_argument("--omega", help="control Rabi frequency (2pi x MHz); default g")

    sp = sub.add_parser("emit", help="emission dynamics for a pump pulse")
    _add_common(sp)
    sp.add_argument("--mode", choices=("two-level", "sin", "ramp", "csv"))
    sp.add_argument("--peak", help="pump peak Rabi frequency (2pi x MHz); default g")
    sp.add_argument("--duration-us", dest="duration_us")
    sp.add_argument("--rise-us", dest="rise_us")
    sp.add_argument("--pulse-file", dest="pulse_file")

    sp = sub.add_parser("shape", help="pump pulse for a target photon shape")
    _add_common(sp)
    sp.add_argument("--target", choices=("sin2", "twin", "triple", "csv"))
    sp.add_argument("--duration-us", dest="duration_us")
    sp.add_argument("--t0-us", dest="t0_us")
    sp.add_argument("--phases", help="comma-separated bin phases for 'triple', e.g. 0,pi,0")
    sp.add_argument("--norm", help="photon probability; default norm-fraction x max feasible")
    sp.add_argument("--norm-fraction", dest="norm_fraction")
    sp.add_argument("--target-file", dest="target_file")

    sp = sub.add_parser("absorb", help="impedance-matched absorption of a sin^2 photon")
    _add_common(sp)
    sp.add_argument("--case", choices=("matched", "ground", "empty"))
    sp.add_argument("--photon-duration-us", dest="photon_duration_us")
    sp.add_argument("--t0-us", dest="t0_us")
    sp.add_argument("--c0-sq", dest="c0_sq")

    sp = sub.add_parser("sweep-c", help="storage efficiency versus cooperativity")
    _add_common(sp)
    sp.add_argument("--photon-duration-us", dest="photon_duration_us")
    sp.add_argument("--t0-us", dest="t0_us")
    sp.add_argument("--c0-sq", dest="c0_sq")
    sp.add_argument("--c-min", dest="c_min")
    sp.add_argument("--c-max", dest="c_max")
    sp.add_argument("--points")
    sp.add_argument("--c-values", dest="c_values", help="explicit comma-separated list")

    sp = sub.add_parser("hom", help="time-resolved two-photon coincidence histogram")
    _add_common(sp, params=False)
    sp.add_argument("--duration-us", dest="duration_us")
    sp.add_argument("--t0-us", dest="t0_us")
    sp.add_argument("--delta-omega", dest="delta_omega", help="frequency offset (2pi x MHz)")
    sp.add_argument("--overlap", help="mode overlap in [0, 1]; 0 = distinguishable reference")
    sp.add_argument("--dip-width-ns", dest="dip_width_ns")
    sp.add_argument("--coherence-ns", dest="coherence_ns")
    sp.add_argument("--pairs", help="Monte Carlo detection pairs (adds mc_counts)")
    sp.add_argument("--seed")

    sp = sub.add_parser("qutrit", help="time-bin coincidence map")
    _add_common(sp, params=False, grid=False)
    sp.add_argument("--signal-phases", dest="signal_phases")
    sp.add_argument("--lo-phases", dest="lo_phases")

    sp = sub.add_parser("preset", help="run a named figure scenario")
    sp.add_argument("preset", help=", ".join(PRESETS))
    sp.add_argument("--out-dir", default=".", help="directory for <name>.csv and <name>.json")
    sp.add_argument("--print-config", action="store_true", help="show the preset INI and exit")
    return ap


def _overrides(ns: argparse.Namespace, command: str) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for dest, (sec, key) in FLAG_MAP.items():
        val = getattr(ns, dest, None)
        if val is not None:
            out.setdefault(sec, {})[key] = str(val)
    for key in PAYLOAD_KEYS[command]:
        val = getattr(ns, key, None)
        if val is not None:
            out.setdefault("payload", {})[key] = str(val)
    return out


def _scenario_from_args(ns: argparse.Namespace) -> Scenario:
    if ns.config:
        text = _read_config_text(Path(ns.config))
        base = _parse_ini(text, ns.config)
        cfg_cmd = base.raw("scenario", "command")
        if cfg_cmd is not None and cfg_cmd != ns.command:
            raise ConfigError(f"{ns.config}: scenario is for '{cfg_cmd}', not '{ns.command}'")
    else:
        base = _Source({})
    return _build(_merge(base, _overrides(ns, ns.command)), ns.command)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if ns.command is None:
            parser.print_help(sys.stderr)
            return 1
        if ns.command == "preset":
            if ns.print_config:
                sys.stdout.write(preset_text(ns.preset))
                return 0
            sc = load_preset(ns.preset)
            table, rep = run_scenario(sc)
            out = Path(ns.out_dir)
            _emit(table, str(out / sc.outputs.get("csv", f"{sc.name}.csv")))
            _emit(dumps_report(rep), str(out / sc.outputs.get("json", f"{sc.name}.json")))
            return _status(rep)
        sc = _scenario_from_args(ns)
        table, rep = run_scenario(sc)
        _emit(table, ns.out)
        if ns.json:
            _emit(dumps_report(rep), ns.json)
        return _status(rep)
    except InfeasibleTargetError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (UsageError, CavityForgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _status(rep: dict) -> int:
    # a sweep containing infeasible rows still writes its table but reports exit 2
    if rep.get("kind") == "sweep-c" and rep.get("infeasible"):
        for msg in rep["messages"]:
            print(f"infeasible: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
