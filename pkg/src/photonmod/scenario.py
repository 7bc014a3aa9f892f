"""Scenario files: a flat INI grammar mapped onto the simulation objects.

A scenario file is standard INI (configparser dialect: ``key = value``
lines grouped under ``[section]`` headers, ``#``/``;`` comments).  The
``[scenario]`` section names the run and picks one of three kinds:

``pulsed``
    Pulse the emitter, optionally modulate each photon with a drive at
    one or more delays, Monte Carlo detect and histogram.  Sections:
    emitter, eom, drive, timing, detector, analysis.
``sweep``
    Trade-off table of indistinguishability, transmitted fraction, and
    rate over modulation widths.  Sections: emitter, sweep.
``calibration``
    Continuous-wave light through the modulator at one or more target
    optical widths, histogrammed and fitted.  Sections: eom, detector,
    calibration.

All numeric keys carry their unit in the name (``_ns``, ``_hz``, ...).
Every invariant of the underlying objects is checked while the file is
parsed, so a bad value fails before any computation starts, as a
ConfigError naming the section and key.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace

from .emitter import EmitterModel, coherence_params
from .modulator import EomParams, default_bias
from .detection import DetectorModel, TimingConfig
from .core import TimeGrid, make_time_grid


class ConfigError(ValueError):
    """Scenario file rejected; message names the offending section/key."""


_DRIVE_SHAPES = ("gaussian", "notch", "none")
_FIT_KINDS = ("exponential", "gaussian", "notch", "none")


@dataclass(frozen=True)
class DriveSpec:
    """What the modulator does to each photon."""

    shape: str = "none"
    optical_fwhm_ns: float = 0.72
    v_peak_v: float = 4.0
    align_ns: float = 0.4
    delays_ns: tuple = ()
    include_unmodulated: bool = True

    @property
    def inverted(self) -> bool:
        return self.shape == "notch"


@dataclass(frozen=True)
class AnalysisSpec:
    """Histogramming and fitting choices.

    fit selects what gets fitted: "exponential" the unmodulated histogram,
    "gaussian" / "notch" every modulated histogram of matching orientation
    (on the ratio to the bare-decay expectation, so the envelope rather
    than the carved pulse is measured), "none" nothing.  A selection with
    no matching histogram is skipped with a report note.
    """

    bin_width_ns: float = 0.05
    span_ns: float = 20.0
    grid_dt_ns: float = 0.001
    grid_t_end_ns: float = 20.0
    fit: str = "exponential"


@dataclass(frozen=True)
class SweepSpec:
    """Trade-off sweep axes and the efficiency chain."""

    tau_mod_ns: tuple
    tau_coh_ns: tuple
    rep_rate_hz: float = 50e6
    target_rate_hz: float | None = 6.8e4
    target_tau_mod_ns: float = 0.14
    chain_factors: tuple = ()


@dataclass(frozen=True)
class CalibrationSpec:
    """cw calibration targets and statistics."""

    pulse_targets_ns: tuple = (0.72, 0.52)
    notch_targets_ns: tuple = (0.77,)
    counts: int = 100_000
    center_ns: float = 2.0
    bin_width_ns: float = 0.025
    span_ns: float = 4.0
    grid_pad_ns: float = 1.0
    grid_dt_ns: float = 0.001


@dataclass(frozen=True)
class Scenario:
    """Validated, ready-to-run description of one deterministic run."""

    name: str
    kind: str
    seed: int
    emitter: EmitterModel | None = None
    eom: EomParams | None = None
    drive: DriveSpec | None = None
    timing: TimingConfig | None = None
    detector: DetectorModel | None = None
    analysis: AnalysisSpec | None = None
    sweep: SweepSpec | None = None
    calibration: CalibrationSpec | None = None

    def grid(self) -> TimeGrid:
        a = self.analysis if self.analysis is not None else AnalysisSpec()
        return make_time_grid(0.0, a.grid_t_end_ns, a.grid_dt_ns)


class _Section:
    """One INI section with typed, error-annotated accessors."""

    def __init__(self, name: str, raw: dict):
        self.name = name
        self.raw = dict(raw)
        self.seen: set = set()

    def _get(self, key: str, default):
        """Raw string for the key, the (string) default when absent, or None."""
        self.seen.add(key)
        if key in self.raw:
            return self.raw[key]
        if default is _REQUIRED:
            raise ConfigError(f"section [{self.name}]: missing required key {key}")
        return default

    def text(self, key: str, default=None, choices=None):
        v = self._get(key, default)
        if v is None:
            return None
        v = v.strip()
        if choices is not None and v not in choices:
            raise ConfigError(
                f"key {self.name}.{key}: expected one of {', '.join(choices)}, got {v!r}"
            )
        return v

    def number(self, key: str, default=None, allow_inf: bool = False):
        v = self._get(key, default)
        if v is None:
            return None
        try:
            x = float(v)
        except ValueError:
            raise ConfigError(f"key {self.name}.{key}: expected a number, got {v!r}") from None
        if math.isnan(x) or (math.isinf(x) and not allow_inf):
            raise ConfigError(f"key {self.name}.{key}: expected a finite number, got {v!r}")
        return x

    def integer(self, key: str, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"key {self.name}.{key}: expected an integer, got {v!r}") from None

    def flag(self, key: str, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        low = v.strip().lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"key {self.name}.{key}: expected true/false, got {v!r}")

    def numbers(self, key: str, default=None, allow_inf: bool = False):
        v = self._get(key, default)
        if v is None:
            return None
        out = []
        for tok in v.replace(",", " ").split():
            try:
                x = float(tok)
            except ValueError:
                raise ConfigError(
                    f"key {self.name}.{key}: expected numbers, got {tok!r}"
                ) from None
            if math.isnan(x) or (math.isinf(x) and not allow_inf):
                raise ConfigError(f"key {self.name}.{key}: {tok!r} is not allowed here")
            out.append(x)
        if not out:
            raise ConfigError(f"key {self.name}.{key}: expected at least one number")
        return tuple(out)

    def reject_unknown(self):
        extra = sorted(set(self.raw) - self.seen)
        if extra:
            raise ConfigError(f"section [{self.name}]: unknown key {extra[0]}")


_REQUIRED = object()


def _wrap(section: str, key: str, fn, *args, **kwargs):
    """Run a module constructor, renaming its ValueError to a config key."""
    try:
        return fn(*args, **kwargs)
    except ValueError as err:
        raise ConfigError(f"key {section}.{key}: {err}") from None


def _parse_emitter(sec: _Section) -> EmitterModel:
    tau_sp = sec.number("tau_sp_ns", _REQUIRED)
    tau_coh = sec.number("tau_coh_ns", _REQUIRED)
    wavelength = float(sec.number("wavelength_nm", "1302.5"))
    sec.reject_unknown()
    return _wrap(sec.name, "tau_coh_ns", coherence_params, tau_sp, tau_coh, wavelength)


def _parse_eom(sec: _Section, inverted: bool) -> EomParams:
    v_pi = sec.number("v_pi_v", "4.0")
    extinction = sec.number("extinction_db", "22.0")
    t_max = sec.number("t_max", "1.0")
    sec.reject_unknown()
    return _wrap(
        sec.name,
        "v_pi_v",
        EomParams,
        float(v_pi),
        float(extinction),
        float(t_max),
        default_bias(inverted),
    )


def _parse_drive(sec: _Section) -> DriveSpec:
    shape = sec.text("shape", "none", choices=_DRIVE_SHAPES)
    fwhm = sec.number("optical_fwhm_ns", "0.72")
    v_peak = sec.number("v_peak_v", "4.0")
    align = sec.number("align_ns", "0.4")
    delays = sec.numbers("delays_ns", "0.0")
    include = sec.flag("include_unmodulated", "true")
    sec.reject_unknown()
    if shape != "none" and float(fwhm) <= 0.0:
        raise ConfigError(f"key {sec.name}.optical_fwhm_ns: must be positive")
    return DriveSpec(shape, float(fwhm), float(v_peak), float(align), tuple(delays), include)


def _parse_timing(sec: _Section) -> TimingConfig:
    t_rep = sec.number("t_rep_ns", "20.0")
    divider = sec.integer("gate_divider", "10")
    t_gate = sec.number("t_gate_ns", "50.0")
    n_pulses = sec.integer("n_pulses", "1000000")
    sec.reject_unknown()
    return _wrap(
        sec.name, "t_rep_ns", TimingConfig, float(t_rep), int(divider), float(t_gate), int(n_pulses)
    )


def _parse_detector(sec: _Section) -> DetectorModel:
    eff = sec.number("efficiency", "1.0")
    jitter = sec.number("jitter_fwhm_ns", "0.25")
    dark = sec.number("dark_rate_per_ns", "0.0")
    sec.reject_unknown()
    return _wrap(sec.name, "efficiency", DetectorModel, float(eff), float(jitter), float(dark))


def _parse_analysis(sec: _Section) -> AnalysisSpec:
    bin_width = float(sec.number("bin_width_ns", "0.05"))
    span = float(sec.number("span_ns", "20.0"))
    dt = float(sec.number("grid_dt_ns", "0.001"))
    t_end = float(sec.number("grid_t_end_ns", "20.0"))
    fit = sec.text("fit", "exponential", choices=_FIT_KINDS)
    sec.reject_unknown()
    if bin_width <= 0.0:
        raise ConfigError(f"key {sec.name}.bin_width_ns: must be positive")
    if span < bin_width:
        raise ConfigError(f"key {sec.name}.span_ns: must cover at least one bin")
    if dt <= 0.0 or t_end <= 0.0:
        raise ConfigError(f"key {sec.name}.grid_dt_ns: grid extents must be positive")
    return AnalysisSpec(bin_width, span, dt, t_end, fit)


def _parse_sweep(sec: _Section) -> SweepSpec:
    tau_mod = sec.numbers("tau_mod_ns", _REQUIRED, allow_inf=True)
    tau_coh = sec.numbers("tau_coh_ns", "0.28")
    rep = float(sec.number("rep_rate_hz", "50e6"))
    target = sec.number("target_rate_hz", None)
    target = float(target) if target is not None else None
    target_tau = float(sec.number("target_tau_mod_ns", "0.14"))
    factors = []
    for key in sorted(sec.raw):
        if key.startswith("chain."):
            factors.append((key[len("chain."):], float(sec.number(key, _REQUIRED))))
    sec.reject_unknown()
    for w in tau_mod:
        if w <= 0.0:
            raise ConfigError(f"key {sec.name}.tau_mod_ns: widths must be positive")
    if rep <= 0.0:
        raise ConfigError(f"key {sec.name}.rep_rate_hz: must be positive")
    if factors and target is not None:
        raise ConfigError(
            f"section [{sec.name}]: give either chain.* factors or target_rate_hz, not both"
        )
    if not factors and target is None:
        # the default chain is calibrated so the reference width hits this rate
        target = 6.8e4
    return SweepSpec(tuple(tau_mod), tuple(tau_coh), rep, target, target_tau, tuple(factors))


def _parse_calibration(sec: _Section) -> CalibrationSpec:
    pulses = sec.numbers("pulse_targets_ns", "0.72 0.52")
    notches = sec.numbers("notch_targets_ns", "0.77")
    counts = int(sec.integer("counts", "100000"))
    center = float(sec.number("center_ns", "2.0"))
    bin_width = float(sec.number("bin_width_ns", "0.025"))
    span = float(sec.number("span_ns", "4.0"))
    pad = float(sec.number("grid_pad_ns", "1.0"))
    dt = float(sec.number("grid_dt_ns", "0.001"))
    sec.reject_unknown()
    if counts < 1:
        raise ConfigError(f"key {sec.name}.counts: must be positive")
    for w in pulses + notches:
        if w <= 0.0:
            raise ConfigError(f"key {sec.name}.pulse_targets_ns: widths must be positive")
    if not 0.0 < center < span:
        raise ConfigError(f"key {sec.name}.center_ns: must lie inside the histogram span")
    return CalibrationSpec(tuple(pulses), tuple(notches), counts, center, bin_width, span, pad, dt)


def parse_scenario_text(text: str, origin: str = "<string>") -> Scenario:
    """Parse and fully validate a scenario file's contents."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as err:
        raise ConfigError(f"{origin}: {err}") from None

    sections = {name: _Section(name, cp[name]) for name in cp.sections()}
    if "scenario" not in sections:
        raise ConfigError(f"{origin}: missing required section [scenario]")
    top = sections.pop("scenario")
    name = top.text("name", _REQUIRED)
    kind = top.text("kind", "pulsed", choices=("pulsed", "sweep", "calibration"))
    seed = top.integer("seed", "0")
    top.reject_unknown()

    def take(section_name: str) -> _Section:
        return sections.pop(section_name, _Section(section_name, {}))

    if kind == "pulsed":
        drive = _parse_drive(take("drive"))
        scenario = Scenario(
            name=name,
            kind=kind,
            seed=int(seed),
            emitter=_parse_emitter(take("emitter")),
            eom=_parse_eom(take("eom"), drive.inverted),
            drive=drive,
            timing=_parse_timing(take("timing")),
            detector=_parse_detector(take("detector")),
            analysis=_parse_analysis(take("analysis")),
        )
    elif kind == "sweep":
        scenario = Scenario(
            name=name,
            kind=kind,
            seed=int(seed),
            emitter=_parse_emitter(take("emitter")),
            sweep=_parse_sweep(take("sweep")),
        )
    else:
        scenario = Scenario(
            name=name,
            kind=kind,
            seed=int(seed),
            eom=_parse_eom(take("eom"), False),
            detector=_parse_detector(take("detector")),
            calibration=_parse_calibration(take("calibration")),
        )
    if sections:
        stray = sorted(sections)[0]
        raise ConfigError(f"section [{stray}]: not used by kind = {kind}")
    return scenario


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file from disk."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read scenario file {path}: {err.strerror}") from None
    return parse_scenario_text(text, origin=str(path))


def with_overrides(
    scenario: Scenario, seed: int | None = None, n_pulses: int | None = None
) -> Scenario:
    """Apply command-line overrides, re-validating what they touch."""
    out = scenario
    if seed is not None:
        out = replace(out, seed=int(seed))
    if n_pulses is not None:
        if out.timing is None:
            raise ConfigError("key timing.n_pulses: this scenario kind takes no pulse count")
        timing = _wrap(
            "timing",
            "n_pulses",
            TimingConfig,
            out.timing.t_rep,
            out.timing.gate_divider,
            out.timing.t_gate,
            int(n_pulses),
        )
        out = replace(out, timing=timing)
    return out
