"""Electro-optic Mach-Zehnder amplitude modulation.

The intensity transfer follows the interferometric law

    T(t) = floor + (t_max - floor) * sin^2(pi V(t) / (2 v_pi) + bias)

with floor = t_max * 10**(-extinction_db / 10).  Upright pulses bias the
modulator at its null (bias 0) and drive toward v_pi; notches bias at
maximum transmission (bias pi/2) so the same positive voltage pulse digs
a dip down to the floor.

Drive targets are optical: gaussian_drive solves for the electrical
width whose transmitted envelope, mapped through the sin^2 transfer,
lands on the requested intensity FWHM.
"""

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .core import GridSnapWarning, TimeGrid, Wavepacket

__all__ = [
    "EomParams",
    "DriveWaveform",
    "TransmissionEnvelope",
    "BandwidthWarning",
    "default_bias",
    "mz_transmission",
    "gaussian_drive",
    "gaussian_envelope",
    "unit_envelope",
    "apply_modulation",
    "drive_envelope_family",
    "gaussian_envelope_family",
]

# pulse generators below this electrical width are outside the validated
# hardware envelope; faster drives are allowed but flagged
MIN_DRIVE_FWHM_NS = 0.3

_FOUR_LN2 = 4.0 * math.log(2.0)


class BandwidthWarning(UserWarning):
    """Drive width below the validated generator limit."""


@dataclass(frozen=True)
class EomParams:
    """Static modulator parameters; voltages in volts, times in ns."""

    v_pi: float = 4.0
    extinction_db: float = 20.0
    t_max: float = 1.0
    bias_phase: float = 0.0

    def __post_init__(self):
        if self.v_pi <= 0.0:
            raise ValueError("v_pi must be positive")
        if self.extinction_db <= 0.0:
            raise ValueError("extinction_db must be positive")
        if not 0.0 < self.t_max <= 1.0:
            raise ValueError("t_max must lie in (0, 1]")
        if not math.isfinite(self.bias_phase):
            raise ValueError("bias_phase must be finite")

    @property
    def floor(self) -> float:
        if math.isinf(self.extinction_db):
            return 0.0
        return self.t_max * 10.0 ** (-self.extinction_db / 10.0)


def default_bias(inverted: bool) -> float:
    """Operating point: transmission null for pulses, maximum for notches."""
    return 0.5 * math.pi if inverted else 0.0


@dataclass
class DriveWaveform:
    """Voltage drive V(t).  fwhm is the electrical full width in ns."""

    shape: str
    v_peak: float
    fwhm: float
    delay: float = 0.0
    baseline: float = 0.0
    t_knots: np.ndarray | None = None
    v_knots: np.ndarray | None = None

    def __post_init__(self):
        if self.shape not in ("gaussian", "inverted_gaussian", "square", "piecewise"):
            raise ValueError(f"unknown drive shape {self.shape!r}")
        if self.shape == "piecewise":
            if self.t_knots is None or self.v_knots is None:
                raise ValueError("piecewise drive needs t_knots and v_knots")
            self.t_knots = np.asarray(self.t_knots, dtype=float)
            self.v_knots = np.asarray(self.v_knots, dtype=float)
            if self.t_knots.ndim != 1 or self.t_knots.shape != self.v_knots.shape:
                raise ValueError("t_knots and v_knots must be 1-d and equally long")
            if np.any(np.diff(self.t_knots) <= 0.0):
                raise ValueError("t_knots must be strictly increasing")
        elif self.fwhm <= 0.0:
            raise ValueError("drive fwhm must be positive")

    def voltage(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape in ("gaussian", "inverted_gaussian"):
            arg = (t - self.delay) / self.fwhm
            return self.baseline + self.v_peak * np.exp(-_FOUR_LN2 * arg * arg)
        if self.shape == "square":
            inside = np.abs(t - self.delay) <= 0.5 * self.fwhm
            return self.baseline + self.v_peak * inside
        return np.interp(
            t - self.delay, self.t_knots, self.v_knots, left=self.baseline, right=self.baseline
        )

    @property
    def inverted(self) -> bool:
        return self.shape == "inverted_gaussian"


@dataclass
class TransmissionEnvelope:
    """Sampled intensity transmission, values within [floor, t_max]."""

    grid: TimeGrid
    transmission: np.ndarray
    floor: float
    t_max: float
    resting: float

    def __post_init__(self):
        self.transmission = np.asarray(self.transmission, dtype=float)
        if self.transmission.shape != (self.grid.n,):
            raise ValueError("transmission length does not match the grid")
        if not np.all(np.isfinite(self.transmission)):
            raise ValueError("transmission contains non-finite samples")
        if self.floor < 0.0 or self.t_max > 1.0 or self.floor > self.t_max:
            raise ValueError("need 0 <= floor <= t_max <= 1")
        lo = self.transmission.min()
        hi = self.transmission.max()
        if lo < self.floor - 1e-12 or hi > self.t_max + 1e-12:
            raise ValueError("transmission leaves the [floor, t_max] range")


def mz_transmission(drive: DriveWaveform, params: EomParams, grid: TimeGrid) -> TransmissionEnvelope:
    """Sample the sin^2 transfer of the drive on the grid."""
    floor = params.floor
    span = params.t_max - floor
    phase = 0.5 * math.pi * drive.voltage(grid.times()) / params.v_pi + params.bias_phase
    t = floor + span * np.sin(phase) ** 2
    np.clip(t, floor, params.t_max, out=t)
    rest_phase = 0.5 * math.pi * drive.baseline / params.v_pi + params.bias_phase
    resting = float(np.clip(floor + span * math.sin(rest_phase) ** 2, floor, params.t_max))
    return TransmissionEnvelope(grid, t, floor, params.t_max, resting)


def _solve_half_point(a: float, level: float) -> float:
    """Drive fraction g where sin^2(a g) crosses level, on (0, 1)."""
    f = lambda g: math.sin(a * g) ** 2 - level
    return brentq(f, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)


def gaussian_drive(
    v_peak: float,
    fwhm_optical: float,
    delay: float = 0.0,
    inverted: bool = False,
    params: EomParams | None = None,
    min_fwhm_ns: float = MIN_DRIVE_FWHM_NS,
) -> DriveWaveform:
    """Gaussian voltage pulse sized to hit an optical intensity FWHM.

    The optical target is measured on the transmitted envelope: absolute
    half maximum for upright pulses, half depth for notches.  Because the
    transfer only rescales the drive amplitude, the optical width is
    proportional to the electrical width and one numerical half-point
    solve fixes the ratio.  Raises on transfer saturation, i.e. when the
    configured v_pi and bias cannot reach the target at all.
    """
    if params is None:
        params = EomParams()
    if fwhm_optical <= 0.0:
        raise ValueError("fwhm_optical must be positive")
    if v_peak <= 0.0:
        raise ValueError("v_peak must be positive")
    if v_peak > params.v_pi * (1.0 + 1e-12):
        raise ValueError(
            f"transfer saturation: v_peak={v_peak} exceeds v_pi={params.v_pi} and folds the transfer"
        )
    a = 0.5 * math.pi * min(v_peak, params.v_pi) / params.v_pi
    floor = params.floor
    span = params.t_max - floor
    peak_swing = math.sin(a) ** 2
    if inverted:
        # dip half depth: sin^2(a g) = sin^2(a) / 2
        level = 0.5 * peak_swing
    else:
        # absolute half maximum: floor + span sin^2(a g) = (floor + span sin^2(a)) / 2
        level = 0.5 * peak_swing - 0.5 * floor / span
        if level <= 0.0:
            raise ValueError(
                "transfer saturation: drive too weak to lift the envelope to twice the floor"
            )
    g_half = _solve_half_point(a, level)
    fwhm_e = fwhm_optical * math.sqrt(math.log(2.0) / math.log(1.0 / g_half))
    if fwhm_e < min_fwhm_ns:
        warnings.warn(
            f"electrical fwhm {fwhm_e:.4f} ns below the {min_fwhm_ns} ns generator limit",
            BandwidthWarning,
            stacklevel=2,
        )
    shape = "inverted_gaussian" if inverted else "gaussian"
    return DriveWaveform(shape, v_peak, fwhm_e, delay)


def compensated_gaussian_drive(
    fwhm_optical: float,
    center: float,
    params: EomParams,
    dt: float = 0.001,
    half_span_factor: float = 2.5,
) -> DriveWaveform:
    """Piecewise drive pre-distorted so the sin^2 transfer gives a Gaussian.

    V(t) = (2 v_pi / pi) asin(sqrt(G(t))) maps through the transfer to a
    transmission whose Gaussian component (above the floor for bias 0,
    below the maximum for the pi/2 notch bias) has exactly the requested
    intensity FWHM.  Knots are sampled every dt out to half_span_factor
    optical widths; beyond them the drive rests at zero, where the
    residual component is below 1e-8 of full swing.
    """
    if fwhm_optical <= 0.0:
        raise ValueError("fwhm_optical must be positive")
    half = half_span_factor * fwhm_optical
    n = int(math.ceil(half / dt))
    t_knots = center + dt * np.arange(-n, n + 1)
    arg = (t_knots - center) / fwhm_optical
    g = np.exp(-_FOUR_LN2 * arg * arg)
    v_knots = (2.0 * params.v_pi / math.pi) * np.arcsin(np.sqrt(g))
    return DriveWaveform(
        "piecewise", params.v_pi, fwhm_optical, t_knots=t_knots, v_knots=v_knots
    )


def gaussian_envelope(
    grid: TimeGrid,
    fwhm: float,
    center: float,
    t_max: float = 1.0,
    floor: float = 0.0,
) -> TransmissionEnvelope:
    """Ideal Gaussian transmission window, bypassing the transfer law."""
    if fwhm <= 0.0:
        raise ValueError("fwhm must be positive")
    arg = (grid.times() - center) / fwhm
    t = floor + (t_max - floor) * np.exp(-_FOUR_LN2 * arg * arg)
    return TransmissionEnvelope(grid, t, floor, t_max, floor)


def unit_envelope(grid: TimeGrid, t_max: float = 1.0) -> TransmissionEnvelope:
    """Fully open modulator (the unmodulated limit)."""
    return TransmissionEnvelope(grid, np.full(grid.n, t_max), t_max, t_max, t_max)


def apply_modulation(
    wp: Wavepacket, env: TransmissionEnvelope, delta_t_mod: float = 0.0
) -> Wavepacket:
    """Transmit the wavepacket: psi'(t) = sqrt(T(t - delta_t_mod)) psi(t).

    The envelope must share the wavepacket grid.  delta_t_mod is snapped
    to the nearest grid step (reported via GridSnapWarning when the move
    is larger than rounding); samples shifted in from beyond the envelope
    take its resting transmission.
    """
    if env.grid != wp.grid:
        raise ValueError("envelope and wavepacket grids differ")
    dt = wp.grid.dt
    k = int(round(delta_t_mod / dt))
    if abs(delta_t_mod - k * dt) > 1e-9 * dt:
        warnings.warn(
            f"modulation delay {delta_t_mod} snapped to {k * dt} ({k} grid steps)",
            GridSnapWarning,
            stacklevel=2,
        )
    n = wp.grid.n
    shifted = np.full(n, env.resting)
    if k >= 0:
        if k < n:
            shifted[k:] = env.transmission[: n - k]
    else:
        if -k < n:
            shifted[: n + k] = env.transmission[-k:]
    return Wavepacket(wp.grid, wp.amplitude * np.sqrt(shifted))


def drive_envelope_family(
    drive: DriveWaveform, params: EomParams, grid: TimeGrid
) -> Callable[[float], TransmissionEnvelope]:
    """Envelope as a continuous function of extra drive delay."""

    def family(delay: float) -> TransmissionEnvelope:
        return mz_transmission(replace(drive, delay=drive.delay + delay), params, grid)

    return family


def gaussian_envelope_family(
    grid: TimeGrid, fwhm: float, t_max: float = 1.0, floor: float = 0.0
) -> Callable[[float], TransmissionEnvelope]:
    """Ideal Gaussian window centered at the requested delay."""

    def family(delay: float) -> TransmissionEnvelope:
        return gaussian_envelope(grid, fwhm, delay, t_max, floor)

    return family
