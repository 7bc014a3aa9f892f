"""Two-level emitter: exponential decay wavepackets and pure dephasing.

The decay and coherence times map onto rates through

    gamma      = 1 / tau_sp
    gamma_star = 1 / tau_coh - 1 / (2 tau_sp)

with the transform limit tau_coh <= 2 tau_sp.  Dephasing is Markovian:
the optical phase performs a Wiener walk whose increments over dt have
variance 2 gamma_star dt, which gives first-order coherence
exp(-gamma_star |tau|) on top of the radiative envelope.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import GridSnapWarning, TimeGrid, Wavepacket

__all__ = [
    "EmitterModel",
    "PhaseTrajectory",
    "coherence_params",
    "exponential_wavepacket",
    "sample_phase_trajectory",
    "phase_trajectories",
    "apply_phase",
]

# grids should extend at least this many lifetimes past t_emit so the
# truncated tail stays below 5e-5 of the norm
TRUNCATION_LIFETIMES = 10.0


@dataclass(frozen=True)
class EmitterModel:
    """Radiative and coherence rates of the emitter, times in ns."""

    tau_sp: float
    tau_coh: float
    gamma: float
    gamma_star: float
    wavelength_nm: float = 1302.5

    def unmodulated_indistinguishability(self) -> float:
        """Two-photon overlap for the bare decay, gamma/(gamma + 2 gamma_star)."""
        return self.gamma / (self.gamma + 2.0 * self.gamma_star)


@dataclass
class PhaseTrajectory:
    """One realization of the dephasing phase walk, phase[0] = 0."""

    grid: TimeGrid
    phase: np.ndarray
    seed: int

    def __post_init__(self):
        self.phase = np.asarray(self.phase, dtype=float)
        if self.phase.shape != (self.grid.n,):
            raise ValueError("phase length does not match the grid")
        if self.phase[0] != 0.0:
            raise ValueError("phase must start at zero")


def coherence_params(
    tau_sp_ns: float, tau_coh_ns: float, wavelength_nm: float = 1302.5
) -> EmitterModel:
    """Derive gamma and gamma_star from lifetime and coherence time."""
    if tau_sp_ns <= 0.0:
        raise ValueError("tau_sp_ns must be positive")
    if tau_coh_ns <= 0.0:
        raise ValueError("tau_coh_ns must be positive")
    if tau_coh_ns > 2.0 * tau_sp_ns * (1.0 + 1e-12):
        raise ValueError(
            f"tau_coh_ns={tau_coh_ns} is above the transform limit 2*tau_sp={2.0 * tau_sp_ns}"
        )
    gamma = 1.0 / tau_sp_ns
    gamma_star = max(0.0, 1.0 / tau_coh_ns - 0.5 / tau_sp_ns)
    return EmitterModel(tau_sp_ns, tau_coh_ns, gamma, gamma_star, wavelength_nm)


def exponential_wavepacket(
    model: EmitterModel, grid: TimeGrid, t_emit: float = 0.0
) -> Wavepacket:
    """Decay wavepacket with |psi(t)|^2 = gamma * exp(-gamma (t - t_emit)).

    t_emit is snapped to the nearest grid sample so the onset jump sits
    on a point, and the sampled amplitude is normalized to the analytic
    mass 1 - exp(-gamma (t_end - t_emit)); otherwise the trapezoid rule
    overshoots on the convex decay and the norm could exceed one.
    """
    if grid.t_end <= t_emit:
        raise ValueError(f"grid ends at {grid.t_end} before the emission time {t_emit}")
    k = round((t_emit - grid.t_start) / grid.dt)
    snapped = grid.t_start + k * grid.dt
    if abs(t_emit - snapped) > 1e-9 * grid.dt:
        warnings.warn(
            f"emission time {t_emit} snapped to {snapped} ({k} grid steps)",
            GridSnapWarning,
            stacklevel=2,
        )
    t_rel = grid.times() - snapped
    amp = np.where(
        t_rel >= 0.0,
        np.sqrt(model.gamma) * np.exp(-0.5 * model.gamma * np.maximum(t_rel, 0.0)),
        0.0,
    )
    raw = float(np.trapezoid(amp * amp, dx=grid.dt))
    if raw > 0.0:
        mass = 1.0 - math.exp(-model.gamma * (grid.t_end - snapped))
        amp *= math.sqrt(mass / raw)
    return Wavepacket(grid, amp)


def sample_phase_trajectory(model: EmitterModel, grid: TimeGrid, seed: int) -> PhaseTrajectory:
    """Draw one Wiener phase walk; deterministic for a given seed."""
    phase = np.zeros(grid.n)
    if model.gamma_star > 0.0:
        rng = np.random.default_rng(seed)
        steps = rng.standard_normal(grid.n - 1) * np.sqrt(2.0 * model.gamma_star * grid.dt)
        np.cumsum(steps, out=phase[1:])
    return PhaseTrajectory(grid, phase, seed)


def phase_trajectories(
    model: EmitterModel, grid: TimeGrid, count: int, seed: int
) -> Iterator[PhaseTrajectory]:
    """Ensemble of independent walks with per-trajectory seeds seed + i."""
    for i in range(count):
        yield sample_phase_trajectory(model, grid, seed + i)


def apply_phase(wp: Wavepacket, traj: PhaseTrajectory) -> Wavepacket:
    """Multiply the amplitude by exp(i phase); intensity is unaffected."""
    if traj.grid != wp.grid:
        raise ValueError("trajectory and wavepacket grids differ")
    return Wavepacket(wp.grid, wp.amplitude * np.exp(1j * traj.phase))
