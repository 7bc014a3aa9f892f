"""Time grids, wavepackets, and intensity traces.

All times are nanoseconds.  Wavepacket amplitudes carry units of
ns**-0.5 so that the trapezoid integral of |amplitude|**2 is a
dimensionless detection probability in [0, 1].
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TimeGrid",
    "Wavepacket",
    "IntensityTrace",
    "GridSnapWarning",
    "CsvFormatError",
    "make_time_grid",
    "norm",
    "fwhm",
    "write_wavepacket_csv",
    "read_wavepacket_csv",
    "write_trace_csv",
    "read_trace_csv",
]


class GridSnapWarning(UserWarning):
    """Emitted when a requested time or delay is moved onto the grid."""


class CsvFormatError(ValueError):
    """Malformed CSV input; carries the offending file and line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling grid on [t_start, t_end] with spacing dt."""

    t_start: float
    t_end: float
    dt: float
    n: int
    snapped: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.n != int(round((self.t_end - self.t_start) / self.dt)) + 1:
            raise ValueError("n inconsistent with span and dt")

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def span(self) -> float:
        return self.t_end - self.t_start


def make_time_grid(t_start: float, t_end: float, dt: float) -> TimeGrid:
    """Build a uniform grid, snapping t_end down to the last full step.

    A requested span that is not an integer number of steps keeps t_start
    and dt and shortens t_end; the snap is recorded on the grid and
    announced with a GridSnapWarning.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if t_end <= t_start:
        raise ValueError("t_end must exceed t_start")
    # the 1e-9 nudge keeps spans that are integer multiples of dt up to
    # float rounding from losing their last step
    steps = int(np.floor((t_end - t_start) / dt + 1e-9))
    if steps < 1:
        raise ValueError("dt exceeds the grid span")
    exact_end = t_start + steps * dt
    snapped = (t_end - exact_end) > 1e-9 * dt
    if snapped:
        warnings.warn(
            f"grid end {t_end} snapped down to {exact_end} ({steps} steps of {dt})",
            GridSnapWarning,
            stacklevel=2,
        )
    return TimeGrid(t_start, exact_end if snapped else t_end, dt, steps + 1, snapped)


@dataclass
class Wavepacket:
    """Complex field amplitude sampled on a time grid, units ns**-0.5."""

    grid: TimeGrid
    amplitude: np.ndarray

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=complex)
        if self.amplitude.shape != (self.grid.n,):
            raise ValueError("amplitude length does not match the grid")
        if not np.all(np.isfinite(self.amplitude.view(float))):
            raise ValueError("amplitude contains non-finite samples")
        total = norm(self)
        if total > 1.0 + 1e-9:
            raise ValueError(f"wavepacket norm {total} exceeds 1")

    def intensity(self) -> "IntensityTrace":
        a = self.amplitude
        return IntensityTrace(self.grid, a.real**2 + a.imag**2)


@dataclass
class IntensityTrace:
    """Nonnegative real-valued trace on a time grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values length does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain non-finite samples")
        if np.any(self.values < 0.0):
            raise ValueError("values must be nonnegative")


def _values_of(x) -> tuple[TimeGrid, np.ndarray]:
    if isinstance(x, Wavepacket):
        a = x.amplitude
        return x.grid, a.real**2 + a.imag**2
    if isinstance(x, IntensityTrace):
        return x.grid, x.values
    raise TypeError("expected a Wavepacket or IntensityTrace")


def norm(x) -> float:
    """Trapezoid integral of the intensity over the grid."""
    grid, v = _values_of(x)
    return float(np.trapezoid(v, dx=grid.dt))


def fwhm(x) -> float:
    """Full width at half maximum of a trace via linear interpolation.

    The half level is half of the global maximum.  Crossings are searched
    outward from the peak; a peak sitting on a grid boundary uses that
    boundary as its crossing.  Traces that never cross the half level on
    an interior side raise "no half-max crossings".
    """
    grid, v = _values_of(x)
    t = grid.times()
    i_first = int(np.argmax(v))
    i_last = grid.n - 1 - int(np.argmax(v[::-1]))
    vmax = v[i_first]
    if vmax <= 0.0:
        raise ValueError("no half-max crossings: trace has no positive peak")
    half = 0.5 * vmax

    left = None
    for j in range(i_first - 1, -1, -1):
        if v[j] < half:
            frac = (half - v[j]) / (v[j + 1] - v[j])
            left = t[j] + frac * grid.dt
            break
    if left is None:
        if i_first == 0:
            left = t[0]
        else:
            raise ValueError("no half-max crossings: trace starts above half maximum")

    right = None
    for j in range(i_last + 1, grid.n):
        if v[j] < half:
            frac = (v[j - 1] - half) / (v[j - 1] - v[j])
            right = t[j - 1] + frac * grid.dt
            break
    if right is None:
        if i_last == grid.n - 1:
            right = t[-1]
        else:
            raise ValueError("no half-max crossings: trace ends above half maximum")

    if left == t[0] and right == t[-1]:
        raise ValueError("no half-max crossings: trace never falls below half maximum")
    return float(right - left)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_wavepacket_csv(path, wp: Wavepacket) -> None:
    t = wp.grid.times()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("t_ns,re,im\n")
        for tk, a in zip(t, wp.amplitude):
            fh.write(f"{_fmt(tk)},{_fmt(a.real)},{_fmt(a.imag)}\n")


def write_trace_csv(path, trace: IntensityTrace, value_header: str = "value") -> None:
    t = trace.grid.times()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"t_ns,{value_header}\n")
        for tk, vk in zip(t, trace.values):
            fh.write(f"{_fmt(tk)},{_fmt(vk)}\n")


def _read_rows(path, n_cols, header):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline()
        if first.strip() != header:
            raise CsvFormatError(path, 1, f"expected header {header!r}, got {first.strip()!r}")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != n_cols:
                raise CsvFormatError(path, line_no, f"expected {n_cols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise CsvFormatError(path, line_no, f"non-numeric value in {line.strip()!r}") from None
    return np.asarray(rows, dtype=float)


def _grid_from_times(path, t: np.ndarray) -> TimeGrid:
    if t.shape[0] < 2:
        raise CsvFormatError(path, 2, "need at least two samples")
    dt = (t[-1] - t[0]) / (t.shape[0] - 1)
    if dt <= 0.0 or np.max(np.abs(np.diff(t) - dt)) > 1e-6 * max(dt, 1e-12):
        raise CsvFormatError(path, 2, "time column is not a uniform increasing grid")
    return TimeGrid(float(t[0]), float(t[0]) + dt * (t.shape[0] - 1), float(dt), t.shape[0])


def read_wavepacket_csv(path) -> Wavepacket:
    rows = _read_rows(path, 3, "t_ns,re,im")
    grid = _grid_from_times(path, rows[:, 0])
    return Wavepacket(grid, rows[:, 1] + 1j * rows[:, 2])


def read_trace_csv(path, value_header: str = "value") -> IntensityTrace:
    rows = _read_rows(path, 2, f"t_ns,{value_header}")
    grid = _grid_from_times(path, rows[:, 0])
    return IntensityTrace(grid, rows[:, 1])
