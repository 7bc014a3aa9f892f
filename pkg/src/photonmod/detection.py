"""Gated single-photon detection and time-correlated histogramming.

Cycle k fires the excitation at k * t_rep; every gate_divider-th cycle
arms the detector for a window of t_gate starting at the excitation.
Within a gated cycle at most one event is recorded (the earliest of the
photon detection and any dark counts).  Detection uses the wavepacket
intensity only; the arrival time is drawn from the normalized intensity,
the recorded timestamp adds Gaussian jitter, and timestamps are kept
gate-relative.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import IntensityTrace, TimeGrid, Wavepacket, norm

__all__ = [
    "TimingConfig",
    "DetectorModel",
    "EventSchedule",
    "TimestampStream",
    "Histogram",
    "ExpectedHistogram",
    "schedule_events",
    "detect_mc",
    "sample_counts_from_trace",
    "histogram",
    "merge_histograms",
    "analytic_histogram",
    "write_histogram_csv",
    "read_histogram_csv",
    "write_timestamps_csv",
]

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class TimingConfig:
    """Excitation, gating, and trigger timing, all in ns."""

    t_rep: float = 20.0
    gate_divider: int = 10
    t_gate: float = 50.0
    n_pulses: int = 1_000_000
    delta_t_mod: float = 0.0

    def __post_init__(self):
        if self.t_rep <= 0.0:
            raise ValueError("t_rep must be positive")
        if self.t_gate <= 0.0:
            raise ValueError("t_gate must be positive")
        if int(self.gate_divider) != self.gate_divider or self.gate_divider < 1:
            raise ValueError("gate_divider must be a positive integer")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError("n_pulses must be a positive integer")


@dataclass(frozen=True)
class DetectorModel:
    """Detection efficiency, timing jitter (FWHM), and dark rate per ns."""

    efficiency: float = 1.0
    jitter_fwhm: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.jitter_fwhm < 0.0:
            raise ValueError("jitter_fwhm must be nonnegative")
        if self.dark_rate < 0.0:
            raise ValueError("dark_rate must be nonnegative")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm * _FWHM_TO_SIGMA


@dataclass
class EventSchedule:
    """Per-cycle excitation, trigger, and gate bookkeeping."""

    timing: TimingConfig
    cycle_index: np.ndarray
    excitation_ns: np.ndarray
    eom_trigger_ns: np.ndarray
    gated: np.ndarray
    gate_open_ns: np.ndarray
    gate_close_ns: np.ndarray

    @property
    def n_gated(self) -> int:
        return int(np.count_nonzero(self.gated))

    def gated_cycles(self) -> np.ndarray:
        return self.cycle_index[self.gated]


def schedule_events(timing: TimingConfig) -> EventSchedule:
    """Lay out excitation and gate times for every cycle."""
    k = np.arange(timing.n_pulses, dtype=np.int64)
    excitation = k * timing.t_rep
    gated = (k % timing.gate_divider) == 0
    return EventSchedule(
        timing=timing,
        cycle_index=k,
        excitation_ns=excitation,
        eom_trigger_ns=excitation + timing.delta_t_mod,
        gated=gated,
        gate_open_ns=excitation.copy(),
        gate_close_ns=excitation + timing.t_gate,
    )


@dataclass
class TimestampStream:
    """Recorded events: global cycle index and gate-relative time."""

    cycle_index: np.ndarray
    t_ns: np.ndarray
    n_gated: int
    n_pulses: int

    def __post_init__(self):
        self.cycle_index = np.asarray(self.cycle_index, dtype=np.int64)
        self.t_ns = np.asarray(self.t_ns, dtype=float)
        if self.cycle_index.shape != self.t_ns.shape:
            raise ValueError("cycle_index and t_ns lengths differ")

    def __len__(self) -> int:
        return self.t_ns.shape[0]


@dataclass
class Histogram:
    """Integer-count TCSPC histogram on uniform bins starting at 0."""

    bin_edges: np.ndarray
    counts: np.ndarray
    total_detected: int
    total_pulses: int
    overflow: int

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape[0] != self.bin_edges.shape[0] - 1:
            raise ValueError("counts length must be len(bin_edges) - 1")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")
        if int(self.counts.sum()) != self.total_detected:
            raise ValueError("counts do not sum to total_detected")
        if self.total_detected > self.total_pulses:
            raise ValueError("total_detected exceeds total_pulses")

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def bin_starts(self) -> np.ndarray:
        return self.bin_edges[:-1]

    def bin_centers(self) -> np.ndarray:
        return self.bin_edges[:-1] + 0.5 * self.bin_width


@dataclass
class ExpectedHistogram:
    """Noise-free expected bin contents for an MC cross check."""

    bin_edges: np.ndarray
    expectation: np.ndarray
    total_expected: float

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def bin_starts(self) -> np.ndarray:
        return self.bin_edges[:-1]

    def bin_centers(self) -> np.ndarray:
        return self.bin_edges[:-1] + 0.5 * self.bin_width


def _intensity_cdf(wp: Wavepacket) -> tuple[np.ndarray, np.ndarray, float]:
    grid = wp.grid
    a = wp.amplitude
    v = a.real**2 + a.imag**2
    cdf = np.empty(grid.n)
    cdf[0] = 0.0
    np.cumsum(0.5 * grid.dt * (v[:-1] + v[1:]), out=cdf[1:])
    return grid.times(), cdf, float(cdf[-1])


def detect_mc(psi, det: DetectorModel, sched: EventSchedule, seed: int) -> TimestampStream:
    """Monte Carlo detection over all gated cycles; deterministic per seed.

    psi is a single Wavepacket shared by every gated cycle, or a sequence
    with one Wavepacket per gated cycle.  Detection fires with probability
    efficiency * norm(psi'), the arrival is inverse-CDF sampled from the
    normalized intensity, must fall inside the gate, and is recorded with
    Gaussian jitter added.  Dark counts arrive uniformly over the gate;
    only the earliest event of a gated cycle is kept.
    """
    timing = sched.timing
    gated_cycles = sched.gated_cycles()
    n_g = gated_cycles.shape[0]
    rng = np.random.default_rng(seed)
    u_det = rng.random(n_g)
    u_time = rng.random(n_g)
    jitter = rng.standard_normal(n_g)

    if isinstance(psi, Wavepacket):
        t_axis, cdf, total = _intensity_cdf(psi)
        p_det = det.efficiency * total
        hit = u_det < p_det
        if total > 0.0:
            arrival = np.interp(u_time[hit] * total, cdf, t_axis)
        else:
            arrival = np.empty(0)
    else:
        packets = list(psi)
        if len(packets) != n_g:
            raise ValueError(f"need one wavepacket per gated cycle ({n_g}), got {len(packets)}")
        hit = np.zeros(n_g, dtype=bool)
        arrivals = np.empty(n_g)
        cache: dict[int, tuple] = {}
        for i, wp in enumerate(packets):
            key = id(wp)
            if key not in cache:
                cache[key] = _intensity_cdf(wp)
            t_axis, cdf, total = cache[key]
            if u_det[i] < det.efficiency * total:
                hit[i] = True
                arrivals[i] = np.interp(u_time[i] * total, cdf, t_axis)
        arrival = arrivals[hit]

    # the gate is checked on the physical arrival; jitter only moves the
    # recorded timestamp
    in_gate = (arrival >= 0.0) & (arrival <= timing.t_gate)
    photon_cycles = gated_cycles[hit][in_gate]
    photon_times = arrival[in_gate] + det.jitter_sigma * jitter[hit][in_gate]

    if det.dark_rate > 0.0:
        n_dark = rng.poisson(det.dark_rate * timing.t_gate, n_g)
        dark_total = int(n_dark.sum())
        dark_cycles = np.repeat(gated_cycles, n_dark)
        dark_times = rng.random(dark_total) * timing.t_gate
        all_cycles = np.concatenate([photon_cycles, dark_cycles])
        all_times = np.concatenate([photon_times, dark_times])
    else:
        all_cycles = photon_cycles
        all_times = photon_times

    # stable two-key sort, then the first record per cycle wins
    order = np.lexsort((all_times, all_cycles))
    all_cycles = all_cycles[order]
    all_times = all_times[order]
    _, first = np.unique(all_cycles, return_index=True)
    return TimestampStream(all_cycles[first], all_times[first], n_g, timing.n_pulses)


def sample_counts_from_trace(
    trace: IntensityTrace, count: int, det: DetectorModel, seed: int
) -> TimestampStream:
    """Fixed number of arrivals drawn from a trace-shaped density.

    Used for continuous-wave calibration where the rate is set by the
    integration time rather than per-pulse probabilities.  Jittered
    timestamps falling off the trace span are dropped.
    """
    if count < 1:
        raise ValueError("count must be positive")
    grid = trace.grid
    cdf = np.empty(grid.n)
    cdf[0] = 0.0
    np.cumsum(0.5 * grid.dt * (trace.values[:-1] + trace.values[1:]), out=cdf[1:])
    total = cdf[-1]
    if total <= 0.0:
        raise ValueError("trace integrates to zero")
    rng = np.random.default_rng(seed)
    arrival = np.interp(rng.random(count) * total, cdf, grid.times())
    t = arrival + det.jitter_sigma * rng.standard_normal(count)
    keep = (t >= grid.t_start) & (t <= grid.t_end)
    return TimestampStream(np.arange(count, dtype=np.int64)[keep], t[keep], count, count)


def _counts_in_bins(t: np.ndarray, bin_width: float, nbins: int) -> tuple[np.ndarray, int]:
    idx = np.floor(t / bin_width).astype(np.int64)
    ok = (idx >= 0) & (idx < nbins)
    counts = np.bincount(idx[ok], minlength=nbins)
    return counts.astype(np.int64), int(np.count_nonzero(ok))


def histogram(x, bin_width: float, span: float, total_pulses: int | None = None) -> Histogram:
    """Bin gate-relative timestamps into [0, span); the rest is overflow."""
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive")
    if span <= 0.0:
        raise ValueError("span must be positive")
    nbins = int(np.floor(span / bin_width + 1e-9))
    if nbins < 1:
        raise ValueError("span shorter than one bin")
    if isinstance(x, TimestampStream):
        t = x.t_ns
        if total_pulses is None:
            total_pulses = x.n_pulses
    else:
        t = np.asarray(x, dtype=float)
        if total_pulses is None:
            total_pulses = t.shape[0]
    counts, in_span = _counts_in_bins(t, bin_width, nbins)
    edges = bin_width * np.arange(nbins + 1)
    return Histogram(edges, counts, in_span, int(total_pulses), t.shape[0] - in_span)


def merge_histograms(*hs: Histogram) -> Histogram:
    """Combine partial histograms over disjoint cycle sets; exact and associative."""
    if not hs:
        raise ValueError("need at least one histogram")
    edges = hs[0].bin_edges
    for h in hs[1:]:
        if h.bin_edges.shape != edges.shape or not np.array_equal(h.bin_edges, edges):
            raise ValueError("histograms have differing bin edges")
    counts = np.sum([h.counts for h in hs], axis=0)
    return Histogram(
        edges,
        counts,
        int(sum(h.total_detected for h in hs)),
        int(sum(h.total_pulses for h in hs)),
        int(sum(h.overflow for h in hs)),
    )


def analytic_histogram(
    psi: Wavepacket,
    det: DetectorModel,
    n_gated: int,
    bin_width: float,
    span: float | None = None,
) -> ExpectedHistogram:
    """Expected histogram n_gated * efficiency * (|psi'|^2 conv jitter), binned.

    With span=None the bins extend past the wavepacket grid by 8 jitter
    sigmas so that the binned total preserves the convolved area; passing
    a span reproduces the bins of `histogram` for direct MC comparison.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be positive")
    if n_gated < 0:
        raise ValueError("n_gated must be nonnegative")
    grid = psi.grid
    a = psi.amplitude
    rho = a.real**2 + a.imag**2
    sigma = det.jitter_sigma
    scale = n_gated * det.efficiency

    if span is None:
        pad = 8.0 * sigma + bin_width
        lo = math.floor((grid.t_start - pad) / bin_width)
        hi = math.ceil((grid.t_end + pad) / bin_width)
        edges = bin_width * np.arange(lo, hi + 1)
    else:
        nbins = int(np.floor(span / bin_width + 1e-9))
        if nbins < 1:
            raise ValueError("span shorter than one bin")
        edges = bin_width * np.arange(nbins + 1)

    if sigma == 0.0:
        cdf = np.empty(grid.n)
        cdf[0] = 0.0
        np.cumsum(0.5 * grid.dt * (rho[:-1] + rho[1:]), out=cdf[1:])
        at_edges = np.interp(edges, grid.times(), cdf, left=0.0, right=float(cdf[-1]))
        contents = np.diff(at_edges)
    else:
        rho_c = rho * grid.dt
        rho_c[0] *= 0.5
        rho_c[-1] *= 0.5
        contents = _kernels.jitter_bin_weights(rho_c, grid.times(), edges, sigma)

    return ExpectedHistogram(edges, scale * contents, scale * norm(psi))


def write_histogram_csv(path, h: Histogram) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("bin_start_ns,count\n")
        for start, c in zip(h.bin_starts(), h.counts):
            fh.write(f"{start:.9g},{int(c)}\n")


def read_histogram_csv(path) -> Histogram:
    from .core import CsvFormatError, _read_rows

    rows = _read_rows(path, 2, "bin_start_ns,count")
    if rows.shape[0] < 2:
        raise CsvFormatError(path, 2, "need at least two bins")
    starts = rows[:, 0]
    width = (starts[-1] - starts[0]) / (starts.shape[0] - 1)
    if width <= 0.0 or np.max(np.abs(np.diff(starts) - width)) > 1e-6 * width:
        raise CsvFormatError(path, 2, "bin starts are not a uniform increasing grid")
    counts = rows[:, 1]
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise CsvFormatError(path, 2, "counts must be nonnegative integers")
    counts = counts.astype(np.int64)
    edges = np.concatenate([starts, [starts[-1] + width]])
    total = int(counts.sum())
    return Histogram(edges, counts, total, total, 0)


def write_timestamps_csv(path, stream: TimestampStream) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("cycle_index,t_ns\n")
        for c, t in zip(stream.cycle_index, stream.t_ns):
            fh.write(f"{int(c)},{t:.9g}\n")
