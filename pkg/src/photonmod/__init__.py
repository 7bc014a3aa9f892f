"""Simulation of modulated single-photon emission and gated detection.

An emitter with radiative lifetime tau_sp and coherence time tau_coh
produces exponential wavepackets that dephase at gamma_star.  An
electro-optic Mach-Zehnder modulator carves a transmission window out of
each pulse, a gated detector with timing jitter records arrival
histograms, and the analysis layer fits decays and widths and sweeps the
indistinguishability / throughput trade-off of the carved source.
"""

from ._backend import BACKEND, HAVE_NUMBA, USE_NUMBA
from .core import (
    CsvFormatError,
    GridSnapWarning,
    IntensityTrace,
    TimeGrid,
    Wavepacket,
    fwhm,
    make_time_grid,
    norm,
    read_trace_csv,
    read_wavepacket_csv,
    write_trace_csv,
    write_wavepacket_csv,
)
from .emitter import (
    EmitterModel,
    PhaseTrajectory,
    apply_phase,
    coherence_params,
    exponential_wavepacket,
    phase_trajectories,
    sample_phase_trajectory,
)
from .modulator import (
    BandwidthWarning,
    DriveWaveform,
    EomParams,
    TransmissionEnvelope,
    apply_modulation,
    compensated_gaussian_drive,
    default_bias,
    drive_envelope_family,
    gaussian_drive,
    gaussian_envelope,
    gaussian_envelope_family,
    mz_transmission,
    unit_envelope,
)
from .detection import (
    DetectorModel,
    EventSchedule,
    ExpectedHistogram,
    Histogram,
    TimestampStream,
    TimingConfig,
    analytic_histogram,
    detect_mc,
    histogram,
    merge_histograms,
    read_histogram_csv,
    sample_counts_from_trace,
    schedule_events,
    write_histogram_csv,
    write_timestamps_csv,
)
from .analysis import (
    EfficiencyChain,
    FitConvergenceError,
    FitResult,
    TradeoffRow,
    TradeoffTable,
    calibrated_chain_product,
    fit_exponential,
    fit_gaussian,
    indistinguishability_exact,
    indistinguishability_mc,
    indistinguishability_simple,
    optimal_delay,
    read_tradeoff_csv,
    tradeoff_sweep,
    transmitted_fraction,
    write_fit_txt,
    write_tradeoff_csv,
)
from .scenario import (
    AnalysisSpec,
    CalibrationSpec,
    ConfigError,
    DriveSpec,
    Scenario,
    SweepSpec,
    load_scenario,
    parse_scenario_text,
    with_overrides,
)
from .pipeline import (
    PRESET_NAMES,
    RunReport,
    preset_scenario,
    run_preset,
    run_scenario,
    template_amplitude,
    write_report,
)
from .plots import emit_plots

__version__ = "0.1.0"
