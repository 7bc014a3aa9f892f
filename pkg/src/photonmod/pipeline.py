"""Scenario execution: generate, modulate, detect, histogram, fit, write.

Every run is deterministic given the scenario seed: histogram i of a run
uses seed + i, so adding or removing an entry never reshuffles the
randomness of the others.  All CSV emission uses fixed-width formatting,
which is what makes repeated runs byte-identical (the report file also
records wall-clock time and is the one output allowed to differ).
"""

from __future__ import annotations

import math
import os
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import IntensityTrace, make_time_grid
from .emitter import coherence_params, exponential_wavepacket
from .modulator import (
    EomParams,
    apply_modulation,
    compensated_gaussian_drive,
    default_bias,
    gaussian_drive,
    gaussian_envelope_family,
    mz_transmission,
)
from .detection import (
    DetectorModel,
    TimingConfig,
    analytic_histogram,
    detect_mc,
    histogram,
    sample_counts_from_trace,
    schedule_events,
    write_histogram_csv,
)
from .analysis import (
    EfficiencyChain,
    calibrated_chain_product,
    fit_exponential,
    fit_gaussian,
    optimal_delay,
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
    with_overrides,
)

# decay fits start this many detector jitter widths past the histogram
# peak, where the jitter-free exponential model is unbiased
FIT_START_JITTER_WIDTHS = 1.5

# template-match window half width around each modulated peak, ns
PEAK_WINDOW_NS = 1.2

PRESET_NAMES = ("fig2", "fig3a", "fig3b", "tradeoff", "laser-cal")


@dataclass(frozen=True)
class RunReport:
    """What one scenario run produced; files are relative to out_dir."""

    name: str
    kind: str
    seed: int
    out_dir: str
    files: tuple
    fits: tuple
    notes: tuple
    warnings: tuple
    duration_s: float

    def fit(self, label: str):
        for lab, f in self.fits:
            if lab == label:
                return f
        raise KeyError(f"no fit labeled {label!r} in this report")


def _fit_summary(label, fit):
    parts = [f"fit {label}: model {fit.model}"]
    for key, value in fit.params.items():
        ci = fit.ci95.get(key, math.nan)
        parts.append(f"{key} {value:.9g} ci95 {ci:.9g}")
    return "  ".join(parts)


def write_report(path, report: RunReport) -> None:
    """Plain-text run summary, deterministic except the duration line."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"scenario {report.name}\n")
        fh.write(f"kind {report.kind}\n")
        fh.write(f"seed {report.seed}\n")
        for name in report.files:
            fh.write(f"file {name}\n")
        for label, fit in report.fits:
            fh.write(_fit_summary(label, fit) + "\n")
        for note in report.notes:
            fh.write(f"note {note}\n")
        for w in report.warnings:
            fh.write(f"warning {w}\n")
        fh.write(f"duration_s {report.duration_s:.3f}\n")


def template_amplitude(h, expected, center_ns, half_width_ns=PEAK_WINDOW_NS) -> float:
    """Scale of the expected histogram shape inside a window of the data.

    Weighted linear least squares of counts against (expectation,
    constant) over bins within half_width_ns of center_ns, Poisson
    weights 1/max(count, 1).  The scale estimate is insensitive to where
    the window clips the shape, unlike a generic peak fit.
    """
    t = h.bin_centers()
    y = h.counts.astype(float)
    mu = np.asarray(expected, dtype=float)
    if mu.shape != y.shape:
        raise ValueError("expected histogram does not match the data bins")
    keep = np.abs(t - center_ns) <= half_width_ns
    if int(keep.sum()) < 5:
        raise ValueError("template window covers fewer than 5 bins")
    yk = y[keep]
    mk = mu[keep]
    w = 1.0 / np.maximum(yk, 1.0)
    a11 = float(w @ (mk * mk))
    a12 = float(w @ mk)
    a22 = float(w.sum())
    b1 = float(w @ (mk * yk))
    b2 = float(w @ yk)
    det = a11 * a22 - a12 * a12
    if det <= 0.0:
        raise ValueError("template window is degenerate")
    return float((b1 * a22 - b2 * a12) / det)


def _hist_label(delay) -> str:
    if delay is None:
        return "unmodulated"
    return f"delay_{delay:.2f}ns"


def _run_pulsed(scn: Scenario, out_dir: str):
    grid = scn.grid()
    drv: DriveSpec = scn.drive
    det = scn.detector
    sched = schedule_events(scn.timing)
    wp = exponential_wavepacket(scn.emitter, grid)

    entries: list = []
    if drv.shape == "none" or drv.include_unmodulated:
        entries.append(None)
    base = None
    if drv.shape != "none":
        base = gaussian_drive(
            drv.v_peak_v, drv.optical_fwhm_ns, delay=0.0, inverted=drv.inverted, params=scn.eom
        )
        entries.extend(float(d) for d in drv.delays_ns)

    files = []
    fits = []
    notes = []
    peak_rows = []
    eh_bare = None
    good = None
    for i, delay in enumerate(entries):
        if delay is None:
            env = None
            psi = wp
        else:
            env = mz_transmission(replace(base, delay=drv.align_ns + delay), scn.eom, grid)
            psi = apply_modulation(wp, env)
        stream = detect_mc(psi, det, sched, seed=scn.seed + i)
        h = histogram(stream, scn.analysis.bin_width_ns, scn.analysis.span_ns)
        label = _hist_label(delay)
        name = f"hist_{label}.csv"
        write_histogram_csv(os.path.join(out_dir, name), h)
        files.append(name)

        if delay is None:
            if scn.analysis.fit == "exponential":
                f = fit_exponential(
                    h, start_offset_ns=FIT_START_JITTER_WIDTHS * det.jitter_fwhm
                )
                fits.append(("unmodulated", f))
                fit_name = "fit_unmodulated.txt"
                write_fit_txt(os.path.join(out_dir, fit_name), f)
                files.append(fit_name)
            continue

        center = drv.align_ns + delay
        if drv.inverted:
            # a notch shows up as a local minimum near the notch time
            centers = h.bin_centers()
            win = np.abs(centers - center) <= drv.optical_fwhm_ns
            idx = np.nonzero(win)[0]
            dip_at = float(centers[idx[np.argmin(h.counts[idx])]])
            notes.append(
                f"notch at delay {delay:.2f} ns: expected dip {center:.3f} ns, "
                f"histogram minimum at {dip_at:.3f} ns"
            )
            on_off_db = 10.0 * math.log10(env.transmission.max() / env.transmission.min())
            notes.append(
                f"envelope at delay {delay:.2f} ns: min transmission "
                f"{env.transmission.min():.6g} >= floor {env.floor:.6g}, "
                f"on/off {on_off_db:.2f} dB"
            )
        else:
            eh = analytic_histogram(
                psi, det, sched.n_gated, scn.analysis.bin_width_ns, scn.analysis.span_ns
            )
            mu = eh.expectation
            scale = template_amplitude(h, mu, center)
            peak_rows.append((delay, float(mu.max()), scale))

        if scn.analysis.fit == ("notch" if drv.inverted else "gaussian"):
            # the envelope is the object of interest, and on the sloping
            # decay neither a pulse nor a dip has a flat baseline; the ratio
            # to the bare-decay expectation leaves the smeared envelope,
            # resting near 1 for notches and near the floor for pulses
            if eh_bare is None:
                eh_bare = analytic_histogram(
                    wp, det, sched.n_gated, scn.analysis.bin_width_ns, scn.analysis.span_ns
                )
                good = eh_bare.expectation > 0.0
            w = drv.optical_fwhm_ns
            ratio = h.counts[good] / eh_bare.expectation[good]
            f = fit_gaussian(
                (h.bin_centers()[good], ratio),
                inverted=drv.inverted,
                jitter_fwhm_ns=det.jitter_fwhm if det.jitter_fwhm > 0.0 else None,
                window_ns=(center - 1.5 * w, center + 1.5 * w),
            )
            fits.append((label, f))
            fit_name = f"fit_{label}.txt"
            write_fit_txt(os.path.join(out_dir, fit_name), f)
            files.append(fit_name)

    if scn.analysis.fit != "none" and not fits:
        notes.append(f"fit {scn.analysis.fit}: no matching histogram, skipped")

    if peak_rows:
        name = "peaks.csv"
        gamma = scn.emitter.gamma
        d0, mu0, s0 = peak_rows[0]
        base_peak = mu0 * s0
        with open(os.path.join(out_dir, name), "w", encoding="ascii", newline="\n") as fh:
            fh.write(
                "delay_ns,expected_peak,observed_peak,"
                "ratio_expected,ratio_analytic,ratio_observed\n"
            )
            for delay, mu_max, scale in peak_rows:
                observed = mu_max * scale
                fh.write(
                    f"{delay:.9g},{mu_max:.9g},{observed:.9g},"
                    f"{math.exp(-gamma * (delay - d0)):.9g},"
                    f"{mu_max / mu0:.9g},{observed / base_peak:.9g}\n"
                )
        files.append(name)
        notes.append(
            "peak contour: ratio_analytic is the expectation peak relative to the "
            "first delay, ratio_observed the template-matched data peak, "
            "ratio_expected the exp(-delay/tau_sp) reference"
        )
    return files, fits, notes


def _chain_from_spec(model, spec: SweepSpec, grid):
    """Either the configured factors or a product calibrated to a target rate."""
    notes = []
    if spec.chain_factors:
        chain = EfficiencyChain(dict(spec.chain_factors))
        notes.append(f"efficiency chain product {chain.product:.9g} from configured factors")
        return chain, notes
    fam = gaussian_envelope_family(grid, spec.target_tau_mod_ns)
    lo = -2.0 * spec.target_tau_mod_ns
    hi = 2.0 * model.tau_sp + spec.target_tau_mod_ns
    d_opt = optimal_delay(model, fam, objective="fraction", delay_range=(lo, hi))
    frac = transmitted_fraction(model, fam(d_opt))
    product = calibrated_chain_product(spec.target_rate_hz, spec.rep_rate_hz, frac)
    chain = EfficiencyChain({"end_to_end": product})
    notes.append("efficiency chain calibrated from the target rate:")
    notes.append(
        f"  transmitted fraction at tau_mod {spec.target_tau_mod_ns:g} ns, "
        f"optimal delay {d_opt:.6f} ns: {frac:.9g}"
    )
    notes.append(
        f"  chain product = {spec.target_rate_hz:.9g} / ({spec.rep_rate_hz:.9g} * "
        f"{frac:.9g}) = {product:.9g}"
    )
    notes.append(
        f"  check: {spec.rep_rate_hz:.9g} * {product:.9g} * {frac:.9g} = "
        f"{spec.rep_rate_hz * product * frac:.9g} counts/s"
    )
    return chain, notes


def _run_sweep(scn: Scenario, out_dir: str):
    spec = scn.sweep
    tau_sp = scn.emitter.tau_sp
    grid = make_time_grid(0.0, 10.0 * tau_sp, 0.001)
    chain, notes = _chain_from_spec(scn.emitter, spec, grid)
    files = []
    for tc in spec.tau_coh_ns:
        model = coherence_params(tau_sp, tc, scn.emitter.wavelength_nm)
        table = tradeoff_sweep(model, spec.tau_mod_ns, spec.rep_rate_hz, chain, grid=grid)
        name = f"tradeoff_tau_coh_{tc:g}ns.csv"
        write_tradeoff_csv(os.path.join(out_dir, name), table)
        files.append(name)
        for row in table.rows:
            if row.tau_mod_ns == spec.target_tau_mod_ns:
                notes.append(
                    f"tau_coh {tc:g} ns, tau_mod {row.tau_mod_ns:g} ns: rate "
                    f"{row.rate_hz:.9g} counts/s at delay {row.delay_ns:.6f} ns"
                )
    return files, [], notes


def _cal_label(target_ns: float, inverted: bool) -> str:
    ps = round(target_ns * 1000.0)
    return f"{ps:d}ps_notch" if inverted else f"{ps:d}ps"


def _run_calibration(scn: Scenario, out_dir: str):
    spec: CalibrationSpec = scn.calibration
    det = scn.detector
    grid = make_time_grid(-spec.grid_pad_ns, spec.span_ns + spec.grid_pad_ns, spec.grid_dt_ns)
    cases = [(w, False) for w in spec.pulse_targets_ns]
    cases += [(w, True) for w in spec.notch_targets_ns]
    files = []
    fits = []
    notes = []
    for i, (target, inverted) in enumerate(cases):
        params = EomParams(
            scn.eom.v_pi, scn.eom.extinction_db, scn.eom.t_max, default_bias(inverted)
        )
        drive = compensated_gaussian_drive(target, spec.center_ns, params, dt=spec.grid_dt_ns)
        env = mz_transmission(drive, params, grid)
        trace = IntensityTrace(grid, env.transmission)
        stream = sample_counts_from_trace(trace, spec.counts, det, seed=scn.seed + i)
        h = histogram(stream, spec.bin_width_ns, spec.span_ns)
        label = _cal_label(target, inverted)
        name = f"cal_{label}.csv"
        write_histogram_csv(os.path.join(out_dir, name), h)
        files.append(name)
        f = fit_gaussian(h, inverted=inverted, jitter_fwhm_ns=det.jitter_fwhm)
        fits.append((label, f))
        fit_name = f"fit_cal_{label}.txt"
        write_fit_txt(os.path.join(out_dir, fit_name), f)
        files.append(fit_name)
        got = f.params["fwhm_deconvolved_ns"]
        notes.append(
            f"calibration {label}: target fwhm {target:.9g} ns, deconvolved fit "
            f"{got:.9g} ns ({1000.0 * (got - target):+.1f} ps)"
        )
    return files, fits, notes


def run_scenario(source, out_dir, seed=None, n_pulses=None) -> RunReport:
    """Execute a scenario (path or Scenario) into out_dir; returns the report."""
    scn = source if isinstance(source, Scenario) else load_scenario(source)
    scn = with_overrides(scn, seed=seed, n_pulses=n_pulses)
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if scn.kind == "pulsed":
            files, fits, notes = _run_pulsed(scn, out_dir)
        elif scn.kind == "sweep":
            files, fits, notes = _run_sweep(scn, out_dir)
        else:
            files, fits, notes = _run_calibration(scn, out_dir)
    report = RunReport(
        name=scn.name,
        kind=scn.kind,
        seed=scn.seed,
        out_dir=str(out_dir),
        files=tuple(files),
        fits=tuple(fits),
        notes=tuple(notes),
        warnings=tuple(str(w.message) for w in caught),
        duration_s=time.perf_counter() - start,
    )
    write_report(os.path.join(out_dir, "report.txt"), report)
    return report


_STANDARD_EMITTER = (1.4, 0.28)
_STANDARD_TIMING = TimingConfig(20.0, 10, 50.0, 1_000_000)
_STANDARD_DETECTOR = DetectorModel(1.0, 0.25, 0.0)


def preset_scenario(name: str) -> Scenario:
    """Built-in scenarios mirroring the validation figures."""
    if name == "fig2":
        return Scenario(
            name="fig2",
            kind="pulsed",
            seed=1000,
            emitter=coherence_params(*_STANDARD_EMITTER),
            eom=EomParams(4.0, 22.0, 1.0, default_bias(False)),
            drive=DriveSpec(
                shape="gaussian",
                optical_fwhm_ns=0.72,
                v_peak_v=4.0,
                align_ns=0.4,
                delays_ns=(0.0, 0.8, 1.6, 2.4, 3.2, 4.0),
                include_unmodulated=True,
            ),
            timing=_STANDARD_TIMING,
            detector=_STANDARD_DETECTOR,
            analysis=AnalysisSpec(),
        )
    if name == "fig3a":
        return Scenario(
            name="fig3a",
            kind="pulsed",
            seed=3000,
            emitter=coherence_params(*_STANDARD_EMITTER),
            eom=EomParams(4.0, 22.0, 1.0, default_bias(False)),
            drive=DriveSpec(
                shape="gaussian",
                optical_fwhm_ns=0.52,
                v_peak_v=4.0,
                align_ns=0.4,
                delays_ns=(0.0,),
                include_unmodulated=True,
            ),
            timing=_STANDARD_TIMING,
            detector=_STANDARD_DETECTOR,
            analysis=AnalysisSpec(),
        )
    if name == "fig3b":
        return Scenario(
            name="fig3b",
            kind="pulsed",
            seed=3100,
            emitter=coherence_params(*_STANDARD_EMITTER),
            eom=EomParams(4.0, 22.0, 1.0, default_bias(True)),
            drive=DriveSpec(
                shape="notch",
                optical_fwhm_ns=0.77,
                v_peak_v=4.0,
                align_ns=0.4,
                delays_ns=(0.0, 0.8, 1.6, 2.4),
                include_unmodulated=True,
            ),
            timing=_STANDARD_TIMING,
            detector=_STANDARD_DETECTOR,
            analysis=AnalysisSpec(),
        )
    if name == "tradeoff":
        return Scenario(
            name="tradeoff",
            kind="sweep",
            seed=0,
            emitter=coherence_params(*_STANDARD_EMITTER),
            sweep=SweepSpec(
                tau_mod_ns=(0.1, 0.14, 0.2, 0.3, 0.5, 0.72, 1.0, 1.4, 2.0, math.inf),
                tau_coh_ns=(0.28, 0.58),
                rep_rate_hz=50e6,
                target_rate_hz=6.8e4,
                target_tau_mod_ns=0.14,
            ),
        )
    if name == "laser-cal":
        return Scenario(
            name="laser-cal",
            kind="calibration",
            seed=7500,
            eom=EomParams(4.0, 22.0, 1.0, default_bias(False)),
            detector=_STANDARD_DETECTOR,
            calibration=CalibrationSpec(),
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


def run_preset(name: str, out_dir, seed=None, n_pulses=None) -> RunReport:
    return run_scenario(preset_scenario(name), out_dir, seed=seed, n_pulses=n_pulses)
