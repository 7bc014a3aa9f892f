"""Fits, indistinguishability, and the trade-off sweep."""

import math

import numpy as np
import pytest
from scipy.special import erfc

from photonmod import (
    DetectorModel,
    EfficiencyChain,
    TimingConfig,
    TransmissionEnvelope,
    calibrated_chain_product,
    coherence_params,
    detect_mc,
    exponential_wavepacket,
    fit_exponential,
    fit_gaussian,
    gaussian_envelope,
    gaussian_envelope_family,
    histogram,
    indistinguishability_exact,
    indistinguishability_mc,
    indistinguishability_simple,
    make_time_grid,
    optimal_delay,
    read_tradeoff_csv,
    schedule_events,
    tradeoff_sweep,
    transmitted_fraction,
    unit_envelope,
    write_fit_txt,
    write_tradeoff_csv,
)
from photonmod.analysis import FitResult
from photonmod.core import CsvFormatError

_SIGMA_OF_FWHM = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def _exp_counts(a, tau, b, bin_width=0.05, span=20.0):
    t = bin_width * np.arange(int(span / bin_width)) + 0.5 * bin_width
    return t, a * np.exp(-t / tau) + b


def _gauss_counts(a, center, fwhm, b, bin_width=0.025, span=4.0):
    t = bin_width * np.arange(int(span / bin_width)) + 0.5 * bin_width
    arg = (t - center) / (fwhm * _SIGMA_OF_FWHM)
    return t, a * np.exp(-0.5 * arg * arg) + b


def test_fit_exponential_noiseless():
    t, y = _exp_counts(2000.0, 1.4, 5.0)
    fit = fit_exponential((t, y))
    assert fit.model == "exponential"
    assert abs(fit.params["tau_ns"] - 1.4) < 1e-6 * 1.4
    assert abs(fit.params["baseline"] - 5.0) < 1e-4
    assert fit.params["tau_ns"] > 0.0
    assert all(v >= 0.0 for v in fit.ci95.values())


def test_fit_exponential_start_offset_trims_bins():
    t, y = _exp_counts(2000.0, 1.4, 5.0)
    full = fit_exponential((t, y))
    trimmed = fit_exponential((t, y), start_offset_ns=0.375)
    # peak bin center 0.025; first center at or past 0.4 is 0.425
    assert full.n_points == t.shape[0]
    assert trimmed.n_points == t.shape[0] - 8
    assert abs(trimmed.params["tau_ns"] - 1.4) < 1e-6 * 1.4


def test_fit_exponential_degenerate_inputs():
    t = 0.05 * np.arange(400) + 0.025
    with pytest.raises(ValueError, match="empty"):
        fit_exponential((t, np.zeros(400)))
    y = np.zeros(400)
    y[:6] = 100.0
    with pytest.raises(ValueError, match="nonempty bins"):
        fit_exponential((t, y))


def test_fit_exponential_mc_coverage():
    # tau 1.4, 250 ps jitter, about 1e5 counts per repetition; the 95%
    # interval must cover the truth in at least 93 of 100 runs
    grid = make_time_grid(0.0, 20.0, 0.001)
    wp = exponential_wavepacket(coherence_params(1.4, 0.28), grid)
    det = DetectorModel(1.0, 0.25, 0.0)
    sched = schedule_events(TimingConfig(20.0, 10, 50.0, 1_000_000))
    hits = 0
    for rep in range(100):
        stream = detect_mc(wp, det, sched, seed=40_000 + rep)
        h = histogram(stream, 0.05, 20.0)
        fit = fit_exponential(h, start_offset_ns=1.5 * det.jitter_fwhm)
        if abs(fit.params["tau_ns"] - 1.4) <= fit.ci95["tau_ns"]:
            hits += 1
    assert hits >= 93, f"tau covered in only {hits}/100 repetitions"


def test_fit_scale_invariance():
    rng = np.random.default_rng(17)
    t, mu = _exp_counts(2000.0, 1.4, 50.0)
    y = rng.poisson(mu).astype(float)
    base = fit_exponential((t, y))
    scaled = fit_exponential((t, 7.0 * y))
    assert abs(scaled.params["tau_ns"] - base.params["tau_ns"]) < 1e-9 * base.params["tau_ns"]
    assert abs(scaled.params["amplitude"] - 7.0 * base.params["amplitude"]) < 1e-6 * abs(
        7.0 * base.params["amplitude"]
    )

    tg, mug = _gauss_counts(3000.0, 2.0, 0.72, 40.0)
    yg = rng.poisson(mug).astype(float)
    gb = fit_gaussian((tg, yg))
    gs = fit_gaussian((tg, 7.0 * yg))
    assert abs(gs.params["fwhm_ns"] - gb.params["fwhm_ns"]) < 1e-9 * gb.params["fwhm_ns"]


def test_fit_gaussian_noiseless():
    t, y = _gauss_counts(5000.0, 2.0, 0.72, 30.0)
    fit = fit_gaussian((t, y))
    assert fit.model == "gaussian"
    assert abs(fit.params["fwhm_ns"] - 0.72) < 1e-6 * 0.72
    assert abs(fit.params["center_ns"] - 2.0) < 1e-6
    assert fit.params["fwhm_ns"] > 0.0


def test_fit_gaussian_deconvolution():
    conv = math.hypot(0.72, 0.25)
    t, y = _gauss_counts(5000.0, 2.0, conv, 30.0)
    fit = fit_gaussian((t, y), jitter_fwhm_ns=0.25)
    assert abs(fit.params["fwhm_deconvolved_ns"] - 0.72) < 1e-6
    # propagated interval grows by the deconvolution slope w/d
    assert fit.ci95["fwhm_deconvolved_ns"] >= fit.ci95["fwhm_ns"]
    # narrower than the jitter itself: no real deconvolved width
    t2, y2 = _gauss_counts(5000.0, 2.0, 0.2, 30.0)
    fit2 = fit_gaussian((t2, y2), jitter_fwhm_ns=0.25)
    assert math.isnan(fit2.params["fwhm_deconvolved_ns"])


def test_fit_notch_noiseless():
    t, y = _gauss_counts(-4000.0, 2.0, 0.77, 6000.0)
    fit = fit_gaussian((t, y), inverted=True)
    assert fit.model == "notch"
    assert fit.params["amplitude"] < 0.0
    assert abs(fit.params["fwhm_ns"] - 0.77) < 1e-6 * 0.77


def test_fit_gaussian_rejects_flat_and_short():
    t = 0.025 * np.arange(160)
    with pytest.raises(ValueError, match="flat"):
        fit_gaussian((t, np.full(160, 7.0)))
    with pytest.raises(ValueError, match="few bins"):
        fit_gaussian((t[:3], np.array([1.0, 2.0, 1.0])))


def test_indistinguishability_unit_transmission_closed_form():
    cases = [(1.4, 0.28), (1.4, 1.0), (0.5, 0.4), (2.0, 3.0)]
    for tau_sp, tau_coh in cases:
        model = coherence_params(tau_sp, tau_coh)
        grid = make_time_grid(0.0, 20.0 * tau_sp, 0.001 * tau_sp)
        got = indistinguishability_exact(model, unit_envelope(grid))
        want = model.gamma / (model.gamma + 2.0 * model.gamma_star)
        assert abs(got - want) < 1e-6, (tau_sp, tau_coh, got, want)
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 20.0, 0.001)
    assert abs(indistinguishability_exact(model, unit_envelope(grid)) - 0.1) < 1e-3


def test_indistinguishability_transform_limited_is_one():
    model = coherence_params(1.4, 2.8)
    grid = make_time_grid(0.0, 20.0, 0.001)
    for env in (unit_envelope(grid), gaussian_envelope(grid, 0.14, 0.13)):
        assert indistinguishability_exact(model, env) == 1.0
    mean, se = indistinguishability_mc(model, unit_envelope(grid), n_pairs=16, seed=0)
    assert mean == 1.0 and se == 0.0


def test_indistinguishability_monotone_in_dephasing():
    grid = make_time_grid(0.0, 20.0, 0.001)
    env = gaussian_envelope(grid, 0.3, 0.25)
    values = []
    for tau_coh in (2.8, 1.4, 0.7, 0.28, 0.1):
        values.append(indistinguishability_exact(coherence_params(1.4, tau_coh), env))
    assert all(a > b for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 1.0 for v in values)


def test_indistinguishability_delay_argument_matches_shifted_center():
    # shifting the envelope by the delay argument must match a window
    # built at the shifted center, far from the grid edges
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 20.0, 0.001)
    fam = gaussian_envelope_family(grid, 0.5)
    a = indistinguishability_exact(model, fam(5.0), delay=1.0)
    b = indistinguishability_exact(model, fam(6.0))
    assert abs(a - b) < 1e-12


def test_indistinguishability_rejects_dark_envelope():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 20.0, 0.001)
    dark = TransmissionEnvelope(grid, np.zeros(grid.n), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError, match="transmits nothing"):
        indistinguishability_exact(model, dark)
    with pytest.raises(ValueError, match="transmits nothing"):
        indistinguishability_mc(model, dark)


def test_indistinguishability_mc_agrees_with_exact():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 14.0, 0.001)
    fam = gaussian_envelope_family(grid, 0.3)
    env = fam(0.23)
    exact = indistinguishability_exact(model, env)
    mean, se = indistinguishability_mc(model, env, n_pairs=2000, seed=3)
    assert se > 0.0
    assert abs(mean - exact) < 3.0 * se


def test_indistinguishability_simple_formula():
    model = coherence_params(1.4, 0.28)
    assert indistinguishability_simple(model, 0.14) == 1.0
    assert abs(indistinguishability_simple(model, 0.3) - 0.28 / 0.6) < 1e-12
    assert indistinguishability_simple(model, math.inf) == 0.0
    with pytest.raises(ValueError):
        indistinguishability_simple(model, 0.0)


def _gaussian_fraction_closed_form(gamma, center, fwhm, t_max=1.0):
    s = fwhm * _SIGMA_OF_FWHM
    m = center - gamma * s * s
    return (
        t_max
        * gamma
        * math.exp(-gamma * center + 0.5 * (gamma * s) ** 2)
        * s
        * math.sqrt(math.pi / 2.0)
        * erfc(-m / (math.sqrt(2.0) * s))
    )


def test_transmitted_fraction_unit_envelope():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 20.0, 0.001)
    got = transmitted_fraction(model, unit_envelope(grid, 0.8))
    want = 0.8 * (1.0 - math.exp(-20.0 / 1.4))
    assert abs(got - want) < 1e-6


def test_transmitted_fraction_gaussian_closed_form():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 20.0, 0.001)
    for center, fwhm in ((0.0, 0.72), (0.13, 0.14), (0.3, 0.5), (1.0, 1.0)):
        got = transmitted_fraction(model, gaussian_envelope(grid, fwhm, center))
        want = _gaussian_fraction_closed_form(model.gamma, center, fwhm)
        assert abs(got - want) < 1e-4 * want, (center, fwhm, got, want)
    # a half-cut window at t = 0 still passes about 23% of the photons
    at_zero = transmitted_fraction(model, gaussian_envelope(grid, 0.72, 0.0))
    assert 0.20 < at_zero < 0.26


def test_optimal_delay_matches_brute_force():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 14.0, 0.001)
    fam = gaussian_envelope_family(grid, 0.14)
    best = optimal_delay(model, fam, "fraction", (-0.28, 3.08))
    assert 0.0 < best < 0.5  # front-loaded decay pulls the window early
    scan = np.arange(-0.28, 3.08, 0.0005)
    vals = [transmitted_fraction(model, fam(d)) for d in scan]
    brute = float(scan[int(np.argmax(vals))])
    assert abs(best - brute) < 0.001
    assert transmitted_fraction(model, fam(best)) >= max(vals) - 1e-9


def test_optimal_delay_delta_envelope():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 14.0, 0.001)

    def delta_family(d):
        values = np.zeros(grid.n)
        idx = min(max(int(round(d / grid.dt)), 0), grid.n - 1)
        values[idx] = 1.0
        return TransmissionEnvelope(grid, values, 0.0, 1.0, 0.0)

    best = optimal_delay(model, delta_family, "fraction", (0.0, 5.0))
    assert abs(best) <= grid.dt


def test_optimal_delay_other_objectives_and_errors():
    model = coherence_params(1.4, 0.28)
    grid = make_time_grid(0.0, 14.0, 0.001)
    fam = gaussian_envelope_family(grid, 0.3)
    for objective in ("indistinguishability", "product"):
        best = optimal_delay(model, fam, objective, (-0.6, 3.0))
        assert -0.6 <= best <= 3.0
    with pytest.raises(ValueError, match="objective"):
        optimal_delay(model, fam, "nonsense", (-0.6, 3.0))
    with pytest.raises(ValueError, match="increasing"):
        optimal_delay(model, fam, "fraction", (1.0, 1.0))


def test_tradeoff_sweep_shape_and_monotonicity():
    model = coherence_params(1.4, 0.28)
    chain = EfficiencyChain({"end_to_end": 0.0142346016})
    taus = [0.1, 0.14, 0.3, 0.72, 1.4, math.inf]
    table = tradeoff_sweep(model, taus, 50e6, chain)
    rows = table.rows
    assert [r.tau_mod_ns for r in rows] == taus
    fractions = [r.fraction for r in rows]
    exacts = [r.indist_exact for r in rows]
    assert all(a < b for a, b in zip(fractions, fractions[1:]))
    assert all(a > b for a, b in zip(exacts, exacts[1:]))
    for r in rows:
        assert 0.0 <= r.fraction <= 1.0
        assert 0.0 <= r.indist_exact <= 1.0
        assert abs(r.rate_hz - 50e6 * chain.product * r.fraction) < 1e-9 * r.rate_hz
        if math.isinf(r.tau_mod_ns):
            assert r.indist_simple == 0.0
            assert r.delay_ns == 0.0
        else:
            want = min(1.0, model.tau_coh / (2.0 * r.tau_mod_ns))
            assert abs(r.indist_simple - want) < 1e-12
    # unmodulated limit: open modulator recovers the bare-emitter value
    assert abs(rows[-1].indist_exact - 0.1) < 1e-3
    assert rows[-1].fraction > 0.999
    assert rows[1].indist_simple == 1.0


def test_tradeoff_sweep_validation():
    model = coherence_params(1.4, 0.28)
    chain = EfficiencyChain({})
    with pytest.raises(ValueError, match="rep_rate"):
        tradeoff_sweep(model, [0.3], 0.0, chain)
    with pytest.raises(ValueError, match="positive"):
        tradeoff_sweep(model, [-0.3], 50e6, chain)


def test_efficiency_chain():
    chain = EfficiencyChain({"collection": 0.1, "detector": 0.5})
    assert abs(chain.product - 0.05) < 1e-15
    assert EfficiencyChain({}).product == 1.0
    with pytest.raises(ValueError, match="collection"):
        EfficiencyChain({"collection": 1.2})


def test_calibrated_chain_product():
    product = calibrated_chain_product(6.8e4, 50e6, 0.1)
    assert abs(product - 0.0136) < 1e-12
    with pytest.raises(ValueError):
        calibrated_chain_product(6.8e4, 50e6, 0.0)


def test_tradeoff_csv_round_trip(tmp_path):
    model = coherence_params(1.4, 0.28)
    chain = EfficiencyChain({"end_to_end": 0.0136})
    table = tradeoff_sweep(model, [0.14, math.inf], 50e6, chain)
    path = tmp_path / "t.csv"
    write_tradeoff_csv(path, table)
    rows = read_tradeoff_csv(path)
    assert len(rows) == 2
    for got, want in zip(rows, table.rows):
        assert abs(got.fraction - want.fraction) < 1e-8 * max(want.fraction, 1e-30)
        assert abs(got.rate_hz - want.rate_hz) < 1e-8 * want.rate_hz
    assert math.isinf(rows[1].tau_mod_ns)

    path.write_text("wrong,header\n")
    with pytest.raises(CsvFormatError, match="header"):
        read_tradeoff_csv(path)
    path.write_text(
        "tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz\n1,2,3\n"
    )
    with pytest.raises(CsvFormatError, match="6 columns"):
        read_tradeoff_csv(path)
    path.write_text(
        "tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz\n1,2,3,4,5,x\n"
    )
    with pytest.raises(CsvFormatError, match="non-numeric"):
        read_tradeoff_csv(path)


def test_write_fit_txt_format(tmp_path):
    fit = FitResult(
        model="exponential",
        params={"amplitude": 1000.0, "tau_ns": 1.4, "baseline": 2.0},
        ci95={"amplitude": 10.0, "tau_ns": 0.01, "baseline": 0.5},
        residual_norm=1.02,
        n_points=392,
        n_iter=9,
    )
    path = tmp_path / "fit.txt"
    write_fit_txt(path, fit)
    lines = path.read_text().splitlines()
    assert lines[0] == "model exponential"
    assert lines[1] == "n_points 392"
    assert lines[2].startswith("residual_norm ")
    assert "tau_ns 1.4 0.01" in lines
