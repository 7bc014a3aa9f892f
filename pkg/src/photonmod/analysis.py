"""Curve fitting and the indistinguishability / throughput trade-off.

Fits use a damped Gauss-Newton (Levenberg) iteration with Poisson
weights 1/max(model count, 1); 95 percent intervals come straight from
the linearized information matrix (J^T W J)^-1, unscaled.

Indistinguishability of successive modulated photons under pure
dephasing gamma_star is

    I = Int w(t1) w(t2) exp(-2 gamma_star |t1 - t2|) dt1 dt2 / (Int w)^2

with w(t) = T(t - delay) * gamma * exp(-gamma t), which reduces to
gamma / (gamma + 2 gamma_star) for unit transmission.  The same quantity
is also estimated by averaging squared overlaps of sampled dephased
wavepacket pairs, giving an independent Monte Carlo cross check.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import TimeGrid, make_time_grid
from .detection import Histogram
from .emitter import EmitterModel
from .modulator import (
    TransmissionEnvelope,
    gaussian_envelope_family,
    unit_envelope,
)

__all__ = [
    "FitResult",
    "FitConvergenceError",
    "EfficiencyChain",
    "TradeoffRow",
    "TradeoffTable",
    "fit_exponential",
    "fit_gaussian",
    "indistinguishability_exact",
    "indistinguishability_mc",
    "indistinguishability_simple",
    "transmitted_fraction",
    "optimal_delay",
    "tradeoff_sweep",
    "calibrated_chain_product",
    "write_fit_txt",
    "write_tradeoff_csv",
    "read_tradeoff_csv",
]

_FWHM_OF_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class FitConvergenceError(RuntimeError):
    """Raised when the iteration stalls; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class FitResult:
    """Fitted parameters with 95 percent confidence half-widths."""

    model: str
    params: dict
    ci95: dict
    residual_norm: float
    n_points: int = 0
    n_iter: int = 0


@dataclass(frozen=True)
class EfficiencyChain:
    """Named multiplicative collection/detection factors."""

    factors: dict

    def __post_init__(self):
        for name, value in self.factors.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"chain factor {name!r}={value} must lie in [0, 1]")

    @property
    def product(self) -> float:
        out = 1.0
        for value in self.factors.values():
            out *= value
        return out


@dataclass
class TradeoffRow:
    tau_mod_ns: float
    delay_ns: float
    indist_exact: float
    indist_simple: float
    fraction: float
    rate_hz: float


@dataclass
class TradeoffTable:
    rows: list
    rep_rate_hz: float
    chain: EfficiencyChain


def _levenberg(model_jac, y, p0, validate, max_iter=400, rtol=1e-8):
    """Damped Gauss-Newton with Poisson weights 1/max(model count, 1).

    The weights follow the model rather than the observed counts, which
    would correlate them with the noise and bias decaying fits; they are
    frozen over each damped-descent round and refreshed from the new
    model between rounds, so every round minimizes a self-consistent
    weighted least-squares objective.  Returns (p, jtw_j, pearson_chi2,
    total_iterations) at the fixed point.
    """
    p = np.asarray(p0, dtype=float)
    if not validate(p):
        raise ValueError("initial guess is outside the valid parameter region")
    # fixed per-parameter scale so a parameter crossing zero (a baseline
    # with no dark counts) cannot stall the relative-step tests
    scale = np.maximum(np.abs(p), 1e-6 * np.max(np.abs(p)))

    f, jac = model_jac(p)
    total_it = 0
    round_rel = math.inf
    for _ in range(40):
        w = 1.0 / np.maximum(f, 1.0)
        chi2 = float(w @ (y - f) ** 2)
        lam = 1e-3
        p_round = p
        while total_it < max_iter:
            total_it += 1
            jtwj = (jac * w[:, None]).T @ jac
            jtwr = jac.T @ (w * (y - f))
            step = None
            chi2_prev = chi2
            while lam < 1e12:
                damped = jtwj + lam * np.diag(np.diag(jtwj).clip(min=1e-300))
                try:
                    trial_step = np.linalg.solve(damped, jtwr)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                trial = p + trial_step
                if validate(trial):
                    f_try, jac_try = model_jac(trial)
                    chi2_try = float(w @ (y - f_try) ** 2)
                    if chi2_try <= chi2:
                        step = trial_step
                        p, f, jac, chi2 = trial, f_try, jac_try, chi2_try
                        lam = max(lam / 3.0, 1e-12)
                        break
                lam *= 10.0
            if step is None:
                # stationary under the frozen weights
                break
            if np.max(np.abs(step) / scale) < rtol:
                break
            if lam <= 1e-2 and chi2_prev - chi2 <= 1e-12 * chi2:
                break
        round_rel = float(np.max(np.abs(p - p_round) / scale))
        if round_rel < 10.0 * rtol:
            break
        if total_it >= max_iter:
            break
    if round_rel >= 1e-5:
        dof = max(y.shape[0] - p.shape[0], 1)
        raise FitConvergenceError(
            f"fit did not converge within {max_iter} iterations", best=(p, chi2, dof)
        )
    w = 1.0 / np.maximum(f, 1.0)
    jtwj = (jac * w[:, None]).T @ jac
    pearson = float(w @ (y - f) ** 2)
    return p, jtwj, pearson, total_it


def _finish_fit(model_name, names, p, jtwj, chi2, n_points, it, transforms=None):
    dof = max(n_points - p.shape[0], 1)
    chi2_red = chi2 / dof
    # covariance straight from the information matrix: rescaling by the
    # reduced chi-square would shrink it whenever near-empty bins dilute
    # the Pearson sum below one per degree of freedom
    try:
        cov = np.linalg.inv(jtwj)
        sigma = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        sigma = np.full(p.shape[0], math.nan)
    params = dict(zip(names, p))
    ci95 = dict(zip(names, 1.96 * sigma))
    if transforms:
        for out_name, fn in transforms:
            value, ci = fn(params, ci95)
            params[out_name] = value
            ci95[out_name] = ci
    return FitResult(
        model=model_name,
        params=params,
        ci95=ci95,
        residual_norm=math.sqrt(chi2_red),
        n_points=n_points,
        n_iter=it,
    )


def _histogram_xy(h) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(h, Histogram):
        return h.bin_centers(), h.counts.astype(float)
    t, y = h
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def fit_exponential(h, start_offset_ns: float = 0.0) -> FitResult:
    """Weighted fit of a*exp(-t/tau) + b from the peak bin onward.

    start_offset_ns pushes the first fitted bin past the peak; with a
    jitter-broadened rise, starting about 1.5 jitter widths after the
    peak keeps the pure-decay model unbiased.
    """
    t_all, y_all = _histogram_xy(h)
    peak = int(np.argmax(y_all))
    if start_offset_ns > 0.0:
        after = np.nonzero(t_all >= t_all[peak] + start_offset_ns)[0]
        if after.shape[0]:
            peak = int(after[0])
    t = t_all[peak:]
    y = y_all[peak:]
    if np.all(y == 0.0):
        raise ValueError("histogram is empty")
    if int(np.count_nonzero(y)) < 10:
        raise ValueError("need at least 10 nonempty bins from the peak onward")

    tail = y[-max(3, y.shape[0] // 10):]
    b0 = float(np.median(tail))
    # log-slope over the first decade below the peak for the decay guess
    usable = np.nonzero(y - b0 > max((y[0] - b0) / 10.0, 1.0))[0]
    if usable.shape[0] >= 2:
        coef = np.polyfit(t[usable], np.log(y[usable] - b0), 1)
        tau0 = -1.0 / coef[0] if coef[0] < 0.0 else (t[-1] - t[0]) / 3.0
    else:
        tau0 = (t[-1] - t[0]) / 3.0
    tau0 = max(tau0, 2.0 * (t[1] - t[0]))
    a0 = max(y[0] - b0, 1.0) * math.exp(t[0] / tau0)

    def model_jac(p):
        a, tau, b = p
        e = np.exp(-t / tau)
        f = a * e + b
        jac = np.empty((t.shape[0], 3))
        jac[:, 0] = e
        jac[:, 1] = a * e * t / tau**2
        jac[:, 2] = 1.0
        return f, jac

    def validate(p):
        return p[0] > 0.0 and p[1] > 0.0 and np.isfinite(p).all()

    try:
        p, jtwj, chi2, it = _levenberg(model_jac, y, [a0, tau0, b0], validate)
    except FitConvergenceError as err:
        p, chi2, dof = err.best
        raise FitConvergenceError(
            f"exponential fit did not converge (best tau={p[1]:.4g}, chi2/dof={chi2 / dof:.4g})",
            best=err.best,
        ) from None
    return _finish_fit(
        "exponential", ["amplitude", "tau_ns", "baseline"], p, jtwj, chi2, t.shape[0], it
    )


def fit_gaussian(
    h,
    inverted: bool = False,
    jitter_fwhm_ns: float | None = None,
    window_ns: tuple | None = None,
) -> FitResult:
    """Weighted fit of a*exp(-(t-t0)^2/(2 sigma^2)) + b; a flips sign for dips.

    Reports fwhm_ns = 2 sqrt(2 ln 2) sigma.  When the timing jitter is
    known, fwhm_deconvolved_ns = sqrt(fwhm^2 - jitter^2) is reported
    alongside with its propagated interval.  window_ns optionally
    restricts the fitted bins to [lo, hi].
    """
    t, y = _histogram_xy(h)
    if window_ns is not None:
        keep = (t >= window_ns[0]) & (t <= window_ns[1])
        t, y = t[keep], y[keep]
    if t.shape[0] < 5:
        raise ValueError("too few bins to fit")
    if np.all(y == y[0]):
        raise ValueError("histogram is flat")

    if inverted:
        ext = int(np.argmin(y))
        b0 = float(np.percentile(y, 90.0))
    else:
        ext = int(np.argmax(y))
        b0 = float(np.percentile(y, 10.0))
    t0_0 = float(t[ext])
    a0 = float(y[ext] - b0)
    if a0 == 0.0:
        a0 = -1.0 if inverted else 1.0
    bump = np.maximum(b0 - y, 0.0) if inverted else np.maximum(y - b0, 0.0)
    mass = float(bump.sum())
    if mass > 0.0:
        mean = float((t * bump).sum() / mass)
        var = float(((t - mean) ** 2 * bump).sum() / mass)
        sigma0 = math.sqrt(max(var, (t[1] - t[0]) ** 2))
        t0_0 = mean
    else:
        sigma0 = (t[-1] - t[0]) / 6.0

    def model_jac(p):
        a, t0, sigma, b = p
        z = (t - t0) / sigma
        e = np.exp(-0.5 * z * z)
        f = a * e + b
        jac = np.empty((t.shape[0], 4))
        jac[:, 0] = e
        jac[:, 1] = a * e * z / sigma
        jac[:, 2] = a * e * z * z / sigma
        jac[:, 3] = 1.0
        return f, jac

    def validate(p):
        good_sign = p[0] < 0.0 if inverted else p[0] > 0.0
        return good_sign and p[2] > 0.0 and np.isfinite(p).all()

    try:
        p, jtwj, chi2, it = _levenberg(model_jac, y, [a0, t0_0, sigma0, b0], validate)
    except FitConvergenceError as err:
        p, chi2, dof = err.best
        raise FitConvergenceError(
            f"gaussian fit did not converge (best sigma={p[2]:.4g}, chi2/dof={chi2 / dof:.4g})",
            best=err.best,
        ) from None

    def fwhm_from(params, ci):
        return _FWHM_OF_SIGMA * params["sigma_ns"], _FWHM_OF_SIGMA * ci["sigma_ns"]

    transforms = [("fwhm_ns", fwhm_from)]
    if jitter_fwhm_ns is not None:

        def deconv(params, ci):
            w = params["fwhm_ns"]
            if w <= jitter_fwhm_ns:
                return math.nan, math.nan
            d = math.sqrt(w**2 - jitter_fwhm_ns**2)
            return d, ci["fwhm_ns"] * w / d

        transforms.append(("fwhm_deconvolved_ns", deconv))
    return _finish_fit(
        "notch" if inverted else "gaussian",
        ["amplitude", "center_ns", "sigma_ns", "baseline"],
        p,
        jtwj,
        chi2,
        t.shape[0],
        it,
        transforms,
    )


def _shifted_transmission(env: TransmissionEnvelope, delay: float) -> np.ndarray:
    dt = env.grid.dt
    k = int(round(delay / dt))
    n = env.grid.n
    out = np.full(n, env.resting)
    if k >= 0:
        if k < n:
            out[k:] = env.transmission[: n - k]
    else:
        if -k < n:
            out[: n + k] = env.transmission[-k:]
    return out


def _weight_function(model: EmitterModel, env: TransmissionEnvelope, delay: float) -> np.ndarray:
    t = env.grid.times()
    decay = np.where(t >= 0.0, model.gamma * np.exp(-model.gamma * np.maximum(t, 0.0)), 0.0)
    return _shifted_transmission(env, delay) * decay


def indistinguishability_exact(
    model: EmitterModel, env: TransmissionEnvelope, delay: float = 0.0
) -> float:
    """Two-photon overlap of successive transmitted wavepackets."""
    w = _weight_function(model, env, delay)
    dt = env.grid.dt
    denom = float(np.trapezoid(w, dx=dt))
    if denom <= 0.0:
        raise ValueError("envelope transmits nothing: integral of the weight is zero")
    if model.gamma_star == 0.0:
        return 1.0
    num = _kernels.exp_kernel_overlap(w, dt, 2.0 * model.gamma_star)
    return min(1.0, max(0.0, num / denom**2))


def indistinguishability_mc(
    model: EmitterModel,
    env: TransmissionEnvelope,
    delay: float = 0.0,
    n_pairs: int = 10_000,
    seed: int = 0,
    chunk: int = 256,
) -> tuple[float, float]:
    """Mean squared overlap over sampled dephased pairs, with its standard error."""
    if n_pairs < 2:
        raise ValueError("need at least two pairs")
    w = _weight_function(model, env, delay)
    dt = env.grid.dt
    wc = w * dt
    wc[0] *= 0.5
    wc[-1] *= 0.5
    denom = float(wc.sum())
    if denom <= 0.0:
        raise ValueError("envelope transmits nothing: integral of the weight is zero")
    if model.gamma_star == 0.0:
        return 1.0, 0.0
    scale = math.sqrt(2.0 * model.gamma_star * dt)
    rng = np.random.default_rng(seed)
    values = np.empty(n_pairs)
    done = 0
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        eps = rng.standard_normal((m, 2, w.shape[0] - 1)) * scale
        values[done : done + m] = _kernels.pair_overlap(wc, eps[:, 0], eps[:, 1])
        done += m
    values /= denom**2
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n_pairs))


def indistinguishability_simple(model: EmitterModel, tau_mod_ns: float) -> float:
    """Back-of-envelope estimate min(1, tau_coh / (2 tau_mod))."""
    if tau_mod_ns <= 0.0:
        raise ValueError("tau_mod_ns must be positive")
    if math.isinf(tau_mod_ns):
        return 0.0
    return min(1.0, model.tau_coh / (2.0 * tau_mod_ns))


def transmitted_fraction(
    model: EmitterModel, env: TransmissionEnvelope, delay: float = 0.0
) -> float:
    """Trapezoid integral of T(t - delay) * gamma * exp(-gamma t) on the grid."""
    w = _weight_function(model, env, delay)
    return float(np.trapezoid(w, dx=env.grid.dt))


def _golden_max(fn, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def optimal_delay(
    model: EmitterModel,
    env_family,
    objective: str = "fraction",
    delay_range: tuple = (-2.0, 10.0),
    max_scan: int = 2000,
) -> float:
    """Delay maximizing the objective over the given range.

    env_family maps a delay to a TransmissionEnvelope on a fixed grid.
    A grid scan at dt steps (capped at max_scan points for wide ranges)
    brackets the winner and golden-section refinement polishes it to
    sub-dt accuracy; ties keep the smallest delay.
    """
    lo, hi = delay_range
    if hi <= lo:
        raise ValueError("delay_range must be increasing")
    grid = env_family(lo).grid
    dt = grid.dt

    if objective == "fraction":
        # precomputed trapezoid weights make each scan point a dot product
        t = grid.times()
        decay = np.where(t >= 0.0, model.gamma * np.exp(-model.gamma * np.maximum(t, 0.0)), 0.0)
        wq = decay * dt
        wq[0] *= 0.5
        wq[-1] *= 0.5

        def single(d):
            return float(wq @ env_family(d).transmission)

    elif objective == "indistinguishability":

        def single(d):
            return indistinguishability_exact(model, env_family(d))

    elif objective == "product":

        def single(d):
            env = env_family(d)
            return transmitted_fraction(model, env) * indistinguishability_exact(model, env)

    else:
        raise ValueError(f"unknown objective {objective!r}")

    n_scan = min(max_scan, max(8, int(math.floor((hi - lo) / dt)))) + 1
    delays = np.linspace(lo, hi, n_scan)
    values = np.array([single(d) for d in delays])
    best = int(np.argmax(values))
    scan_delay = float(delays[best])
    scan_value = float(values[best])
    step = delays[1] - delays[0]

    refined = _golden_max(
        single, max(lo, scan_delay - step), min(hi, scan_delay + step), tol=1e-6 * max(dt, 1e-9)
    )
    if single(refined) > scan_value * (1.0 + 1e-12):
        return float(refined)
    return float(scan_delay)


def tradeoff_sweep(
    model: EmitterModel,
    tau_range,
    rep_rate_hz: float,
    chain: EfficiencyChain,
    grid: TimeGrid | None = None,
    t_max: float = 1.0,
    floor: float = 0.0,
) -> TradeoffTable:
    """Indistinguishability and rate against the modulation window width.

    Each finite tau_mod gets an ideal Gaussian window of that FWHM at its
    own throughput-optimal delay; math.inf rows use the open modulator.
    rate_hz = rep_rate_hz * chain.product * transmitted fraction.
    """
    if rep_rate_hz <= 0.0:
        raise ValueError("rep_rate_hz must be positive")
    if grid is None:
        grid = make_time_grid(0.0, 10.0 * model.tau_sp, 0.001)
    rows = []
    for tau_mod in tau_range:
        tau_mod = float(tau_mod)
        if math.isinf(tau_mod):
            env = unit_envelope(grid, t_max)
            delay = 0.0
            fraction = transmitted_fraction(model, env)
            exact = indistinguishability_exact(model, env)
        else:
            if tau_mod <= 0.0:
                raise ValueError("tau_mod values must be positive")
            family = gaussian_envelope_family(grid, tau_mod, t_max, floor)
            delay = optimal_delay(
                model, family, "fraction", (-2.0 * tau_mod, 2.0 * model.tau_sp + tau_mod)
            )
            env = family(delay)
            fraction = transmitted_fraction(model, env)
            exact = indistinguishability_exact(model, env)
        rows.append(
            TradeoffRow(
                tau_mod_ns=tau_mod,
                delay_ns=delay,
                indist_exact=exact,
                indist_simple=indistinguishability_simple(model, tau_mod),
                fraction=fraction,
                rate_hz=rep_rate_hz * chain.product * fraction,
            )
        )
    return TradeoffTable(rows, rep_rate_hz, chain)


def calibrated_chain_product(target_rate_hz: float, rep_rate_hz: float, fraction: float) -> float:
    """Chain product implied by a measured rate at a given fraction."""
    if target_rate_hz <= 0.0 or rep_rate_hz <= 0.0 or fraction <= 0.0:
        raise ValueError("rates and fraction must be positive")
    return target_rate_hz / (rep_rate_hz * fraction)


def write_fit_txt(path, fit: FitResult) -> None:
    """Structured text export: one 'param value ci95' triple per line."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"model {fit.model}\n")
        fh.write(f"n_points {fit.n_points}\n")
        fh.write(f"residual_norm {fit.residual_norm:.9g}\n")
        for name in fit.params:
            fh.write(f"{name} {fit.params[name]:.9g} {fit.ci95[name]:.9g}\n")


def write_tradeoff_csv(path, table: TradeoffTable) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz\n")
        for r in table.rows:
            fh.write(
                f"{r.tau_mod_ns:.9g},{r.delay_ns:.9g},{r.indist_exact:.9g},"
                f"{r.indist_simple:.9g},{r.fraction:.9g},{r.rate_hz:.9g}\n"
            )


def read_tradeoff_csv(path) -> list:
    from .core import CsvFormatError

    header = "tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz"
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline().strip()
        if first != header:
            raise CsvFormatError(path, 1, f"expected header {header!r}, got {first!r}")
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise CsvFormatError(path, line_no, f"expected 6 columns, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise CsvFormatError(path, line_no, f"non-numeric value in {line.strip()!r}") from None
            rows.append(TradeoffRow(*vals))
    return rows
