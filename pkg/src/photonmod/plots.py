"""Static SVG rendering of the CSV outputs.

matplotlib is imported lazily so the simulation stack works without a
plotting backend.  Rendering is deterministic: the Agg backend, a fixed
svg.hashsalt, and stripped date metadata make repeated renders of the
same CSV byte-identical.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .detection import read_histogram_csv
from .analysis import read_tradeoff_csv

_HIST_HEADER = "bin_start_ns,count"
_TRADEOFF_HEADER = "tau_mod_ns,delay_ns,indist_exact,indist_simple,fraction,rate_hz"
_PEAKS_HEADER = (
    "delay_ns,expected_peak,observed_peak,ratio_expected,ratio_analytic,ratio_observed"
)


def _mpl():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "photonmod"
    return plt


def _save(fig, out_path):
    # no Date metadata, otherwise every render differs by a timestamp
    fig.savefig(out_path, format="svg", metadata={"Date": None})


def _csv_header(path) -> str:
    with open(path, "r", encoding="ascii") as fh:
        return fh.readline().strip()


def load_fit_txt(path):
    """Parse a fit export back into (model, {name: (value, ci95)})."""
    model = None
    params = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "model":
                model = parts[1]
            elif parts[0] in ("n_points", "residual_norm"):
                continue
            elif len(parts) == 3:
                params[parts[0]] = (float(parts[1]), float(parts[2]))
    if model is None:
        raise ValueError(f"{path} is not a fit export")
    return model, params


def _fit_curve(model, params, t):
    value = {k: v[0] for k, v in params.items()}
    if model == "exponential":
        return value["amplitude"] * np.exp(-t / value["tau_ns"]) + value["baseline"]
    if model in ("gaussian", "notch"):
        z = (t - value["center_ns"]) / value["sigma_ns"]
        return value["amplitude"] * np.exp(-0.5 * z * z) + value["baseline"]
    raise ValueError(f"no curve form for fit model {model!r}")


def _pretty(stem: str) -> str:
    for prefix in ("hist_", "cal_"):
        if stem.startswith(prefix):
            stem = stem[len(prefix):]
    return stem.replace("_", " ")


def _sibling_fit(csv_path):
    folder, base = os.path.split(csv_path)
    stem = os.path.splitext(base)[0]
    candidates = [f"fit_{stem}.txt"]
    if stem.startswith("hist_"):
        candidates.append(f"fit_{stem[len('hist_'):]}.txt")
    for cand in candidates:
        p = os.path.join(folder, cand)
        if os.path.exists(p):
            return p
    return None


def _steps(ax, h, label):
    edges = h.bin_edges
    ax.stairs(h.counts, edges, label=label, linewidth=1.0)


def plot_histogram(csv_path, out_path, fit_txt=None) -> None:
    """One histogram as steps, with the fitted model overlaid if given."""
    plt = _mpl()
    h = read_histogram_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    _steps(ax, h, _pretty(os.path.splitext(os.path.basename(csv_path))[0]))
    if fit_txt is not None:
        model, params = load_fit_txt(fit_txt)
        t = np.linspace(h.bin_edges[0], h.bin_edges[-1], 600)
        ax.plot(t, _fit_curve(model, params, t), linewidth=1.2, label=f"{model} fit")
    positive = h.counts[h.counts > 0]
    if positive.size and positive.max() / positive.min() > 100.0:
        ax.set_yscale("log")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def plot_histogram_overlay(csv_paths, out_path) -> None:
    """Several histograms as steps on shared axes."""
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(7.2, 4.4))
    any_positive = False
    lo_ratio = 1.0
    for path in csv_paths:
        h = read_histogram_csv(path)
        _steps(ax, h, _pretty(os.path.splitext(os.path.basename(path))[0]))
        positive = h.counts[h.counts > 0]
        if positive.size:
            any_positive = True
            lo_ratio = max(lo_ratio, positive.max() / positive.min())
    if any_positive and lo_ratio > 100.0:
        ax.set_yscale("log")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def plot_tradeoff(csv_path, out_path) -> None:
    """Indistinguishability (left axis) and rate (right, log) vs window width."""
    plt = _mpl()
    rows = read_tradeoff_csv(csv_path)
    finite = [r for r in rows if math.isfinite(r.tau_mod_ns)]
    open_rows = [r for r in rows if not math.isfinite(r.tau_mod_ns)]
    x = np.array([r.tau_mod_ns for r in finite])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(x, [r.indist_exact for r in finite], "o-", color="C0", label="overlap, exact")
    ax.plot(
        x,
        [r.indist_simple for r in finite],
        "s--",
        color="C0",
        alpha=0.6,
        label="overlap, narrow-window limit",
    )
    ax.set_xscale("log")
    ax.set_xlabel("modulation window FWHM (ns)")
    ax.set_ylabel("two-photon overlap")
    ax.set_ylim(0.0, 1.05)
    ax2 = ax.twinx()
    ax2.plot(x, [r.rate_hz for r in finite], "d-", color="C1", label="rate")
    ax2.set_yscale("log")
    ax2.set_ylabel("detected rate (counts/s)")
    for r in open_rows:
        ax.axhline(r.indist_exact, color="C0", linestyle=":", alpha=0.5)
        ax2.axhline(r.rate_hz, color="C1", linestyle=":", alpha=0.5)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def plot_peaks(csv_path, out_path) -> None:
    """Measured and analytic peak ratios against the exponential reference."""
    plt = _mpl()
    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    d = data["delay_ns"]
    ax.plot(d, data["ratio_expected"], "-", color="C2", label="exp(-delay/tau_sp)")
    ax.plot(d, data["ratio_analytic"], "o", color="C0", label="expectation peaks")
    ax.plot(d, data["ratio_observed"], "x", color="C1", label="sampled peaks")
    ax.set_yscale("log")
    ax.set_xlabel("modulation delay (ns)")
    ax.set_ylabel("peak ratio")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def render(paths, out_dir=None) -> list:
    """Render SVG plots for the given CSVs (or every CSV in a directory).

    Dispatches on each file's header line.  Histograms with a sibling
    fit_*.txt get the fitted curve overlaid; two or more histograms from
    the same directory also produce a combined overlay.svg.  Returns the
    list of files written.
    """
    csvs = []
    for p in paths:
        if os.path.isdir(p):
            csvs.extend(
                os.path.join(p, n) for n in sorted(os.listdir(p)) if n.endswith(".csv")
            )
        else:
            csvs.append(p)
    if not csvs:
        raise ValueError("nothing to plot")
    written = []
    hist_groups: dict = {}
    for path in csvs:
        header = _csv_header(path)
        folder, base = os.path.split(path)
        stem = os.path.splitext(base)[0]
        target_dir = out_dir if out_dir is not None else folder
        os.makedirs(target_dir, exist_ok=True)
        out_path = os.path.join(target_dir, stem + ".svg")
        if header == _HIST_HEADER:
            plot_histogram(path, out_path, fit_txt=_sibling_fit(path))
            hist_groups.setdefault((folder, target_dir), []).append(path)
        elif header == _TRADEOFF_HEADER:
            plot_tradeoff(path, out_path)
        elif header == _PEAKS_HEADER:
            plot_peaks(path, out_path)
        else:
            raise ValueError(f"{path}: unrecognized CSV header {header!r}")
        written.append(out_path)
    for (_, target_dir), group in hist_groups.items():
        if len(group) >= 2:
            out_path = os.path.join(target_dir, "overlay.svg")
            plot_histogram_overlay(group, out_path)
            written.append(out_path)
    return written


def emit_plots(csv_paths, out_dir=None) -> list:
    """Alias of render with the (csv_paths, out_dir) calling order."""
    return render(csv_paths, out_dir)
