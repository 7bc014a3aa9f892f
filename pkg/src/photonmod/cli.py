"""Command-line front end.

Subcommands::

    photonmod run <config>       execute a scenario file
    photonmod preset <name>      execute a built-in scenario
    photonmod sweep <config>     execute a sweep scenario file
    photonmod fit <csv>          fit one histogram CSV
    photonmod plot <csv...>      render SVG plots from CSVs or a run directory

Common flags: --out (output directory, default $PHOTONMOD_OUT or the
working directory), --seed and --pulses override the scenario.  Exit
codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .scenario import ConfigError

OUT_ENV = "PHOTONMOD_OUT"


def _base_out(args) -> str:
    if args.out is not None:
        return args.out
    return os.environ.get(OUT_ENV, ".")


def _scenario_out(args, name: str) -> str:
    # an explicit --out is taken literally; the env/cwd default gets a
    # per-scenario subdirectory so presets do not clobber each other
    if args.out is not None:
        return args.out
    return os.path.join(os.environ.get(OUT_ENV, "."), name)


def _print_report(report) -> None:
    print(f"scenario {report.name} ({report.kind}), seed {report.seed}")
    print(f"outputs in {report.out_dir}:")
    for name in report.files:
        print(f"  {name}")
    from .pipeline import _fit_summary

    for label, fit in report.fits:
        print("  " + _fit_summary(label, fit))
    for note in report.notes:
        print(f"  note {note}")
    for w in report.warnings:
        print(f"  warning {w}")
    print(f"done in {report.duration_s:.2f} s")


def _cmd_run(args) -> int:
    from .pipeline import run_scenario
    from .scenario import load_scenario

    scn = load_scenario(args.config)
    if args.kind_filter is not None and scn.kind != args.kind_filter:
        raise ConfigError(
            f"key scenario.kind: this subcommand runs kind = {args.kind_filter}, "
            f"got {scn.kind}"
        )
    report = run_scenario(
        scn, _scenario_out(args, scn.name), seed=args.seed, n_pulses=args.pulses
    )
    _print_report(report)
    return 0


def _cmd_preset(args) -> int:
    from .pipeline import preset_scenario, run_scenario

    scn = preset_scenario(args.name)
    report = run_scenario(
        scn, _scenario_out(args, scn.name), seed=args.seed, n_pulses=args.pulses
    )
    _print_report(report)
    return 0


def _cmd_fit(args) -> int:
    from .analysis import fit_exponential, fit_gaussian, write_fit_txt
    from .detection import read_histogram_csv

    h = read_histogram_csv(args.csv)
    if args.model == "exponential":
        fit = fit_exponential(h, start_offset_ns=args.start_offset)
    else:
        fit = fit_gaussian(
            h, inverted=args.model == "notch", jitter_fwhm_ns=args.jitter_fwhm
        )
    stem = os.path.splitext(os.path.basename(args.csv))[0]
    out_dir = _base_out(args)
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, f"fit_{stem}.txt")
    write_fit_txt(out_path, fit)
    print(f"wrote {out_path}")
    for name, value in fit.params.items():
        print(f"  {name} {value:.9g} ci95 {fit.ci95[name]:.9g}")
    return 0


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    written = emit_plots(args.csvs, out_dir=args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonmod",
        description="Simulate electro-optically modulated single-photon wavepackets "
        "with gated time-correlated detection.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--out",
        metavar="DIR",
        default=None,
        help=f"output directory (default: ${OUT_ENV} or the working directory)",
    )
    runlike = argparse.ArgumentParser(add_help=False)
    runlike.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    runlike.add_argument(
        "--pulses", type=int, default=None, help="override the excitation pulse count"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common, runlike], help="execute a scenario file")
    p_run.add_argument("config", help="scenario file path")
    p_run.set_defaults(fn=_cmd_run, kind_filter=None)

    p_preset = sub.add_parser(
        "preset", parents=[common, runlike], help="execute a built-in scenario"
    )
    from .pipeline import PRESET_NAMES

    p_preset.add_argument("name", choices=PRESET_NAMES, help="preset name")
    p_preset.set_defaults(fn=_cmd_preset)

    p_sweep = sub.add_parser(
        "sweep", parents=[common, runlike], help="execute a sweep scenario file"
    )
    p_sweep.add_argument("config", help="sweep scenario file path")
    p_sweep.set_defaults(fn=_cmd_run, kind_filter="sweep")

    p_fit = sub.add_parser("fit", parents=[common], help="fit one histogram CSV")
    p_fit.add_argument("csv", help="histogram CSV path")
    p_fit.add_argument(
        "--model",
        choices=("exponential", "gaussian", "notch"),
        default="exponential",
        help="fit model (default exponential)",
    )
    p_fit.add_argument(
        "--jitter-fwhm",
        type=float,
        default=None,
        metavar="NS",
        help="detector jitter FWHM for width deconvolution (gaussian/notch)",
    )
    p_fit.add_argument(
        "--start-offset",
        type=float,
        default=0.0,
        metavar="NS",
        help="exponential fits start this far past the peak bin",
    )
    p_fit.set_defaults(fn=_cmd_fit)

    p_plot = sub.add_parser("plot", parents=[common], help="render SVG plots")
    p_plot.add_argument("csvs", nargs="+", help="CSV files or run directories")
    p_plot.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - the CLI boundary maps all failures to exit 2
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
