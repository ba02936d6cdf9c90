"""Command-line interface: ``eitstore <subcommand> ...``.

Exit codes: 0 on success, 1 for configuration or usage errors, 2 when the
integration fails numerically.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import logging
from pathlib import Path
import sys

import numpy as np
import yaml

from . import __version__
from .homodyne import CalibrationError
from .io import (TimeSeriesTable, emit_manifest, ensemble_from_table, ensemble_table,
                 parse_config, read_timeseries, write_timeseries)
from .model import ModelError
from .scenarios import (AnalysisConfig, ConfigError, analyze_ensemble, preset_names,
                        raman_variant, run_detuning_scan, run_raman_scan, run_scenario,
                        run_storage_vs_propagation)
from .solver import NumericalError

log = logging.getLogger("eitstore")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

RAMAN_NOTE = ("Raman runs reuse the EIT signal pulse shape; the atom density factor and "
              "coupling power are listed under physics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_config_args(p, positional=True):
    if positional:
        p.add_argument("scenario", help="preset name or YAML configuration file")
    else:
        p.add_argument("scenario", nargs="?", default="eit-desk",
                       help="base preset or configuration file (default: eit-desk)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario field, e.g. physics.detuning_hz=1.3e9")
    p.add_argument("--workers", type=int, help="parallel runs (default: $EITSTORE_WORKERS "
                   "or the CPU count)")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = _Parser(prog="eitstore", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one storage sequence and analyse it")
    _add_config_args(p)
    p.add_argument("--no-ensemble", action="store_true",
                   help="skip writing the synthetic homodyne records")

    p = sub.add_parser("scan-detuning", help="phi_EIT(t) for several detunings")
    _add_config_args(p, positional=False)
    p.add_argument("--deltas", help="comma separated detunings in Hz")

    p = sub.add_parser("compare-propagation", help="storage against plain propagation")
    _add_config_args(p, positional=False)
    p.add_argument("--deltas", help="comma separated detunings in Hz")

    p = sub.add_parser("raman", help="far-detuned storage scan")
    _add_config_args(p, positional=False)
    p.add_argument("--deltas", help="comma separated detunings in Hz")

    p = sub.add_parser("analyze", help="homodyne read-out of a record ensemble CSV")
    p.add_argument("ensemble", help="CSV with time_s and record_k columns")
    p.add_argument("--out", help="output directory")
    p.add_argument("--switch-off", type=float, help="storage start (s); default from file")
    p.add_argument("--switch-on", type=float, help="retrieval start (s); default from file")
    p.add_argument("--threshold", type=float, default=AnalysisConfig.threshold)
    p.add_argument("--window", type=float, nargs=2, default=AnalysisConfig.window_s,
                   metavar=("START", "END"), help="reporting window after retrieval start (s)")
    p.add_argument("--filter", action="store_true", help="notch out the 90 ns artifact")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("validate", help="check a configuration and print its manifest")
    p.add_argument("config", help="preset name or YAML configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _config(args):
    src = args.scenario
    common = dict(overrides=args.set, out_dir=getattr(args, "out", None),
                  workers=getattr(args, "workers", None), seed=getattr(args, "seed", None),
                  verbosity=getattr(args, "verbose", None))
    if Path(src).is_file():
        return parse_config(src, **common)
    if src not in preset_names():
        raise ConfigError(f"{src!r} is neither a file nor a preset "
                          f"({', '.join(preset_names())})")
    return parse_config(scenario=src, **common)


def _deltas(text):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--deltas: {exc}") from exc


def _out_dir(config, default):
    out = Path(config.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _phase_columns(res):
    ret = res.retrieved
    cols = {"time_s": res.t,
            "exit_intensity": np.abs(res.exit_signal) ** 2,
            "recovered_intensity": res.i_s,
            "leak_dphi": res.leak.delta_phi,
            "retrieved_dphi": np.full(len(res.t), np.nan),
            "phi_eit": ret.phi_eit,
            "direct_phi_eit": res.direct_phi_eit}
    cols["retrieved_dphi"][ret.valid] = ret.delta_phi[ret.valid]
    units = {"time_s": "s", "exit_intensity": "rad^2/s^2", "recovered_intensity": "rad^2/s^2",
             "leak_dphi": "rad", "retrieved_dphi": "rad", "phi_eit": "rad",
             "direct_phi_eit": "rad"}
    return TimeSeriesTable(cols, units, {"retrieval_start_s": float(res.record.timeline.t_switch_on),
                                         "alpha": float(res.alpha)})


def _summary(res):
    return {"leak_energy_fraction": res.leak_fraction,
            "retrieved_energy_fraction": res.retrieved_fraction,
            "max_abs_phi_eit_rad": res.max_abs_phi_eit(),
            "max_abs_direct_phi_eit_rad": res.max_abs_phi_eit(direct=True),
            "alpha": float(res.alpha),
            "trace_error": res.record.trace_error(),
            "bound_violations": int(res.record.bound_violations)}


def cmd_run(args):
    cfg = _config(args)
    out = _out_dir(cfg, f"out-{cfg.scenario.name}")
    res = run_scenario(cfg.scenario)
    files = []
    rec = res.record
    k = max(1, int(round(cfg.scenario.analysis.sample_s / rec.dt)))
    write_timeseries(TimeSeriesTable(
        {"time_s": rec.t[::k], "input_signal": rec.input_signal[::k],
         "exit_signal": rec.exit_signal[::k], "exit_coupling": rec.exit_coupling[::k]},
        {"time_s": "s", "input_signal": "rad/s", "exit_signal": "rad/s",
         "exit_coupling": "rad/s"}), out / "exit_fields.csv")
    files.append("exit_fields.csv")
    write_timeseries(_phase_columns(res), out / "phase.csv")
    files.append("phase.csv")
    if res.ensemble is not None and not args.no_ensemble:
        write_timeseries(ensemble_table(res.ensemble), out / "ensemble.csv")
        files.append("ensemble.csv")
    (out / "summary.yaml").write_text(yaml.safe_dump(_summary(res), sort_keys=False))
    files.append("summary.yaml")
    files.append("manifest.yaml")
    emit_manifest(cfg, out / "manifest.yaml", outputs=files)
    print(yaml.safe_dump(_summary(res), sort_keys=False), end="")
    return EXIT_OK


def _write_table(table, out, name, cfg, notes=()):
    write_timeseries(TimeSeriesTable(table.columns(), {k: "s" if k == "time_s" else "rad"
                                                       for k in table.columns()}),
                     out / name)
    emit_manifest(cfg, out / "manifest.yaml", outputs=[name, "manifest.yaml"], notes=notes)
    for lab, m in zip(table.labels, table.max_abs()):
        print(f"{lab}: max|phi_EIT| = {m:.4f} rad")


def cmd_scan(args):
    cfg = _config(args)
    out = _out_dir(cfg, f"out-{cfg.scenario.name}-scan")
    table = run_detuning_scan(cfg.scenario, _deltas(args.deltas), cfg.workers)
    _write_table(table, out, "phi_eit_scan.csv", cfg)
    return EXIT_OK


def cmd_raman(args):
    cfg = _config(args)
    out = _out_dir(cfg, f"out-{cfg.scenario.name}-raman")
    table = run_raman_scan(cfg.scenario, _deltas(args.deltas), cfg.workers)
    variant = replace(cfg, scenario=raman_variant(cfg.scenario))
    _write_table(table, out, "phi_eit_raman.csv", variant, notes=[RAMAN_NOTE])
    return EXIT_OK


def cmd_compare(args):
    cfg = _config(args)
    out = _out_dir(cfg, f"out-{cfg.scenario.name}-compare")
    deltas = _deltas(args.deltas) or list(cfg.scenario.scan.comparison_detunings_hz)
    files = []
    for d in deltas:
        cmp = run_storage_vs_propagation(cfg.scenario, d)
        name = f"compare_{d / 1e9:g}GHz.csv"
        write_timeseries(TimeSeriesTable(
            {"time_s": cmp.t, "storage_dphi": cmp.storage, "linear_dphi": cmp.linear,
             "storage_intensity": cmp.storage_intensity, "linear_intensity": cmp.linear_intensity},
            {"time_s": "s", "storage_dphi": "rad", "linear_dphi": "rad",
             "storage_intensity": "rad^2/s^2", "linear_intensity": "rad^2/s^2"},
            {"detuning_hz": float(d), "rms_difference_rad": cmp.rms_difference()}), out / name)
        files.append(name)
        print(f"{d / 1e9:g} GHz: RMS difference {cmp.rms_difference():.4f} rad")
    emit_manifest(cfg, out / "manifest.yaml", outputs=files + ["manifest.yaml"])
    return EXIT_OK


def cmd_analyze(args):
    try:
        table = read_timeseries(args.ensemble)
        ens = ensemble_from_table(table)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.ensemble}: {exc}") from exc
    window = ens.storage_window or (None, None)
    t_off = args.switch_off if args.switch_off is not None else window[0]
    t_on = args.switch_on if args.switch_on is not None else window[1]
    if t_off is None or t_on is None:
        raise ConfigError("switch-off/on times missing: pass --switch-off and --switch-on")
    analysis = AnalysisConfig(threshold=args.threshold, window_s=tuple(args.window),
                              filter_artifacts=args.filter)
    i_s, alpha, leak, ret = analyze_ensemble(ens, analysis, t_off, t_on)
    out = Path(args.out or Path(args.ensemble).with_suffix("").name + "-analysis")
    out.mkdir(parents=True, exist_ok=True)
    phi = TimeSeriesTable({"time_s": ens.t, "recovered_intensity": i_s,
                           "leak_dphi": leak.delta_phi, "phi_eit": ret.phi_eit},
                          {"time_s": "s", "recovered_intensity": "intensity",
                           "leak_dphi": "rad", "phi_eit": "rad"},
                          {"alpha": float(alpha), "retrieval_start_s": float(t_on)})
    write_timeseries(phi, out / "phase.csv")
    print(f"alpha = {alpha:.4f}; max|phi_EIT| = {np.nanmax(np.abs(ret.phi_eit)):.4f} rad")
    return EXIT_OK


def cmd_validate(args):
    src = args.config
    if Path(src).is_file():
        cfg = parse_config(src, overrides=args.set)
    elif src in preset_names():
        cfg = parse_config(scenario=src, overrides=args.set)
    else:
        raise ConfigError(f"{src!r} is neither a file nor a preset")
    print(emit_manifest(cfg), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "scan-detuning": cmd_scan, "compare-propagation": cmd_compare,
            "raman": cmd_raman, "analyze": cmd_analyze, "validate": cmd_validate}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ModelError, CalibrationError) as exc:
        print(f"eitstore: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"eitstore: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
