"""Run configuration, manifests and CSV time series.

Configuration files are YAML. A file either names a preset::

    preset: eit-desk
    set:
      physics.detuning_hz: 1.3e9
    run:
      workers: 2

or carries a scenario tree inline under ``scenario:`` (the two are mutually
exclusive). Frequencies are given in Hz and converted to rad/s when the
physical parameters are built. Every manifest written by :func:`emit_manifest`
is itself a valid configuration file.

CSV layout
----------
Comment lines first: ``# column: name [unit]`` for every logical column
(``complex`` appended for complex ones) and ``# meta: key: <json>`` for
metadata, then a header row and the data rows. Complex columns are
stored as ``name_re``/``name_im`` pairs; numbers use 17 significant digits
so float64 values survive a round trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
import json
import logging

import numpy as np
import yaml

from . import __version__
from .homodyne import HomodyneEnsemble
from .model import ModelError
from .scenarios import ConfigError, Scenario, load_preset

log = logging.getLogger(__name__)

_TOP_KEYS = {"preset", "scenario", "set", "run", "outputs", "notes", "version", "derived_from"}
_RUN_KEYS = {"out_dir", "workers", "seed", "verbosity"}


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    preset: str | None = None
    out_dir: str | None = None
    workers: int | None = None
    seed: int = 0
    verbosity: int = 0


def _set_path(tree, dotted, value, origin):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{origin}: {dotted} does not name a configuration field")
    node[keys[-1]] = value


def parse_override(text):
    """``"a.b=value"`` -> ``("a.b", parsed value)``; the value is read as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def validate_scenario(scenario):
    """Build every solver input once so physical errors surface with field paths."""
    try:
        params = scenario.physical_params()
        grid = scenario.grid_config()
        grid.steps(params.cell_length)
        scenario.timeline(params)
    except ModelError as exc:
        raise ConfigError(f"scenario {scenario.name}: {exc}") from exc
    return scenario


def parse_config(path=None, scenario=None, overrides=(), out_dir=None, workers=None,
                 seed=None, verbosity=None):
    """Read, merge and validate a run configuration.

    Parameters
    ----------
    path : str or Path, optional
        YAML file (may be empty).
    scenario : str, optional
        Preset name; mutually exclusive with an inline ``scenario:`` tree.
    overrides : iterable of str or dict
        ``section.key=value`` strings applied on top of the scenario.
    out_dir, workers, seed, verbosity
        Command-line values; they win over the file's ``run:`` section.
    """
    data = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from exc
        data = _load_yaml(text, str(p))
    return config_from_data(data, scenario, overrides, out_dir, workers, seed, verbosity)


def _load_yaml(text, origin):
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{origin}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: top level must be a mapping")
    return data


def config_from_data(data, scenario=None, overrides=(), out_dir=None, workers=None,
                     seed=None, verbosity=None):
    """Same as :func:`parse_config` for an already loaded mapping."""
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")

    preset = data.get("preset")
    if scenario is not None:
        if preset is not None and preset != scenario:
            raise ConfigError(f"preset {preset!r} in file conflicts with scenario {scenario!r}")
        preset = scenario
    if preset is not None and "scenario" in data:
        raise ConfigError("give either a preset name or an inline scenario, not both")

    if "scenario" in data:
        tree = data["scenario"] or {}
    elif preset is not None:
        tree = load_preset(preset).to_dict()
    else:
        raise ConfigError("no scenario: name a preset or give an inline scenario")
    if not isinstance(tree, dict):
        raise ConfigError("scenario: expected a mapping")

    sets = dict(data.get("set") or {})
    for item in overrides:
        if isinstance(item, dict):
            sets.update(item)
        else:
            k, v = parse_override(item)
            sets[k] = v
    for k, v in sets.items():
        _set_path(tree, k, v, "set")

    run = dict(data.get("run") or {})
    bad = sorted(set(run) - _RUN_KEYS)
    if bad:
        raise ConfigError(f"run: unknown key(s) {', '.join(bad)}")
    for key, val in (("out_dir", out_dir), ("workers", workers), ("seed", seed),
                     ("verbosity", verbosity)):
        if val is not None:
            run[key] = val

    sc = Scenario.from_dict(tree)
    if "seed" in run:
        sc = replace(sc, analysis=replace(sc.analysis, seed=int(run["seed"])))
    validate_scenario(sc)
    w = run.get("workers")
    if w is not None and int(w) < 1:
        raise ConfigError(f"run.workers must be >= 1, got {w}")
    if preset is None:
        preset = data.get("derived_from")
    return RunConfig(sc, preset=preset, out_dir=run.get("out_dir"),
                     workers=None if w is None else int(w), seed=sc.analysis.seed,
                     verbosity=int(run.get("verbosity", 0)))


def manifest_dict(config, outputs=(), notes=()):
    return {
        "version": __version__,
        "derived_from": config.preset,
        "scenario": config.scenario.to_dict(),
        "run": {"out_dir": config.out_dir, "workers": config.workers, "seed": config.seed,
                "verbosity": config.verbosity},
        "outputs": list(outputs),
        "notes": list(notes),
    }


def emit_manifest(config, path=None, outputs=(), notes=()):
    """YAML manifest with every setting explicit; returns the text."""
    text = yaml.safe_dump(manifest_dict(config, outputs, notes), sort_keys=False)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write manifest {path}: {exc}") from exc
    return text


def manifest_config(text):
    """Parse manifest text back into a :class:`RunConfig`."""
    return config_from_data(_load_yaml(text, "manifest"))


# time series

@dataclass
class TimeSeriesTable:
    """Named columns sharing the first column (time) as axis."""

    columns: dict
    units: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(np.atleast_1d(v)) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns differ in length: {sorted(lengths)}")

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0


def _fmt(x):
    return "%.17g" % x


def write_timeseries(table, path):
    """Write a :class:`TimeSeriesTable` as commented CSV."""
    lines = []
    headers = []
    data = []
    for name, col in table.columns.items():
        col = np.asarray(col)
        unit = table.units.get(name, "1")
        cplx = np.iscomplexobj(col)
        lines.append(f"# column: {name} [{unit}]" + (" complex" if cplx else ""))
        if cplx:
            headers += [f"{name}_re", f"{name}_im"]
            data += [col.real, col.imag]
        else:
            headers.append(name)
            data.append(col.astype(float))
    for k, v in table.meta.items():
        lines.append(f"# meta: {k}: {json.dumps(v)}")
    lines.append(",".join(headers))
    rows = np.column_stack(data) if data and len(data[0]) else np.empty((0, len(headers)))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def read_timeseries(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    declared = []
    units = {}
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# column:"):
            rest = line[len("# column:"):].strip()
            name, _, tail = rest.partition(" [")
            unit, _, flag = tail.partition("]")
            declared.append((name, flag.strip() == "complex"))
            units[name] = unit
        elif line.startswith("# meta:"):
            k, _, v = line[len("# meta:"):].strip().partition(": ")
            try:
                meta[k] = json.loads(v)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: bad meta line for {k!r}: {exc}") from None
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append(line)
    if not body:
        raise ValueError(f"{path}: missing header row")
    headers = body[0].split(",")
    rows = [[float(x) for x in ln.split(",")] for ln in body[1:]]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(headers))
    cols = {h: arr[:, i] for i, h in enumerate(headers)}
    out = {}
    for name, cplx in declared:
        if cplx:
            out[name] = cols[f"{name}_re"] + 1j * cols[f"{name}_im"]
        else:
            out[name] = cols[name]
    return TimeSeriesTable(out, units, meta)


def ensemble_table(ens):
    """Record ensemble in the layout read by the ``analyze`` subcommand."""
    cols = {"time_s": ens.t}
    units = {"time_s": "s"}
    for k, rec in enumerate(ens.records):
        cols[f"record_{k}"] = rec
        units[f"record_{k}"] = "intensity"
    meta = {"scan_phases": [float(x) for x in ens.scan_phases], "i_c": float(ens.i_c)}
    if ens.storage_window is not None:
        meta["storage_window"] = [float(x) for x in ens.storage_window]
    return TimeSeriesTable(cols, units, meta)


def ensemble_from_table(table):
    m = table.meta
    missing = [k for k in ("scan_phases", "i_c") if k not in m]
    if missing:
        raise ValueError(f"ensemble file lacks meta entries {missing}")
    names = [k for k in table.columns if k.startswith("record_")]
    names.sort(key=lambda s: int(s.split("_")[1]))
    recs = np.vstack([table.columns[k] for k in names])
    window = m.get("storage_window")
    return HomodyneEnsemble(table.columns["time_s"], recs, np.array(m["scan_phases"]),
                            float(m["i_c"]), None if window is None else tuple(window))
