"""Named experiment presets and the analysis pipelines run on them.

Scenario configuration is kept in laboratory units (Hz, s, m); frequencies
are converted to angular frequencies (x 2 pi) only when the physical
parameters are built. Every field has an explicit default, so a dumped
configuration reproduces a run with no other input.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from importlib import resources
import logging
import math
import os

import numpy as np
import yaml

from .homodyne import (NoiseSpec, PhaseTrace, compute_phi_eit, ensemble_phase,
                       extract_envelopes, filter_artifacts, recover_signal_and_contrast,
                       synthesize_records)
from .linear import linear_propagate
from .model import (DEFAULT_WINDOW, ModelError, PhysicalParams, TWO_PI,
                    coupling_for_window, derive_eta_from_optical_depth)
from .solver import (GridConfig, PulseShape, SequenceTimeline, calibrate_entrance_coupling,
                     simulate_sequence, steady_profile)

log = logging.getLogger(__name__)

WORKERS_ENV = "EITSTORE_WORKERS"


class ConfigError(ValueError):
    """Invalid or unknown configuration entry; the message names the field path."""


def _from_dict(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _from_dict(sub, value, f"{path}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(_number(v, f"{path}.{name}") for v in value)
        elif isinstance(value, str) and "float" in str(known[name].type):
            kwargs[name] = _number(value, f"{path}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _number(value, path):
    # YAML 1.1 reads "1e9" as a string; accept it as a number
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    return value


def _to_dict(obj):
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if is_dataclass(v):
            out[f.name] = _to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = [float(x) if isinstance(x, (int, float)) else x for x in v]
        else:
            out[f.name] = v
    return out


def _positive(path, **values):
    for k, v in values.items():
        if v is None or not (v > 0):
            raise ConfigError(f"{path}.{k} must be > 0, got {v}")


@dataclass(frozen=True)
class PhysicsConfig:
    gamma0_hz: float = 1.6e6
    transit_hz: float = 10e3
    raman_decay_hz: float = 14e3
    doppler_width_hz: float = 0.8e9
    detuning_hz: float = 1.0e9
    signal_detuning_hz: float | None = None
    optical_depth: float = 3.5
    atom_density_factor: float = 1.0
    coupling_eta_ratio: float = 1.0
    cell_length_m: float = 0.06
    coupling_rabi_hz: float = math.sqrt(DEFAULT_WINDOW * TWO_PI * 0.8e9) / TWO_PI
    reference_power_w: float = 0.018
    coupling_power_w: float = 0.018
    coupling_mode: str = "averaged"

    def __post_init__(self):
        _positive("physics", gamma0_hz=self.gamma0_hz, transit_hz=self.transit_hz,
                  raman_decay_hz=self.raman_decay_hz, doppler_width_hz=self.doppler_width_hz,
                  cell_length_m=self.cell_length_m, reference_power_w=self.reference_power_w,
                  atom_density_factor=self.atom_density_factor)
        if self.optical_depth < 0 or self.coupling_power_w < 0 or self.coupling_eta_ratio < 0:
            raise ConfigError("physics: optical_depth, coupling_power_w and "
                              "coupling_eta_ratio must be >= 0")
        if self.coupling_mode not in ("averaged", "entrance"):
            raise ConfigError("physics.coupling_mode must be 'averaged' or 'entrance'")

    @property
    def coupling_rabi(self):
        """Coupling Rabi frequency (rad/s) at the configured power."""
        return TWO_PI * self.coupling_rabi_hz * math.sqrt(
            self.coupling_power_w / self.reference_power_w)


@dataclass(frozen=True)
class SequenceConfig:
    pump_s: float = 0.5e-6
    signal_lead_s: float = 12e-6
    storage_time_s: float = 0.6e-6
    retrieval_s: float = 3.0e-6
    rise_s: float = 2e-6
    fall_s: float = 150e-9
    peak_offset_s: float = 0.0
    signal_ratio: float = 0.05
    switch_ramp_s: float = 0.0

    def __post_init__(self):
        _positive("sequence", signal_lead_s=self.signal_lead_s, retrieval_s=self.retrieval_s,
                  rise_s=self.rise_s, fall_s=self.fall_s, signal_ratio=self.signal_ratio)
        if self.pump_s < 0 or self.storage_time_s < 0 or self.switch_ramp_s < 0:
            raise ConfigError("sequence: pump_s, storage_time_s, switch_ramp_s must be >= 0")


@dataclass(frozen=True)
class GridSettings:
    nz: int = 10
    dt_s: float | None = None
    integrator: str = "etd"
    snapshot_every: int = 10_000
    init: str = "steady"
    eps: float = 1e-6


@dataclass(frozen=True)
class AnalysisConfig:
    sample_s: float = 1e-9
    threshold: float = 0.05
    window_s: tuple = (100e-9, 1e-6)
    homodyne: bool = True
    n_scan: int = 32
    alpha: float = 2.0
    i_c_ratio: float = 1.0
    white_noise: float = 0.0
    artifact_amplitude: float = 0.0
    artifact_period_s: float = 90e-9
    filter_artifacts: bool = False
    notch_width_hz: float = 2e6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError("analysis.threshold must lie in (0, 1)")
        if len(self.window_s) != 2 or self.window_s[0] >= self.window_s[1]:
            raise ConfigError("analysis.window_s must be [start, end] with start < end")
        if self.n_scan < 8:
            raise ConfigError("analysis.n_scan must be >= 8")
        if not 0 < self.alpha <= 2:
            raise ConfigError("analysis.alpha must lie in (0, 2]")


@dataclass(frozen=True)
class ScanConfig:
    detunings_hz: tuple = (0.2e9, 0.6e9, 1.0e9, 1.3e9, 1.7e9)
    comparison_detunings_hz: tuple = (1.7e9, 0.2e9)
    raman_detunings_hz: tuple = (10e9, 15e9, 20e9)
    raman_atom_factor: float = 10.0
    raman_coupling_power_w: float = 0.2


@dataclass(frozen=True)
class Scenario:
    name: str = "eit-desk"
    description: str = ""
    slow: bool = False
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    grid: GridSettings = field(default_factory=GridSettings)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)

    @classmethod
    def from_dict(cls, data, path="scenario"):
        return _from_dict(cls, data, path)

    def to_dict(self):
        return _to_dict(self)

    def with_detuning(self, detuning_hz):
        ph = replace(self.physics, detuning_hz=float(detuning_hz), signal_detuning_hz=None)
        return replace(self, physics=ph)

    # building the solver inputs

    def grid_config(self):
        g = self.grid
        try:
            return GridConfig(g.nz, g.dt_s, g.integrator, g.snapshot_every, g.init, g.eps)
        except ModelError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def physical_params(self):
        p = self.physics
        ds = p.detuning_hz if p.signal_detuning_hz is None else p.signal_detuning_hz
        try:
            base = PhysicalParams(
                gamma0=TWO_PI * p.gamma0_hz, gamma_t=TWO_PI * p.transit_hz,
                gamma_raman=TWO_PI * p.raman_decay_hz, gamma_opt=TWO_PI * p.doppler_width_hz,
                delta_c=TWO_PI * p.detuning_hz, delta_s=TWO_PI * ds,
                cell_length=p.cell_length_m, omega_c_in=p.coupling_rabi)
            eta = p.atom_density_factor * derive_eta_from_optical_depth(p.optical_depth, base)
            params = base.replace(eta_s=eta, eta_c=eta * p.coupling_eta_ratio)
        except ModelError as exc:
            raise ConfigError(f"physics: {exc}") from exc
        if p.coupling_mode == "averaged" and params.eta_c > 0 and p.coupling_rabi > 0:
            params = calibrate_entrance_coupling(params, self.grid_config(), p.coupling_rabi)
        return params

    def timeline(self, params=None):
        s = self.sequence
        params = params or self.physical_params()
        t_off = 0.0
        try:
            return SequenceTimeline(
                t_start=-(s.signal_lead_s + s.pump_s), t_pump_end=-s.signal_lead_s,
                t_switch_off=t_off, storage_time=s.storage_time_s,
                t_end=t_off + s.storage_time_s + s.retrieval_s,
                pulse=PulseShape(s.rise_s, s.fall_s, t_off + s.peak_offset_s,
                                 s.signal_ratio * self.physics.coupling_rabi),
                switch_ramp=s.switch_ramp_s)
        except ModelError as exc:
            raise ConfigError(f"sequence: {exc}") from exc


_NESTED = {(Scenario, "physics"): PhysicsConfig, (Scenario, "sequence"): SequenceConfig,
           (Scenario, "grid"): GridSettings, (Scenario, "analysis"): AnalysisConfig,
           (Scenario, "scan"): ScanConfig}


def preset_names():
    files = resources.files("eitstore").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".yaml"))


def load_preset(name):
    path = resources.files("eitstore").joinpath("presets", f"{name}.yaml")
    if not path.is_file():
        raise ConfigError(f"unknown scenario {name!r}; presets: {', '.join(preset_names())}")
    return Scenario.from_dict(yaml.safe_load(path.read_text()), f"preset {name}")


def raman_variant(base, detuning_hz=None):
    """Far-detuned version of an EIT scenario: denser medium, stronger coupling."""
    sc = base.scan
    ph = replace(base.physics,
                 atom_density_factor=base.physics.atom_density_factor * sc.raman_atom_factor,
                 coupling_power_w=sc.raman_coupling_power_w)
    out = replace(base, name=f"{base.name}-raman", physics=ph)
    return out if detuning_hz is None else out.with_detuning(detuning_hz)


@dataclass
class ScenarioResult:
    scenario: Scenario
    record: object
    t: np.ndarray               # analysis time axis (retarded, switch-off at 0)
    exit_signal: np.ndarray
    exit_coupling: np.ndarray
    i_s: np.ndarray
    alpha: float
    leak: PhaseTrace
    retrieved: PhaseTrace       # time axis relative to retrieval start
    direct_leak: PhaseTrace
    direct_retrieved: PhaseTrace
    ensemble: object = field(default=None, repr=False)

    @property
    def phi_eit(self):
        return self.retrieved.phi_eit

    @property
    def direct_phi_eit(self):
        return self.direct_retrieved.phi_eit

    @property
    def leak_fraction(self):
        return self.record.leak_energy_fraction()

    @property
    def retrieved_fraction(self):
        return self.record.retrieved_energy_fraction()

    def max_abs_phi_eit(self, direct=False):
        phi = self.direct_phi_eit if direct else self.phi_eit
        return float(np.nanmax(np.abs(phi)))


def _decimate(record, sample_s):
    k = max(1, int(round(sample_s / record.dt)))
    sl = slice(None, None, k)
    return record.t[sl], record.exit_signal[sl], record.exit_coupling[sl], record.input_signal[sl], k


def _direct_traces(t, sig, cpl, timeline, analysis):
    """Phase traces straight from the complex exit fields."""
    intensity = np.abs(sig) ** 2
    with np.errstate(invalid="ignore"):
        dphi = np.angle(sig * np.exp(-1j * np.angle(cpl)))
    leak_m = t < timeline.t_switch_off
    ret_m = t >= timeline.t_switch_on
    traces = []
    for m, t_axis in ((leak_m, t), (ret_m, t - timeline.t_switch_on)):
        i_b = np.where(m, intensity, 0.0)
        valid = m & (i_b > analysis.threshold * i_b.max()) & (np.abs(cpl) > 0)
        out = np.full(len(t), np.nan)
        idx = np.flatnonzero(valid)
        out[idx] = np.unwrap(dphi[idx])
        traces.append(PhaseTrace(t_axis, out, valid))
    return traces


def analyze_record(record, scenario):
    """Homodyne pipeline (and direct cross-check) on one simulation record."""
    a = scenario.analysis
    tl = record.timeline
    t, sig, cpl, _, _ = _decimate(record, a.sample_s)
    window = tuple(a.window_s)
    direct_leak, direct_ret = _direct_traces(t, sig, cpl, tl, a)
    direct_ret = compute_phi_eit(direct_leak, direct_ret, window=window)

    if not a.homodyne:
        return ScenarioResult(scenario, record, t, sig, cpl, np.abs(sig) ** 2, float("nan"),
                              direct_leak, direct_ret, direct_leak, direct_ret)

    i_s_true = np.abs(sig) ** 2
    ens = synthesize_records(t, sig, np.exp(1j * np.angle(cpl)),
                             np.linspace(0, TWO_PI, a.n_scan, endpoint=False), a.alpha,
                             i_c=a.i_c_ratio * i_s_true.max(),
                             storage_window=(tl.t_switch_off, tl.t_switch_on) if tl.stores else None,
                             noise=NoiseSpec(a.white_noise * i_s_true.max(),
                                             a.artifact_amplitude * i_s_true.max(),
                                             a.artifact_period_s, 0.0, a.seed))
    i_s, alpha, leak, ret = analyze_ensemble(ens, a, tl.t_switch_off, tl.t_switch_on)
    return ScenarioResult(scenario, record, t, sig, cpl, i_s, alpha, leak, ret,
                          direct_leak, direct_ret, ensemble=ens)


def analyze_ensemble(ens, analysis, t_switch_off, t_switch_on):
    """Homodyne read-out of one record ensemble.

    Returns ``(i_s, alpha, leak, retrieved)``; the retrieved trace is on the
    time axis measured from ``t_switch_on`` and carries ``phi_eit``.
    """
    a = analysis
    if a.filter_artifacts:
        ens = replace(ens, records=filter_artifacts(ens.t, ens.records, a.artifact_period_s,
                                                    a.notch_width_hz,
                                                    breaks=ens.storage_window))
    t = ens.t
    i_plus, i_minus = extract_envelopes(ens)
    i_s, alpha = recover_signal_and_contrast(i_plus, i_minus, ens.i_c, ens.coupling_on(),
                                             a.threshold)
    leak_m = t < t_switch_off
    ret_m = t >= t_switch_on
    leak = ensemble_phase(ens, np.where(leak_m, i_s, 0.0), alpha, a.threshold, leak_m)
    ret = ensemble_phase(ens, np.where(ret_m, i_s, 0.0), alpha, a.threshold, ret_m)
    ret = PhaseTrace(t - t_switch_on, ret.delta_phi, ret.valid, flags=ret.flags)
    ret = compute_phi_eit(leak, ret, window=tuple(a.window_s))
    return i_s, alpha, leak, ret


def run_scenario(scenario):
    params = scenario.physical_params()
    record = simulate_sequence(params, scenario.timeline(params), scenario.grid_config())
    return analyze_record(record, scenario)


def default_workers():
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, items, workers):
    workers = workers or default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class PhaseTable:
    """phi_EIT traces of several runs on the common retrieval time axis."""

    t: np.ndarray
    labels: list
    values: np.ndarray  # (len(labels), len(t)), NaN outside each run's window
    results: list = field(repr=False, default_factory=list)

    def max_abs(self):
        return np.nanmax(np.abs(self.values), axis=1)

    def columns(self):
        return {"time_s": self.t, **{lab: v for lab, v in zip(self.labels, self.values)}}


def _phase_table(results, labels, direct=False):
    t = results[0].retrieved.t
    vals = np.vstack([r.direct_phi_eit if direct else r.phi_eit for r in results])
    return PhaseTable(t, labels, vals, results)


def run_detuning_scan(base, deltas_hz=None, workers=None):
    """phi_EIT(t) for each detuning at two-photon resonance."""
    deltas = tuple(base.scan.detunings_hz if deltas_hz is None else deltas_hz)
    results = _map(lambda d: run_scenario(base.with_detuning(d)), list(deltas), workers)
    return _phase_table(results, [f"phi_eit_{d / 1e9:g}GHz" for d in deltas])


def run_raman_scan(base, deltas_hz=None, workers=None):
    deltas = tuple(base.scan.raman_detunings_hz if deltas_hz is None else deltas_hz)
    results = _map(lambda d: run_scenario(raman_variant(base, d)), list(deltas), workers)
    return _phase_table(results, [f"phi_eit_{d / 1e9:g}GHz" for d in deltas])


@dataclass
class PropagationComparison:
    t: np.ndarray             # storage-period start at 0, retrieval shifted by -T
    storage: np.ndarray       # Delta phi of the storage sequence (NaN where invalid)
    linear: np.ndarray        # Delta phi of plain propagation with constant coupling
    storage_intensity: np.ndarray
    linear_intensity: np.ndarray
    result: ScenarioResult = field(repr=False, default=None)

    def rms_difference(self):
        m = ~np.isnan(self.storage) & ~np.isnan(self.linear)
        d = np.angle(np.exp(1j * (self.storage[m] - self.linear[m])))
        return float(np.sqrt(np.mean(d ** 2)))


def linear_reference(record, sample_s):
    """Exit envelope of the record's input pulse under constant coupling.

    Uses the cell-averaged coupling intensity and |1> population of the
    pumped steady state, on the decimated axis of :func:`_decimate`.
    Returns ``(t, exit_envelope, coupling_exit_phase)``.
    """
    t, _, _, inp, k = _decimate(record, sample_s)
    params = record.params
    states, oc = steady_profile(params, record.grid)
    coupling = math.sqrt(float(np.trapezoid(np.abs(oc) ** 2) / (len(oc) - 1)))
    lin = linear_propagate(inp, record.dt * k, params, coupling=coupling,
                           population=float(np.mean(states[:, 2].real)))
    return t, lin, float(np.angle(oc[-1]))


def run_storage_vs_propagation(base, delta_hz=None):
    """Storage-and-retrieval phase against direct propagation of the same pulse."""
    sc = base if delta_hz is None else base.with_detuning(delta_hz)
    res = run_scenario(sc)
    rec = res.record
    a = sc.analysis
    k = max(1, int(round(a.sample_s / rec.dt)))
    t, lin, coupling_phase = linear_reference(rec, a.sample_s)
    lin_i = np.abs(lin) ** 2
    lin_ph = np.full(len(t), np.nan)
    ok = lin_i > a.threshold * lin_i.max()
    # relative to the coupling, which picks up its own propagation phase
    lin_ph[ok] = np.unwrap(np.angle(lin[ok])) - coupling_phase

    T = rec.timeline.storage_time
    shift = int(round(T / (rec.dt * k)))
    storage = np.full(len(t), np.nan)
    for trace, offset in ((res.direct_leak, 0), (res.direct_retrieved, shift)):
        idx = np.flatnonzero(trace.valid)
        seg = trace.delta_phi[idx]
        dest = idx - offset
        ref = lin_ph[dest]
        both = ~np.isnan(ref)
        if both.any():
            # put each segment on the 2 pi sheet of the linear trace
            seg = seg - TWO_PI * np.round(np.median(seg[both] - ref[both]) / TWO_PI)
        storage[dest] = seg
    s_int = np.abs(res.exit_signal) ** 2
    s_int_shift = np.where(t < rec.timeline.t_switch_off, s_int, np.roll(s_int, -shift))
    return PropagationComparison(t, storage, lin_ph, s_int_shift, lin_i, res)
