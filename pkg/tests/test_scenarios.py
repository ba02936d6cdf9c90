import math
from dataclasses import replace

import numpy as np
import pytest

from eitstore.model import TWO_PI
from eitstore.scenarios import (ConfigError, Scenario, default_workers, load_preset,
                                preset_names, raman_variant, run_detuning_scan, run_scenario,
                                run_storage_vs_propagation)


def test_presets_load_and_build():
    names = preset_names()
    assert {"eit-desk", "eit-full", "raman-desk", "weak-probe-desk"} <= set(names)
    for n in names:
        sc = load_preset(n)
        p = sc.physical_params()
        dz, dt = sc.grid_config().steps(p.cell_length)
        assert dz == pytest.approx(2.99792458e8 * dt)
        sc.timeline(p)
    assert load_preset("eit-full").slow
    assert load_preset("eit-full").grid.nz == 100


def test_unknown_preset_and_keys():
    with pytest.raises(ConfigError, match="unknown scenario"):
        load_preset("nope")
    with pytest.raises(ConfigError, match=r"scenario\.physics: unknown key\(s\) detuning_ghz"):
        Scenario.from_dict({"physics": {"detuning_ghz": 1}})
    with pytest.raises(ConfigError, match="physics"):
        Scenario.from_dict({"physics": {"optical_depth": -1}})


def test_frequencies_are_converted_from_hz():
    sc = Scenario.from_dict({"physics": {"detuning_hz": "1.3e9", "coupling_mode": "entrance"}})
    p = sc.physical_params()
    assert p.delta_c == p.delta_s == pytest.approx(TWO_PI * 1.3e9)
    assert abs(p.omega_c_in) == pytest.approx(TWO_PI * 20e6)
    assert p.gamma_raman == pytest.approx(TWO_PI * 14e3)


def test_averaged_coupling_mode_matches_target_rms():
    from eitstore.solver import mean_coupling
    sc = load_preset("eit-desk")
    p = sc.physical_params()
    assert mean_coupling(p, sc.grid_config()) == pytest.approx(TWO_PI * 20e6, rel=1e-9)
    assert abs(p.omega_c_in) > TWO_PI * 20e6  # the entrance is brighter than the average


def test_raman_variant_scales_density_and_coupling():
    base = load_preset("eit-desk")
    r = raman_variant(base, 10e9)
    assert r.physics.atom_density_factor == 10.0
    assert r.physics.coupling_power_w == 0.2
    assert r.physics.coupling_rabi / base.physics.coupling_rabi == pytest.approx(
        math.sqrt(0.2 / 0.018))
    entrance = replace(r.physics, coupling_mode="entrance")
    assert replace(r, physics=entrance).physical_params().eta_s == pytest.approx(
        10 * base.physical_params().eta_s)
    assert r.to_dict()["physics"]["atom_density_factor"] == 10.0


def test_runs_are_deterministic(desk):
    a, b = run_scenario(desk), run_scenario(desk)
    assert np.array_equal(a.phi_eit, b.phi_eit, equal_nan=True)
    assert np.array_equal(a.record.exit_signal, b.record.exit_signal)


def test_noise_seed_controls_output(desk):
    noisy = replace(desk, analysis=replace(desk.analysis, white_noise=0.002, seed=5))
    a, b = run_scenario(noisy), run_scenario(noisy)
    assert np.array_equal(a.phi_eit, b.phi_eit, equal_nan=True)
    c = run_scenario(replace(noisy, analysis=replace(noisy.analysis, seed=6)))
    assert not np.array_equal(a.phi_eit, c.phi_eit, equal_nan=True)


def test_zero_detuning_gives_no_extra_phase(desk):
    r = run_scenario(desk.with_detuning(0.0))
    assert r.max_abs_phi_eit() < 0.05


def test_phase_flips_sign_with_detuning(desk):
    table = run_detuning_scan(desk, [0.6e9, -0.6e9], workers=1)
    a, b = table.values
    m = ~np.isnan(a) & ~np.isnan(b)
    assert m.sum() > 100
    assert np.max(np.abs(a[m] + b[m])) < 0.02


def test_parallel_scan_matches_serial(desk, monkeypatch):
    monkeypatch.setenv("EITSTORE_WORKERS", "2")
    assert default_workers() == 2
    par = run_detuning_scan(desk, [0.2e9, 1.0e9])
    ser = run_detuning_scan(desk, [0.2e9, 1.0e9], workers=1)
    assert np.array_equal(par.values, ser.values, equal_nan=True)
    assert par.labels == ["phi_eit_0.2GHz", "phi_eit_1GHz"]


def test_no_storage_reduces_to_linear_propagation():
    sc = load_preset("weak-probe-desk")
    cmp = run_storage_vs_propagation(sc, 1.0e9)
    assert cmp.rms_difference() < 0.03


def test_storage_time_shift_is_stable(desk):
    a = run_storage_vs_propagation(desk, 1.0e9)
    longer = replace(desk, sequence=replace(desk.sequence, storage_time_s=1.2e-6))
    b = run_storage_vs_propagation(longer, 1.0e9)
    n = min(len(a.t), len(b.t))  # same start and step; the longer run just ends later
    assert np.array_equal(a.t[:n], b.t[:n])
    sa, sb = a.storage[:n], b.storage[:n]
    m = ~np.isnan(sa) & ~np.isnan(sb) & (a.t[:n] > 0)
    assert m.sum() > 100
    assert math.sqrt(np.mean((sa[m] - sb[m]) ** 2)) < 0.05


def test_raman_retrieval_weakens_with_detuning():
    base = load_preset("eit-desk")
    e10 = run_scenario(raman_variant(base, 10e9)).retrieved_fraction
    e20 = run_scenario(raman_variant(base, 20e9)).retrieved_fraction
    assert e20 < e10
