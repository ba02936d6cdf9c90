"""Pump / write / store / retrieve sequences on the characteristic grid.

The propagation equation is stepped with the Lax scheme at Courant number
one (``dz = c * dt``), which reduces the transport part to an exact shift
along characteristics. The atomic variables at each node are advanced with
an explicit one-step method before every field update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
from numba import njit

from . import _kernels
from .model import (AtomicState, C_LIGHT, FieldGrid, ModelError, PhysicalParams,
                    feeding_state)

log = logging.getLogger(__name__)

INTEGRATORS = {"euler": _kernels.EULER, "rk2": _kernels.RK2, "etd": _kernels.ETD}


#: Initial medium: self-consistent pumped steady state, discharge feeding
#: only, or every atom in |1> (the reference state of the optical depth).
INIT_MODES = ("steady", "unpumped", "pumped")


class NumericalError(RuntimeError):
    """The integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PulseShape:
    """Exponential rise followed by a faster exponential fall (field amplitude)."""

    rise_tau: float = 2e-6
    fall_tau: float = 150e-9
    peak_time: float = 0.0
    peak_rabi: complex = 1.0

    def __post_init__(self):
        if not (self.rise_tau > 0 and self.fall_tau > 0):
            raise ModelError("rise_tau and fall_tau must be > 0")


def pulse_envelope(t, shape):
    """Signal Rabi frequency at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    x = t - shape.peak_time
    rise = np.exp(np.minimum(x, 0.0) / shape.rise_tau)
    fall = np.exp(-np.maximum(x, 0.0) / shape.fall_tau)
    out = shape.peak_rabi * np.where(x <= 0, rise, fall)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class SequenceTimeline:
    """Timing of one storage sequence; the storage starts at ``t_switch_off``.

    The signal is injected from ``t_pump_end`` on. A zero ``storage_time``
    leaves the coupling on throughout (plain slow-light propagation).
    """

    t_start: float
    t_pump_end: float
    t_switch_off: float
    storage_time: float
    t_end: float
    pulse: PulseShape = field(default_factory=PulseShape)
    switch_ramp: float = 0.0

    def __post_init__(self):
        if self.storage_time < 0:
            raise ModelError("storage_time must be >= 0")
        if self.switch_ramp < 0:
            raise ModelError("switch_ramp must be >= 0")
        ok = (self.t_start <= self.t_pump_end < self.t_switch_off
              and self.t_switch_off + self.storage_time < self.t_end)
        if not ok:
            raise ModelError(
                "timeline must satisfy t_start <= t_pump_end < t_switch_off "
                f"< t_switch_off + storage_time < t_end, got {self}")

    @property
    def t_switch_on(self):
        return self.t_switch_off + self.storage_time

    @property
    def stores(self):
        return self.storage_time > 0

    def coupling_gate(self, t):
        """Coupling amplitude factor in [0, 1] at inlet time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if not self.stores:
            return np.ones_like(t)
        t_off, t_on, ramp = self.t_switch_off, self.t_switch_on, self.switch_ramp
        if ramp == 0:
            return np.where((t >= t_off) & (t < t_on), 0.0, 1.0)
        down = np.clip(1.0 - (t - t_off) / ramp, 0.0, 1.0)
        up = np.clip((t - t_on) / ramp, 0.0, 1.0)
        return np.where(t < t_on, down, up)

    def signal_input(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= self.t_pump_end, pulse_envelope(t, self.pulse), 0.0)


@dataclass(frozen=True)
class GridConfig:
    """Spatial resolution of the cell; the time step follows from ``dz = c * dt``.

    ``dt`` may be given for documentation or to cross-check a configuration;
    it must then agree with ``dz / c`` to 0.1 %, and ``dz / c`` is what runs.
    """

    nz: int = 10
    dt: float | None = None
    integrator: str = "etd"
    snapshot_every: int = 10_000
    init: str = "steady"
    eps: float = 1e-6

    def __post_init__(self):
        if self.nz < 1:
            raise ModelError("nz must be >= 1")
        if self.integrator not in INTEGRATORS:
            raise ModelError(f"integrator must be one of {sorted(INTEGRATORS)}")
        if self.init not in INIT_MODES:
            raise ModelError(f"init must be one of {INIT_MODES}")
        if self.snapshot_every < 1:
            raise ModelError("snapshot_every must be >= 1")

    def steps(self, cell_length):
        """Return ``(dz, dt)`` for a cell of the given length."""
        dz = cell_length / self.nz
        dt = dz / C_LIGHT
        if self.dt is not None and not math.isclose(self.dt, dt, rel_tol=1e-3):
            raise ModelError(
                f"grid must satisfy dz = c*dt: dz={dz:.6g} m needs dt={dt:.6g} s, "
                f"got dt={self.dt:.6g} s (c*dt={C_LIGHT * self.dt:.6g} m)")
        return dz, dt

    def refined(self, factor=2):
        return GridConfig(self.nz * factor, None, self.integrator,
                          self.snapshot_every * factor, self.init, self.eps)


def _affine_system(params, omega_c, omega_s):
    """Real 12x12 matrix and offset with rhs(y) = M @ x(y) + b."""
    coefs = params.coefs()
    out = np.empty(6, dtype=np.complex128)
    y = np.zeros(6, dtype=np.complex128)
    _kernels.rhs(y, complex(omega_c), complex(omega_s), coefs, out)
    b = np.concatenate([out.real, out.imag])
    m = np.empty((12, 12))
    for k in range(12):
        y[:] = 0
        y[k % 6] = 1.0 if k < 6 else 1j
        _kernels.rhs(y, complex(omega_c), complex(omega_s), coefs, out)
        m[:, k] = np.concatenate([out.real, out.imag]) - b
    return m, b


@njit(cache=True)
def _relax(y, oc, coefs, dt, tol, max_iter):
    # exponential step for the coherences (detuning and optical decay exact),
    # explicit step for the populations
    work = np.empty(6, dtype=np.complex128)
    a = _kernels.linear_rates(coefs)
    decay = np.exp(-a * dt)
    phi = (1.0 - decay) / a
    for it in range(max_iter):
        _kernels.drives(y, oc, 0j, coefs, work)
        change = 0.0
        for k in range(6):
            if k < 3:
                new = y[k] + dt * (work[k] - a[k] * y[k])
            else:
                new = decay[k] * y[k] + phi[k] * work[k]
            change = max(change, abs(new - y[k]))
            y[k] = new
        if change < tol:
            return it + 1
    return -1


def pump_to_steady_state(params, omega_c, method="solve", tol=1e-10, max_iter=5_000_000):
    """Optically pumped steady state with the signal off.

    ``method="solve"`` solves rhs = 0 directly; ``method="evolve"`` steps the
    equations (exponential steps for the coherences) until the per-step
    change drops below ``tol``.
    """
    if method == "solve":
        m, b = _affine_system(params, omega_c, 0.0)
        try:
            x = np.linalg.solve(m, -b)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"steady state is singular for omega_c={omega_c}") from exc
        return AtomicState.from_array(x[:6] + 1j * x[6:])
    if method == "evolve":
        dt = 0.05 / (abs(omega_c) + params.gamma0 + params.gamma_t)
        y = feeding_state().to_array()
        n = _relax(y, complex(omega_c), params.coefs(), dt, tol, max_iter)
        if n < 0:
            raise ConvergenceError(
                f"no steady state within {max_iter} steps (tol={tol}, dt={dt:.3g} s)")
        return AtomicState.from_array(y)
    raise ValueError(f"unknown method {method!r}")


def lax_step(field_row, source_row, dz, dt, eta, inlet):
    """Advance ``Omega(z, t)`` by one time step of the propagation equation.

    Interior nodes use the Lax form (neighbour average plus centred
    transport); the exit node uses an upwind difference and node 0 is
    clamped to ``inlet``. ``source_row[j]`` is the optical coherence driving
    node ``j`` during the step (see :func:`characteristic_source`).
    """
    if not math.isclose(dz, C_LIGHT * dt, rel_tol=1e-9):
        raise ModelError(f"lax_step needs dz = c*dt, got dz={dz} m, c*dt={C_LIGHT * dt} m")
    u = np.asarray(field_row, dtype=np.complex128)
    src = 1j * eta * C_LIGHT * dt * np.asarray(source_row, dtype=np.complex128)
    courant = C_LIGHT * dt / dz
    new = np.empty_like(u)
    new[1:-1] = (0.5 * (u[2:] + u[:-2]) - 0.5 * courant * (u[2:] - u[:-2])) + src[1:-1]
    new[-1] = u[-1] - courant * (u[-1] - u[-2]) + src[-1]
    new[0] = inlet
    return new


def characteristic_source(coh_prev, coh_next):
    """Trapezoidal average of a coherence along the characteristics entering each node."""
    coh_prev = np.asarray(coh_prev)
    out = np.empty_like(coh_next)
    out[1:] = 0.5 * (coh_prev[:-1] + coh_next[1:])
    out[0] = coh_next[0]
    return out


def steady_profile(params, grid, omega_c_in=None, method="solve"):
    """Self-consistent steady state along the cell with the coupling on.

    Returns ``(states, omega_c)`` with ``states`` of shape ``(nz + 1, 6)``;
    this is an exact fixed point of the discrete scheme.
    """
    dz, _ = grid.steps(params.cell_length)
    oc_in = params.omega_c_in if omega_c_in is None else complex(omega_c_in)
    n = grid.nz + 1
    states = np.empty((n, 6), dtype=np.complex128)
    oc = np.empty(n, dtype=np.complex128)
    oc[0] = oc_in
    states[0] = pump_to_steady_state(params, oc_in, method).to_array()
    k = 0.5j * params.eta_c * dz
    for j in range(1, n):
        guess = oc[j - 1]
        for _ in range(200):
            y = pump_to_steady_state(params, guess, method).to_array()
            new = oc[j - 1] + k * (np.conj(states[j - 1, 4]) + np.conj(y[4]))
            if abs(new - guess) <= 1e-13 * max(abs(new), 1.0):
                guess = new
                break
            guess = new
        else:
            raise ConvergenceError(f"coupling profile did not converge at node {j}")
        oc[j] = guess
        states[j] = pump_to_steady_state(params, guess, method).to_array()
    return states, oc


def mean_coupling(params, grid, omega_c_in=None):
    """RMS coupling Rabi frequency over the cell (trapezoidal in z)."""
    _, oc = steady_profile(params, grid, omega_c_in)
    w = np.abs(oc) ** 2
    return math.sqrt(float(np.trapezoid(w) / (len(w) - 1)))


def calibrate_entrance_coupling(params, grid, target_mean):
    """Entrance coupling whose cell-averaged intensity matches ``target_mean**2``."""
    phase = params.omega_c_in / abs(params.omega_c_in) if params.omega_c_in else 1.0
    amp = abs(target_mean)
    for _ in range(100):
        got = mean_coupling(params, grid, amp * phase)
        if got == 0:
            break
        ratio = abs(target_mean) / got
        amp *= ratio
        if abs(ratio - 1) < 1e-12:
            break
    return params.replace(omega_c_in=amp * phase)


@dataclass
class SimulationRecord:
    """Exit-face traces (retarded time) and decimated full-grid snapshots.

    ``t`` is the inlet time; exit samples at index ``n`` were recorded at
    lab time ``t[n] + L / c``.
    """

    t: np.ndarray
    input_signal: np.ndarray
    input_coupling: np.ndarray
    exit_signal: np.ndarray
    exit_coupling: np.ndarray
    snapshot_times: np.ndarray
    snapshot_states: np.ndarray
    snapshot_coupling: np.ndarray
    snapshot_signal: np.ndarray
    params: PhysicalParams
    timeline: SequenceTimeline
    grid: GridConfig
    dt: float
    dz: float
    bound_violations: int = 0

    @property
    def exit_intensity(self):
        return np.abs(self.exit_signal) ** 2

    @property
    def input_intensity(self):
        return np.abs(self.input_signal) ** 2

    def relative_phase(self):
        """arg(Omega_s) - arg(Omega_c) at the exit, NaN where the coupling is off."""
        with np.errstate(invalid="ignore"):
            ph = np.angle(self.exit_signal) - np.angle(self.exit_coupling)
        ph = np.angle(np.exp(1j * ph))
        return np.where(np.abs(self.exit_coupling) > 0, ph, np.nan)

    def leak_mask(self):
        return self.t < self.timeline.t_switch_off

    def retrieval_mask(self):
        return self.t >= self.timeline.t_switch_on

    def leak_energy_fraction(self):
        e_in = np.trapezoid(self.input_intensity, self.t)
        leak = np.where(self.leak_mask(), self.exit_intensity, 0.0)
        return float(np.trapezoid(leak, self.t) / e_in)

    def retrieved_energy_fraction(self):
        e_in = np.trapezoid(self.input_intensity, self.t)
        ret = np.where(self.retrieval_mask(), self.exit_intensity, 0.0)
        return float(np.trapezoid(ret, self.t) / e_in)

    def snapshot_state(self, i, j):
        return AtomicState.from_array(self.snapshot_states[i, j])

    def field_grid(self):
        return FieldGrid(self.grid.nz, len(self.t) - 1, self.dz, self.dt,
                         self.snapshot_coupling.T.copy(), self.snapshot_signal.T.copy())

    def trace_error(self):
        pops = self.snapshot_states[..., :3].real.sum(axis=-1)
        return float(np.max(np.abs(pops - 1.0)))


def simulate_sequence(params, timeline, grid=None):
    """Integrate the Maxwell-Bloch system through one storage sequence.

    Raises
    ------
    NumericalError
        If the integration produces NaN or infinities.
    """
    grid = grid or GridConfig()
    dz, dt = grid.steps(params.cell_length)
    nt = int(round((timeline.t_end - timeline.t_start) / dt))
    nz = grid.nz
    t_lab = timeline.t_start + dt * np.arange(nt + nz + 1)
    oc_in = params.omega_c_in * timeline.coupling_gate(t_lab).astype(np.complex128)
    os_in = timeline.signal_input(t_lab).astype(np.complex128)

    if grid.init == "steady":
        states, oc0 = steady_profile(params, grid, oc_in[0])
    elif grid.init == "pumped":
        # no |-1> population, so the coupling crosses the cell unabsorbed
        states = np.tile(AtomicState().to_array(), (nz + 1, 1))
        oc0 = np.full(nz + 1, oc_in[0], dtype=np.complex128)
    else:
        states = np.tile(feeding_state().to_array(), (nz + 1, 1))
        oc0 = np.zeros(nz + 1, dtype=np.complex128)
        oc0[0] = oc_in[0]
    os0 = np.zeros(nz + 1, dtype=np.complex128)
    os0[0] = os_in[0]

    log.info("simulating %d steps x %d nodes (dt=%.4g s, %s)", nt + nz, nz + 1, dt,
             grid.integrator)
    exit_c, exit_s, sy, sc, ss, violations, fail = _kernels.integrate(
        states, oc0, os0, oc_in, os_in, params.coefs(), params.eta_c, params.eta_s,
        dz, dt, INTEGRATORS[grid.integrator], grid.snapshot_every, grid.eps, 100)
    if fail >= 0:
        raise NumericalError(
            f"non-finite values detected at step {fail} (t={t_lab[min(fail, len(t_lab) - 1)]:.6g} s); "
            f"try integrator='etd' or a finer grid", step=fail)
    if violations:
        warnings.warn(f"{violations} population samples left [-{grid.eps}, 1+{grid.eps}]",
                      RuntimeWarning, stacklevel=2)

    t = t_lab[:nt + 1]
    return SimulationRecord(
        t=t, input_signal=os_in[:nt + 1], input_coupling=oc_in[:nt + 1],
        exit_signal=exit_s[nz:], exit_coupling=exit_c[nz:],
        snapshot_times=timeline.t_start + dt * grid.snapshot_every * np.arange(len(sy)),
        snapshot_states=sy, snapshot_coupling=sc, snapshot_signal=ss,
        params=params, timeline=timeline, grid=grid, dt=dt, dz=dz,
        bound_violations=int(violations))
