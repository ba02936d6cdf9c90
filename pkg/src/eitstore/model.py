"""Physical parameters, atomic state and the three-level Bloch equations.

Level labels follow the Lambda scheme: ``m1`` is the ground state |-1>
(coupling leg), ``p1`` is |1> (signal leg) and ``e`` the shared excited
state. All rates and detunings are angular frequencies in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import math

import numpy as np
from scipy import constants

from . import _kernels

TWO_PI = 2.0 * math.pi
C_LIGHT = constants.c
HBAR = constants.hbar
EPS0 = constants.epsilon_0

#: Default excited-state population decay (He 2^3P radiative width).
DEFAULT_GAMMA0 = TWO_PI * 1.6e6
#: Default transit / feeding rate.
DEFAULT_GAMMA_T = TWO_PI * 10e3
DEFAULT_GAMMA_RAMAN = TWO_PI * 14e3
DEFAULT_DOPPLER = TWO_PI * 0.8e9
DEFAULT_CELL_LENGTH = 0.06
DEFAULT_OPTICAL_DEPTH = 3.5
#: Power-broadened transparency width |Omega_c|^2 / Gamma_D the defaults target.
DEFAULT_WINDOW = TWO_PI * 500e3


class ModelError(ValueError):
    """Raised when physical inputs violate a model invariant."""


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise ModelError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class PhysicalParams:
    """Rates, detunings, coupling constants and geometry of the medium.

    ``delta_r`` may be omitted; it then defaults to ``delta_s - delta_c``.
    If it is given it must agree with that convention.
    """

    gamma0: float = DEFAULT_GAMMA0
    gamma_t: float = DEFAULT_GAMMA_T
    gamma_raman: float = DEFAULT_GAMMA_RAMAN
    gamma_opt: float = DEFAULT_DOPPLER
    delta_c: float = 0.0
    delta_s: float = 0.0
    delta_r: float | None = None
    eta_c: float = 0.0
    eta_s: float = 0.0
    cell_length: float = DEFAULT_CELL_LENGTH
    omega_c_in: complex = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                _check_finite(f.name, v)
        for name in ("gamma0", "gamma_t", "gamma_raman", "gamma_opt"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.gamma_opt < self.gamma0 / 2:
            raise ModelError(
                f"gamma_opt={self.gamma_opt} is below gamma0/2={self.gamma0 / 2}")
        if self.cell_length <= 0:
            raise ModelError(f"cell_length must be > 0, got {self.cell_length}")
        if self.eta_c < 0 or self.eta_s < 0:
            raise ModelError("eta_c and eta_s must be >= 0")
        expected = self.delta_s - self.delta_c
        if self.delta_r is None:
            object.__setattr__(self, "delta_r", expected)
        elif not math.isclose(self.delta_r, expected, rel_tol=1e-12, abs_tol=1e-6):
            raise ModelError(
                f"delta_r={self.delta_r} inconsistent with delta_s - delta_c={expected}")
        object.__setattr__(self, "omega_c_in", complex(self.omega_c_in))

    def with_detuning(self, delta):
        """Same medium at two-photon resonance with both detunings equal to ``delta``."""
        return replace(self, delta_c=delta, delta_s=delta, delta_r=None)

    def replace(self, **changes):
        if ("delta_c" in changes or "delta_s" in changes) and "delta_r" not in changes:
            changes["delta_r"] = None
        return replace(self, **changes)

    def coefs(self):
        return np.array([self.gamma0, self.gamma_t, self.gamma_raman, self.gamma_opt,
                         self.delta_c, self.delta_s, self.delta_r], dtype=np.float64)


@dataclass(frozen=True)
class AtomicState:
    """Independent density-matrix elements at one grid node."""

    pop_m1: float = 0.0
    pop_e: float = 0.0
    pop_p1: float = 1.0
    coh_raman: complex = 0.0
    coh_c: complex = 0.0
    coh_s: complex = 0.0

    def to_array(self):
        return np.array([self.pop_m1, self.pop_e, self.pop_p1,
                         self.coh_raman, self.coh_c, self.coh_s], dtype=np.complex128)

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=np.complex128)
        return cls(float(y[0].real), float(y[1].real), float(y[2].real),
                   complex(y[3]), complex(y[4]), complex(y[5]))

    def to_matrix(self):
        """Full 3x3 density matrix in the basis (|-1>, |e>, |1>)."""
        r, c, s = self.coh_raman, self.coh_c, self.coh_s
        return np.array([
            [self.pop_m1, c, r],
            [np.conj(c), self.pop_e, np.conj(s)],
            [np.conj(r), s, self.pop_p1],
        ], dtype=np.complex128)

    @classmethod
    def from_matrix(cls, rho):
        rho = np.asarray(rho)
        return cls(float(rho[0, 0].real), float(rho[1, 1].real), float(rho[2, 2].real),
                   complex(rho[0, 2]), complex(rho[0, 1]), complex(rho[2, 1]))

    @property
    def trace(self):
        return self.pop_m1 + self.pop_e + self.pop_p1

    def violations(self, eps=1e-6):
        """Names of the invariants this state breaks at tolerance ``eps``."""
        bad = []
        for name in ("pop_m1", "pop_e", "pop_p1"):
            p = getattr(self, name)
            if p < -eps or p > 1 + eps:
                bad.append(name)
        if abs(self.coh_raman) ** 2 > self.pop_m1 * self.pop_p1 + eps:
            bad.append("coh_raman")
        if abs(self.coh_s) ** 2 > self.pop_p1 * self.pop_e + eps:
            bad.append("coh_s")
        if abs(self.coh_c) ** 2 > self.pop_m1 * self.pop_e + eps:
            bad.append("coh_c")
        return bad


def feeding_state():
    """Populations set by the discharge feeding alone (no optical pumping)."""
    return AtomicState(pop_m1=1 / 3, pop_e=0.0, pop_p1=2 / 3)


@dataclass
class FieldGrid:
    """Complex Rabi envelopes on the characteristic-aligned space-time lattice.

    Field nodes sit at ``z_j = j * dz`` for ``j = 0..nz``; ``omega_c`` and
    ``omega_s`` have shape ``(nz + 1, n_stored)``.
    """

    nz: int
    nt: int
    dz: float
    dt: float
    omega_c: np.ndarray = field(repr=False, default=None)
    omega_s: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if not math.isclose(self.dz, C_LIGHT * self.dt, rel_tol=1e-9):
            raise ModelError(f"grid needs dz = c*dt, got dz={self.dz} m and c*dt={C_LIGHT * self.dt} m")
        shape = (self.nz + 1, 0)
        if self.omega_c is None:
            self.omega_c = np.zeros(shape, dtype=np.complex128)
        if self.omega_s is None:
            self.omega_s = np.zeros(shape, dtype=np.complex128)

    @property
    def length(self):
        return self.nz * self.dz


def bloch_rhs(state, omega_c, omega_s, params):
    """Time derivative of every independent density-matrix element.

    Parameters
    ----------
    state : AtomicState or array_like of shape (6,)
    omega_c, omega_s : complex
        Local coupling and signal Rabi frequencies (rad/s).
    params : PhysicalParams

    Returns
    -------
    Same type as ``state`` (an :class:`AtomicState` holding derivatives, or
    a complex array).
    """
    as_state = isinstance(state, AtomicState)
    y = state.to_array() if as_state else np.asarray(state, dtype=np.complex128)
    _check_finite("state", y)
    _check_finite("omega_c", omega_c)
    _check_finite("omega_s", omega_s)
    out = np.empty(6, dtype=np.complex128)
    _kernels.rhs(y, complex(omega_c), complex(omega_s), params.coefs(), out)
    return AtomicState.from_array(out) if as_state else out


def derive_eta_from_optical_depth(target_od, params):
    """Signal propagation constant giving resonant transmission ``exp(-target_od)``.

    Weak probe, coupling off, all atoms in |1>: the field amplitude decays as
    ``exp(-eta * L / gamma_opt)`` so ``eta = OD * gamma_opt / (2 L)``.
    """
    if target_od < 0:
        raise ModelError(f"optical depth must be >= 0, got {target_od}")
    return target_od * params.gamma_opt / (2.0 * params.cell_length)


def optical_depth_from_eta(eta, params):
    return 2.0 * eta * params.cell_length / params.gamma_opt


def rabi_from_power(power, beam_diameter, dipole):
    """Rabi frequency (with hbar*Omega = d*E/2) of a flat-top beam."""
    if power < 0 or beam_diameter <= 0 or dipole <= 0:
        raise ModelError("power must be >= 0, beam_diameter and dipole > 0")
    area = math.pi * (beam_diameter / 2) ** 2
    e_field = math.sqrt(2.0 * power / (EPS0 * C_LIGHT * area))
    return dipole * e_field / (2.0 * HBAR)


def dipole_for_rabi(omega, power, beam_diameter):
    """Inverse of :func:`rabi_from_power`: dipole moment reproducing ``omega``."""
    return omega / rabi_from_power(power, beam_diameter, 1.0)


def coupling_for_window(window=DEFAULT_WINDOW, gamma_opt=DEFAULT_DOPPLER):
    """Coupling Rabi frequency whose power-broadened width |Omega|^2/Gamma equals ``window``."""
    return math.sqrt(window * gamma_opt)


def default_params(detuning=0.0, optical_depth=DEFAULT_OPTICAL_DEPTH, coupling=None,
                   **overrides):
    """Experimental defaults at two-photon resonance.

    ``coupling`` defaults to :func:`coupling_for_window` (about 2*pi*20 MHz).
    The coupling and signal legs share the same propagation constant.
    """
    base = PhysicalParams(**{k: v for k, v in overrides.items()
                             if k in {"gamma0", "gamma_t", "gamma_raman", "gamma_opt",
                                      "cell_length"}})
    eta = derive_eta_from_optical_depth(optical_depth, base)
    if coupling is None:
        coupling = coupling_for_window(gamma_opt=base.gamma_opt)
    extra = {k: v for k, v in overrides.items() if k in {"eta_c", "eta_s"}}
    return base.replace(delta_c=detuning, delta_s=detuning, eta_c=extra.get("eta_c", eta),
                        eta_s=extra.get("eta_s", eta), omega_c_in=coupling)
