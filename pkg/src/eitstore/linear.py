"""Weak-probe EIT response and spectral propagation under constant coupling.

With all atoms in |1>, a constant coupling ``Omega_c`` and a signal
component ``exp(-i delta t)`` (``delta`` is the optical frequency offset
from the carrier), the steady state of the Bloch equations to first order
in the signal gives, in the retarded frame,

    dOmega_s/dz = -kappa(delta) * Omega_s
    kappa = eta_s * (g - i(Delta_R + delta))
            / [(Gamma - i(Delta_s + delta)) (g - i(Delta_R + delta)) + |Omega_c|^2]

with ``g`` the Raman decay and ``Gamma`` the optical decay.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import fft as sfft

from .model import PhysicalParams, TWO_PI


class WrapAroundWarning(RuntimeWarning):
    pass


def eit_susceptibility(delta, params, coupling=None, population=1.0):
    """Complex field attenuation coefficient ``kappa(delta)`` in 1/m.

    ``Re kappa`` is the amplitude absorption per metre and ``-Im kappa`` the
    phase advance per metre. ``population`` scales the density of atoms
    in |1>.
    """
    delta = np.asarray(delta, dtype=float)
    oc = abs(params.omega_c_in) if coupling is None else abs(coupling)
    raman = params.gamma_raman - 1j * (params.delta_r + delta)
    optical = params.gamma_opt - 1j * (params.delta_s + delta)
    return population * params.eta_s * raman / (optical * raman + oc ** 2)


@dataclass
class SusceptibilityCurve:
    frequencies: np.ndarray  # offsets delta in rad/s
    kappa: np.ndarray
    params: PhysicalParams
    coupling: float

    def transmission(self):
        return np.exp(-2.0 * self.kappa.real * self.params.cell_length)

    def phase(self):
        return -self.kappa.imag * self.params.cell_length


def susceptibility_curve(params, span, n=4001, coupling=None, centre=0.0):
    """Sample ``kappa`` on ``n`` offsets covering ``centre +/- span`` (rad/s)."""
    d = centre + np.linspace(-span, span, n)
    oc = abs(params.omega_c_in) if coupling is None else abs(coupling)
    return SusceptibilityCurve(d, eit_susceptibility(d, params, oc), params, oc)


def _light_shifted_centre(params, coupling):
    oc2 = abs(coupling) ** 2
    return -oc2 * params.delta_c / (params.gamma_opt ** 2 + params.delta_c ** 2)


def transmission_fwhm(params, coupling=None, n=200_001):
    """Full width (rad/s) of the transparency peak.

    The half level sits midway between the peak transmission and the
    coupling-off transmission at the same detuning.
    """
    oc = abs(params.omega_c_in) if coupling is None else abs(coupling)
    width0 = max(oc ** 2 / params.gamma_opt, 10 * params.gamma_raman)
    centre = _light_shifted_centre(params, oc)
    curve = susceptibility_curve(params, 20 * width0, n, oc, centre)
    tr = curve.transmission()
    floor = math.exp(-2.0 * eit_susceptibility(centre, params, 0.0).real * params.cell_length)
    i_peak = int(np.argmax(tr))
    half = floor + 0.5 * (tr[i_peak] - floor)
    above = tr >= half
    lo = i_peak
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = i_peak
    while hi < len(tr) - 1 and above[hi + 1]:
        hi += 1
    if lo == 0 or hi == len(tr) - 1:
        raise ValueError("transparency peak not resolved inside the sampled span")
    d = curve.frequencies

    def cross(i, j):
        return d[i] + (half - tr[i]) * (d[j] - d[i]) / (tr[j] - tr[i])

    return float(cross(hi, hi + 1) - cross(lo - 1, lo))


def required_fft_length(n, dt, params, samples_per_linewidth=10):
    """FFT length resolving the Raman linewidth with the requested sampling."""
    need = math.ceil(samples_per_linewidth * TWO_PI / (params.gamma_raman * dt))
    return sfft.next_fast_len(max(2 * n, need))


def linear_propagate(signal, dt, params, coupling=None, population=1.0,
                     samples_per_linewidth=10, max_length=1 << 24, tail_tol=1e-6):
    """Propagate an input envelope through the cell with a constant coupling.

    Every Fourier component is multiplied by ``exp(-kappa L)``. The record is
    zero padded so that the frequency grid resolves the Raman linewidth; the
    returned array has the same length and (retarded) time axis as ``signal``.
    """
    signal = np.asarray(signal, dtype=np.complex128)
    n = len(signal)
    nfft = required_fft_length(n, dt, params, samples_per_linewidth)
    if nfft > max_length:
        raise ValueError(
            f"needs an FFT of {nfft} points at dt={dt:.3g} s; resample the input coarser")
    spec = sfft.fft(signal, nfft)
    omega = TWO_PI * sfft.fftfreq(nfft, dt)
    # numpy's exp(+i omega t) component has optical offset delta = -omega
    kappa = eit_susceptibility(-omega, params, coupling, population)
    out = sfft.ifft(spec * np.exp(-kappa * params.cell_length))
    tail = np.abs(out[-max(nfft // 20, 1):]) ** 2
    total = np.sum(np.abs(out) ** 2)
    if total > 0 and tail.sum() > tail_tol * total:
        warnings.warn(f"output energy fraction {tail.sum() / total:.2e} at the end of the "
                      "padded record; increase padding", WrapAroundWarning, stacklevel=2)
    return out[:n]
