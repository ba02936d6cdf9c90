"""Compiled inner loops for the Maxwell-Bloch integration.

State layout per grid node (complex128, length 6)::

    0 pop_m1   sigma_{-1-1}
    1 pop_e    sigma_{ee}
    2 pop_p1   sigma_{11}
    3 coh_raman  sigma~_{-11}
    4 coh_c      sigma~_{-1e}
    5 coh_s      sigma~_{1e}

``coefs`` packs the rates as (gamma0, gamma_t, gamma_raman, gamma_opt,
delta_c, delta_s, delta_r), all in rad/s.
"""

import numpy as np
from numba import njit

EULER = 0
RK2 = 1
ETD = 2


@njit(cache=True, nogil=True)
def linear_rates(coefs):
    g0, gt, gr, go, dc, ds, dr = coefs
    out = np.empty(6, dtype=np.complex128)
    out[0] = gt
    out[1] = g0 + gt
    out[2] = gt
    out[3] = gr - 1j * dr
    out[4] = go + 1j * dc
    out[5] = go + 1j * ds
    return out


@njit(cache=True, nogil=True)
def drives(y, oc, os, coefs, out):
    """Right-hand side without the diagonal decay/rotation terms."""
    g0 = coefs[0]
    gt = coefs[1]
    pm = y[0]
    pe = y[1]
    pp = y[2]
    r = y[3]
    c = y[4]
    s = y[5]
    occ = np.conj(oc)
    osc = np.conj(os)
    cb = np.conj(c)
    sb = np.conj(s)
    out[0] = gt / 3.0 + 0.5 * g0 * pe + 1j * (occ * cb - oc * c)
    out[1] = 1j * (oc * c - occ * cb + os * s - osc * sb)
    out[2] = 2.0 * gt / 3.0 + 0.5 * g0 * pe + 1j * (osc * sb - os * s)
    out[3] = 1j * (occ * sb - os * c)
    out[4] = 1j * (occ * (pe - pm) - osc * r)
    out[5] = 1j * (osc * (pe - pp) - occ * np.conj(r))


@njit(cache=True, nogil=True)
def rhs(y, oc, os, coefs, out):
    drives(y, oc, os, coefs, out)
    a = linear_rates(coefs)
    for k in range(6):
        out[k] -= a[k] * y[k]


@njit(cache=True, nogil=True)
def _bloch_row(y, ynew, oc, os, coefs, dt, method, decay, phi, work, work2, tmp):
    nzp = y.shape[0]
    a = linear_rates(coefs)
    for j in range(nzp):
        if method == ETD:
            drives(y[j], oc[j], os[j], coefs, work)
            # populations: plain Euler keeps the trace identity exact
            for k in range(3):
                ynew[j, k] = y[j, k] + dt * (work[k] - a[k] * y[j, k])
            for k in range(3, 6):
                ynew[j, k] = decay[k] * y[j, k] + phi[k] * work[k]
        elif method == RK2:
            rhs(y[j], oc[j], os[j], coefs, work)
            for k in range(6):
                tmp[k] = y[j, k] + dt * work[k]
            rhs(tmp, oc[j], os[j], coefs, work2)
            for k in range(6):
                ynew[j, k] = y[j, k] + 0.5 * dt * (work[k] + work2[k])
        else:
            rhs(y[j], oc[j], os[j], coefs, work)
            for k in range(6):
                ynew[j, k] = y[j, k] + dt * work[k]


@njit(cache=True, nogil=True)
def integrate(y0, oc0, os0, oc_in, os_in, coefs, eta_c, eta_s, dz, dt,
              method, snap_every, eps, check_every):
    """March the coupled system for ``len(oc_in) - 1`` steps.

    Returns exit-face traces for both fields (one sample per step including
    the initial row), decimated snapshots, the population-bound violation
    count and the index of the first non-finite step (-1 if none).
    """
    nzp = y0.shape[0]
    nz = nzp - 1
    nsteps = oc_in.shape[0] - 1
    nsnap = nsteps // snap_every + 1

    y = y0.copy()
    ynew = np.empty_like(y)
    oc = oc0.copy()
    os = os0.copy()

    exit_c = np.empty(nsteps + 1, dtype=np.complex128)
    exit_s = np.empty(nsteps + 1, dtype=np.complex128)
    snaps_y = np.empty((nsnap, nzp, 6), dtype=np.complex128)
    snaps_c = np.empty((nsnap, nzp), dtype=np.complex128)
    snaps_s = np.empty((nsnap, nzp), dtype=np.complex128)

    a = linear_rates(coefs)
    decay = np.empty(6, dtype=np.complex128)
    phi = np.empty(6, dtype=np.complex128)
    for k in range(6):
        decay[k] = np.exp(-a[k] * dt)
        phi[k] = (1.0 - decay[k]) / a[k] if abs(a[k] * dt) > 1e-12 else dt
    work = np.empty(6, dtype=np.complex128)
    work2 = np.empty(6, dtype=np.complex128)
    tmp = np.empty(6, dtype=np.complex128)

    kc = 0.5j * eta_c * dz
    ks = 0.5j * eta_s * dz
    violations = 0
    fail = -1

    exit_c[0] = oc[nz]
    exit_s[0] = os[nz]
    snaps_y[0] = y
    snaps_c[0] = oc
    snaps_s[0] = os
    isnap = 1

    for n in range(nsteps):
        _bloch_row(y, ynew, oc, os, coefs, dt, method, decay, phi, work, work2, tmp)
        # characteristic march (Courant number 1), trapezoidal source
        for j in range(nz, 0, -1):
            oc[j] = oc[j - 1] + kc * (np.conj(y[j - 1, 4]) + np.conj(ynew[j, 4]))
            os[j] = os[j - 1] + ks * (np.conj(y[j - 1, 5]) + np.conj(ynew[j, 5]))
        oc[0] = oc_in[n + 1]
        os[0] = os_in[n + 1]
        for j in range(nzp):
            for k in range(6):
                y[j, k] = ynew[j, k]
            for k in range(3):
                p = y[j, k].real
                if p < -eps or p > 1.0 + eps:
                    violations += 1
        exit_c[n + 1] = oc[nz]
        exit_s[n + 1] = os[nz]
        if (n + 1) % snap_every == 0:
            snaps_y[isnap] = y
            snaps_c[isnap] = oc
            snaps_s[isnap] = os
            isnap += 1
        if (n + 1) % check_every == 0 or n == nsteps - 1:
            bad = False
            for j in range(nzp):
                if not (np.isfinite(oc[j].real) and np.isfinite(oc[j].imag)
                        and np.isfinite(os[j].real) and np.isfinite(os[j].imag)):
                    bad = True
                for k in range(6):
                    if not (np.isfinite(y[j, k].real) and np.isfinite(y[j, k].imag)):
                        bad = True
            if bad:
                fail = n + 1
                break

    return exit_c, exit_s, snaps_y[:isnap], snaps_c[:isnap], snaps_s[:isnap], violations, fail
