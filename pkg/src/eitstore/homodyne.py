"""Phase read-out from interference records with a phase-scanned reference.

Each record of an ensemble follows

    I_k(t) = I_c + I_s(t) + alpha * sqrt(I_c I_s(t)) * cos(dphi(t) + theta_k)

where ``theta_k`` is the reference phase of run ``k`` and ``I_c`` is zero
while the coupling is switched off. The envelopes of the ensemble give
``I_s`` and ``alpha``; each record then yields ``dphi(t)`` by inverting the
cosine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import median_filter

log = logging.getLogger(__name__)


class CalibrationWarning(RuntimeWarning):
    pass


class CalibrationError(ValueError):
    pass


@dataclass
class NoiseSpec:
    """Additive disturbances for synthetic records (intensity units)."""

    white: float = 0.0
    artifact_amplitude: float = 0.0
    artifact_period: float = 90e-9
    artifact_phase: float = 0.0
    seed: int | None = 0


@dataclass
class HomodyneEnsemble:
    t: np.ndarray
    records: np.ndarray  # (K, N)
    scan_phases: np.ndarray
    i_c: float
    storage_window: tuple[float, float] | None = None

    def __post_init__(self):
        self.records = np.atleast_2d(np.asarray(self.records, dtype=float))
        self.scan_phases = np.asarray(self.scan_phases, dtype=float)
        if self.records.shape[0] != len(self.scan_phases):
            raise ValueError("one scan phase per record required")
        if self.records.shape[1] != len(self.t):
            raise ValueError("records and time axis differ in length")
        if self.i_c <= 0:
            raise ValueError("i_c must be > 0")

    @property
    def coverage_gap(self):
        """Largest gap (rad) left by the scan phases on the circle."""
        ph = np.sort(np.mod(self.scan_phases, 2 * math.pi))
        gaps = np.diff(np.concatenate([ph, [ph[0] + 2 * math.pi]]))
        return float(gaps.max())

    def covers_circle(self):
        return len(self.scan_phases) >= 8 and self.coverage_gap <= math.pi / 4 + 1e-9

    def coupling_on(self):
        if self.storage_window is None:
            return np.ones(len(self.t), dtype=bool)
        t_off, t_on = self.storage_window
        return (self.t < t_off) | (self.t >= t_on)


@dataclass
class PhaseTrace:
    t: np.ndarray
    delta_phi: np.ndarray
    valid: np.ndarray
    phi_eit: np.ndarray | None = None
    flags: list = field(default_factory=list)

    def values(self):
        return self.delta_phi[self.valid]


def synthesize_records(t, exit_signal, coupling_ref, scan_phases, contrast_alpha=2.0,
                       i_c=None, storage_window=None, noise=None):
    """Interference records of a complex exit envelope with a scanned reference.

    ``coupling_ref`` sets the reference phase (scalar or per-sample array).
    ``i_c`` defaults to the peak signal intensity.
    """
    if not 0 < contrast_alpha <= 2:
        raise ValueError(f"contrast_alpha must lie in (0, 2], got {contrast_alpha}")
    t = np.asarray(t, dtype=float)
    exit_signal = np.asarray(exit_signal, dtype=np.complex128)
    i_s = np.abs(exit_signal) ** 2
    if i_c is None:
        i_c = float(i_s.max())
    dphi = np.angle(exit_signal) - np.angle(np.broadcast_to(coupling_ref, exit_signal.shape))
    scan = np.asarray(scan_phases, dtype=float)
    ic_t = np.full(len(t), float(i_c))
    if storage_window is not None:
        ic_t[(t >= storage_window[0]) & (t < storage_window[1])] = 0.0
    recs = (ic_t + i_s)[None, :] + contrast_alpha * np.sqrt(ic_t * i_s)[None, :] * np.cos(
        dphi[None, :] + scan[:, None])
    if noise is not None:
        rng = np.random.default_rng(noise.seed)
        if noise.artifact_amplitude:
            recs = recs + noise.artifact_amplitude * np.sin(
                2 * math.pi * t / noise.artifact_period + noise.artifact_phase)[None, :]
        if noise.white:
            recs = recs + noise.white * rng.standard_normal(recs.shape)
    return HomodyneEnsemble(t, recs, scan, float(i_c), storage_window)


def extract_envelopes(ensemble, smooth=True):
    """Pointwise upper and lower envelopes over all records."""
    recs = ensemble.records
    if smooth:
        recs = median_filter(recs, size=(1, 3), mode="nearest")
    if not ensemble.covers_circle():
        warnings.warn(
            f"scan phases leave a {ensemble.coverage_gap:.3f} rad gap; envelopes unreliable",
            CalibrationWarning, stacklevel=2)
    return recs.max(axis=0), recs.min(axis=0)


def recover_signal_and_contrast(i_plus, i_minus, i_c, coupling_on=None, threshold=0.05):
    """Signal intensity and contrast from the envelopes and the reference intensity.

    ``coupling_on`` marks the samples where the reference is present (the
    signal alone is seen elsewhere, so ``I_s`` equals the envelope there).
    """
    i_plus = np.asarray(i_plus, dtype=float)
    i_minus = np.asarray(i_minus, dtype=float)
    on = np.ones(len(i_plus), dtype=bool) if coupling_on is None else np.asarray(coupling_on)
    raw = np.where(on, 0.5 * (i_plus + i_minus) - i_c, 0.5 * (i_plus + i_minus))
    peak = raw.max() if raw.size else 0.0
    negative = raw < -0.02 * max(peak, i_c)
    if negative.sum() > max(10, len(raw) // 100):
        warnings.warn(f"{negative.sum()} samples with I_s below the noise floor; "
                      "check the reference intensity", CalibrationWarning, stacklevel=2)
    i_s = np.clip(raw, 0.0, None)
    good = on & (i_s > threshold * i_s[on].max()) if on.any() and i_s[on].max() > 0 else on & False
    if not good.any():
        return i_s, float("nan")
    ratio = (i_plus[good] - i_minus[good]) / (2.0 * np.sqrt(i_c * i_s[good]))
    return i_s, float(np.median(ratio))


def _cos_argument(record, i_s, i_c, alpha):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.asarray(record) - i_c - i_s) / (alpha * np.sqrt(i_c * i_s))


def extract_phase(t, record, i_s, i_c, alpha, threshold=0.05, quadrature=None,
                  mask=None, max_excess=1.05):
    """Total interference phase ``dphi + theta`` of one record.

    The arccos branch is chosen by continuity (closest to a linear
    extrapolation of the two previous samples). If ``quadrature`` holds the
    record taken with the reference advanced by pi/2, its sign fixes the
    branch at every sample instead. Only samples with
    ``I_s > threshold * max(I_s)`` (and inside ``mask``) are valid.
    """
    t = np.asarray(t, dtype=float)
    i_s = np.asarray(i_s, dtype=float)
    valid = i_s > threshold * i_s.max() if i_s.max() > 0 else np.zeros(len(t), bool)
    if mask is not None:
        valid &= mask
    x = _cos_argument(record, i_s, i_c, alpha)
    flags = []
    excess = np.abs(x[valid]) > max_excess
    if excess.any():
        frac = excess.mean()
        flags.append(f"{excess.sum()} samples with |cos| > {max_excess}")
        if frac > 0.1:
            raise CalibrationError(
                f"{frac:.0%} of valid samples have |cos argument| > {max_excess}; "
                "contrast or reference intensity is wrong")
    mag = np.arccos(np.clip(x, -1.0, 1.0))
    out = np.full(len(t), np.nan)
    idx = np.flatnonzero(valid)
    if quadrature is not None:
        y = _cos_argument(quadrature, i_s, i_c, alpha)
        # cos(psi + pi/2) = -sin(psi)
        sign = np.where(y[idx] > 0, -1.0, 1.0)
        out[idx] = np.unwrap(sign * mag[idx])
        return PhaseTrace(t, out, valid, flags=flags)

    prev = prev2 = None
    last = -2
    for i in idx:
        if prev is None or i != last + 1:
            # new segment: take the positive branch, or stay close to the last value
            guess = prev if prev is not None else mag[i]
            prev2 = None
        else:
            guess = prev if prev2 is None else 2 * prev - prev2
        base = mag[i]
        k = np.round((guess - base) / (2 * math.pi))
        k2 = np.round((guess + base) / (2 * math.pi))
        c1 = base + 2 * math.pi * k
        c2 = -base + 2 * math.pi * k2
        val = c1 if abs(c1 - guess) <= abs(c2 - guess) else c2
        out[i] = val
        if i == last + 1:
            prev2 = prev
        prev = val
        last = i
    return PhaseTrace(t, out, valid, flags=flags)


def _nearest(scan, target):
    d = np.angle(np.exp(1j * (scan - target)))
    return int(np.argmin(np.abs(d)))


def ensemble_phase(ensemble, i_s, alpha, threshold=0.05, mask=None, use_quadrature=True):
    """``dphi(t)`` combining every record of the ensemble.

    Each record is inverted with :func:`extract_phase` (sign from its
    quadrature partner when available), its scan phase removed, and the
    records averaged on the circle with weights ``sin^2`` of their
    interference phase, the sensitivity of the cosine.
    """
    t = ensemble.t
    acc = np.zeros(len(t), dtype=np.complex128)
    valid = None
    flags = []
    for k, theta in enumerate(ensemble.scan_phases):
        quad = None
        if use_quadrature:
            j = _nearest(ensemble.scan_phases, theta + math.pi / 2)
            if abs(np.angle(np.exp(1j * (ensemble.scan_phases[j] - theta - math.pi / 2)))) < 0.2:
                quad = ensemble.records[j]
        tr = extract_phase(t, ensemble.records[k], i_s, ensemble.i_c, alpha, threshold,
                           quadrature=quad, mask=mask)
        flags += tr.flags
        psi = np.where(tr.valid, tr.delta_phi, 0.0)
        w = np.sin(psi) ** 2
        acc += np.where(tr.valid, w * np.exp(1j * (psi - theta)), 0.0)
        valid = tr.valid if valid is None else valid & tr.valid
    out = np.full(len(t), np.nan)
    idx = np.flatnonzero(valid)
    out[idx] = np.unwrap(np.angle(acc[idx]))
    return PhaseTrace(t, out, valid, flags=flags)


def fit_phase(ensemble, i_s, threshold=0.05, mask=None):
    """Least-squares fit of the cosine model across scan phases at each time.

    Independent of the envelope calibration; returns ``(PhaseTrace, amplitude)``
    where ``amplitude = alpha * sqrt(I_c I_s)``.
    """
    th = ensemble.scan_phases
    design = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th)])
    coef, *_ = np.linalg.lstsq(design, ensemble.records, rcond=None)
    # B cos(th) + C sin(th) = A cos(phi + th) -> B = A cos phi, C = -A sin phi
    phi = np.arctan2(-coef[2], coef[1])
    amp = np.hypot(coef[1], coef[2])
    i_s = np.asarray(i_s, dtype=float)
    valid = i_s > threshold * i_s.max()
    if mask is not None:
        valid &= mask
    out = np.full(len(phi), np.nan)
    idx = np.flatnonzero(valid)
    out[idx] = np.unwrap(phi[idx])
    return PhaseTrace(ensemble.t, out, valid), amp


def filter_artifacts(t, record, notch_period=90e-9, width=2e6, harmonics=2,
                     protect=None, breaks=None):
    """Remove a periodic disturbance with smooth spectral notches.

    Sinusoids at the notch frequencies are first fitted and subtracted over
    the whole record; notches of Gaussian shape (half width ``width`` in Hz) sit at
    ``1/notch_period`` and its multiples up to ``harmonics``. ``protect``
    optionally gives a clean reference whose energy fraction inside the
    notches is reported if above 10 %. ``breaks`` lists times where the
    record jumps (the reference being switched); each piece between breaks
    is filtered on its own so the jumps do not ring through the notches.
    """
    t = np.asarray(t, dtype=float)
    rec = np.asarray(record, dtype=float)
    if breaks is not None:
        edges = np.searchsorted(t, sorted(breaks))
        out = np.empty_like(rec)
        for lo, hi in zip(np.r_[0, edges], np.r_[edges, len(t)]):
            if hi - lo < 2:
                out[..., lo:hi] = rec[..., lo:hi]
                continue
            piece = None if protect is None else np.asarray(protect)[lo:hi]
            out[..., lo:hi] = filter_artifacts(t[lo:hi], rec[..., lo:hi], notch_period, width,
                                               harmonics, piece)
        return out
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0):
        raise ValueError("filter_artifacts needs uniform sampling")
    n = rec.shape[-1]
    f0 = 1.0 / notch_period
    # exact tones at the notch frequencies are projected out first; a record
    # holding a non-integer number of periods would otherwise leak at its edges
    cols = [np.ones(n)]
    for h in range(1, harmonics + 1):
        w = 2 * math.pi * h * f0 * (t - t[0])
        cols += [np.cos(w), np.sin(w)]
    basis = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(basis, np.atleast_2d(rec).T, rcond=None)
    tones = (basis[:, 1:] @ coef[1:]).T.reshape(rec.shape)
    rec = rec - tones
    # mirror padding keeps record edges from ringing
    padded = np.concatenate([rec[..., ::-1], rec, rec[..., ::-1]], axis=-1)
    freqs = sfft.rfftfreq(padded.shape[-1], dt)
    gain = np.ones_like(freqs)
    for h in range(1, harmonics + 1):
        gain *= 1.0 - np.exp(-0.5 * ((freqs - h * f0) / width) ** 2)
    if protect is not None:
        ref = np.concatenate([protect[::-1], protect, protect[::-1]])
        spec = np.abs(sfft.rfft(ref - ref.mean())) ** 2
        lost = np.sum(spec * (1 - gain ** 2)) / max(np.sum(spec), 1e-300)
        if lost > 0.1:
            warnings.warn(f"notch removes {lost:.0%} of the signal energy", RuntimeWarning,
                          stacklevel=2)
    out = sfft.irfft(sfft.rfft(padded, axis=-1) * gain, padded.shape[-1], axis=-1)
    return out[..., n:2 * n]


def compute_phi_eit(leak, retrieved, window=None, max_leak_spread=0.1):
    """Extra phase of the retrieved pulse relative to the (constant) leak phase.

    ``window`` restricts the report to ``(t0, t1)`` on the retrieved trace's
    time axis.
    """
    if not leak.valid.any() or not retrieved.valid.any():
        raise ValueError("leak and retrieved traces need at least one valid sample each")
    lv = leak.delta_phi[leak.valid]
    ref = float(np.angle(np.mean(np.exp(1j * lv))))
    spread = float(np.ptp(np.angle(np.exp(1j * (lv - ref)))))
    flags = list(retrieved.flags)
    if spread > max_leak_spread:
        msg = f"leak phase varies by {spread:.3f} rad peak-to-peak"
        flags.append(msg)
        warnings.warn(msg, CalibrationWarning, stacklevel=2)
    valid = retrieved.valid.copy()
    if window is not None:
        valid &= (retrieved.t >= window[0]) & (retrieved.t <= window[1])
    if not valid.any():
        raise ValueError("no valid retrieved samples inside the reporting window")
    phi = np.full(len(retrieved.t), np.nan)
    idx = np.flatnonzero(valid)
    vals = np.unwrap(retrieved.delta_phi[idx] - ref)
    vals -= 2 * math.pi * np.round(vals[0] / (2 * math.pi))
    phi[idx] = vals
    return PhaseTrace(retrieved.t, retrieved.delta_phi, valid, phi_eit=phi, flags=flags)
