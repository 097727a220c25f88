"""
Linear absorption spectra from a real-time dipole signal.

The signal is multiplied by ``exp(-t/tau)`` (a uniform excited-state decay,
which doubles as the only window) and transformed with a half-sided,
zero-padded rectangle rule whose first sample carries weight 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal


class SpectrumError(ValueError):
    pass


@dataclass
class SpectrumConfig:
    tau: float = np.inf
    padding: int = 4
    omega_min: float | None = None
    omega_max: float | None = None
    reference: float = 0.0
    per_chromophore: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise SpectrumError(f"lifetime must be positive, got {self.tau}")
        if int(self.padding) < 1:
            raise SpectrumError("padding factor must be >= 1")


def damp_signal(samples, times, tau: float) -> np.ndarray:
    """Multiply by ``exp(-t/tau)``; ``tau = inf`` leaves the signal unchanged."""
    s = np.asarray(samples, dtype=np.complex128)
    if np.isinf(tau):
        return s.copy()
    return s * np.exp(-np.asarray(times, dtype=float) / tau)


def lifetime_fwhm(tau: float) -> float:
    """Full width at half maximum of the Lorentzian produced by ``exp(-t/tau)``."""
    return 2.0 / tau


def transform(samples, dt: float, cfg: SpectrumConfig, n_chromophores: int = 1):
    """``A(w) = Re[dt * sum_l w_l S(t_l) exp(i (w + ref) t_l)]`` on the padded grid.

    Returns ``(delta_omega, A)`` where ``delta_omega`` is measured from
    ``cfg.reference``.  The grid spacing is ``2 pi / (padding * n * dt)``.
    """
    s = np.asarray(samples, dtype=np.complex128)
    n = len(s)
    if n < 2:
        raise SpectrumError("need at least two samples")
    t = dt * np.arange(n)
    # demodulate so the reference frequency lands exactly on bin 0
    s = s * np.exp(1j * cfg.reference * t)
    s[0] *= 0.5
    npad = int(cfg.padding) * n
    # sum_l s_l e^{+i w_k t_l} is npad * ifft
    A = (np.fft.ifft(s, n=npad) * npad * dt).real
    omega = 2 * np.pi * np.fft.fftfreq(npad, d=dt)
    order = np.argsort(omega, kind="stable")
    omega, A = omega[order], A[order]
    if cfg.per_chromophore and n_chromophores > 1:
        A = A / n_chromophores
    lo = -np.inf if cfg.omega_min is None else cfg.omega_min
    hi = np.inf if cfg.omega_max is None else cfg.omega_max
    keep = (omega >= lo) & (omega <= hi)
    return omega[keep], A[keep]


def bin_width(n_samples: int, dt: float, padding: int) -> float:
    return 2 * np.pi / (padding * n_samples * dt)


def find_peaks(omega, A, min_rel_height: float = 0.01, min_rel_prominence: float = 0.01) -> np.ndarray:
    """Lines of ``A``, sorted by frequency.

    A line is a local maximum higher than ``min_rel_height * max(A)`` that
    also stands out by ``min_rel_prominence * max(A)`` from its surroundings,
    which rejects the ripple left by the finite signal length.
    """
    A = np.asarray(A, dtype=float)
    top = A.max()
    idx, _ = scipy.signal.find_peaks(A, height=min_rel_height * top,
                                     prominence=min_rel_prominence * top)
    return np.asarray(omega)[idx]


def spectrum_from_amplitudes(amplitudes, dt: float, cfg: SpectrumConfig, n_chromophores: int):
    """Damp and transform normalised dipole amplitudes.

    ``amplitudes`` are overlaps with the normalised optical state, so the
    physical correlation function is ``n_chromophores`` times larger.
    """
    amps = np.asarray(amplitudes, dtype=np.complex128)
    times = dt * np.arange(len(amps))
    signal = damp_signal(amps * n_chromophores, times, cfg.tau)
    return transform(signal, dt, cfg, n_chromophores)
