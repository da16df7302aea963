"""Post-processing: power spectra, peak finding, error budget, collective-spin
statistics and steady-state extraction."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import find_peaks as _scipy_find_peaks

from .errors import ConvergenceError
from .trajectory import Trajectory

__all__ = [
    "Spectrum",
    "power_spectrum",
    "find_peaks",
    "ErrorBudget",
    "error_budget",
    "gaussianity_check",
    "steady_window_average",
]


@dataclass(frozen=True)
class Spectrum:
    """|FFT|^2 of a uniformly sampled series on a symmetric frequency grid."""

    frequencies: np.ndarray
    power: np.ndarray
    resolution: float

    def __post_init__(self):
        if np.any(self.power < 0):
            raise ValueError("power must be nonnegative")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("omega,power\n")
        for w, p in zip(self.frequencies, self.power):
            buf.write(f"{w:.17g},{p:.17g}\n")
        return buf.getvalue()


def power_spectrum(trajectory: Trajectory, column: str | None = None, window: str = "none") -> Spectrum:
    """Periodogram of one trajectory column.

    The mean is subtracted first (the DC term otherwise dominates);
    ``window`` may be "hann" for sidelobe suppression.  Frequencies are
    angular, on the grid 2 pi k / (m dt), fft-shifted to ascending order.
    """
    if column is None:
        column = next(iter(trajectory.data))
    x = trajectory.column(column).astype(float)
    m = x.size
    if m < 8:
        raise ValueError("need at least 8 samples for a spectrum")
    x = x - x.mean()
    if window == "hann":
        x = x * np.hanning(m)
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    dt = trajectory.dt
    power = np.abs(np.fft.fft(x)) ** 2
    freqs = 2.0 * math.pi * np.fft.fftfreq(m, d=dt)
    order = np.fft.fftshift(np.arange(m))
    return Spectrum(
        frequencies=freqs[order], power=power[order], resolution=2.0 * math.pi / (m * dt)
    )


def find_peaks(spectrum: Spectrum, min_prominence: float):
    """Local maxima above the prominence threshold, strongest first."""
    idx, _ = _scipy_find_peaks(spectrum.power, prominence=min_prominence)
    peaks = [(float(spectrum.frequencies[i]), float(spectrum.power[i])) for i in idx]
    peaks.sort(key=lambda t: -t[1])
    return peaks


@dataclass(frozen=True)
class ErrorBudget:
    """Coupled error indicators of the matched algorithm.

    With n fitted modes at constant spacing over a window omega_c, N qubits
    per mode and depth n*N*D0 per step, the matching condition ties the
    Trotter indicator to the other error sources: tau*omega_c = n^2 N eps D0.
    """

    n: int
    spins_per_mode: int
    gate_error: float
    depth_per_qubit: float
    window_scale: float
    kappa: float
    depth: float
    tau: float
    tau_omega_c: float
    gaussianity: float
    v_tau: float | None = None
    delta_tau: float | None = None


def error_budget(n, spins_per_mode, gate_error, depth_per_qubit, window_scale,
                 v=None, delta=None) -> ErrorBudget:
    if min(n, spins_per_mode, gate_error, depth_per_qubit, window_scale) <= 0:
        raise ValueError("all budget inputs must be positive")
    tau_omega_c = n * n * spins_per_mode * gate_error * depth_per_qubit
    tau = tau_omega_c / window_scale
    return ErrorBudget(
        n=n,
        spins_per_mode=spins_per_mode,
        gate_error=gate_error,
        depth_per_qubit=depth_per_qubit,
        window_scale=window_scale,
        kappa=window_scale / n,
        depth=n * spins_per_mode * depth_per_qubit,
        tau=tau,
        tau_omega_c=tau_omega_c,
        gaussianity=1.0 / spins_per_mode,
        v_tau=None if v is None else v * tau,
        delta_tau=None if delta is None else delta * tau,
    )


def gaussianity_check(n_spins: int, s: int):
    """Collective-spin vs bosonic number expectation on a Dicke state.

    Builds the N-spin, s-excitation Dicke state explicitly (integer
    amplitudes) and evaluates <(sum sigma_+)(sum sigma_-)>/N by exact
    rational arithmetic.  The bosonic counterpart is s; the shortfall is
    s(s-1)/N, the collective-spin (bath Gaussianity) error.

    Returns (collective, bosonic, error) as exact Fractions/ints.
    """
    if not (0 <= s <= n_spins):
        raise ValueError("need 0 <= s <= N")
    if n_spins < 1 or n_spins > 16:
        raise ValueError("N must be in 1..16")
    d = 1 << n_spins
    # unnormalized Dicke state: amplitude 1 on every basis state with s bits set
    amp = [1 if bin(b).count("1") == s else 0 for b in range(d)]
    norm_sq = sum(amp)
    # J_- removes one excitation from every occupied site
    lowered = [0] * d
    for b in range(d):
        if not amp[b]:
            continue
        for q in range(n_spins):
            if (b >> q) & 1:
                lowered[b & ~(1 << q)] += amp[b]
    jpjm = sum(c * c for c in lowered)  # <J_+ J_-> = ||J_- psi||^2
    collective = Fraction(jpjm, norm_sq * n_spins)
    bosonic = s
    return collective, bosonic, bosonic - collective


def steady_window_average(trajectory: Trajectory, column: str | None = None,
                          tail_fraction: float = 0.2) -> float:
    """Mean of the final ``tail_fraction`` of samples.

    Guard: the drift between the two halves of the tail window must stay
    below 1% of the full trajectory range, otherwise the series has not
    settled and a ConvergenceError is raised.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must be in (0, 1]")
    if column is None:
        column = next(iter(trajectory.data))
    x = trajectory.column(column)
    k = max(2, int(math.ceil(tail_fraction * x.size)))
    tail = x[-k:]
    half = k // 2
    drift = abs(float(tail[half:].mean() - tail[:half].mean()))
    spread = float(x.max() - x.min())
    scale = max(spread, 1e-12)
    if drift > 0.01 * scale and spread > 0:
        raise ConvergenceError(
            f"tail drift {drift:.3e} exceeds 1% of range {spread:.3e}; not settled"
        )
    return float(tail.mean())
