"""Target bath spectral functions.

All quantities are expressed in natural units (hbar = k_B = 1): temperatures,
frequencies and decay rates share one angular-frequency unit, and spectral
values carry units of (frequency)^2.

Positive frequencies describe energy absorption by the bath, negative ones
emission; thermal targets obey detailed balance S(-w) = exp(-w/T) S(w).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Temperature",
    "LorentzianSum",
    "OhmicExpCutoff",
    "SetStructured",
    "Tabulated",
    "MultiChannelTarget",
    "thermal_enhancement",
    "eval_ohmic",
    "eval_lorentzian_sum",
    "eval_set_target",
    "eval_multichannel",
]

# Relative |w/T| below which the thermal factor switches to its series limit.
_THERMAL_SERIES_CUTOFF = 1e-7


def _check_finite(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("frequency input must be finite")
    return omega


@dataclass(frozen=True)
class Temperature:
    """Bath temperature k_B T in angular-frequency units; 0 means the T=0 limit."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError("temperature must be finite and >= 0")

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


def thermal_enhancement(omega, temperature: Temperature) -> np.ndarray:
    """w / (1 - exp(-w/T)), with the analytic limits at w = 0 and T = 0.

    At T = 0 the emission side (w < 0) vanishes and the absorption side is w.
    Near w = 0 the removable singularity is evaluated by series,
    T * (1 + x/2 + x^2/12) with x = w/T, to avoid catastrophic cancellation.
    """
    omega = _check_finite(omega)
    if temperature.is_zero:
        return np.where(omega > 0, omega, 0.0)
    x = omega / temperature.value
    small = np.abs(x) < _THERMAL_SERIES_CUTOFF
    x_safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore"):
        bulk = omega / (1.0 - np.exp(-x_safe))
    series = temperature.value * (1.0 + x / 2.0 + x * x / 12.0)
    return np.where(small, series, bulk)


@dataclass(frozen=True)
class OhmicExpCutoff:
    """Ohmic thermal spectral function with exponential cutoff.

    S(w) = 4 pi alpha w / (1 - exp(-w/T)) * exp(-|w|/w_c).
    """

    alpha: float
    temperature: Temperature
    cutoff: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not np.isfinite(self.cutoff) or self.cutoff <= 0:
            raise ValueError("cutoff must be positive")

    def __call__(self, omega) -> np.ndarray:
        omega = _check_finite(omega)
        thermal = thermal_enhancement(omega, self.temperature)
        return 4.0 * np.pi * self.alpha * thermal * np.exp(-np.abs(omega) / self.cutoff)


@dataclass(frozen=True)
class LorentzianSum:
    """Sum of Lorentzian peaks plus a constant background.

    Each mode (weight, center, width) contributes
    weight * width / ((width/2)^2 + (w - center)^2); the mode-integrated area
    is 2 pi * weight.  ``background`` is the 4*kappa_system offset of the
    system-noise fitting scheme.
    """

    modes: tuple = ()
    background: float = 0.0

    def __post_init__(self):
        for weight, _center, width in self.modes:
            if weight < 0:
                raise ValueError("mode weights must be >= 0")
            if width <= 0:
                raise ValueError("mode widths must be > 0")
        if self.background < 0:
            raise ValueError("background must be >= 0")

    def __call__(self, omega) -> np.ndarray:
        omega = _check_finite(omega)
        out = np.full_like(omega, self.background, dtype=float)
        for weight, center, width in self.modes:
            out = out + weight * width / ((width / 2.0) ** 2 + (omega - center) ** 2)
        return out


@dataclass(frozen=True)
class SetStructured:
    """Structured single-electron-transistor target: thermal ohmic prefactor
    times two Lorentzian resonances at w_0 and 2 w_0, with a quartic cutoff.

    S(w) = sum_k [alpha w / (1 - e^{-w/T})] (1/2pi) k'/((k'/2)^2 + (w-w_k)^2)
           / [1 + (w/w_c)^4],   w_0 = resonance, w_1 = 2 w_0.
    """

    alpha: float
    resonance: float
    resonance_width: float
    temperature: Temperature
    cutoff: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.resonance <= 0 or self.resonance_width <= 0 or self.cutoff <= 0:
            raise ValueError("resonance, width and cutoff must be positive")

    def __call__(self, omega) -> np.ndarray:
        omega = _check_finite(omega)
        thermal = self.alpha * thermal_enhancement(omega, self.temperature)
        kp = self.resonance_width
        lor = np.zeros_like(omega, dtype=float)
        for center in (self.resonance, 2.0 * self.resonance):
            lor = lor + kp / ((kp / 2.0) ** 2 + (omega - center) ** 2)
        return thermal * lor / (2.0 * np.pi) / (1.0 + (omega / self.cutoff) ** 4)


@dataclass(frozen=True)
class Tabulated:
    """Linearly interpolated tabulated spectrum; evaluation outside the grid
    is an error (spectra are not extrapolated)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with >= 2 points")
        if values.shape != grid.shape:
            raise ValueError("values must match grid shape")
        if np.any(values < 0):
            raise ValueError("tabulated spectral values must be >= 0")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(grid=data[:, 0], values=data[:, 1])

    def __call__(self, omega) -> np.ndarray:
        omega = _check_finite(omega)
        if np.any(omega < self.grid[0]) or np.any(omega > self.grid[-1]):
            raise ValueError("tabulated target evaluated outside its grid")
        return np.interp(omega, self.grid, self.values)


def eval_ohmic(omega, alpha: float, temperature: Temperature, cutoff: float):
    return OhmicExpCutoff(alpha, temperature, cutoff)(omega)


def eval_lorentzian_sum(omega, bath: LorentzianSum):
    return bath(omega)


def eval_set_target(omega, params: SetStructured):
    return params(omega)


@dataclass(frozen=True)
class MultiChannelTarget:
    """Matrix-valued target S_ij(w) for multi-spin systems.

    ``entries`` maps (i, j) with i <= j to a callable spectral function;
    queries with i > j use Hermitian symmetry S_ji(w) = conj(S_ij(w)).
    Diagonal entries must be real and nonnegative.
    """

    dimension: int
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        for (i, j) in self.entries:
            if not (0 <= i <= j < self.dimension):
                raise ValueError(f"entry index ({i}, {j}) out of range")

    @classmethod
    def from_scalar(cls, target) -> "MultiChannelTarget":
        return cls(dimension=1, entries={(0, 0): target})

    def channel(self, i: int, j: int):
        """Callable for channel (i, j), zero function if the entry is absent."""
        if not (0 <= i < self.dimension and 0 <= j < self.dimension):
            raise IndexError("channel index out of range")
        key, conjugate = ((i, j), False) if i <= j else ((j, i), True)
        fn = self.entries.get(key)
        if fn is None:
            return lambda omega: np.zeros_like(np.asarray(omega, dtype=float))
        if conjugate:
            return lambda omega: np.conj(fn(omega))
        return fn

    def __call__(self, omega, i: int, j: int):
        return self.channel(i, j)(omega)


def eval_multichannel(omega, target: MultiChannelTarget, i: int, j: int):
    return target(omega, i, j)
