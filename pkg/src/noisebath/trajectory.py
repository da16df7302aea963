"""Time series of observable expectation values with CSV round-trip."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trajectory:
    """Uniform time grid plus one named column per observable."""

    times: np.ndarray
    data: dict

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 1:
            raise ValueError("need a 1-D, non-empty time grid")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise ValueError("time grid must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-300):
                raise ValueError("time grid must be uniform")
        clean = {}
        for name, values in self.data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != times.shape:
                raise ValueError(f"column {name!r} does not match the time grid")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"column {name!r} contains non-finite values")
            clean[name] = values
        object.__setattr__(self, "data", clean)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    def to_csv(self) -> str:
        names = list(self.data)
        buf = io.StringIO()
        buf.write(",".join(["t"] + names) + "\n")
        cols = [self.times] + [self.data[n] for n in names]
        for row in zip(*cols):
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = [h.strip() for h in lines[0].split(",")]
        if not header or header[0] != "t":
            raise ValueError("trajectory CSV must start with a 't' column")
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(header):
            raise ValueError("malformed trajectory CSV")
        return cls(times=arr[:, 0], data={name: arr[:, k + 1] for k, name in enumerate(header[1:])})
