"""Residual series with the bookkeeping every check reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Per-point residuals on the index range ``domain``.

    ``scale`` is the largest magnitude among the terms that were summed to
    form the residual; ``relative`` divides by it so that cancellation noise
    is judged against the size of what cancelled.
    """

    series: np.ndarray
    start: int = 0
    scale: float = 0.0
    label: str = ""
    flagged: tuple = field(default=())

    def __post_init__(self):
        arr = np.asarray(self.series, dtype=float).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "series", arr)

    @classmethod
    def from_terms(cls, *terms, start=0, label="", scale=None):
        """Residual = sum of ``terms`` (arrays or scalars, broadcast)."""
        arrays = np.broadcast_arrays(*[np.asarray(t, dtype=float) for t in terms])
        series = np.sum(arrays, axis=0) if arrays else np.zeros(0)
        if scale is None:
            scale = max((float(np.max(np.abs(a))) for a in arrays if a.size), default=0.0)
        return cls(series, start=start, scale=scale, label=label)

    @property
    def domain(self) -> range:
        return range(self.start, self.start + len(self.series))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.series))) if self.series.size else 0.0

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.series ** 2))) if self.series.size else 0.0

    @property
    def relative(self) -> float:
        if self.scale > 0:
            return self.max_abs / self.scale
        return self.max_abs

    def ok(self, tol: float, relative: bool = True) -> bool:
        return (self.relative if relative else self.max_abs) <= tol

    def at(self, i: int) -> float:
        """Residual at absolute point index ``i``."""
        if i not in self.domain:
            raise IndexError(f"index {i} outside residual domain {self.domain}")
        return float(self.series[i - self.start])

    def __sub__(self, other):
        lo = max(self.start, other.start)
        hi = min(self.domain.stop, other.domain.stop)
        a = self.series[lo - self.start:hi - self.start]
        b = other.series[lo - other.start:hi - other.start]
        return ResidualReport(a - b, start=lo, scale=max(self.scale, other.scale),
                              label=f"{self.label} - {other.label}")

    def __repr__(self):
        return (f"ResidualReport({self.label!r}, domain={self.domain.start}..{self.domain.stop - 1}, "
                f"max_abs={self.max_abs:.3e}, relative={self.relative:.3e})")
