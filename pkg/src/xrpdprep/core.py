"""Pattern data model and two-column ASCII I/O.

A :class:`Pattern` is a 1-D diffraction profile sampled on a uniform
2-theta grid. Every stage consumes and produces patterns, so grid
validation happens once, here.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .exceptions import DomainError, GridError, ParseError, SizeError

__all__ = [
    "MIN_POINTS",
    "GRID_RTOL",
    "Pattern",
    "Stage",
    "StageRecord",
    "load_pattern",
    "save_pattern",
    "save_record",
    "check_same_grid",
]

MIN_POINTS = 8
GRID_RTOL = 1e-9


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pattern:
    """Uniformly sampled diffraction profile.

    Parameters
    ----------
    theta : array_like
        Strictly increasing, uniformly spaced angles (degrees 2-theta).
    intensity : array_like
        Finite intensities, same length as ``theta``.
    step : float, optional
        Grid increment. Inferred from the end points when omitted.

    Raises
    ------
    SizeError
        Fewer than ``MIN_POINTS`` samples or mismatched lengths.
    GridError
        Non-uniform or non-increasing grid.
    DomainError
        Non-finite intensities.
    """

    theta: np.ndarray
    intensity: np.ndarray
    step: float = None  # type: ignore[assignment]

    def __post_init__(self):
        theta = _frozen(self.theta)
        intensity = _frozen(self.intensity)
        if theta.ndim != 1 or intensity.ndim != 1:
            raise SizeError("theta and intensity must be 1-D")
        if theta.size != intensity.size:
            raise SizeError(
                f"theta has {theta.size} samples but intensity has {intensity.size}"
            )
        if theta.size < MIN_POINTS:
            raise SizeError(f"pattern needs at least {MIN_POINTS} samples, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise GridError("theta contains non-finite values")
        if not np.all(np.isfinite(intensity)):
            raise DomainError("intensity contains non-finite values")
        step = self.step
        if step is None:
            step = (theta[-1] - theta[0]) / (theta.size - 1)
        step = float(step)
        if not step > 0:
            raise GridError("theta must be strictly increasing")
        dev = np.abs(np.diff(theta) - step)
        if dev.max() > GRID_RTOL * step:
            i = int(np.argmax(dev))
            raise GridError(
                f"non-uniform grid between samples {i} and {i + 1}: "
                f"spacing {theta[i + 1] - theta[i]!r} vs step {step!r}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "step", step)

    @classmethod
    def from_grid(cls, theta0, step, intensity) -> "Pattern":
        intensity = np.asarray(intensity, dtype=float)
        theta = theta0 + step * np.arange(intensity.size)
        return cls(theta, intensity, step)

    def __len__(self):
        return self.intensity.size

    @property
    def theta0(self) -> float:
        return float(self.theta[0])

    def with_intensity(self, intensity) -> "Pattern":
        """Same grid, new intensities."""
        return Pattern(self.theta, intensity, self.step)

    def require_nonnegative(self, what="pattern"):
        if np.any(self.intensity < 0):
            i = int(np.argmin(self.intensity))
            raise DomainError(
                f"{what} has negative intensity {self.intensity[i]!r} at index {i}"
            )
        return self

    def index_range(self, lo, hi):
        """Inclusive index bounds of the samples inside ``[lo, hi]``."""
        tol = GRID_RTOL * self.step
        idx = np.flatnonzero((self.theta >= lo - tol) & (self.theta <= hi + tol))
        if idx.size == 0:
            raise DomainError(f"range [{lo}, {hi}] holds no samples")
        return int(idx[0]), int(idx[-1])

    def window(self, lo, hi) -> "Pattern":
        i0, i1 = self.index_range(lo, hi)
        return Pattern(self.theta[i0 : i1 + 1], self.intensity[i0 : i1 + 1], self.step)


def check_same_grid(*patterns: Pattern):
    """Raise :class:`GridError` unless every pattern shares one grid."""
    ref = patterns[0]
    for p in patterns[1:]:
        if abs(p.step - ref.step) > GRID_RTOL * ref.step:
            raise GridError(f"step mismatch: {p.step!r} vs {ref.step!r}")
        if len(p) != len(ref):
            raise GridError(f"length mismatch: {len(p)} vs {len(ref)}")
        if abs(p.theta0 - ref.theta0) > GRID_RTOL * ref.step * len(ref):
            raise GridError(f"origin mismatch: {p.theta0!r} vs {ref.theta0!r}")


class Stage(str, enum.Enum):
    RAW = "raw"
    DENOISED = "denoised"
    BACKGROUND = "background"
    BACKGROUND_FREE = "background_free"
    DEBLURRED = "deblurred"
    RECONVOLVED = "reconvolved"


@dataclass(frozen=True, eq=False)
class StageRecord:
    """A pattern tagged with the pipeline stage that produced it."""

    stage: Stage
    pattern: Pattern
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if not isinstance(self.pattern, Pattern):
            raise TypeError("StageRecord.pattern must be a Pattern")
        object.__setattr__(
            self, "metadata", {str(k): str(v) for k, v in dict(self.metadata).items()}
        )


def load_pattern(path, format="xy_ascii", allow_negative=False) -> Pattern:
    """Read a two-column ``angle intensity`` file.

    Lines starting with ``#`` and blank lines are skipped. Columns may be
    separated by spaces or tabs. Raw data must be non-negative; pass
    ``allow_negative=True`` for derived quantities such as removed noise.
    """
    if format != "xy_ascii":
        raise DomainError(f"unsupported pattern format {format!r}")
    theta, intensity = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ParseError(f"expected 2 columns, found {len(parts)}", lineno)
            try:
                a, b = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError(f"not a number: {s!r}", lineno) from None
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ParseError(f"non-finite value: {s!r}", lineno)
            theta.append(a)
            intensity.append(b)
    if len(theta) < MIN_POINTS:
        raise SizeError(f"{path}: need at least {MIN_POINTS} data rows, found {len(theta)}")
    pattern = Pattern(theta, intensity)
    if not allow_negative:
        pattern.require_nonnegative(str(path))
    return pattern


def _header_lines(header):
    if not header:
        return ""
    return "".join(f"# {k} = {v}\n" for k, v in header.items())


def save_pattern(pattern: Pattern, path, header: Mapping[str, str] | None = None):
    """Write ``pattern`` as ``%.17g %.17g`` rows, optional ``# key = value`` header."""
    path = Path(path)
    rows = "".join(
        f"{t:.17g} {y:.17g}\n" for t, y in zip(pattern.theta.tolist(), pattern.intensity.tolist())
    )
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_header_lines(header))
        fh.write(rows)


def save_record(record: StageRecord, path):
    header = {"stage": record.stage.value, **record.metadata}
    save_pattern(record.pattern, path, header)
