"""Synthetic patterns with known components, plus brute-force reference oracles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MIN_POINTS, Pattern, Stage, StageRecord, save_pattern
from .exceptions import DomainError, SizeError
from .hlsvd import SinusoidComponent, SinusoidModel, reconstruct

__all__ = [
    "GaussianPeak",
    "SynthSpec",
    "SynthTruth",
    "gaussian",
    "synth_pattern",
    "dense_hankel_svd",
    "interp_background",
    "DENSE_CAP",
]

DENSE_CAP = 512
_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class GaussianPeak:
    center: float
    height: float
    fwhm: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise DomainError(f"FWHM must be positive, got {self.fwhm}")


def gaussian(theta, peak: GaussianPeak):
    sigma = peak.fwhm * _FWHM_TO_SIGMA
    return peak.height * np.exp(-0.5 * ((np.asarray(theta) - peak.center) / sigma) ** 2)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic profile.

    ``background`` holds polynomial coefficients in increasing degree of
    ``theta - theta0``. ``noise`` is ``"gaussian"`` (additive, std
    ``noise_sigma``) or ``"poisson"`` (counts drawn around the clean profile).
    """

    N: int
    theta0: float = 10.0
    step: float = 0.01
    peaks: tuple = ()
    model: SinusoidModel | None = None
    background: tuple = ()
    noise_sigma: float = 0.0
    noise: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.N < MIN_POINTS:
            raise SizeError(f"N must be >= {MIN_POINTS}")
        if not self.step > 0:
            raise DomainError("step must be positive")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        if self.noise not in ("gaussian", "poisson"):
            raise DomainError(f"unknown noise model {self.noise!r}")
        object.__setattr__(
            self,
            "peaks",
            tuple(p if isinstance(p, GaussianPeak) else GaussianPeak(**p) for p in self.peaks),
        )
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))

    @property
    def theta(self):
        return self.theta0 + self.step * np.arange(self.N)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model = d.pop("sinusoids", None)
        if model is not None:
            comps = [SinusoidComponent(**c) for c in model]
            d["model"] = SinusoidModel(tuple(comps), d.get("theta0", 10.0), d.get("step", 0.01))
        d["peaks"] = tuple(GaussianPeak(**p) for p in d.get("peaks", ()))
        d["background"] = tuple(d.get("background", ()))
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Noise-free parts of a synthetic profile."""

    peaks: Pattern
    background: Pattern
    clean: Pattern
    noise: Pattern
    metadata: dict = field(default_factory=dict)

    def records(self):
        """Ideal output of each stage, keyed by stage."""
        meta = {k: str(v) for k, v in self.metadata.items()}
        return {
            Stage.DENOISED: StageRecord(Stage.DENOISED, self.clean, meta),
            Stage.BACKGROUND: StageRecord(Stage.BACKGROUND, self.background, meta),
            Stage.BACKGROUND_FREE: StageRecord(Stage.BACKGROUND_FREE, self.peaks, meta),
        }

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("peaks", "background", "clean", "noise"):
            save_pattern(getattr(self, name), directory / f"{name}.xy")


def synth_pattern(spec: SynthSpec):
    """Return ``(pattern, truth)`` for ``spec``; deterministic in ``spec.seed``."""
    theta = spec.theta
    peaks = np.zeros(spec.N)
    for p in spec.peaks:
        peaks += gaussian(theta, p)
    if spec.model is not None:
        peaks += reconstruct(spec.model, theta)
    t = theta - spec.theta0
    bg = np.zeros(spec.N)
    for power, c in enumerate(spec.background):
        bg += c * t**power
    clean = peaks + bg
    rng = np.random.default_rng(spec.seed)
    if spec.noise == "poisson":
        if np.any(clean < 0):
            raise DomainError("Poisson noise needs a non-negative clean profile")
        observed = rng.poisson(clean).astype(float)
    elif spec.noise_sigma > 0:
        observed = clean + spec.noise_sigma * rng.standard_normal(spec.N)
    else:
        observed = clean.copy()
    mk = lambda y: Pattern(theta, y, spec.step)  # noqa: E731
    truth = SynthTruth(
        mk(peaks), mk(bg), mk(clean), mk(observed - clean), {"seed": spec.seed}
    )
    return mk(observed), truth


def dense_hankel_svd(signal):
    """Explicit ``H[i, j] = s[i + j]`` factored by LAPACK; small inputs only."""
    s = np.asarray(signal)
    n = s.size
    if n > DENSE_CAP:
        raise DomainError(f"dense Hankel SVD is capped at N={DENSE_CAP}, got {n}")
    if n < 2:
        raise SizeError("signal too short")
    L = (n + 2) // 2
    M = n + 1 - L
    H = s[np.arange(L)[:, None] + np.arange(M)[None, :]]
    return np.linalg.svd(H)


def interp_background(pattern: Pattern, anchors) -> Pattern:
    """Piecewise-linear background through the pattern values at ``anchors``.

    Each anchor is snapped to its nearest grid sample; beyond the outer
    anchors the background is held constant.
    """
    anchors = np.asarray(anchors, dtype=float)
    if anchors.size < 2:
        raise DomainError("at least two anchors are required")
    if np.any(np.diff(anchors) <= 0):
        raise DomainError("anchors must be strictly increasing")
    th = pattern.theta
    if anchors[0] < th[0] - 0.5 * pattern.step or anchors[-1] > th[-1] + 0.5 * pattern.step:
        raise DomainError("anchors must lie within the pattern's angular range")
    idx = np.clip(np.rint((anchors - th[0]) / pattern.step).astype(int), 0, len(th) - 1)
    bg = np.interp(th, th[idx], pattern.intensity[idx])
    return pattern.with_intensity(bg)
