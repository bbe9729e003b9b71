"""scikit-learn compatible wrappers around the processing stages.

Transformers take ``X`` of shape ``(n_profiles, n_points)``; each row is
one profile on a shared uniform grid. :class:`HLSVDRegressor` follows the
regressor convention instead: ``X`` is the single-column angle grid and
``y`` the intensities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import MIN_POINTS, Pattern
from .deblur import DeblurProblem, deblur_full_pattern, richardson_lucy
from .exceptions import DomainError, SizeError
from .hlsvd import hlsvd_fit, reconstruct
from .morphology import estimate_background
from .wavelet import daubechies_filter, default_levels, denoise

__all__ = [
    "check_profiles",
    "check_grid",
    "WaveletDenoiser",
    "MorphologicalBackground",
    "HLSVDRegressor",
    "RichardsonLucyDeblurrer",
    "StandardDeblurrer",
]


def check_profiles(X, *, nonnegative=False, n_points=None):
    """Validate a 2-D stack of profiles and return it as a float array."""
    X = check_array(X, dtype=np.float64, ensure_min_features=MIN_POINTS)
    if n_points is not None and X.shape[1] != n_points:
        raise SizeError(f"expected profiles of {n_points} points, got {X.shape[1]}")
    if nonnegative and np.any(X < 0):
        raise DomainError("profiles must be non-negative")
    return X


def check_grid(X):
    """Validate a single-column angle grid; returns ``(theta, step)``."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=MIN_POINTS)
    if X.shape[1] != 1:
        raise SizeError("the angle grid must be a single column")
    theta = X[:, 0]
    p = Pattern(theta, np.zeros_like(theta))
    return p.theta, p.step


def _pattern(row, theta0, step):
    return Pattern.from_grid(theta0, step, row)


class _ProfileTransformer(TransformerMixin, BaseEstimator):
    theta0 = 0.0
    step = 1.0

    def fit(self, X, y=None):
        X = check_profiles(X)
        self.n_features_in_ = X.shape[1]
        return self

    def _rows(self, X, **kw):
        check_is_fitted(self, "n_features_in_")
        return check_profiles(X, n_points=self.n_features_in_, **kw)


class WaveletDenoiser(_ProfileTransformer):
    """Soft-threshold Daubechies denoising of each profile."""

    def __init__(self, order=2, levels=None):
        self.order = order
        self.levels = levels

    def fit(self, X, y=None):
        super().fit(X)
        self.basis_ = daubechies_filter(self.order)
        self.levels_ = self.levels if self.levels is not None else default_levels(self.n_features_in_)
        return self

    def split(self, X):
        """Return ``(denoised, noise)`` arrays."""
        X = self._rows(X)
        clean = np.empty_like(X)
        noise = np.empty_like(X)
        for i, row in enumerate(X):
            d, n = denoise(_pattern(row, self.theta0, self.step), self.basis_, self.levels_)
            clean[i], noise[i] = d.intensity, n.intensity
        return clean, noise

    def transform(self, X):
        return self.split(X)[0]


class MorphologicalBackground(_ProfileTransformer):
    """Subtract the grey-scale opening background from each profile."""

    def __init__(self, radius=3):
        self.radius = radius

    def background(self, X):
        X = self._rows(X)
        return np.vstack(
            [estimate_background(_pattern(r, self.theta0, self.step), self.radius)[0].intensity
             for r in X]
        )

    def transform(self, X):
        X = self._rows(X)
        return np.vstack(
            [estimate_background(_pattern(r, self.theta0, self.step), self.radius)[1].intensity
             for r in X]
        )


class RichardsonLucyDeblurrer(_ProfileTransformer):
    """Damped Richardson-Lucy deconvolution of each profile by one kernel."""

    def __init__(self, psf=None, iterations=5, damping_threshold=0.0):
        self.psf = psf
        self.iterations = iterations
        self.damping_threshold = damping_threshold

    def fit(self, X, y=None):
        super().fit(X)
        if self.psf is None:
            raise DomainError("a PSF is required")
        psf = np.asarray(self.psf, dtype=float)
        if psf.ndim != 1 or psf.size == 0:
            raise SizeError("psf must be a non-empty 1-D array")
        self.psf_ = psf
        return self

    def transform(self, X):
        X = self._rows(X, nonnegative=True)
        out = np.empty_like(X)
        psf = Pattern.from_grid(0.0, 1.0, np.pad(self.psf_, (0, max(0, MIN_POINTS - self.psf_.size))))
        for i, row in enumerate(X):
            problem = DeblurProblem(_pattern(row, 0.0, 1.0), psf, self.iterations, self.damping_threshold)
            out[i] = richardson_lucy(problem).intensity
        return out


class StandardDeblurrer(_ProfileTransformer):
    """Range-wise deblurring against a background-free instrumental standard."""

    def __init__(self, standard=None, iterations=5, damping_threshold=0.0, prominence=0.05):
        self.standard = standard
        self.iterations = iterations
        self.damping_threshold = damping_threshold
        self.prominence = prominence

    def fit(self, X, y=None):
        super().fit(X)
        if self.standard is None:
            raise DomainError("an instrumental standard is required")
        std = check_profiles(np.atleast_2d(self.standard), nonnegative=True,
                             n_points=self.n_features_in_)[0]
        self.standard_ = _pattern(std, self.theta0, self.step)
        return self

    def transform(self, X):
        X = self._rows(X, nonnegative=True)
        out = np.empty_like(X)
        ranges = None
        for i, row in enumerate(X):
            d, ranges = deblur_full_pattern(
                _pattern(row, self.theta0, self.step), self.standard_,
                self.iterations, self.damping_threshold, self.prominence, ranges,
            )
            out[i] = d.intensity
        self.ranges_ = ranges
        return out


class HLSVDRegressor(RegressorMixin, BaseEstimator):
    """Damped-sinusoid model of intensity versus angle."""

    def __init__(self, n_components="auto", method="real", seed=0):
        self.n_components = n_components
        self.method = method
        self.seed = seed

    def fit(self, X, y):
        theta, step = check_grid(X)
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), ensure_min_samples=MIN_POINTS)[:, 0]
        if y.size != theta.size:
            raise SizeError("X and y lengths differ")
        self.model_ = hlsvd_fit(Pattern(theta, y, step), self.n_components,
                                method=self.method, seed=self.seed)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 1:
            raise SizeError("the angle grid must be a single column")
        return reconstruct(self.model_, X[:, 0])
