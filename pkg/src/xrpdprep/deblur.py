"""Damped Richardson-Lucy removal of instrumental broadening.

The kernel is a peak of the annealed instrumental standard. Each peak
range of the standard supplies its own unit-sum kernel; the full sample
is deconvolved with it and only the samples inside that range are kept.
Everything outside the ranges is passed through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, find_peaks

from .core import GRID_RTOL, MIN_POINTS, Pattern, check_same_grid
from .exceptions import DomainError, GridError

__all__ = [
    "PeakRange",
    "DeblurProblem",
    "Kernel",
    "make_kernel",
    "convolve",
    "correlate",
    "richardson_lucy",
    "rl_step",
    "extract_peak_ranges",
    "deblur_full_pattern",
    "reconvolve_check",
    "ReconvolveResult",
    "fwhm",
]

DEFAULT_ITERATIONS = 5
EDGE_FRACTION = 0.01
DIRECT_MAX = 128  # kernel length up to which convolution is done by direct sums


@dataclass(frozen=True)
class PeakRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"peak range needs lo < hi, got [{self.lo}, {self.hi}]")

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi}


@dataclass(frozen=True, eq=False)
class Kernel:
    """Unit-sum kernel with the index of its (rounded) centroid."""

    weights: np.ndarray
    center: int


def make_kernel(psf) -> Kernel:
    w = np.asarray(psf.intensity if isinstance(psf, Pattern) else psf, dtype=float)
    if np.any(w < 0):
        raise DomainError("PSF intensities must be non-negative")
    total = w.sum()
    if not total > 0:
        raise DomainError("PSF must have a positive sum")
    w = w / total
    centroid = float(np.arange(w.size) @ w)
    return Kernel(w, int(np.floor(centroid + 0.5)))


def _fold_index(n, k):
    # grid position of each full-convolution output, mirrored back inside [0, n)
    t = np.arange(n + k.weights.size - 1) - k.center
    period = 2 * n
    t = np.mod(t, period)
    return np.where(t < n, t, period - 1 - t)


def _kernel_for(psf, step=None):
    if isinstance(psf, Kernel):
        return psf
    if isinstance(psf, Pattern) and step is not None:
        if abs(psf.step - step) > GRID_RTOL * step:
            raise GridError(f"PSF step {psf.step!r} differs from pattern step {step!r}")
    return make_kernel(psf)


def _lin_conv(a, w, mode="full"):
    # direct sums for short kernels (exact for a delta), FFT otherwise
    if w.size <= DIRECT_MAX:
        return np.convolve(a, w, mode=mode)
    out = fftconvolve(a, w, mode=mode)
    if a.min() >= 0:
        np.maximum(out, 0.0, out=out)  # FFT round-off below zero
    return out


def _conv_array(f, k: Kernel):
    full = _lin_conv(f, k.weights)
    return np.bincount(_fold_index(f.size, k), weights=full, minlength=f.size)


def _corr_array(y, k: Kernel):
    ext = y[_fold_index(y.size, k)]
    return _lin_conv(ext, k.weights[::-1], mode="valid")


def convolve(f, psf):
    """Blur ``f`` with the unit-sum PSF centred on its centroid.

    The product is a zero-padded linear convolution (direct for short
    kernels, FFT for long ones); flux leaving the grid
    at either end is mirrored back in, so every column of the operator
    sums to one and the total intensity is conserved.
    """
    if isinstance(f, Pattern):
        k = _kernel_for(psf, f.step)
        return f.with_intensity(_conv_array(f.intensity, k))
    return _conv_array(np.asarray(f, dtype=float), _kernel_for(psf))


def correlate(y, psf):
    """Adjoint of :func:`convolve`."""
    if isinstance(y, Pattern):
        k = _kernel_for(psf, y.step)
        return y.with_intensity(_corr_array(y.intensity, k))
    return _corr_array(np.asarray(y, dtype=float), _kernel_for(psf))


@dataclass(frozen=True, eq=False)
class DeblurProblem:
    blurred: Pattern
    psf: Pattern
    iterations: int = DEFAULT_ITERATIONS
    damping_threshold: float = 0.0

    def __post_init__(self):
        if abs(self.blurred.step - self.psf.step) > GRID_RTOL * self.blurred.step:
            raise GridError("blurred pattern and PSF must share the grid step")
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")
        if not self.damping_threshold >= 0:
            raise DomainError("damping threshold must be >= 0")
        make_kernel(self.psf)


def _damping_weight(misfit, threshold):
    if threshold == 0:
        return 1.0
    # 0 at or below the threshold, ramping linearly to 1 at twice it
    return np.clip(misfit / threshold - 1.0, 0.0, 1.0)


def rl_step(f, g, psf, damping_threshold=0.0, *, flux=None):
    """One damped multiplicative update of the estimate ``f`` against data ``g``.

    ``f <- f * correlate(g / convolve(f))``. Where the reblurred estimate is
    within ``damping_threshold`` of the data the update factor is held at
    1, blending linearly to the full factor at twice the threshold; a
    damped estimate is rescaled to ``flux`` (default ``sum(g)``).
    """
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    k = _kernel_for(psf)
    guard = 1e-12 * g.max()
    reblurred = _conv_array(f, k)
    factor = _corr_array(g / np.maximum(reblurred, guard), k)
    T = float(damping_threshold)
    if T > 0:
        w = _damping_weight(np.abs(reblurred - g), T)
        factor = 1.0 + w * (factor - 1.0)
    out = np.maximum(f * factor, 0.0)
    if T > 0 and out.sum() > 0:
        out *= (g.sum() if flux is None else flux) / out.sum()
    return out


def richardson_lucy(problem: DeblurProblem, *, callback=None) -> Pattern:
    """Damped Richardson-Lucy iterations from a uniform start.

    Each iteration is one :func:`rl_step`. ``callback(n, f)`` is called
    after every iteration.
    """
    g = problem.blurred.intensity
    if np.any(g < 0):
        raise DomainError("blurred pattern has negative intensities")
    if not g.max() > 0:
        raise DomainError("blurred pattern is identically zero")
    k = make_kernel(problem.psf)
    flux = g.sum()
    f = np.full(g.size, flux / g.size)
    for n in range(1, problem.iterations + 1):
        f = rl_step(f, g, k, problem.damping_threshold, flux=flux)
        if callback is not None:
            callback(n, f.copy())
    return problem.blurred.with_intensity(f)


def extract_peak_ranges(standard: Pattern, prominence: float = 0.05) -> list:
    """Disjoint angular windows around the peaks of the instrumental standard.

    Peaks are local maxima above ``prominence * max``, taken tallest first.
    Each window is symmetric about its maximum with half-width set by the
    farther of the two points where the profile falls below 1% of the
    peak height, then clipped so it never enters a window already taken.
    """
    y = standard.intensity
    if np.any(y < 0):
        raise DomainError("standard must be non-negative")
    if not 0 <= prominence <= 1:
        raise DomainError("prominence is a fraction of the maximum in [0, 1]")
    top = y.max()
    if not top > 0:
        return []
    n = y.size
    peaks, _ = find_peaks(np.concatenate([[-np.inf], y, [-np.inf]]), height=prominence * top)
    peaks = peaks - 1
    peaks = peaks[np.argsort(-y[peaks], kind="stable")]
    taken = np.zeros(n, dtype=bool)
    spans = []
    for p in peaks:
        if taken[p]:
            continue
        floor = EDGE_FRACTION * y[p]
        left = p
        while left > 0 and y[left - 1] >= floor:
            left -= 1
        right = p
        while right < n - 1 and y[right + 1] >= floor:
            right += 1
        half = max(p - left, right - p, 1)
        lo, hi = max(p - half, 0), min(p + half, n - 1)
        # stop at any window already claimed
        blocked = np.flatnonzero(taken[lo : p + 1])
        if blocked.size:
            lo = lo + blocked[-1] + 1
        blocked = np.flatnonzero(taken[p : hi + 1])
        if blocked.size:
            hi = p + blocked[0] - 1
        if hi <= lo:
            continue
        taken[lo : hi + 1] = True
        spans.append((lo, hi))
    spans.sort()
    th = standard.theta
    return [PeakRange(float(th[a]), float(th[b])) for a, b in spans]


def _range_indices(pattern, r: PeakRange):
    return pattern.index_range(r.lo, r.hi)


def _local_psf(standard: Pattern, i0, i1) -> Pattern:
    # a very narrow range is widened evenly so the kernel is a valid Pattern
    short = max(0, MIN_POINTS - (i1 - i0 + 1))
    a = max(0, i0 - (short + 1) // 2)
    b = min(len(standard) - 1, i1 + (short + 1) // 2)
    return Pattern(standard.theta[a : b + 1], standard.intensity[a : b + 1], standard.step)


def deblur_full_pattern(
    sample: Pattern,
    standard: Pattern,
    iterations: int = DEFAULT_ITERATIONS,
    damping: float = 0.0,
    prominence: float = 0.05,
    ranges=None,
):
    """Range-wise deconvolution of the whole sample by the standard's peaks.

    Returns ``(deblurred, ranges)``. Samples outside every range are copied
    from ``sample``.
    """
    check_same_grid(sample, standard)
    sample.require_nonnegative("sample")
    standard.require_nonnegative("standard")
    if ranges is None:
        ranges = extract_peak_ranges(standard, prominence)
    if not ranges:
        raise DomainError(
            "no peak ranges found in the instrumental standard; "
            "check that it is background-free and lower the prominence"
        )
    out = sample.intensity.copy()
    for r in ranges:
        i0, i1 = _range_indices(standard, r)
        psf = _local_psf(standard, i0, i1)
        if not psf.intensity.sum() > 0:
            continue
        restored = richardson_lucy(DeblurProblem(sample, psf, iterations, damping))
        out[i0 : i1 + 1] = restored.intensity[i0 : i1 + 1]
    return sample.with_intensity(out), list(ranges)


@dataclass(frozen=True, eq=False)
class ReconvolveResult:
    residue: Pattern
    reconvolved: Pattern
    in_range: np.ndarray
    stats: dict


def reconvolve_check(
    deblurred: Pattern,
    standard: Pattern,
    background: Pattern,
    noise: Pattern,
    original: Pattern,
    *,
    prominence: float = 0.05,
    ranges=None,
) -> ReconvolveResult:
    """Residue ``original - (standard * deblurred + background + noise)`` per range.

    The residue is zero outside the peak ranges. ``stats`` holds the RMS of
    the full residue vector, the in-range RMS and max, and the in-range RMS
    relative to the original's in-range RMS.
    """
    check_same_grid(original, deblurred, standard, background, noise)
    if ranges is None:
        ranges = extract_peak_ranges(standard, prominence)
    model = np.zeros(len(original))
    mask = np.zeros(len(original), dtype=bool)
    for r in ranges:
        i0, i1 = _range_indices(standard, r)
        psf = _local_psf(standard, i0, i1).intensity
        if not psf.sum() > 0:
            continue
        blurred = _conv_array(deblurred.intensity, make_kernel(psf))
        model[i0 : i1 + 1] = blurred[i0 : i1 + 1]
        mask[i0 : i1 + 1] = True
    rebuilt = model + background.intensity + noise.intensity
    residue = np.where(mask, original.intensity - rebuilt, 0.0)
    inside = residue[mask]
    orig_in = original.intensity[mask]
    rms_in = float(np.sqrt(np.mean(inside**2))) if inside.size else 0.0
    orig_rms = float(np.sqrt(np.mean(orig_in**2))) if orig_in.size else 0.0
    stats = {
        "rms": float(np.sqrt(np.mean(residue**2))),
        "rms_in_range": rms_in,
        "max_abs": float(np.abs(residue).max()),
        "original_rms_in_range": orig_rms,
        "relative_rms": rms_in / orig_rms if orig_rms > 0 else 0.0,
        "n_in_range": int(mask.sum()),
    }
    return ReconvolveResult(
        original.with_intensity(residue),
        original.with_intensity(np.where(mask, rebuilt, original.intensity)),
        mask,
        stats,
    )


def fwhm(y, step=1.0):
    """Full width at half maximum of the dominant peak, linearly interpolated."""
    y = np.asarray(y, dtype=float)
    p = int(np.argmax(y))
    half = y[p] / 2.0
    left = p
    while left > 0 and y[left - 1] > half:
        left -= 1
    right = p
    while right < y.size - 1 and y[right + 1] > half:
        right += 1
    if left > 0:
        xl = left - (y[left] - half) / (y[left] - y[left - 1])
    else:
        xl = float(left)
    if right < y.size - 1:
        xr = right + (y[right] - half) / (y[right] - y[right + 1])
    else:
        xr = float(right)
    return (xr - xl) * step
