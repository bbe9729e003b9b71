"""Daubechies wavelet filters, periodic pyramid DWT and soft-threshold denoising."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Pattern
from .exceptions import DomainError, NumericalError, SizeError

__all__ = [
    "WaveletBasis",
    "WaveletCoeffs",
    "daubechies_filter",
    "dwt",
    "idwt",
    "estimate_noise_sigma",
    "soft_threshold",
    "default_levels",
    "denoise",
    "MAD_SCALE",
]

MAD_SCALE = 0.6745

# Rounded extremal-phase coefficients (sum c_k = 2); refined by Newton below.
_STARTING_VALUES = {
    1: [1.0, 1.0],
    2: [0.683013, 1.183013, 0.316987, -0.183013],
    3: [0.470467, 1.141117, 0.650365, -0.190934, -0.120832, 0.049817],
    4: [0.325803, 1.010946, 0.8922, -0.039575, -0.264507, 0.043616, 0.046504, -0.014987],
    5: [0.226419, 0.853944, 1.024327, 0.195767, -0.342657, -0.045601, 0.109703,
        -0.008827, -0.017792, 0.004717],
    6: [0.157742, 0.699504, 1.062264, 0.445831, -0.319987, -0.183518, 0.137888,
        0.038923, -0.044664, 0.000783, 0.006756, -0.001524],
}

# Hoelder regularity of the Daubechies scaling function (order 1 is Haar).
REGULARITY = {1: 0.0, 2: 0.500, 3: 0.915, 4: 1.275, 5: 1.596, 6: 1.888}


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    """Low/high-pass pair normalised so that ``sum(lowpass**2) == 2``."""

    order: int
    lowpass: np.ndarray
    highpass: np.ndarray
    regularity: float = float("nan")

    @property
    def length(self):
        return self.lowpass.size

    @property
    def analysis_filters(self):
        """Orthonormal (unit-energy) versions of the two filters."""
        s = np.sqrt(2.0)
        return self.lowpass / s, self.highpass / s


@dataclass(frozen=True, eq=False)
class WaveletCoeffs:
    """Pyramid coefficients, details ordered coarse to fine."""

    levels: int
    approx: np.ndarray
    details: tuple

    @property
    def size(self):
        return self.approx.size + sum(d.size for d in self.details)

    def as_vector(self):
        """All coefficients concatenated by increasing frequency."""
        return np.concatenate([self.approx, *self.details])

    def finest(self):
        return self.details[-1]


def _constraints(c, order):
    k = np.arange(c.size)
    sign = (-1.0) ** k
    f = np.empty(2 * order)
    jac = np.zeros((2 * order, c.size))
    for m in range(order):
        row = sign * k.astype(float) ** m
        f[m] = row @ c
        jac[m] = row
    for m in range(order):
        s = 2 * m
        f[order + m] = c[: c.size - s] @ c[s:] - (2.0 if m == 0 else 0.0)
        jrow = np.zeros(c.size)
        jrow[: c.size - s] += c[s:]
        jrow[s:] += c[: c.size - s]
        jac[order + m] = jrow
    return f, jac


def daubechies_filter(order: int) -> WaveletBasis:
    """Daubechies filter pair of the given order, solved from its constraints.

    The low-pass coefficients ``c_k`` (``k = 0 .. 2*order-1``) satisfy
    ``order`` vanishing moments ``sum (-1)^k k^m c_k = 0`` and the
    double-shift orthogonality ``sum c_k c_{k+2m} = 2 delta_{m0}``. The
    system is solved by Newton iteration from tabulated rounded values.
    The high-pass filter is ``b_k = (-1)^k c_{2N-1-k}``.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= 6:
        raise DomainError(f"Daubechies order must be an integer in 1..6, got {order!r}")
    order = int(order)
    c = np.array(_STARTING_VALUES[order], dtype=float)
    for _ in range(50):
        f, jac = _constraints(c, order)
        if np.max(np.abs(f)) < 1e-15:
            break
        c = c - np.linalg.solve(jac, f)
    f, _ = _constraints(c, order)
    if np.max(np.abs(f)) > 1e-12:
        raise NumericalError(f"Daubechies order {order} constraints did not converge")
    k = np.arange(c.size)
    b = (-1.0) ** k * c[::-1]
    c.setflags(write=False)
    b.setflags(write=False)
    return WaveletBasis(order, c, b, REGULARITY[order])


def _periodic_index(n, flen):
    half = n // 2
    return (2 * np.arange(half)[:, None] + np.arange(flen)[None, :]) % n


def dwt(signal, basis: WaveletBasis, levels: int) -> WaveletCoeffs:
    """Periodised pyramid transform of ``signal`` over ``levels`` octaves."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise SizeError("dwt expects a 1-D signal")
    if levels < 1:
        raise DomainError("levels must be >= 1")
    if x.size == 0 or x.size % (2**levels):
        raise SizeError(f"length {x.size} is not divisible by 2**{levels}")
    h, g = basis.analysis_filters
    details = []
    a = x
    for _ in range(levels):
        idx = _periodic_index(a.size, h.size)
        blocks = a[idx]
        details.append(blocks @ g)
        a = blocks @ h
    return WaveletCoeffs(levels, a, tuple(reversed(details)))


def idwt(coeffs: WaveletCoeffs, basis: WaveletBasis) -> np.ndarray:
    """Inverse of :func:`dwt`."""
    if len(coeffs.details) != coeffs.levels:
        raise SizeError(
            f"expected {coeffs.levels} detail levels, got {len(coeffs.details)}"
        )
    h, g = basis.analysis_filters
    a = np.asarray(coeffs.approx, dtype=float)
    for d in coeffs.details:
        d = np.asarray(d, dtype=float)
        if d.size != a.size:
            raise SizeError(f"detail level of length {d.size} does not match approx {a.size}")
        n = 2 * a.size
        idx = _periodic_index(n, h.size)
        out = np.zeros(n)
        np.add.at(out, idx, a[:, None] * h + d[:, None] * g)
        a = out
    return a


def estimate_noise_sigma(coeffs: WaveletCoeffs) -> float:
    """Median-absolute-deviation noise level from the finest detail level."""
    if not coeffs.details:
        raise SizeError("no detail levels present")
    fine = np.asarray(coeffs.finest())
    if fine.size == 0:
        raise SizeError("finest detail level is empty")
    return float(np.median(np.abs(fine)) / MAD_SCALE)


def soft_threshold(x, t):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def default_levels(n: int) -> int:
    return max(1, min(4, int(np.floor(np.log2(n))) - 2))


def denoise(pattern: Pattern, basis: WaveletBasis | None = None, levels: int | None = None):
    """Universal soft-threshold denoising.

    Returns ``(denoised, noise)`` with ``denoised + noise`` equal to the
    input. Non-dyadic lengths are symmetrically padded for the transform
    and trimmed afterwards. Every detail level is shrunk by
    ``sigma * sqrt(2 ln n)``; the approximation is left untouched.
    """
    if basis is None:
        basis = daubechies_filter(2)
    y = pattern.intensity
    n = y.size
    if levels is None:
        levels = default_levels(n)
    if levels < 1:
        raise DomainError("levels must be >= 1")
    if 2**levels > n:
        raise DomainError(f"{levels} levels exceed log2 of the pattern length {n}")
    block = 2**levels
    padded_n = -(-n // block) * block
    pad = padded_n - n
    x = np.pad(y, (0, pad), mode="symmetric") if pad else y
    coeffs = dwt(x, basis, levels)
    sigma = estimate_noise_sigma(coeffs)
    t = sigma * np.sqrt(2.0 * np.log(padded_n))
    shrunk = WaveletCoeffs(
        levels, coeffs.approx, tuple(soft_threshold(d, t) for d in coeffs.details)
    )
    clean = idwt(shrunk, basis)[:n]
    noise = y - clean
    return pattern.with_intensity(clean), pattern.with_intensity(noise)
