"""Damped-sinusoid fitting through a truncated SVD of the data Hankel matrix.

The profile is modelled as

    I_n ~= sum_k a_k exp(-d_k t_n) cos(2 pi f_k t_n + phi_k),  t_n = theta_n - theta_0

The signal poles are read off the shift invariance of the dominant right
singular vectors of ``H[i, j] = s[i + j]``; amplitudes and phases follow
from a linear least-squares fit on the sampled grid.

The default route works on the real samples directly, where every cosine
contributes a conjugate pole pair that is folded back into a single
component. ``method="analytic"`` fits the FFT analytic signal instead,
one pole per cosine.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from .core import Pattern
from .exceptions import DomainError, NumericalError, SizeError

__all__ = [
    "SinusoidComponent",
    "SinusoidModel",
    "HankelOperator",
    "PartialSVD",
    "Mode",
    "analytic_signal",
    "hankel_operator",
    "lanczos_bidiag",
    "select_rank",
    "estimate_modes",
    "fit_amplitudes",
    "hlsvd_fit",
    "reconstruct",
    "wrap_phase",
]

log = logging.getLogger(__name__)

AUTO_RANK_LIMIT = 20
RANK_RTOL = 1e-12
CONDITION_WARN = 1e8


def wrap_phase(phi):
    """Map angles into ``(-pi, pi]``."""
    return -np.mod(-np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) + np.pi


@dataclass(frozen=True)
class SinusoidComponent:
    amplitude: float
    damping: float
    frequency: float
    phase: float

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise DomainError(f"amplitude must be non-negative, got {self.amplitude!r}")
        if not np.isfinite(self.damping):
            raise DomainError("damping must be finite")

    @property
    def growing(self) -> bool:
        """Pole outside the unit circle (negative damping)."""
        return self.damping < 0


@dataclass(frozen=True, eq=False)
class SinusoidModel:
    """Sum of damped cosines, sorted by frequency then damping.

    Angles enter the model as ``theta - theta0``; with ``theta0 = 0`` the
    parameters refer to absolute 2-theta.
    """

    components: tuple
    theta0: float = 0.0
    step: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise SizeError("a sinusoid model needs at least one component")
        comps = tuple(sorted(comps, key=lambda c: (c.frequency, c.damping)))
        object.__setattr__(self, "components", comps)

    def __len__(self):
        return len(self.components)

    @property
    def K(self):
        return len(self.components)

    def parameters(self):
        """``(K, 4)`` array of amplitude, damping, frequency, phase."""
        return np.array(
            [[c.amplitude, c.damping, c.frequency, c.phase] for c in self.components]
        )

    def to_dict(self):
        return {
            "theta0": self.theta0,
            "step": self.step,
            "K": self.K,
            "components": [
                {
                    "amplitude": c.amplitude,
                    "damping": c.damping,
                    "frequency": c.frequency,
                    "phase": c.phase,
                    "growing": c.growing,
                }
                for c in self.components
            ],
            **self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        comps = [
            SinusoidComponent(c["amplitude"], c["damping"], c["frequency"], c["phase"])
            for c in d["components"]
        ]
        meta = {k: v for k, v in d.items() if k not in ("theta0", "step", "K", "components")}
        return cls(tuple(comps), d.get("theta0", 0.0), d.get("step", 1.0), meta)


def reconstruct(model: SinusoidModel, theta) -> np.ndarray:
    """Evaluate the model on ``theta`` (angles measured from ``model.theta0``)."""
    t = np.asarray(theta, dtype=float) - model.theta0
    out = np.zeros(t.shape)
    with np.errstate(divide="ignore"):
        for c in model.components:
            if c.amplitude == 0:
                continue
            env = np.exp(np.log(c.amplitude) - c.damping * t)
            out += env * np.cos(2 * np.pi * c.frequency * t + c.phase)
    return out


def analytic_signal(pattern: Pattern) -> np.ndarray:
    """Discrete analytic signal: keep DC/Nyquist, double positive frequencies."""
    x = pattern.intensity if isinstance(pattern, Pattern) else np.asarray(pattern, float)
    n = x.size
    spec = sfft.fft(x)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    return sfft.ifft(spec * h)


class HankelOperator:
    """Matrix-free ``L x M`` Hankel matrix ``H[i, j] = s[i + j]``.

    Products with ``H`` and ``H^H`` are linear convolutions evaluated by
    zero-padded FFTs, O((L+M) log(L+M)) each.
    """

    def __init__(self, signal):
        s = np.asarray(signal)
        if s.ndim != 1 or s.size < 8:
            raise SizeError("Hankel embedding needs a 1-D signal of at least 8 samples")
        self.is_real = not np.iscomplexobj(s)
        self.signal = s.astype(float if self.is_real else complex)
        n = s.size
        self.L = (n + 2) // 2  # ceil((N + 1) / 2)
        self.M = n + 1 - self.L
        self._nfft = sfft.next_fast_len(n + max(self.L, self.M) - 1)
        self._spec = sfft.fft(self.signal, self._nfft)

    @property
    def shape(self):
        return (self.L, self.M)

    @property
    def N(self):
        return self.signal.size

    def _apply(self, x, rows, cols):
        conv = sfft.ifft(self._spec * sfft.fft(x[::-1], self._nfft))
        out = conv[cols - 1 : cols - 1 + rows]
        return out.real if self.is_real and not np.iscomplexobj(x) else out

    def matvec(self, x):
        x = np.asarray(x)
        if x.shape != (self.M,):
            raise SizeError(f"matvec expects length {self.M}, got {x.shape}")
        return self._apply(x, self.L, self.M)

    def rmatvec(self, y):
        y = np.asarray(y)
        if y.shape != (self.L,):
            raise SizeError(f"rmatvec expects length {self.L}, got {y.shape}")
        return np.conj(self._apply(np.conj(y), self.M, self.L))

    def dense(self):
        i = np.arange(self.L)[:, None]
        j = np.arange(self.M)[None, :]
        return self.signal[i + j]


def hankel_operator(signal) -> HankelOperator:
    return HankelOperator(signal)


@dataclass(frozen=True, eq=False)
class PartialSVD:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank_used: int
    breakdown: bool = False
    converged: bool = True
    steps: int = 0
    n_reorth: int = 0
    full_reorth: bool = False


def _reorth(Q, k, x):
    # two passes of classical Gram-Schmidt against the first k columns
    for _ in range(2):
        x = x - Q[:, :k] @ (Q[:, :k].conj().T @ x)
    return x


def lanczos_bidiag(
    op: HankelOperator,
    max_rank: int,
    reorth_threshold: float | None = None,
    *,
    tol: float = 1e-10,
    seed: int = 0,
    max_steps: int | None = None,
) -> PartialSVD:
    """Leading singular triplets by Golub-Kahan-Lanczos bidiagonalisation.

    Loss of orthogonality among the Lanczos vectors is tracked with the
    usual coupled recurrences; a vector is reorthogonalised only when the
    estimate exceeds ``reorth_threshold`` (default ``sqrt(eps)``), and the
    next vector of the same family is reorthogonalised with it. If more
    than half of the steps needed it, the remaining steps switch to full
    reorthogonalisation.

    The Krylov space grows until the residual bound of each of the first
    ``max_rank`` Ritz triplets drops below ``tol * s_1`` or the space is
    exhausted. A vanishing ``alpha``/``beta`` ends the process early with
    ``breakdown=True`` and the rank found so far.
    """
    L, M = op.shape
    kmax = min(L, M)
    if not 1 <= max_rank <= kmax:
        raise DomainError(f"max_rank must be in 1..{kmax}, got {max_rank}")
    eps = np.finfo(float).eps
    thresh = np.sqrt(eps) if reorth_threshold is None else float(reorth_threshold)
    if max_steps is not None:
        kmax = min(kmax, max_steps)
    dtype = float if op.is_real else complex
    small = max(L, M) * eps  # relative size of a vanishing alpha/beta

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M)
    if dtype is complex:
        v = v + 1j * rng.standard_normal(M)
    v = v / np.linalg.norm(v)

    U = np.zeros((L, kmax), dtype=dtype)
    V = np.zeros((M, kmax + 1), dtype=dtype)
    alpha = np.zeros(kmax)
    beta = np.zeros(kmax)
    V[:, 0] = v
    mu = np.zeros(kmax + 1)  # estimates |u_k^H u_j|
    nu = np.zeros(kmax + 1)  # estimates |v_k^H v_{j+1}|
    nu_prev = np.zeros(kmax + 1)
    nu[0] = 1.0
    anorm = 0.0
    force_u = force_v = False
    full = False
    n_reorth = 0
    reorth_steps = 0
    breakdown = False
    alpha_break = False
    converged = False
    k = 0

    def ritz(k):
        B = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1)
        P, s, Qt = np.linalg.svd(B)
        return P, s, Qt

    for j in range(kmax):
        step_reorth = False
        # ---- left vector
        r = op.matvec(V[:, j])
        if j > 0:
            r = r - beta[j - 1] * U[:, j - 1]
        a = np.linalg.norm(r)
        anorm = max(anorm, a, beta[j - 1] if j else 0.0)
        if a <= small * anorm or a == 0:
            breakdown = True
            alpha_break = j > 0
            k = j
            break
        # mu recurrence: u_k^H u_j for k < j
        mu_new = np.zeros(kmax + 1)
        if j > 0:
            ks = np.arange(j)
            nu_j = nu.copy()
            nu_j[j] = 1.0
            raw = beta[ks] * nu_j[ks + 1] + alpha[ks] * nu_j[ks] - beta[j - 1] * np.where(
                ks == j - 1, 1.0, mu[ks]
            )
            mu_new[:j] = (raw + np.where(raw >= 0, 1.0, -1.0) * eps * anorm) / a
        if full or force_u or (j > 0 and np.max(np.abs(mu_new[:j])) > thresh):
            if j > 0:
                r = _reorth(U, j, r)
                a = np.linalg.norm(r)
                mu_new[:j] = eps
                n_reorth += 1
                step_reorth = True
            force_u = not force_u and not full
        alpha[j] = a
        U[:, j] = r / a
        mu = mu_new
        mu[j] = 1.0

        # ---- right vector
        p = op.rmatvec(U[:, j]) - a * V[:, j]
        b = np.linalg.norm(p)
        anorm = max(anorm, b)
        ks = np.arange(j + 1)
        nu_j = nu.copy()
        nu_j[j] = 1.0
        mu_shift = np.concatenate([[0.0], mu[:j]])
        beta_shift = np.concatenate([[0.0], beta[:j]])
        raw = alpha[ks] * mu[ks] + beta_shift * mu_shift - a * nu_j[ks]
        if b > 0:
            nu_new = np.zeros(kmax + 1)
            nu_new[: j + 1] = (raw + np.where(raw >= 0, 1.0, -1.0) * eps * anorm) / b
        else:
            nu_new = np.zeros(kmax + 1)
        if full or force_v or np.max(np.abs(nu_new[: j + 1])) > thresh:
            p = _reorth(V, j + 1, p)
            b = np.linalg.norm(p)
            nu_new[: j + 1] = eps
            n_reorth += 1
            step_reorth = True
            force_v = not force_v and not full
        beta[j] = b
        nu_prev, nu = nu, nu_new
        reorth_steps += step_reorth
        if not full and j >= 4 and reorth_steps > (j + 1) / 2:
            full = True
        k = j + 1
        if b <= small * anorm:
            breakdown = True
            break
        V[:, j + 1] = p / b

        if k >= max_rank and (k == kmax or k % 5 == 0 or k == max_rank):
            P, s, Qt = ritz(k)
            resid = b * np.abs(P[k - 1, :max_rank])
            if np.all(resid <= tol * s[0]):
                converged = True
                break

    if k == 0:
        raise NumericalError("Lanczos breakdown on the first step: operator is zero")
    if alpha_break:
        # H^H U_k = V_{k+1} [B_k | beta_k e_k]^T holds exactly
        B = np.zeros((k, k + 1))
        B[np.arange(k), np.arange(k)] = alpha[:k]
        B[np.arange(k), np.arange(1, k + 1)] = beta[:k]
        P, s, Qt = np.linalg.svd(B, full_matrices=False)
        nv = k + 1
    else:
        P, s, Qt = ritz(k)
        nv = k
    if breakdown:
        converged = True
    keep = min(max_rank, k)
    s = s[:keep]
    positive = s > 0
    keep = int(np.count_nonzero(positive))
    Uk = U[:, :k] @ P[:, :keep]
    Vk = V[:, :nv] @ Qt.T[:, :keep]
    return PartialSVD(
        U=Uk,
        s=s[:keep],
        V=Vk,
        rank_used=keep,
        breakdown=breakdown,
        converged=converged or k == min(L, M),
        steps=k,
        n_reorth=n_reorth,
        full_reorth=full,
    )


class Mode(NamedTuple):
    frequency: float
    damping: float

    @property
    def growing(self) -> bool:
        return self.damping < 0


def select_rank(s, breakdown=False, limit=AUTO_RANK_LIMIT):
    """Rank at the largest ratio ``s[i] / s[i+1]`` among the leading values."""
    s = np.asarray(s, dtype=float)[:limit]
    if s.size == 0:
        raise SizeError("no singular values to select from")
    # round-off level values are exact zeros of the spectrum
    negligible = s <= RANK_RTOL * s[0]
    if np.any(negligible[1:]):
        s = s[: int(np.argmax(negligible[1:])) + 1]
        breakdown = True
    vals = s.tolist()
    if breakdown and len(vals) < limit:
        vals.append(0.0)  # exact rank reached: next value is zero
    if len(vals) == 1:
        return 1, []
    with np.errstate(divide="ignore"):
        a = np.array(vals[:-1])
        b = np.array(vals[1:])
        ratios = np.where(b > 0, a / np.where(b > 0, b, 1.0), np.inf)
    return int(np.argmax(ratios)) + 1, ratios.tolist()


def estimate_modes(svd: PartialSVD, K: int, step: float) -> list:
    """Poles from the shift equation ``V_top E^H ~= V_bottom``.

    ``V_top``/``V_bottom`` drop the last/first row of the ``K`` leading
    right singular vectors. Each eigenvalue ``z`` of ``E`` gives
    ``z = exp((-d + 2j pi f) * step)``.
    """
    if not step > 0:
        raise DomainError("step must be positive")
    if not 1 <= K <= svd.rank_used:
        raise DomainError(f"K={K} exceeds the available rank {svd.rank_used}")
    Vk = svd.V[:, :K]
    top, bottom = Vk[:-1], Vk[1:]
    X, _, rank, sv = np.linalg.lstsq(top, bottom, rcond=None)
    if rank < K or sv[-1] <= 0:
        cond = np.inf if sv[-1] <= 0 else sv[0] / sv[-1]
        raise NumericalError("shift equation is rank deficient", cond)
    z = np.conj(np.linalg.eigvals(X))
    if np.any(z == 0):
        raise NumericalError("zero pole in shift equation")
    freq = np.angle(z) / (2 * np.pi * step)
    damp = -np.log(np.abs(z)) / step
    modes = [Mode(float(f), float(d)) for f, d in zip(freq, damp)]
    for m in modes:
        if m.growing:
            log.info("growing mode retained: f=%g d=%g", m.frequency, m.damping)
    return modes


def _is_dc(f, span):
    return abs(2 * np.pi * f * span) < 1e-8


def _design(theta, modes, span):
    cols, layout = [], []
    for m in modes:
        # reference each envelope at its largest value to avoid overflow
        ref = theta[0] if m.damping >= 0 else theta[-1]
        t = theta - ref
        env = np.exp(-m.damping * t)
        if _is_dc(m.frequency, span):
            cols.append(env)
            layout.append((m, ref, 1))
        else:
            w = 2 * np.pi * m.frequency
            cols.append(env * np.cos(w * t))
            cols.append(-env * np.sin(w * t))
            layout.append((m, ref, 2))
    return np.column_stack(cols), layout


def _colliding_pair(D, layout):
    starts = np.cumsum([0] + [n for _, _, n in layout])
    blocks = [D[:, starts[i] : starts[i + 1]] for i in range(len(layout))]
    blocks = [b / np.linalg.norm(b, axis=0) for b in blocks]
    worst, pair = np.inf, (0, 1)
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            sv = np.linalg.svd(np.hstack([blocks[i], blocks[j]]), compute_uv=False)
            if sv[-1] < worst:
                worst, pair = sv[-1], (i, j)
    return pair


def fit_amplitudes(pattern: Pattern, modes: Sequence) -> SinusoidModel:
    """Least-squares amplitudes and phases for fixed ``(frequency, damping)`` pairs."""
    modes = [Mode(float(f), float(d)) for f, d in modes]
    if not modes:
        raise SizeError("at least one mode is required")
    theta = pattern.theta
    y = pattern.intensity
    span = theta[-1] - theta[0]
    D, layout = _design(theta, modes, span)
    if not np.all(np.isfinite(D)):
        raise NumericalError("design matrix overflow; damping too large for the grid")
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        raise NumericalError("a mode vanishes on the grid")
    Dn = D / norms
    sv = np.linalg.svd(Dn, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if not cond < 1e12:
        i, j = _colliding_pair(D, layout)
        raise NumericalError(
            f"modes {i} {tuple(modes[i])} and {j} {tuple(modes[j])} are not separable",
            cond,
        )
    if cond > CONDITION_WARN:
        log.warning("amplitude design matrix is ill-conditioned (cond=%.3g)", cond)
    coef, *_ = np.linalg.lstsq(Dn, y, rcond=None)
    coef = coef / norms
    resid = y - D @ coef

    comps = []
    pos = 0
    for m, ref, n in layout:
        if n == 1:
            p, q = coef[pos], 0.0
        else:
            p, q = coef[pos], coef[pos + 1]
        pos += n
        amp_rel = float(np.hypot(p, q))
        phi_rel = float(np.arctan2(q, p))
        shift = ref - theta[0]
        with np.errstate(under="ignore"):
            amp = amp_rel * np.exp(m.damping * shift)
        phase = float(wrap_phase(phi_rel - 2 * np.pi * m.frequency * shift))
        comps.append(SinusoidComponent(float(amp), m.damping, m.frequency, phase))
    ynorm = np.linalg.norm(y)
    meta = {
        "residual_norm": float(np.linalg.norm(resid)),
        "relative_residual": float(np.linalg.norm(resid) / ynorm) if ynorm > 0 else 0.0,
        "condition": float(cond),
    }
    return SinusoidModel(tuple(comps), float(theta[0]), pattern.step, meta)


def _fold_conjugates(modes):
    # real data: poles come in conjugate pairs; keep the non-negative member
    return [m for m in modes if m.frequency >= 0]


def hlsvd_fit(
    pattern: Pattern,
    K="auto",
    *,
    method: str = "real",
    reorth_threshold: float | None = None,
    seed: int = 0,
) -> SinusoidModel:
    """Fit ``K`` damped cosines to ``pattern``.

    ``K="auto"`` picks the model order at the largest singular-value gap.
    With ``method="real"`` the Hankel rank used is ``2K`` (two conjugate
    poles per cosine); with ``method="analytic"`` it is ``K``.
    """
    if method not in ("real", "analytic"):
        raise DomainError(f"unknown method {method!r}")
    auto = isinstance(K, str)
    if auto and K != "auto":
        raise DomainError(f"K must be a positive integer or 'auto', got {K!r}")
    if not auto and (int(K) != K or K < 1):
        raise DomainError(f"K must be a positive integer, got {K!r}")

    signal = pattern.intensity if method == "real" else analytic_signal(pattern)
    op = hankel_operator(signal)
    per_component = 2 if method == "real" else 1
    cap = min(op.shape)
    if auto:
        want = min(AUTO_RANK_LIMIT, cap)
    else:
        want = min(per_component * int(K), cap)
    if np.linalg.norm(pattern.intensity) == 0:
        raise DomainError("cannot fit an all-zero pattern")
    svd = lanczos_bidiag(op, want, reorth_threshold, seed=seed)
    if auto:
        rank, ratios = select_rank(svd.s, svd.breakdown)
    else:
        rank, ratios = min(want, svd.rank_used), []
    modes = estimate_modes(svd, rank, pattern.step)
    if method == "real":
        modes = _fold_conjugates(modes)
    model = fit_amplitudes(pattern, modes)
    if not auto and len(model) > K:
        # surplus real poles: keep the K strongest components
        span = pattern.theta[-1] - pattern.theta0
        with np.errstate(divide="ignore"):
            strength = [np.log(c.amplitude) + max(0.0, -c.damping * span)
                        for c in model.components]
        order = np.argsort(strength, kind="stable")[::-1]
        kept = [Mode(model.components[i].frequency, model.components[i].damping)
                for i in sorted(order[: int(K)])]
        model = fit_amplitudes(pattern, kept)
    meta = dict(model.metadata)
    meta.update(
        {
            "method": method,
            "rank_used": int(rank),
            "K_requested": "auto" if auto else int(K),
            "K": len(model),
            "singular_values": [float(v) for v in svd.s],
            "gap_ratios": [float(r) for r in ratios],
            "lanczos_steps": svd.steps,
            "lanczos_reorth": svd.n_reorth,
            "lanczos_breakdown": svd.breakdown,
            "growing_modes": [i for i, c in enumerate(model.components) if c.growing],
        }
    )
    return SinusoidModel(model.components, model.theta0, model.step, meta)
