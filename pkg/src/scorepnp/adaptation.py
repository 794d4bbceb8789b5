"""Turning pre-trained score functions into plug-in denoisers.

The core identity: for the noise model u = c·(x + w), w ~ N(0, σ²I), the
posterior mean satisfies

    D_σ(x) = x + c·σ² · ∇log p_{cσ}(c·x),

where p_{cσ} is the density of the scaled noisy variable.  VE training has
c = 1 and σ = σ_t; VP training has c = √ᾱ_t and σ = √((1−ᾱ_t)/ᾱ_t).  Given
a requested denoising strength σ, `param_matching` finds the conditioning
input t the score network expects and the matching scale c.

Matching grid.  A network's σ↔t relationship is discrete, so requests are
matched against a refined grid.  The grid used here places T′ points at
the conditional times τ_i = T·(i/T′) (the same formula that produces the
network's conditional input), restricted to τ ≥ 1, with σ interpolated
linearly in τ between native grid points.  This makes the reported
sigma_achieved, the scale c, and the σ the score evaluator sees at the
fractional conditional time mutually consistent, so adapted denoisers hit
the closed-form MMSE of analytic priors to machine precision at every
matched level.  With the default T′ = 10·T every native level lies on the
grid exactly.  (`interpolate_schedule` provides the plain endpoint-affine
resampling of a noise sequence as a standalone utility.)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ParameterError, SigmaRangeError
from .priors import ScoreFunction
from .schedules import NoiseSchedule

logger = logging.getLogger(__name__)

DEFAULT_REFINE_FACTOR = 10


@dataclass(frozen=True)
class ParamMatch:
    """Result of matching a requested noise level to a score network input.

    c is 1 for VE and √ᾱ (at the matched level) for VP; t_cond is the
    conditioning input to feed the network — an integer native index for
    VE, the real value T·(t′/T′) for VP.  sigma_achieved is the noise
    level actually realized by the match.
    """

    c: float
    t_cond: float
    sigma_achieved: float
    sigma_requested: float
    index: int
    grid_size: int
    convention: str


def interpolate_schedule(schedule: NoiseSchedule, T_prime: int,
                         log_space: bool = False) -> np.ndarray:
    """Resample the native σ sequence to T′ points spanning [1, T].

    Endpoints are preserved exactly; interior points interpolate linearly
    in σ (or in log σ with `log_space`).  T′ == T returns the native
    sequence unchanged.
    """
    T_prime = int(T_prime)
    T = schedule.T
    if T_prime < T:
        raise ParameterError(f"T_prime={T_prime} must be >= native T={T}")
    if T_prime == T:
        return schedule.sigmas.copy()
    grid = np.arange(1, T + 1, dtype=np.float64)
    u = 1.0 + np.arange(T_prime, dtype=np.float64) * (T - 1) / (T_prime - 1)
    if log_space:
        out = np.exp(np.interp(u, grid, np.log(schedule.sigmas)))
    else:
        out = np.interp(u, grid, schedule.sigmas)
    out[0] = schedule.sigmas[0]
    out[-1] = schedule.sigmas[-1]
    return out


def matching_grid(schedule: NoiseSchedule, T_prime: int | None = None,
                  log_space: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(indices, conditional times, σ values) of the matching grid.

    indices i run from ⌈T′/T⌉ to T′; the conditional time of entry i is
    τ_i = T·(i/T′) ∈ [1, T].
    """
    T = schedule.T
    if T_prime is None:
        T_prime = DEFAULT_REFINE_FACTOR * T
    T_prime = int(T_prime)
    if T_prime < T:
        raise ParameterError(f"T_prime={T_prime} must be >= native T={T}")
    i_min = int(np.ceil(T_prime / T - 1e-12))
    idx = np.arange(i_min, T_prime + 1)
    times = np.clip(T * idx.astype(np.float64) / T_prime, 1.0, float(T))
    grid = np.arange(1, T + 1, dtype=np.float64)
    if log_space:
        sig = np.exp(np.interp(times, grid, np.log(schedule.sigmas)))
    else:
        sig = np.interp(times, grid, schedule.sigmas)
    return idx, times, sig


def param_matching(schedule: NoiseSchedule, sigma: float,
                   T_prime: int | None = None, strict: bool = True,
                   log_space: bool = False) -> ParamMatch:
    """Map a requested noise level to the (c, t) pair a score network expects.

    Finds the grid index t′ whose σ is nearest to the request (ties toward
    smaller t′, i.e. less noise).  VE returns c = 1 and the native index
    nearest to t′·T/T′; VP returns c = √ᾱ at the matched level and the
    real-valued conditional time T·(t′/T′).

    Out-of-range requests raise SigmaRangeError in strict mode and clamp
    to the nearest endpoint (with a logged warning) otherwise.
    """
    sigma = float(sigma)
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    idx, times, sig = matching_grid(schedule, T_prime, log_space=log_space)
    lo, hi = sig[0], sig[-1]
    if sigma < lo - 1e-15 or sigma > hi + 1e-15:
        if strict:
            raise SigmaRangeError(
                f"sigma={sigma:.6g} outside achievable range [{lo:.6g}, {hi:.6g}]"
            )
        logger.warning(
            "sigma=%.6g outside [%.6g, %.6g]; clamping to nearest endpoint",
            sigma, lo, hi,
        )
        sigma_eff = min(max(sigma, lo), hi)
    else:
        sigma_eff = sigma

    j = int(np.argmin(np.abs(sig - sigma_eff)))  # first minimum = smaller t′
    t_raw = float(times[j])
    achieved = float(sig[j])
    T = schedule.T
    if schedule.kind == "ve":
        t_int = int(np.ceil(t_raw - 0.5))  # nearest native index, ties down
        t_int = min(max(t_int, 1), T)
        return ParamMatch(1.0, float(t_int), achieved, sigma,
                          int(idx[j]), int(idx[-1]), "ve")
    alpha_bar = 1.0 / (1.0 + achieved * achieved)
    return ParamMatch(float(np.sqrt(alpha_bar)), t_raw, achieved, sigma,
                      int(idx[j]), int(idx[-1]), "vp")


# ---------------------------------------------------------------------------
# Tweedie template and the convention-specific adapters
# ---------------------------------------------------------------------------


def tweedie_denoise(score: ScoreFunction, x: np.ndarray, c: float,
                    sigma: float) -> np.ndarray:
    """General template D_σ(x) = x + c·σ²·s(c·x, σ) for a direct score.

    The evaluator must be the score of the scaled noisy density p_{cσ};
    its condition argument is the (unscaled) noise level σ.
    """
    if score.convention != "direct":
        raise ParameterError("tweedie_denoise expects a noise-level-direct score")
    if c <= 0:
        raise ParameterError(f"c must be positive, got {c}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0.0:
        return x.copy()
    s = score(c * x, sigma)
    if not np.all(np.isfinite(s)):
        raise NumericsError(
            f"score returned non-finite values at sigma={sigma:.6g}, c={c:.6g}"
        )
    return x + c * sigma * sigma * s


def adapt_ve(score: ScoreFunction, sigma: float, T_prime: int | None = None,
             strict: bool = True):
    """Denoiser D_σ(x) = x + σ_t²·s(x, t) from a VE score network."""
    if score.convention != "ve":
        raise ParameterError(f"adapt_ve expects a VE score, got {score.convention!r}")
    m = param_matching(score.schedule, sigma, T_prime, strict=strict)
    sigma_t = score.schedule.sigma_at(m.t_cond)  # native level at the integer index

    def denoiser(x):
        x = np.asarray(x, dtype=np.float64)
        s = score(x, m.t_cond)
        if not np.all(np.isfinite(s)):
            raise NumericsError(f"VE score non-finite at t={m.t_cond}")
        return x + sigma_t * sigma_t * s

    denoiser.match = m
    return denoiser


def adapt_vp(score: ScoreFunction, sigma: float, T_prime: int | None = None,
             strict: bool = True):
    """Denoiser D_σ(x) = x + ((1−ᾱ)/√ᾱ)·s(√ᾱ·x, t) from a VP score network."""
    if score.convention != "vp":
        raise ParameterError(f"adapt_vp expects a VP score, got {score.convention!r}")
    m = param_matching(score.schedule, sigma, T_prime, strict=strict)
    root_ab = m.c
    coef = (1.0 - root_ab * root_ab) / root_ab

    def denoiser(x):
        x = np.asarray(x, dtype=np.float64)
        s = score(root_ab * x, m.t_cond)
        if not np.all(np.isfinite(s)):
            raise NumericsError(f"VP score non-finite at t={m.t_cond:.4f}")
        return x + coef * s

    denoiser.match = m
    return denoiser


class AdaptedDenoiser:
    """A score function plus matching policy, usable as a σ-indexed denoiser.

    `at(sigma)` returns the denoising callable for one level (matching is
    cached per σ); `denoise(x, sigma)` is the one-shot form.  For a
    "direct" score the template is applied at the requested σ with c = 1
    and no range restriction.

    Concurrent evaluations are safe whenever the underlying score function
    is; the per-σ cache only ever re-computes an identical entry.
    """

    def __init__(self, score: ScoreFunction, strict_range: bool = True,
                 T_prime: int | None = None):
        self.score = score
        self.strict_range = bool(strict_range)
        self.T_prime = T_prime
        self._cache: dict[float, object] = {}

    @property
    def sigma_range(self) -> tuple[float, float]:
        if self.score.schedule is None:
            return (0.0, float("inf"))
        _, _, sig = matching_grid(self.score.schedule, self.T_prime)
        return (float(sig[0]), float(sig[-1]))

    def match(self, sigma: float) -> ParamMatch:
        if self.score.convention == "direct":
            return ParamMatch(1.0, float(sigma), float(sigma), float(sigma), 0, 0,
                              "direct")
        return param_matching(self.score.schedule, sigma, self.T_prime,
                              strict=self.strict_range)

    def at(self, sigma: float):
        key = float(sigma)
        fn = self._cache.get(key)
        if fn is None:
            if self.score.convention == "ve":
                fn = adapt_ve(self.score, key, self.T_prime, self.strict_range)
            elif self.score.convention == "vp":
                fn = adapt_vp(self.score, key, self.T_prime, self.strict_range)
            else:
                fn = lambda x: tweedie_denoise(self.score, x, 1.0, key)  # noqa: E731
            self._cache[key] = fn
        return fn

    def denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.at(sigma)(x)

    __call__ = denoise
