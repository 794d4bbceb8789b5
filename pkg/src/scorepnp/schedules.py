"""Noise schedules for the two diffusion training conventions.

VE schedules store the noise sequence {σ_t}, t = 1..T, directly.  VP
schedules store {β_t} and derive α_t = 1 − β_t, the cumulative products
ᾱ_t, and the equivalent noise sequence σ(t) = sqrt((1 − ᾱ_t)/ᾱ_t).  In
both cases σ is strictly increasing in t.

Indices are 1-based to match the usual diffusion-model notation; the
`sigma_at` accessors accept real-valued t in [1, T] and interpolate the
noise sequence linearly between integer grid points.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConditionError, ParameterError


class NoiseSchedule:
    """Common interface: `kind`, `T`, `sigmas` (1-based grid), `sigma_at`."""

    kind: str = "abstract"

    def __init__(self, sigmas: np.ndarray):
        sig = np.asarray(sigmas, dtype=np.float64)
        if sig.ndim != 1 or sig.size < 1:
            raise ParameterError("sigma sequence must be a non-empty 1-D array")
        if np.any(sig <= 0):
            raise ParameterError("all sigma values must be positive")
        if sig.size > 1 and np.any(np.diff(sig) <= 0):
            raise ParameterError("sigma sequence must be strictly increasing")
        self.sigmas = sig

    @property
    def T(self) -> int:
        return int(self.sigmas.size)

    @property
    def sigma_min(self) -> float:
        return float(self.sigmas[0])

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas[-1])

    def sigma_at(self, t: float) -> float:
        """Noise level at real-valued t in [1, T], linear between grid points."""
        t = float(t)
        if not (1.0 - 1e-9 <= t <= self.T + 1e-9):
            raise ConditionError(f"t={t} outside schedule grid [1, {self.T}]")
        t = min(max(t, 1.0), float(self.T))
        return float(np.interp(t, np.arange(1, self.T + 1), self.sigmas))


class VESchedule(NoiseSchedule):
    """Variance-exploding: the trained noise sequence is explicit."""

    kind = "ve"


class VPSchedule(NoiseSchedule):
    """Variance-preserving: β sequence with derived ᾱ cumulative products."""

    kind = "vp"

    def __init__(self, betas: np.ndarray):
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ParameterError("beta sequence must be a non-empty 1-D array")
        if np.any((b <= 0) | (b >= 1)):
            raise ParameterError("all beta values must lie in (0, 1)")
        self.betas = b
        self.alphas = 1.0 - b
        self.alpha_bars = np.cumprod(self.alphas)
        super().__init__(np.sqrt((1.0 - self.alpha_bars) / self.alpha_bars))

    def alpha_bar_at(self, t: float) -> float:
        """ᾱ consistent with the interpolated σ(t): ᾱ = 1/(1 + σ²)."""
        s = self.sigma_at(t)
        return 1.0 / (1.0 + s * s)


def vp_sigma_of_t(schedule: VPSchedule, t: int) -> float:
    """sqrt((1 − ᾱ_t)/ᾱ_t) at an integer grid index."""
    if not isinstance(schedule, VPSchedule):
        raise ParameterError("vp_sigma_of_t requires a VP schedule")
    t = int(t)
    if not 1 <= t <= schedule.T:
        raise ConditionError(f"index t={t} outside [1, {schedule.T}]")
    ab = schedule.alpha_bars[t - 1]
    return float(np.sqrt((1.0 - ab) / ab))


def linear_beta_schedule(beta_start: float, beta_end: float, T: int) -> VPSchedule:
    """The standard linearly spaced β schedule (e.g. 1e-4 → 0.02, T = 1000)."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    return VPSchedule(np.linspace(beta_start, beta_end, T))


def geometric_sigma_schedule(sigma_min: float, sigma_max: float, T: int) -> VESchedule:
    """VE schedule with log-spaced σ from sigma_min up to sigma_max."""
    if not 0 < sigma_min < sigma_max:
        raise ParameterError("need 0 < sigma_min < sigma_max")
    if T < 2:
        raise ParameterError("T must be >= 2")
    return VESchedule(np.geomspace(sigma_min, sigma_max, T))


def betas_for_sigmas(sigmas: np.ndarray) -> np.ndarray:
    """β sequence whose VP schedule reproduces the given σ grid exactly.

    Inverts ᾱ_t = 1/(1 + σ_t²) step by step (ᾱ_0 = 1).
    """
    sig = np.asarray(sigmas, dtype=np.float64)
    alpha_bars = 1.0 / (1.0 + sig**2)
    prev = np.concatenate([[1.0], alpha_bars[:-1]])
    betas = 1.0 - alpha_bars / prev
    if np.any((betas <= 0) | (betas >= 1)):
        raise ParameterError("sigma grid not representable by betas in (0, 1)")
    return betas


def vp_schedule_for_sigmas(sigmas: np.ndarray) -> VPSchedule:
    return VPSchedule(betas_for_sigmas(sigmas))


# ---------------------------------------------------------------------------
# Schedule file format: JSON with a kind tag and either sigmas[] or betas[]
# ---------------------------------------------------------------------------


def load_schedule(path: str | Path) -> NoiseSchedule:
    obj = json.loads(Path(path).read_text())
    return schedule_from_dict(obj)


def schedule_from_dict(obj: dict) -> NoiseSchedule:
    kind = obj.get("kind")
    if kind == "ve":
        if "sigmas" not in obj:
            raise ParameterError("VE schedule requires 'sigmas'")
        return VESchedule(np.asarray(obj["sigmas"], dtype=np.float64))
    if kind == "vp":
        if "betas" not in obj:
            raise ParameterError("VP schedule requires 'betas'")
        return VPSchedule(np.asarray(obj["betas"], dtype=np.float64))
    raise ParameterError(f"unknown schedule kind: {kind!r}")


def schedule_to_dict(schedule: NoiseSchedule) -> dict:
    if isinstance(schedule, VPSchedule):
        return {"kind": "vp", "betas": schedule.betas.tolist()}
    return {"kind": "ve", "sigmas": schedule.sigmas.tolist()}


def save_schedule(schedule: NoiseSchedule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schedule_to_dict(schedule), indent=2) + "\n")
