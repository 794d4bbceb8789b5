"""Analytic priors with closed-form noise-perturbed scores and MMSE denoisers.

These are the machine-precision oracles of the repository: a Gaussian or
Gaussian-mixture prior convolved with N(0, σ²I) stays in closed form, so
both the score of the noisy marginal and the posterior mean E[x₀ | x₀+w]
are exact.  Wrapping them as emulated VE/VP "networks" gives score
functions whose adapted denoisers can be checked against the closed-form
MMSE to 1e-8 and better.

Scores and denoisers accept a single point of shape (d,) or a batch of
shape (n, d) and return the same shape.  All analytic paths are float64.
Priors and emulators are immutable after construction and safe for
concurrent evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError
from .schedules import NoiseSchedule, VESchedule, VPSchedule


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise DimensionError(f"point has dim {x.shape[0]}, prior has dim {dim}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise DimensionError(f"points have dim {x.shape[1]}, prior has dim {dim}")
        return x, False
    raise DimensionError(f"expected (d,) or (n, d), got shape {x.shape}")


# ---------------------------------------------------------------------------
# Gaussian prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPrior:
    """Isotropic Gaussian N(mean, std² I)."""

    mean: np.ndarray
    std: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if mu.ndim != 1 or mu.size < 1:
            raise ParameterError("mean must be a vector of dimension >= 1")
        if not self.std > 0:
            raise ParameterError(f"std must be positive, got {self.std}")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "std", float(self.std))

    @property
    def dim(self) -> int:
        return self.mean.size

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Exact score of N(mean, (std² + σ²) I) at x."""
        xb, single = _as_batch(x, self.dim)
        out = (self.mean[None, :] - xb) / (self.std**2 + sigma**2)
        return out[0] if single else out

    def log_density(self, x: np.ndarray, sigma: float) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        var = self.std**2 + sigma**2
        quad = np.sum((xb - self.mean[None, :]) ** 2, axis=1) / var
        out = -0.5 * (self.dim * np.log(2 * np.pi * var) + quad)
        return out[0] if single else out

    def mmse_denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Posterior mean (std²·x + σ²·mean)/(std² + σ²)."""
        xb, single = _as_batch(x, self.dim)
        r2, s2 = self.std**2, sigma**2
        out = (r2 * xb + s2 * self.mean[None, :]) / (r2 + s2)
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean[None, :] + self.std * rng.standard_normal((n, self.dim))


# ---------------------------------------------------------------------------
# Gaussian mixture prior
# ---------------------------------------------------------------------------


class GmmPrior:
    """Mixture Σᵢ πᵢ N(μᵢ, Σᵢ) with full SPD covariances.

    Perturbed by N(0, σ²I) the mixture stays a GMM with covariances
    Σᵢ + σ²I; responsibilities are computed with log-sum-exp so the score
    stays finite even when σ is far smaller than the component separation.
    """

    def __init__(self, weights, means, covariances):
        w = np.asarray(weights, dtype=np.float64)
        mu = np.asarray(means, dtype=np.float64)
        cov = np.asarray(covariances, dtype=np.float64)
        if w.ndim != 1 or mu.ndim != 2 or cov.ndim != 3:
            raise ParameterError("expected weights (k,), means (k,d), covariances (k,d,d)")
        k, d = mu.shape
        if w.size != k or cov.shape != (k, d, d):
            raise DimensionError("inconsistent GMM component shapes")
        if np.any(w <= 0):
            raise ParameterError("component weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1 within 1e-12, got {w.sum()!r}")
        for i in range(k):
            if not np.allclose(cov[i], cov[i].T, atol=1e-12):
                raise ParameterError(f"covariance {i} is not symmetric")
            try:
                np.linalg.cholesky(cov[i])
            except np.linalg.LinAlgError as exc:
                raise ParameterError(f"covariance {i} is not positive definite") from exc
        self.weights = w
        self.means = mu
        self.covariances = cov

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _noisy_factors(self, sigma: float):
        """Cholesky factors of Σᵢ + σ²I."""
        d = self.dim
        covs = self.covariances + (sigma**2) * np.eye(d)[None, :, :]
        return [np.linalg.cholesky(c) for c in covs]

    def _component_logpdf(self, xb: np.ndarray, chols) -> np.ndarray:
        """(n, k) log N(x; μᵢ, Σᵢ + σ²I) plus log πᵢ."""
        n, d = xb.shape
        out = np.empty((n, self.n_components))
        for i, L in enumerate(chols):
            diff = xb - self.means[i][None, :]
            sol = np.linalg.solve(L, diff.T)  # (d, n)
            quad = np.sum(sol**2, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            out[:, i] = (
                np.log(self.weights[i])
                - 0.5 * (d * np.log(2 * np.pi) + logdet + quad)
            )
        return out

    def log_density(self, x: np.ndarray, sigma: float) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        lp = self._component_logpdf(xb, self._noisy_factors(sigma))
        m = lp.max(axis=1, keepdims=True)
        out = (m + np.log(np.sum(np.exp(lp - m), axis=1, keepdims=True)))[:, 0]
        return out[0] if single else out

    def responsibilities(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """(n, k) posterior component probabilities at noise level σ."""
        xb, _ = _as_batch(x, self.dim)
        lp = self._component_logpdf(xb, self._noisy_factors(sigma))
        m = lp.max(axis=1, keepdims=True)
        e = np.exp(lp - m)
        return e / e.sum(axis=1, keepdims=True)

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Exact score of the σ-perturbed mixture."""
        xb, single = _as_batch(x, self.dim)
        chols = self._noisy_factors(sigma)
        lp = self._component_logpdf(xb, chols)
        m = lp.max(axis=1, keepdims=True)
        e = np.exp(lp - m)
        resp = e / e.sum(axis=1, keepdims=True)

        out = np.zeros_like(xb)
        for i, L in enumerate(chols):
            diff = xb - self.means[i][None, :]
            sol = np.linalg.solve(L.T, np.linalg.solve(L, diff.T)).T  # (Σᵢ+σ²I)⁻¹ diff
            out -= resp[:, i : i + 1] * sol
        return out[0] if single else out

    def mmse_denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Posterior mean Σᵢ rᵢ (μᵢ + Σᵢ (Σᵢ + σ²I)⁻¹ (x − μᵢ))."""
        if not sigma > 0:
            raise ParameterError(f"sigma must be positive, got {sigma}")
        xb, single = _as_batch(x, self.dim)
        chols = self._noisy_factors(sigma)
        lp = self._component_logpdf(xb, chols)
        m = lp.max(axis=1, keepdims=True)
        e = np.exp(lp - m)
        resp = e / e.sum(axis=1, keepdims=True)

        out = np.zeros_like(xb)
        for i, L in enumerate(chols):
            diff = xb - self.means[i][None, :]
            sol = np.linalg.solve(L.T, np.linalg.solve(L, diff.T)).T
            out += resp[:, i : i + 1] * (self.means[i][None, :] + sol @ self.covariances[i].T)
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for i in range(self.n_components):
            sel = comps == i
            if np.any(sel):
                L = np.linalg.cholesky(self.covariances[i])
                out[sel] = self.means[i][None, :] + eps[sel] @ L.T
        return out


# Operation-style aliases matching the module surface.


def gaussian_score(prior: GaussianPrior, x: np.ndarray, sigma: float) -> np.ndarray:
    return prior.score(x, sigma)


def gmm_score(prior: GmmPrior, x: np.ndarray, sigma: float) -> np.ndarray:
    return prior.score(x, sigma)


def gmm_mmse_denoise(prior: GmmPrior, x: np.ndarray, sigma: float) -> np.ndarray:
    return prior.mmse_denoise(x, sigma)


# ---------------------------------------------------------------------------
# GMM prior file format (JSON)
# ---------------------------------------------------------------------------


def load_gmm(path: str | Path) -> GmmPrior:
    obj = json.loads(Path(path).read_text())
    return gmm_from_dict(obj)


def gmm_from_dict(obj: dict) -> GmmPrior:
    try:
        return GmmPrior(obj["weights"], obj["means"], obj["covariances"])
    except KeyError as exc:
        raise ParameterError(f"GMM file missing field {exc}") from exc


def save_gmm(prior: GmmPrior, path: str | Path) -> None:
    obj = {
        "weights": prior.weights.tolist(),
        "means": prior.means.tolist(),
        "covariances": prior.covariances.tolist(),
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Image-shaped analytic prior (patch-wise GMM, unit stride, averaged overlaps)
# ---------------------------------------------------------------------------


class PatchGmmImagePrior:
    """Apply a GMM over p×p×C patches to whole images.

    Patches are taken at unit stride with periodic wrap, so every pixel
    belongs to exactly p² patches; per-patch scores/denoised values are
    averaged back.  With patch=1 this is an exact iid pixel prior (and the
    only case that supports exact image sampling).  For patch > 1 it is a
    desk-scale stand-in for a whole-image prior, not an exact density.
    """

    def __init__(self, gmm: GmmPrior, patch: int = 1, channels: int = 1):
        patch = int(patch)
        if patch < 1:
            raise ParameterError("patch must be >= 1")
        if gmm.dim != patch * patch * channels:
            raise DimensionError(
                f"GMM dim {gmm.dim} != patch²·channels = {patch * patch * channels}"
            )
        self.gmm = gmm
        self.patch = patch
        self.channels = channels

    def _patches(self, img: np.ndarray) -> np.ndarray:
        """(H·W, p·p·C) periodic patches, anchored at every pixel."""
        p = self.patch
        h, w, c = img.shape
        if p == 1:
            return img.reshape(h * w, c)
        idx_r = (np.arange(h)[:, None] + np.arange(p)[None, :]) % h
        idx_c = (np.arange(w)[:, None] + np.arange(p)[None, :]) % w
        # gather (h, w, p, p, c) then flatten patch dims
        out = img[idx_r[:, None, :, None], idx_c[None, :, None, :], :]
        return out.reshape(h * w, p * p * c)

    def _scatter(self, vals: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
        """Average per-patch vectors back onto the image grid."""
        p = self.patch
        h, w, c = shape
        if p == 1:
            return vals.reshape(h, w, c)
        acc = np.zeros((h, w, c))
        vals = vals.reshape(h, w, p, p, c)
        for dr in range(p):
            for dc in range(p):
                acc += np.roll(vals[:, :, dr, dc, :], (dr, dc), axis=(0, 1))
        return acc / (p * p)

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.shape[2] != self.channels:
            raise DimensionError(f"prior expects {self.channels} channels")
        vals = self.gmm.score(self._patches(x), sigma)
        return self._scatter(vals, x.shape)

    def mmse_denoise(self, x: np.ndarray, sigma: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        vals = self.gmm.mmse_denoise(self._patches(x), sigma)
        return self._scatter(vals, x.shape)

    def sample_image(self, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
        if self.patch != 1:
            raise ParameterError(
                "exact image sampling is only defined for the patch=1 pixel prior"
            )
        flat = self.gmm.sample(height * width, rng)
        return flat.reshape(height, width, self.channels)


# ---------------------------------------------------------------------------
# Score-function contract and analytic network emulators
# ---------------------------------------------------------------------------


class ScoreFunction:
    """Noise-conditional score evaluator s(x, t) with its training convention.

    `convention` is one of "ve", "vp", "direct".  For "ve"/"vp" the
    attached schedule defines the conditioning grid t = 1..T; evaluation
    accepts real-valued t inside [1, T] (networks and emulators define
    their own interpolation).  For "direct" the condition argument is the
    noise level σ itself.
    """

    def __init__(self, convention, evaluator, schedule=None, input_domain=(0.0, 1.0),
                 description=""):
        if convention not in ("ve", "vp", "direct"):
            raise ParameterError(f"unknown convention {convention!r}")
        if convention in ("ve", "vp") and schedule is None:
            raise ParameterError(f"{convention} score function requires a schedule")
        if schedule is not None and convention in ("ve", "vp") and schedule.kind != convention:
            raise ParameterError(
                f"schedule kind {schedule.kind!r} does not match convention {convention!r}"
            )
        self.convention = convention
        self._evaluator = evaluator
        self.schedule: NoiseSchedule | None = schedule
        self.input_domain = input_domain
        self.description = description

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.asarray(self._evaluator(np.asarray(x, dtype=np.float64), float(t)))
        if out.shape != np.shape(x):
            raise DimensionError(
                f"score output shape {out.shape} != input shape {np.shape(x)}"
            )
        return out


def emulate_ve_network(prior, schedule: VESchedule) -> ScoreFunction:
    """Analytic prior pretending to be a noise-conditional VE score network.

    s(x, t) is the exact score of the σ(t)-perturbed prior; integer t hits
    the training grid exactly, real-valued t interpolates σ linearly.
    """
    if schedule.kind != "ve":
        raise ParameterError("emulate_ve_network requires a VE schedule")

    def evaluator(x, t):
        return prior.score(x, schedule.sigma_at(t))

    return ScoreFunction("ve", evaluator, schedule,
                         description="analytic VE emulator")


def emulate_vp_network(prior, schedule: VPSchedule) -> ScoreFunction:
    """Analytic prior pretending to be a time-conditional VP score network.

    The VP network sees the scaled noisy variable z = √ᾱ·(x + σ·ε), whose
    density is p_σ(z/c)/c^d with c = √ᾱ; by change of variables the score
    is s(z, t) = (1/c)·score_σ(z/c) with σ = σ(t) and ᾱ = 1/(1 + σ²).
    """
    if schedule.kind != "vp":
        raise ParameterError("emulate_vp_network requires a VP schedule")

    def evaluator(z, t):
        sigma = schedule.sigma_at(t)
        c = np.sqrt(1.0 / (1.0 + sigma * sigma))
        return prior.score(z / c, sigma) / c

    return ScoreFunction("vp", evaluator, schedule,
                         description="analytic VP emulator")


def direct_score(prior) -> ScoreFunction:
    """Noise-level-direct score: condition argument is σ itself."""

    def evaluator(x, sigma):
        return prior.score(x, sigma)

    return ScoreFunction("direct", evaluator, None,
                         description="analytic direct score")
