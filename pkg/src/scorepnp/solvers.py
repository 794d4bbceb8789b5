"""Plug-and-play solvers for the quadratic data term g(x) = ½‖y − Ax‖².

Four iterative schemes share the proximal/gradient machinery:

* `pnp_admm` — ADMM with the proximal step of the regularizer replaced by
  a denoiser; supports a per-iteration noise schedule.
* `red` — steepest descent on g(x) + τ·regularizer, where the regularizer
  gradient is the denoiser residual s − D_σ(s).
* `dpir_hqs` — half-quadratic splitting with decreasing noise levels and
  the penalty rule γ_k = σ_k²/λ.
* `diffpir_sample` — a two-step posterior-sampling loop: denoise to an
  x₀-estimate, enforce data consistency by prox, re-inject noise at the
  next level (mixing fresh and directional noise via ζ).

Every run is deterministic given its config and seed, keeps all iterates
finite (violations abort with the iteration index), and records a
per-iteration trace.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericsError, ParameterError
from .imaging import ImageTensor, LinearOperator, CirculantBlurOperator, \
    IdentityOperator, MaskOperator
from .metrics import psnr


# ---------------------------------------------------------------------------
# Quadratic data term: value, gradient, prox
# ---------------------------------------------------------------------------


class QuadraticDataTerm:
    """g(x) = ½‖y − Ax‖² for a linear operator A and measurement y."""

    def __init__(self, operator: LinearOperator, y: ImageTensor | np.ndarray):
        self.operator = operator
        self.y = y.array if isinstance(y, ImageTensor) else np.asarray(y, dtype=np.float64)
        self._aty = operator.adjoint(self.y)

    def value(self, x: np.ndarray) -> float:
        r = self.y - self.operator.forward(x)
        return 0.5 * float(np.sum(r * r))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.operator.adjoint(self.operator.forward(x) - self.y)

    def prox(self, z: np.ndarray, gamma: float) -> np.ndarray:
        return prox_quadratic(self, z, gamma)

    @property
    def adjoint_y(self) -> np.ndarray:
        return self._aty.copy()


def grad_quadratic(dt: QuadraticDataTerm, x: np.ndarray) -> np.ndarray:
    """Aᵀ(Ax − y)."""
    return dt.grad(np.asarray(x, dtype=np.float64))


def prox_quadratic(dt: QuadraticDataTerm, z: np.ndarray, gamma: float) -> np.ndarray:
    """argmin_x ½‖x − z‖² + γ·½‖y − Ax‖², i.e. solve (I + γAᵀA)x = z + γAᵀy.

    Circulant blur and identity are solved exactly in the frequency domain
    / in closed form; masks have a diagonal closed form; anything else
    falls back to conjugate gradient with residual tolerance 1e-10.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        z = z[:, :, None]
    op = dt.operator
    if isinstance(op, IdentityOperator):
        return (z + gamma * dt.y) / (1.0 + gamma)
    if isinstance(op, MaskOperator):
        m = op.mask[:, :, None]
        return (z + gamma * m * dt.y) / (1.0 + gamma * m)
    if isinstance(op, CirculantBlurOperator):
        spec = op.spectrum
        denom = 1.0 + gamma * np.abs(spec) ** 2
        out = np.empty_like(z)
        for c in range(z.shape[2]):
            num = np.fft.fft2(z[:, :, c]) + gamma * np.conj(spec) * np.fft.fft2(dt.y[:, :, c])
            out[:, :, c] = np.real(np.fft.ifft2(num / denom))
        return out
    rhs = z + gamma * dt.adjoint_y
    apply_mat = lambda v: v + gamma * op.adjoint(op.forward(v))  # noqa: E731
    return conjugate_gradient(apply_mat, rhs, tol=1e-10)


def conjugate_gradient(apply_mat, b: np.ndarray, x0: np.ndarray | None = None,
                       tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """CG for SPD systems; raises NumericsError with the residual on failure."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_mat(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    target = tol * (1.0 + float(np.linalg.norm(b)))
    for _ in range(max_iter):
        if np.sqrt(rs) <= target:
            return x
        ap = apply_mat(p)
        alpha = rs / float(np.vdot(p, ap).real)
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = float(np.vdot(r, r).real)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= target:
        return x
    raise NumericsError(
        f"CG did not reach residual {target:.3g} in {max_iter} iterations "
        f"(final residual {np.sqrt(rs):.3g})"
    )


def make_log_sigma_schedule(sigma1: float, sigmaK: float, K: int) -> np.ndarray:
    """Geometric sequence from sigma1 down to sigmaK with exact endpoints."""
    if not (sigma1 >= sigmaK > 0):
        raise ParameterError(f"need sigma1 >= sigmaK > 0, got {sigma1}, {sigmaK}")
    if K < 2:
        raise ParameterError(f"K must be >= 2, got {K}")
    seq = np.geomspace(sigma1, sigmaK, K)
    seq[0], seq[-1] = sigma1, sigmaK
    return seq


# ---------------------------------------------------------------------------
# Config and state
# ---------------------------------------------------------------------------

METHODS = ("pnp-admm", "red", "dpir", "diffpir")


@dataclass
class SolverConfig:
    """Everything a solver run depends on (besides the problem itself).

    The denoising strength is either fixed (`sigma`) or a log-spaced
    decreasing schedule (`sigma1` → `sigmaK`).  `gamma` is the fixed prox
    weight / step size; `gamma_scale` switches PnP-ADMM to the
    per-iteration rule γ_k = gamma_scale/σ_k².
    """

    method: str
    K: int = 100
    gamma: float | None = None
    gamma_scale: float | None = None
    tau: float | None = None
    lam: float | None = None
    sigma: float | None = None
    sigma1: float | None = None
    sigmaK: float | None = None
    zeta: float = 0.9
    seed: int = 0
    strict_range: bool = True
    init: str | None = None  # None = per-method default: adjoint for the
    #                          prox/gradient solvers, noise for diffpir

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        scheduled = self.sigma1 is not None or self.sigmaK is not None
        if scheduled and (self.sigma1 is None or self.sigmaK is None):
            raise ConfigError("sigma1 and sigmaK must be given together")
        if scheduled and self.sigma1 < self.sigmaK:
            raise ConfigError("sigma schedule must be nonincreasing (sigma1 >= sigmaK)")
        if not scheduled and self.sigma is None:
            raise ConfigError("either sigma or (sigma1, sigmaK) is required")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        for name in ("gamma", "gamma_scale", "lam"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.method == "pnp-admm" and self.gamma is None and self.gamma_scale is None:
            raise ConfigError("pnp-admm requires gamma or gamma_scale")
        if self.method == "red" and (self.gamma is None or self.tau is None):
            raise ConfigError("red requires gamma and tau")
        if self.method in ("dpir", "diffpir") and self.lam is None:
            raise ConfigError(f"{self.method} requires lam")
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must be in [0, 1], got {self.zeta}")
        if self.init not in (None, "adjoint", "zeros", "measurement", "noise"):
            raise ConfigError(f"unknown init {self.init!r}")

    def sigma_schedule(self) -> np.ndarray:
        if self.sigma1 is not None:
            if self.K == 1:
                return np.array([self.sigma1])
            if self.sigma1 == self.sigmaK:
                return np.full(self.K, self.sigma1)
            return make_log_sigma_schedule(self.sigma1, self.sigmaK, self.K)
        return np.full(self.K, float(self.sigma))

    def gamma_at(self, sigma_k: float) -> float:
        if self.gamma_scale is not None:
            return float(self.gamma_scale) / (sigma_k * sigma_k)
        return float(self.gamma)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceRow:
    k: int
    sigma_k: float
    gamma_k: float
    objective: float  # data-term value at the iterate, g(x) = ½‖y − Ax‖²
    residual: float
    psnr: float | None
    wall_ms: float


@dataclass
class SolverState:
    """Final iterates plus the per-iteration trace of a solver run."""

    method: str
    x: np.ndarray
    z: np.ndarray | None
    s: np.ndarray | None
    k: int
    trace: list = field(default_factory=list)
    config: SolverConfig | None = None
    reconstruction: np.ndarray | None = None

    def trace_csv(self, include_timing: bool = True) -> str:
        lines = []
        if self.config is not None:
            import json as _json

            lines.append(f"# method: {self.method}")
            lines.append(f"# config: {_json.dumps(self.config.to_dict(), sort_keys=True)}")
        cols = ["k", "sigma_k", "gamma_k", "objective", "residual", "psnr"]
        if include_timing:
            cols.append("wall_ms")
        lines.append(",".join(cols))
        for row in self.trace:
            vals = [str(row.k), f"{row.sigma_k:.12g}", f"{row.gamma_k:.12g}",
                    f"{row.objective:.12g}", f"{row.residual:.12g}",
                    "" if row.psnr is None else f"{row.psnr:.12g}"]
            if include_timing:
                vals.append(f"{row.wall_ms:.3f}")
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def write_trace(self, path: str | Path, include_timing: bool = True) -> None:
        Path(path).write_text(self.trace_csv(include_timing=include_timing))


def _as_provider(denoiser_provider):
    """Accept an AdaptedDenoiser or a plain callable sigma -> denoiser."""
    if hasattr(denoiser_provider, "at"):
        return denoiser_provider.at
    return denoiser_provider


def _denoiser_at(provider, sigma: float, k: int):
    """Fetch the denoiser for σ_k, tagging range errors with the iteration."""
    from .errors import SigmaRangeError

    try:
        return provider(sigma)
    except SigmaRangeError as exc:
        raise SigmaRangeError(f"iteration k={k}: {exc}") from exc


def _check_finite(arr: np.ndarray, k: int, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite {what} at iteration k={k}")


def _init_state(dt: QuadraticDataTerm, mode: str | None) -> np.ndarray:
    mode = mode or "adjoint"
    if mode == "adjoint":
        return dt.adjoint_y
    if mode == "zeros":
        return np.zeros_like(dt.y)
    if mode == "measurement":
        return dt.y.copy()
    raise ConfigError(f"init mode {mode!r} not valid here")


def _maybe_psnr(recon: np.ndarray, gt: np.ndarray | None) -> float | None:
    if gt is None:
        return None
    return psnr(recon, gt, max_val=1.0)


# ---------------------------------------------------------------------------
# The four schemes
# ---------------------------------------------------------------------------


def pnp_admm(dt: QuadraticDataTerm, denoiser_provider, config: SolverConfig,
             ground_truth: np.ndarray | None = None) -> SolverState:
    """ADMM iterates x ← prox_γg(z−s), z ← D_σk(x+s), s ← s + x − z.

    Returns the full state; the reconstruction reported is z_K, the last
    variable passed through the prior.
    """
    config.validate()
    if config.method != "pnp-admm":
        raise ConfigError(f"config.method is {config.method!r}, expected 'pnp-admm'")
    provider = _as_provider(denoiser_provider)
    sigmas = config.sigma_schedule()
    z = _init_state(dt, config.init)
    s = np.zeros_like(z)
    x = z.copy()
    trace: list[TraceRow] = []
    for k in range(1, config.K + 1):
        t0 = time.perf_counter()
        sigma_k = float(sigmas[k - 1])
        gamma_k = config.gamma_at(sigma_k)
        x = dt.prox(z - s, gamma_k)
        z = _denoiser_at(provider, sigma_k, k)(x + s)
        s = s + x - z
        _check_finite(x, k, "x")
        _check_finite(z, k, "z")
        _check_finite(s, k, "s")
        trace.append(TraceRow(k, sigma_k, gamma_k, dt.value(z),
                              float(np.linalg.norm(x - z)),
                              _maybe_psnr(z, ground_truth),
                              (time.perf_counter() - t0) * 1e3))
    return SolverState("pnp-admm", x, z, s, config.K, trace, config, reconstruction=z)


def red(dt: QuadraticDataTerm, denoiser_provider, config: SolverConfig,
        ground_truth: np.ndarray | None = None) -> SolverState:
    """Steepest descent on g + τ·R with the denoiser-residual gradient.

    Per iteration: x ← s − γ∇g(s); z ← D_σ(s); s ← x − γτ(s − z), which is
    one gradient step s ← s − γ(∇g(s) + τ(s − D_σ(s))).  The fixed point
    therefore satisfies ∇g(s*) + τ(s* − D_σ(s*)) = 0 exactly.
    Reconstruction reported is x_K.
    """
    config.validate()
    if config.method != "red":
        raise ConfigError(f"config.method is {config.method!r}, expected 'red'")
    provider = _as_provider(denoiser_provider)
    sigmas = config.sigma_schedule()
    s = _init_state(dt, config.init)
    x = s.copy()
    z = s.copy()
    trace: list[TraceRow] = []
    for k in range(1, config.K + 1):
        t0 = time.perf_counter()
        sigma_k = float(sigmas[k - 1])
        gamma_k = float(config.gamma)
        x = s - gamma_k * dt.grad(s)
        z = _denoiser_at(provider, sigma_k, k)(s)
        s_new = x - gamma_k * config.tau * (s - z)
        s = s_new
        _check_finite(x, k, "x")
        _check_finite(z, k, "z")
        _check_finite(s, k, "s")
        trace.append(TraceRow(k, sigma_k, gamma_k, dt.value(x),
                              float(np.linalg.norm(x - z)),
                              _maybe_psnr(x, ground_truth),
                              (time.perf_counter() - t0) * 1e3))
    return SolverState("red", x, z, s, config.K, trace, config, reconstruction=x)


def dpir_hqs(dt: QuadraticDataTerm, denoiser_provider, config: SolverConfig,
             ground_truth: np.ndarray | None = None) -> SolverState:
    """Half-quadratic splitting with γ_k = σ_k²/λ and decreasing σ_k.

    Per iteration: x ← prox_{γ_k g}(z); z ← D_σk(x).  Reconstruction is z_K.
    """
    config.validate()
    if config.method != "dpir":
        raise ConfigError(f"config.method is {config.method!r}, expected 'dpir'")
    provider = _as_provider(denoiser_provider)
    sigmas = config.sigma_schedule()
    z = _init_state(dt, config.init)
    x = z.copy()
    trace: list[TraceRow] = []
    for k in range(1, config.K + 1):
        t0 = time.perf_counter()
        sigma_k = float(sigmas[k - 1])
        gamma_k = sigma_k * sigma_k / float(config.lam)
        x = dt.prox(z, gamma_k)
        z = _denoiser_at(provider, sigma_k, k)(x)
        _check_finite(x, k, "x")
        _check_finite(z, k, "z")
        trace.append(TraceRow(k, sigma_k, gamma_k, dt.value(z),
                              float(np.linalg.norm(x - z)),
                              _maybe_psnr(z, ground_truth),
                              (time.perf_counter() - t0) * 1e3))
    return SolverState("dpir", x, z, None, config.K, trace, config, reconstruction=z)


def diffpir_sample(dt: QuadraticDataTerm, denoiser_provider, config: SolverConfig,
                   ground_truth: np.ndarray | None = None) -> SolverState:
    """Posterior-sampling loop: denoise, data-consistency prox, re-noise.

    Per reverse step (σ_cur → σ_next): x̂₀ ← D_σcur(x); x ← prox_{γ g}(x̂₀)
    + σ_next·ε̃ with γ = σ_cur²/λ and ε̃ = √(1−ζ²)·ε_dir + ζ·ε_fresh, where
    ε_dir = (x − x̂₀)/σ_cur is the noise direction the denoiser removed.
    The final step injects no noise.  ζ = 0 draws no randomness anywhere
    (the state is initialized from Aᵀy instead of Gaussian noise), so runs
    are bit-identical across seeds.
    """
    config.validate()
    if config.method != "diffpir":
        raise ConfigError(f"config.method is {config.method!r}, expected 'diffpir'")
    score = getattr(denoiser_provider, "score", None)
    if score is None or score.convention != "vp":
        raise ConfigError("diffpir requires an AdaptedDenoiser over a VP score function")
    provider = _as_provider(denoiser_provider)
    sigmas = config.sigma_schedule()
    if np.any(np.diff(sigmas) > 0):
        raise ConfigError("diffpir sigma schedule must be nonincreasing")
    zeta = float(config.zeta)
    rng = np.random.default_rng(config.seed)
    init = config.init or ("adjoint" if zeta == 0.0 else "noise")
    if init == "noise":
        x = float(sigmas[0]) * rng.standard_normal(dt.y.shape)
    else:
        x = _init_state(dt, init)
    trace: list[TraceRow] = []
    x0_hat = x
    for k in range(1, config.K + 1):
        t0 = time.perf_counter()
        sigma_cur = float(sigmas[k - 1])
        gamma_k = sigma_cur * sigma_cur / float(config.lam)
        x0_hat = _denoiser_at(provider, sigma_cur, k)(x)
        xp = dt.prox(x0_hat, gamma_k)
        if k < config.K:
            sigma_next = float(sigmas[k])
            eps_dir = (x - x0_hat) / sigma_cur
            if zeta > 0.0:
                eps = np.sqrt(1.0 - zeta * zeta) * eps_dir + zeta * rng.standard_normal(x.shape)
            else:
                eps = eps_dir
            x = xp + sigma_next * eps
        else:
            x = xp
        _check_finite(x, k, "x")
        trace.append(TraceRow(k, sigma_cur, gamma_k, dt.value(xp),
                              float(np.linalg.norm(xp - x0_hat)),
                              _maybe_psnr(x, ground_truth),
                              (time.perf_counter() - t0) * 1e3))
    return SolverState("diffpir", x, x0_hat, None, config.K, trace, config,
                       reconstruction=x)


SOLVERS = {
    "pnp-admm": pnp_admm,
    "red": red,
    "dpir": dpir_hqs,
    "diffpir": diffpir_sample,
}


def run_solver(dt: QuadraticDataTerm, denoiser_provider, config: SolverConfig,
               ground_truth: np.ndarray | None = None) -> SolverState:
    config.validate()
    return SOLVERS[config.method](dt, denoiser_provider, config, ground_truth)
