"""Desk-scale denoising score matching for 2-D toy distributions.

A small tanh MLP (2 → 64 → 64 → 2 with a noise-conditioning input) is
trained to predict the score directly, under either convention:

* VE:  minimize E‖s(x + σ_t ε, t) + ε/σ_t‖²
* VP:  minimize E‖s(√ᾱ_t x + √(1−ᾱ_t) ε, t) + ε/√(1−ᾱ_t)‖²

with t drawn uniformly from the schedule grid.  Conditioning input is
log σ_t (VE) or t/T (VP).  Everything runs in float64 with hand-written
backpropagation so parameter gradients can be checked against central
finite differences to 1e-4, and training with a fixed seed is
bit-reproducible.  The optimizer is plain SGD with a fixed step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, TrainingError
from .priors import ScoreFunction
from .schedules import NoiseSchedule, schedule_from_dict, schedule_to_dict

CHECKPOINT_MAGIC = "SCOREPNP-TOYNET-1"

MIN_TRAIN_SAMPLES = 10_000


@dataclass
class DsmTrainConfig:
    steps: int = 40_000
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0

    def validate(self):
        if self.steps < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ParameterError("steps, batch_size, lr must all be positive")


class MlpScoreNet:
    """2-layer-hidden tanh MLP predicting the score of a 2-D distribution."""

    def __init__(self, convention: str, schedule: NoiseSchedule,
                 hidden: tuple[int, int] = (64, 64), params: dict | None = None):
        if convention not in ("ve", "vp"):
            raise ParameterError(f"convention must be 've' or 'vp', got {convention!r}")
        if schedule.kind != convention:
            raise ParameterError(
                f"schedule kind {schedule.kind!r} does not match convention"
            )
        self.convention = convention
        self.schedule = schedule
        self.dim = 2
        self.hidden = (int(hidden[0]), int(hidden[1]))
        self.widths = (self.dim + 1, *self.hidden, self.dim)
        if params is None:
            h1, h2 = self.hidden
            self.params = {
                "W1": np.zeros((h1, self.dim + 1)),
                "b1": np.zeros(h1),
                "W2": np.zeros((h2, h1)),
                "b2": np.zeros(h2),
                "W3": np.zeros((self.dim, h2)),
                "b3": np.zeros(self.dim),
            }
        else:
            self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    # -- parameter vector view -------------------------------------------

    _ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")

    @property
    def n_params(self) -> int:
        return sum(self.params[k].size for k in self._ORDER)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self._ORDER])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ParameterError(f"expected {self.n_params} params, got {vec.size}")
        off = 0
        for k in self._ORDER:
            p = self.params[k]
            self.params[k] = vec[off : off + p.size].reshape(p.shape).copy()
            off += p.size

    def init_params(self, rng: np.random.Generator) -> None:
        for k in ("W1", "W2", "W3"):
            w = self.params[k]
            fan_in = w.shape[1]
            self.params[k] = rng.standard_normal(w.shape) / np.sqrt(fan_in)
        for k in ("b1", "b2", "b3"):
            self.params[k] = np.zeros_like(self.params[k])

    # -- conditioning and forward/backward --------------------------------

    def cond_input(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        sig = np.array([self.schedule.sigma_at(v) for v in t])
        if self.convention == "ve":
            return np.log(sig)
        return t / self.schedule.T

    def output_scale(self, t: np.ndarray) -> np.ndarray:
        """Parameter-free output layer: the MLP trunk produces an O(1)
        vector which is scaled to score units, 1/σ_t for VE and
        1/√(1−ᾱ_t) for VP.  Keeps the regression target scale uniform
        across noise levels; the network output is still the score."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        sig = np.array([self.schedule.sigma_at(v) for v in t])
        if self.convention == "ve":
            return 1.0 / sig
        ab = 1.0 / (1.0 + sig**2)
        return 1.0 / np.sqrt(1.0 - ab)

    def forward(self, x: np.ndarray, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        tb = np.full(xb.shape[0], float(t)) if np.isscalar(t) else np.asarray(t, float)
        out, _ = self._forward_cached(xb, self.cond_input(tb), self.output_scale(tb))
        return out[0] if single else out

    def _forward_cached(self, xb: np.ndarray, cond: np.ndarray, scale: np.ndarray):
        p = self.params
        z = np.concatenate([xb, cond[:, None]], axis=1)
        a1 = z @ p["W1"].T + p["b1"]
        h1 = np.tanh(a1)
        a2 = h1 @ p["W2"].T + p["b2"]
        h2 = np.tanh(a2)
        out = (h2 @ p["W3"].T + p["b3"]) * scale[:, None]
        return out, (z, h1, h2)

    def _loss_and_grad(self, xb: np.ndarray, cond: np.ndarray, scale: np.ndarray,
                       target: np.ndarray):
        """Loss mean_i ‖s(x_i) − target_i‖² and its parameter gradient."""
        p = self.params
        n = xb.shape[0]
        out, (z, h1, h2) = self._forward_cached(xb, cond, scale)
        r = out - target
        loss = float(np.sum(r * r)) / n
        d_raw = (2.0 / n) * r * scale[:, None]
        g = {}
        g["W3"] = d_raw.T @ h2
        g["b3"] = d_raw.sum(axis=0)
        d_h2 = d_raw @ p["W3"]
        d_a2 = d_h2 * (1.0 - h2 * h2)
        g["W2"] = d_a2.T @ h1
        g["b2"] = d_a2.sum(axis=0)
        d_h1 = d_a2 @ p["W2"]
        d_a1 = d_h1 * (1.0 - h1 * h1)
        g["W1"] = d_a1.T @ z
        g["b1"] = d_a1.sum(axis=0)
        return loss, g

    def as_score_function(self) -> ScoreFunction:
        """Wrap as a ScoreFunction; inputs of any shape with size % 2 == 0
        are interpreted as rows of 2-D points."""

        def evaluator(x, t):
            arr = np.asarray(x, dtype=np.float64)
            if arr.size % self.dim != 0:
                raise ParameterError(f"input size {arr.size} not divisible by {self.dim}")
            flat = arr.reshape(-1, self.dim)
            out = self.forward(flat, t)
            return out.reshape(arr.shape)

        return ScoreFunction(self.convention, evaluator, self.schedule,
                             description="toy MLP score net")


# ---------------------------------------------------------------------------
# DSM objective
# ---------------------------------------------------------------------------


def _dsm_instances(schedule: NoiseSchedule, convention: str, batch: np.ndarray,
                   rng: np.random.Generator):
    """Draw (noisy inputs, integer times, score targets) for one DSM batch."""
    n, d = batch.shape
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal((n, d))
    sig = schedule.sigmas[t - 1]
    if convention == "ve":
        noisy = batch + sig[:, None] * eps
        target = -eps / sig[:, None]
    else:
        ab = 1.0 / (1.0 + sig**2)
        noisy = np.sqrt(ab)[:, None] * batch + np.sqrt(1.0 - ab)[:, None] * eps
        target = -eps / np.sqrt(1.0 - ab)[:, None]
    return noisy, t.astype(np.float64), target


def dsm_loss(score_eval, batch: np.ndarray, schedule: NoiseSchedule,
             rng: np.random.Generator, convention: str | None = None) -> float:
    """Monte-Carlo denoising-score-matching loss of any score evaluator.

    `score_eval` maps (points (n, 2), times (n,)) to scores; an
    MlpScoreNet works directly, as does a closure over an analytic prior
    (useful for computing the irreducible loss floor).
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ParameterError("batch must be a non-empty (n, d) array")
    if isinstance(score_eval, MlpScoreNet):
        conv = score_eval.convention
        fn = score_eval.forward
    else:
        if convention is None:
            raise ParameterError("convention required for a bare evaluator")
        conv = convention
        fn = score_eval
    noisy, t, target = _dsm_instances(schedule, conv, batch, rng)
    s = fn(noisy, t)
    return float(np.mean(np.sum((s - target) ** 2, axis=1)))


def train_toy_score(samples: np.ndarray, schedule: NoiseSchedule,
                    config: DsmTrainConfig, convention: str = "ve",
                    hidden: tuple[int, int] = (64, 64),
                    loss_log_every: int = 100) -> tuple[MlpScoreNet, list[float]]:
    """Fit the toy MLP by plain SGD on the DSM objective.

    Returns the trained net and the logged loss curve.  Deterministic for
    a fixed config.seed.  Divergence (non-finite loss) raises
    TrainingError with the offending step index.
    """
    config.validate()
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ParameterError("samples must have shape (n, 2)")
    if samples.shape[0] < MIN_TRAIN_SAMPLES:
        raise ParameterError(
            f"need at least {MIN_TRAIN_SAMPLES} samples, got {samples.shape[0]}"
        )
    rng = np.random.default_rng(config.seed)
    net = MlpScoreNet(convention, schedule, hidden=hidden)
    net.init_params(rng)
    losses: list[float] = []
    for step in range(config.steps):
        idx = rng.integers(0, samples.shape[0], size=config.batch_size)
        noisy, t, target = _dsm_instances(schedule, convention, samples[idx], rng)
        loss, g = net._loss_and_grad(noisy, net.cond_input(t),
                                     net.output_scale(t), target)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged (non-finite loss) at step {step}")
        for k in net._ORDER:
            net.params[k] -= config.lr * g[k]
        if step % loss_log_every == 0:
            losses.append(loss)
    return net, losses


def grad_check(net: MlpScoreNet, batch: np.ndarray, rng: np.random.Generator,
               step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    The DSM instance (noise draws, times) is frozen once; the loss is then
    a deterministic function of the parameters.  Relative error is
    ‖g_bp − g_fd‖∞ / ‖g_bp‖∞.
    """
    batch = np.asarray(batch, dtype=np.float64)
    noisy, t, target = _dsm_instances(net.schedule, net.convention, batch, rng)
    cond = net.cond_input(t)
    scale = net.output_scale(t)
    _, g = net._loss_and_grad(noisy, cond, scale, target)
    g_flat = np.concatenate([g[k].ravel() for k in net._ORDER])

    theta = net.get_flat()
    g_fd = np.empty_like(theta)

    def loss_at(vec):
        net.set_flat(vec)
        out, _ = net._forward_cached(noisy, cond, scale)
        r = out - target
        return float(np.sum(r * r)) / noisy.shape[0]

    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g_fd[i] = (loss_at(theta + e) - loss_at(theta - e)) / (2 * step)
    net.set_flat(theta)
    scale = max(float(np.max(np.abs(g_flat))), 1e-12)
    return float(np.max(np.abs(g_flat - g_fd)) / scale)


# ---------------------------------------------------------------------------
# Checkpoint I/O: text header + little-endian float64 parameter block
# ---------------------------------------------------------------------------


def save_checkpoint(net: MlpScoreNet, path: str | Path) -> None:
    header = {
        "widths": list(net.widths),
        "hidden": list(net.hidden),
        "activation": "tanh",
        "convention": net.convention,
        "schedule": schedule_to_dict(net.schedule),
        "param_count": net.n_params,
        "dtype": "<f8",
        # forward-pass semantics, so independent consumers can run the net:
        # input is [x, cond]; trunk output is multiplied by output_scale
        "cond_input": "log-sigma" if net.convention == "ve" else "t-over-T",
        "output_scale": ("inv-sigma" if net.convention == "ve"
                         else "inv-sqrt-one-minus-alpha-bar"),
        "param_order": list(net._ORDER),
    }
    blob = net.get_flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC.encode("ascii") + b"\n")
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(blob)


def load_checkpoint(path: str | Path) -> MlpScoreNet:
    raw = Path(path).read_bytes()
    nl1 = raw.find(b"\n")
    nl2 = raw.find(b"\n", nl1 + 1)
    if nl1 < 0 or nl2 < 0:
        raise ParameterError(f"checkpoint {path}: malformed header")
    magic = raw[:nl1].decode("ascii", errors="replace")
    if magic != CHECKPOINT_MAGIC:
        raise ParameterError(
            f"checkpoint {path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    header = json.loads(raw[nl1 + 1 : nl2].decode("ascii"))
    schedule = schedule_from_dict(header["schedule"])
    net = MlpScoreNet(header["convention"], schedule, hidden=tuple(header["hidden"]))
    params = np.frombuffer(raw[nl2 + 1 :], dtype="<f8")
    if params.size != header["param_count"]:
        raise ParameterError(
            f"checkpoint {path}: expected {header['param_count']} params, "
            f"got {params.size}"
        )
    net.set_flat(params.astype(np.float64))
    return net
