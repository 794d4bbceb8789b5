"""Served model backends.

A served model exposes:
  info() -> dict          (the /info payload, minus the proto field)
  score(x, t) -> ndarray  (NCHW float32 in, same-shape score out)

Backends:
* AnalyticGmmModel — a Gaussian-mixture prior from the documented JSON
  file format, with its noise-perturbed score computed in closed form.
  Useful as a loopback test model and for desk-scale protocol checks.
* ToyCheckpointModel — replays the toy MLP checkpoint format (magic
  "SCOREPNP-TOYNET-1": text header + little-endian float64 parameters).
* TorchScriptModel — wraps a TorchScript module with a sidecar JSON
  describing its schedule and conventions; ε-predicting checkpoints are
  converted to scores on the server (score = −ε̂/√(1−ᾱ_t)) so clients
  always receive scores.

All backends interpolate σ linearly in real-valued t over the native
grid t = 1..T (reported as t_rounding = "linear-sigma-interpolation").
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .wire import TENSOR_LAYOUT

CHECKPOINT_MAGIC = "SCOREPNP-TOYNET-1"


def _sigma_grid(schedule: dict) -> np.ndarray:
    if schedule.get("kind") == "vp":
        betas = np.asarray(schedule["betas"], dtype=np.float64)
        alpha_bars = np.cumprod(1.0 - betas)
        return np.sqrt((1.0 - alpha_bars) / alpha_bars)
    return np.asarray(schedule["sigmas"], dtype=np.float64)


class _ScheduleMixin:
    sigmas: np.ndarray

    @property
    def T(self) -> int:
        return int(self.sigmas.size)

    def sigma_at(self, t: float) -> float:
        t = float(t)
        if not (1.0 - 1e-9 <= t <= self.T + 1e-9):
            raise ValueError(f"t={t} outside [1, {self.T}]")
        t = min(max(t, 1.0), float(self.T))
        return float(np.interp(t, np.arange(1, self.T + 1), self.sigmas))

    def alpha_bar_at(self, t: float) -> float:
        s = self.sigma_at(t)
        return 1.0 / (1.0 + s * s)


class AnalyticGmmModel(_ScheduleMixin):
    """Closed-form GMM score served as a VE or VP 'network'."""

    def __init__(self, gmm_path: str | Path, schedule: dict,
                 convention: str = "vp", value_domain=(0.0, 1.0)):
        spec = json.loads(Path(gmm_path).read_text())
        self.weights = np.asarray(spec["weights"], dtype=np.float64)
        self.means = np.asarray(spec["means"], dtype=np.float64)
        self.covs = np.asarray(spec["covariances"], dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("GMM weights must sum to 1")
        self.dim = self.means.shape[1]
        self.convention = convention
        self.schedule = schedule
        self.sigmas = _sigma_grid(schedule)
        self.value_domain = tuple(value_domain)

    def info(self) -> dict:
        return {
            "convention": self.convention,
            "T": self.T,
            "schedule": self.schedule,
            "layout": TENSOR_LAYOUT,
            "value_domain": list(self.value_domain),
            "output_kind": "score",
            "t_rounding": "linear-sigma-interpolation",
            "model": "analytic-gmm",
        }

    def _score_flat(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Exact score of Σ πᵢ N(μᵢ, Σᵢ + σ²I), log-sum-exp stabilized."""
        k, d = self.means.shape
        covs = self.covs + sigma * sigma * np.eye(d)[None]
        logp = np.empty((x.shape[0], k))
        sols = []
        for i in range(k):
            L = np.linalg.cholesky(covs[i])
            diff = x - self.means[i][None, :]
            half = np.linalg.solve(L, diff.T)
            sol = np.linalg.solve(L.T, half).T
            sols.append(sol)
            logdet = 2.0 * np.sum(np.log(np.diag(L)))
            logp[:, i] = (np.log(self.weights[i])
                          - 0.5 * (d * np.log(2 * np.pi) + logdet
                                   + np.sum(half * half, axis=0)))
        m = logp.max(axis=1, keepdims=True)
        r = np.exp(logp - m)
        r /= r.sum(axis=1, keepdims=True)
        out = np.zeros_like(x)
        for i in range(k):
            out -= r[:, i : i + 1] * sols[i]
        return out

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        sigma = self.sigma_at(t)
        x64 = np.asarray(x, dtype=np.float64)
        n, c, h, w = x64.shape
        flat = x64.transpose(0, 2, 3, 1).reshape(-1, self.dim)
        if self.convention == "vp":
            scale = np.sqrt(self.alpha_bar_at(t))
            vals = self._score_flat(flat / scale, sigma) / scale
        else:
            vals = self._score_flat(flat, sigma)
        return vals.reshape(n, h, w, c).transpose(0, 3, 1, 2).astype("<f4")


class ToyCheckpointModel(_ScheduleMixin):
    """Replays the documented toy-MLP checkpoint format."""

    def __init__(self, path: str | Path, value_domain=(0.0, 1.0)):
        raw = Path(path).read_bytes()
        nl1 = raw.find(b"\n")
        nl2 = raw.find(b"\n", nl1 + 1)
        if raw[:nl1].decode("ascii", errors="replace") != CHECKPOINT_MAGIC:
            raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
        self.header = json.loads(raw[nl1 + 1 : nl2])
        if self.header.get("activation") != "tanh":
            raise ValueError("only tanh checkpoints are supported")
        params = np.frombuffer(raw[nl2 + 1 :], dtype="<f8")
        if params.size != self.header["param_count"]:
            raise ValueError("parameter block truncated")
        widths = self.header["widths"]  # (in=dim+1, h1, h2, out=dim)
        self.dim = widths[-1]
        shapes = [("W1", (widths[1], widths[0])), ("b1", (widths[1],)),
                  ("W2", (widths[2], widths[1])), ("b2", (widths[2],)),
                  ("W3", (widths[3], widths[2])), ("b3", (widths[3],))]
        self.params = {}
        off = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self.params[name] = params[off : off + size].reshape(shape)
            off += size
        self.convention = self.header["convention"]
        self.schedule = self.header["schedule"]
        self.sigmas = _sigma_grid(self.schedule)
        self.value_domain = tuple(value_domain)

    def info(self) -> dict:
        return {
            "convention": self.convention,
            "T": self.T,
            "schedule": self.schedule,
            "layout": TENSOR_LAYOUT,
            "value_domain": list(self.value_domain),
            "output_kind": "score",
            "t_rounding": "linear-sigma-interpolation",
            "model": "toy-checkpoint",
        }

    def _forward(self, pts: np.ndarray, t: float) -> np.ndarray:
        sigma = self.sigma_at(t)
        if self.header["cond_input"] == "log-sigma":
            cond = np.log(sigma)
        else:
            cond = float(t) / self.T
        p = self.params
        z = np.concatenate([pts, np.full((pts.shape[0], 1), cond)], axis=1)
        h1 = np.tanh(z @ p["W1"].T + p["b1"])
        h2 = np.tanh(h1 @ p["W2"].T + p["b2"])
        out = h2 @ p["W3"].T + p["b3"]
        if self.header["output_scale"] == "inv-sigma":
            out = out / sigma
        else:
            ab = 1.0 / (1.0 + sigma * sigma)
            out = out / np.sqrt(1.0 - ab)
        return out

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        x64 = np.asarray(x, dtype=np.float64)
        n, c, h, w = x64.shape
        flat = x64.transpose(0, 2, 3, 1).reshape(-1, self.dim)
        vals = self._forward(flat, t)
        return vals.reshape(n, h, w, c).transpose(0, 3, 1, 2).astype("<f4")


class TorchScriptModel(_ScheduleMixin):
    """TorchScript module plus sidecar JSON (schedule, domain, output kind).

    The sidecar (``<checkpoint>.json`` or passed explicitly) must contain:
    convention, schedule {kind, betas|sigmas}, value_domain, output_kind
    ("score" or "epsilon").  The module is called as module(x, t_tensor).
    """

    def __init__(self, path: str | Path, sidecar: str | Path | None = None,
                 device: str = "cpu"):
        import torch

        self.torch = torch
        path = Path(path)
        meta_path = Path(sidecar) if sidecar else path.with_suffix(path.suffix + ".json")
        meta = json.loads(Path(meta_path).read_text())
        self.module = torch.jit.load(str(path), map_location=device).eval()
        self.device = device
        self.convention = meta["convention"]
        self.schedule = meta["schedule"]
        self.sigmas = _sigma_grid(self.schedule)
        self.value_domain = tuple(meta.get("value_domain", (-1.0, 1.0)))
        self.output_kind = meta.get("output_kind", "epsilon")

    def info(self) -> dict:
        return {
            "convention": self.convention,
            "T": self.T,
            "schedule": self.schedule,
            "layout": TENSOR_LAYOUT,
            "value_domain": list(self.value_domain),
            "output_kind": "score",  # epsilon outputs are converted here
            "t_rounding": "linear-sigma-interpolation",
            "model": "torchscript",
        }

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        torch = self.torch
        with torch.no_grad():
            xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
            xt = xt.to(self.device)
            tt = torch.full((x.shape[0],), float(t), device=self.device)
            out = self.module(xt, tt).cpu().numpy().astype("<f4")
        if self.output_kind == "epsilon":
            ab = self.alpha_bar_at(t)
            out = (-out / np.sqrt(1.0 - ab)).astype("<f4")
        return out


def load_model(kind: str, checkpoint: str, device: str = "cpu",
               schedule_path: str | None = None, convention: str = "vp",
               value_domain=(0.0, 1.0)):
    if kind == "analytic-gmm":
        if schedule_path is None:
            raise ValueError("analytic-gmm needs --schedule")
        schedule = json.loads(Path(schedule_path).read_text())
        return AnalyticGmmModel(checkpoint, schedule, convention=convention,
                                value_domain=value_domain)
    if kind == "toy-checkpoint":
        return ToyCheckpointModel(checkpoint, value_domain=value_domain)
    if kind == "torchscript":
        return TorchScriptModel(checkpoint, device=device)
    raise ValueError(f"unknown model kind {kind!r}")
