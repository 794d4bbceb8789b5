"""Experiment runner: configs, per-cell execution, metrics, and reports.

An experiment is a JSON config naming a measurement task (blur kernel,
noise level, images or a synthetic prior), a prior spec, and a list of
method configs.  Every (image, method) cell synthesizes the measurement,
runs the solver, scores the reconstruction, and writes a trace CSV and a
PNG.  The aggregate report is emitted twice: `report.csv` (machine
readable, byte-deterministic for a fixed config and seed — no timing
columns) and `report.txt` (human readable, includes wall time).

Synthetic ground truths are sampled from the configured analytic prior,
so improvement over the measurement is measured against the prior the
solvers actually use.  Desk-scale analytic-prior runs are labeled as such
in the report header; they do not reproduce any published full-scale
numbers.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import AdaptedDenoiser
from .errors import ConfigError, ScorePnpError, TransportError
from .imaging import (BlurKernel, CirculantBlurOperator, IdentityOperator,
                      ImageTensor, MaskOperator, generate_measurement,
                      load_image, load_kernel, save_image)
from .metrics import psnr, ssim
from .priors import (GmmPrior, PatchGmmImagePrior, emulate_ve_network,
                     emulate_vp_network, load_gmm)
from .schedules import VESchedule, vp_schedule_for_sigmas
from .solvers import QuadraticDataTerm, SolverConfig, run_solver

MEASUREMENT_ROW = "measurement"


# ---------------------------------------------------------------------------
# Builtin kernels (synthetic motion-like blurs; stand-ins, not Levin data)
# ---------------------------------------------------------------------------


def builtin_kernel(name: str) -> BlurKernel:
    if name == "motion-diag":
        k = np.zeros((5, 5))
        for i in range(5):
            k[i, i] = 1.0
            if i < 4:
                k[i + 1, i] = 0.35
    elif name == "motion-curve":
        k = np.zeros((5, 5))
        path = [(4, 0), (3, 0), (2, 1), (1, 2), (0, 3), (0, 4)]
        for r, c in path:
            k[r, c] = 1.0
        k[2, 2] = 0.5
    elif name == "box3":
        k = np.ones((3, 3))
    else:
        raise ConfigError(f"unknown builtin kernel {name!r}")
    return BlurKernel(k / k.sum())


# ---------------------------------------------------------------------------
# Prior construction
# ---------------------------------------------------------------------------


def build_pixel_gmm(spec: dict) -> PatchGmmImagePrior:
    weights = np.asarray(spec["weights"], dtype=np.float64)
    means = np.asarray(spec["means"], dtype=np.float64).reshape(-1, 1)
    stds = np.asarray(spec["stds"], dtype=np.float64)
    covs = np.stack([np.array([[s**2]]) for s in stds])
    return PatchGmmImagePrior(GmmPrior(weights, means, covs), patch=1, channels=1)


def build_denoiser(prior_spec: dict, strict_range: bool):
    """(denoiser, image_prior_or_None, note) from a prior spec dict."""
    kind = prior_spec.get("type")
    convention = prior_spec.get("convention", "vp")
    t_grid = int(prior_spec.get("T", 25))
    lo = float(prior_spec.get("sigma_min", 0.008))
    hi = float(prior_spec.get("sigma_max", 1.5))
    sigmas = np.geomspace(lo, hi, t_grid)

    if kind == "pixel-gmm":
        prior = build_pixel_gmm(prior_spec)
    elif kind == "gmm-file":
        gmm = load_gmm(prior_spec["path"])
        prior = PatchGmmImagePrior(gmm, patch=int(prior_spec.get("patch", 1)),
                                   channels=int(prior_spec.get("channels", 1)))
    elif kind == "toy-checkpoint":
        from .training import load_checkpoint

        net = load_checkpoint(prior_spec["path"])
        score = net.as_score_function()
        return (AdaptedDenoiser(score, strict_range=strict_range), None,
                "toy MLP checkpoint prior")
    elif kind == "remote":
        from .remote import RemoteScoreClient, make_remote_denoiser

        client = RemoteScoreClient(prior_spec["url"])
        client.info()  # fail fast with a transport error when absent
        return (make_remote_denoiser(client, strict_range=strict_range),
                None, f"remote prior at {prior_spec['url']}")
    else:
        raise ConfigError(f"unknown prior type {prior_spec.get('type')!r}")

    if convention == "ve":
        score = emulate_ve_network(prior, VESchedule(sigmas))
    else:
        score = emulate_vp_network(prior, vp_schedule_for_sigmas(sigmas))
    note = ("desk-scale analytic prior (patch GMM emulator); "
            "not a reproduction of published full-scale numbers")
    return AdaptedDenoiser(score, strict_range=strict_range), prior, note


# ---------------------------------------------------------------------------
# Experiment config
# ---------------------------------------------------------------------------


METHOD_FIELDS = ("K", "gamma", "gamma_scale", "tau", "lam", "sigma",
                 "sigma1", "sigmaK", "zeta", "init")


def expand_method_grid(entry: dict) -> list[dict]:
    """Cartesian expansion: list-valued scalar fields become sweep axes."""
    axes = [(k, v) for k, v in entry.items()
            if k in METHOD_FIELDS and isinstance(v, list)]
    if not axes:
        return [dict(entry)]
    out = []
    keys = [k for k, _ in axes]
    for combo in itertools.product(*(v for _, v in axes)):
        e = dict(entry)
        e.update(dict(zip(keys, combo)))
        tag = ",".join(f"{k}={v:g}" for k, v in zip(keys, combo))
        e["name"] = f"{entry.get('name', entry['method'])}[{tag}]"
        out.append(e)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    out_dir: Path
    noise_sigma: float
    kernel: BlurKernel | None
    mask: np.ndarray | None
    image_paths: list[Path]
    synthetic: dict | None
    prior_spec: dict
    methods: list[dict]
    strict_range: bool

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        base = Path(base_dir) if base_dir else Path.cwd()
        task = obj.get("task", {})
        kernel = None
        mask = None
        kspec = task.get("kernel")
        if isinstance(kspec, dict) and "builtin" in kspec:
            kernel = builtin_kernel(kspec["builtin"])
        elif isinstance(kspec, str):
            kpath = (base / kspec).resolve() if not Path(kspec).is_absolute() else Path(kspec)
            if not kpath.exists():
                raise ConfigError(f"kernel file not found: {kpath}")
            kernel = load_kernel(kpath)
        if task.get("mask") is not None:
            mask = np.asarray(task["mask"], dtype=np.float64)

        image_paths = []
        for p in task.get("images", []):
            ip = (base / p).resolve() if not Path(p).is_absolute() else Path(p)
            if not ip.exists():
                raise ConfigError(f"image file not found: {ip}")
            image_paths.append(ip)
        synthetic = task.get("synthetic")
        if not image_paths and not synthetic:
            raise ConfigError("task needs 'images' or 'synthetic'")

        methods = []
        for entry in obj.get("methods", []):
            if "method" not in entry:
                raise ConfigError("each method entry needs a 'method' field")
            methods.extend(expand_method_grid(entry))
        if not methods:
            raise ConfigError("no methods configured")
        names = [m.get("name", m["method"]) for m in methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method names must be unique, got {names}")

        prior_spec = obj.get("prior")
        if not prior_spec:
            raise ConfigError("config needs a 'prior' section")
        if prior_spec.get("type") in ("gmm-file", "toy-checkpoint"):
            ppath = Path(prior_spec["path"])
            ppath = (base / ppath).resolve() if not ppath.is_absolute() else ppath
            if not ppath.exists():
                raise ConfigError(f"prior file not found: {ppath}")
            prior_spec = dict(prior_spec, path=str(ppath))

        return cls(
            raw=obj,
            seed=int(obj.get("seed", 0)),
            out_dir=Path(obj.get("out_dir", "scorepnp-out")),
            noise_sigma=float(task.get("noise_sigma", 0.02)),
            kernel=kernel,
            mask=mask,
            image_paths=image_paths,
            synthetic=synthetic,
            prior_spec=prior_spec,
            methods=methods,
            strict_range=bool(obj.get("strict_range", False)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, base_dir=path.parent)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    image: str
    method: str
    psnr: float | None
    ssim: float | None
    wall_s: float
    status: str = "ok"


@dataclass
class MetricsReport:
    rows: list[CellResult] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[CellResult]:
        return [r for r in self.rows if r.status != "ok"]

    def method_names(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def aggregate(self, method: str) -> tuple[float, float, float] | None:
        rows = [r for r in self.rows if r.method == method and r.status == "ok"]
        if not rows:
            return None
        return (float(np.mean([r.psnr for r in rows])),
                float(np.mean([r.ssim for r in rows])),
                float(np.mean([r.wall_s for r in rows])))

    def _check_aggregates(self) -> None:
        for m in self.method_names():
            agg = self.aggregate(m)
            if agg is None:
                continue
            rows = [r for r in self.rows if r.method == m and r.status == "ok"]
            if abs(agg[0] - np.mean([r.psnr for r in rows])) > 1e-9:
                raise ScorePnpError("aggregate/mean inconsistency")

    def to_csv(self) -> str:
        """Deterministic machine-readable report (no timing columns)."""
        self._check_aggregates()
        lines = [f"# {k}: {v}" for k, v in sorted(self.provenance.items())]
        lines.append("scope,image,method,psnr,ssim,status")
        for r in self.rows:
            p = "" if r.psnr is None else f"{r.psnr:.6f}"
            s = "" if r.ssim is None else f"{r.ssim:.6f}"
            lines.append(f"per-image,{r.image},{r.method},{p},{s},{r.status}")
        for m in self.method_names():
            agg = self.aggregate(m)
            if agg is not None:
                lines.append(f"aggregate,,{m},{agg[0]:.6f},{agg[1]:.6f},ok")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Human-readable table (includes wall time; not byte-deterministic)."""
        out = ["experiment report"]
        out += [f"  {k}: {v}" for k, v in sorted(self.provenance.items())]
        out.append("")
        out.append(f"{'method':<28} {'PSNR':>8} {'SSIM':>8} {'wall[s]':>9}")
        out.append("-" * 56)
        for m in self.method_names():
            agg = self.aggregate(m)
            if agg is None:
                out.append(f"{m:<28} {'--':>8} {'--':>8} {'--':>9}")
            else:
                out.append(f"{m:<28} {agg[0]:>8.2f} {agg[1]:>8.3f} {agg[2]:>9.3f}")
        if self.failures:
            out.append("")
            out.append("failures:")
            for r in self.failures:
                out.append(f"  {r.image}/{r.method}: {r.status}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def _solver_config(entry: dict, seed: int, strict_range: bool) -> SolverConfig:
    kwargs = {k: entry[k] for k in METHOD_FIELDS if k in entry}
    return SolverConfig(method=entry["method"], seed=seed,
                        strict_range=strict_range, **kwargs)


def _ground_truths(cfg: ExperimentConfig, image_prior) -> list[tuple[str, np.ndarray]]:
    out = []
    for p in cfg.image_paths:
        out.append((p.stem, load_image(p).array))
    if cfg.synthetic:
        spec = cfg.synthetic
        count = int(spec.get("count", 5))
        h = int(spec.get("height", 32))
        w = int(spec.get("width", 32))
        if image_prior is None or getattr(image_prior, "patch", 0) != 1:
            raise ConfigError(
                "synthetic ground truth requires a patch=1 analytic prior")
        for i in range(count):
            rng = np.random.default_rng(cfg.seed + 7_000_003 * (i + 1))
            out.append((f"synthetic{i}", image_prior.sample_image(h, w, rng)))
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> MetricsReport:
    out = Path(out_dir) if out_dir is not None else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    denoiser, image_prior, prior_note = build_denoiser(cfg.prior_spec,
                                                       cfg.strict_range)
    truths = _ground_truths(cfg, image_prior)

    report = MetricsReport(provenance={
        "config_sha256": cfg.config_hash(),
        "seed": cfg.seed,
        "scorepnp_version": __version__,
        "prior_note": prior_note,
        "noise_sigma": cfg.noise_sigma,
        # exact per-cell solver seed: seed + 104729*(method_index+1) + image_index
        "seed_rule": "base+104729*(j+1)+i",
    })
    for j, entry in enumerate(cfg.methods):
        report.provenance[f"method.{entry.get('name', entry['method'])}"] = \
            json.dumps({k: v for k, v in entry.items() if k != "name"},
                       sort_keys=True)

    for i, (name, gt) in enumerate(truths):
        h, w = gt.shape[:2]
        if cfg.kernel is not None:
            op = CirculantBlurOperator(cfg.kernel, (h, w))
        elif cfg.mask is not None:
            op = MaskOperator(cfg.mask)
        else:
            op = IdentityOperator()
        meas = generate_measurement(gt, op, cfg.noise_sigma,
                                    seed=cfg.seed + 1_000_003 * i)
        y = meas.y.array
        report.rows.append(CellResult(
            image=name, method=MEASUREMENT_ROW,
            psnr=psnr(y, gt), ssim=ssim(y, gt), wall_s=0.0))
        save_image(ImageTensor(y), out / f"{name}_measurement.png")

        dt = QuadraticDataTerm(op, y)
        for j, entry in enumerate(cfg.methods):
            mname = entry.get("name", entry["method"])
            t0 = time.perf_counter()
            try:
                scfg = _solver_config(entry, seed=cfg.seed + 104_729 * (j + 1) + i,
                                      strict_range=cfg.strict_range)
                state = run_solver(dt, denoiser, scfg, ground_truth=gt)
                wall = time.perf_counter() - t0
                recon = state.reconstruction
                report.rows.append(CellResult(
                    image=name, method=mname,
                    psnr=psnr(recon, gt), ssim=ssim(recon, gt), wall_s=wall))
                save_image(ImageTensor(recon), out / f"{name}_{mname}.png")
                state.write_trace(out / f"{name}_{mname}_trace.csv")
            except TransportError:
                raise  # no silent fallback: a missing server kills the run
            except ScorePnpError as exc:
                report.rows.append(CellResult(
                    image=name, method=mname, psnr=None, ssim=None,
                    wall_s=time.perf_counter() - t0,
                    status=f"error: {exc}"))

    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    return report
