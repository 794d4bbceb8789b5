"""Command-line surface.

Subcommands:
  run <config.json>          run an experiment, write reports
  match-params               map sigma targets to (c, t) pairs, CSV out
  denoise <image>            denoise one image at a given sigma
  train-toy-score <config>   fit the toy 2-D score net, save a checkpoint
  verify                     run the oracle suites (one line per criterion)

Exit codes: 0 success, 2 config error, 3 solver failure(s) present,
4 transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParameterError, ScorePnpError, TransportError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TRANSPORT = 4


def _cmd_run(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    if args.strict_range:
        cfg.strict_range = True
    out_dir = Path(args.out_dir) if args.out_dir else cfg.out_dir
    report = run_experiment(cfg, out_dir=out_dir)
    sys.stdout.write(report.to_text())
    print(f"reports written to {out_dir}")
    return EXIT_SOLVER if report.failures else EXIT_OK


def _cmd_match_params(args) -> int:
    from .adaptation import param_matching
    from .schedules import load_schedule

    schedule = load_schedule(args.schedule)
    targets = [float(s) for s in args.sigmas.split(",") if s]
    if not targets:
        raise ConfigError("no sigma targets given")
    lines = ["sigma_requested,c,t_cond,sigma_achieved"]
    for sig in targets:
        m = param_matching(schedule, sig, T_prime=args.t_prime,
                           strict=not args.lenient)
        lines.append(f"{m.sigma_requested:.12g},{m.c:.12g},"
                     f"{m.t_cond:.12g},{m.sigma_achieved:.12g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_denoise(args) -> int:
    from .harness import build_denoiser
    from .imaging import ImageTensor, load_image, save_image

    if args.prior_config:
        prior_spec = json.loads(Path(args.prior_config).read_text())
    elif args.checkpoint:
        prior_spec = {"type": "toy-checkpoint", "path": args.checkpoint}
    elif args.remote:
        prior_spec = {"type": "remote", "url": args.remote}
    else:
        raise ConfigError("need --prior-config, --checkpoint, or --remote")
    denoiser, _, _ = build_denoiser(prior_spec, strict_range=args.strict_range)
    img = load_image(args.image)
    out = denoiser.denoise(img.array, args.sigma)
    out_path = Path(args.out or (Path(args.image).stem + "_denoised.png"))
    save_image(ImageTensor(out), out_path)
    print(f"denoised at sigma={args.sigma}: {out_path}")
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    from .priors import gmm_from_dict
    from .schedules import VESchedule, vp_schedule_for_sigmas
    from .training import DsmTrainConfig, save_checkpoint, train_toy_score

    spec = json.loads(Path(args.config).read_text())
    gmm = gmm_from_dict(spec["prior"])
    sigmas = np.geomspace(float(spec.get("sigma_min", 0.1)),
                          float(spec.get("sigma_max", 1.0)),
                          int(spec.get("T", 10)))
    convention = spec.get("convention", "ve")
    schedule = (VESchedule(sigmas) if convention == "ve"
                else vp_schedule_for_sigmas(sigmas))
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    rng = np.random.default_rng(seed)
    samples = gmm.sample(int(spec.get("n_samples", 60_000)), rng)
    cfg = DsmTrainConfig(steps=int(spec.get("steps", 25_000)),
                         batch_size=int(spec.get("batch_size", 256)),
                         lr=float(spec.get("lr", 2e-3)), seed=seed)
    net, curve = train_toy_score(samples, schedule, cfg, convention=convention)
    out = Path(args.out or spec.get("out", "toy_score.ckpt"))
    save_checkpoint(net, out)
    print(f"trained {convention} net: final minibatch loss {curve[-1]:.4f}, "
          f"checkpoint at {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verification import run_all

    ok = run_all(quick=args.quick, seed=args.seed if args.seed is not None else 0)
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scorepnp", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="run an experiment config")
    q.add_argument("config")
    q.add_argument("--out-dir", default=None)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--strict-range", action="store_true")
    q.set_defaults(fn=_cmd_run)

    q = sub.add_parser("match-params", help="map sigma targets to (c, t)")
    q.add_argument("--schedule", required=True, help="schedule JSON file")
    q.add_argument("--sigmas", required=True, help="comma-separated targets")
    q.add_argument("--t-prime", type=int, default=None)
    q.add_argument("--lenient", action="store_true",
                   help="clamp out-of-range targets instead of failing")
    q.add_argument("--out", default=None, help="CSV output path (default stdout)")
    q.set_defaults(fn=_cmd_match_params)

    q = sub.add_parser("denoise", help="denoise one image")
    q.add_argument("image")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--prior-config", default=None,
                   help="JSON prior spec (same schema as experiment 'prior')")
    q.add_argument("--checkpoint", default=None, help="toy score checkpoint")
    q.add_argument("--remote", default=None, help="score server URL")
    q.add_argument("--strict-range", action="store_true")
    q.add_argument("--out", default=None)
    q.set_defaults(fn=_cmd_denoise)

    q = sub.add_parser("train-toy-score", help="train the toy 2-D score net")
    q.add_argument("config")
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(fn=_cmd_train_toy)

    q = sub.add_parser("verify", help="run the oracle suites")
    q.add_argument("--quick", action="store_true",
                   help="skip the slow criteria (toy training, deblurring)")
    q.add_argument("--seed", type=int, default=None)
    q.set_defaults(fn=_cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScorePnpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
