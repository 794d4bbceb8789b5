"""CLI: scorepnp-server --checkpoint <file> [--kind ...] [--port ...]."""

from __future__ import annotations

import argparse

from .app import serve_forever
from .models import load_model


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scorepnp-server", description=__doc__)
    p.add_argument("--checkpoint", required=True,
                   help="model file: GMM JSON, toy checkpoint, or TorchScript")
    p.add_argument("--kind", default="toy-checkpoint",
                   choices=("analytic-gmm", "toy-checkpoint", "torchscript"))
    p.add_argument("--schedule", default=None,
                   help="schedule JSON (required for analytic-gmm)")
    p.add_argument("--convention", default="vp", choices=("ve", "vp"),
                   help="serving convention for analytic-gmm")
    p.add_argument("--value-domain", default="0,1",
                   help="trained pixel domain, e.g. '0,1' or '-1,1'")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8706)
    p.add_argument("--device", default="cpu")
    p.add_argument("--workers", type=int, default=4)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    lo, hi = (float(v) for v in args.value_domain.split(","))
    model = load_model(args.kind, args.checkpoint, device=args.device,
                       schedule_path=args.schedule, convention=args.convention,
                       value_domain=(lo, hi))
    serve_forever(model, host=args.host, port=args.port,
                  max_workers=args.workers)
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
