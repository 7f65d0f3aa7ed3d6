"""Command-line front end.

Subcommands: phantom, gain-estimate, simulate, train, denoise, evaluate.
Every stage is driven by a JSON config file plus flag overrides (flags beat
config values, config values beat built-in defaults), and a single global
seed makes full runs reproducible. Exit codes: 0 success, 1 contract or I/O
error (message on stderr), 2 usage error.
"""

import argparse
import sys
from dataclasses import replace

from .config import RunConfig
from .errors import ContractError, FormatError, NumericFailure
from .pipeline import (
    denoise_file,
    gain_estimate_file,
    run_evaluate,
    run_phantom,
    run_train,
    simulate_file,
)

# held so the cap lasts for the process lifetime
_LIMITER = None


def _limit_threads(n):
    global _LIMITER
    if n is None:
        return
    if n < 1:
        raise ContractError(f"--threads must be >= 1, got {n}")
    from threadpoolctl import threadpool_limits

    _LIMITER = threadpool_limits(limits=n)


def _parse_roi(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("roi must be ROW,COL,HEIGHT,WIDTH")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"roi must be four integers: {e}")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, field in (("seed", "seed"), ("data_dir", "data_dir"),
                        ("checkpoint_dir", "checkpoint_dir"),
                        ("n_train", "n_train"), ("n_val", "n_val"),
                        ("report", "report_path"), ("csv", "report_csv_path"),
                        ("history", "history_path")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[field] = v
    if getattr(args, "epochs", None) is not None:
        overrides["train"] = replace(cfg.train, epochs=args.epochs)
    return replace(cfg, **overrides) if overrides else cfg


def cmd_phantom(args) -> int:
    cfg = _load_config(args)
    manifest = run_phantom(cfg, log=print)
    print(f"{len(manifest['train'])} train + {len(manifest['val'])} val images "
          f"in {cfg.data_dir} (seed {cfg.seed})")
    return 0


def cmd_gain_estimate(args) -> int:
    g = gain_estimate_file(args.in_path, roi=args.roi)
    print(f"k = {g.k:.6g} +/- {g.confidence_halfwidth:.3g} "
          f"(95% CI, n={g.estimation_pixels} pixels)")
    return 0


def cmd_simulate(args) -> int:
    simulate_file(args.in_path, args.out, alpha=args.alpha, seed=args.seed,
                  gain_k=args.gain)
    print(f"wrote {args.out} (alpha={args.alpha}, seed={args.seed})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    _, history = run_train(cfg, log=print)
    print(f"trained {history.epochs_completed} epochs; "
          f"final val PSNR {history.val_psnr[-1]:.3f} dB")
    return 0


def cmd_denoise(args) -> int:
    denoise_file(args.checkpoint, args.in_path, args.out, gain_k=args.gain,
                 inverse_mode=args.inverse, tile=args.tile, overlap=args.overlap)
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    report = run_evaluate(cfg, log=print, checkpoint_path=args.checkpoint)
    print(report.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="xraydenoise",
        description="Low-dose X-ray denoising: simulation, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, epochs=False):
        p.add_argument("--config", default=None, help="JSON run config file")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument("--data-dir", dest="data_dir", default=None,
                       help="dataset directory override")
        if epochs:
            p.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=None,
                           help="checkpoint directory override")
            p.add_argument("--epochs", type=int, default=None, help="epoch override")
            p.add_argument("--history", default=None, help="history CSV path override")

    p = sub.add_parser("phantom", formatter_class=fmt,
                       help="generate a synthetic phantom dataset")
    add_config_flags(p)
    p.add_argument("--n-train", dest="n_train", type=int, default=None,
                   help="training image count override")
    p.add_argument("--n-val", dest="n_val", type=int, default=None,
                   help="validation image count override")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("gain-estimate", formatter_class=fmt,
                       help="estimate detector gain k from a flat region")
    p.add_argument("--in", dest="in_path", required=True, help="input image")
    p.add_argument("--roi", type=_parse_roi, default=None,
                   help="flat region as ROW,COL,HEIGHT,WIDTH (default: whole image)")
    p.set_defaults(func=cmd_gain_estimate)

    p = sub.add_parser("simulate", formatter_class=fmt,
                       help="write a seeded reduced-dose acquisition")
    p.add_argument("--in", dest="in_path", required=True, help="ground-truth image")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--alpha", type=float, default=0.2,
                   help="dose factor in (0, 1]")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--gain", type=float, default=1.0, help="detector gain k")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", formatter_class=fmt,
                       help="train the denoiser from a run config")
    add_config_flags(p, epochs=True)
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", formatter_class=fmt,
                       help="apply a checkpoint to one image")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--in", dest="in_path", required=True, help="noisy input image")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--gain", type=float, default=1.0, help="detector gain k")
    p.add_argument("--inverse", choices=("unbiased", "algebraic"),
                   default="unbiased", help="inverse transform variant")
    p.add_argument("--tile", type=int, default=64, help="inference tile size")
    p.add_argument("--overlap", type=int, default=16, help="tile overlap")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", formatter_class=fmt,
                       help="score the trained model against baselines")
    add_config_flags(p)
    p.add_argument("--checkpoint", default=None,
                   help="checkpoint override (default: <checkpoint_dir>/model.ckpt)")
    p.add_argument("--report", default=None, help="text report path override")
    p.add_argument("--csv", default=None, help="CSV report path override")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _limit_threads(getattr(args, "threads", None))
        return args.func(args)
    except (ContractError, FormatError, NumericFailure, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
