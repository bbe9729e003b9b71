"""Command-line entry point: ``xrpdprep <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .core import load_pattern, save_pattern
from .deblur import deblur_full_pattern
from .exceptions import StageError, XRPDError
from .hlsvd import hlsvd_fit, reconstruct
from .morphology import estimate_background
from .pipeline import PipelineConfig, emit_figure_tables, run_pipeline
from .synth import SynthSpec, synth_pattern
from .wavelet import daubechies_filter, denoise

log = logging.getLogger("xrpdprep")


def _k(value):
    return value if value == "auto" else int(value)


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec)
    pattern, truth = synth_pattern(spec)
    save_pattern(pattern, args.out, {"stage": "raw", "seed": spec.seed})
    if args.truth_dir:
        truth.save(args.truth_dir)


def cmd_denoise(args):
    p = load_pattern(args.input)
    clean, noise = denoise(p, daubechies_filter(args.order), args.levels)
    save_pattern(clean, args.out, {"stage": "denoised", "order": args.order})
    if args.noise_out:
        save_pattern(noise, args.noise_out, {"stage": "noise"})


def cmd_background(args):
    p = load_pattern(args.input, allow_negative=True)
    bg, corrected = estimate_background(p, args.radius)
    save_pattern(corrected, args.out, {"stage": "background_free", "radius": args.radius})
    if args.background_out:
        save_pattern(bg, args.background_out, {"stage": "background"})


def cmd_fit(args):
    p = load_pattern(args.input, allow_negative=True)
    if args.range:
        lo, hi = (float(v) for v in args.range.split(":"))
        p = p.window(lo, hi)
    model = hlsvd_fit(p, _k(args.k), method=args.method)
    with open(args.out, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
    if args.recon_out:
        save_pattern(p.with_intensity(reconstruct(model, p.theta)), args.recon_out,
                     {"stage": "fit_reconstruction"})


def cmd_deblur(args):
    sample = load_pattern(args.input)
    standard = load_pattern(args.standard)
    out, ranges = deblur_full_pattern(sample, standard, args.iterations, args.damping, args.prominence)
    save_pattern(out, args.out, {"stage": "deblurred"})
    if args.ranges_out:
        with open(args.ranges_out, "w") as fh:
            json.dump([r.to_dict() for r in ranges], fh, indent=2)


_RUN_FLAGS = {
    "input": str,
    "standard": str,
    "output_dir": str,
    "wavelet_order": int,
    "levels": str,
    "bg_radius": int,
    "K": str,
    "lr_iterations": int,
    "damping_threshold": float,
    "prominence": float,
    "deblur_input": str,
    "fit_range": str,
    "fit_method": str,
}


def cmd_run(args):
    overrides = {k: getattr(args, k) for k in _RUN_FLAGS}
    for flag in ("skip_denoise", "skip_background", "skip_fit"):
        if getattr(args, flag):
            overrides[flag] = True
    if args.config:
        cfg = PipelineConfig.from_file(args.config, **overrides)
    else:
        given = {k: v for k, v in overrides.items() if v is not None}
        missing = [k for k in ("input", "standard", "output_dir") if k not in given]
        if missing:
            raise StageError("config", f"missing required settings: {', '.join(missing)}")
        cfg = PipelineConfig.from_mapping(given)
    report = run_pipeline(cfg)
    res = report["residue"]
    print(f"relative in-range residue RMS: {res['relative_rms']:.4g}")


def cmd_figures(args):
    for path in emit_figure_tables(args.run_dir, args.out):
        print(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="xrpdprep", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pattern")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-dir")
    p.set_defaults(func=cmd_synth, stage="synth")

    p = sub.add_parser("denoise", help="wavelet denoising")
    p.add_argument("input")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--levels", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-out")
    p.set_defaults(func=cmd_denoise, stage="denoise")

    p = sub.add_parser("background", help="morphological background removal")
    p.add_argument("input")
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--background-out")
    p.set_defaults(func=cmd_background, stage="background")

    p = sub.add_parser("fit", help="HLSVD damped-sinusoid fit")
    p.add_argument("input")
    p.add_argument("--k", default="auto")
    p.add_argument("--range", help="theta_min:theta_max")
    p.add_argument("--method", choices=("real", "analytic"), default="real")
    p.add_argument("--out", required=True)
    p.add_argument("--recon-out")
    p.set_defaults(func=cmd_fit, stage="fit")

    p = sub.add_parser("deblur", help="damped Richardson-Lucy deblurring")
    p.add_argument("input")
    p.add_argument("--standard", required=True)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--prominence", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--ranges-out")
    p.set_defaults(func=cmd_deblur, stage="deblur")

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config")
    for name, typ in _RUN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-").lower(), dest=name, type=typ)
    p.add_argument("--damping", dest="damping_threshold", type=float, help=argparse.SUPPRESS)
    p.add_argument("--skip-denoise", action="store_true")
    p.add_argument("--skip-background", action="store_true")
    p.add_argument("--skip-fit", action="store_true")
    p.set_defaults(func=cmd_run, stage="run")

    p = sub.add_parser("figures", help="write figure tables for a completed run")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_figures, stage="figures")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (XRPDError, OSError, ValueError) as exc:
        print(f"error: [{args.stage}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
