"""``sympower`` command line.

Outputs go to ``--out``, else ``$SYMPOWER_OUT``, else ``./sympower-out``.
Exit status is 0 on success, 1 on a library error, 2 on bad usage and 3 when
any training cell diverged.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness as hz
from . import transforms as tf
from .dataio import (IMAGES, SyntheticKind, SyntheticSpec, bundled_audio, bundled_image,
                     generate_with_skew, load_image, load_wav, save_image, save_wav)
from .errors import SymPowerError
from .inr import Activation
from .tensor import Modality, Signal, compute_stats, range_metric, read_tensor, write_tensor

OUT_ENV = "SYMPOWER_OUT"
EXIT_ERROR, EXIT_USAGE, EXIT_DIVERGED = 1, 2, 3

log = logging.getLogger("sympower")


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or "sympower-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_signal(spec: str) -> Signal:
    """A file path, or ``bundled:<name>`` for a bundled image / ``bundled:audio``."""
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        return bundled_audio() if name == "audio" else bundled_image(name)
    path = Path(spec)
    suffix = path.suffix.lower()
    if suffix == ".wav":
        return load_wav(path)
    if suffix in (".spt", ".spt1"):
        return read_tensor(path)
    return load_image(path)


def save_signal(s: Signal, path: Path) -> None:
    suffix = path.suffix.lower()
    if suffix == ".wav":
        save_wav(s.with_data(np.clip(s.data, -1.0, 1.0)), path)
    elif suffix in (".pgm", ".ppm", ".png"):
        save_image(s.with_data(np.clip(s.data, 0.0, 1.0)), path)
    else:
        write_tensor(s, path)


def sym_config(args) -> tf.SymPowerConfig:
    return tf.SymPowerConfig(a=args.a, b=args.b, lam=args.lam, xi=args.xi, tau=args.tau,
                             kappa=args.kappa, bins=args.bins)


def settings(args) -> hz.FitSettings:
    checkpoints = tuple(int(c) for c in args.checkpoints.split(",")) if args.checkpoints \
        else tuple(c for c in hz.DEFAULT_CHECKPOINTS if c < args.iters) + (args.iters,)
    return hz.FitSettings(activation=Activation.FINER if args.backbone == "finer" else Activation.SINE,
                          hidden_layers=args.layers, width=args.width, omega0=args.omega0,
                          lr=args.lr, checkpoints=checkpoints)


def seeds(args):
    return tuple(range(args.seeds))


def describe(s: Signal, a=-1.0, b=1.0) -> str:
    st = compute_stats(s, keep_sorted=False)
    return (f"n={st.count} min={st.min:.6g} max={st.max:.6g} std={st.std:.6g} "
            f"skew={st.skewness:.4f} range={range_metric(s, a, b):.4f}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_transform(args) -> int:
    s = load_signal(args.input)
    kind = tf.TransformKind.parse(args.kind)
    t, params = tf.apply(s, kind, args.a, args.b, sym_cfg=sym_config(args))
    out = out_dir(args)
    stem = args.name or Path(args.input).stem.replace("bundled:", "")
    write_tensor(t, out / f"{stem}.spt")
    tf.write_params(params, out / f"{stem}.sptp")
    print(f"input   {describe(s, args.a, args.b)}")
    print(f"output  {describe(t, args.a, args.b)}")
    if kind.kind == tf.Kind.SYMPOWER:
        print(f"beta={params.beta:.6g} beta+={params.beta_plus:.6g} "
              f"pad0={params.pad0:.4g} pad1={params.pad1:.4g}")
    print(f"wrote {out / (stem + '.spt')} and {out / (stem + '.sptp')} ({params.digest()})")
    return 0


def cmd_invert(args) -> int:
    t = read_tensor(args.tensor)
    params = tf.read_params(args.sidecar)
    y = tf.invert(t, params)
    if args.like:
        ref = load_signal(args.like)
        y = Signal(y.data, ref.shape, ref.modality, ref.sample_rate)
    elif Path(args.output).suffix.lower() in (".pgm", ".ppm", ".png"):
        y = Signal(y.data, y.shape, Modality.IMAGE2D)
    save_signal(y, Path(args.output))
    print(f"wrote {args.output}  {describe(y)}")
    return 0


def cmd_fit(args) -> int:
    s = load_signal(args.input)
    variants = [hz.IDENTITY if v == "none" else hz.variant(tf.TransformKind.parse(v))
                for v in args.variants.split(",")]
    variants = [hz.Variant(v.label, v.kind, sym_config(args)) if v.kind == tf.SYMPOWER else v
                for v in variants]
    task = hz.Task.FIT_AUDIO if s.modality == Modality.AUDIO1D else hz.Task.FIT_IMAGE
    name = args.name or Path(args.input).stem.replace("bundled:", "")
    out = out_dir(args)
    report, deltas = hz.run_fit(s, name, variants, seeds(args), settings(args), out, task)
    report.write(out / f"{name}_fit.csv")
    metric = "si_snr" if task == hz.Task.FIT_AUDIO else "psnr"
    for cp in settings(args).checkpoints:
        line = "  ".join(f"{v.label}={report.mean(metric, cp, variant=v.label):.3f}" for v in variants)
        print(f"iter {cp:>6}  {metric}  {line}  delta={deltas[cp]:+.3f} dB")
    return finish(report)


def cmd_compare(args) -> int:
    inputs = hz.corpus(args.inputs.split(",")) if args.inputs else hz.corpus()
    spec = hz.compare_spec(inputs, seeds(args), settings(args))
    report = hz.run_compare(spec, args.workers, progress(args))
    return write_report(args, report, "compare", settings(args).iterations)


def cmd_hypothesis(args) -> int:
    cfg = settings(args)
    specs = dict(zip(("range", "skew", "deviation"),
                     hz.hypothesis_specs(seeds(args), cfg, image=args.image)))
    chosen = specs if args.sweep == "all" else {args.sweep: specs[args.sweep]}
    rows, diverged = [], False
    cp = cfg.iterations
    for key, spec in chosen.items():
        rep = hz.run_hypothesis(spec, args.workers, progress(args))
        rows += rep.rows
        diverged |= rep.diverged
        if key == "range":
            print(f"range: best k = {hz.range_argmax(rep, cp):g}")
        else:
            for name, v in hz.per_input_means(rep, cp).items():
                print(f"{key}: {name}  psnr={v:.3f}")
            if key == "deviation":
                print(f"deviation: spearman(sigma, psnr) = {hz.deviation_spearman(rep, cp):.3f}")
    return write_report(args, hz.Report(rows, diverged), "hypothesis", None)


def cmd_ablate(args) -> int:
    inputs = hz.corpus(args.inputs.split(",")) if args.inputs else hz.corpus()
    spec = hz.ablation_spec(inputs, seeds(args), settings(args))
    report = hz.run_ablation(spec, args.workers, progress(args))
    return write_report(args, report, "ablation", settings(args).iterations)


def cmd_gen(args) -> int:
    kind = SyntheticKind(args.kind)
    shape = tuple(int(n) for n in args.shape.split("x"))
    spec = SyntheticSpec(kind, shape, args.seed, args.mu, args.sigma, args.levels, args.value)
    s, skew = generate_with_skew(spec)
    path = Path(args.output)
    if not path.is_absolute() and path.parent == Path("."):
        path = out_dir(args) / path
    if kind == SyntheticKind.NORMAL_CLIPPED and path.suffix.lower() in (".pgm", ".ppm", ".png"):
        s = s.with_data(0.5 * (s.data + 1.0))  # [-1, 1] -> [0, 1] for 8-bit storage
    save_signal(s, path)
    print(f"wrote {path}  N={len(s)} skew={skew:.4f}")
    return 0


def progress(args):
    if args.quiet:
        return None
    return lambda cell: print(f"  done {cell.input_name} / {cell.variant.label} / seed {cell.seed}",
                              file=sys.stderr)


def write_report(args, report: hz.Report, stem: str, checkpoint) -> int:
    path = out_dir(args) / f"{stem}.csv"
    report.write(path)
    if checkpoint is not None:
        for label, v in report.summary("psnr", checkpoint).items():
            print(f"{label:>20}  psnr@{checkpoint}={v:.3f}")
    print(f"wrote {path}")
    return finish(report)


def finish(report: hz.Report) -> int:
    if report.diverged:
        print("warning: at least one cell diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_transform_flags(p):
    g = p.add_argument_group("transform")
    g.add_argument("--a", type=float, default=-1.0, help="lower target bound")
    g.add_argument("--b", type=float, default=1.0, help="upper target bound")
    g.add_argument("--lam", type=float, default=0.5, help="quantile level lambda")
    g.add_argument("--xi", type=float, default=0.5, help="calibration strength (0 disables)")
    g.add_argument("--tau", type=float, default=0.1, help="calibration window width")
    g.add_argument("--kappa", type=float, default=256.0, help="soft-boundary scale (0 disables)")
    g.add_argument("--bins", type=int, default=256, help="histogram bins")


def _add_fit_flags(p, iters=1000):
    g = p.add_argument_group("network")
    g.add_argument("--backbone", choices=("siren", "finer"), default="siren")
    g.add_argument("--layers", type=int, default=3, help="hidden layers")
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--omega0", type=float, default=30.0)
    g.add_argument("--lr", type=float, default=8e-4)
    g.add_argument("--iters", type=int, default=iters, help="training iterations")
    g.add_argument("--checkpoints", help="comma-separated evaluation iterations (overrides --iters)")
    g.add_argument("--seeds", type=int, default=5, help="number of seeds, 0..n-1")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sympower", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./sympower-out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="transform a signal and write tensor + sidecar")
    p.add_argument("input", help="image, WAV, .spt tensor or bundled:<name>")
    p.add_argument("--kind", default="sym-power", help="e.g. sym-power, scale(1), gamma(0.5), boxcox")
    p.add_argument("--name", help="output stem")
    _add_transform_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("invert", help="invert a transformed tensor with its sidecar")
    p.add_argument("tensor")
    p.add_argument("sidecar")
    p.add_argument("output", help=".pgm/.ppm/.png/.wav or .spt")
    p.add_argument("--like", help="reference signal whose shape and modality to restore")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("fit", help="fit one signal with several transforms")
    p.add_argument("input")
    p.add_argument("--variants", default="scale(1),sym-power",
                   help="comma-separated transforms; the delta is last minus first")
    p.add_argument("--name")
    _add_transform_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit, seeds=1)

    p = sub.add_parser("compare", help="compare every transform on the bundled corpus")
    p.add_argument("--inputs", help=f"comma-separated bundled images (default {','.join(IMAGES)})")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("hypothesis", help="range / skew / deviation sweeps")
    p.add_argument("--sweep", choices=("range", "skew", "deviation", "all"), default="all")
    p.add_argument("--image", default="camera", help="bundled image for the range sweep")
    _add_fit_flags(p, iters=500)
    p.set_defaults(func=cmd_hypothesis)

    p = sub.add_parser("ablate", help="toggle power map, calibration and soft boundary")
    p.add_argument("--inputs")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen", help="write a synthetic signal")
    p.add_argument("kind", choices=[k.value for k in SyntheticKind])
    p.add_argument("output", help=".pgm, .wav or .spt")
    p.add_argument("--shape", default="64x64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--value", type=float, default=0.5)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SymPowerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
