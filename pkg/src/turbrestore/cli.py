"""Command line entry point: restore, synth, metrics, bench."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import bench, metrics, pipeline, seqio, synth
from .errors import ConfigError, RestoreError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

# fields whose dataclass default is None but which hold floats
_FLOAT_KEYS = {"alpha", "alpha_obj"}


def _coerce(key, text, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if key in _FLOAT_KEYS:
            return None if text.lower() in ("", "none") else float(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    return text


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    defaults = {f.name: f.default for f in dataclasses.fields(pipeline.PipelineConfig)}
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in pipeline.PipelineConfig.keys():
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, val, defaults[key])
    return out


def build_config(args) -> pipeline.PipelineConfig:
    values = read_config(args.config) if args.config else {}
    flags = {"L": args.levels, "N_b": args.nb, "N_f": args.nf,
             "warp_threshold": args.warp_threshold}
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.coarse_only:
        values["coarse_only"] = True
    return pipeline.PipelineConfig(**values)


def cmd_restore(args):
    config = build_config(args)
    src = seqio.load_sequence(args.input)
    frames = iter(src)
    first = next(frames)
    state = pipeline.init(first.luma, config, first.chroma)
    with seqio.SequenceWriter(args.out, like=src,
                              y4m_name=os.path.basename(args.input)) as out:
        y, c = pipeline.first_output(state)
        out.write(y, c)
        for i, f in enumerate(frames, start=1):
            y, c, state = pipeline.process_frame(state, f.luma, f.chroma)
            out.write(y, c)
            if args.verbose:
                print(f"frame {i + 1}/{len(src)}", file=sys.stderr)
    summary = pipeline.finalize(state)
    print(f"restored {summary['frames']} frames -> {out.path}")
    return 0


def _parse_pair(text, cast=float, sep=","):
    parts = text.lower().replace("x", sep).split(sep)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two values, got {text!r}")
    return tuple(cast(p) for p in parts)


def cmd_synth(args):
    if args.truth:
        truth = seqio.load_sequence(args.truth).read(0).luma
    else:
        truth = synth.test_scene(args.size, seed=args.seed)
    mover = None
    if args.object_size:
        patch = synth.textured_patch(args.object_size, seed=args.seed + 1)
        start = args.object_start or (0.0, truth.shape[0] / 2 - args.object_size / 2)
        mover = synth.MovingObject(patch, start, args.object_velocity)
    spec = synth.TurbulenceSpec(args.amplitude, args.correlation, args.temporal,
                                args.blur, args.noise, args.seed, mover)
    seq = synth.synth_sequence(truth, spec, args.frames)
    os.makedirs(args.out, exist_ok=True)
    kind = "y4m" if args.format == "y4m" else "images"
    path = seqio.write_sequence(args.out, list(seq.frames), kind=kind,
                                ext="." + args.format, bit_depth=args.bit_depth)
    seqio.write_sequence(os.path.join(args.out, "truth"), list(seq.scenes),
                         ext=".png", bit_depth=16)
    # raw ground truth for scoring; .npy files are byte-reproducible
    np.save(os.path.join(args.out, "fields.npy"), seq.fields.astype(np.float32))
    np.save(os.path.join(args.out, "masks.npy"), seq.masks)
    print(f"wrote {args.frames} frames -> {path}")
    return 0


def _open_csv(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def cmd_metrics(args):
    a = list(seqio.load_sequence(args.a).luma())
    b = list(seqio.load_sequence(args.b).luma())
    mask = None
    if args.bg_mask:
        mask = seqio.load_sequence(args.bg_mask).read(0).luma > 0.5
    report = metrics.compare(a, b, mask)
    fh, close = _open_csv(args.csv)
    try:
        w = csv.writer(fh)
        for row in report.rows():
            w.writerow([_fmt(v) for v in row])
    finally:
        if close:
            fh.close()
    print(f"temporal stability: a={report.stability_a:.6f} b={report.stability_b:.6f}",
          file=sys.stderr)
    return 0


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v


def cmd_bench(args):
    sizes = [_parse_pair(s, int) for s in args.sizes.split(",")]
    rows = bench.run(sizes, args.frames, args.window, args.levels, args.seed)
    fh, close = _open_csv(args.csv)
    try:
        w = csv.writer(fh)
        w.writerow(["height", "width", "mode", "sec_per_frame"])
        for h, wd, mode, sec in rows:
            w.writerow([h, wd, mode, f"{sec:.6f}"])
    finally:
        if close:
            fh.close()
    return 0


def make_parser():
    p = argparse.ArgumentParser(prog="turbrestore",
                                description="Recursive turbulence restoration for video.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("restore", help="restore a frame sequence")
    r.add_argument("input", help="image directory, glob, %%0Nd pattern or .y4m file")
    r.add_argument("--out", required=True, help="output directory (or .y4m path)")
    r.add_argument("--levels", type=int, help="DT-CWT levels")
    r.add_argument("--nb", type=int, help="background history length")
    r.add_argument("--nf", type=int, help="foreground history length")
    r.add_argument("--coarse-only", action="store_true", help="register on coarse levels only")
    r.add_argument("--warp-threshold", type=float, help="residual that triggers object warping")
    r.add_argument("--config", help="key = value file; flags override it")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_restore)

    s = sub.add_parser("synth", help="generate a synthetic turbulent sequence")
    s.add_argument("--truth", help="ground-truth image (default: procedural scene)")
    s.add_argument("--size", type=lambda t: _parse_pair(t, int), default=(256, 256),
                   help="HxW of the procedural scene")
    s.add_argument("--frames", type=int, default=50)
    s.add_argument("--amplitude", type=float, default=3.0)
    s.add_argument("--correlation", type=float, default=20.0)
    s.add_argument("--temporal", type=float, default=1.0, help="AR(1) time constant (frames)")
    s.add_argument("--blur", type=float, default=0.5)
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--object-size", type=int, default=0, help="side of a moving square (0: none)")
    s.add_argument("--object-start", type=_parse_pair, help="x,y of its top-left corner")
    s.add_argument("--object-velocity", type=_parse_pair, default=(4.0, 0.0))
    s.add_argument("--format", choices=("png", "pgm", "y4m"), default="png")
    s.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("metrics", help="per-frame MSE/PSNR of sequence a against b (CSV)")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--bg-mask", help="image; pixels > 0.5 count for temporal stability")
    m.add_argument("--csv", help="output file (default stdout)")
    m.set_defaults(func=cmd_metrics)

    b = sub.add_parser("bench", help="sec/frame of the recursive and sliding-window modes (CSV)")
    b.add_argument("--sizes", default="224x320,576x704,720x1280")
    b.add_argument("--frames", type=int, default=4)
    b.add_argument("--window", type=int, default=20)
    b.add_argument("--levels", type=int, default=4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", help="output file (default stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RestoreError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
