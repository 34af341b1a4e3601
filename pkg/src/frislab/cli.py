"""Command line entry point: ``frislab run|preset|analytic|presets``."""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .harness import (ConfigError, analytic_sweep, parse_config, preset_spec, run_sweep,
                      write_csv)
from .presets import list_presets


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _parser():
    ap = argparse.ArgumentParser(prog="frislab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, out=True):
        if out:
            p.add_argument("--out", required=True, help="CSV destination")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes")
        p.add_argument("--backend", choices=("numba", "numpy"), help="kernel backend")
        p.add_argument("--max-frames", type=_positive, help="per-point frame cap")

    common(run := sub.add_parser("run", help="simulate a sweep from a config file"))
    run.add_argument("--config", required=True)
    common(pre := sub.add_parser("preset", help="simulate a named figure preset"))
    pre.add_argument("name")
    ana = sub.add_parser("analytic", help="union-bound curve only")
    ana.add_argument("--config", required=True)
    ana.add_argument("--out", required=True)
    sub.add_parser("presets", help="list presets")
    return ap


def _overrides(spec, args):
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "max_frames", None) is not None:
        kw["max_frames"] = args.max_frames
        kw["min_frames"] = min(spec.min_frames, args.max_frames)
    return dataclasses.replace(spec, **kw) if kw else spec


def _progress(frames, active):
    print(f"\r{frames:>10d} frames, {active} points running", end="", file=sys.stderr, flush=True)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "presets":
            for name, desc in list_presets():
                print(f"{name:22s} {desc}")
            return 0
        if args.cmd == "analytic":
            with open(args.config) as fh:
                spec = parse_config(fh.read())
            write_csv(analytic_sweep(spec), args.out)
            return 0
        if args.cmd == "run":
            with open(args.config) as fh:
                spec = parse_config(fh.read())
        else:
            spec = preset_spec(args.name)
        spec = _overrides(spec, args)
        res = run_sweep(spec, workers=args.workers, backend=args.backend, progress=_progress)
        print(file=sys.stderr)
        write_csv(res, args.out)
    except (ConfigError, KeyError) as exc:
        print(f"frislab: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"frislab: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
