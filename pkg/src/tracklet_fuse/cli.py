"""Command-line entry point: ``tracklet-fuse <stage> --out RUN_DIR [...]``."""

from __future__ import annotations

import argparse
import gc
import sys
from pathlib import Path

from . import __version__, io, pipeline
from .model import ContractError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {v} outside [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tracklet-fuse",
        description="Simulate multi-camera player thumbnails, build tracklets, stitch them "
                    "across cameras and identify shirt numbers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, scenario_required=False):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--out", type=Path, required=True, help="run directory")
        p.add_argument("--scenario", type=Path, required=scenario_required,
                       help="scenario document" + ("" if scenario_required else
                                                   " (default: RUN_DIR/scenario.yaml)"))
        p.add_argument("--seed", type=_u64, help="override the scenario seed")
        p.add_argument("--params", type=Path, help="tracker/stitcher/fusion parameter file")
        return p

    p = add("simulate", "scenario -> thumbnail stream and ground truth", True)
    p.add_argument("--strip-truth", action="store_true", help="omit truth ids from the thumbnail stream")
    add("track", "thumbnails -> per-camera tracklets")
    add("stitch", "tracklets -> global tracks")
    add("identify", "tracks -> shirt-number verdicts")
    p = add("evaluate", "tracks + ground truth -> metrics")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p = add("pipeline", "every stage in order", True)
    p.add_argument("--strip-truth", action="store_true", help="omit truth ids from the thumbnail stream")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    return ap


def _run(args) -> None:
    out: Path = args.out
    params = io.load_params(args.params) if args.params else pipeline.DEFAULT_PARAMS
    tp, sp, fp = params
    s = pipeline.load_run_scenario(out, args.scenario, args.seed)
    cmd = args.command
    if cmd == "simulate":
        pipeline.simulate(s, out, args.strip_truth)
    elif cmd == "pipeline":
        rows = pipeline.run_all(s, out, params, args.strip_truth, args.format)
        sys.stdout.write(io.metrics_report(rows))
    elif cmd == "track":
        pipeline.track(s, out, pipeline.read_thumbnails(out), tp)
    elif cmd == "stitch":
        ths = pipeline.read_thumbnails(out)
        pipeline.stitch_stage(s, out, pipeline.read_tracklets(out, ths), sp, fp)
    elif cmd == "identify":
        ths = pipeline.read_thumbnails(out)
        pipeline.identify(s, out, pipeline.read_tracks(out, pipeline.read_tracklets(out, ths)), fp)
    elif cmd == "evaluate":
        sys.stdout.write(io.metrics_report(pipeline.evaluate(s, out, args.format)))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    # stage data is acyclic, and cyclic collection would rescan millions of
    # live thumbnails at every full pass
    enabled = gc.isenabled()
    gc.disable()
    try:
        _run(args)
    except (io.ParseError, io.ValidationError, io.SchemaError, ContractError) as exc:
        print(f"tracklet-fuse: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"tracklet-fuse: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"tracklet-fuse: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if enabled:
            gc.enable()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
