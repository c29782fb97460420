"""Command-line front door.

Exit codes: 0 success, 1 bad usage, 2 runtime failure (including a failed
gradient audit). Report files land under the config's ``out_dir``; the
``BIOFUSE_OUT`` environment variable prepends an output root.
"""

import argparse
import sys

import numpy as np

from .data import SynthConfig, export_sources, synth_sources
from .experiments import (
    load_config,
    render_report,
    run,
    sweep_modalities,
    sweep_noise,
    sweep_tasks,
)
from .gradsuite import DEFAULT_TOLERANCE, run_gradient_suite

_SWEEPS = {
    "modalities": sweep_modalities,
    "tasks": sweep_tasks,
    "noise": sweep_noise,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="biofuse",
        description="Multimodal biometric identification experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train and evaluate the configured cell")
    p.add_argument("config", help="JSON experiment config")

    p = sub.add_parser("sweep", help="run one of the standard sweeps")
    p.add_argument("kind", choices=sorted(_SWEEPS))
    p.add_argument("config", help="JSON experiment config")

    p = sub.add_parser("gradcheck", help="finite-difference audit of every layer")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)

    p = sub.add_parser("synth", help="write a synthetic source tree")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--out", required=True, help="directory for the source tree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--images-per-source", type=int, default=6)
    p.add_argument("--seconds", type=float, default=40.0)
    return parser


def _cmd_run(args):
    table = run(load_config(args.config))
    sys.stdout.write(render_report(table, "text"))
    return 0


def _cmd_sweep(args):
    table = _SWEEPS[args.kind](load_config(args.config))
    sys.stdout.write(render_report(table, "text"))
    return 0


def _cmd_gradcheck(args):
    results = run_gradient_suite()
    bad = 0
    for result in results:
        ok = result.ok(args.tolerance)
        bad += not ok
        print(
            f"{result.name:22s} max_rel_error {result.report.max_rel_error:.3e} "
            f"checked {result.report.checked:3d}  {'ok' if ok else 'FAIL'}"
        )
    print(f"{len(results) - bad}/{len(results)} components within {args.tolerance:g}")
    return 2 if bad else 0


def _cmd_synth(args):
    config = SynthConfig(
        n_subjects=args.subjects,
        image_size=args.image_size,
        images_per_source=args.images_per_source,
        seconds=args.seconds,
    )
    faces, ecgs, fingers = synth_sources(config, np.random.default_rng(args.seed))
    export_sources(faces, ecgs, fingers, args.out)
    print(f"wrote {len(faces)} subjects under {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "synth": _cmd_synth,
}


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"biofuse: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
