"""Command-line entry point.

Precedence for every setting: built-in defaults, then the ``--config`` JSON
document, then command-line flags. Exit codes: 0 success, 2 configuration
error, 3 numerical or convergence error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import BiphotonError, ConfigError, NumericalError, StageError
from .figures import DEFAULT_LENGTHS, DEFAULT_VISIBILITIES, FIGURES, run_counts_sweep, run_length_sweep, run_scaling
from .pipeline import DEFAULT_SMOOTH_NM, STAGES, DeviceConfig, load_config, run_pipeline
from .presets import PRESETS

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _global_options(default) -> argparse.ArgumentParser:
    # shared by the top-level parser and every subcommand so the flags work
    # on either side of the subcommand name
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", default=default, help="JSON device configuration")
    g.add_argument("--out", metavar="DIR", default=default, help="output directory (default: ./out)")
    g.add_argument("--seed", type=int, metavar="U64", default=default, help="RNG seed for count sampling")
    g.add_argument("--grid-points", type=int, metavar="N", default=default, help="signal-frequency grid points")
    g.add_argument(
        "--smooth-nm", type=float, nargs="?", const=DEFAULT_SMOOTH_NM, metavar="NM", default=default,
        help=f"moving-average window for measured transmission files (flag alone: {DEFAULT_SMOOTH_NM:g} nm)",
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    top = _global_options(None)
    sub_globals = _global_options(argparse.SUPPRESS)
    ap = argparse.ArgumentParser(prog="biphoton", description=__doc__.splitlines()[0], parents=[top])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sp = ap.add_subparsers(dest="command", required=True)

    p = sp.add_parser("pipeline", parents=[sub_globals], help="source -> coupler -> filter -> HOM -> metrology")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--stages", default=",".join(STAGES), help="comma-separated prefix of the stage chain")
    p.add_argument("--filter-nm", type=float, help="rectangular band-pass width about the degenerate wavelength")
    p.add_argument("--anyonic", type=float, nargs="?", const=0.5, metavar="ALPHA", help="add the anyonic comparison curve")
    p.add_argument("--taper-length", type=float, metavar="M", help="rescale the taper to this length")

    p = sp.add_parser("sweep-taper", parents=[sub_globals], help="visibility and crossed transmission vs taper length")
    p.add_argument("--preset", choices=PRESETS[:3], default=None)
    p.add_argument("--lengths-um", type=_floats, help="comma-separated taper lengths in micrometres")

    p = sp.add_parser("counts-sweep", parents=[sub_globals], help="PGR and CAR vs pump power")
    p.add_argument("--scenario", metavar="PATH", help="counts scenario JSON (default: bundled calibration)")
    p.add_argument("--powers-mw", type=_floats, help="comma-separated pump powers in mW")

    p = sp.add_parser("scaling", parents=[sub_globals], help="max FI / QFI vs visibility")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--visibilities", type=_floats, help="comma-separated target visibilities")

    p = sp.add_parser("fig", parents=[sub_globals], help="write the data behind one figure")
    p.add_argument("figure", choices=sorted(FIGURES))
    return ap


def _config(args, **overrides) -> DeviceConfig:
    cfg = load_config(args.config) if args.config else DeviceConfig()
    return cfg.with_overrides(seed=args.seed, grid_points=args.grid_points, smooth_nm=args.smooth_nm, **overrides)


def _run(args) -> dict:
    out = args.out or "out"
    if args.command == "pipeline":
        cfg = _config(args, preset=args.preset, filter_width_nm=args.filter_nm, anyonic_alpha=args.anyonic, taper_length=args.taper_length)
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        res = run_pipeline(cfg, stages, out)
        summary = dict(res.report or {})
        if res.metrology is not None:
            summary["metrology"] = res.metrology.to_dict()
        summary["outputs"] = list(res.outputs)
        return summary
    if args.command == "sweep-taper":
        cfg = _config(args)
        cfg = cfg.with_overrides(preset=args.preset or ("taper2" if cfg.preset == "straight" else None))
        lengths = [L * 1e-6 for L in args.lengths_um] if args.lengths_um else DEFAULT_LENGTHS
        return run_length_sweep(cfg, out, lengths)
    if args.command == "counts-sweep":
        return run_counts_sweep(_config(args), out, args.powers_mw, args.scenario)
    if args.command == "scaling":
        return run_scaling(_config(args, preset=args.preset), out, args.visibilities or DEFAULT_VISIBILITIES)
    if args.command == "fig":
        return FIGURES[args.figure](_config(args), out)
    raise ConfigError(f"unknown command {args.command!r}")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, NumericalError | ArithmeticError):
        return EXIT_NUMERICAL
    if isinstance(exc, ConfigError | ValueError | BiphotonError):
        return EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = _run(args)
    except (BiphotonError, ValueError, ArithmeticError, OSError) as exc:
        print(f"biphoton: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
