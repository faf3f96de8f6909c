"""Command line front end.

Subcommands mirror the library pipeline: ``simulate`` writes a homodyne
record, ``reconstruct`` turns a record into a Wigner grid file, ``oracle``
writes the exact grid for a known state, ``compare`` reports error norms
between two grid files, and ``plot`` emits gnuplot artifacts for one.

All failures print a single machine-parsable line ``error: <category>:
<message>`` on stderr and exit with a category-specific code: 2 for command
line usage (argparse), 3 for configuration problems, 4 for unreadable or
malformed files, 5 for numerical-safety guards, 6 for a tolerance violation
in ``compare``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import __version__
from .errors import TomographyError, ValidationError
from .homodyne import (
    load_record,
    make_state,
    sample_homodyne,
    save_record_binary,
    save_record_text,
    suggest_dim,
)
from .pipeline import (
    ReconstructionConfig,
    compare_wigner_grids,
    load_wigner_grid,
    oracle_wigner_grid,
    reconstruct_wigner_grid,
    save_wigner_grid,
    write_gnuplot_files,
)

_EXIT_CODES = {"config": 3, "format": 4, "guard": 5, "tolerance": 6, "io": 4}


class ToleranceExceeded(TomographyError):
    category = "tolerance"


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError:
        raise ValidationError(
            f"cannot parse {text!r} as a complex number (try e.g. '1.5j' or '0.3+0.2j')"
        ) from None


def _parse_phase(text: str) -> float:
    cleaned = text.strip().lower()
    if cleaned in ("pi", "+pi"):
        return math.pi
    if cleaned == "-pi":
        return -math.pi
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as a phase (radians or 'pi')") from None


def _parse_deficit(text: str):
    # "none" must survive the None-means-unset override merge, so keep it as a
    # marker string here and translate when assembling the config
    if text.strip().lower() == "none":
        return "none"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"cannot parse {text!r} as a column-sum bound (number or 'none')"
        ) from None


def _add_state_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--state", required=True,
                        choices=["vacuum", "fock", "coherent", "cat"],
                        help="state family to prepare")
    parser.add_argument("--n", type=int, default=None, help="photon number (fock)")
    parser.add_argument("--alpha", type=str, default=None,
                        help="complex amplitude, e.g. '1.5j' (coherent, cat)")
    parser.add_argument("--relative-phase", type=str, default="0",
                        help="cat superposition phase in radians, or 'pi'")
    parser.add_argument("--dim", type=int, default=None,
                        help="Fock-space truncation (default: sized from the state)")


def _build_state(args: argparse.Namespace):
    alpha = _parse_complex(args.alpha) if args.alpha is not None else 0j
    if args.state in ("coherent", "cat") and args.alpha is None:
        raise ValidationError(f"--alpha is required for --state {args.state}")
    if args.state == "fock" and args.n is None:
        raise ValidationError("--n is required for --state fock")
    phase = _parse_phase(args.relative_phase)
    dim = args.dim
    if dim is None:
        dim = suggest_dim(args.state, n=args.n, alpha=alpha)
    state = make_state(args.state, dim, n=args.n, alpha=alpha, relative_phase=phase)
    if args.state == "vacuum":
        label = "vacuum"
    elif args.state == "fock":
        label = f"fock(n={args.n})"
    elif args.state == "coherent":
        label = f"coherent(alpha={alpha})"
    else:
        label = f"cat(alpha={alpha}, relative_phase={phase:g})"
    return state, f"{label} dim={dim}"


def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--q-min", type=float, default=None)
    parser.add_argument("--q-max", type=float, default=None)
    parser.add_argument("--q-steps", type=int, default=None)
    parser.add_argument("--p-min", type=float, default=None)
    parser.add_argument("--p-max", type=float, default=None)
    parser.add_argument("--p-steps", type=int, default=None)


def _cmd_simulate(args: argparse.Namespace) -> int:
    state, label = _build_state(args)
    record = sample_homodyne(
        state, args.phases, args.events, args.eta, args.seed,
        tab_range=args.tab_range, source=label,
    )
    if args.format == "binary":
        save_record_binary(args.out, record)
    else:
        save_record_text(args.out, record)
    print(
        f"wrote {record.sample_count} samples ({args.phases} phases x "
        f"{args.events} events, eta={args.eta:g}) for {label} to {args.out}"
    )
    return 0


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    data = {}
    if args.config:
        data = ReconstructionConfig.from_file(args.config).to_dict()
    overrides = {
        "eta": args.eta, "x_min": args.x_min, "x_max": args.x_max,
        "bin_count": args.bin_count, "n_max": args.n_max,
        "localization_radius": args.localization_radius,
        "max_iter": args.max_iter, "plateau_tol": args.plateau_tol,
        "record_every": args.record_every,
        "q_min": args.q_min, "q_max": args.q_max, "q_steps": args.q_steps,
        "p_min": args.p_min, "p_max": args.p_max, "p_steps": args.p_steps,
        "seed": args.seed, "record_path": args.record, "output_path": args.out,
        "kernel_cache": args.kernel_cache,
        "max_column_deficit": args.max_column_deficit,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if data.get("max_column_deficit") == "none":
        data["max_column_deficit"] = None
    if data.get("record_path") is None:
        raise ValidationError("no record file given (--record or config record_path)")
    record = load_record(data["record_path"])
    data.setdefault("eta", record.eta)
    if data.get("n_max") is None and data.get("localization_radius") is None:
        raise ValidationError("set --n-max or --localization-radius (or via config)")
    config = ReconstructionConfig.from_dict(data)
    if config.output_path is None:
        raise ValidationError("no output file given (--out or config output_path)")
    grid = reconstruct_wigner_grid(record, config)
    save_wigner_grid(config.output_path, grid)
    total = grid.qs.size * grid.ps.size
    print(
        f"reconstructed {total - len(grid.failures)}/{total} grid points "
        f"(n_max={config.resolve_cutoff()}, {record.sample_count} samples) "
        f"-> {config.output_path}"
    )
    if grid.failures:
        print(f"{len(grid.failures)} points failed; see comments in the grid file")
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    import numpy as np

    state, label = _build_state(args)
    if args.n_max is None and args.localization_radius is None:
        raise ValidationError("set --n-max or --localization-radius")
    if args.n_max is not None:
        n_max = args.n_max
    else:
        from .em import default_cutoff

        n_max = default_cutoff(args.localization_radius)
    defaults = {"q_min": -2.0, "q_max": 2.0, "q_steps": 21,
                "p_min": -2.0, "p_max": 2.0, "p_steps": 21}
    vals = {k: getattr(args, k) if getattr(args, k) is not None else v
            for k, v in defaults.items()}
    qs = np.linspace(vals["q_min"], vals["q_max"], vals["q_steps"])
    ps = np.linspace(vals["p_min"], vals["p_max"], vals["p_steps"])
    grid = oracle_wigner_grid(state, qs, ps, n_max)
    grid.meta["source"] = label
    save_wigner_grid(args.out, grid)
    print(f"wrote exact Wigner grid for {label} (n_max={n_max}) to {args.out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    a = load_wigner_grid(args.grid_a)
    b = load_wigner_grid(args.grid_b)
    norms = compare_wigner_grids(a, b)
    for key in ("max_abs", "rms", "mean_abs", "compared_points", "skipped_points"):
        print(f"{key} {norms[key]:.6g}" if isinstance(norms[key], float)
              else f"{key} {norms[key]}")
    if args.max_abs is not None and norms["max_abs"] > args.max_abs:
        raise ToleranceExceeded(
            f"max_abs {norms['max_abs']:.6g} exceeds bound {args.max_abs:g}"
        )
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    grid = load_wigner_grid(args.grid)
    dat, gp = write_gnuplot_files(grid, args.out_prefix)
    print(f"wrote {dat} and {gp}; render with: gnuplot {gp}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emtomo",
        description="Homodyne tomography: simulate records, reconstruct Wigner "
                    "functions by maximum likelihood, and check against exact values.",
    )
    parser.add_argument("--version", action="version", version=f"emtomo {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample a homodyne record from a known state")
    _add_state_args(sim)
    sim.add_argument("--phases", type=int, required=True,
                     help="number of equally spaced phases in [0, pi)")
    sim.add_argument("--events", type=int, required=True, help="samples per phase")
    sim.add_argument("--eta", type=float, required=True, help="detection efficiency")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--tab-range", type=float, default=8.0,
                     help="initial half-range of the sampling density table")
    sim.add_argument("--out", required=True, help="record file to write")
    sim.add_argument("--format", choices=["text", "binary"], default="text")
    sim.set_defaults(func=_cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct a Wigner grid from a record")
    rec.add_argument("--record", default=None, help="record file (text or binary)")
    rec.add_argument("--out", default=None, help="grid file to write")
    rec.add_argument("--config", default=None, help="JSON file of config fields")
    rec.add_argument("--eta", type=float, default=None,
                     help="detection efficiency (default: the record's)")
    rec.add_argument("--x-min", type=float, default=None)
    rec.add_argument("--x-max", type=float, default=None)
    rec.add_argument("--bin-count", type=int, default=None)
    rec.add_argument("--n-max", type=int, default=None, help="photon-number cutoff")
    rec.add_argument("--localization-radius", type=float, default=None,
                     help="phase-space radius to derive the cutoff from")
    rec.add_argument("--max-iter", type=int, default=None)
    rec.add_argument("--plateau-tol", type=float, default=None,
                     help="stop once the 100-iteration likelihood gain drops below this")
    rec.add_argument("--record-every", type=int, default=None)
    _add_grid_args(rec)
    rec.add_argument("--seed", type=int, default=None, help="echoed into the grid file")
    rec.add_argument("--kernel-cache", default=None,
                     help="binary kernel cache file to reuse or create")
    rec.add_argument("--max-column-deficit", type=_parse_deficit, default=None,
                     help="kernel column-sum guard; 'none' disables")
    rec.set_defaults(func=_cmd_reconstruct)

    orc = sub.add_parser("oracle", help="write the exact Wigner grid of a known state")
    _add_state_args(orc)
    orc.add_argument("--n-max", type=int, default=None)
    orc.add_argument("--localization-radius", type=float, default=None)
    _add_grid_args(orc)
    orc.add_argument("--out", required=True)
    orc.set_defaults(func=_cmd_oracle)

    cmp_ = sub.add_parser("compare", help="error norms between two grid files")
    cmp_.add_argument("grid_a")
    cmp_.add_argument("grid_b")
    cmp_.add_argument("--max-abs", type=float, default=None,
                      help="fail (exit 6) if the max abs difference exceeds this")
    cmp_.set_defaults(func=_cmd_compare)

    plt = sub.add_parser("plot", help="emit gnuplot data and script for a grid file")
    plt.add_argument("grid")
    plt.add_argument("--out-prefix", required=True)
    plt.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except TomographyError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 5)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return _EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
