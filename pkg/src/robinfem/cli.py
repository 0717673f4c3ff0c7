"""Command-line interface: ``robinfem {mesh,constants,solve,mms,contraction}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .analysis import AdmissibilityError
from .geometry import format_mesh
from .linalg import SolverError

EXIT_OK, EXIT_FAIL, EXIT_INADMISSIBLE, EXIT_CONFIG = 0, 1, 2, 3


def _float_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robinfem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", help="output directory (default: the config's 'output', else '.')")
        return p

    add("mesh", "write the mesh of the config's geometry")
    add("constants", "trace constants, energy bound and admissibility report")
    add("solve", "full pipeline: mesh, constants, Picard solve, verification")
    mms = add("mms", "manufactured-solution convergence study on the half-disk")
    mms.add_argument("--kind", choices=("linear", "nonlinear"), default="nonlinear")
    mms.add_argument("--levels", type=int, default=4, help="number of refinement levels (>= 3)")
    mms.add_argument("--first-level", type=int, default=1)
    con = add("contraction", "Picard contraction factors over a grid of psi magnitudes")
    grid = con.add_mutually_exclusive_group()
    grid.add_argument("--eps2-grid", type=_float_list, help="comma-separated eps2 values")
    grid.add_argument("--fractions", type=_float_list,
                      help="comma-separated fractions of 1/(4*beta2^3*M0) (default 0.9,0.5,0.25,0.1,0.02)")
    con.add_argument("--negative", action="store_true", help="use psi = -eps2 (1 - delta)")
    return parser


def _out_dir(args, config) -> Path:
    return Path(args.out or config.output or ".")


def _constants_values(config):
    varphi, psi = config.coefficient_fields()
    if varphi.value is None or psi.value is None:
        raise harness.ConfigError("coefficients: the mms study needs constant varphi and psi")
    return varphi.value, psi.value


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = harness.load_config(args.config)
        if args.command == "mms" and config.geometry["type"] != "half_disk":
            raise harness.ConfigError("geometry.type: the mms study needs half_disk")
        if args.command == "mms":
            coeffs = _constants_values(config)
        seed = harness.seed_from_env()
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, config)

    try:
        if args.command == "mesh":
            harness.write_artifacts({"mesh.txt": format_mesh(config.build_mesh())}, out)
            return EXIT_OK
        if args.command == "constants":
            doc = harness.run_constants(config, seed=seed)
            harness.write_artifacts({"constants.json": harness.dumps(doc)}, out)
            print(f"admissible: {str(doc['admissible']).lower()}")
            return EXIT_OK
        if args.command == "solve":
            result = harness.run_config(config, seed=seed)
            harness.write_artifacts(result.artifacts, out)
            print(result.message, file=sys.stdout if result.status == 0 else sys.stderr)
            return result.status
        if args.command == "mms":
            geo = config.geometry
            table = harness.run_mms_study(args.kind, args.levels, coeffs[0], coeffs[1], radius=geo["R"],
                                          split_angle=geo["split_angle"], first_level=args.first_level,
                                          tol=config.tol, max_iter=config.max_iter, seed=seed)
            harness.write_artifacts({f"mms_{args.kind}.csv": table.to_csv(),
                                     f"mms_{args.kind}.json": harness.dumps(
                                         {"rows": table.rows, "picard": table.picard})}, out)
            sys.stdout.write(table.to_csv())
            ok = all(p["converged"] for p in table.picard)
            return EXIT_OK if ok else EXIT_FAIL
        if args.command == "contraction":
            grid = args.eps2_grid
            if grid is None:
                fractions = args.fractions or harness.DEFAULT_EPS2_FRACTIONS
                t = harness.eps2_threshold(config, seed=seed)
                grid = [f * t for f in fractions]
            rows = harness.run_contraction_study(config, grid, negative=args.negative, seed=seed)
            text = harness.contraction_csv(rows)
            harness.write_artifacts({"contraction.csv": text}, out)
            sys.stdout.write(text)
            return EXIT_OK if all(r["converged"] for r in rows) else EXIT_FAIL
    except AdmissibilityError as exc:
        print(f"inadmissible coefficients: {exc}", file=sys.stderr)
        return EXIT_INADMISSIBLE
    except (ValueError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    raise AssertionError(args.command)


def main() -> None:
    sys.exit(run())
