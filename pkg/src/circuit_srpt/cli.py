import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .hamiltonian import (
    Boundary,
    apply_unitary_shift,
    build_hamiltonian,
    model_to_dict,
)
from .log import log
from .meanfield import (
    EffectivePotential,
    competition_report,
    critical_inductance,
    critical_temperature,
    grid_search_minimum,
    minimize_potential,
    order_parameter_vs_bias,
    phase_diagram,
    ratio_grid,
    thermal_order_parameter,
)
from .models import CircuitError, CircuitSpec, RunConfig, ValidatedSpec, validate
from .nogo import ClassifyOptions, classify_srpt, point_shift_generator
from .report import dumps, rows_to_csv, write_matrix, write_output
from .spectrum import (
    TruncatedBasis,
    assemble_matrix,
    assumption_a_margin,
    ground_state,
    hepp_check,
    verify_unitary_equivalence,
)

PHASE_COLUMNS = {
    "index": "index",
    "n_cells": "n_cells",
    "l_r": "l_r[H]",
    "l_c": "l_c[H]",
    "e_j": "e_j[J]",
    "ratio": "ratio",
    "temperature": "temperature[K]",
    "phi0": "phi0[Wb]",
    "psi0": "psi0[Wb]",
    "t_c": "t_c[K]",
    "phase": "phase",
    "error": "error",
}

HEPP_COLUMNS = {
    "temperature": "temperature[K]",
    "log_z": "ln_z",
    "log_zbar": "ln_zbar",
    "lower_margin": "lower_margin",
    "upper_margin": "upper_margin",
    "holds": "holds",
}


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    fmt = "%(message)s"
    logging.basicConfig(level=level, format=fmt, stream=sys.stderr)


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c",
        "--config",
        type=Path,
        help="path to run config file (toml or yaml)",
    )
    common.add_argument(
        "-o",
        "--output",
        type=Path,
        help="write the result here instead of stdout",
    )
    common.add_argument(
        "--format",
        choices=("json", "csv"),
        help="output format (overrides config, csv only for tabular results)",
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="verbose output",
    )
    common.add_argument("spec", type=Path, help="circuit spec (json)")
    return common


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circuit-srpt",
        description="derive circuit hamiltonians and test them for superradiant phase transitions",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
circuit spec (json, SI units):
  topology    Fig2_InductiveLC | Fig3_CapacitiveLC | Fig4_CapacitiveTline |
              Fig5a_GeneralCoupling | Fig5b_InductivePerCell | Fig5c_BambaCircuit |
              Fig5d_NoResonatorInductor | Fig6_InductiveTline
  n_cells     number of cells N >= 1 (default 1)
  resonator   {l_r [H], c_r [F]}
              Fig2, Fig3, Fig5a, Fig5b, Fig5c; Fig5d takes c_r only
  cell        {l_c [H], e_j [J], c_j [F], phi_ext_over_phi_q, l_t_prime [H]}
              Fig5b, Fig5d (l_c); Fig5c (l_c, e_j, c_j); Fig6 (l_t_prime);
              optional for Fig2, e_j and c_j together make the junction concrete
  tline       {l_t [H/m], c_t [F/m], dx [m], length [m], lambda_min [m], omega_a [rad/s]}
              Fig4, Fig6; length/dx an integer >= 2

examples:
  circuit-srpt derive fig2.json
  circuit-srpt classify fig5c.json --thermal
  circuit-srpt meanfield fig5c.json --epsilon 0 1e-9 --temperature 0.05
  circuit-srpt sweep fig5c.json --ratios 0.5 1.5 11 --format csv -o sweep.csv
  circuit-srpt ed fig5c.json -c run.toml --dump-matrix h.txt
  circuit-srpt check hepp fig5c.json --temperature 0.1 0.2
""",
    )

    parser.add_argument(
        "-V",
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    common = _common()
    boundary = argparse.ArgumentParser(add_help=False)
    boundary.add_argument(
        "--boundary",
        choices=[b.value for b in Boundary],
        default=Boundary.PERIODIC.value,
        help="transmission-line boundary condition (default: periodic)",
    )

    sub = parser.add_subparsers(dest="command", required=True)

    derive = sub.add_parser(
        "derive", parents=[common, boundary], help="print the quantized hamiltonian"
    )
    derive.add_argument(
        "--mode",
        choices=("auto", "abstract", "concrete"),
        default="auto",
        help="black-box treatment (default: concrete when the cell has e_j and c_j)",
    )

    classify = sub.add_parser(
        "classify", parents=[common, boundary], help="decoupling search and srpt verdict"
    )
    classify.add_argument(
        "--thermal", action="store_true", help="also bracket T_c for mean-field srpt"
    )
    classify.add_argument("--temperature", type=float, help="temperature for assumption a [K]")
    classify.add_argument("--log-zbar", type=float, help="ln Zbar for the assumption-a ratio")

    meanfield = sub.add_parser("meanfield", parents=[common], help="classical mean-field minimum")
    meanfield.add_argument(
        "--epsilon", type=float, nargs="+", default=[], help="bias forces to scan [A]"
    )
    meanfield.add_argument(
        "--temperature", type=float, nargs="+", default=[], help="temperatures for phi0(T) [K]"
    )
    meanfield.add_argument("--tc", action="store_true", help="bracket the critical temperature")
    meanfield.add_argument(
        "--grid", action="store_true", help="cross-check with the brute-force grid minimum"
    )
    meanfield.add_argument(
        "--n-scan",
        type=int,
        nargs="+",
        default=[1, 2, 4, 8, 16, 32],
        help="cell counts for the barrier scan",
    )

    sweep = sub.add_parser("sweep", parents=[common], help="phase diagram over N*L_R")
    sweep.add_argument(
        "--ratios",
        type=float,
        nargs=3,
        metavar=("START", "STOP", "COUNT"),
        default=[0.5, 1.5, 11],
        help="N*L_R over the critical value, linearly spaced",
    )
    sweep.add_argument(
        "--temperature", type=float, nargs="+", help="temperatures [K] (overrides config)"
    )
    sweep.add_argument("--workers", type=int, help="worker processes (overrides config)")
    sweep.add_argument("--tc", action="store_true", help="bracket T_c at every point")

    ed = sub.add_parser("ed", parents=[common], help="exact diagonalization of a concrete model")
    ed.add_argument("--photon-cutoff", type=int, help="photon levels (overrides config)")
    ed.add_argument("--cell-cutoff", type=int, help="levels per cell (overrides config)")
    ed.add_argument("-k", type=int, default=2, help="number of eigenvalues")
    ed.add_argument("--dump-matrix", type=Path, help="write the sparse matrix as text")

    check = sub.add_parser("check", help="numerical checks")
    checks = check.add_subparsers(dest="check", required=True)
    hepp = checks.add_parser("hepp", parents=[common], help="Zbar <= Z <= exp(beta omega) Zbar")
    hepp.add_argument("--temperature", type=float, nargs="+", help="temperatures [K]")
    assumption = checks.add_parser(
        "assumption-a", parents=[common], help="photon zero-point against thermal energy"
    )
    assumption.add_argument("--temperature", type=float, help="temperature [K]")
    assumption.add_argument("--log-zbar", type=float, help="ln Zbar at that temperature")
    unitary = checks.add_parser(
        "unitary", parents=[common], help="spectra before and after the decoupling point shift"
    )
    unitary.add_argument("-k", type=int, default=5, help="number of levels compared")

    return parser


def _basis(config: RunConfig, photon: int | None = None, cell: int | None = None) -> TruncatedBasis:
    return TruncatedBasis(
        photon or config.photon_cutoff, cell or config.cell_cutoff, config.dimension_budget
    )


def _derive(spec: ValidatedSpec, args: argparse.Namespace) -> dict[str, Any]:
    concrete = {"auto": None, "abstract": False, "concrete": True}[args.mode]
    model = build_hamiltonian(spec, concrete=concrete, boundary=Boundary(args.boundary))
    return model_to_dict(model)


def _classify(spec: ValidatedSpec, args: argparse.Namespace, config: RunConfig) -> Any:
    options = ClassifyOptions(
        thermal=args.thermal,
        basis=_basis(config),
        temperature=args.temperature,
        log_zbar=args.log_zbar,
        boundary=Boundary(args.boundary),
    )
    return classify_srpt(spec, options)


def _meanfield(spec: ValidatedSpec, args: argparse.Namespace, config: RunConfig) -> Any:
    p = EffectivePotential.from_spec(spec)
    out: dict[str, Any] = {"potential": p}
    try:
        out["critical"] = critical_inductance(p)
    except CircuitError as e:
        log(f"no critical condition: {e}", "warning")
    out["minimum"] = minimize_potential(p)
    if args.grid:
        out["grid_minimum"] = grid_search_minimum(p)
    if args.epsilon:
        out["bias_scan"] = order_parameter_vs_bias(p, args.epsilon)
    if p.l_r is not None:
        out["competition"] = competition_report(p, args.n_scan)

    temperatures = args.temperature or config.temperatures
    if temperatures or args.tc:
        model = build_hamiltonian(spec, concrete=True)
        basis = _basis(config)
        out["thermal"] = [thermal_order_parameter(model, t, basis) for t in temperatures]
        if args.tc:
            out["critical_temperature"] = critical_temperature(model, basis)
    return out


def _sweep(spec: ValidatedSpec, args: argparse.Namespace, config: RunConfig) -> list[Any]:
    start, stop, count = args.ratios
    ratios = np.linspace(start, stop, int(count))
    temperatures = args.temperature or config.temperatures or [0.0]
    points = ratio_grid(spec, [float(r) for r in ratios], temperatures)
    workers = args.workers or config.workers
    return phase_diagram(points, workers=workers, basis=_basis(config), with_tc=args.tc)


def _ed(spec: ValidatedSpec, args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    model = build_hamiltonian(spec, concrete=True)
    if args.photon_cutoff or args.cell_cutoff:
        ladder = [_basis(config, args.photon_cutoff, args.cell_cutoff)]
    else:
        ladder = [_basis(config, c, c) for c in config.cutoff_ladder]

    rows = []
    result = None
    assembled = None
    for basis in ladder:
        assembled = assemble_matrix(model, basis)
        result = ground_state(assembled, args.k, config.dense_threshold, config.seed)
        rows.append(
            {
                "photon_cutoff": basis.photon_cutoff,
                "cell_cutoff": basis.cell_cutoff,
                "dimension": result.dimension,
                "ground_energy": result.ground_energy * result.energy_unit,
                "gap": result.gap * result.energy_unit,
            }
        )
    assert result is not None and assembled is not None
    if args.dump_matrix:
        write_matrix(assembled.matrix, args.dump_matrix, assembled.units.energy)
        log(f"matrix written to {args.dump_matrix}", "success")

    flux = result.flux_unit
    return {
        "dimension": result.dimension,
        "method": result.method,
        "eigenvalues": result.eigenvalues_joule,
        "gap": result.gap * result.energy_unit,
        "flux_mean": None if result.flux_mean is None else result.flux_mean * flux,
        "flux_sq": None if result.flux_sq is None else result.flux_sq * flux * flux,
        "photon_number": result.photon_number,
        "residual": result.residual,
        "convergence": rows,
    }


def _check(spec: ValidatedSpec, args: argparse.Namespace, config: RunConfig) -> Any:
    if args.check == "assumption-a":
        return assumption_a_margin(spec, args.temperature, args.log_zbar)

    model = build_hamiltonian(spec, concrete=True)
    if args.check == "hepp":
        temperatures = args.temperature or config.temperatures
        if not temperatures:
            raise ValueError("no temperatures given")
        basis = _basis(config)
        rows = []
        for t in temperatures:
            check = hepp_check(model, basis, t, spec.n_cells)
            rows.append(
                {
                    "temperature": t,
                    "log_z": check.log_z,
                    "log_zbar": check.log_zbar,
                    "lower_margin": check.lower_margin,
                    "upper_margin": check.upper_margin,
                    "holds": check.holds,
                    "free_energy_per_atom": [
                        f * spec.units.energy for f in check.free_energy_per_atom
                    ],
                }
            )
        return rows

    shifted = apply_unitary_shift(model, point_shift_generator(model))
    ladder = [_basis(config, c, c) for c in config.cutoff_ladder]
    return verify_unitary_equivalence(
        model, shifted, ladder, args.k, dense_threshold=config.dense_threshold, seed=config.seed
    )


def _error(e: CircuitError) -> str:
    return json.dumps({"error": e.code, "message": str(e)}, indent=2)


def main(argv: list[str] | None = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)

    setup_logging(args.verbose)

    config = RunConfig()
    if args.config:
        if not args.config.exists():
            log(f"config file not found: {args.config}", "error")
            return 2
        try:
            config = RunConfig.from_file(args.config)
        except (TypeError, ValueError) as e:
            log(f"invalid config: {e}", "error")
            return 2

    if not args.spec.exists():
        log(f"spec file not found: {args.spec}", "error")
        return 2

    fmt = args.format or config.format
    tabular = args.command == "sweep" or (args.command == "check" and args.check == "hepp")
    if fmt == "csv" and not tabular:
        log(f"csv is only available for tabular output, writing json for {args.command}", "warning")
        fmt = "json"

    try:
        spec = validate(CircuitSpec.from_file(args.spec))
        if args.command == "derive":
            result = _derive(spec, args)
        elif args.command == "classify":
            result = _classify(spec, args, config)
        elif args.command == "meanfield":
            result = _meanfield(spec, args, config)
        elif args.command == "sweep":
            result = _sweep(spec, args, config)
        elif args.command == "ed":
            result = _ed(spec, args, config)
        else:
            result = _check(spec, args, config)
    except CircuitError as e:
        log(f"{e.code}: {e}", "error")
        write_output(_error(e), args.output)
        return 1
    except ValueError as e:
        log(str(e), "error")
        return 2

    if fmt == "csv":
        columns = PHASE_COLUMNS if args.command == "sweep" else HEPP_COLUMNS
        text = rows_to_csv(result, columns)
    else:
        text = dumps(result)
    write_output(text, args.output)

    if args.output:
        log(f"wrote {args.output}", "success")
    return 0


if __name__ == "__main__":
    sys.exit(main())
