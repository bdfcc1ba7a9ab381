#!/usr/bin/env python3
#
# Command line front end: solve one relaxation, sweep the lifting level, run the outer
# minimisation, compute transport distances, print closed-form reference values and
# regenerate the fixture file.
#
# For example:
#  $ structwdro uq --instance uq-example.json --M 3
#  $ structwdro sweep --instance uq-example.json --M-range 2..10 --out curve.csv
#  $ structwdro dro --instance dro-example.json --M-range 2..8 --M-max 8
#  $ structwdro oracle lifted --rho 1 --M 2

from argparse import ArgumentParser
import csv
import io
import os
from pathlib import Path
import sys

import numpy as np
import yaml
from optionsfactory import OptionsFactory, WithMeta
from optionsfactory.checks import (
    NoneType,
    is_non_negative,
    is_positive,
    is_positive_or_None,
)

from ..cases.benchmarks import golden_curves
from ..core.combinatorics import DEFAULT_CAP
from ..core.conic import NORM_KINDS, SolveStatus
from ..core.distributions import TransportCost, wasserstein_exact
from ..core.errors import (
    CapExceeded,
    PreconditionError,
    SolverFailure,
    StructWDROError,
)
from ..core.oracles import (
    get_reference_case,
    grid_primal_lower_bound,
    reference_records,
    semi_infinite_dual,
)
from ..core.program import (
    RelaxationPoint,
    UQInstance,
    build_multitransport,
    build_relaxation,
    build_unstructured,
    solve_program,
    sweep_outer_dro,
    sweep_relaxation,
)
from ..core.serialization import (
    dumps_result,
    read_distribution,
    read_instance,
    write_result,
)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_CAP = 3
EXIT_SOLVER = 4


def _default_cap(options):
    value = os.environ.get("STRUCT_WDRO_CAP")
    if value is None:
        return DEFAULT_CAP
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"STRUCT_WDRO_CAP must be an integer, got '{value}'") from None


def _is_tolerance(x):
    return 0.0 < x <= 1.0e-2


run_options_factory = OptionsFactory(
    cap=WithMeta(
        _default_cap,
        doc=(
            "Largest number of enumerated items or program variables. Defaults to the "
            "STRUCT_WDRO_CAP environment variable if set."
        ),
        value_type=int,
        check_all=is_positive,
    ),
    tol=WithMeta(
        1.0e-9,
        doc="Solver tolerance, in (0, 1e-2]",
        value_type=float,
        check_all=_is_tolerance,
    ),
    iteration_limit=WithMeta(
        10000,
        doc="Iteration limit passed to the solvers",
        value_type=int,
        check_all=is_positive,
    ),
    seed=WithMeta(
        0,
        doc="Seed for the randomised parts (grid ascent restarts)",
        value_type=int,
        check_all=is_non_negative,
    ),
    jobs=WithMeta(
        1,
        doc="Number of worker processes for sweeps",
        value_type=int,
        check_all=is_positive,
    ),
    rho=WithMeta(
        None,
        doc="Transport budget; overrides the radius in the instance file",
        value_type=[float, int, NoneType],
        check_all=lambda x: x is None or x >= 0.0,
    ),
    norm=WithMeta(
        None,
        doc="Norm of the ground cost; overrides the instance file",
        value_type=[str, NoneType],
        allowed=[None] + list(NORM_KINDS),
    ),
    M=WithMeta(
        None,
        doc="Lifting level",
        value_type=[int, NoneType],
        check_all=is_positive_or_None,
    ),
    M_range=WithMeta(
        "2..10",
        doc="Lifting levels of a sweep, 'a..b' (inclusive) or a comma separated list",
        value_type=str,
    ),
    M_max=WithMeta(
        None,
        doc="Level of the proxy relaxation in the outer sweep; largest M by default",
        value_type=[int, NoneType],
        check_all=is_positive_or_None,
    ),
    out=WithMeta(
        None,
        doc="Output file; results go to stdout when not given",
        value_type=[str, NoneType],
    ),
    timing=WithMeta(
        True,
        doc="Record solve times. Without, CSV output is reproducible byte for byte.",
        value_type=bool,
    ),
    point_timeout=WithMeta(
        None,
        doc="Wall-clock limit in seconds for one level of a sweep",
        value_type=[float, int, NoneType],
        check_all=is_positive_or_None,
    ),
    mu_grid=WithMeta(
        16,
        doc="Number of multiplier samples for the semi-infinite dual",
        value_type=int,
        check_all=is_positive,
    ),
    restarts=WithMeta(
        4,
        doc="Random restarts of the grid primal ascent",
        value_type=int,
        check_all=is_non_negative,
    ),
    verbose=WithMeta(
        False,
        doc="Print progress messages",
        value_type=bool,
    ),
    print_options=WithMeta(
        False,
        doc="Print the table of resolved options before running",
        value_type=bool,
    ),
)


def parse_M_range(text):
    """
    Levels from 'a..b' (inclusive) or 'a,b,c'
    """
    text = text.strip()
    try:
        if ".." in text:
            first, last = text.split("..")
            levels = list(range(int(first), int(last) + 1))
        else:
            levels = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise PreconditionError(
            f"Cannot read M range '{text}', expected 'a..b' or a comma separated list"
        ) from None
    if not levels:
        raise PreconditionError(f"M range '{text}' is empty")
    return levels


def _add_common_arguments(parser):
    parser.add_argument("--options", default=None, help="YAML file of run options")
    parser.add_argument("--rho", type=float, default=None)
    parser.add_argument("--norm", choices=NORM_KINDS, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--cap", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument(
        "--no-timing",
        dest="timing",
        action="store_const",
        const=False,
        default=None,
        help="Write solve_ms as 0",
    )
    parser.add_argument(
        "--print-options", action="store_const", const=True, default=None
    )
    parser.add_argument(
        "-v", "--verbose", action="store_const", const=True, default=None
    )


def get_arg_parser():
    parser = ArgumentParser(
        prog="structwdro",
        description="""
        Relaxations of structured Wasserstein distributionally robust expectations
        """,
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    uq = subparsers.add_parser("uq", help="Solve the lifted relaxation at one level")
    uq.add_argument("--instance", required=True)
    uq.add_argument("--M", type=int, default=None)
    uq.add_argument(
        "--check",
        action="store_true",
        default=False,
        help="Also evaluate the semi-infinite dual and a grid primal lower bound",
    )

    sweep = subparsers.add_parser("sweep", help="Solve the relaxation for a range of M")
    sweep.add_argument("--instance", required=True)
    sweep.add_argument("--M-range", dest="M_range", default=None)

    dro = subparsers.add_parser("dro", help="Outer minimisation for a range of M")
    dro.add_argument("--instance", required=True)
    dro.add_argument("--M-range", dest="M_range", default=None)
    dro.add_argument("--M-max", dest="M_max", type=int, default=None)

    wasserstein = subparsers.add_parser(
        "wasserstein", help="Exact transport distance between two distributions"
    )
    wasserstein.add_argument("first")
    wasserstein.add_argument("second")
    wasserstein.add_argument("--plan", action="store_true", default=False)

    oracle = subparsers.add_parser("oracle", help="Closed-form reference values")
    oracle.add_argument("case")
    oracle.add_argument("--M", type=int, default=None)
    oracle.add_argument("--quantity", default=None)

    compare = subparsers.add_parser(
        "compare", help="Unstructured, lifted and multitransport bounds side by side"
    )
    compare.add_argument("--instance", required=True)
    compare.add_argument("--M", type=int, default=None)

    fixtures = subparsers.add_parser(
        "fixtures", help="Regenerate the closed-form reference values or sweep curves"
    )
    fixtures.add_argument(
        "--curves",
        action="store_true",
        default=False,
        help="Emit the golden sweep curves of the two numerical instances instead",
    )

    for subparser in (uq, sweep, dro, wasserstein, oracle, compare, fixtures):
        _add_common_arguments(subparser)

    return parser


def make_config(args):
    """
    Merge the options file and the command line flags into a RunConfig
    """
    settings = {}
    if args.options is not None:
        with open(args.options, "r") as inputfile:
            settings = yaml.safe_load(inputfile) or {}
        if not isinstance(settings, dict):
            raise PreconditionError(f"{args.options} must contain a mapping of options")
        unused_options = [
            opt for opt in settings if opt not in run_options_factory.defaults
        ]
        if unused_options != []:
            raise ValueError(
                f"There were options in the input file that are not used: "
                f"{unused_options}"
            )
    for name in run_options_factory.defaults:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    return run_options_factory.create(settings)


def _load_instance(args, config):
    instance = read_instance(args.instance)
    if config.norm is not None and config.norm != instance.cost.norm_kind:
        instance = UQInstance(
            instance.nominal,
            instance.radius,
            TransportCost(config.norm, instance.n),
            instance.loss,
        )
    if config.rho is not None:
        instance = instance.with_radius(config.rho)
    return instance


def _emit(config, text):
    if config.out is None:
        sys.stdout.write(text)
    else:
        Path(config.out).write_text(text)


def _log(config, message):
    if config.verbose:
        print(message, file=sys.stderr, flush=True)


def check_grid(instance):
    """
    Nominal atoms together with their shifts by +-radius along each axis
    """
    atoms = instance.nominal.atoms
    shifts = [atoms]
    for j in range(instance.n):
        step = np.zeros(instance.n)
        step[j] = instance.radius
        shifts.extend([atoms + step, atoms - step])
    return np.unique(np.concatenate(shifts), axis=0)


def cmd_uq(args, config):
    instance = _load_instance(args, config)
    M = instance.N if config.M is None else config.M
    _log(config, f"Building relaxation at M={M} for {instance}")
    program = build_relaxation(instance, M, cap=config.cap)
    solution = solve_program(program, config.tol, config.iteration_limit)
    print(
        f"M={M} value={solution.value!r} status={solution.status} "
        f"n_vars={program.n_vars} n_rows={program.n_rows}",
        flush=True,
    )
    result = {
        "subcommand": "uq",
        "instance": instance.to_dict(),
        "M": M,
        "value": solution.value,
        "status": str(solution.status),
        "n_vars": program.n_vars,
        "n_rows": program.n_rows,
        "mu": solution.mu,
    }

    if args.check:
        _log(config, "Evaluating the semi-infinite dual")
        dual = semi_infinite_dual(
            instance,
            M,
            config.mu_grid,
            cap=config.cap,
            tolerance=config.tol,
            iteration_limit=config.iteration_limit,
        )
        lower = grid_primal_lower_bound(
            instance.nominal,
            instance.radius,
            instance.cost,
            instance.loss,
            instance.N,
            check_grid(instance),
            config.restarts,
            config.seed,
            cap=config.cap,
        )
        print(f"semi_infinite_dual={dual!r} grid_lower_bound={lower!r}", flush=True)
        result["semi_infinite_dual"] = dual
        result["grid_lower_bound"] = lower

    if config.out is not None:
        write_result(config.out, result)
    if solution.status is SolveStatus.ITERATION_LIMIT:
        return EXIT_SOLVER
    return EXIT_OK


def _baseline_point(instance, config):
    try:
        program = build_unstructured(instance, cap=config.cap)
        solution = solve_program(program, config.tol, config.iteration_limit)
    except StructWDROError as err:
        return RelaxationPoint("unstructured", float("nan"), type(err).__name__)
    return RelaxationPoint(
        "unstructured",
        solution.value,
        str(solution.status),
        n_vars=program.n_vars,
        n_rows=program.n_rows,
    )


def cmd_sweep(args, config):
    instance = _load_instance(args, config)
    levels = parse_M_range(config.M_range)
    _log(config, f"Sweeping M over {levels} for {instance}")
    curve = sweep_relaxation(
        instance,
        levels,
        tolerance=config.tol,
        iteration_limit=config.iteration_limit,
        cap=config.cap,
        jobs=config.jobs,
        point_timeout=config.point_timeout,
    )
    baseline = _baseline_point(instance, config)

    out = io.StringIO()
    out.write(curve.to_csv(timing=config.timing))
    writer = csv.DictWriter(out, fieldnames=curve.columns, lineterminator="\n")
    writer.writerow(baseline.as_row(timing=config.timing))
    _emit(config, out.getvalue())

    if not curve.solved_points():
        return EXIT_SOLVER
    return EXIT_OK


def cmd_dro(args, config):
    instance = read_instance(args.instance)
    if not instance.parametric:
        raise PreconditionError(
            f"{args.instance} has no decision variable; use 'uq' or 'sweep'"
        )
    if config.rho is not None:
        instance = instance.with_radius(config.rho)
    levels = parse_M_range(config.M_range)
    curve = sweep_outer_dro(
        instance.loss,
        instance.nominal,
        instance.radius,
        instance.cost,
        levels,
        M_max=config.M_max,
        tolerance=config.tol,
        iteration_limit=config.iteration_limit,
        cap=config.cap,
        jobs=config.jobs,
        point_timeout=config.point_timeout,
    )
    text = curve.to_csv(timing=config.timing)
    text += f"# M_star={curve.best_M()}\n"
    _emit(config, text)

    if not curve.solved_points():
        return EXIT_SOLVER
    return EXIT_OK


def cmd_wasserstein(args, config):
    P = read_distribution(args.first)
    Q = read_distribution(args.second)
    cost = TransportCost(config.norm or "l2", P.dimension)
    value, coupling = wasserstein_exact(P, Q, cost, tolerance=config.tol)
    print(f"W={value!r}", flush=True)
    if args.plan:
        for row in coupling.plan:
            print(" ".join(repr(float(x)) for x in row))
    if config.out is not None:
        write_result(
            config.out,
            {"subcommand": "wasserstein", "value": value, "plan": coupling.plan},
        )
    return EXIT_OK


def cmd_oracle(args, config):
    case = get_reference_case(args.case)
    if config.rho is None:
        raise PreconditionError("oracle needs --rho")
    if args.quantity is None:
        values = case.values(config.rho, config.M)
    else:
        values = {args.quantity: case.value(config.rho, config.M, args.quantity)}
    for quantity, value in values.items():
        print(f"{quantity}={value!r}")
    if config.out is not None:
        write_result(
            config.out,
            {
                "subcommand": "oracle",
                "case": case.name,
                "rho": config.rho,
                "M": config.M,
                "values": values,
                "provenance_note": case.provenance,
            },
        )
    return EXIT_OK


def cmd_compare(args, config):
    instance = _load_instance(args, config)
    M = instance.N if config.M is None else config.M
    values = {}
    for label, program in (
        ("unstructured", build_unstructured(instance, cap=config.cap)),
        ("lifted", build_relaxation(instance, M, cap=config.cap)),
        ("multitransport", build_multitransport(instance, cap=config.cap)),
    ):
        solution = solve_program(program, config.tol, config.iteration_limit)
        values[label] = solution.value
        print(f"{label}={solution.value!r} status={solution.status}", flush=True)
    if config.out is not None:
        write_result(config.out, {"subcommand": "compare", "M": M, "values": values})
    return EXIT_OK


def cmd_fixtures(args, config):
    if args.curves:
        result = golden_curves(tolerance=config.tol, jobs=config.jobs)
    else:
        result = {"cases": reference_records()}
    _emit(config, dumps_result(result))
    return EXIT_OK


commands = {
    "uq": cmd_uq,
    "sweep": cmd_sweep,
    "dro": cmd_dro,
    "wasserstein": cmd_wasserstein,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "fixtures": cmd_fixtures,
}


def main(argv=None):
    """
    Run one subcommand and return the exit code: 0 on success, 2 for unreadable
    input or violated preconditions, 3 when a size cap is exceeded, 4 when a solver
    fails
    """
    try:
        args = get_arg_parser().parse_args(argv)
    except SystemExit as err:
        return err.code

    try:
        config = make_config(args)
        if config.print_options:
            print(config.as_table(), flush=True)
        return commands[args.subcommand](args, config)
    except CapExceeded as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CAP
    except SolverFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (StructWDROError, ValueError, OSError, yaml.YAMLError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
