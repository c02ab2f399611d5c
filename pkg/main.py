"""
NORMALFLOW COMMAND LINE
Gradient flows toward normal matrices and balanced digraphs

Sub-commands:
    normalize   flow a Matrix JSON file to a normal (or balanced) limit
    balance     balance a weighted digraph (edge list or Graph JSON)
    experiment  run a seeded experiment and write CSV + summary JSON

Exit codes: 0 success, 2 flow did not converge, 1 input error.
"""

import argparse
import json
import logging
import sys

import config
from modules.data_logger import DataLogger, summary_path_for, write_summary_json
from modules.digraph import balance, read_graph, write_edge_list, write_graph_json
from modules.errors import NormalFlowError
from modules.experiments import (
    ExperimentKind,
    ExperimentSpec,
    run_balance_demo,
    run_distance_correlation,
    run_energy_surface,
    run_path_demo,
    run_ratio_experiment,
)
from modules.flows import Energy, FlowConfig, FlowKind, Integrator, descend
from modules.matrix_core import EnsembleKind, read_matrix_json, write_matrix_json

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

ENERGY_CHOICES = {"normal": Energy.NON_NORMAL, "balanced": Energy.UNBALANCED}


def print_header(title):
    print()
    print("=" * 70)
    print(" " * 10 + title)
    print("=" * 70)


def flow_config_from_args(args, kind=FlowKind(Energy.NON_NORMAL)):
    return FlowConfig(
        kind=kind,
        step_init=args.step if args.step is not None else config.STEP_INIT,
        grad_tol=args.tol if args.tol is not None else config.GRAD_TOL,
        max_iters=args.max_iters if args.max_iters is not None else config.MAX_ITERS,
        record_every=args.record_every if args.record_every is not None else config.RECORD_EVERY,
        integrator=args.integrator,
    )


def normalize_cmd(args):
    """Flow the input matrix and write the limit plus the FlowResult summary"""
    print_header("NORMALIZE")
    A0 = read_matrix_json(args.input)
    kind = FlowKind(ENERGY_CHOICES[args.energy], args.constrained)
    if args.constrained and abs(A0.frob_norm() - 1.0) > 1e-12:
        print(f"⚠️ Input has norm {A0.frob_norm():.6g}; normalizing onto the unit sphere")
        A0 = A0.normalized()

    result = descend(A0, flow_config_from_args(args, kind))
    write_matrix_json(result.limit, args.output)
    summary = dict(result.summary(), kind=kind.label)
    write_summary_json(summary, summary_path_for(args.output))

    if args.trajectory:
        data_log = DataLogger(args.output)
        data_log.log_trajectory(result.trajectory, args.trajectory)
        data_log.finalize()

    print(f"Kind:        {kind.label}")
    print(f"Iterations:  {result.iterations}")
    print(f"Energy:      {summary['energy']:.6e}")
    print(f"Converged:   {result.converged}")
    print(f"Limit:       {args.output}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def balance_cmd(args):
    """Balance the input graph and write the result plus the BalanceReport"""
    print_header("BALANCE")
    G = read_graph(args.input)
    print(f"Graph: {G.n} nodes, {len(G.edges)} edges, total weight {G.total_weight():.6g}")

    balanced, report = balance(G, constrained=args.constrained, config=flow_config_from_args(args))
    if args.output.lower().endswith(".json"):
        write_graph_json(balanced, args.output)
    else:
        write_edge_list(balanced, args.output)
    write_summary_json(report.to_json(), summary_path_for(args.output))

    if not balanced.edges:
        print("⚠️ All edge weights were driven to zero (the graph is acyclic)")
    print(f"Max imbalance:   {report.max_imbalance:.3e}")
    print(f"Total weight:    {report.total_weight:.6g}")
    print(f"Iterations:      {report.iterations}")
    print(f"Converged:       {report.converged}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def experiment_cmd(args):
    """Run one experiment and write its CSV and summary JSON"""
    kind = ExperimentKind(args.kind)
    print_header(f"EXPERIMENT: {kind.value}")
    output = args.output or f"{kind.value}.csv"
    flow_config = flow_config_from_args(args)
    data_log = DataLogger(output)
    status = EXIT_OK

    if kind is ExperimentKind.ENERGY_SURFACE:
        result = run_energy_surface(args.resolution, bounds=tuple(args.bounds))
        data_log.log_grid(result.records)
        data_log.log_summary(result.summary)
    elif kind is ExperimentKind.PATH_DEMO:
        report = run_path_demo(args.seed, args.seed + 1, args.samples, d=args.d, ensemble=args.ensemble, flow_config=flow_config)
        data_log.log_records(list(report.samples))
        data_log.log_summary(report.summary())
        if report.skipped:
            status = EXIT_NOT_CONVERGED
    elif kind is ExperimentKind.BALANCE_DEMO:
        result = run_balance_demo(args.nodes, args.edges, args.seed, constrained=args.constrained, flow_config=flow_config)
        summary = dict(result.summary)
        data_log.log_table(summary.pop("header"), result.records)
        data_log.log_summary(summary)
        if not summary["converged"]:
            status = EXIT_NOT_CONVERGED
    else:
        spec = ExperimentSpec(
            experiment=kind,
            d=args.d,
            trials=args.trials,
            ensemble=args.ensemble,
            seed=args.seed,
            sigma=args.sigma,
            workers=args.workers,
        )
        if kind is ExperimentKind.DISTANCE_CORRELATION:
            result = run_distance_correlation(spec, flow_config)
        else:
            result = run_ratio_experiment(spec, flow_config)
        data_log.log_records(list(result.records))
        data_log.log_summary(result.summary)
        print(json.dumps(result.summary, sort_keys=True))
        if result.summary["failures"]:
            status = EXIT_NOT_CONVERGED

    data_log.finalize()
    return status


def add_flow_flags(parser):
    parser.add_argument("--step", type=float, default=None, help="initial step size")
    parser.add_argument("--tol", type=float, default=None, help="relative gradient tolerance")
    parser.add_argument("--max-iters", type=int, default=None, help="iteration cap")
    parser.add_argument("--record-every", type=int, default=None, help="trajectory sampling period")
    parser.add_argument("--integrator", choices=[i.value for i in Integrator], default=config.INTEGRATOR)
    parser.add_argument("--constrained", action="store_true", help="stay on the unit sphere / keep total weight")


def build_parser():
    parser = argparse.ArgumentParser(description="Gradient flows toward normal matrices and balanced digraphs")
    parser.add_argument("--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    normalize = sub.add_parser("normalize", help="flow a matrix to a normal or balanced limit")
    normalize.add_argument("--input", required=True, help="Matrix JSON file")
    normalize.add_argument("--output", required=True, help="limit Matrix JSON file")
    normalize.add_argument("--energy", choices=sorted(ENERGY_CHOICES), default="normal")
    normalize.add_argument("--trajectory", default=None, help="trajectory CSV file")
    add_flow_flags(normalize)
    normalize.set_defaults(handler=normalize_cmd)

    balance_parser = sub.add_parser("balance", help="balance a weighted digraph")
    balance_parser.add_argument("--input", required=True, help="edge list or Graph JSON (.json)")
    balance_parser.add_argument("--output", required=True, help="balanced graph, format by extension")
    add_flow_flags(balance_parser)
    balance_parser.set_defaults(handler=balance_cmd)

    experiment = sub.add_parser("experiment", help="run a seeded experiment")
    experiment.add_argument("kind", choices=[k.value for k in ExperimentKind])
    experiment.add_argument("--output", default=None, help="CSV file (default <kind>.csv)")
    experiment.add_argument("--d", type=int, default=config.EXPERIMENT_DIM)
    experiment.add_argument("--trials", type=int, default=config.EXPERIMENT_TRIALS)
    experiment.add_argument("--seed", type=int, default=config.EXPERIMENT_SEED)
    experiment.add_argument("--ensemble", choices=[e.value for e in EnsembleKind], default=EnsembleKind.COMPLEX_GINIBRE.value)
    experiment.add_argument("--sigma", type=float, default=config.NEAR_NORMAL_SIGMA, help="near-normal noise level")
    experiment.add_argument("--workers", type=int, default=config.WORKERS)
    experiment.add_argument("--resolution", type=int, default=101, help="energy-surface grid points per axis")
    experiment.add_argument("--bounds", type=float, nargs=2, default=[-1.0, 1.0], metavar=("LOW", "HIGH"), help="energy-surface range for x and y")
    experiment.add_argument("--samples", type=int, default=20, help="path-demo samples")
    experiment.add_argument("--nodes", type=int, default=6, help="balance-demo node count")
    experiment.add_argument("--edges", type=int, default=15, help="balance-demo edge count")
    add_flow_flags(experiment)
    experiment.set_defaults(handler=experiment_cmd)
    return parser


def main(argv=None):
    """Entry point"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=config.LOG_FORMAT)

    try:
        return args.handler(args)
    except (NormalFlowError, ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
