"""Sub-commands of the hetcon program.

Each sub-command is an Action subclass creating its own argument parser and
returning the process exit code from run().
"""

from __future__ import annotations

import abc
import dataclasses
import os
from typing import TYPE_CHECKING

import numpy as np

import hetcon.log
from hetcon.cli.report import Timings, build_report, graph_section, write_report
from hetcon.cli.schema import ConfigError, load_config
from hetcon.consensus import certify, certify_all_roots, heterogeneity_profile
from hetcon.graph import (
    GraphError,
    incidence_matrix,
    laplacian,
    spanning_tree,
    tree_factor,
    weighted_coupling,
    write_matrix_csv,
)
from hetcon.job.scheduler import parallel_map
from hetcon.netsim import (
    BoundCheckError,
    assemble_closed_loop,
    simulate,
    simulate_batch,
    verify_bound,
    write_trace_csv,
)
from hetcon.netsim.signal import random_pulse_inputs
from hetcon.passivity import NotGapPassiveError, gap_index

if TYPE_CHECKING:
    from typing import Any
    from argparse import Namespace, _SubParsersAction
    from hetcon.cli.schema import NetworkConfig
    from hetcon.consensus import ConsensusCertificate
    from hetcon.graph import Graph
    from hetcon.netsim.signal import SignalSpec

logger = hetcon.log.getLogger("cli.action")

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MATH = 3
EXIT_NOT_CERTIFIED = 4


class Action(metaclass=abc.ABCMeta):
    """A hetcon sub-command.

    :cvar out_flags: option strings selecting the report destination
    """

    out_flags: tuple[str, ...] = ("--out",)

    def __init__(self, subparsers: _SubParsersAction) -> None:
        self.parser = subparsers.add_parser(self.name, help=self.help)
        self.parser.set_defaults(action=self.name)
        self.parser.add_argument(
            "--config",
            metavar="PATH",
            required=True,
            help="JSON network description",
        )
        self.parser.add_argument(
            *self.out_flags,
            dest="out",
            metavar="PATH",
            help="write the JSON report to PATH instead of stdout",
        )
        self.parser.add_argument(
            "--jobs",
            metavar="N",
            type=int,
            default=1,
            help="maximum number of computations run in parallel",
        )
        self.parser.add_argument(
            "--seed",
            metavar="K",
            type=int,
            help="seed of the randomized inputs, overrides the config seed",
        )
        self.parser.add_argument(
            "--axis-tol",
            type=float,
            help="distance below which a pole is on the imaginary axis",
        )
        self.add_parsers()

    @property
    @abc.abstractmethod
    def name(self) -> str:
        """Return the action name."""
        pass  # all: no cover

    @property
    @abc.abstractmethod
    def help(self) -> str:
        """Return the help string associated with this action."""
        pass  # all: no cover

    @abc.abstractmethod
    def add_parsers(self) -> None:
        """Add the action specific arguments."""
        pass  # all: no cover

    @abc.abstractmethod
    def run(self, args: Namespace) -> int:
        """Run the action.

        :param args: command line arguments gotten with argparse
        :return: the exit code
        """
        pass  # all: no cover

    def load(self, args: Namespace) -> NetworkConfig:
        """Load the configuration and apply the command line overrides."""
        config = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be nonnegative, got {args.seed}")
            config = dataclasses.replace(config, seed=args.seed)
        if args.axis_tol is not None:
            if not args.axis_tol > 0:
                raise ConfigError(f"--axis-tol must be positive, got {args.axis_tol}")
            config = dataclasses.replace(
                config,
                analysis=dataclasses.replace(config.analysis, axis_tol=args.axis_tol),
            )
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
        return config


def add_root_argument(parser: Any) -> None:
    parser.add_argument(
        "--root",
        type=int,
        default=1,
        help="root node of the spanning tree (default: 1)",
    )


def check_root(g: Graph, root: int) -> None:
    if not 1 <= root <= g.n:
        raise ConfigError(f"--root must be in 1..{g.n}, got {root}")


def export_matrices(directory: str, g: Graph, root: int) -> None:
    """Write the graph matrices as CSV files in directory."""
    os.makedirs(directory, exist_ok=True)
    D = incidence_matrix(g)
    matrices: dict[str, np.ndarray] = {
        "incidence": D,
        "laplacian": laplacian(g),
        "weighted_coupling": weighted_coupling(g),
    }
    if g.n > 1:
        factor = tree_factor(D, spanning_tree(g, root))
        matrices["tree_incidence"] = factor.D_ST
        matrices["tree_factor"] = factor.Q
    for name, matrix in matrices.items():
        write_matrix_csv(os.path.join(directory, f"{name}.csv"), matrix)
    logger.info("matrices written to %s", directory)


class Analyze(Action):
    name = "analyze"
    help = "Report the graph metrics and the Laplacian spectrum"

    def add_parsers(self) -> None:
        add_root_argument(self.parser)
        self.parser.add_argument(
            "--export-matrices",
            metavar="DIR",
            help="write D, L, D Psi D^T and the tree factor as CSV files in DIR",
        )

    def run(self, args: Namespace) -> int:
        config = self.load(args)
        g = config.network.graph
        check_root(g, args.root)
        timings = Timings()
        with timings.measure("graph"):
            graph = graph_section(g, args.root)
        if args.export_matrices:
            export_matrices(args.export_matrices, g, args.root)
        report = build_report(self.name, config, {"graph": graph}, timings)
        write_report(report, args.out)
        return EXIT_OK


class Gap(Action):
    name = "gap"
    help = "Compute the gap index of every edge"

    def add_parsers(self) -> None:
        self.parser.add_argument(
            "--edge",
            nargs=2,
            type=int,
            metavar=("I", "J"),
            help="restrict the computation to the edge joining I and J",
        )

    def run(self, args: Namespace) -> int:
        config = self.load(args)
        net = config.network
        g = net.graph
        if args.edge is not None:
            i, j = args.edge
            for node in (i, j):
                if not 1 <= node <= g.n:
                    raise ConfigError(f"--edge node {node} not in 1..{g.n}")
            try:
                edge = g.edges[g.edge_index(i, j)]
            except GraphError as err:
                raise ConfigError(str(err)) from err
            edges = [(edge.i, edge.j)]
        else:
            edges = [(e.i, e.j) for e in g.edges]

        pairs: dict[Any, tuple[int, int]] = {}
        for i, j in edges:
            pairs.setdefault((net.node(i), net.node(j)), (i, j))

        def compute(item: tuple[Any, tuple[int, int]]) -> dict[str, Any]:
            (h_i, h_j), edge = item
            try:
                gap = gap_index(h_i, h_j, config.analysis, edge=edge)
            except NotGapPassiveError as err:
                logger.warning("%s", err, edge=edge)
                return {"gap_passive": False, "error": str(err)}
            return {
                "gap_passive": True,
                **gap.to_dict(),
                "lower_bound": gap.lower_bound,
            }

        timings = Timings()
        with timings.measure("gap"):
            results = parallel_map(
                compute, list(pairs.items()), jobs=args.jobs, label="gap"
            )
        by_pair = dict(zip(pairs.keys(), results))

        rows = [
            {"i": i, "j": j, **by_pair[(net.node(i), net.node(j))]} for i, j in edges
        ]
        passing = [row["lower_bound"] for row in rows if row["gap_passive"]]
        section = {
            "edges": rows,
            "all_gap_passive": len(passing) == len(rows),
            "gamma_m": min(passing) if len(passing) == len(rows) else None,
        }
        report = build_report(self.name, config, {"gap": section}, timings)
        write_report(report, args.out)
        return EXIT_OK


class Certify(Action):
    name = "certify"
    help = "Compute the heterogeneity profile and the consensus certificate"

    def add_parsers(self) -> None:
        add_root_argument(self.parser)
        self.parser.add_argument(
            "--all-roots",
            action="store_true",
            help="build a certificate for every spanning tree root and keep"
            " the one with the smallest rho",
        )
        self.parser.add_argument(
            "--require-certified",
            action="store_true",
            help=f"exit with code {EXIT_NOT_CERTIFIED} when the network is"
            " not certified",
        )

    def run(self, args: Namespace) -> int:
        config = self.load(args)
        net = config.network
        check_root(net.graph, args.root)
        timings = Timings()
        with timings.measure("profile"):
            profile = heterogeneity_profile(net, config.analysis, jobs=args.jobs)
        sections: dict[str, Any] = {}
        with timings.measure("certificate"):
            if args.all_roots:
                sweep = certify_all_roots(net, profile)
                cert = sweep.best or sweep.certificates[args.root - 1]
                sections["roots"] = sweep.to_dict()
            else:
                cert = certify(net, profile, args.root)
        sections = {
            "graph": graph_section(net.graph, cert.root),
            "heterogeneity": profile.to_dict(),
            "certificate": cert.to_dict(),
            **sections,
        }
        write_report(build_report(self.name, config, sections, timings), args.out)

        if not cert.certified:
            logger.warning(
                "not certified: gamma_m + alpha lambda2 = %s", cert.condition_value
            )
            if args.require_certified:
                return EXIT_NOT_CERTIFIED
        return EXIT_OK


class Simulate(Action):
    name = "simulate"
    help = "Simulate the closed loop and check the certified consensus gain"
    out_flags = ("--out", "--report")

    def add_parsers(self) -> None:
        add_root_argument(self.parser)
        self.parser.add_argument(
            "--trace",
            metavar="PATH",
            help="write the samples of the first run as CSV to PATH",
        )
        self.parser.add_argument(
            "--no-bound",
            action="store_true",
            help="only simulate, do not certify nor check the gain bound",
        )
        self.parser.add_argument(
            "--exploratory",
            action="store_true",
            help="allow a nonzero initial state (needs --no-bound)",
        )

    def input_sets(self, config: NetworkConfig) -> list[list[SignalSpec]]:
        simulation = config.simulation
        assert simulation is not None
        n = config.network.graph.n
        sets: list[list[SignalSpec]] = []
        if simulation.inputs is not None:
            sets.append(list(simulation.inputs))
        if simulation.random_inputs is not None:
            rng = np.random.default_rng(config.seed)
            batch = simulation.random_inputs
            for _ in range(batch.runs):
                sets.append(
                    random_pulse_inputs(
                        n,
                        rng,
                        pulses=batch.pulses,
                        max_amplitude=batch.max_amplitude,
                        horizon=batch.horizon,
                    )
                )
        if not sets:
            raise ConfigError("needs inputs or random_inputs", "$.simulation")
        return sets

    def certificate(
        self, config: NetworkConfig, args: Namespace
    ) -> ConsensusCertificate:
        profile = heterogeneity_profile(config.network, config.analysis, jobs=args.jobs)
        cert = certify(config.network, profile, args.root)
        if not cert.certified:
            raise BoundCheckError(
                "network is not certified, use --no-bound to simulate it anyway",
                "simulate",
            )
        return cert

    def run(self, args: Namespace) -> int:
        config = self.load(args)
        simulation = config.simulation
        if simulation is None:
            raise ConfigError("missing key 'simulation'")
        check_root(config.network.graph, args.root)
        nonzero_state = simulation.initial_state is not None and any(
            v != 0 for v in simulation.initial_state
        )
        if args.exploratory and not args.no_bound:
            raise ConfigError("--exploratory needs --no-bound")
        if nonzero_state and not args.exploratory:
            raise ConfigError(
                "a nonzero initial state needs --exploratory",
                "$.simulation.initial_state",
            )
        sets = self.input_sets(config)

        timings = Timings()
        cert = None
        if not args.no_bound:
            with timings.measure("certificate"):
                cert = self.certificate(config, args)

        cls = assemble_closed_loop(config.network)
        with timings.measure("simulation"):
            if nonzero_state:
                traces = [
                    simulate(
                        cls,
                        signals,
                        simulation.dt,
                        simulation.t_end,
                        x0=simulation.initial_state,
                        exploratory=True,
                        enforce_l2=simulation.enforce_l2,
                    )
                    for signals in sets
                ]
            else:
                traces = simulate_batch(
                    cls,
                    sets,
                    simulation.dt,
                    simulation.t_end,
                    jobs=args.jobs,
                    enforce_l2=simulation.enforce_l2,
                )

        runs = []
        for index, trace in enumerate(
            hetcon.log.progress_bar(traces, desc="bound check", leave=False)
        ):
            run: dict[str, Any] = {
                "run": index,
                "sup_DtY": float(np.max(np.abs(trace.dty))) if trace.dty.size else 0.0,
                "norm_DtY": float(trace.norm_dty[-1]),
                "norm_DtW": float(trace.norm_dtw[-1]),
            }
            if cert is not None:
                run["bound"] = verify_bound(trace, cert).to_dict()
            runs.append(run)

        sections: dict[str, Any] = {"simulation": {"runs": runs}}
        if cert is not None:
            ratios = [r["bound"]["max_ratio"] for r in runs]
            defined = [r for r in ratios if r is not None]
            sections["certificate"] = cert.to_dict()
            sections["simulation"].update(
                {
                    "rho": cert.rho,
                    "max_ratio": max(defined) if defined else None,
                    "pass": all(r["bound"]["pass"] for r in runs),
                }
            )
            if not sections["simulation"]["pass"]:
                logger.warning("the consensus gain bound is violated")

        if args.trace:
            write_trace_csv(args.trace, traces[0])
            logger.info("trace written to %s", args.trace)
        write_report(build_report(self.name, config, sections, timings), args.out)
        return EXIT_OK


ACTIONS: tuple[type[Action], ...] = (Analyze, Gap, Certify, Simulate)
