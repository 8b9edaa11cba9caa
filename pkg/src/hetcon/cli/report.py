"""Assembly of the JSON reports written by the hetcon sub-commands."""

from __future__ import annotations

import sys
import time
from contextlib import contextmanager
from typing import TYPE_CHECKING

import numpy as np

import hetcon
import hetcon.json
import hetcon.log
from hetcon.graph import spanning_tree, spectrum, tree_factor, incidence_matrix

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Iterator
    from hetcon.cli.schema import NetworkConfig
    from hetcon.graph import Graph

logger = hetcon.log.getLogger("cli.report")


class Timings:
    """Wall-clock duration of the steps of a command, in seconds."""

    def __init__(self) -> None:
        self.steps: dict[str, float] = {}

    @contextmanager
    def measure(self, step: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.steps[step] = time.perf_counter() - start
            logger.debug("%s took %.3fs", step, self.steps[step])

    def to_dict(self) -> dict[str, float]:
        return {**self.steps, "total": sum(self.steps.values())}


def graph_section(g: Graph, root: int = 1) -> dict[str, Any]:
    """Return the graph metrics of a report.

    :param g: the interconnection graph
    :param root: root of the spanning tree
    """
    spec = spectrum(g)
    result: dict[str, Any] = {
        "n": g.n,
        "p": g.p,
        "lambda2": spec.lambda2,
        "laplacian_eigs": [float(v) for v in spec.laplacian_eigs],
        "rank_L": spec.rank_L,
    }
    if g.n > 1:
        tree = spanning_tree(g, root)
        factor = tree_factor(incidence_matrix(g), tree)
        Q = factor.Q.astype(float)
        result["spanning_tree"] = {
            "root": root,
            "edges": [
                [g.edges[k].i, g.edges[k].j] for k in factor.tree_edges
            ],
        }
        result["kappa"] = float(np.linalg.eigvalsh(Q @ Q.T)[-1])
    return result


def build_report(
    command: str,
    config: NetworkConfig,
    sections: dict[str, Any],
    timings: Timings,
) -> dict[str, Any]:
    """Return the full report of a command.

    :param command: the sub-command name
    :param config: the validated configuration, echoed in the report
    :param sections: command specific entries
    :param timings: durations of the command steps
    """
    return {
        "tool": {"name": "hetcon", "version": hetcon.version()},
        "command": command,
        "config": config.echo(),
        **sections,
        "timings": timings.to_dict(),
    }


def write_report(report: dict[str, Any], out: str | None) -> None:
    """Write report to the file out, or to stdout when out is None."""
    if out is None:
        sys.stdout.write(hetcon.json.dumps(report))
        sys.stdout.flush()
    else:
        hetcon.json.dump_to_json_file(out, report)
        logger.info("report written to %s", out)
