"""Validation of the JSON network description.

A network description looks like::

    {
      "nodes": [{"id": 1, "num": [1.0], "den": [1.0, 1.0]}, ...],
      "edges": [{"i": 1, "j": 2, "weight": 1.0}, ...],
      "analysis": {"gamma_tol": 1e-4, "freq_grid": {"points": 2000}},
      "simulation": {"dt": 1e-3, "t_end": 30.0, "inputs": [[...], ...]},
      "seed": 0
    }

Polynomials are ascending coefficient lists. Unknown keys are rejected and
every error names the JSON path of the offending value.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import hetcon.json
import hetcon.log
from hetcon.config import check_field
from hetcon.consensus import Network
from hetcon.error import HetconError
from hetcon.graph import Edge, build_graph
from hetcon.lti import RationalFunction
from hetcon.netsim.signal import SignalSpec
from hetcon.passivity import AnalysisOptions

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Callable

logger = hetcon.log.getLogger("cli.schema")

_MISSING = object()


class ConfigError(HetconError):
    """Invalid network description.

    :ivar path: JSON path of the offending value
    """

    def __init__(self, message: str, path: str = "$", origin: str | None = None):
        super().__init__(f"{path}: {message}", origin)
        self.path = path


def _check_keys(obj: Any, path: str, allowed: set[str], required: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"expected an object, got {type(obj).__name__}", path)
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}, expected {sorted(allowed)}", path)
    for key in sorted(required):
        if key not in obj:
            raise ConfigError(f"missing key {key!r}", path)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError("expected a number, got a boolean", path)
    try:
        check_field(path, value, float)
    except TypeError as err:
        raise ConfigError(str(err), path) from err
    if not math.isfinite(value):
        raise ConfigError(f"{value} is not finite", path)
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool):
        raise ConfigError("expected an integer, got a boolean", path)
    try:
        check_field(path, value, int)
    except TypeError as err:
        raise ConfigError(str(err), path) from err
    return int(value)


def _boolean(value: Any, path: str) -> bool:
    try:
        check_field(path, value, bool)
    except TypeError as err:
        raise ConfigError(str(err), path) from err
    return bool(value)


def _array(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"expected an array, got {type(value).__name__}", path)
    return value


def _get(
    obj: dict,
    key: str,
    path: str,
    convert: Callable[[Any, str], Any],
    default: Any = _MISSING,
    check: Callable[[Any], bool] | None = None,
    requirement: str = "",
) -> Any:
    subpath = f"{path}.{key}"
    if key not in obj:
        if default is _MISSING:
            raise ConfigError(f"missing key {key!r}", path)
        return default
    value = convert(obj[key], subpath)
    if check is not None and not check(value):
        raise ConfigError(f"{value} is invalid, must be {requirement}", subpath)
    return value


def _positive(v: float) -> bool:
    return v > 0


def _at_least_one(v: int) -> bool:
    return v >= 1


@dataclass(frozen=True)
class RandomInputs:
    runs: int = 20
    pulses: int = 3
    max_amplitude: float = 1.0
    horizon: float = 10.0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimulationConfig:
    t_end: float
    dt: float = 1e-3
    inputs: tuple[SignalSpec, ...] | None = None
    enforce_l2: bool = True
    initial_state: tuple[float, ...] | None = None
    random_inputs: RandomInputs | None = None

    def to_dict(self) -> dict[str, Any]:
        result: dict[str, Any] = {
            "dt": self.dt,
            "t_end": self.t_end,
            "enforce_l2": self.enforce_l2,
        }
        if self.inputs is not None:
            result["inputs"] = [spec.to_list() for spec in self.inputs]
        if self.initial_state is not None:
            result["initial_state"] = list(self.initial_state)
        if self.random_inputs is not None:
            result["random_inputs"] = self.random_inputs.to_dict()
        return result


@dataclass(frozen=True)
class NetworkConfig:
    network: Network
    analysis: AnalysisOptions
    simulation: SimulationConfig | None = None
    seed: int = 0
    source: str = field(default="<string>", compare=False)

    def echo(self) -> dict[str, Any]:
        """Return the configuration after normalization."""
        g = self.network.graph
        result: dict[str, Any] = {
            "nodes": [
                {"id": idx, **h.to_dict()}
                for idx, h in enumerate(self.network.nodes, start=1)
            ],
            "edges": [e.to_dict() for e in g.edges],
            "analysis": self.analysis.to_dict(),
            "seed": self.seed,
        }
        if self.simulation is not None:
            result["simulation"] = self.simulation.to_dict()
        return result


def _parse_polynomial(value: Any, path: str) -> list[float]:
    coeffs = [_number(c, f"{path}[{k}]") for k, c in enumerate(_array(value, path))]
    if not coeffs:
        raise ConfigError("empty coefficient list", path)
    return coeffs


def _parse_nodes(value: Any, path: str) -> tuple[RationalFunction, ...]:
    nodes: dict[int, RationalFunction] = {}
    for k, item in enumerate(_array(value, path)):
        item_path = f"{path}[{k}]"
        _check_keys(item, item_path, {"id", "num", "den"}, {"id", "num", "den"})
        node_id = _get(item, "id", item_path, _integer)
        if node_id in nodes:
            raise ConfigError(f"duplicate node id {node_id}", f"{item_path}.id")
        num = _parse_polynomial(item["num"], f"{item_path}.num")
        den = _parse_polynomial(item["den"], f"{item_path}.den")
        try:
            h = RationalFunction(num, den)
        except HetconError as err:
            raise ConfigError(str(err), item_path) from err
        if not h.is_proper:
            raise ConfigError("transfer function is improper", item_path)
        nodes[node_id] = h
    if not nodes:
        raise ConfigError("at least one node is required", path)
    if sorted(nodes) != list(range(1, len(nodes) + 1)):
        raise ConfigError(
            f"node ids must be 1..{len(nodes)}, got {sorted(nodes)}", path
        )
    return tuple(nodes[i] for i in range(1, len(nodes) + 1))


def _parse_edges(value: Any, path: str) -> list[Edge]:
    edges = []
    for k, item in enumerate(_array(value, path)):
        item_path = f"{path}[{k}]"
        _check_keys(item, item_path, {"i", "j", "weight"}, {"i", "j"})
        edges.append(
            Edge(
                i=_get(item, "i", item_path, _integer),
                j=_get(item, "j", item_path, _integer),
                weight=_get(
                    item,
                    "weight",
                    item_path,
                    _number,
                    default=1.0,
                    check=_positive,
                    requirement="positive",
                ),
            )
        )
    return edges


def _parse_analysis(value: Any, path: str) -> AnalysisOptions:
    opts = AnalysisOptions.load()
    _check_keys(
        value,
        path,
        {"gamma_tol", "psd_tol", "herm_tol", "axis_tol", "refine_rounds", "freq_grid"},
        set(),
    )
    changes: dict[str, Any] = {}
    for key in ("gamma_tol", "psd_tol", "herm_tol", "axis_tol"):
        if key in value:
            changes[key] = _get(
                value, key, path, _number, check=_positive, requirement="positive"
            )
    if "refine_rounds" in value:
        changes["refine_rounds"] = _get(
            value,
            "refine_rounds",
            path,
            _integer,
            check=lambda v: v >= 0,
            requirement="nonnegative",
        )
    if "freq_grid" in value:
        grid_path = f"{path}.freq_grid"
        grid = value["freq_grid"]
        _check_keys(grid, grid_path, {"w_min", "w_max", "points"}, set())
        for key in ("w_min", "w_max"):
            if key in grid:
                changes[key] = _get(
                    grid,
                    key,
                    grid_path,
                    _number,
                    check=_positive,
                    requirement="positive",
                )
        if "points" in grid:
            changes["points"] = _get(
                grid,
                "points",
                grid_path,
                _integer,
                check=lambda v: v >= 2,
                requirement="at least 2",
            )
    opts = dataclasses.replace(opts, **changes)
    if not opts.w_min < opts.w_max:
        raise ConfigError(
            f"w_min={opts.w_min} must be below w_max={opts.w_max}", f"{path}.freq_grid"
        )
    return opts


def _parse_signal(value: Any, path: str) -> SignalSpec:
    from hetcon.netsim.signal import PRIMITIVES, SignalError

    allowed = {
        "step": ({"type", "amplitude", "start"}, {"type", "amplitude"}),
        "pulse": (
            {"type", "amplitude", "start", "stop"},
            {"type", "amplitude", "start", "stop"},
        ),
        "sine": (
            {"type", "amplitude", "frequency", "phase", "decay"},
            {"type", "amplitude", "frequency"},
        ),
        "exp_decay": ({"type", "amplitude", "rate"}, {"type", "amplitude", "rate"}),
    }
    items = []
    for k, item in enumerate(_array(value, path)):
        item_path = f"{path}[{k}]"
        if not isinstance(item, dict) or item.get("type") not in PRIMITIVES:
            raise ConfigError(
                f"expected an object with a type in {sorted(PRIMITIVES)}", item_path
            )
        keys, required = allowed[item["type"]]
        _check_keys(item, item_path, keys, required)
        params = {"type": item["type"]}
        for key in keys - {"type"}:
            if key in item:
                params[key] = _number(item[key], f"{item_path}.{key}")
        items.append(params)
    try:
        return SignalSpec.from_list(items)
    except SignalError as err:
        raise ConfigError(str(err), path) from err


def _parse_simulation(value: Any, path: str, n: int, n_states: int) -> SimulationConfig:
    _check_keys(
        value,
        path,
        {"dt", "t_end", "inputs", "enforce_l2", "initial_state", "random_inputs"},
        {"t_end"},
    )
    dt = _get(value, "dt", path, _number, 1e-3, _positive, "positive")
    t_end = _get(
        value,
        "t_end",
        path,
        _number,
        check=lambda v: v >= dt,
        requirement=f">= dt={dt}",
    )

    inputs = None
    if "inputs" in value:
        raw = _array(value["inputs"], f"{path}.inputs")
        if len(raw) != n:
            raise ConfigError(f"{len(raw)} inputs for {n} nodes", f"{path}.inputs")
        inputs = tuple(
            _parse_signal(spec, f"{path}.inputs[{k}]") for k, spec in enumerate(raw)
        )

    initial_state = None
    if "initial_state" in value:
        state_path = f"{path}.initial_state"
        initial_state = tuple(
            _number(v, f"{state_path}[{k}]")
            for k, v in enumerate(_array(value["initial_state"], state_path))
        )
        if len(initial_state) != n_states:
            raise ConfigError(
                f"{len(initial_state)} entries, the network has {n_states} states",
                state_path,
            )

    random_inputs = None
    if "random_inputs" in value:
        rpath = f"{path}.random_inputs"
        raw_random = value["random_inputs"]
        _check_keys(
            raw_random, rpath, {"runs", "pulses", "max_amplitude", "horizon"}, set()
        )
        random_inputs = RandomInputs(
            runs=_get(raw_random, "runs", rpath, _integer, 20, _at_least_one, ">= 1"),
            pulses=_get(
                raw_random, "pulses", rpath, _integer, 3, _at_least_one, ">= 1"
            ),
            max_amplitude=_get(
                raw_random, "max_amplitude", rpath, _number, 1.0, _positive, "positive"
            ),
            horizon=_get(
                raw_random, "horizon", rpath, _number, 10.0, _positive, "positive"
            ),
        )

    return SimulationConfig(
        t_end=t_end,
        dt=dt,
        inputs=inputs,
        enforce_l2=_get(value, "enforce_l2", path, _boolean, True),
        initial_state=initial_state,
        random_inputs=random_inputs,
    )


def parse_config(data: Any, source: str = "<string>") -> NetworkConfig:
    """Validate a decoded JSON document and build the NetworkConfig.

    :param data: the decoded JSON document
    :param source: name of the document used in messages
    :raise ConfigError: on the first invalid value
    """
    _check_keys(
        data,
        "$",
        {"nodes", "edges", "analysis", "simulation", "seed"},
        {"nodes", "edges"},
    )
    nodes = _parse_nodes(data["nodes"], "$.nodes")
    edges = _parse_edges(data["edges"], "$.edges")
    try:
        graph = build_graph(len(nodes), edges)
        network = Network(graph=graph, nodes=nodes)
    except HetconError as err:
        raise ConfigError(str(err), "$.edges") from err

    analysis = _parse_analysis(data.get("analysis", {}), "$.analysis")
    simulation = None
    if "simulation" in data:
        n_states = sum(h.den.degree for h in nodes)
        simulation = _parse_simulation(
            data["simulation"], "$.simulation", len(nodes), n_states
        )
    seed = _get(data, "seed", "$", _integer, 0, lambda v: v >= 0, "nonnegative")
    logger.debug("loaded %s: %d nodes, %d edges", source, graph.n, graph.p)
    return NetworkConfig(
        network=network,
        analysis=analysis,
        simulation=simulation,
        seed=seed,
        source=source,
    )


def load_config(path: str) -> NetworkConfig:
    """Read and validate a network description file.

    :raise ConfigError: when the file cannot be read or is invalid
    """
    try:
        data = hetcon.json.load_from_json_file(path, ignore_non_existing=False)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    except hetcon.json.JsonError as err:
        raise ConfigError(str(err)) from err
    return parse_config(data, source=path)
