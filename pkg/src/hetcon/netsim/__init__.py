"""Closed-loop simulation of a diffusively coupled network.

Each node i has its transfer function H_i, output y_i and input
u_i = w_i - v_i where v = K y and K = D Psi D^T is the weighted coupling
matrix. The stacked loop is integrated with fixed-step Runge-Kutta 4 from
a zero initial state, and the ratio ||D^T Y||_T / ||D^T W||_T of truncated
norms is compared with the certified gain rho.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import block_diag

import hetcon.log
from hetcon.error import HetconError
from hetcon.graph import incidence_matrix, weighted_coupling
from hetcon.job.scheduler import parallel_map
from hetcon.lti import to_state_space
from hetcon.netsim.signal import SignalError

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Sequence
    from hetcon.consensus import ConsensusCertificate, Network
    from hetcon.netsim.signal import SignalSpec

logger = hetcon.log.getLogger("netsim")

# |det(I + K D_ft)| under which the algebraic loop is ill-posed
WELL_POSED_TOL = 1e-9

# State magnitude considered as a divergence
DIVERGENCE_BOUND = 1e12

# Truncated norms of D^T W below this value give no ratio
NORM_FLOOR = 1e-9

# Bound on sup |D^T Y| when D^T W vanishes identically
CONSENSUS_FLOOR = 1e-6

# Allowance for the integration error on the ratio
RATIO_SLACK = 1e-2


class ClosedLoopError(HetconError):
    pass


class SimulationError(HetconError):
    """Failure of a simulation run.

    :ivar time: first time at which the state became invalid, if any
    """

    def __init__(
        self, message: str, time: float | None = None, origin: str | None = None
    ):
        super().__init__(message, origin)
        self.time = time


class NormRangeError(HetconError):
    pass


class BoundCheckError(HetconError):
    pass


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Stacked realization of the network and its coupling.

    The closed loop is x' = A_cl x + B_cl w with u = S (w - K C x) and
    y = C x + D_ft u.
    """

    network: Network
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D_ft: np.ndarray
    K: np.ndarray
    S: np.ndarray
    A_cl: np.ndarray
    B_cl: np.ndarray

    @property
    def n(self) -> int:
        return self.network.graph.n

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def outputs(self, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (u, y) for states x and inputs w given as rows of samples."""
        u = (w - x @ self.C.T @ self.K.T) @ self.S.T
        y = x @ self.C.T + u @ self.D_ft.T
        return u, y


def assemble_closed_loop(net: Network) -> ClosedLoopSystem:
    """Stack the node realizations and close the coupling loop.

    :raise ClosedLoopError: when I + K D_ft is singular
    """
    realizations = [to_state_space(h) for h in net.nodes]
    A = block_diag(*[r.A for r in realizations])
    B = block_diag(*[r.B for r in realizations])
    C = block_diag(*[r.C for r in realizations])
    D_ft = np.diag([r.D for r in realizations])
    K = weighted_coupling(net.graph)

    loop = np.eye(net.graph.n) + K @ D_ft
    det = float(np.linalg.det(loop))
    if abs(det) <= WELL_POSED_TOL:
        raise ClosedLoopError(
            f"algebraic loop is ill-posed: det(I + K D_ft) = {det}",
            origin="assemble_closed_loop",
        )
    S = np.linalg.inv(loop)
    A_cl = A - B @ S @ K @ C
    B_cl = B @ S
    logger.debug("closed loop with %d states", A.shape[0])
    return ClosedLoopSystem(
        network=net, A=A, B=B, C=C, D_ft=D_ft, K=K, S=S, A_cl=A_cl, B_cl=B_cl
    )


@dataclass(frozen=True)
class SimulationTrace:
    """Sampled signals of one run; rows are time samples.

    :ivar dty: edge differences D^T y, one column per edge
    :ivar norm_dty: running truncated norm ||D^T Y||_T on the grid
    """

    t: np.ndarray
    w: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x: np.ndarray
    dty: np.ndarray
    dtw: np.ndarray
    norm_dty: np.ndarray
    norm_dtw: np.ndarray
    dt: float
    zero_initial_state: bool
    finite_energy: bool

    @property
    def ratio(self) -> np.ndarray:
        """||D^T Y||_T / ||D^T W||_T, NaN where ||D^T W||_T <= NORM_FLOOR."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(
                self.norm_dtw > NORM_FLOOR, self.norm_dty / self.norm_dtw, np.nan
            )


def _rk4_step(
    A: np.ndarray,
    B: np.ndarray,
    x: np.ndarray,
    w0: np.ndarray,
    w_mid: np.ndarray,
    w1: np.ndarray,
    dt: float,
) -> np.ndarray:
    k1 = A @ x + B @ w0
    k2 = A @ (x + 0.5 * dt * k1) + B @ w_mid
    k3 = A @ (x + 0.5 * dt * k2) + B @ w_mid
    k4 = A @ (x + dt * k3) + B @ w1
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    cls: ClosedLoopSystem,
    signals: Sequence[SignalSpec],
    dt: float,
    t_end: float,
    x0: Sequence[float] | None = None,
    exploratory: bool = False,
    enforce_l2: bool = False,
) -> SimulationTrace:
    """Integrate the closed loop on the grid 0, dt, ..., t_end.

    :param cls: the closed-loop system
    :param signals: one input per node
    :param dt: time step
    :param t_end: final time, rounded to a multiple of dt
    :param x0: initial state, only allowed with exploratory
    :param exploratory: allow a nonzero initial state
    :param enforce_l2: reject inputs that are not finite-energy
    :raise SimulationError: on invalid settings or divergence
    """
    if not dt > 0 or not t_end >= dt:
        raise SimulationError(f"need dt > 0 and t_end >= dt (got {dt}, {t_end})")
    if len(signals) != cls.n:
        raise SimulationError(f"{len(signals)} inputs for {cls.n} nodes")
    finite_energy = all(s.finite_energy for s in signals)
    if enforce_l2 and not finite_energy:
        raise SignalError("inputs must be finite-energy for a bound check", "simulate")

    x = np.zeros(cls.n_states)
    if x0 is not None:
        x_init = np.asarray(x0, dtype=float)
        if x_init.shape != x.shape:
            raise SimulationError(
                f"initial state has {x_init.size} entries, expected {cls.n_states}"
            )
        if np.any(x_init != 0) and not exploratory:
            raise SimulationError("a nonzero initial state needs the exploratory flag")
        x = x_init.copy()
    zero_initial_state = not np.any(x != 0)

    steps = int(round(t_end / dt))
    t = np.arange(steps + 1) * dt
    snapped = [s.snapped(dt) for s in signals]
    w = np.column_stack([s(t) for s in snapped])
    w_left = np.column_stack([s.left_limit(t) for s in snapped])
    w_mid = np.column_stack([s(t[:-1] + 0.5 * dt) for s in snapped])

    states = np.zeros((steps + 1, cls.n_states))
    states[0] = x
    for k in range(steps):
        x = _rk4_step(cls.A_cl, cls.B_cl, x, w[k], w_mid[k], w_left[k + 1], dt)
        diverged = x.size and np.max(np.abs(x)) > DIVERGENCE_BOUND
        if not np.all(np.isfinite(x)) or diverged:
            raise SimulationError(
                f"simulation diverged at t={t[k + 1]}", time=float(t[k + 1])
            )
        states[k + 1] = x

    u, y = cls.outputs(states, w)
    residual = float(np.max(np.abs(u - (w - y @ cls.K.T)))) if u.size else 0.0
    if residual >= 1e-9 * (1.0 + float(np.max(np.abs(w)))):
        raise SimulationError(f"u = w - K y violated (residual {residual})")

    D = incidence_matrix(cls.network.graph).astype(float)
    dty = y @ D
    dtw = w @ D
    norm_dty = np.sqrt(cumulative_trapezoid(np.sum(dty**2, axis=1), t, initial=0.0))
    norm_dtw = np.sqrt(cumulative_trapezoid(np.sum(dtw**2, axis=1), t, initial=0.0))
    logger.debug("simulated %d steps of %s", steps, dt)

    return SimulationTrace(
        t=t,
        w=w,
        u=u,
        y=y,
        x=states,
        dty=dty,
        dtw=dtw,
        norm_dty=norm_dty,
        norm_dtw=norm_dtw,
        dt=dt,
        zero_initial_state=zero_initial_state,
        finite_energy=finite_energy,
    )


def simulate_batch(
    cls: ClosedLoopSystem,
    signal_sets: Sequence[Sequence[SignalSpec]],
    dt: float,
    t_end: float,
    jobs: int = 1,
    enforce_l2: bool = False,
) -> list[SimulationTrace]:
    """Run one zero-state simulation per input set.

    :param jobs: maximum number of simulations run in parallel
    :return: the traces in the order of signal_sets
    """
    return parallel_map(
        lambda signals: simulate(cls, signals, dt, t_end, enforce_l2=enforce_l2),
        list(signal_sets),
        jobs=jobs,
        label="sim",
    )


def truncated_norm(samples: np.ndarray, dt: float, T: float) -> float:
    """Return the L2 norm of the sampled signal restricted to [0, T].

    :param samples: one row per time sample 0, dt, 2 dt, ...; scalar or
        vector signals
    :param dt: sampling step
    :param T: truncation time, on the sampling grid
    :raise NormRangeError: when T is beyond the samples or off the grid
    """
    samples = np.asarray(samples, dtype=float)
    k = int(round(T / dt))
    if abs(k * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise NormRangeError(f"T={T} is not on the grid of step {dt}", "truncated_norm")
    if k < 0 or k >= len(samples):
        raise NormRangeError(
            f"T={T} outside [0, {(len(samples) - 1) * dt}]", "truncated_norm"
        )
    if k == 0:
        return 0.0
    squared = samples[: k + 1] ** 2
    if squared.ndim > 1:
        squared = squared.sum(axis=1)
    return math.sqrt(float(trapezoid(squared, dx=dt)))


@dataclass(frozen=True)
class BoundReport:
    """Empirical check of ||D^T Y||_T <= rho ||D^T W||_T."""

    rho: float
    max_ratio: float | None
    argmax_t: float | None
    passed: bool
    inconclusive: bool
    sup_dty: float
    ratio_slack: float
    t: np.ndarray
    ratio: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "rho": self.rho,
            "max_ratio": self.max_ratio,
            "argmax_t": self.argmax_t,
            "pass": self.passed,
            "inconclusive": self.inconclusive,
            "sup_DtY": self.sup_dty,
            "ratio_slack": self.ratio_slack,
        }


def verify_bound(
    trace: SimulationTrace,
    cert: ConsensusCertificate,
    ratio_slack: float = RATIO_SLACK,
    norm_floor: float = NORM_FLOOR,
    consensus_floor: float = CONSENSUS_FLOOR,
) -> BoundReport:
    """Compare the truncated-norm ratio of a trace with the certified gain.

    When ||D^T W||_T stays below norm_floor for every T the ratio is not
    defined; the bound then requires D^T Y = 0, checked as
    sup |D^T Y| < consensus_floor.

    :raise BoundCheckError: when the certificate or the trace do not allow
        a bound check
    """
    if not cert.certified or cert.rho is None:
        raise BoundCheckError("network is not certified", "verify_bound")
    if not trace.zero_initial_state:
        raise BoundCheckError("bound check needs a zero initial state", "verify_bound")
    if not trace.finite_energy:
        raise BoundCheckError("bound check needs finite-energy inputs", "verify_bound")

    sup_dty = float(np.max(np.abs(trace.dty))) if trace.dty.size else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            trace.norm_dtw > norm_floor, trace.norm_dty / trace.norm_dtw, np.nan
        )

    if np.all(np.isnan(ratio)):
        logger.info("D^T W below %s everywhere, checking sup |D^T Y|", norm_floor)
        return BoundReport(
            rho=cert.rho,
            max_ratio=None,
            argmax_t=None,
            passed=sup_dty < consensus_floor,
            inconclusive=True,
            sup_dty=sup_dty,
            ratio_slack=ratio_slack,
            t=trace.t,
            ratio=ratio,
        )

    k = int(np.nanargmax(ratio))
    max_ratio = float(ratio[k])
    passed = max_ratio <= cert.rho * (1.0 + ratio_slack)
    if not passed:
        logger.warning(
            "ratio %s at T=%s exceeds rho=%s", max_ratio, trace.t[k], cert.rho
        )
    return BoundReport(
        rho=cert.rho,
        max_ratio=max_ratio,
        argmax_t=float(trace.t[k]),
        passed=passed,
        inconclusive=False,
        sup_dty=sup_dty,
        ratio_slack=ratio_slack,
        t=trace.t,
        ratio=ratio,
    )


def write_trace_csv(path: str, trace: SimulationTrace) -> None:
    """Write a trace, one row per sample.

    The ratio column is left blank where ||D^T W||_T is below the floor.
    """
    n = trace.w.shape[1]
    header = (
        ["t"]
        + [f"w_{i}" for i in range(1, n + 1)]
        + [f"u_{i}" for i in range(1, n + 1)]
        + [f"y_{i}" for i in range(1, n + 1)]
        + ["norm_DtY", "norm_DtW", "ratio"]
    )
    ratio = trace.ratio
    with open(path, "w", newline="") as fd:
        writer = csv.writer(fd)
        writer.writerow(header)
        for k in range(len(trace.t)):
            row = [repr(float(trace.t[k]))]
            row += [repr(float(v)) for v in trace.w[k]]
            row += [repr(float(v)) for v in trace.u[k]]
            row += [repr(float(v)) for v in trace.y[k]]
            row += [repr(float(trace.norm_dty[k])), repr(float(trace.norm_dtw[k]))]
            row.append("" if math.isnan(ratio[k]) else repr(float(ratio[k])))
            writer.writerow(row)
