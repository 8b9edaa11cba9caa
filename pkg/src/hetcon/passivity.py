"""Positive-real test of the gap operator and passivity indices.

For two nodes H_i, H_j and a gain gamma, the gap operator is the 2x2
transfer matrix::

    Omega(s) = [[ g_i(s), -g_j(s)],
                [-g_i(s),  g_j(s)]]     with g = H / (1 - gamma H)

The pair satisfies the gamma-gap inequality iff Omega is positive real.
The gap index is the largest such gamma, found by bisection. The output
feedback passivity index of a single node is the gap index of the node
with itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar

import numpy as np

import hetcon.log
from hetcon.config import ConfigSection
from hetcon.error import HetconError
from hetcon.lti import (
    IllPosedLoopError,
    ImproperError,
    rf_eval,
    rf_feedback_scale,
    rf_poles,
    rf_residue,
)

if TYPE_CHECKING:
    from typing import Any
    from hetcon.lti import Pole, PoleSet, RationalFunction

logger = hetcon.log.getLogger("passivity")


class PassivityError(HetconError):
    pass


class ExcludedFrequencyError(PassivityError):
    pass


class NotGapPassiveError(PassivityError):
    """No gamma in the scanned range makes the pair positive real."""

    def __init__(
        self,
        message: str,
        pair: tuple[int, int] | None = None,
        origin: str | None = None,
    ):
        """Initialize a NotGapPassiveError.

        :param message: the exception message
        :param pair: the edge (i, j) being analyzed, if known
        :param origin: the name of the function raising the exception
        """
        super().__init__(message, origin)
        self.pair = pair


class IllPosedOmegaError(IllPosedLoopError, PassivityError):
    """One of the two feedback loops of the gap operator is ill-posed."""

    def __init__(self, message: str, node: str, origin: str | None = None):
        """Initialize an IllPosedOmegaError.

        :param message: the exception message
        :param node: "i" or "j", the node whose loop is ill-posed
        :param origin: the name of the function raising the exception
        """
        super().__init__(message, origin)
        self.node = node


@dataclass
class AnalysisOptions(ConfigSection):
    """Numerical settings of the passivity analysis.

    Defaults can be changed in the [analysis] section of the user
    configuration file.
    """

    title: ClassVar[str] = "analysis"

    gamma_tol: float = 1e-4
    psd_tol: float = 1e-8
    herm_tol: float = 1e-8
    axis_tol: float = 1e-9
    mult_tol: float = 1e-7
    w_min: float = 1e-4
    w_max: float = 1e4
    points: int = 2000
    refine_rounds: int = 3
    refine_factor: int = 10
    exclusion_rel: float = 1e-6
    gamma_bound: float = 1024.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_tol": self.gamma_tol,
            "psd_tol": self.psd_tol,
            "herm_tol": self.herm_tol,
            "axis_tol": self.axis_tol,
            "refine_rounds": self.refine_rounds,
            "freq_grid": {
                "w_min": self.w_min,
                "w_max": self.w_max,
                "points": self.points,
            },
        }


@dataclass(frozen=True)
class OmegaMatrix:
    """Gap operator of a pair of nodes at a given gamma."""

    gamma: float
    g_i: RationalFunction
    g_j: RationalFunction
    _poles: dict[tuple[float, float], tuple[PoleSet, PoleSet]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def pole_sets(
        self, axis_tol: float = 1e-9, mult_tol: float = 1e-7
    ) -> tuple[PoleSet, PoleSet]:
        """Return the poles of g_i and g_j.

        The pole set of Omega is the union of both.
        """
        key = (axis_tol, mult_tol)
        if key not in self._poles:
            self._poles[key] = (
                rf_poles(self.g_i, axis_tol=axis_tol, mult_tol=mult_tol),
                rf_poles(self.g_j, axis_tol=axis_tol, mult_tol=mult_tol),
            )
        return self._poles[key]

    def evaluate(self, s: complex) -> np.ndarray:
        """Return the 2x2 matrix Omega(s)."""
        a = rf_eval(self.g_i, s)
        b = rf_eval(self.g_j, s)
        return np.array([[a, -b], [-a, b]], dtype=complex)


def build_omega(
    h_i: RationalFunction, h_j: RationalFunction, gamma: float
) -> OmegaMatrix:
    """Return the gap operator of (h_i, h_j) at gamma.

    :raise IllPosedOmegaError: when 1 - gamma h vanishes for one node
    """
    generators = []
    for node, h in (("i", h_i), ("j", h_j)):
        try:
            generators.append(rf_feedback_scale(h, gamma))
        except IllPosedLoopError as err:
            raise IllPosedOmegaError(
                f"loop of node {node} ill-posed at gamma={gamma}: {err}",
                node=node,
                origin="build_omega",
            ) from err
    return OmegaMatrix(gamma=gamma, g_i=generators[0], g_j=generators[1])


def hermitian_min_eig(a: Any, b: Any) -> Any:
    """Smallest eigenvalue of Omega + Omega^H given a = g_i, b = g_j.

    The Hermitian part is [[2 Re a, -(b + conj a)], [-(a + conj b), 2 Re b]],
    its determinant is -|a - b|^2. Works elementwise on arrays.
    """
    p = 2.0 * np.real(a)
    r = 2.0 * np.real(b)
    q = b + np.conj(a)
    return (p + r) / 2.0 - np.sqrt(((p - r) / 2.0) ** 2 + np.abs(q) ** 2)


def _imaginary_poles(
    omega: OmegaMatrix, axis_tol: float, mult_tol: float
) -> list[Pole]:
    poles_i, poles_j = omega.pole_sets(axis_tol, mult_tol)
    return list(poles_i.imaginary) + list(poles_j.imaginary)


def _exclusion_mask(
    w: np.ndarray, poles: list[Pole], exclusion_rel: float
) -> np.ndarray:
    """Return True for the frequencies far enough from every imaginary pole."""
    keep = np.ones(w.shape, dtype=bool)
    for pole in poles:
        radius = exclusion_rel * max(1.0, abs(pole.value))
        keep &= np.abs(1j * w - pole.value) > radius
    return keep


def hermitian_part_min_eig(
    omega: OmegaMatrix,
    w: float,
    exclusion_rel: float = 1e-6,
    axis_tol: float = 1e-9,
    mult_tol: float = 1e-7,
) -> float:
    """Return the smallest eigenvalue of Omega(jw) + Omega(jw)^H.

    :param omega: the gap operator
    :param w: frequency in rad/s, math.inf for the limit at infinity
    :raise ExcludedFrequencyError: when jw is too close to an imaginary pole
    """
    if math.isinf(w):
        try:
            a: complex = omega.g_i.high_frequency_gain()
            b: complex = omega.g_j.high_frequency_gain()
        except ImproperError as err:
            raise ExcludedFrequencyError(
                str(err), origin="hermitian_part_min_eig"
            ) from err
        return float(hermitian_min_eig(a, b))

    poles = _imaginary_poles(omega, axis_tol, mult_tol)
    if not _exclusion_mask(np.array([w]), poles, exclusion_rel)[0]:
        raise ExcludedFrequencyError(
            f"w={w} is within the exclusion radius of an imaginary pole",
            origin="hermitian_part_min_eig",
        )
    a = rf_eval(omega.g_i, 1j * w)
    b = rf_eval(omega.g_j, 1j * w)
    return float(hermitian_min_eig(a, b))


@dataclass(frozen=True)
class ConditionA:
    passed: bool
    rhp_poles: tuple[complex, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "rhp_poles": [[p.real, p.imag] for p in self.rhp_poles],
        }


@dataclass(frozen=True)
class ConditionB:
    passed: bool
    min_eig: float
    argmin: float
    at_infinity: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "min_eig": self.min_eig,
            "argmin": self.argmin,
            "argmin_is_infinity": math.isinf(self.argmin),
            "min_eig_at_infinity": self.at_infinity,
        }


@dataclass(frozen=True)
class ResidueCheck:
    pole: complex
    simple: bool
    hermitian_deviation: float
    eigenvalues: tuple[float, ...]
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "pole": [self.pole.real, self.pole.imag],
            "simple": self.simple,
            "hermitian_deviation": self.hermitian_deviation,
            "eigenvalues": list(self.eigenvalues),
            "pass": self.passed,
        }


@dataclass(frozen=True)
class ConditionC:
    passed: bool
    residues: tuple[ResidueCheck, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"pass": self.passed, "residues": [r.to_dict() for r in self.residues]}


@dataclass(frozen=True)
class PRVerdict:
    """Outcome of the positive-real test with per-condition diagnostics."""

    condition_a: ConditionA
    condition_b: ConditionB
    condition_c: ConditionC
    frequency_grid_size: int

    @property
    def passed(self) -> bool:
        return (
            self.condition_a.passed
            and self.condition_b.passed
            and self.condition_c.passed
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "condition_a": self.condition_a.to_dict(),
            "condition_b": self.condition_b.to_dict(),
            "condition_c": self.condition_c.to_dict(),
            "frequency_grid_size": self.frequency_grid_size,
        }


def frequency_grid(omega: OmegaMatrix, opts: AnalysisOptions) -> np.ndarray:
    """Return the sorted nonnegative sweep frequencies for condition (b).

    The grid is a logarithmic sweep plus w=0 plus points approaching each
    imaginary pole geometrically from both sides. Points inside the
    exclusion radius of a pole are removed. Only w >= 0 is needed since
    Omega(-jw) is the conjugate of Omega(jw).
    """
    parts = [
        np.array([0.0]),
        np.logspace(math.log10(opts.w_min), math.log10(opts.w_max), opts.points),
    ]
    poles = _imaginary_poles(omega, opts.axis_tol, opts.mult_tol)
    for pole in poles:
        w0 = pole.value.imag
        if w0 < 0:
            continue
        scale = max(1.0, abs(w0))
        radius = opts.exclusion_rel * scale
        offsets = np.geomspace(2.0 * radius, 0.5 * scale, 25)
        parts.append(w0 + offsets)
        parts.append(w0 - offsets)
    grid = np.unique(np.concatenate(parts))
    grid = grid[grid >= 0.0]
    return grid[_exclusion_mask(grid, poles, opts.exclusion_rel)]


def _check_condition_b(
    omega: OmegaMatrix, opts: AnalysisOptions
) -> tuple[ConditionB, int]:
    poles = _imaginary_poles(omega, opts.axis_tol, opts.mult_tol)
    grid = frequency_grid(omega, opts)
    values = hermitian_min_eig(
        omega.g_i.evaluate_many(1j * grid), omega.g_j.evaluate_many(1j * grid)
    )
    values = np.where(np.isnan(values), -np.inf, values)

    for _ in range(opts.refine_rounds):
        k = int(np.argmin(values))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        if hi <= lo:
            break
        extra = np.linspace(lo, hi, 2 * opts.refine_factor + 1)
        extra = extra[_exclusion_mask(extra, poles, opts.exclusion_rel)]
        extra_values = hermitian_min_eig(
            omega.g_i.evaluate_many(1j * extra), omega.g_j.evaluate_many(1j * extra)
        )
        extra_values = np.where(np.isnan(extra_values), -np.inf, extra_values)
        grid, index = np.unique(np.concatenate([grid, extra]), return_index=True)
        values = np.concatenate([values, extra_values])[index]

    k = int(np.argmin(values))
    min_eig = float(values[k])
    argmin = float(grid[k])

    at_infinity = None
    try:
        at_infinity = hermitian_part_min_eig(omega, math.inf)
    except ExcludedFrequencyError:
        logger.debug(
            "improper generator, no limit at infinity for gamma=%s", omega.gamma
        )
    else:
        if at_infinity < min_eig:
            min_eig, argmin = at_infinity, math.inf

    verdict = ConditionB(
        passed=min_eig >= -opts.psd_tol,
        min_eig=min_eig,
        argmin=argmin,
        at_infinity=at_infinity,
    )
    return verdict, len(grid)


def _check_condition_c(omega: OmegaMatrix, opts: AnalysisOptions) -> ConditionC:
    poles_i, poles_j = omega.pole_sets(opts.axis_tol, opts.mult_tol)

    # Union of the imaginary poles of both generators
    merged: list[tuple[complex, int, int]] = []
    for which, pole_set in enumerate((poles_i, poles_j)):
        for pole in pole_set.imaginary:
            for idx, (value, m_i, m_j) in enumerate(merged):
                if abs(value - pole.value) <= opts.mult_tol * max(1.0, abs(value)):
                    merged[idx] = (
                        value,
                        pole.multiplicity if which == 0 else m_i,
                        pole.multiplicity if which == 1 else m_j,
                    )
                    break
            else:
                merged.append(
                    (
                        pole.value,
                        pole.multiplicity if which == 0 else 0,
                        pole.multiplicity if which == 1 else 0,
                    )
                )

    checks = []
    for value, m_i, m_j in merged:
        if m_i > 1 or m_j > 1:
            logger.debug("repeated imaginary pole %s at gamma=%s", value, omega.gamma)
            checks.append(
                ResidueCheck(
                    pole=value,
                    simple=False,
                    hermitian_deviation=math.nan,
                    eigenvalues=(),
                    passed=False,
                )
            )
            continue
        r_i = rf_residue(omega.g_i, value, opts.mult_tol) if m_i else 0j
        r_j = rf_residue(omega.g_j, value, opts.mult_tol) if m_j else 0j
        R = np.array([[r_i, -r_j], [-r_i, r_j]], dtype=complex)
        deviation = float(np.linalg.norm(R - R.conj().T))
        eigs = np.linalg.eigvalsh((R + R.conj().T) / 2.0)
        checks.append(
            ResidueCheck(
                pole=value,
                simple=True,
                hermitian_deviation=deviation,
                eigenvalues=tuple(float(e) for e in eigs),
                passed=deviation <= opts.herm_tol and float(eigs[0]) >= -opts.psd_tol,
            )
        )
    return ConditionC(passed=all(c.passed for c in checks), residues=tuple(checks))


def pr_test(omega: OmegaMatrix, opts: AnalysisOptions | None = None) -> PRVerdict:
    """Test whether omega is positive real.

    (a) no pole in the open right half-plane, (b) Hermitian part positive
    semidefinite on the imaginary axis away from poles, (c) imaginary poles
    simple with Hermitian positive semidefinite residue matrices.

    :param omega: the gap operator
    :param opts: numerical settings, AnalysisOptions.load() if None
    """
    if opts is None:
        opts = AnalysisOptions.load()

    poles_i, poles_j = omega.pole_sets(opts.axis_tol, opts.mult_tol)
    rhp = tuple(p.value for p in poles_i.unstable + poles_j.unstable)
    condition_a = ConditionA(passed=not rhp, rhp_poles=rhp)
    condition_b, grid_size = _check_condition_b(omega, opts)
    condition_c = _check_condition_c(omega, opts)

    return PRVerdict(
        condition_a=condition_a,
        condition_b=condition_b,
        condition_c=condition_c,
        frequency_grid_size=grid_size,
    )


@dataclass(frozen=True)
class GapIndex:
    """Largest gamma for which the gap operator is positive real.

    gamma_star is the certified-pass end of the bracket, or math.inf when
    no failing gamma exists below the search bound.
    """

    gamma_star: float
    bracket: tuple[float, float]
    tolerance: float
    unbounded: bool = False
    evaluations: int = 0

    @property
    def lower_bound(self) -> float:
        """Largest gamma at which the test was seen to pass."""
        return self.bracket[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma": None if self.unbounded else self.gamma_star,
            "bracket": [self.bracket[0], None if self.unbounded else self.bracket[1]],
            "tolerance": self.tolerance,
            "unbounded": self.unbounded,
            "evaluations": self.evaluations,
        }


def gap_index(
    h_i: RationalFunction,
    h_j: RationalFunction,
    opts: AnalysisOptions | None = None,
    edge: tuple[int, int] | None = None,
) -> GapIndex:
    """Compute the gap index of the pair (h_i, h_j) by bisection.

    A pass point is searched in 0, -1, -2, -4, ... down to -gamma_bound.
    A fail point is then searched by doubling steps upward, up to
    +gamma_bound. An ill-posed loop counts as a fail point.

    :param h_i: first node
    :param h_j: second node
    :param opts: numerical settings, AnalysisOptions.load() if None
    :param edge: the edge being analyzed, used for messages only
    :raise NotGapPassiveError: when no pass point is found
    """
    if opts is None:
        opts = AnalysisOptions.load()
    evaluations = 0

    def passes(gamma: float) -> bool:
        nonlocal evaluations
        evaluations += 1
        try:
            omega = build_omega(h_i, h_j, gamma)
        except IllPosedOmegaError as err:
            logger.debug("gamma=%s counted as failing: %s", gamma, err, edge=edge)
            return False
        return pr_test(omega, opts).passed

    if h_i != h_j:
        logger.warning(
            "heterogeneous pair %r / %r: positive realness holds up to psd_tol=%s",
            h_i,
            h_j,
            opts.psd_tol,
            edge=edge,
        )

    low: float | None = None
    candidates = [0.0]
    k = 0
    while 2.0**k <= opts.gamma_bound:
        candidates.append(-(2.0**k))
        k += 1
    for gamma in candidates:
        if passes(gamma):
            low = gamma
            break
    if low is None:
        where = "" if edge is None else f" on edge {edge}"
        raise NotGapPassiveError(
            f"no gamma in [-{opts.gamma_bound}, 0] passes the positive-real"
            f" test{where}",
            pair=edge,
            origin="gap_index",
        )

    high: float | None = None
    step = 1.0
    while low + step <= opts.gamma_bound:
        probe = low + step
        if passes(probe):
            low = probe
            step *= 2.0
        else:
            high = probe
            break

    if high is None:
        logger.info("gap index unbounded above (pass at %s)", low, edge=edge)
        return GapIndex(
            gamma_star=math.inf,
            bracket=(low, math.inf),
            tolerance=opts.gamma_tol,
            unbounded=True,
            evaluations=evaluations,
        )

    while high - low > opts.gamma_tol:
        mid = (low + high) / 2.0
        if passes(mid):
            low = mid
        else:
            high = mid
        logger.debug("bracket [%s, %s]", low, high, edge=edge)

    logger.info("gap index %s (bracket [%s, %s])", low, low, high, edge=edge)
    return GapIndex(
        gamma_star=low,
        bracket=(low, high),
        tolerance=opts.gamma_tol,
        evaluations=evaluations,
    )


def ofp_index(h: RationalFunction, opts: AnalysisOptions | None = None) -> GapIndex:
    """Return the output feedback passivity index of h."""
    return gap_index(h, h, opts)
