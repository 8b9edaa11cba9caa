"""SISO LTI systems as real-rational transfer functions.

Polynomials are stored with ascending coefficients, ``coeffs[k]``
multiplying ``s**k``. A RationalFunction keeps a monic denominator and
never cancels common roots of its numerator and denominator: cancelling
them could hide an imaginary-axis pole from the positive-real test.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
import numpy.polynomial.polynomial as npoly

import hetcon.log
from hetcon.error import HetconError

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Iterable
    import numpy.typing as npt

logger = hetcon.log.getLogger("lti")

# Trailing coefficients below TRIM_TOL * max|coeff| are dropped
TRIM_TOL = 1e-12

# Relative magnitude of den(s) under which s is considered a pole
EVAL_TOL = 1e-12

# Radius used to merge numerically split roots into one multiple root
MULT_TOL = 1e-7

# Poles with |Re(p)| <= AXIS_TOL lie on the imaginary axis
AXIS_TOL = 1e-9

# Distance under which a numerator root and a denominator root are reported
COMMON_ROOT_TOL = 1e-7


class LTIError(HetconError):
    pass


class NoRootsError(LTIError):
    pass


class PoleEvaluationError(LTIError):
    """Evaluation of a transfer function at one of its poles."""

    def __init__(self, message: str, nearest_pole: complex, origin: str | None = None):
        """Initialize a PoleEvaluationError.

        :param message: the exception message
        :param nearest_pole: the pole closest to the evaluation point
        :param origin: the name of the function raising the exception
        """
        super().__init__(message, origin)
        self.nearest_pole = nearest_pole


class IllPosedLoopError(LTIError):
    pass


class ImproperError(LTIError):
    pass


class NotAPoleError(LTIError):
    pass


class RepeatedPoleError(LTIError):
    pass


class Polynomial:
    """Real polynomial with ascending coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[float] | npt.ArrayLike):
        """Build a polynomial and trim its negligible leading terms.

        :param coeffs: coefficients, lowest degree first
        :raise LTIError: when the list is empty or holds non-finite values
        """
        c = np.array(coeffs, dtype=float).ravel()
        if c.size == 0:
            raise LTIError("empty coefficient list", origin="Polynomial")
        if not np.all(np.isfinite(c)):
            raise LTIError(
                f"non-finite coefficient in {c.tolist()}", origin="Polynomial"
            )

        scale = float(np.max(np.abs(c)))
        if scale == 0.0:
            c = np.zeros(1)
        else:
            significant = np.nonzero(np.abs(c) > TRIM_TOL * scale)[0]
            c = c[: significant[-1] + 1]
        c.setflags(write=False)
        self.coeffs: np.ndarray = c

    @classmethod
    def from_roots(cls, roots: Iterable[complex]) -> Polynomial:
        """Return the monic polynomial with the given roots.

        :param roots: a conjugation-closed list of roots
        """
        c = npoly.polyfromroots(list(roots))
        return cls(np.real(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return float(self.coeffs[-1])

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0.0

    def __call__(self, s: Any) -> Any:
        return npoly.polyval(s, self.coeffs)

    def magnitude_bound(self, s: Any) -> Any:
        """Return sum |c_k| |s|^k, the scale of the rounding error of self(s)."""
        return npoly.polyval(np.abs(s), np.abs(self.coeffs))

    def derivative(self) -> Polynomial:
        if self.degree == 0:
            return Polynomial([0.0])
        return Polynomial(npoly.polyder(self.coeffs))

    def scale(self, factor: float) -> Polynomial:
        return Polynomial(self.coeffs * factor)

    def __add__(self, other: Polynomial | float) -> Polynomial:
        if not isinstance(other, Polynomial):
            other = Polynomial([other])
        return Polynomial(npoly.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other: Polynomial | float) -> Polynomial:
        if not isinstance(other, Polynomial):
            other = Polynomial([other])
        return Polynomial(npoly.polysub(self.coeffs, other.coeffs))

    def __mul__(self, other: Polynomial | float) -> Polynomial:
        if not isinstance(other, Polynomial):
            return self.scale(float(other))
        return Polynomial(npoly.polymul(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __neg__(self) -> Polynomial:
        return self.scale(-1.0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self) -> int:
        return hash((self.coeffs + 0.0).tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coeffs.tolist()})"


class RationalFunction:
    """Real-rational SISO transfer function num(s)/den(s), den monic."""

    __slots__ = ("num", "den")

    def __init__(
        self,
        num: Polynomial | Iterable[float] | npt.ArrayLike,
        den: Polynomial | Iterable[float] | npt.ArrayLike,
    ):
        """Initialize a RationalFunction.

        :param num: numerator polynomial or its ascending coefficients
        :param den: denominator polynomial or its ascending coefficients
        :raise LTIError: when den is identically zero
        """
        if not isinstance(num, Polynomial):
            num = Polynomial(num)
        if not isinstance(den, Polynomial):
            den = Polynomial(den)
        if den.is_zero:
            raise LTIError("denominator is identically zero", origin="RationalFunction")
        lead = den.leading
        self.num: Polynomial = num.scale(1.0 / lead)
        self.den: Polynomial = den.scale(1.0 / lead)

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero or self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero or self.num.degree < self.den.degree

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    def high_frequency_gain(self) -> float:
        """Return the limit of h(s) when |s| goes to infinity.

        :raise ImproperError: when the limit is infinite
        """
        if self.is_strictly_proper:
            return 0.0
        elif self.is_proper:
            return self.num.leading
        raise ImproperError(
            f"{self!r} is improper, no finite limit at infinity",
            origin="high_frequency_gain",
        )

    def evaluate_many(self, s: npt.ArrayLike) -> np.ndarray:
        """Evaluate h at many points without pole checks.

        Callers are responsible for keeping s away from the poles.

        :param s: array of complex frequencies
        """
        s = np.asarray(s, dtype=complex)
        return self.num(s) / self.den(s)

    def to_dict(self) -> dict[str, list[float]]:
        return {"num": self.num.coeffs.tolist(), "den": self.den.coeffs.tolist()}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def __repr__(self) -> str:
        return (
            f"RationalFunction({self.num.coeffs.tolist()}, {self.den.coeffs.tolist()})"
        )


class PoleKind(Enum):
    stable = "strict-left"
    imaginary = "imaginary-axis"
    unstable = "right-half-plane"


@dataclass(frozen=True)
class Pole:
    value: complex
    multiplicity: int
    kind: PoleKind

    def to_dict(self) -> dict[str, Any]:
        return {
            "re": self.value.real,
            "im": self.value.imag,
            "multiplicity": self.multiplicity,
            "kind": self.kind.value,
        }


@dataclass(frozen=True)
class PoleSet:
    """Poles of a transfer function with their multiplicities."""

    poles: tuple[Pole, ...]

    @property
    def total_multiplicity(self) -> int:
        return sum(p.multiplicity for p in self.poles)

    @property
    def imaginary(self) -> tuple[Pole, ...]:
        return tuple(p for p in self.poles if p.kind == PoleKind.imaginary)

    @property
    def unstable(self) -> tuple[Pole, ...]:
        return tuple(p for p in self.poles if p.kind == PoleKind.unstable)

    def nearest(self, s: complex) -> Pole:
        """Return the pole closest to s.

        :raise NoRootsError: when the set is empty
        """
        if not self.poles:
            raise NoRootsError("transfer function has no pole", origin="nearest")
        return min(self.poles, key=lambda p: abs(p.value - s))


@dataclass(frozen=True)
class StateSpace:
    """Realization x' = A x + B u, y = C x + D u of a SISO system."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def evaluate(self, s: complex) -> complex:
        """Return C (sI - A)^-1 B + D.

        :param s: complex frequency, not an eigenvalue of A
        """
        if self.n_states == 0:
            return complex(self.D)
        resolvent = np.linalg.solve(
            s * np.eye(self.n_states, dtype=complex) - self.A, self.B.astype(complex)
        )
        return complex((self.C @ resolvent)[0, 0] + self.D)


def _sort_key(z: complex) -> tuple[float, float]:
    return (round(z.real, 12), round(z.imag, 12))


def poly_roots(p: Polynomial) -> list[complex]:
    """Return the roots of p, with multiplicity.

    Roots are the eigenvalues of the companion matrix. Roots whose imaginary
    part is below MULT_TOL are made real and the remaining ones are paired
    with their nearest conjugate so that the result is exactly closed under
    conjugation.

    :param p: a polynomial of degree at least one
    :raise NoRootsError: when p is constant
    """
    if p.degree < 1:
        raise NoRootsError(f"{p!r} has degree 0", origin="poly_roots")

    raw = np.linalg.eigvals(npoly.polycompanion(p.coeffs))

    real_roots: list[complex] = []
    upper: list[complex] = []
    lower: list[complex] = []
    for z in raw:
        z = complex(z)
        if abs(z.imag) <= MULT_TOL * max(1.0, abs(z)):
            real_roots.append(complex(z.real, 0.0))
        elif z.imag > 0:
            upper.append(z)
        else:
            lower.append(z)

    result = list(real_roots)
    for z in sorted(upper, key=_sort_key):
        if lower:
            k = min(range(len(lower)), key=lambda idx: abs(lower[idx] - z.conjugate()))
            partner = lower.pop(k)
            z = (z + partner.conjugate()) / 2
        result.extend([z, z.conjugate()])
    # Unpaired roots can only come from a severely ill-conditioned input
    if lower:  # defensive code
        logger.warning("unpaired complex roots %s in %r", lower, p)
        result.extend(lower)

    result.sort(key=_sort_key)
    return result


def rf_eval(h: RationalFunction, s: complex) -> complex:
    """Evaluate h at s by Horner evaluation of num and den.

    :param h: the transfer function
    :param s: the complex frequency
    :raise PoleEvaluationError: when s is numerically a pole of h
    """
    den_value = complex(h.den(s))
    if abs(den_value) <= EVAL_TOL * float(h.den.magnitude_bound(s)):
        nearest = rf_poles(h).nearest(s).value
        raise PoleEvaluationError(
            f"{h!r} evaluated at its pole {s} (nearest pole {nearest})",
            nearest_pole=nearest,
            origin="rf_eval",
        )
    return complex(h.num(s)) / den_value


def rf_feedback_scale(h: RationalFunction, gamma: float) -> RationalFunction:
    """Return h / (1 - gamma h) = N / (D - gamma N).

    :param h: the transfer function N/D
    :param gamma: the feedback gain
    :raise IllPosedLoopError: when D - gamma N is identically zero
    """
    den = h.den - h.num.scale(gamma)
    if den.is_zero:
        raise IllPosedLoopError(
            f"1 - {gamma} * h is identically zero for {h!r}",
            origin="rf_feedback_scale",
        )
    result = RationalFunction(h.num, den)
    if not result.is_proper:
        logger.warning("feedback loop of %r with gain %s is improper", h, gamma)
    return result


def rf_poles(
    h: RationalFunction, axis_tol: float = AXIS_TOL, mult_tol: float = MULT_TOL
) -> PoleSet:
    """Return the poles of h with multiplicities and classification.

    :param h: the transfer function
    :param axis_tol: half-width of the band around the imaginary axis
    :param mult_tol: roots closer than this are merged into one multiple pole
    """
    if h.den.degree == 0:
        return PoleSet(poles=())

    clusters: list[list[complex]] = []
    for root in poly_roots(h.den):
        for cluster in clusters:
            if min(abs(root - member) for member in cluster) <= mult_tol:
                cluster.append(root)
                break
        else:
            clusters.append([root])

    poles = []
    for cluster in clusters:
        value = complex(np.mean(cluster))
        if abs(value.imag) <= mult_tol:
            value = complex(value.real, 0.0)
        if abs(value.real) <= axis_tol:
            kind = PoleKind.imaginary
        elif value.real > axis_tol:
            kind = PoleKind.unstable
        else:
            kind = PoleKind.stable
        if len(cluster) > 1:
            logger.debug("pole %s of %r has multiplicity %d", value, h, len(cluster))
        poles.append(Pole(value=value, multiplicity=len(cluster), kind=kind))
    poles.sort(key=lambda p: _sort_key(p.value))
    return PoleSet(poles=tuple(poles))


def rf_residue(
    h: RationalFunction, s0: complex, mult_tol: float = MULT_TOL
) -> complex:
    """Return the residue of h at its simple pole s0.

    :param h: the transfer function
    :param s0: a simple pole of h
    :param mult_tol: tolerance used to match s0 with a pole of h
    :raise NotAPoleError: when s0 is not a pole of h
    :raise RepeatedPoleError: when s0 is a multiple pole
    """
    poles = rf_poles(h, mult_tol=mult_tol)
    if not poles.poles:
        raise NotAPoleError(f"{h!r} has no pole", origin="rf_residue")
    pole = poles.nearest(s0)
    if abs(pole.value - s0) > mult_tol * max(1.0, abs(s0)):
        raise NotAPoleError(
            f"{s0} is not a pole of {h!r} (nearest pole {pole.value})",
            origin="rf_residue",
        )
    if pole.multiplicity > 1:
        raise RepeatedPoleError(
            f"{s0} is a pole of multiplicity {pole.multiplicity} of {h!r}",
            origin="rf_residue",
        )
    return complex(h.num(s0)) / complex(h.den.derivative()(s0))


def to_state_space(h: RationalFunction) -> StateSpace:
    """Return the controllable canonical realization of h.

    :param h: a proper transfer function
    :raise ImproperError: when h is improper
    """
    if not h.is_proper:
        raise ImproperError(f"cannot realize improper {h!r}", origin="to_state_space")

    n = h.den.degree
    if n == 0:
        return StateSpace(
            A=np.zeros((0, 0)),
            B=np.zeros((0, 1)),
            C=np.zeros((1, 0)),
            D=float(h.num.coeffs[0] / h.den.coeffs[0]),
        )

    feedthrough = float(h.num.coeffs[n]) if h.num.degree == n else 0.0
    remainder = h.num - h.den.scale(feedthrough)

    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -h.den.coeffs[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, n))
    C[0, : remainder.degree + 1] = remainder.coeffs[:n]
    return StateSpace(A=A, B=B, C=C, D=feedthrough)


def near_common_roots(
    h: RationalFunction, tol: float = COMMON_ROOT_TOL
) -> list[tuple[complex, complex]]:
    """Return the (zero, pole) pairs of h closer than tol.

    Such pairs are kept as they are; this is a diagnostic only.

    :param h: the transfer function
    :param tol: distance threshold
    """
    if h.num.degree < 1 or h.den.degree < 1:
        return []
    poles = poly_roots(h.den)
    result = []
    for zero in poly_roots(h.num):
        pole = min(poles, key=lambda p: abs(p - zero))
        if abs(pole - zero) < tol:
            result.append((zero, pole))
    return result
