"""External input signals w_i(t) built from simple primitives.

Every primitive is right-continuous. Steps and pulse edges are snapped to
the integration grid before a simulation, and ``left_limit`` gives the
value just before a time point so that a Runge-Kutta step ending on a
discontinuity integrates the smooth piece it belongs to.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

import hetcon.log
from hetcon.error import HetconError

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Sequence
    import numpy.typing as npt

logger = hetcon.log.getLogger("netsim.signal")


class SignalError(HetconError):
    pass


def _snap(t: float, dt: float) -> float:
    return round(t / dt) * dt


class Primitive(metaclass=abc.ABCMeta):
    """One term of a SignalSpec."""

    kind: str = ""

    @property
    @abc.abstractmethod
    def finite_energy(self) -> bool:
        """True when the primitive is square integrable on [0, inf)."""

    @abc.abstractmethod
    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        """Value at t (right-continuous)."""

    def left_limit(self, t: npt.ArrayLike) -> np.ndarray:
        """Value just before t. Continuous primitives return self(t)."""
        return self(t)

    def snapped(self, dt: float) -> Primitive:
        """Return the primitive with its discontinuities moved to the grid."""
        return self

    def scaled(self, factor: float) -> Primitive:
        return replace(self, amplitude=self.amplitude * factor)  # type: ignore

    @abc.abstractmethod
    def to_dict(self) -> dict[str, Any]:
        pass  # all: no cover


@dataclass(frozen=True)
class Step(Primitive):
    amplitude: float
    start: float = 0.0
    kind = "step"

    @property
    def finite_energy(self) -> bool:
        return self.amplitude == 0.0

    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        return np.where(np.asarray(t, dtype=float) >= self.start, self.amplitude, 0.0)

    def left_limit(self, t: npt.ArrayLike) -> np.ndarray:
        return np.where(np.asarray(t, dtype=float) > self.start, self.amplitude, 0.0)

    def snapped(self, dt: float) -> Step:
        return replace(self, start=_snap(self.start, dt))

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "amplitude": self.amplitude, "start": self.start}


@dataclass(frozen=True)
class Pulse(Primitive):
    amplitude: float
    start: float
    stop: float
    kind = "pulse"

    def __post_init__(self) -> None:
        if not self.stop > self.start:
            raise SignalError(
                f"pulse stop {self.stop} must be after start {self.start}", "Pulse"
            )

    @property
    def finite_energy(self) -> bool:
        return True

    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.start) & (t < self.stop), self.amplitude, 0.0)

    def left_limit(self, t: npt.ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where((t > self.start) & (t <= self.stop), self.amplitude, 0.0)

    def snapped(self, dt: float) -> Pulse:
        start = _snap(self.start, dt)
        stop = max(_snap(self.stop, dt), start + dt)
        if stop != _snap(self.stop, dt):
            logger.warning(
                "pulse [%s, %s) widened to one time step", self.start, self.stop
            )
        return replace(self, start=start, stop=stop)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.kind,
            "amplitude": self.amplitude,
            "start": self.start,
            "stop": self.stop,
        }


@dataclass(frozen=True)
class Sine(Primitive):
    """amplitude * exp(-decay t) * sin(frequency t + phase) for t >= 0."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    decay: float = 0.0
    kind = "sine"

    def __post_init__(self) -> None:
        if self.decay < 0:
            raise SignalError(f"negative decay rate {self.decay}", "Sine")

    @property
    def finite_energy(self) -> bool:
        return self.decay > 0 or self.amplitude == 0.0

    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        value = (
            self.amplitude
            * np.exp(-self.decay * t)
            * np.sin(self.frequency * t + self.phase)
        )
        return np.where(t >= 0.0, value, 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": self.kind,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
            "decay": self.decay,
        }


@dataclass(frozen=True)
class ExpDecay(Primitive):
    """amplitude * exp(-rate t) for t >= 0."""

    amplitude: float
    rate: float
    kind = "exp_decay"

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise SignalError(f"negative decay rate {self.rate}", "ExpDecay")

    @property
    def finite_energy(self) -> bool:
        return self.rate > 0 or self.amplitude == 0.0

    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0.0, self.amplitude * np.exp(-self.rate * t), 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, "amplitude": self.amplitude, "rate": self.rate}


PRIMITIVES: dict[str, type[Primitive]] = {
    "step": Step,
    "pulse": Pulse,
    "sine": Sine,
    "exp_decay": ExpDecay,
}


def primitive_from_dict(data: dict[str, Any]) -> Primitive:
    """Build a primitive from its JSON description.

    :param data: {"type": name, ...parameters}
    :raise SignalError: on unknown type or parameters
    """
    params = dict(data)
    kind = params.pop("type", None)
    if kind not in PRIMITIVES:
        raise SignalError(
            f"unknown signal type {kind!r}, expected one of {sorted(PRIMITIVES)}",
            "primitive_from_dict",
        )
    try:
        return PRIMITIVES[kind](**params)
    except TypeError as err:
        raise SignalError(f"{kind}: {err}", "primitive_from_dict") from err


@dataclass(frozen=True)
class SignalSpec:
    """Sum of primitives defining the input of one node."""

    primitives: tuple[Primitive, ...] = ()

    @classmethod
    def from_list(cls, data: Sequence[dict[str, Any]]) -> SignalSpec:
        return cls(primitives=tuple(primitive_from_dict(d) for d in data))

    @property
    def finite_energy(self) -> bool:
        return all(p.finite_energy for p in self.primitives)

    def __call__(self, t: npt.ArrayLike) -> np.ndarray:
        total = np.zeros(np.shape(t))
        for p in self.primitives:
            total = total + p(t)
        return total

    def left_limit(self, t: npt.ArrayLike) -> np.ndarray:
        total = np.zeros(np.shape(t))
        for p in self.primitives:
            total = total + p.left_limit(t)
        return total

    def snapped(self, dt: float) -> SignalSpec:
        return SignalSpec(primitives=tuple(p.snapped(dt) for p in self.primitives))

    def scaled(self, factor: float) -> SignalSpec:
        return SignalSpec(primitives=tuple(p.scaled(factor) for p in self.primitives))

    def to_list(self) -> list[dict[str, Any]]:
        return [p.to_dict() for p in self.primitives]


def make_signal(spec: SignalSpec) -> SignalSpec:
    """Return a callable t -> w(t) for spec.

    A SignalSpec is already callable; this validates that its values are
    finite at t=0.
    """
    value = spec(0.0)
    if not math.isfinite(float(value)):
        raise SignalError(f"signal is not finite at t=0: {value}", "make_signal")
    return spec


def random_pulse_inputs(
    n: int,
    rng: np.random.Generator,
    pulses: int = 3,
    max_amplitude: float = 1.0,
    horizon: float = 10.0,
) -> list[SignalSpec]:
    """Return n finite-energy inputs made of random pulses.

    :param n: number of nodes
    :param rng: the random generator, seeded by the caller
    :param pulses: number of pulses per node
    :param max_amplitude: amplitudes are drawn in [-max_amplitude, max_amplitude]
    :param horizon: every pulse starts and stops in [0, horizon]
    """
    result = []
    for _ in range(n):
        primitives: list[Primitive] = []
        for _ in range(pulses):
            start = float(rng.uniform(0.0, 0.8 * horizon))
            width = float(rng.uniform(0.02 * horizon, 0.2 * horizon))
            primitives.append(
                Pulse(
                    amplitude=float(rng.uniform(-max_amplitude, max_amplitude)),
                    start=start,
                    stop=min(start + width, horizon),
                )
            )
        result.append(SignalSpec(primitives=tuple(primitives)))
    return result
