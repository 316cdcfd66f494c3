"""Physical and execution parameters shared by the compiler and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

TWO_PI = 2 * math.pi
PULSE_MODES = ("delta", "finite")


def exact(x: float | int | Fraction) -> Fraction:
    """Exact rational from a decimal literal (``54.39`` -> ``5439/100``)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class SpinSystem:
    """Homonuclear spin-1/2 pair.

    ``J`` is in Hz; the chemical-shift sum and difference are angular
    frequencies (rad/s).
    """

    J: float
    delta_omega_sum: float = 0.0
    delta_omega_diff: float = 0.0

    @classmethod
    def from_hz(cls, J: float, sum_hz: float = 0.0, diff_hz: float = 0.0) -> "SpinSystem":
        return cls(J=J, delta_omega_sum=TWO_PI * sum_hz, delta_omega_diff=TWO_PI * diff_hz)

    @property
    def omega_J(self) -> float:
        return TWO_PI * self.J

    @property
    def theta_ST(self) -> float:
        """Singlet-triplet mixing angle, ``arctan(omega_diff / omega_J)``."""
        return math.atan(self.delta_omega_diff / self.omega_J)

    def with_(self, **changes) -> "SpinSystem":
        return replace(self, **changes)


@dataclass(frozen=True)
class ExecutionContext:
    """How a sequence is played out.

    omega_nut_nominal : rad/s, used to compute pulse durations.
    amplitude_scale : actual / nominal nutation frequency; durations stay fixed.
    offset : rad/s, added to the per-spin resonance offset (``omega_sum / 2``).
    time_grid : s, spectrometer timing resolution used when rounding delays.
    pulse_mode : ``"delta"`` (instantaneous pulses) or ``"finite"``.
    """

    omega_nut_nominal: float = TWO_PI * 12.5e3
    amplitude_scale: float = 1.0
    offset: float = 0.0
    time_grid: float = 1e-7
    pulse_mode: str = "delta"

    def __post_init__(self):
        if not self.amplitude_scale > 0:
            raise ValueError(f"amplitude_scale must be positive, got {self.amplitude_scale}")
        if not self.omega_nut_nominal > 0:
            raise ValueError("omega_nut_nominal must be positive")
        if self.pulse_mode not in PULSE_MODES:
            raise ValueError(f"pulse_mode must be one of {PULSE_MODES}, got {self.pulse_mode!r}")
        if not self.time_grid > 0:
            raise ValueError("time_grid must be positive")

    @property
    def finite(self) -> bool:
        return self.pulse_mode == "finite"

    def with_(self, **changes) -> "ExecutionContext":
        return replace(self, **changes)


# 13C2-DAND at 9.39 T.
DAND = SpinSystem.from_hz(J=54.39, diff_hz=7.50)
DELTA = ExecutionContext()
FINITE = ExecutionContext(pulse_mode="finite")
