"""Pulse-sequence intermediate representation and RNnν compiler.

A :class:`PulseSequence` is an immutable tuple of events. Flip angles and
phases are kept in degrees, durations as exact :class:`fractions.Fraction`
seconds so that bookkeeping such as ``N * tau_R == n / J`` holds exactly.
Radians appear only at the simulator boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .params import DELTA, ExecutionContext, exact

NS = Fraction(1, 10**9)


class SequenceError(ValueError):
    """Invalid sequence request."""


class InfeasibleTimingError(SequenceError):
    """Pulses do not fit inside the requested element duration."""

    def __init__(self, message: str, min_nutation_hz: float):
        super().__init__(message)
        self.min_nutation_hz = min_nutation_hz


def normalize_phase(phase_deg: float) -> float:
    p = round(float(phase_deg), 9) % 360.0
    if p >= 360.0 - 1e-9:
        p = 0.0
    return p + 0.0


@dataclass(frozen=True)
class PulseEvent:
    flip_deg: float
    phase_deg: float
    mode: str = "delta"
    duration: Fraction = Fraction(0)

    def __post_init__(self):
        if self.flip_deg < 0:
            raise SequenceError(f"flip angle must be non-negative, got {self.flip_deg}")
        if self.mode not in ("delta", "finite"):
            raise SequenceError(f"unknown pulse mode {self.mode!r}")
        if self.mode == "delta" and self.duration != 0:
            raise SequenceError("delta pulses have zero duration")
        object.__setattr__(self, "phase_deg", normalize_phase(self.phase_deg))

    kind = "pulse"

    @property
    def flip(self) -> float:
        return math.radians(self.flip_deg)

    @property
    def phase(self) -> float:
        return math.radians(self.phase_deg)

    def shifted(self, dphi_deg: float) -> "PulseEvent":
        return replace(self, phase_deg=self.phase_deg + dphi_deg)

    def negated(self) -> "PulseEvent":
        return replace(self, phase_deg=-self.phase_deg)


@dataclass(frozen=True)
class DelayEvent:
    duration: Fraction

    def __post_init__(self):
        if self.duration < 0:
            raise SequenceError(f"negative delay {float(self.duration)} s")

    kind = "delay"


@dataclass(frozen=True)
class FilterMarker:
    """Idealized filter block; realized as a projection by the protocol layer."""

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("T00", "SOD"):
            raise SequenceError(f"unknown filter kind {self.kind!r}")
        for key, value in self.params:
            if key in ("m1", "m2") and value < 1:
                raise SequenceError(f"{key} must be >= 1, got {value}")

    duration = Fraction(0)

    @property
    def parameters(self) -> dict:
        return dict(self.params)


Event = Union[PulseEvent, DelayEvent, FilterMarker]


@dataclass(frozen=True)
class SymmetryNumbers:
    N: int
    n: int
    nu: int

    def __post_init__(self):
        if self.N <= 0 or self.N % 2:
            raise SequenceError(f"N must be even and positive, got N={self.N}")
        if self.n <= 0:
            raise SequenceError(f"n must be positive, got n={self.n}")

    @classmethod
    def parse(cls, text: str) -> "SymmetryNumbers":
        try:
            N, n, nu = (int(p) for p in text.replace(" ", "").split(","))
        except ValueError:
            raise SequenceError(f"expected 'N,n,nu', got {text!r}") from None
        return cls(N, n, nu)

    @property
    def phase_deg(self) -> float:
        """Element phase shift ``180 * nu / N`` degrees."""
        return 180.0 * self.nu / self.N

    def tau_r(self, J: float) -> Fraction:
        """Basic-element duration ``(n / N) / J`` in seconds."""
        if J <= 0:
            raise SequenceError(f"J must be positive, got {J}")
        return Fraction(self.n, self.N) / exact(J)

    def __str__(self) -> str:
        return f"R{self.N}_{self.n}^{self.nu}"


@dataclass(frozen=True)
class PulseSequence:
    events: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def total_duration(self) -> Fraction:
        return sum((e.duration for e in self.events), Fraction(0))

    @property
    def pulses(self) -> list[PulseEvent]:
        return [e for e in self.events if isinstance(e, PulseEvent)]

    @property
    def has_markers(self) -> bool:
        return any(isinstance(e, FilterMarker) for e in self.events)

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        label = "+".join(x for x in (self.label, other.label) if x)
        return PulseSequence(self.events + other.events, label)

    def __mul__(self, k: int) -> "PulseSequence":
        return PulseSequence(self.events * k, self.label)

    def __len__(self) -> int:
        return len(self.events)

    def relabel(self, label: str) -> "PulseSequence":
        return replace(self, label=label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "total_duration_ns": _ns(self.total_duration),
            "events": [_event_to_dict(e) for e in self.events],
        }

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        return cls(tuple(_event_from_dict(e) for e in data["events"]), data.get("label", ""))


def _ns(t: Fraction) -> float:
    return round(float(t / NS), 6)


def _event_to_dict(e: Event) -> dict:
    if isinstance(e, PulseEvent):
        return {
            "kind": "pulse",
            "flip_deg": round(e.flip_deg, 6),
            "phase_deg": round(e.phase_deg, 6) % 360.0,
            "mode": e.mode,
            "duration_ns": _ns(e.duration),
        }
    if isinstance(e, DelayEvent):
        return {"kind": "delay", "duration_ns": _ns(e.duration)}
    return {"kind": e.kind, "parameters": e.parameters}


def _event_from_dict(d: dict) -> Event:
    kind = d["kind"]
    if kind == "pulse":
        return PulseEvent(d["flip_deg"], d["phase_deg"], d.get("mode", "delta"),
                          exact(d.get("duration_ns", 0)) * NS)
    if kind == "delay":
        return DelayEvent(exact(d["duration_ns"]) * NS)
    return FilterMarker(kind, tuple(sorted(d.get("parameters", {}).items())))


# -- elementary transformations ------------------------------------------------


def _map_pulses(seq: PulseSequence, fn) -> PulseSequence:
    return replace(seq, events=tuple(fn(e) if isinstance(e, PulseEvent) else e for e in seq.events))


def phase_shift(seq: PulseSequence, phi_deg: float) -> PulseSequence:
    """Add ``phi_deg`` to every pulse phase; delays and markers untouched."""
    return _map_pulses(seq, lambda p: p.shifted(phi_deg))


def conjugate(seq: PulseSequence) -> PulseSequence:
    """Negate every pulse phase."""
    return _map_pulses(seq, PulseEvent.negated)


def time_reverse(seq: PulseSequence) -> PulseSequence:
    """Play the events backwards; a single pulse or delay is its own reverse."""
    return replace(seq, events=seq.events[::-1])


def scale_delays(seq: PulseSequence, factor: float) -> PulseSequence:
    """Multiply every delay by ``factor`` (delay-mismatch studies)."""
    f = exact(factor)
    return replace(seq, events=tuple(
        DelayEvent(e.duration * f) if isinstance(e, DelayEvent) else e for e in seq.events))


def pulse(flip_deg: float, phase_deg: float, ctx: ExecutionContext | None = None) -> PulseEvent:
    """Single pulse; its duration is ``flip / omega_nut_nominal`` in finite mode."""
    ctx = ctx or DELTA
    if not ctx.finite:
        return PulseEvent(flip_deg, phase_deg)
    return PulseEvent(flip_deg, phase_deg, "finite", exact(math.radians(flip_deg) / ctx.omega_nut_nominal))


def delay(seconds) -> DelayEvent:
    return DelayEvent(exact(seconds))


def _floor_to_grid(t: Fraction, ctx: ExecutionContext) -> Fraction:
    grid = exact(ctx.time_grid)
    return math.floor(t / grid) * grid


# -- composite pulses ----------------------------------------------------------


def wimperis_angle(beta: float) -> float:
    """BB1 correction phase ``arccos(-beta / 4 pi)`` in radians."""
    return math.acos(-beta / (4 * math.pi))


def composite_bb1(beta: float, ctx: ExecutionContext | None = None, phase_deg: float = 0.0) -> PulseSequence:
    """Time-symmetric BB1 replacement for a ``beta_0`` pulse."""
    if not 0 < beta <= 2 * math.pi:
        raise SequenceError(f"BB1 flip angle must lie in (0, 2 pi], got {beta}")
    half = math.degrees(beta) / 2
    w = math.degrees(wimperis_angle(beta))
    spec = [(half, 0.0), (180.0, w), (360.0, 3 * w), (180.0, w), (half, 0.0)]
    return PulseSequence(tuple(pulse(f, p + phase_deg, ctx) for f, p in spec), f"BB1({math.degrees(beta):g})")


def asbo11_phases(phi: float | None = None) -> list[float]:
    """Phases (deg) of the antisymmetric 11-pulse inversion sequence.

    ``phi`` is the free parameter in radians; the default
    ``4 pi / 3 - theta_W(pi) / 2`` is the pulse-strength compensated choice.
    """
    tw = wimperis_angle(math.pi)
    if phi is None:
        phi = 4 * math.pi / 3 - tw / 2
    p = [
        2 * math.pi / 3 - 5 * phi,
        4 * math.pi / 3 - tw - 4 * phi,
        4 * math.pi / 3 - 2 * tw - 3 * phi,
        4 * math.pi / 3 - tw - 2 * phi,
        2 * math.pi / 3 - phi,
    ]
    deg = [math.degrees(x) for x in p]
    return [normalize_phase(-x) for x in deg] + [0.0] + [normalize_phase(x) for x in reversed(deg)]


def composite_asbo11(ctx: ExecutionContext | None = None, phase_deg: float = 0.0) -> PulseSequence:
    return PulseSequence(tuple(pulse(180.0, p + phase_deg, ctx) for p in asbo11_phases()), "ASBO-11")


SP7 = ((60.0, 180.0), (180.0, 0.0), (240.0, 180.0), (420.0, 0.0), (240.0, 180.0), (180.0, 0.0), (60.0, 180.0))


def composite_sp7(ctx: ExecutionContext | None = None, phase_deg: float = 0.0) -> PulseSequence:
    return PulseSequence(tuple(pulse(f, p + phase_deg, ctx) for f, p in SP7), "SP7")


COMPOSITES = ("plain", "bb1", "asbo11", "sp7")


def inversion_pulse(kind: str, ctx: ExecutionContext | None = None, phase_deg: float = 0.0) -> PulseSequence:
    """A 180 degree rotation, optionally as a composite pulse."""
    if kind == "plain":
        return PulseSequence((pulse(180.0, phase_deg, ctx),), "180")
    if kind == "bb1":
        return composite_bb1(math.pi, ctx, phase_deg)
    if kind == "asbo11":
        return composite_asbo11(ctx, phase_deg)
    if kind == "sp7":
        return composite_sp7(ctx, phase_deg)
    raise SequenceError(f"unknown composite {kind!r}; expected one of {COMPOSITES}")


# -- R-elements and RNnν trains -----------------------------------------------


def basic_element(
    sym: SymmetryNumbers,
    J: float,
    ctx: ExecutionContext | None = None,
    *,
    variant: str = "A",
    composite: str = "plain",
    tau_r: float | Fraction | None = None,
    timing: str = "sum",
) -> PulseSequence:
    """``90_90 -tau- X -tau- 90_90`` with ``X`` a 180 degree rotation.

    Variant ``"A"`` uses ``X`` at phase 0, ``"B"`` at phase 180.
    In finite mode the delays absorb the pulse durations:
    ``timing="sum"`` gives ``tau = (tau_R - sum of pulse durations) / 2`` so
    the element lasts exactly ``tau_R`` (up to grid rounding);
    ``timing="central"`` gives ``tau = tau_R / 2 - duration(X)``.
    ``tau_r`` overrides the nominal ``(n / N) / J``.
    """
    ctx = ctx or DELTA
    if variant not in ("A", "B"):
        raise SequenceError(f"variant must be 'A' or 'B', got {variant!r}")
    if timing not in ("sum", "central"):
        raise SequenceError(f"timing must be 'sum' or 'central', got {timing!r}")
    t_r = sym.tau_r(J) if tau_r is None else exact(tau_r)
    outer = pulse(90.0, 90.0, ctx)
    center = inversion_pulse(composite, ctx, 0.0 if variant == "A" else 180.0)
    center_dur = center.total_duration
    pulses_dur = 2 * outer.duration + center_dur
    if not ctx.finite:
        tau = t_r / 2
    else:
        raw = t_r / 2 - center_dur if timing == "central" else (t_r - pulses_dur) / 2
        if raw < 0:
            total_flip = math.radians(180.0 + sum(p.flip_deg for p in center.pulses))
            min_hz = total_flip / float(t_r) / (2 * math.pi)
            raise InfeasibleTimingError(
                f"pulses ({float(pulses_dur) * 1e6:.3f} us) do not fit in tau_R = {float(t_r) * 1e6:.3f} us; "
                f"minimum feasible nutation frequency is {min_hz:.1f} Hz",
                min_hz,
            )
        tau = _floor_to_grid(raw, ctx)
    events = (outer, DelayEvent(tau), *center.events, DelayEvent(tau), outer)
    label = f"R0_{variant}" + ("" if composite == "plain" else f"[{composite}]")
    return PulseSequence(events, label)


def basic_element_A(sym: SymmetryNumbers, J: float, ctx: ExecutionContext | None = None, **kw) -> PulseSequence:
    return basic_element(sym, J, ctx, variant="A", **kw)


def basic_element_B(sym: SymmetryNumbers, J: float, ctx: ExecutionContext | None = None, **kw) -> PulseSequence:
    return basic_element(sym, J, ctx, variant="B", **kw)


def _check_duration(sym: SymmetryNumbers, element: PulseSequence, J: float | None, tol: Fraction) -> None:
    if J is None:
        return
    expected = sym.tau_r(J)
    if abs(element.total_duration - expected) > tol:
        raise SequenceError(
            f"element duration {float(element.total_duration) * 1e6:.3f} us does not match "
            f"tau_R = {float(expected) * 1e6:.3f} us for {sym}"
        )


def build_elements(sym: SymmetryNumbers, elem_a: PulseSequence, elem_b: PulseSequence,
                   n_elements: int) -> PulseSequence:
    """First ``n_elements`` R-elements of the pattern ``(A)_{+phi} (B')_{-phi} ...``."""
    if n_elements < 0:
        raise SequenceError(f"n_elements must be >= 0, got {n_elements}")
    if elem_a.total_duration != elem_b.total_duration:
        raise SequenceError("riffled elements must share the same duration")
    phi = sym.phase_deg
    first = phase_shift(elem_a, phi)
    second = phase_shift(conjugate(elem_b), -phi)
    events: list = []
    for k in range(n_elements):
        events.extend((first if k % 2 == 0 else second).events)
    return PulseSequence(tuple(events), f"{sym}x{n_elements}")


def build_standard(sym: SymmetryNumbers, basic: PulseSequence, J: float | None = None,
                   tol: Fraction = Fraction(1, 10**6)) -> PulseSequence:
    """``{R0_{+pi nu/N} R0'_{-pi nu/N}}^{N/2}``; checks ``tau_R`` when ``J`` is given."""
    _check_duration(sym, basic, J, tol)
    return build_elements(sym, basic, basic, sym.N).relabel(f"{sym} standard")


def build_riffled(sym: SymmetryNumbers, basic_a: PulseSequence, basic_b: PulseSequence,
                  J: float | None = None, tol: Fraction = Fraction(1, 10**6)) -> PulseSequence:
    """``{(R0_A)_{+pi nu/N} (R0'_B)_{-pi nu/N}}^{N/2}``."""
    if basic_a.total_duration != basic_b.total_duration:
        raise SequenceError("riffled elements must share the same duration")
    _check_duration(sym, basic_a, J, tol)
    return build_elements(sym, basic_a, basic_b, sym.N).relabel(f"{sym} riffled")


PULSEPOL_SYMMETRY = SymmetryNumbers(4, 3, 1)


def pulsepol(J: float, ctx: ExecutionContext | None = None, **kw) -> PulseSequence:
    """Riffled R4_3^1 shifted by -45 degrees: two PulsePol blocks per symmetry cycle."""
    sym = PULSEPOL_SYMMETRY
    a = basic_element_A(sym, J, ctx, **kw)
    b = basic_element_B(sym, J, ctx, **kw)
    return phase_shift(build_riffled(sym, a, b), -45.0).relabel("PulsePol")


# -- M2S / S2M / SOD -----------------------------------------------------------

MLEV4 = (0.0, 0.0, 180.0, 180.0)


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def m2s_counts(theta_ST: float) -> tuple[int, int]:
    """Echo counts ``(n1, n2)``: ``n1 = round(pi / (2 theta_ST))``, ``n2 = floor(n1 / 2)``."""
    if not 0 < theta_ST < math.pi / 4:
        raise SequenceError(f"theta_ST must lie in (0, pi/4), got {theta_ST}")
    n1 = round_half_away(math.pi / (2 * theta_ST))
    return n1, n1 // 2


def sod_m1(theta_ST: float) -> int:
    """Echo count per SOD block, ``round(pi / (3 theta_ST))``."""
    if not 0 < theta_ST < math.pi / 4:
        raise SequenceError(f"theta_ST must lie in (0, pi/4), got {theta_ST}")
    return round_half_away(math.pi / (3 * theta_ST))


def _echo(tau1: Fraction, ctx: ExecutionContext, shift: float) -> tuple:
    d = DelayEvent(tau1)
    return (d, pulse(90.0, 90.0 + shift, ctx), pulse(180.0, shift, ctx), pulse(90.0, 90.0 + shift, ctx), d)


def _echo_train(count: int, tau_e: Fraction, ctx: ExecutionContext) -> list:
    comp = 2 * pulse(90.0, 0.0, ctx).duration + pulse(180.0, 0.0, ctx).duration
    tau1 = (tau_e - comp) / 2
    if tau1 < 0:
        raise SequenceError("echo composite pulse longer than the echo duration")
    if ctx.finite:
        tau1 = _floor_to_grid(tau1, ctx)
    events: list = []
    for k in range(count):
        events.extend(_echo(tau1, ctx, MLEV4[k % 4]))
    return events


def build_m2s(J: float, theta_ST: float, ctx: ExecutionContext | None = None, *,
              tau_e: float | None = None, n1: int | None = None, n2: int | None = None) -> PulseSequence:
    """``90_0 - [echo]^{n1} - 90_90 - tau2 - [echo]^{n2}``.

    Each J-synchronized echo is ``tau1 - 90_90 180_0 90_90 - tau1`` of total
    duration ``tau_e`` (nominal ``1 / 2J``) with an MLEV-4 phase cycle.
    ``tau2 = tau_e / 2`` less one 90 degree pulse duration.
    """
    ctx = ctx or DELTA
    if J <= 0:
        raise SequenceError(f"J must be positive, got {J}")
    c1, c2 = m2s_counts(theta_ST)
    n1 = c1 if n1 is None else n1
    n2 = c2 if n2 is None else n2
    t_e = 1 / (2 * exact(J)) if tau_e is None else exact(tau_e)
    p90 = pulse(90.0, 0.0, ctx)
    tau2 = t_e / 2 - p90.duration
    if ctx.finite:
        tau2 = _floor_to_grid(tau2, ctx)
    events = [p90, *_echo_train(n1, t_e, ctx), pulse(90.0, 90.0, ctx), DelayEvent(tau2),
              *_echo_train(n2, t_e, ctx)]
    return PulseSequence(tuple(events), f"M2S(n1={n1},n2={n2})")


def build_s2m(J: float, theta_ST: float, ctx: ExecutionContext | None = None, **kw) -> PulseSequence:
    m2s = build_m2s(J, theta_ST, ctx, **kw)
    return time_reverse(m2s).relabel(m2s.label.replace("M2S", "S2M"))


def build_sod(J: float, theta_ST: float, m2: int = 7, ctx: ExecutionContext | None = None, *,
              m1: int | None = None, tau_e: float | None = None) -> PulseSequence:
    """``[T00 filter - echo^{m1}]^{m2}`` singlet-order destruction block."""
    ctx = ctx or DELTA
    m1 = sod_m1(theta_ST) if m1 is None else m1
    t_e = 1 / (2 * exact(J)) if tau_e is None else exact(tau_e)
    marker = FilterMarker("SOD", (("m1", m1), ("m2", m2), ("tau_e_ns", _ns(t_e))))
    block = [marker, *_echo_train(m1, t_e, ctx)]
    return PulseSequence(tuple(block) * m2, f"SOD(m1={m1},m2={m2})")


def t00_marker() -> FilterMarker:
    return FilterMarker("T00")


# -- recipes -------------------------------------------------------------------

CONSTRUCTIONS = ("standard", "riffled", "pulsepol", "m2s")


@dataclass(frozen=True)
class SequenceRecipe:
    """Everything needed to compile an excitation or reconversion sequence.

    ``build(n)`` returns the first ``n`` R-elements; for M2S it ignores
    ``n`` and ``reconversion(n)`` returns the S2M time reverse.
    """

    sym: SymmetryNumbers = PULSEPOL_SYMMETRY
    construction: str = "riffled"
    composite: str = "plain"
    J: float = 54.39
    theta_ST: float | None = None
    shift_deg: float = 0.0
    tau_r: float | None = None
    timing: str = "sum"
    m2s_tau_e: float | None = None
    m2s_counts: tuple | None = None
    delay_scale: float = 1.0

    def __post_init__(self):
        if self.construction not in CONSTRUCTIONS:
            raise SequenceError(f"construction must be one of {CONSTRUCTIONS}, got {self.construction!r}")
        if self.composite not in COMPOSITES:
            raise SequenceError(f"composite must be one of {COMPOSITES}, got {self.composite!r}")

    def elements(self, ctx: ExecutionContext | None = None) -> tuple[PulseSequence, PulseSequence]:
        kw = dict(composite=self.composite, tau_r=self.tau_r, timing=self.timing)
        sym = PULSEPOL_SYMMETRY if self.construction == "pulsepol" else self.sym
        a = basic_element_A(sym, self.J, ctx, **kw)
        if self.construction == "standard":
            return a, a
        return a, basic_element_B(sym, self.J, ctx, **kw)

    def _m2s_kwargs(self) -> dict:
        kw: dict = {"tau_e": self.m2s_tau_e}
        if self.m2s_counts is not None:
            kw["n1"], kw["n2"] = self.m2s_counts
        return kw

    def _theta(self) -> float:
        if self.theta_ST is None:
            raise SequenceError("M2S needs theta_ST")
        return self.theta_ST

    def build(self, n_elements: int, ctx: ExecutionContext | None = None) -> PulseSequence:
        if self.construction == "m2s":
            seq = build_m2s(self.J, self._theta(), ctx, **self._m2s_kwargs()) if n_elements else PulseSequence()
        else:
            sym = PULSEPOL_SYMMETRY if self.construction == "pulsepol" else self.sym
            a, b = self.elements(ctx)
            seq = build_elements(sym, a, b, n_elements)
            shift = self.shift_deg - (45.0 if self.construction == "pulsepol" else 0.0)
            if shift:
                seq = phase_shift(seq, shift)
        if self.delay_scale != 1.0:
            seq = scale_delays(seq, self.delay_scale)
        return seq

    def reconversion(self, n_elements: int, ctx: ExecutionContext | None = None) -> PulseSequence:
        if self.construction == "m2s":
            if not n_elements:
                return PulseSequence()
            seq = build_s2m(self.J, self._theta(), ctx, **self._m2s_kwargs())
            return scale_delays(seq, self.delay_scale) if self.delay_scale != 1.0 else seq
        return self.build(n_elements, ctx)

    def cycle(self, ctx: ExecutionContext | None = None) -> PulseSequence:
        """One complete symmetry cycle (N elements)."""
        sym = PULSEPOL_SYMMETRY if self.construction == "pulsepol" else self.sym
        return self.build(sym.N, ctx)

    def describe(self) -> str:
        if self.construction == "m2s":
            return "M2S/S2M"
        extra = "" if self.composite == "plain" else f"+{self.composite}"
        return f"{self.sym} {self.construction}{extra}"
