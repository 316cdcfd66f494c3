"""Exact unitary propagation and first-order average Hamiltonians.

Every event has a constant Hamiltonian, so a sequence propagator is an
ordered product of 4x4 matrix exponentials, each computed exactly from an
eigendecomposition. Delta pulses are instantaneous total-spin rotations;
finite pulses evolve under the full Hamiltonian at
``amplitude_scale * omega_nut_nominal`` for their nominal duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import spinops as so
from .params import DAND, DELTA, FINITE, ExecutionContext, SpinSystem  # noqa: F401  (re-exported)
from .sequence import DelayEvent, FilterMarker, PulseEvent, PulseSequence, SequenceError
from .symmetry import ALL_TERMS, TermQuantumNumbers, amplitude, rf_propagators_at, spin_operator

__all__ = [
    "SpinSystem", "ExecutionContext", "PropagationError", "hamiltonian", "event_propagator",
    "propagate", "evolve", "interaction_frame_term", "interaction_frame_hamiltonian",
    "AverageHamiltonian", "average_hamiltonian_1", "effective_vs_exact_error",
    "phase_aligned_distance",
]


class PropagationError(RuntimeError):
    """Failure while propagating; ``index`` is the offending event position."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"event {index}: {message}")
        self.index = index


def chemical_shift_hamiltonian(system: SpinSystem, ctx: ExecutionContext = DELTA) -> np.ndarray:
    """``H_CS = (omega_sum/2 + offset) F_z + (omega_diff/2)(I_1z - I_2z)``."""
    w_sum = system.delta_omega_sum / 2 + ctx.offset
    return w_sum * so.total("z") + system.delta_omega_diff / 2 * (
        so.angular_momentum(1, "z") - so.angular_momentum(2, "z"))


def j_hamiltonian(system: SpinSystem) -> np.ndarray:
    return system.omega_J * so.scalar_coupling()


def rf_hamiltonian(amplitude_: float, phase: float) -> np.ndarray:
    return amplitude_ * (math.cos(phase) * so.total("x") + math.sin(phase) * so.total("y"))


def hamiltonian(system: SpinSystem, ctx: ExecutionContext = DELTA, rf: dict | tuple | None = None) -> np.ndarray:
    """Total rotating-frame Hamiltonian (rad/s).

    ``rf`` is ``None`` or an ``(amplitude, phase)`` pair / ``{"amplitude", "phase"}``
    mapping in rad/s and rad.
    """
    h = chemical_shift_hamiltonian(system, ctx) + j_hamiltonian(system)
    if rf is not None:
        amp, ph = (rf["amplitude"], rf["phase"]) if isinstance(rf, dict) else rf
        h = h + rf_hamiltonian(amp, ph)
    return h


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def delta_rotation(p: PulseEvent, ctx: ExecutionContext) -> np.ndarray:
    u = so.su2_pulse(p.flip * ctx.amplitude_scale, p.phase)
    return np.kron(u, u)


@lru_cache(maxsize=8192)
def event_propagator(event, system: SpinSystem, ctx: ExecutionContext) -> np.ndarray:
    """Propagator of a single pulse or delay (read-only, cached)."""
    if isinstance(event, DelayEvent):
        u = expm_hermitian(hamiltonian(system, ctx), float(event.duration))
    elif isinstance(event, PulseEvent) and event.mode == "delta":
        u = delta_rotation(event, ctx)
    elif isinstance(event, PulseEvent):
        amp = ctx.amplitude_scale * ctx.omega_nut_nominal
        u = expm_hermitian(hamiltonian(system, ctx, (amp, event.phase)), float(event.duration))
    else:
        raise SequenceError(f"cannot propagate {type(event).__name__}")
    u.setflags(write=False)
    return u


def _checked_events(seq: PulseSequence):
    for i, e in enumerate(seq.events):
        if isinstance(e, FilterMarker):
            raise PropagationError(f"{e.kind} filter marker cannot be propagated unitarily", i)
        yield i, e


def propagate(seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext = DELTA) -> np.ndarray:
    """Full propagator ``U(T)`` of a marker-free sequence."""
    u = np.eye(4, dtype=complex)
    for i, e in _checked_events(seq):
        u = event_propagator(e, system, ctx) @ u
    if not np.all(np.isfinite(u)):
        raise PropagationError("non-finite propagator", len(seq.events) - 1)
    return u


def evolve(rho: np.ndarray, seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext = DELTA,
           record: bool = False):
    """Evolve a density matrix; with ``record`` also return ``(time, rho)`` after each event."""
    rho = np.array(rho, dtype=complex)
    t = 0.0
    history = [(0.0, rho.copy())] if record else None
    for i, e in _checked_events(seq):
        u = event_propagator(e, system, ctx)
        rho = u @ rho @ u.conj().T
        t += float(e.duration)
        if record:
            history.append((t, rho.copy()))
    return (rho, history) if record else rho


# -- interaction frame -----------------------------------------------------------


def j_propagator(system: SpinSystem, t: float) -> np.ndarray:
    return expm_hermitian(j_hamiltonian(system), t)


def frame_propagator(t: float, seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext = DELTA) -> np.ndarray:
    """``U_J(t) U_rf(t)``; both factors commute."""
    u2 = rf_propagators_at(seq, [t], ctx)[0]
    return j_propagator(system, t) @ np.kron(u2, u2)


def interaction_frame_hamiltonian(t: float, seq: PulseSequence, system: SpinSystem,
                                  ctx: ExecutionContext = DELTA) -> np.ndarray:
    """``U_rf^dagger U_J^dagger H_CS U_J U_rf`` at time ``t``."""
    v = frame_propagator(t, seq, system, ctx)
    return v.conj().T @ chemical_shift_hamiltonian(system, ctx) @ v


def interaction_frame_term(t: float, element: PulseSequence, system: SpinSystem, ctx: ExecutionContext,
                           term: TermQuantumNumbers) -> np.ndarray:
    """Single ``{1, m, 1, mu}`` component of the interaction-frame chemical shift."""
    e = so.euler_angles(rf_propagators_at(element, [t], ctx)[0])
    phase = np.exp(1j * (term.m * system.omega_J * t + term.mu * e.gamma))
    return amplitude(term, system, ctx) * so.wigner_d1(term.mu, 0, -e.beta) * phase * spin_operator(term)


# -- first-order average Hamiltonian ----------------------------------------------


def _segment_integral(x: np.ndarray, g: np.ndarray, v0: np.ndarray, d: float) -> np.ndarray:
    """``int_0^d (e^{-iGs} v0)^dagger x (e^{-iGs} v0) ds`` in closed form."""
    w, v = np.linalg.eigh(g)
    y = v.conj().T @ v0
    xe = v.conj().T @ x @ v
    dw = w[:, None] - w[None, :]
    small = np.abs(dw) * d < 1e-12
    safe = np.where(small, 1.0, dw)
    f = np.where(small, d, (np.exp(1j * safe * d) - 1) / (1j * safe))
    return y.conj().T @ (xe * f) @ y


def _frame_segments(seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext):
    """Yield ``(generator, frame_at_start, duration)`` for each timed event."""
    hj = j_hamiltonian(system)
    v = np.eye(4, dtype=complex)
    for i, e in _checked_events(seq):
        d = float(e.duration)
        if isinstance(e, PulseEvent) and e.mode == "delta":
            v = delta_rotation(e, ctx) @ v
            continue
        g = hj if isinstance(e, DelayEvent) else hj + rf_hamiltonian(
            ctx.amplitude_scale * ctx.omega_nut_nominal, e.phase)
        yield g, v, d
        v = expm_hermitian(g, d) @ v
    yield None, v, 0.0


@dataclass(frozen=True)
class AverageHamiltonian:
    """``H_bar^(1)`` with its projections ``c_{m mu}`` onto ``Q_{1 m 1 mu}``."""

    matrix: np.ndarray
    terms: dict
    duration: float
    frame_end: np.ndarray

    def coefficient(self, m: int, mu: int) -> complex:
        return self.terms[(m, mu)]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def project_terms(h: np.ndarray) -> dict:
    out = {}
    for t in ALL_TERMS:
        q = spin_operator(t)
        out[(t.m, t.mu)] = complex(so.hs_inner(q, h) / so.hs_inner(q, q).real)
    return out


def average_hamiltonian_1(seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext = DELTA,
                          expected_duration: float | None = None, tol: float = 1e-6) -> AverageHamiltonian:
    """First-order average of the interaction-frame chemical shift over ``seq``.

    Integrated exactly segment by segment. ``expected_duration`` (s), if
    given, must match the sequence duration within ``tol``.
    """
    total = float(seq.total_duration)
    if total <= 0:
        raise SequenceError("average Hamiltonian needs a sequence of positive duration")
    if expected_duration is not None and abs(total - expected_duration) > tol:
        raise SequenceError(f"sequence lasts {total:.9f} s, expected {expected_duration:.9f} s")
    x = chemical_shift_hamiltonian(system, ctx)
    acc = np.zeros((4, 4), dtype=complex)
    frame_end = None
    for g, v, d in _frame_segments(seq, system, ctx):
        if g is None:
            frame_end = v
            break
        if d > 0:
            acc += _segment_integral(x, g, v, d)
    h = acc / total
    h = (h + h.conj().T) / 2
    return AverageHamiltonian(h, project_terms(h), total, frame_end)


def phase_aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``min_phi ||a - e^{i phi} b||_F``."""
    overlap = np.trace(b.conj().T @ a)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def effective_vs_exact_error(seq: PulseSequence, system: SpinSystem, ctx: ExecutionContext = DELTA) -> float:
    """Distance between the exact propagator and ``U_J U_rf exp(-i H_bar^(1) T)``."""
    ah = average_hamiltonian_1(seq, system, ctx)
    approx = ah.frame_end @ expm_hermitian(ah.matrix, ah.duration)
    return phase_aligned_distance(propagate(seq, system, ctx), approx)
