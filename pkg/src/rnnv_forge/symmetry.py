"""Selection rules, rf Euler-angle trajectories and scaling factors.

The rf propagator of a pulse sequence is a total-spin rotation, so it is
tracked as a 2x2 SU(2) matrix and factorized as ``R_z(alpha) R_y(beta)
R_z(gamma)``. The first-order average Hamiltonian of an RNnν sequence keeps
only the terms ``{1, m, 1, mu}`` with ``m n - mu nu = (N/2) Z``, ``Z`` odd,
each scaled by ``kappa = exp(-i mu pi nu / N) K``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import simpson

from . import spinops as so
from .params import DELTA, ExecutionContext, SpinSystem, exact
from .sequence import DelayEvent, FilterMarker, PulseEvent, PulseSequence, SequenceError, SymmetryNumbers

# Simpson samples per finite pulse (odd, so the rule is exact for cubics).
PULSE_SAMPLES = 1001


@dataclass(frozen=True)
class TermQuantumNumbers:
    """Term ``{ell, m, lambda, mu}`` of the chemical-shift Hamiltonian."""

    m: int
    mu: int
    ell: int = 1
    lam: int = 1

    def __post_init__(self):
        if self.ell != 1 or self.lam != 1:
            raise ValueError("only ell = lambda = 1 terms occur for a J-coupled pair")
        if abs(self.m) > self.ell or abs(self.mu) > self.lam:
            raise ValueError(f"need |m| <= ell and |mu| <= lambda, got m={self.m}, mu={self.mu}")

    def __str__(self) -> str:
        return f"{{{self.ell},{self.m:+d},{self.lam},{self.mu:+d}}}"


ALL_TERMS = tuple(TermQuantumNumbers(m, mu) for m in (-1, 0, 1) for mu in (-1, 0, 1))


def spin_operator(term: TermQuantumNumbers) -> np.ndarray:
    """``Q_{1 m 1 mu}``: ungerade tensor for ``m = +1``, gerade for ``m = 0``,
    ``(-1)^mu`` times the adjoint of the ungerade ``-mu`` component for ``m = -1``."""
    if term.m == 1:
        return so.tensor_ungerade(term.mu)
    if term.m == 0:
        return so.tensor_gerade(term.mu)
    return (-1) ** term.mu * so.tensor_ungerade(-term.mu).conj().T


def amplitude(term: TermQuantumNumbers, system: SpinSystem, ctx: ExecutionContext = DELTA) -> float:
    """``omega_{1 m 1 0}``: ``omega_diff / 2`` for ``m = +-1``, ``omega_sum / 2`` (plus offset) for ``m = 0``."""
    if term.m == 0:
        return system.delta_omega_sum / 2 + ctx.offset
    return system.delta_omega_diff / 2


# -- selection rules -----------------------------------------------------------


def is_allowed(sym: SymmetryNumbers, term: TermQuantumNumbers) -> bool:
    """``m n - mu nu`` must be ``N/2`` times an integer of the parity of lambda."""
    value = term.m * sym.n - term.mu * sym.nu
    half = sym.N // 2
    if value % half:
        return False
    return (value // half - term.lam) % 2 == 0


def allowed_terms(sym: SymmetryNumbers) -> list[TermQuantumNumbers]:
    return [t for t in ALL_TERMS if is_allowed(sym, t)]


def st_class(sym: SymmetryNumbers) -> int:
    """``+1`` if ``{+-1, +-1}`` terms are selected, ``-1`` for ``{+-1, -+1}``.

    Raises if the symmetry does not select exactly one singlet-triplet pair.
    """
    pairs = {(t.m, t.mu) for t in allowed_terms(sym)}
    if pairs == {(1, 1), (-1, -1)}:
        return 1
    if pairs == {(1, -1), (-1, 1)}:
        return -1
    raise SequenceError(f"{sym} is not a transition-selective singlet-triplet symmetry (allows {sorted(pairs)})")


# -- rf propagator and Euler angles ---------------------------------------------


def _pulse_su2(p: PulseEvent, ctx: ExecutionContext, fraction: float = 1.0) -> np.ndarray:
    return so.su2_pulse(p.flip * ctx.amplitude_scale * fraction, p.phase)


def _check_no_markers(seq: PulseSequence) -> None:
    for i, e in enumerate(seq.events):
        if isinstance(e, FilterMarker):
            raise SequenceError(f"event {i} is a {e.kind} filter marker; rf trajectories need plain pulses and delays")


def rf_propagator(seq: PulseSequence, ctx: ExecutionContext = DELTA) -> np.ndarray:
    """SU(2) rf propagator at the end of ``seq``."""
    _check_no_markers(seq)
    u = np.eye(2, dtype=complex)
    for e in seq.events:
        if isinstance(e, PulseEvent):
            u = _pulse_su2(e, ctx) @ u
    return u


def rf_propagators_at(seq: PulseSequence, times, ctx: ExecutionContext = DELTA) -> np.ndarray:
    """SU(2) rf propagators at the given times (s).

    A delta pulse at time ``t`` counts as applied at ``t`` (right-continuous),
    except at ``t = 0`` where the identity is returned only if ``seq`` starts
    with a delay.
    """
    _check_no_markers(seq)
    times = np.asarray(times, dtype=float)
    order = np.argsort(times, kind="stable")
    out = np.empty((len(times), 2, 2), dtype=complex)
    u = np.eye(2, dtype=complex)
    t0 = 0.0
    k = 0
    events = list(seq.events)
    i = 0
    while k < len(order):
        t = times[order[k]]
        # Apply every event that ends at or before t.
        while i < len(events) and t0 + float(events[i].duration) <= t + 1e-15:
            e = events[i]
            if isinstance(e, PulseEvent):
                u = _pulse_su2(e, ctx) @ u
            t0 += float(e.duration)
            i += 1
        cur = u
        if i < len(events) and isinstance(events[i], PulseEvent) and events[i].mode == "finite" and t > t0:
            frac = (t - t0) / float(events[i].duration)
            cur = _pulse_su2(events[i], ctx, frac) @ u
        out[order[k]] = cur
        k += 1
    return out


@dataclass(frozen=True)
class EulerTrajectory:
    times: np.ndarray
    angles: tuple
    propagators: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return np.array([a.alpha for a in self.angles])

    @property
    def beta(self) -> np.ndarray:
        return np.array([a.beta for a in self.angles])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([a.gamma for a in self.angles])


def euler_trajectory(element: PulseSequence, ctx: ExecutionContext = DELTA,
                     grid_step: float | None = None) -> EulerTrajectory:
    """Sampled, unwrapped Euler angles of the rf propagator.

    Every event boundary is a sample; a delta pulse contributes a second
    sample at the same time holding the post-pulse value. Delays are
    subdivided at ``grid_step`` (default: only their end points in delta
    mode, 1 us in finite mode); finite pulses get ``PULSE_SAMPLES`` points.
    """
    _check_no_markers(element)
    if grid_step is None:
        grid_step = 1e-6 if ctx.finite else math.inf
    times = [0.0]
    props = [np.eye(2, dtype=complex)]
    u = props[0]
    t = 0.0
    for e in element.events:
        d = float(e.duration)
        if isinstance(e, PulseEvent) and e.mode == "delta":
            u = _pulse_su2(e, ctx) @ u
            times.append(t)
            props.append(u)
        elif isinstance(e, PulseEvent):
            for s in np.linspace(0, 1, PULSE_SAMPLES)[1:]:
                times.append(t + s * d)
                props.append(_pulse_su2(e, ctx, s) @ u)
            u = props[-1]
            t += d
        else:
            steps = max(1, math.ceil(d / grid_step)) if d > 0 else 1
            for s in np.linspace(0, d, steps + 1)[1:]:
                times.append(t + s)
                props.append(u)
            t += d
    angles = []
    prev = None
    for p in props:
        prev = so.euler_angles(p, prev)
        angles.append(prev)
    return EulerTrajectory(np.array(times), tuple(angles), np.array(props))


def euler_symmetry_deviation(seq: PulseSequence, sym: SymmetryNumbers, ctx: ExecutionContext = DELTA,
                             samples_per_element: int = 7) -> float:
    """Largest violation of the RNnν rf time symmetry over one compiled cycle.

    For ``t`` in each element but the last, ``U(t + tau_R)`` must equal
    ``R_z(a) R_y(beta(t) + pi) R_z(gamma(t) - 2 pi nu / N)`` for some ``a``.
    Returns the largest modulus of the off-diagonal element of
    ``U(t + tau_R) R_z(-(gamma - 2 pi nu/N)) R_y(-(beta + pi))``, which
    vanishes exactly when the product is a z rotation. Samples are taken
    strictly inside elements so delta pulses at boundaries are unambiguous.
    """
    n_el = sym.N
    tau_r = float(seq.total_duration) / n_el
    fr = (np.arange(samples_per_element) + 0.5) / samples_per_element
    worst = 0.0
    for k in range(n_el - 1):
        ts = (k + fr) * tau_r
        u_now = rf_propagators_at(seq, ts, ctx)
        u_next = rf_propagators_at(seq, ts + tau_r, ctx)
        for a, b in zip(u_now, u_next):
            e = so.euler_angles(a)
            target = so.su2_rotation_axis(-(e.gamma - 2 * math.pi * sym.nu / sym.N), "z") @ \
                so.su2_rotation_axis(-(e.beta + math.pi), "y")
            worst = max(worst, abs((b @ target)[0, 1]))
    return worst


# -- scaling factors ------------------------------------------------------------


def _integrand(u2: np.ndarray, term: TermQuantumNumbers) -> complex:
    e = so.euler_angles(u2)
    return so.wigner_d1(term.mu, 0, -e.beta) * cmath.exp(1j * term.mu * e.gamma)


def _phase_integral(w: float, t0: float, t1: float) -> complex:
    if w == 0:
        return t1 - t0
    return (cmath.exp(1j * w * t1) - cmath.exp(1j * w * t0)) / (1j * w)


def element_integral(element: PulseSequence, term: TermQuantumNumbers, J: float,
                     ctx: ExecutionContext = DELTA) -> complex:
    """Unnormalized ``int_0^T d_{mu 0}(-beta) exp(i(mu gamma + m omega_J t)) dt``.

    Analytic over delays (constant Euler angles); Simpson over finite pulses.
    """
    _check_no_markers(element)
    w = term.m * 2 * math.pi * J
    total = 0j
    u = np.eye(2, dtype=complex)
    t = 0.0
    for e in element.events:
        d = float(e.duration)
        if isinstance(e, DelayEvent):
            if d > 0:
                total += _integrand(u, term) * _phase_integral(w, t, t + d)
        elif e.mode == "delta":
            u = _pulse_su2(e, ctx) @ u
        else:
            s = np.linspace(0.0, 1.0, PULSE_SAMPLES)
            vals = np.array([_integrand(_pulse_su2(e, ctx, x) @ u, term) * cmath.exp(1j * w * (t + x * d)) for x in s])
            total += simpson(vals, x=t + s * d)
            u = _pulse_su2(e, ctx) @ u
        t += d
    return total


@dataclass(frozen=True)
class ScalingFactor:
    kappa: complex
    K: complex
    symmetry: SymmetryNumbers
    term: TermQuantumNumbers


def scaling_factor_numeric(sym: SymmetryNumbers, element: PulseSequence, term: TermQuantumNumbers,
                           J: float, ctx: ExecutionContext = DELTA,
                           duration_tol: float = 1e-6) -> ScalingFactor:
    """``kappa = exp(-i mu pi nu / N) K`` with ``K`` the element average.

    ``element`` must last ``tau_R = (n/N)/J`` to within ``duration_tol``
    seconds (finite-mode delays are rounded to the timing grid).
    """
    tau_r = float(sym.tau_r(J))
    dur = float(element.total_duration)
    if abs(dur - tau_r) > duration_tol:
        raise SequenceError(f"element lasts {dur * 1e6:.3f} us but {sym} needs tau_R = {tau_r * 1e6:.3f} us")
    K = element_integral(element, term, J, ctx) / dur
    if not cmath.isfinite(K):
        raise FloatingPointError(f"non-finite element integral for {sym}, term {term}")
    kappa = cmath.exp(-1j * term.mu * math.pi * sym.nu / sym.N) * K
    return ScalingFactor(kappa, K, sym, term)


def scaling_factor_delta(sym: SymmetryNumbers, term_sign: str = "plus") -> complex:
    """Closed form for ``kappa_{1 +-1 1 +-1}`` of the delta-pulse ``90_90 180_0 90_90`` element.

    ``(-1)^x`` is evaluated as ``exp(i pi x)`` (principal branch).
    """
    if term_sign not in ("plus", "minus"):
        raise ValueError(f"term_sign must be 'plus' or 'minus', got {term_sign!r}")
    s = 1 if term_sign == "plus" else -1
    term = TermQuantumNumbers(s, s)
    if not is_allowed(sym, term):
        raise SequenceError(f"term {term} is not symmetry-allowed for {sym}")
    N, n, nu = sym.N, sym.n, sym.nu
    mag = math.sqrt(2) * N / (n * math.pi) * math.sin(n * math.pi / (2 * N)) ** 2
    return mag * cmath.exp(1j * math.pi * (N + s * (n - nu)) / (2 * N))


def st_terms(sym: SymmetryNumbers) -> tuple[TermQuantumNumbers, TermQuantumNumbers]:
    """The allowed ``(m=+1, mu)`` and ``(m=-1, -mu)`` singlet-triplet terms."""
    c = st_class(sym)
    return TermQuantumNumbers(1, c), TermQuantumNumbers(-1, -c)


@dataclass(frozen=True)
class STEffective:
    omega_ST: float
    phi_ST: float
    kappa_plus: complex
    kappa_minus: complex


def st_effective(sym: SymmetryNumbers, element: PulseSequence, system: SpinSystem,
                 ctx: ExecutionContext = DELTA) -> STEffective:
    """Effective singlet-triplet nutation rate ``omega_diff |kappa|`` and phase ``arg kappa_{1,-1,1,-mu}``."""
    plus, minus = st_terms(sym)
    kp = scaling_factor_numeric(sym, element, plus, system.J, ctx).kappa
    km = scaling_factor_numeric(sym, element, minus, system.J, ctx).kappa
    return STEffective(abs(system.delta_omega_diff) * abs(kp), cmath.phase(km), kp, km)


# Published kappa_{1111} for the delta-pulse 90_90 180_0 90_90 element.
REFERENCE_KAPPA = {
    (4, 1, -1): -0.264, (4, 3, 1): -0.512, (4, 5, -1): 0.307, (4, 7, 1): 0.038, (4, 9, -1): -0.029,
    (6, 1, -2): -0.104, (6, 5, 2): -0.291, (6, 7, -2): 0.360, (6, 8, -1): 0.253, (6, 10, 1): 0.068,
    (8, 1, -3): -0.137, (8, 3, -1): -0.371, (8, 5, 1): -0.498, (8, 7, 3): -0.495, (8, 9, -3): 0.385,
    (10, 1, -4): -0.110, (10, 2, -3): -0.215, (10, 3, -2): -0.309, (10, 4, -1): -0.389,
    (10, 6, 1): -0.491, (10, 7, 2): -0.511,
}


def table_symmetries() -> list[SymmetryNumbers]:
    return [SymmetryNumbers(*k) for k in REFERENCE_KAPPA]


def kappa_row(sym: SymmetryNumbers, J: float = 54.39) -> dict:
    """Numeric and closed-form ``kappa`` for the allowed ``m = +1`` term of ``sym``.

    The allowed ``mu`` is ``+1`` for ``{+-1, +-1}`` symmetries and ``-1``
    otherwise; the closed form applies to ``mu = +1`` only and is ``None``
    when that term is forbidden.
    """
    from .sequence import basic_element_A

    plus, _ = st_terms(sym)
    elem = basic_element_A(sym, J)
    sf = scaling_factor_numeric(sym, elem, plus, J)
    closed = scaling_factor_delta(sym, "plus") if plus.mu == 1 else None
    return {
        "N": sym.N, "n": sym.n, "nu": sym.nu, "term": str(plus),
        "kappa": sf.kappa, "K": sf.K, "closed": closed,
    }
