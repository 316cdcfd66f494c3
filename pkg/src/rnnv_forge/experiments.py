"""End-to-end protocols: singlet-triplet excitation, filtered singlet-order
conversion, optimal element counts and parameter sweeps.

Density matrices use the high-temperature deviation convention
``rho = 1/4 + eps F_z`` with ``eps = 1``; detected signals are divided by
the ideal single-90-degree reference so that the thermal state reads 1.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import spinops as so
from .engine import chemical_shift_hamiltonian, evolve, j_hamiltonian
from .params import DAND, DELTA, ExecutionContext, SpinSystem
from .sequence import (FilterMarker, PulseSequence, SequenceRecipe, SymmetryNumbers, composite_bb1,
                       pulse)
from .symmetry import st_class, st_effective

ST_LABELS = ("S0", "Tp1", "T0", "Tm1")
MAX_EFFICIENCY = 2.0 / 3.0
# Tr(F_- rho) after an ideal 90_0 pulse on the thermal state.
_REFERENCE = 2j


def thermal_state(eps: float = 1.0) -> np.ndarray:
    return np.eye(4, dtype=complex) / 4 + eps * so.total("z")


def populations(rho: np.ndarray) -> dict[str, float]:
    st = so.singlet_triplet_states()
    return {k: float(np.real(st[k].conj() @ rho @ st[k])) for k in ST_LABELS}


def singlet_order(rho: np.ndarray) -> float:
    """Singlet population minus the mean triplet population."""
    p = populations(rho)
    return p["S0"] - (p["Tp1"] + p["T0"] + p["Tm1"]) / 3


def singlet_order_operator() -> np.ndarray:
    """``|S0><S0| - (1/3) sum_m |T_m><T_m|``; ``singlet_order(rho) = Tr(rho Q)``."""
    q = so.ket_bra("S0", "S0")
    for t in ("Tp1", "T0", "Tm1"):
        q = q - so.ket_bra(t, t) / 3
    return q


def t00_filter(rho: np.ndarray) -> np.ndarray:
    """Ideal singlet filter: keep the identity and singlet-order components only."""
    q = singlet_order_operator()
    # Tr(Q Q) = 1 + 3 / 9 = 4 / 3
    return np.trace(rho) / 4 * np.eye(4, dtype=complex) + singlet_order(rho) / (4 / 3) * q


def sod_filter(rho: np.ndarray) -> np.ndarray:
    """The filter stage of a singlet-order destruction block (same projection as ``t00_filter``)."""
    return t00_filter(rho)


def apply_sequence(rho: np.ndarray, seq: PulseSequence, system: SpinSystem,
                   ctx: ExecutionContext = DELTA) -> np.ndarray:
    """Evolve ``rho`` through ``seq``, realizing filter markers as projections."""
    chunk: list = []
    for e in seq.events:
        if isinstance(e, FilterMarker):
            if chunk:
                rho = evolve(rho, PulseSequence(tuple(chunk)), system, ctx)
                chunk = []
            rho = t00_filter(rho) if e.kind == "T00" else sod_filter(rho)
        else:
            chunk.append(e)
    if chunk:
        rho = evolve(rho, PulseSequence(tuple(chunk)), system, ctx)
    return rho


def readout_sequence(ctx: ExecutionContext = DELTA) -> PulseSequence:
    """BB1(90) with finite pulses, a plain 90_0 with delta pulses."""
    if ctx.finite:
        return composite_bb1(math.pi / 2, ctx)
    return PulseSequence((pulse(90.0, 0.0, ctx),), "90")


def readout_90(rho: np.ndarray, system: SpinSystem = DAND, ctx: ExecutionContext = DELTA,
               readout: PulseSequence | None = None) -> complex:
    """Detected transverse signal after a 90 degree readout, normalized and phase corrected."""
    seq = readout_sequence(ctx) if readout is None else readout
    rho = evolve(rho, seq, system, ctx)
    return complex(np.trace(rho @ so.total("minus")) / _REFERENCE)


# -- protocols ---------------------------------------------------------------------


@dataclass(frozen=True)
class ABQuartetLine:
    label: str
    frequency: float
    amplitude: complex


def _eigenbasis(system: SpinSystem, ctx: ExecutionContext):
    h = chemical_shift_hamiltonian(system, ctx) + j_hamiltonian(system)
    w, v = np.linalg.eigh(h)
    st = so.st_basis()
    overlap = np.abs(st.conj().T @ v) ** 2  # rows: ST labels, cols: eigenvectors
    labels = [None] * 4
    for col in np.argsort(-overlap.max(axis=0)):
        row = int(np.argmax(np.where([lab in labels for lab in ST_LABELS], -1, overlap[:, col])))
        labels[col] = ST_LABELS[row]
    return w, v, labels


# (upper, lower) in magnetic quantum number
QUARTET = (("Tp1", "S0"), ("Tp1", "T0"), ("T0", "Tm1"), ("S0", "Tm1"))


def quartet_lines(rho: np.ndarray, system: SpinSystem, ctx: ExecutionContext = DELTA) -> list[ABQuartetLine]:
    """The four single-quantum lines detected with ``F_-``, in the eigenbasis of ``H_CS + H_J``.

    Each line is ``rho_ab <b|F_-|a>`` at transition frequency ``E_a - E_b``
    (rad/s). Amplitudes share the normalization of ``readout_90``.
    """
    w, v, labels = _eigenbasis(system, ctx)
    rho_e = v.conj().T @ rho @ v
    fm = v.conj().T @ so.total("minus") @ v
    idx = {lab: i for i, lab in enumerate(labels)}
    lines = []
    for upper, lower in QUARTET:
        a, b = idx[upper], idx[lower]
        lines.append(ABQuartetLine(f"{upper}-{lower}", float(w[a] - w[b]),
                                   complex(rho_e[a, b] * fm[b, a] / _REFERENCE)))
    return lines


def st_excitation_protocol(recipe: SequenceRecipe, n_elements: int, system: SpinSystem = DAND,
                           ctx: ExecutionContext = DELTA) -> list[ABQuartetLine]:
    """Thermal state, ``n_elements`` R-elements, then the AB-quartet line list."""
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    rho = apply_sequence(thermal_state(), recipe.build(n_elements, ctx), system, ctx)
    return quartet_lines(rho, system, ctx)


def single_pulse_lines(system: SpinSystem = DAND, ctx: ExecutionContext = DELTA) -> list[ABQuartetLine]:
    """Reference spectrum: thermal state followed by a single 90_0 pulse."""
    rho = evolve(thermal_state(), PulseSequence((pulse(90.0, 0.0, ctx),)), system, ctx)
    return quartet_lines(rho, system, ctx)


def singlet_filter_protocol(exc: SequenceRecipe, rec: SequenceRecipe | None, n_exc: int, n_rec: int,
                            system: SpinSystem = DAND, ctx: ExecutionContext = DELTA,
                            readout: PulseSequence | None = None) -> float:
    """Thermal, excitation, T00 filter, reconversion, 90 readout.

    Returns the real part of the phase-corrected signal relative to a single
    90 degree pulse on the thermal state; bounded by 2/3.
    """
    rec = exc if rec is None else rec
    rho = apply_sequence(thermal_state(), exc.build(n_exc, ctx), system, ctx)
    rho = t00_filter(rho)
    rho = apply_sequence(rho, rec.reconversion(n_rec, ctx), system, ctx)
    return readout_90(rho, system, ctx, readout).real


def st_coherence(rho: np.ndarray) -> float:
    """Largest singlet / outer-triplet coherence magnitude."""
    st = so.singlet_triplet_states()
    s = st["S0"]
    return max(abs(s.conj() @ rho @ st[t]) for t in ("Tp1", "Tm1"))


@dataclass(frozen=True)
class OptimalN:
    n: int
    value: float
    values: tuple
    omega_ST: float
    tau_r: float
    closed_forms: dict


def optimal_n(recipe: SequenceRecipe, system: SpinSystem = DAND, ctx: ExecutionContext = DELTA,
              mode: str = "singlet_order", n_max: int = 20, rel_tol: float = 0.01) -> OptimalN:
    """Brute-force best element count in ``1..n_max``.

    ``mode="coherence"`` maximizes the singlet/outer-triplet coherence,
    ``"singlet_order"`` the magnitude of filtered singlet order and
    ``"efficiency"`` the (signed) filtered conversion signal with equal
    excitation and reconversion counts. Later maxima of an oscillating
    objective can match the first one, so the shortest count within
    ``rel_tol`` of the global maximum is returned.

    ``closed_forms`` holds the element counts for an effective
    singlet-triplet rotation by pi/2 and by pi, and the two formulas with
    an extra factor 1/2 (``printed_*``) for comparison.
    """
    if mode not in ("coherence", "singlet_order", "efficiency"):
        raise ValueError(f"unknown mode {mode!r}")
    if recipe.construction == "m2s":
        raise ValueError("optimal_n applies to RNnν sequences, not M2S")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    sym = recipe.sym if recipe.construction != "pulsepol" else SymmetryNumbers(4, 3, 1)
    elem = recipe.elements(DELTA)[0]
    eff = st_effective(sym, elem, system)
    if not eff.omega_ST > 0:
        raise ValueError("omega_ST vanishes; no singlet-triplet conversion")
    tau_r = float(sym.tau_r(system.J))
    values = []
    for n in range(1, n_max + 1):
        if mode == "efficiency":
            values.append(singlet_filter_protocol(recipe, None, n, n, system, ctx))
            continue
        rho = apply_sequence(thermal_state(), recipe.build(n, ctx), system, ctx)
        values.append(st_coherence(rho) if mode == "coherence" else abs(singlet_order(t00_filter(rho))))
    top = max(values)
    best = next(i for i, v in enumerate(values) if v >= top - rel_tol * abs(top))
    x = eff.omega_ST * tau_r
    closed = {
        "rotation_pi_over_2": math.pi / (2 * x),
        "rotation_pi": math.pi / x,
        "printed_coherence": math.pi / (4 * x),
        "printed_singlet_order": math.pi / (2 * x),
    }
    return OptimalN(best + 1, values[best], tuple(values), eff.omega_ST, tau_r, closed)


# -- sweeps --------------------------------------------------------------------------

AXES = ("n_elements", "amplitude_scale", "offset", "delay_mismatch")


@dataclass(frozen=True)
class Protocol:
    """A filtered conversion experiment, or an excitation experiment when ``kind="excitation"``.

    ``n_rec`` defaults to ``n_exc``; ``rec`` defaults to ``exc``.
    """

    exc: SequenceRecipe
    n_exc: int
    system: SpinSystem = DAND
    ctx: ExecutionContext = DELTA
    rec: SequenceRecipe | None = None
    n_rec: int | None = None
    kind: str = "filter"

    def __post_init__(self):
        if self.kind not in ("filter", "excitation"):
            raise ValueError(f"kind must be 'filter' or 'excitation', got {self.kind!r}")

    def at(self, axis: str, value) -> "Protocol":
        if axis == "n_elements":
            n = int(value)
            return replace(self, n_exc=n, n_rec=None if self.n_rec is None else n)
        if axis == "amplitude_scale":
            return replace(self, ctx=self.ctx.with_(amplitude_scale=float(value)))
        if axis == "offset":
            return replace(self, ctx=self.ctx.with_(offset=float(value)))
        if axis == "delay_mismatch":
            f = 1.0 + float(value)
            rec = None if self.rec is None else replace(self.rec, delay_scale=f)
            return replace(self, exc=replace(self.exc, delay_scale=f), rec=rec)
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")

    def run(self) -> float:
        if self.kind == "excitation":
            lines = st_excitation_protocol(self.exc, self.n_exc, self.system, self.ctx)
            return max(abs(l.amplitude) for l in lines if "S0" in l.label)
        n_rec = self.n_exc if self.n_rec is None else self.n_rec
        return singlet_filter_protocol(self.exc, self.rec, self.n_exc, n_rec, self.system, self.ctx)

    def snapshot(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _run_point(args):
    protocol, axis, value = args
    try:
        return protocol.at(axis, value).run(), None
    except Exception as exc:  # recorded per point; the sweep continues
        return math.nan, f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class SweepResult:
    axis_name: str
    axis_values: tuple
    observable: tuple
    errors: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.axis_values) == len(self.observable) == len(self.errors):
            raise ValueError("sweep result columns differ in length")

    @property
    def config_hash(self) -> str:
        return config_hash(self.metadata)

    @property
    def failed(self) -> int:
        return sum(e is not None for e in self.errors)

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(header + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis_name, "observable", "error"])
        for x, y, e in zip(self.axis_values, self.observable, self.errors):
            w.writerow([repr(float(x)), repr(float(y)), e or ""])
        return buf.getvalue()

    def to_json(self) -> str:
        data = {
            "axis_name": self.axis_name,
            "axis_values": [float(x) for x in self.axis_values],
            "observable": [None if math.isnan(y) else float(y) for y in self.observable],
            "errors": list(self.errors),
            "metadata": self.metadata,
            "config_hash": self.config_hash,
        }
        return json.dumps(data, indent=2, sort_keys=True)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sweep(axis: str, values, protocol: Protocol, jobs: int = 1) -> SweepResult:
    """Run ``protocol`` at every axis value; output order follows ``sorted(values)``."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    values = sorted(values)
    if not values:
        raise ValueError("sweep range is empty")
    tasks = [(protocol, axis, v) for v in values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    obs, errs = zip(*results)
    meta = {"axis": axis, "values": [float(v) for v in values], "protocol": protocol.snapshot()}
    return SweepResult(axis, tuple(values), tuple(obs), tuple(errs), meta)


def plateau_halfwidth(values, obs, fraction: float = 0.8) -> float:
    """Half the width of the region around the extremum where ``obs`` keeps ``fraction`` of it.

    The curve is first multiplied by the sign of its largest-magnitude
    point, so inverted signals are handled. Crossings are linearly
    interpolated; a plateau reaching the end of the range is cut off there.
    """
    x = np.asarray(values, dtype=float)
    y = np.asarray(obs, dtype=float)
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("values and obs must be non-empty and of equal length")
    order = np.argsort(x)
    x, y = x[order], y[order]
    k = int(np.nanargmax(np.abs(y)))
    y = np.nan_to_num(y * np.sign(y[k]), nan=-np.inf)
    level = fraction * y[k]

    def edge(step):
        i = k
        while 0 <= i + step < len(x) and y[i + step] >= level:
            i += step
        j = i + step
        if not 0 <= j < len(x):
            return x[i]
        return x[i] + (x[j] - x[i]) * (y[i] - level) / (y[i] - y[j])

    return float((edge(1) - edge(-1)) / 2)


def fit_frequency(n_values, obs, tau_r: float, harmonics: int = 1) -> float:
    """Fundamental angular frequency (rad/s) of a periodic fit to ``obs`` sampled at ``n * tau_r``.

    Least squares over ``a + sum_k (b_k cos(k w t) + c_k sin(k w t))``,
    ``k = 1..harmonics``, with ``w`` refined by bounded scalar minimization
    after a coarse grid search. Filtered conversion signals go as
    ``sin^4(w t / 2)`` and need ``harmonics=2``.
    """
    from scipy.optimize import minimize_scalar

    t = np.asarray(n_values, dtype=float) * tau_r
    y = np.asarray(obs, dtype=float)

    def resid(w):
        cols = [np.ones_like(t)]
        for k in range(1, harmonics + 1):
            cols += [np.cos(k * w * t), np.sin(k * w * t)]
        a = np.column_stack(cols)
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return float(np.sum((a @ coef - y) ** 2))

    w_max = math.pi / (harmonics * tau_r)
    grid = np.linspace(w_max / 400, w_max, 800)
    w0 = grid[int(np.argmin([resid(w) for w in grid]))]
    step = grid[1] - grid[0]
    res = minimize_scalar(resid, bounds=(w0 - step, w0 + step), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)
