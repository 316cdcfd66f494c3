"""Run configuration in laboratory units (Hz, degrees, microseconds).

Conversion to rad/s, radians and seconds happens once, in the ``to_*``
methods.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .experiments import config_hash
from .params import ExecutionContext, SpinSystem
from .sequence import CONSTRUCTIONS, COMPOSITES, SequenceRecipe, SymmetryNumbers

SWEEP_AXES = {"n": "n_elements", "amplitude": "amplitude_scale", "offset": "offset", "delay": "delay_mismatch"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    J_hz: float = 54.39
    sum_hz: float = 0.0
    diff_hz: float = 7.50

    def to_system(self) -> SpinSystem:
        if self.J_hz <= 0:
            raise ConfigError(f"J must be positive, got {self.J_hz}")
        return SpinSystem.from_hz(self.J_hz, self.sum_hz, self.diff_hz)


@dataclass(frozen=True)
class ContextConfig:
    nutation_hz: float = 12.5e3
    amplitude_scale: float = 1.0
    offset_hz: float = 0.0
    time_grid_us: float = 0.1
    pulse_mode: str = "delta"

    def to_context(self) -> ExecutionContext:
        try:
            return ExecutionContext(2 * math.pi * self.nutation_hz, self.amplitude_scale,
                                    2 * math.pi * self.offset_hz, self.time_grid_us * 1e-6, self.pulse_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class SequenceConfig:
    sym: str = "4,3,1"
    construction: str = "riffled"
    element: str = "plain"
    shift_deg: float = 0.0
    tau_r_us: float | None = None
    timing: str = "sum"
    tau_e_us: float | None = None
    m2s_counts: tuple | None = None

    def symmetry(self) -> SymmetryNumbers:
        return SymmetryNumbers.parse(self.sym)

    def to_recipe(self, system: SpinSystem) -> SequenceRecipe:
        if self.construction not in CONSTRUCTIONS:
            raise ConfigError(f"construction must be one of {CONSTRUCTIONS}")
        if self.element not in COMPOSITES:
            raise ConfigError(f"element must be one of {COMPOSITES}")
        return SequenceRecipe(
            sym=self.symmetry(),
            construction=self.construction,
            composite=self.element,
            J=system.J,
            theta_ST=system.theta_ST if self.construction == "m2s" else None,
            shift_deg=self.shift_deg,
            tau_r=None if self.tau_r_us is None else self.tau_r_us * 1e-6,
            timing=self.timing,
            m2s_tau_e=None if self.tau_e_us is None else self.tau_e_us * 1e-6,
            m2s_counts=None if self.m2s_counts is None else tuple(self.m2s_counts),
        )


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "filter"
    n_exc: int | None = None
    n_rec: int | None = None


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "n"
    start: float | None = None
    stop: float | None = None
    num: int | None = None
    jobs: int = 1

    def values(self) -> list[float]:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {self.axis!r}")
        defaults = {"n": (1, 20), "amplitude": (0.7, 1.3), "offset": (-200.0, 200.0), "delay": (-0.1, 0.1)}
        lo, hi = defaults[self.axis]
        lo = lo if self.start is None else self.start
        hi = hi if self.stop is None else self.stop
        if self.axis == "n":
            vals = list(range(int(lo), int(hi) + 1))
        else:
            num = 41 if self.num is None else self.num
            if num < 1:
                raise ConfigError("sweep needs at least one point")
            vals = [lo + (hi - lo) * k / (num - 1) for k in range(num)] if num > 1 else [lo]
        if not vals:
            raise ConfigError(f"empty sweep range [{lo}, {hi}]")
        return vals

    def internal_values(self) -> list[float]:
        """Axis values in internal units (offset in rad/s)."""
        vals = self.values()
        return [2 * math.pi * v for v in vals] if self.axis == "offset" else vals


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    kappa_syms: tuple | None = None
    n_elements: int | None = None
    out: str | None = None
    seed: int = 0  # reserved; every computation is deterministic

    _SECTIONS = {"system": SystemConfig, "context": ContextConfig, "sequence": SequenceConfig,
                 "protocol": ProtocolConfig, "sweep": SweepConfig}

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in list(d.items()):
            if isinstance(v, tuple):
                d[k] = list(v)
        if d["sequence"]["m2s_counts"] is not None:
            d["sequence"]["m2s_counts"] = list(d["sequence"]["m2s_counts"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, value in data.items():
            if name in cls._SECTIONS:
                sec = cls._SECTIONS[name]
                sec_known = {f.name for f in fields(sec)}
                bad = set(value) - sec_known
                if bad:
                    raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
                value = dict(value)
                if name == "sequence" and value.get("m2s_counts") is not None:
                    value["m2s_counts"] = tuple(value["m2s_counts"])
                kw[name] = sec(**value)
            elif name == "kappa_syms" and value is not None:
                kw[name] = tuple(value)
            else:
                kw[name] = value
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def with_section(self, name: str, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return replace(self, **{name: replace(getattr(self, name), **changes)})
