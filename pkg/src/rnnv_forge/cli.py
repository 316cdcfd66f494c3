"""Command-line front end: ``rnnv-forge {kappa-table, derive, simulate, sweep}``.

Exit codes: 0 success, 2 usage, 3 infeasible physics (timing), 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .config import SWEEP_AXES, ConfigError, RunConfig
from .engine import PropagationError
from .experiments import (Protocol, single_pulse_lines, singlet_filter_protocol, st_excitation_protocol,
                          sweep)
from .sequence import InfeasibleTimingError, SequenceError, SymmetryNumbers
from .symmetry import REFERENCE_KAPPA, kappa_row, table_symmetries

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
KAPPA_TOL = 0.002


class NumericalFailure(RuntimeError):
    pass


def header(cfg: RunConfig) -> str:
    return f"# rnnv-forge v{__version__} config={cfg.hash}"


def emit(text: str, cfg: RunConfig, sidecar: dict | None = None) -> None:
    """Write ``text`` to ``cfg.out`` (plus a JSON sidecar) or to stdout."""
    if cfg.out is None:
        sys.stdout.write(text)
        return
    out = Path(cfg.out)
    out.write_text(text)
    meta = {"version": __version__, "config_hash": cfg.hash, "config": cfg.to_dict()}
    if sidecar:
        meta.update(sidecar)
    out.with_name(out.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _csv(rows: list[list], head: list[str], cfg: RunConfig) -> str:
    buf = io.StringIO()
    buf.write(header(cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x + 0.0:.6f}" if abs(x) >= 5e-7 else "0.000000"


def _deg(z: complex) -> str:
    """Phase in degrees on (-180, 180]."""
    d = round(math.degrees(cmath.phase(z)), 6)
    return _fmt(180.0 if d <= -180.0 else d)


# -- commands -------------------------------------------------------------------


def cmd_kappa_table(cfg: RunConfig) -> int:
    if cfg.kappa_syms is None:
        syms = table_symmetries()
    else:
        syms = [SymmetryNumbers.parse(s) for s in cfg.kappa_syms]
    if not syms:
        raise ConfigError("empty symmetry list")
    J = cfg.system.J_hz
    rows, bad = [], []
    for sym in syms:
        r = kappa_row(sym, J)
        k, closed = r["kappa"], r["closed"]
        ref = REFERENCE_KAPPA.get((sym.N, sym.n, sym.nu))
        if closed is None:
            match = "n/a"
        else:
            ok = abs(abs(k) - abs(closed)) <= KAPPA_TOL
            match = "yes" if ok else "no"
            if not ok:
                bad.append(str(sym))
        rows.append([
            sym.N, sym.n, sym.nu, r["term"], _fmt(abs(k)), _deg(k),
            _fmt(k.real), _fmt(r["K"].real), _fmt(r["K"].imag),
            "" if closed is None else _fmt(abs(closed)),
            "" if closed is None else _deg(closed),
            match,
            "" if ref is None else f"{ref:.3f}",
            "" if ref is None else ("yes" if abs(abs(k) - abs(ref)) <= KAPPA_TOL else "no"),
        ])
    head = ["N", "n", "nu", "term", "|kappa|", "arg(kappa)_deg", "kappa_re", "K_re", "K_im",
            "closed_|kappa|", "closed_arg_deg", "closed_match", "table_kappa", "table_match"]
    emit(_csv(rows, head, cfg), cfg)
    if bad:
        raise NumericalFailure(f"numeric and closed-form |kappa| differ by more than {KAPPA_TOL} for {', '.join(bad)}")
    return EXIT_OK


def cmd_derive(cfg: RunConfig) -> int:
    system = cfg.system.to_system()
    ctx = cfg.context.to_context()
    recipe = cfg.sequence.to_recipe(system)
    if recipe.construction == "m2s":
        seq = recipe.build(1, ctx)
    else:
        sym = recipe.sym if recipe.construction != "pulsepol" else SymmetryNumbers(4, 3, 1)
        seq = recipe.build(sym.N if cfg.n_elements is None else cfg.n_elements, ctx)
    data = seq.to_dict()
    data["config_hash"] = cfg.hash
    text = json.dumps(data, indent=2) + "\n"
    emit(text, cfg)
    return EXIT_OK


def _n_exc(cfg: RunConfig, default: int = 9) -> int:
    n = cfg.protocol.n_exc if cfg.protocol.n_exc is not None else cfg.n_elements
    return default if n is None else n


def cmd_simulate(cfg: RunConfig) -> int:
    system = cfg.system.to_system()
    ctx = cfg.context.to_context()
    recipe = cfg.sequence.to_recipe(system)
    kind = cfg.protocol.kind
    if kind == "excitation":
        n = _n_exc(cfg, 4)
        lines = st_excitation_protocol(recipe, n, system, ctx)
        ref = {l.label: l for l in single_pulse_lines(system, ctx)}
        rows = [[l.label, _fmt(l.frequency / (2 * math.pi)), _fmt(l.amplitude.real), _fmt(l.amplitude.imag),
                 _fmt(abs(l.amplitude)), _fmt(abs(ref[l.label].amplitude))] for l in lines]
        head = ["line", "frequency_hz", "amplitude_re", "amplitude_im", "abs", "single_90_abs"]
    elif kind == "filter":
        n = _n_exc(cfg)
        n_rec = n if cfg.protocol.n_rec is None else cfg.protocol.n_rec
        eff = singlet_filter_protocol(recipe, None, n, n_rec, system, ctx)
        if not math.isfinite(eff):
            raise NumericalFailure("non-finite efficiency")
        rows = [["n_exc", n], ["n_rec", n_rec], ["efficiency", _fmt(eff)]]
        head = ["quantity", "value"]
    else:
        raise ConfigError(f"protocol kind must be 'filter' or 'excitation', got {kind!r}")
    emit(_csv(rows, head, cfg), cfg)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    system = cfg.system.to_system()
    ctx = cfg.context.to_context()
    recipe = cfg.sequence.to_recipe(system)
    sw = cfg.sweep
    values = sw.internal_values()
    n = _n_exc(cfg, 1 if recipe.construction == "m2s" else 9)
    proto = Protocol(recipe, n, system, ctx, n_rec=cfg.protocol.n_rec, kind=cfg.protocol.kind)
    res = sweep(SWEEP_AXES[sw.axis], values, proto, jobs=sw.jobs)
    shown = sw.values()
    rows = [[repr(float(v)), repr(float(y)), e or ""] for v, y, e in zip(shown, res.observable, res.errors)]
    unit = {"n": "n_elements", "amplitude": "amplitude_scale", "offset": "offset_hz", "delay": "delay_mismatch"}
    emit(_csv(rows, [unit[sw.axis], "observable", "error"], cfg), cfg,
         {"sweep": {"axis": sw.axis, "failed": res.failed}})
    if res.failed == len(values):
        raise NumericalFailure(f"all {len(values)} sweep points failed; first error: {res.errors[0]}")
    return EXIT_OK


COMMANDS = {"kappa-table": cmd_kappa_table, "derive": cmd_derive, "simulate": cmd_simulate, "sweep": cmd_sweep}


# -- argument parsing -------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--out", help="output file (a .json sidecar is written next to it)")
    g = p.add_argument_group("spin system")
    g.add_argument("--J", type=float, dest="J_hz", help="scalar coupling in Hz")
    g.add_argument("--diff-hz", type=float, help="chemical-shift difference omega_diff / 2pi in Hz")
    g.add_argument("--sum-hz", type=float, help="chemical-shift sum omega_sum / 2pi in Hz")


def _sequence_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sequence")
    g.add_argument("--sym", help="symmetry numbers N,n,nu")
    c = g.add_mutually_exclusive_group()
    for name in ("standard", "riffled", "pulsepol", "m2s"):
        c.add_argument(f"--{name}", dest="construction", action="store_const", const=name)
    g.add_argument("--element", choices=["plain", "bb1", "asbo11", "sp7"], help="central 180-degree pulse")
    g.add_argument("--shift", type=float, dest="shift_deg", help="overall phase shift in degrees")
    g.add_argument("--tau-r-us", type=float, help="override the R-element duration (us)")
    g.add_argument("--timing", choices=["sum", "central"], help="finite-pulse delay rule")
    g.add_argument("--tau-e-us", type=float, help="M2S echo duration (us)")
    g.add_argument("--n-elements", type=int, help="number of R-elements")
    x = p.add_argument_group("execution")
    x.add_argument("--finite", dest="pulse_mode", action="store_const", const="finite",
                   help="finite pulses instead of delta pulses")
    x.add_argument("--nutation-hz", type=float, help="nominal nutation frequency (Hz)")
    x.add_argument("--amplitude-scale", type=float, help="actual / nominal rf amplitude")
    x.add_argument("--offset-hz", type=float, help="resonance offset (Hz)")
    x.add_argument("--time-grid-us", type=float, help="timing resolution (us)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnnv-forge", description="RNnν singlet-triplet sequence toolkit")
    parser.add_argument("--version", action="version", version=f"rnnv-forge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kappa-table", help="scaling factors for RNnν symmetries")
    _common(p)
    p.add_argument("--sym", action="append", dest="kappa_syms", metavar="N,n,nu",
                   help="symmetry to tabulate (repeatable); default: the reference set")

    p = sub.add_parser("derive", help="compile a pulse sequence to JSON")
    _common(p)
    _sequence_flags(p)

    p = sub.add_parser("simulate", help="run one protocol")
    _common(p)
    _sequence_flags(p)
    p.add_argument("--protocol", choices=["filter", "excitation"], dest="kind")
    p.add_argument("--n", type=int, dest="n_exc", help="excitation element count")
    p.add_argument("--n-rec", type=int, help="reconversion element count (default: same as --n)")

    p = sub.add_parser("sweep", help="sweep one parameter")
    _common(p)
    _sequence_flags(p)
    p.add_argument("--protocol", choices=["filter", "excitation"], dest="kind")
    p.add_argument("--n", type=int, dest="n_exc", help="element count at fixed-n sweeps")
    p.add_argument("--n-rec", type=int)
    p.add_argument("--axis", choices=sorted(SWEEP_AXES))
    p.add_argument("--from", type=float, dest="start")
    p.add_argument("--to", type=float, dest="stop")
    p.add_argument("--num", type=int, help="number of points (continuous axes)")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    a = vars(args)
    cfg = cfg.with_section("system", J_hz=a.get("J_hz"), diff_hz=a.get("diff_hz"), sum_hz=a.get("sum_hz"))
    cfg = cfg.with_section("context", pulse_mode=a.get("pulse_mode"), nutation_hz=a.get("nutation_hz"),
                           amplitude_scale=a.get("amplitude_scale"), offset_hz=a.get("offset_hz"),
                           time_grid_us=a.get("time_grid_us"))
    cfg = cfg.with_section("sequence", sym=a.get("sym"), construction=a.get("construction"),
                           element=a.get("element"), shift_deg=a.get("shift_deg"), tau_r_us=a.get("tau_r_us"),
                           timing=a.get("timing"), tau_e_us=a.get("tau_e_us"))
    cfg = cfg.with_section("protocol", kind=a.get("kind"), n_exc=a.get("n_exc"), n_rec=a.get("n_rec"))
    cfg = cfg.with_section("sweep", axis=a.get("axis"), start=a.get("start"), stop=a.get("stop"),
                           num=a.get("num"), jobs=a.get("jobs"))
    from dataclasses import replace
    top = {k: a[k] for k in ("n_elements", "out") if a.get(k) is not None}
    if "kappa_syms" in a and a["kappa_syms"] is not None:
        top["kappa_syms"] = tuple(a["kappa_syms"])
    return replace(cfg, **top) if top else cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except InfeasibleTimingError as exc:
        print(f"rnnv-forge: infeasible timing: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, SequenceError) as exc:
        print(f"rnnv-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, PropagationError, FloatingPointError, ArithmeticError) as exc:
        print(f"rnnv-forge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
