"""Command-line interface: ``actin-rlc {derive-params,simulate,gate,sweep,calibrate}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure (or a gate
that has not been calibrated).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import __version__
from .errors import ActinError, CalibrationError, ConfigError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
TOOL = "actin_rlc"

log = logging.getLogger(__name__)


class GateNotCalibrated(ActinError):
    pass


# -- output helpers ---------------------------------------------------------------


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays strict."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trace_csv(trace) -> str:
    """``t_ns,V1,...`` with every value at full (round-trip) precision."""
    lines = [",".join(("t_ns",) + tuple(trace.labels))]
    for t, row in zip(trace.times.tolist(), trace.voltages.tolist()):
        lines.append(",".join([repr(t)] + [repr(v) for v in row]))
    return "\n".join(lines) + "\n"


def _write(path: Path, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)


# -- derive-params --------------------------------------------------------------


def _derivation_args(p: argparse.ArgumentParser) -> None:
    from .params import DerivationInputs

    for f in fields(DerivationInputs):
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=float, default=None, metavar="X")


def derived_table(d) -> dict:
    return {
        "bjerrum_length_m": d.bjerrum_length,
        "bjerrum_length_nm": d.bjerrum_length * 1e9,
        "C0_farad": d.capacitance,
        "C0_pF": d.capacitance * 1e12,
        "L_henry": d.inductance,
        "L_pH": d.inductance * 1e12,
        "resistivity_ohm_m": d.resistivity,
        "R1_ohm": d.R1,
        "R1_Mohm": d.R1 * 1e-6,
        "R2_ohm": d.R2,
        "R2_Mohm": d.R2 * 1e-6,
    }


def cmd_derive_params(args) -> int:
    from dataclasses import asdict

    from .params import DerivationInputs, derive_params

    overrides = {f.name: getattr(args, f.name) for f in fields(DerivationInputs) if getattr(args, f.name) is not None}
    inputs = DerivationInputs(**overrides)
    table = derived_table(derive_params(inputs))
    if args.json:
        sys.stdout.write(dumps_json({"inputs": asdict(inputs), "derived": table}))
        return EXIT_OK
    rows = [
        ("lambda_B", table["bjerrum_length_m"], "m", table["bjerrum_length_nm"], "nm"),
        ("C0", table["C0_farad"], "F", table["C0_pF"], "pF"),
        ("L", table["L_henry"], "H", table["L_pH"], "pH"),
        ("rho", table["resistivity_ohm_m"], "ohm m", table["resistivity_ohm_m"], "ohm m"),
        ("R1", table["R1_ohm"], "ohm", table["R1_Mohm"], "Mohm"),
        ("R2", table["R2_ohm"], "ohm", table["R2_Mohm"], "Mohm"),
    ]
    print(f"{'quantity':<10}{'SI':>16} {'':<6}{'scaled':>14}")
    for name, si, su, pu, uu in rows:
        print(f"{name:<10}{si:>16.6g} {su:<6}{pu:>14.6g} {uu}")
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def _read_config(path: str):
    from .config import parse_config

    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
    return parse_config(data)


def simulation_summary(cfg, trace, stimuli) -> dict:
    """Summary document for one simulated trace of ``cfg``."""
    from .gates import GateSpec, output_level
    from .model import fingerprint
    from .runner import bits_label, gate_observables, trace_observables

    summary = {
        "tool": TOOL,
        "version": __version__,
        "config_hash": fingerprint(cfg.effective),
        "config_fingerprint": trace.config_fingerprint,
        "settings_fingerprint": trace.settings_fingerprint,
        "n_samples": int(trace.times.size),
        "nodes": list(trace.labels),
        "v0": 1.0,
        **trace_observables(trace, stimuli),
    }
    ro = cfg.readout
    summary["raster_threshold_fraction"] = ro.threshold_fraction if ro else 0.1
    if isinstance(cfg.gate, GateSpec):
        summary["gate"] = gate_observables(cfg.gate, {bits_label(cfg.gate_inputs): trace})
    elif ro is not None:
        lvl = output_level(trace, ro, cfg.filament)
        summary["readout"] = {"cells": list(ro.cells), "level": lvl, "bit": int(lvl >= ro.threshold_fraction * ro.v0)}
    summary["effective_config"] = cfg.effective
    return summary


def cmd_simulate(args) -> int:
    from .analysis import digitize_trace, render_raster_pbm
    from .runner import jobs_for

    cfg = _read_config(args.config)
    jobs = jobs_for(cfg)
    if len(jobs) != 1:
        raise ConfigError("simulate runs one input combination; set gate.inputs or use 'gate --truth-table'", "gate")
    job = next(iter(jobs.values()))
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = job.simulate()
    except NumericalError as exc:
        if exc.partial is not None:
            _write(out / "trace.csv.partial", trace_csv(exc.partial))
        raise
    ro = cfg.readout
    theta = ro.threshold_fraction if ro else 0.1
    raster = digitize_trace(trace, theta, 1.0, bool(ro and ro.magnitude))
    _write(out / "trace.csv", trace_csv(trace))
    _write(out / "raster.pbm", render_raster_pbm(raster))
    _write(out / "summary.json", dumps_json(simulation_summary(cfg, trace, job.stimuli)))
    log.info("wrote %s", out)
    return EXIT_OK


# -- gate -----------------------------------------------------------------------


def load_gate(ref: str):
    """A library gate by name, or a gate spec from a JSON file."""
    from .config import gate_from_dict, loads_json
    from .library import builtin_gate_library

    lib = builtin_gate_library()
    if ref in lib:
        return lib[ref]
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"unknown gate {ref!r} (library: {', '.join(lib)})")
    return gate_from_dict(loads_json(path.read_bytes()), str(path), library=lib)


def _single_gates(gate):
    from .gates import CascadeSpec, ParallelGate

    if isinstance(gate, CascadeSpec):
        return [st.gate for st in gate.stages]
    if isinstance(gate, ParallelGate):
        return [g for _, g in gate.outputs]
    return [gate]


def _with_threshold(gate, theta: float):
    from .gates import CascadeSpec, CascadeStage, ParallelGate

    def fix(g):
        return replace(g, readout=replace(g.readout, threshold_fraction=theta))

    if isinstance(gate, CascadeSpec):
        return replace(gate, stages=tuple(CascadeStage(s.name, fix(s.gate), s.wiring) for s in gate.stages))
    if isinstance(gate, ParallelGate):
        return replace(gate, outputs=tuple((k, fix(g)) for k, g in gate.outputs))
    return fix(gate)


def _parse_bits(tokens, n: int) -> tuple[int, ...]:
    text = "".join(tokens)
    if len(text) != n or set(text) - {"0", "1"}:
        raise ConfigError(f"expected {n} input bits (0/1), got {' '.join(tokens)!r}", "inputs")
    return tuple(int(c) for c in text)


def gate_rows(gate, combos, workers: int = 1):
    """Per-combination results as ``(bits, {output: bit}, {output: level}, {output: trace})``."""
    from .gates import CascadeSpec, ParallelGate, evaluate_cascade, evaluate_gate

    if isinstance(gate, CascadeSpec):
        runs = [evaluate_cascade(gate, c) for c in combos]
        return [(r.inputs, dict(r.signals), dict(r.levels), dict(r.traces)) for r in runs]
    names = gate.output_names if isinstance(gate, ParallelGate) else ("out",)
    if workers > 1 and len(combos) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(evaluate_gate, [gate] * len(combos), combos))
    else:
        runs = [evaluate_gate(gate, c) for c in combos]
    return [
        (r.inputs, dict(zip(names, r.bits)), dict(zip(names, r.levels)), dict(zip(names, r.traces))) for r in runs
    ]


def cmd_gate(args) -> int:
    from .analysis import render_raster_pbm
    from .gates import CascadeSpec, gate_raster, input_combinations, separation_margin
    from .library import library_dict
    from .model import fingerprint

    gate = load_gate(args.name)
    missing = [g.name for g in _single_gates(gate) if not g.calibration]
    if missing:
        raise GateNotCalibrated(f"gate(s) {', '.join(missing)} carry no calibration; run 'calibrate' first")
    if args.threshold is not None:
        if not 0 < args.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)", "--threshold")
        gate = _with_threshold(gate, args.threshold)
    n = len(gate.inputs)
    if args.truth_table:
        if args.bits:
            raise ConfigError("give input bits or --truth-table, not both")
        combos = input_combinations(n)
    else:
        combos = [_parse_bits(args.bits, n)]
    rows = gate_rows(gate, combos, args.workers)

    readouts = {}
    if isinstance(gate, CascadeSpec):
        readouts = {st.name: st.gate.readout for st in gate.stages}
        outputs = [gate.stages[-1].name]
    else:
        parts = _single_gates(gate)
        outputs = list(rows[0][1])
        readouts = dict(zip(outputs, (g.readout for g in parts)))

    doc = {
        "tool": TOOL,
        "version": __version__,
        "gate": gate.name,
        "config_hash": fingerprint(library_dict(gate)),
        "outputs": outputs,
        "rows": [
            {"inputs": list(bits), "bits": {k: b[k] for k in outputs}, "levels": lv, "signals": b}
            for bits, b, lv, _ in rows
        ],
    }
    if args.truth_table:
        doc["columns"] = {k: [b[k] for _, b, _, _ in rows] for k in outputs}
        if not isinstance(gate, CascadeSpec):
            margins = {}
            for k, g in zip(outputs, _single_gates(gate)):
                levels = {bits: lv[k] for bits, _, lv, _ in rows}
                margins[k] = separation_margin(levels, {c: g.expected(c) for c in combos}, g.readout.v0)[0]
            doc["margins"] = margins

    if args.raster:
        rdir = Path(args.raster)
        rdir.mkdir(parents=True, exist_ok=True)
        for bits, _, _, traces in rows:
            for k, tr in traces.items():
                suffix = "" if list(traces) == ["out"] else f"_{k}"
                _write(rdir / f"{gate.name}_{''.join(map(str, bits))}{suffix}.pbm", render_raster_pbm(gate_raster(tr, readouts[k])))

    if args.json:
        sys.stdout.write(dumps_json(doc))
        return EXIT_OK
    for bits, b, lv, _ in rows:
        outs = " ".join(f"{k}={b[k]}" for k in outputs)
        lvls = ", ".join(f"{k}={lv[k]:.4f}" for k in lv)
        print(f"{gate.name} {''.join(map(str, bits))} -> {outs}  (levels: {lvls})")
    if args.truth_table:
        for k in outputs:
            print(f"{k}: {','.join(str(x) for x in doc['columns'][k])}")
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------


def _set_path(d, path: str, value):
    parts = path.split(".")
    cur = d
    for i, key in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(cur, list):
            try:
                idx = int(key)
                cur[idx]
            except (ValueError, IndexError) as exc:
                raise ConfigError("no such list element", ".".join(parts[: i + 1])) from exc
            if last:
                cur[idx] = value
            else:
                cur = cur[idx]
        elif isinstance(cur, dict):
            if last:
                cur[key] = value
            else:
                cur = cur.setdefault(key, {})
        else:
            raise ConfigError("cannot descend into a scalar", ".".join(parts[: i + 1]))


def _number(text: str, where: str):
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        v = None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"grid values must be numbers, got {text!r}", where)
    return v


def parse_grid(params, grid_file) -> list[tuple[str, list]]:
    grid: list[tuple[str, list]] = []
    if grid_file:
        from .config import loads_json

        data = loads_json(Path(grid_file).read_bytes())
        if not isinstance(data, dict):
            raise ConfigError("grid file must hold an object of path -> list of values", grid_file)
        for path, values in data.items():
            if not isinstance(values, list) or not values:
                raise ConfigError("expected a non-empty list of values", path)
            grid.append((path, [_number(json.dumps(v), path) for v in values]))
    for item in params or []:
        if "=" not in item:
            raise ConfigError(f"expected PATH=V1,V2,..., got {item!r}", "--param")
        path, _, vals = item.partition("=")
        grid.append((path, [_number(v, path) for v in vals.split(",")]))
    if not grid:
        raise ConfigError("empty grid: give --param or --grid")
    return grid


SWEEP_COLUMNS = ("status", "speed_m_per_s", "peak_v", "output_levels", "bits", "margin", "threshold_margin", "error")


def sweep_rows(base: dict, grid, workers: int = 1) -> list[dict]:
    """Evaluate every grid point (first parameter varies slowest).

    Distinct simulations are run once and shared between points; failures
    are recorded per row.
    """
    from .config import parse_config
    from .gates import GateSpec, output_level
    from .runner import gate_observables, jobs_for, run_jobs, trace_observables

    paths = [p for p, _ in grid]
    points = []
    for values in itertools.product(*(v for _, v in grid)):
        d = copy.deepcopy(base)
        row = dict(zip(paths, values))
        try:
            for p, v in zip(paths, values):
                _set_path(d, p, v)
            cfg = parse_config(d)
            jobs = jobs_for(cfg)
            points.append((row, cfg, jobs, None))
        except ActinError as exc:
            points.append((row, None, None, str(exc)))
    results = run_jobs([j for _, _, jobs, _ in points if jobs for j in jobs.values()], workers)

    out = []
    for row, cfg, jobs, err in points:
        row = {**row, **{c: None for c in SWEEP_COLUMNS}}
        if err is not None:
            row.update(status="config_error", error=err)
            out.append(row)
            continue
        traces, failure = {}, None
        for label, job in jobs.items():
            tr, fail = results[job.key]
            if fail is not None:
                failure = fail
                break
            traces[label] = tr
        if failure is not None:
            row.update(status=f"{failure['kind']}_error", error=failure["message"])
            out.append(row)
            continue
        row["status"] = "ok"
        row["peak_v"] = max(float(tr.voltages.max()) for tr in traces.values())
        if len(traces) == 1:
            (label, tr), = traces.items()
            row["speed_m_per_s"] = trace_observables(tr, jobs[label].stimuli)["speed_m_per_s"]
        if isinstance(cfg.gate, GateSpec):
            g = gate_observables(cfg.gate, traces)
            row["output_levels"] = ";".join(repr(r["level"]) for r in g["rows"])
            row["bits"] = "".join(str(r["bit"]) for r in g["rows"])
            row["margin"] = g.get("margin")
            row["threshold_margin"] = g.get("threshold_margin")
        elif cfg.readout is not None:
            lvl = output_level(next(iter(traces.values())), cfg.readout, cfg.filament)
            row["output_levels"] = repr(lvl)
            row["bits"] = str(int(lvl >= cfg.readout.threshold_fraction * cfg.readout.v0))
        out.append(row)
    return out


def sweep_csv(rows, paths) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(paths) + list(SWEEP_COLUMNS))
    for r in rows:
        w.writerow([_fmt(r[k]) for k in list(paths) + list(SWEEP_COLUMNS)])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    from .config import loads_json, parse_config

    try:
        base = loads_json(Path(args.config).read_bytes())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", args.config) from exc
    parse_config(base)
    grid = parse_grid(args.param, args.grid)
    rows = sweep_rows(base, grid, args.workers)
    text = sweep_csv(rows, [p for p, _ in grid])
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- calibrate ------------------------------------------------------------------


def _report_dict(rep) -> dict:
    return {
        "margin": rep.margin,
        "threshold_fraction": rep.threshold_fraction,
        "output_cells": list(rep.output_cells),
        "levels": {"".join(map(str, c)): v for c, v in rep.levels.items()},
        "candidates": rep.candidates,
    }


def cmd_calibrate(args) -> int:
    from .config import gate_to_dict
    from .gates import CascadeSpec, ParallelGate, calibrate_gate

    gate = load_gate(args.name)
    free = tuple(args.free)
    if isinstance(gate, CascadeSpec):
        raise ConfigError("calibrate the stage gates of a cascade individually", args.name)
    if isinstance(gate, ParallelGate):
        parts, reports = [], {}
        for k, g in gate.outputs:
            cal, rep = calibrate_gate(g, free, args.max_shift)
            parts.append((k, cal))
            reports[k] = _report_dict(rep)
        calibrated = replace(gate, outputs=tuple(parts))
        doc = {"gate": gate.name, "parts": reports}
    else:
        calibrated, rep = calibrate_gate(gate, free, args.max_shift)
        doc = {"gate": gate.name, **_report_dict(rep)}
    if args.out:
        _write(Path(args.out), dumps_json(gate_to_dict(calibrated)))
    sys.stdout.write(dumps_json(doc))
    return EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actin-rlc", description="Nonlinear RLC lattice model of actin filaments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("derive-params", help="derive lattice parameters from physical inputs")
    d.add_argument("--json", action="store_true", help="machine-readable output")
    _derivation_args(d)
    d.set_defaults(func=cmd_derive_params)

    s = sub.add_parser("simulate", help="run one configuration and write trace, raster and summary")
    s.add_argument("config")
    s.add_argument("outdir")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gate", help="evaluate a library gate or a gate spec file")
    g.add_argument("name", help="library name or path to a gate JSON file")
    g.add_argument("bits", nargs="*", help="input bits, e.g. '1 0' or '10'")
    g.add_argument("--truth-table", action="store_true", help="run all input combinations (00,10,01,11)")
    g.add_argument("--raster", metavar="DIR", help="write one PBM per combination and output")
    g.add_argument("--threshold", type=float, help="override the readout threshold fraction")
    g.add_argument("--json", action="store_true")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_gate)

    w = sub.add_parser("sweep", help="evaluate observables over a grid of numeric config values")
    w.add_argument("config")
    w.add_argument("--param", action="append", metavar="PATH=V1,V2", help="dotted config path and values")
    w.add_argument("--grid", metavar="FILE", help="JSON object mapping paths to value lists")
    w.add_argument("-o", "--out", metavar="FILE", help="CSV destination (default stdout)")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="search output cells and threshold for a gate")
    c.add_argument("name", help="library name or path to a gate JSON file")
    c.add_argument("--free", nargs="+", default=["threshold", "output_cells"], choices=["threshold", "output_cells"])
    c.add_argument("--max-shift", type=int, default=2)
    c.add_argument("-o", "--out", metavar="FILE", help="write the calibrated gate spec")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NumericalError, CalibrationError, GateNotCalibrated) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ActinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
