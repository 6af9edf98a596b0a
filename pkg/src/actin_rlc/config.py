"""JSON configuration: strict parsing, defaults, and the shipped gate library.

Units are part of every key name (``t_end_ns``, ``R1_ohm`` ...).  Unknown
keys are rejected with the path of the offending key.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .errors import ConfigError, DomainError
from .gates import (
    CascadeSpec,
    CascadeStage,
    GateSpec,
    ParallelGate,
    ReadoutSpec,
)
from .integrator import RunSettings
from .model import FilamentConfig
from .params import CellParams, DerivationInputs, derive_params
from .stimuli import Constant, Sine, StimulusSpec, TanhStep

DERIVE_KEYS = {f.name for f in fields(DerivationInputs)}


def _obj(d, path) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object, got {type(d).__name__}", path)
    return d


def _check_keys(d: dict, allowed, path: str, required=()):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", f"{path}.{k}" if path else k)
    for k in required:
        if k not in d:
            raise ConfigError("missing required key", f"{path}.{k}" if path else k)


def _num(d: dict, key: str, path: str, default=None, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError("missing required key", f"{path}.{key}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", f"{path}.{key}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"expected an integer, got {v!r}", f"{path}.{key}")
        return int(v)
    return float(v)


def _wrap(fn, path):
    try:
        return fn()
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path) from exc
        raise
    except DomainError as exc:
        raise ConfigError(str(exc), path) from exc


# -- filament ----------------------------------------------------------------


def filament_from_dict(d, path="filament") -> FilamentConfig:
    d = _obj(d, path)
    _check_keys(d, {"n_cells", "b", "params", "derive", "lumped_groups", "time_unit_s"}, path, ("n_cells",))
    b = _num(d, "b", path, 0.0)
    if ("params" in d) == ("derive" in d):
        raise ConfigError("give exactly one of 'params' or 'derive'", path)
    if "params" in d:
        p = _obj(d["params"], f"{path}.params")
        _check_keys(p, {"R1_ohm", "R2_ohm", "L_henry", "C0_farad"}, f"{path}.params", ("R1_ohm", "R2_ohm", "L_henry", "C0_farad"))
        cell = _wrap(
            lambda: CellParams(
                R1=_num(p, "R1_ohm", path),
                R2=_num(p, "R2_ohm", path),
                L=_num(p, "L_henry", path),
                C0=_num(p, "C0_farad", path),
                b=b,
            ),
            f"{path}.params",
        )
    else:
        inputs = derivation_inputs_from_dict(d["derive"], f"{path}.derive")
        cell = _wrap(lambda: derive_params(inputs).cell_params(b), f"{path}.derive")
    groups = []
    for i, g in enumerate(d.get("lumped_groups", [])):
        gp = f"{path}.lumped_groups[{i}]"
        g = _obj(g, gp)
        _check_keys(g, {"cells"}, gp, ("cells",))
        cells = g["cells"]
        if not (isinstance(cells, list) and len(cells) == 2 and all(isinstance(c, int) for c in cells)):
            raise ConfigError("expected [lo, hi]", f"{gp}.cells")
        groups.append(tuple(cells))
    n_cells = _num(d, "n_cells", path, integer=True)
    time_unit = _num(d, "time_unit_s", path, 1e-9)
    return _wrap(lambda: FilamentConfig(n_cells, cell, tuple(groups), time_unit), path)


def derivation_inputs_from_dict(d, path="derive") -> DerivationInputs:
    d = _obj(d, path)
    _check_keys(d, DERIVE_KEYS, path)
    values = {k: _num(d, k, path) for k in d}
    return _wrap(lambda: DerivationInputs(**values), path)


def filament_to_dict(f: FilamentConfig) -> dict:
    d = f.to_dict()
    d.pop("boundary")
    if f.time_unit == 1e-9:
        d.pop("time_unit_s")
    if not d["lumped_groups"]:
        d.pop("lumped_groups")
    return d


# -- stimuli -----------------------------------------------------------------


def waveform_from_dict(d, scale=1.0, path="waveform"):
    d = _obj(d, path)
    kind = d.get("kind")
    if kind == "tanh_step":
        _check_keys(d, {"kind", "t0_ns"}, path)
        return TanhStep(_num(d, "t0_ns", path, 3.0), scale)
    if kind == "sine":
        _check_keys(d, {"kind", "amplitude", "period_ns", "phase_rad"}, path)
        return _wrap(
            lambda: Sine(_num(d, "amplitude", path, 1.0), _num(d, "period_ns", path, 1.0), _num(d, "phase_rad", path, 0.0), scale),
            path,
        )
    if kind == "constant":
        _check_keys(d, {"kind", "value"}, path)
        return Constant(_num(d, "value", path, 1.0), scale)
    raise ConfigError(f"unknown waveform kind {kind!r}", f"{path}.kind")


def stimulus_from_dict(d, path="stimuli[0]") -> StimulusSpec:
    d = _obj(d, path)
    _check_keys(d, {"cells", "mode", "waveform", "scale"}, path, ("cells", "mode", "waveform"))
    cells = d["cells"]
    if not (isinstance(cells, list) and cells and all(isinstance(c, int) and not isinstance(c, bool) for c in cells)):
        raise ConfigError("expected a non-empty list of integer cell indices", f"{path}.cells")
    wf = waveform_from_dict(d["waveform"], _num(d, "scale", path, 1.0), f"{path}.waveform")
    return _wrap(lambda: StimulusSpec(tuple(cells), d["mode"], wf), path)


def stimuli_from_list(items, path="stimuli") -> list[StimulusSpec]:
    if not isinstance(items, list):
        raise ConfigError("expected a list", path)
    return [stimulus_from_dict(s, f"{path}[{i}]") for i, s in enumerate(items)]


# -- run / readout -------------------------------------------------------------

RUN_KEYS = {"t_end_ns", "dt_ns", "sample_every_ns", "method", "newton_tol", "newton_max_iters"}


def run_from_dict(d, path="run") -> RunSettings:
    d = _obj(d, path)
    _check_keys(d, RUN_KEYS, path, ("t_end_ns",))
    method = d.get("method", "implicit_trapezoidal")
    return _wrap(
        lambda: RunSettings(
            t_end=_num(d, "t_end_ns", path),
            dt=_num(d, "dt_ns", path, 1e-3),
            sample_every=_num(d, "sample_every_ns", path, 1e-2),
            method=method,
            newton_tol=_num(d, "newton_tol", path, 1e-10),
            newton_max_iters=_num(d, "newton_max_iters", path, 25, integer=True),
        ),
        path,
    )


def readout_from_dict(d, path="readout") -> ReadoutSpec:
    d = _obj(d, path)
    _check_keys(d, {"cells", "threshold_fraction", "window_ns", "mode"}, path, ("cells",))
    cells = d["cells"]
    if not (isinstance(cells, list) and all(isinstance(c, int) for c in cells)):
        raise ConfigError("expected a list of integer cell indices", f"{path}.cells")
    return _wrap(
        lambda: ReadoutSpec(
            tuple(cells),
            _num(d, "threshold_fraction", path, 0.1),
            _num(d, "window_ns", path, 1.0),
            d.get("mode", "signed"),
        ),
        path,
    )


def readout_to_dict(r: ReadoutSpec) -> dict:
    return {"cells": list(r.cells), "threshold_fraction": r.threshold_fraction, "window_ns": r.window, "mode": r.mode}


# -- gates -----------------------------------------------------------------------

GATE_KEYS = {"name", "function", "inputs", "filament", "bindings", "constants", "readout", "run", "nominal", "calibration"}


def gate_from_dict(d, path="gate", library=None):
    """Build a GateSpec, ParallelGate or CascadeSpec from its dict form."""
    d = _obj(d, path)
    if "outputs" in d:
        _check_keys(d, {"name", "inputs", "outputs"}, path, ("name", "inputs", "outputs"))
        outs = []
        for i, o in enumerate(d["outputs"]):
            op = f"{path}.outputs[{i}]"
            o = _obj(o, op)
            _check_keys(o, {"label", "gate"}, op, ("label", "gate"))
            outs.append((o["label"], gate_from_dict(o["gate"], f"{op}.gate", library)))
        return _wrap(lambda: ParallelGate(d["name"], tuple(d["inputs"]), tuple(outs)), path)
    if "stages" in d:
        _check_keys(d, {"name", "inputs", "stages"}, path, ("name", "inputs", "stages"))
        stages = []
        for i, s in enumerate(d["stages"]):
            sp = f"{path}.stages[{i}]"
            s = _obj(s, sp)
            _check_keys(s, {"name", "gate", "wiring"}, sp, ("name", "gate", "wiring"))
            g = s["gate"]
            if isinstance(g, str):
                if library is None:
                    from .library import builtin_gate_library

                    library = builtin_gate_library()
                lib = library
                if g not in lib or not isinstance(lib[g], GateSpec):
                    raise ConfigError(f"unknown single-output gate {g!r}", f"{sp}.gate")
                g = lib[g]
            else:
                g = gate_from_dict(g, f"{sp}.gate", library)
            stages.append(CascadeStage(s["name"], g, dict(_obj(s["wiring"], f"{sp}.wiring"))))
        return _wrap(lambda: CascadeSpec(d["name"], tuple(d["inputs"]), tuple(stages)), path)

    _check_keys(d, GATE_KEYS, path, ("name", "inputs", "filament", "bindings", "readout", "run"))
    filament = filament_from_dict(d["filament"], f"{path}.filament")
    bindings = {}
    for k, items in _obj(d["bindings"], f"{path}.bindings").items():
        bindings[k] = tuple(stimuli_from_list(items, f"{path}.bindings.{k}"))
    constants = tuple(stimuli_from_list(d.get("constants", []), f"{path}.constants"))
    return _wrap(
        lambda: GateSpec(
            name=d["name"],
            filament=filament,
            inputs=tuple(d["inputs"]),
            bindings=bindings,
            readout=readout_from_dict(d["readout"], f"{path}.readout"),
            run=run_from_dict(d["run"], f"{path}.run"),
            constants=constants,
            function=d.get("function", ""),
            nominal=copy.deepcopy(d.get("nominal", {})),
            calibration=copy.deepcopy(d.get("calibration", {})),
        ),
        path,
    )


def gate_to_dict(g) -> dict:
    if isinstance(g, ParallelGate):
        return {"name": g.name, "inputs": list(g.inputs), "outputs": [{"label": k, "gate": gate_to_dict(x)} for k, x in g.outputs]}
    if isinstance(g, CascadeSpec):
        return {
            "name": g.name,
            "inputs": list(g.inputs),
            "stages": [{"name": s.name, "gate": gate_to_dict(s.gate), "wiring": dict(s.wiring)} for s in g.stages],
        }
    d = {
        "name": g.name,
        "function": g.function,
        "inputs": list(g.inputs),
        "filament": filament_to_dict(g.filament),
        "bindings": {k: [s.to_dict() for s in v] for k, v in g.bindings.items()},
        "constants": [s.to_dict() for s in g.constants],
        "readout": readout_to_dict(g.readout),
        "run": g.run.to_dict(),
    }
    if g.nominal:
        d["nominal"] = copy.deepcopy(dict(g.nominal))
    if g.calibration:
        d["calibration"] = copy.deepcopy(dict(g.calibration))
    return d


# -- run configs ----------------------------------------------------------------

TOP_KEYS = {"filament", "stimuli", "run", "gate", "readout"}


@dataclass
class RunConfig:
    filament: FilamentConfig | None
    stimuli: list[StimulusSpec]
    run: RunSettings | None
    gate: Any = None
    gate_inputs: tuple[int, ...] | None = None
    readout: ReadoutSpec | None = None
    effective: dict = field(default_factory=dict)


def loads_json(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def parse_config(data: str | bytes | dict) -> RunConfig:
    """Validate a run configuration and fill in defaults.

    With a single-filament ``gate``, top-level ``readout`` and ``run`` blocks
    override the gate's own values key by key, and extra ``stimuli`` are added
    to the gate's input stimuli.  ``effective`` holds the fully populated
    configuration as a dict.
    """
    d = loads_json(data) if isinstance(data, (str, bytes)) else copy.deepcopy(data)
    d = _obj(d, "")
    _check_keys(d, TOP_KEYS, "")
    gate = None
    gate_inputs = None
    effective: dict = {}
    if "gate" in d:
        gd = _obj(d["gate"], "gate")
        _check_keys(gd, {"name", "spec", "inputs"}, "gate")
        if ("name" in gd) == ("spec" in gd):
            raise ConfigError("give exactly one of 'name' or 'spec'", "gate")
        if "name" in gd:
            from .library import builtin_gate_library

            lib = builtin_gate_library()
            if gd["name"] not in lib:
                raise ConfigError(f"unknown gate {gd['name']!r}", "gate.name")
            gate = lib[gd["name"]]
        else:
            gate = gate_from_dict(gd["spec"], "gate.spec")
        if "filament" in d:
            raise ConfigError("a gate config takes its filament from the gate", "filament")
        if not isinstance(gate, GateSpec) and any(k in d for k in ("stimuli", "run", "readout")):
            key = next(k for k in ("stimuli", "run", "readout") if k in d)
            raise ConfigError("overrides apply to single-filament gates only", key)
        if "inputs" in gd:
            bits = gd["inputs"]
            if not (isinstance(bits, list) and all(b in (0, 1) and not isinstance(b, bool) for b in bits)):
                raise ConfigError("expected a list of 0/1 bits", "gate.inputs")
            if len(bits) != len(gate.inputs):
                raise ConfigError(f"gate expects {len(gate.inputs)} inputs", "gate.inputs")
            gate_inputs = tuple(bits)
        if isinstance(gate, GateSpec):
            if "readout" in d:
                merged = {**readout_to_dict(gate.readout), **_obj(d["readout"], "readout")}
                gate = _wrap(lambda: replace(gate, readout=readout_from_dict(merged)), "readout")
            if "run" in d:
                merged = {**gate.run.to_dict(), **_obj(d["run"], "run")}
                gate = replace(gate, run=run_from_dict(merged))
        effective["gate"] = {"spec": gate_to_dict(gate)}
        if gate_inputs is not None:
            effective["gate"]["inputs"] = list(gate_inputs)
        filament = gate.filament if isinstance(gate, GateSpec) else None
        run = gate.run if isinstance(gate, GateSpec) else None
        readout = gate.readout if isinstance(gate, GateSpec) else None
    else:
        if "filament" not in d or "run" not in d:
            raise ConfigError("a config needs 'filament' and 'run' (or a 'gate')", "")
        filament = filament_from_dict(d["filament"])
        run = run_from_dict(d["run"])
        readout = readout_from_dict(d["readout"]) if "readout" in d else None
        effective["filament"] = filament_to_dict(filament)
        effective["run"] = run.to_dict()
        if readout is not None:
            effective["readout"] = readout_to_dict(readout)
    stimuli = stimuli_from_list(d.get("stimuli", []))
    if filament is not None:
        for i, s in enumerate(stimuli):
            for c in s.cells:
                if not 1 <= c <= filament.n_cells:
                    raise ConfigError(f"cell {c} outside 1..{filament.n_cells}", f"stimuli[{i}].cells")
        if readout is not None:
            for c in readout.cells:
                if not 1 <= c <= filament.n_cells:
                    raise ConfigError(f"cell {c} outside 1..{filament.n_cells}", "readout.cells")
        from .stimuli import apply_stimuli

        if isinstance(gate, GateSpec):
            extra = gate.stimulus_nodes() & {filament.node_of(c) for s in stimuli for c in s.cells}
            if extra:
                raise ConfigError("extra stimuli overlap the gate's input sites", "stimuli")
            bits = gate_inputs or (1,) * len(gate.inputs)
            _wrap(lambda: apply_stimuli(filament, gate.stimuli_for(bits) + list(stimuli)), "stimuli")
        else:
            _wrap(lambda: apply_stimuli(filament, stimuli), "stimuli")
    effective["stimuli"] = [s.to_dict() for s in stimuli]
    return RunConfig(filament, stimuli, run, gate, gate_inputs, readout, effective)
