"""The shipped gate library.

:func:`nominal_gates` builds each layout from scratch; the calibrated
versions (threshold and, where needed, output cells adjusted by
:func:`~actin_rlc.gates.calibrate_gate`) are stored as JSON under
``data/gates`` and loaded by :func:`builtin_gate_library`.

Input sites sit at most two cells from the nominal figure positions
recorded in each gate's ``nominal`` block.  Single-monomer sites further
apart than that do not interact strongly enough under the derived
parameters: a 1 ns sinusoid decays to ~3% of its amplitude two cells away.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from functools import lru_cache
from importlib import resources

from .config import gate_from_dict, gate_to_dict
from .gates import (
    CascadeSpec,
    CascadeStage,
    GateSpec,
    ParallelGate,
    ReadoutSpec,
    calibrate_gate,
)
from .integrator import RunSettings
from .model import FilamentConfig
from .params import FORCED_PARAMS, REFERENCE_PARAMS
from .stimuli import Constant, Sine, StimulusSpec

LIBRARY_ORDER = ("AND_u", "OR_u", "NOT_u", "XOR_u_cascade", "AND_f", "XOR_f", "HALFADDER_f", "XOR_f_lumped")

B = 0.1
UNFORCED_RUN = RunSettings(t_end=2.0)
FORCED_RUN = RunSettings(t_end=10.0)


def _pulse(cell, v=1.0):
    return StimulusSpec((cell,), "initial", Constant(v))


def _sine(cells, phase=0.0):
    return StimulusSpec(tuple(cells), "clamp", Sine(1.0, 1.0, phase))


def _unforced_filament():
    return FilamentConfig(20, replace(REFERENCE_PARAMS, b=B))


def _forced_filament(n=20, groups=()):
    return FilamentConfig(n, replace(FORCED_PARAMS, b=B), tuple(groups))


def _gate(name, function, filament, bindings, out, run, nominal, constants=(), theta=0.1, mode="signed"):
    return GateSpec(
        name=name,
        filament=filament,
        inputs=tuple(bindings),
        bindings=bindings,
        readout=ReadoutSpec(tuple(out), theta, 1.0, mode),
        run=run,
        constants=tuple(constants),
        function=function,
        nominal=nominal,
    )


def nominal_gates() -> dict:
    """Uncalibrated layouts (thresholds at their nominal values)."""
    f_u = _unforced_filament()
    g = {}
    g["AND_u"] = _gate(
        "AND_u", "AND", f_u, {"a": (_pulse(10),), "b": (_pulse(13),)}, (11, 12), UNFORCED_RUN,
        {"input_cells": {"a": [8], "b": [15]}, "output_cells": [11, 12]},
    )
    g["OR_u"] = _gate(
        "OR_u", "OR", f_u, {"a": (_pulse(9),), "b": (_pulse(11),)}, (10,), UNFORCED_RUN,
        {"input_cells": {"a": [9], "b": [11]}, "output_cells": [10]},
    )
    # A -V0 auxiliary can only pull its neighbours negative, so the output is
    # read as |V|: the lone auxiliary gives a large |V10|, an input cancels it.
    g["NOT_u"] = _gate(
        "NOT_u", "NOT", f_u, {"a": (_pulse(11),)}, (10,), UNFORCED_RUN,
        {"input_cells": {"a": [11]}, "output_cells": [10], "constant_cells": [9]},
        constants=(_pulse(9, -1.0),), mode="magnitude",
    )
    f_f = _forced_filament()
    g["AND_f"] = _gate(
        "AND_f", "AND", f_f, {"a": (_sine([10]),), "b": (_sine([12]),)}, (11,), FORCED_RUN,
        {"input_cells": {"a": [8], "b": [14]}, "output_cells": [11]},
    )
    g["XOR_f"] = _gate(
        "XOR_f", "XOR", f_f, {"a": (_sine([11]),), "b": (_sine([13], math.pi),)}, (12,), FORCED_RUN,
        {"input_cells": {"a": [10], "b": [14]}, "output_cells": [12]},
    )
    carry = _gate(
        "HALFADDER_f.carry", "AND", f_f, {"a": (_sine([10]),), "b": (_sine([12]),)}, (11,), FORCED_RUN,
        {"input_cells": {"a": [8], "b": [14]}, "output_cells": [11]},
    )
    total = _gate(
        "HALFADDER_f.sum", "XOR", f_f, {"a": (_sine([11], math.pi),), "b": (_sine([13]),)}, (12,), FORCED_RUN,
        {"input_cells": {"a": [10], "b": [14]}, "output_cells": [12]},
    )
    g["HALFADDER_f"] = ParallelGate("HALFADDER_f", ("a", "b"), (("carry", carry), ("sum", total)))
    f_l = _forced_filament(45, [(10, 19), (21, 30)])
    g["XOR_f_lumped"] = _gate(
        "XOR_f_lumped", "XOR", f_l,
        {"a": (_sine(range(10, 20)),), "b": (_sine(range(21, 31), math.pi),)}, (20,), FORCED_RUN,
        {"input_cells": {"a": [8, 17], "b": [23, 32]}, "output_cells": [20]},
        theta=0.3,
    )
    return g


def cascade_from(gates: dict) -> CascadeSpec:
    """XOR as AND(NOT(AND(a, b)), OR(a, b)) with ideal re-amplification."""
    return CascadeSpec(
        "XOR_u_cascade",
        ("a", "b"),
        (
            CascadeStage("and1", gates["AND_u"], {"a": "a", "b": "b"}),
            CascadeStage("not", gates["NOT_u"], {"a": "and1"}),
            CascadeStage("or", gates["OR_u"], {"a": "a", "b": "b"}),
            CascadeStage("and2", gates["AND_u"], {"a": "or", "b": "not"}),
        ),
    )


def calibrate_library(free=("threshold",)) -> dict:
    """Calibrate every nominal gate; returns the calibrated library."""
    out = {}
    for name, gate in nominal_gates().items():
        if isinstance(gate, ParallelGate):
            parts = tuple((k, calibrate_gate(g, free)[0]) for k, g in gate.outputs)
            out[name] = ParallelGate(gate.name, gate.inputs, parts)
        else:
            out[name] = calibrate_gate(gate, free)[0]
    out["XOR_u_cascade"] = cascade_from(out)
    return {k: out[k] for k in LIBRARY_ORDER}


def library_dict(gate) -> dict:
    if isinstance(gate, CascadeSpec):
        return {
            "name": gate.name,
            "inputs": list(gate.inputs),
            "stages": [{"name": s.name, "gate": s.gate.name, "wiring": dict(s.wiring)} for s in gate.stages],
        }
    return gate_to_dict(gate)


def write_library(lib: dict, directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, gate in lib.items():
        text = json.dumps(library_dict(gate), indent=2, sort_keys=False) + "\n"
        (directory / f"{name}.json").write_text(text)


def load_library_dict(name: str) -> dict:
    path = resources.files("actin_rlc").joinpath("data", "gates", f"{name}.json")
    return json.loads(path.read_text())


@lru_cache(maxsize=1)
def _cached_library():
    lib: dict = {}
    for name in LIBRARY_ORDER:
        lib[name] = gate_from_dict(load_library_dict(name), name, library=lib)
    return lib


def builtin_gate_library() -> dict:
    """Shipped, calibrated gate configurations keyed by name."""
    return dict(_cached_library())
