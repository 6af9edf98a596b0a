"""Logic gates built from interacting voltage pulses.

A :class:`GateSpec` places each logical input on one or more stimulus sites
of a filament, runs the simulation and reads one output bit from a set of
cells.  :class:`ParallelGate` evaluates several single-output gates on the
same input bits (the half-adder), and :class:`CascadeSpec` chains gates with
ideal re-amplification between stages.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

import numpy as np

from .analysis import digitize_trace
from .errors import CalibrationError, ConfigError
from .integrator import RunSettings, run_simulation
from .model import FilamentConfig
from .stimuli import StimulusSpec
from .trace import Trace

log = logging.getLogger(__name__)

BOOLEAN_FUNCTIONS = {
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "NOT": lambda a: 1 - a,
    "BUF": lambda a: a,
}


def input_combinations(n_inputs: int) -> list[tuple[int, ...]]:
    """Canonical order: first input varies fastest (00, 10, 01, 11)."""
    return [tuple(reversed(c)) for c in itertools.product((0, 1), repeat=n_inputs)]


@dataclass(frozen=True)
class ReadoutSpec:
    """Output rule: every listed cell must reach ``threshold_fraction * v0``.

    The level of a cell is the maximum of its voltage (or ``|V|`` when
    ``mode="magnitude"``) over the trailing ``window`` ns of the run.
    """

    cells: tuple[int, ...]
    threshold_fraction: float = 0.1
    window: float = 1.0
    mode: str = "signed"
    v0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if not self.cells:
            raise ConfigError("readout needs at least one cell", "readout.cells")
        if len(set(self.cells)) != len(self.cells):
            raise ConfigError("readout cells must be distinct", "readout.cells")
        if not 0 < self.threshold_fraction < 1:
            raise ConfigError("threshold_fraction must lie in (0, 1)", "readout.threshold_fraction")
        if not self.window > 0:
            raise ConfigError("window must be positive", "readout.window_ns")
        if self.mode not in ("signed", "magnitude"):
            raise ConfigError(f"unknown readout mode {self.mode!r}", "readout.mode")

    @property
    def magnitude(self) -> bool:
        return self.mode == "magnitude"


def output_level(trace: Trace, readout: ReadoutSpec, config: FilamentConfig) -> float:
    """Analog output: the weakest readout cell's windowed maximum, in volts."""
    t_end = trace.times[-1]
    if readout.window > t_end - trace.times[0] + 1e-12:
        raise ConfigError("readout window longer than the trace", "readout.window_ns")
    mask = trace.times >= t_end - readout.window - 1e-9
    v = trace.voltages[mask]
    if readout.magnitude:
        v = np.abs(v)
    return float(min(v[:, config.node_of(c)].max() for c in readout.cells))


def read_output_bits(trace: Trace, readout: ReadoutSpec, config: FilamentConfig) -> int:
    level = output_level(trace, readout, config)
    return int(level >= readout.threshold_fraction * readout.v0)


@dataclass(frozen=True)
class GateSpec:
    """One filament, one output bit.

    ``bindings`` maps each input name to the stimuli applied when that input
    is 1; a 0 input omits them.  ``constants`` are applied on every run.
    ``function`` names the intended Boolean function (used by calibration).
    """

    name: str
    filament: FilamentConfig
    inputs: tuple[str, ...]
    bindings: Mapping[str, tuple[StimulusSpec, ...]]
    readout: ReadoutSpec
    run: RunSettings
    constants: tuple[StimulusSpec, ...] = ()
    function: str = ""
    nominal: Mapping = field(default_factory=dict, compare=False)
    calibration: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "bindings", {k: tuple(v) for k, v in self.bindings.items()})
        object.__setattr__(self, "constants", tuple(self.constants))
        if not 1 <= len(self.inputs) <= 2:
            raise ConfigError("a gate has one or two inputs", f"{self.name}.inputs")
        if set(self.bindings) != set(self.inputs):
            raise ConfigError("bindings must cover exactly the declared inputs", f"{self.name}.bindings")
        if self.function and self.function not in BOOLEAN_FUNCTIONS:
            raise ConfigError(f"unknown function {self.function!r}", f"{self.name}.function")
        seen: dict[int, str] = {}
        groups = [(k, s) for k in self.inputs for s in self.bindings[k]] + [("constants", s) for s in self.constants]
        for owner, spec in groups:
            for c in spec.cells:
                node = self.filament.node_of(c)
                if node in seen and seen[node] != owner:
                    raise ConfigError(f"cell {c} bound by both {seen[node]} and {owner}", f"{self.name}.bindings")
                seen[node] = owner
        for c in self.readout.cells:
            if self.filament.node_of(c) in seen:
                raise ConfigError(f"readout cell {c} is also a stimulus site", f"{self.name}.readout.cells")
        if self.readout.window > self.run.t_end:
            raise ConfigError("readout window exceeds t_end", f"{self.name}.readout.window_ns")

    def stimulus_nodes(self) -> set[int]:
        """0-based nodes touched by any binding or constant."""
        specs = list(self.constants) + [s for k in self.inputs for s in self.bindings[k]]
        return {self.filament.node_of(c) for s in specs for c in s.cells}

    def stimuli_for(self, bits: Sequence[int]) -> list[StimulusSpec]:
        if len(bits) != len(self.inputs):
            raise ConfigError(f"{self.name} expects {len(self.inputs)} input bits, got {len(bits)}")
        specs = list(self.constants)
        for name, bit in zip(self.inputs, bits):
            if bit not in (0, 1):
                raise ConfigError(f"input bits must be 0 or 1, got {bit!r}")
            if bit:
                specs.extend(self.bindings[name])
        return specs

    def expected(self, bits: Sequence[int]) -> int | None:
        return BOOLEAN_FUNCTIONS[self.function](*bits) if self.function else None


@dataclass(frozen=True)
class ParallelGate:
    """Several gates evaluated on the same input bits, one output bit each."""

    name: str
    inputs: tuple[str, ...]
    outputs: tuple[tuple[str, GateSpec], ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple((k, g) for k, g in self.outputs))
        for label, gate in self.outputs:
            if gate.inputs != self.inputs:
                raise ConfigError(f"output {label!r} gate inputs differ from {self.inputs}", self.name)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.outputs)


AnyGate = Union[GateSpec, ParallelGate]


@dataclass(frozen=True)
class GateRun:
    inputs: tuple[int, ...]
    bits: tuple[int, ...]
    levels: tuple[float, ...]
    traces: tuple[Trace, ...] = field(default=(), repr=False, compare=False)


def _simulate(gate: GateSpec, bits, run: RunSettings | None = None) -> Trace:
    return run_simulation(gate.filament, gate.stimuli_for(bits), run or gate.run)


def evaluate_gate(gate: AnyGate, bits: Sequence[int], run: RunSettings | None = None) -> GateRun:
    """Simulate ``gate`` for one input combination, keeping levels and traces."""
    bits = tuple(int(x) for x in bits)
    parts = gate.outputs if isinstance(gate, ParallelGate) else (("out", gate),)
    out_bits, levels, traces = [], [], []
    for _, g in parts:
        tr = _simulate(g, bits, run)
        lvl = output_level(tr, g.readout, g.filament)
        out_bits.append(int(lvl >= g.readout.threshold_fraction * g.readout.v0))
        levels.append(lvl)
        traces.append(tr)
    return GateRun(bits, tuple(out_bits), tuple(levels), tuple(traces))


def run_gate(gate: AnyGate, inputs: Sequence[int]) -> tuple[int, ...]:
    """Output bits of ``gate`` for ``inputs`` (``(carry, sum)`` for the half-adder)."""
    return evaluate_gate(gate, inputs).bits


@dataclass(frozen=True)
class TruthTable:
    name: str
    rows: tuple[GateRun, ...]
    output_names: tuple[str, ...] = ("out",)

    def column(self, k: int = 0) -> tuple[int, ...]:
        return tuple(r.bits[k] for r in self.rows)

    def levels(self, k: int = 0) -> tuple[float, ...]:
        return tuple(r.levels[k] for r in self.rows)


def _eval_for_pool(args):
    gate, bits, run = args
    r = evaluate_gate(gate, bits, run)
    return GateRun(r.inputs, r.bits, r.levels)


def truth_table(
    gate: AnyGate, workers: int = 1, keep_traces: bool = False, run: RunSettings | None = None
) -> TruthTable:
    """Run every input combination in canonical order.

    ``workers > 1`` evaluates the combinations in separate processes; traces
    are then dropped.
    """
    combos = input_combinations(len(gate.inputs))
    names = gate.output_names if isinstance(gate, ParallelGate) else ("out",)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_eval_for_pool, [(gate, c, run) for c in combos]))
    else:
        rows = []
        for c in combos:
            r = evaluate_gate(gate, c, run)
            rows.append(r if keep_traces else GateRun(r.inputs, r.bits, r.levels))
    return TruthTable(gate.name, tuple(rows), names)


# -- cascades ----------------------------------------------------------------


@dataclass(frozen=True)
class CascadeStage:
    """``wiring`` maps each gate input to a cascade input name or an earlier stage name."""

    name: str
    gate: GateSpec
    wiring: Mapping[str, str]


@dataclass(frozen=True)
class CascadeSpec:
    name: str
    inputs: tuple[str, ...]
    stages: tuple[CascadeStage, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ConfigError("cascade needs at least one stage", self.name)
        known = set(self.inputs)
        for i, st in enumerate(self.stages):
            if set(st.wiring) != set(st.gate.inputs):
                raise ConfigError(f"stage {st.name!r} wiring must cover {st.gate.inputs}", f"{self.name}.stages[{i}]")
            for src in st.wiring.values():
                if src not in known:
                    raise ConfigError(f"stage {st.name!r} reads {src!r} before it is produced", f"{self.name}.stages[{i}]")
            if st.name in known:
                raise ConfigError(f"duplicate signal name {st.name!r}", f"{self.name}.stages[{i}]")
            known.add(st.name)


@dataclass(frozen=True)
class CascadeRun:
    inputs: tuple[int, ...]
    signals: Mapping[str, int]
    levels: Mapping[str, float]
    traces: Mapping[str, Trace] = field(default_factory=dict, repr=False, compare=False)

    @property
    def output(self) -> int:
        return list(self.signals.values())[-1]


def evaluate_cascade(cascade: CascadeSpec, inputs: Sequence[int]) -> CascadeRun:
    """Run stages in order; each stage's inputs are re-injected at full amplitude."""
    if len(inputs) != len(cascade.inputs):
        raise ConfigError(f"{cascade.name} expects {len(cascade.inputs)} inputs")
    values = dict(zip(cascade.inputs, (int(x) for x in inputs)))
    signals, levels, traces = {}, {}, {}
    for st in cascade.stages:
        bits = [values[st.wiring[k]] for k in st.gate.inputs]
        r = evaluate_gate(st.gate, bits)
        values[st.name] = signals[st.name] = r.bits[0]
        levels[st.name] = r.levels[0]
        traces[st.name] = r.traces[0]
    return CascadeRun(tuple(int(x) for x in inputs), signals, levels, traces)


def run_cascade(cascade: CascadeSpec, inputs: Sequence[int]) -> int:
    return evaluate_cascade(cascade, inputs).output


def cascade_truth_table(cascade: CascadeSpec) -> list[CascadeRun]:
    return [evaluate_cascade(cascade, c) for c in input_combinations(len(cascade.inputs))]


# -- calibration ---------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationReport:
    margin: float  # (min ON level - max OFF level) / v0
    threshold_fraction: float
    output_cells: tuple[int, ...]
    levels: Mapping[tuple[int, ...], float]  # per input combination, chosen cells
    candidates: int


def separation_margin(levels: Mapping[tuple[int, ...], float], expected: Mapping[tuple[int, ...], int], v0=1.0):
    on = [levels[c] for c, e in expected.items() if e]
    off = [levels[c] for c, e in expected.items() if not e]
    lo_on = min(on) if on else np.inf
    hi_off = max(off) if off else -np.inf
    return (lo_on - hi_off) / v0, lo_on, hi_off


def _candidate_cells(nominal: tuple[int, ...], n_cells: int, shift: int):
    ranges = [range(max(1, c - shift), min(n_cells, c + shift) + 1) for c in nominal]
    for cells in itertools.product(*ranges):
        if len(set(cells)) == len(cells):
            yield tuple(cells)


def calibrate_gate(
    gate: GateSpec,
    free: Sequence[str] = ("threshold", "output_cells"),
    max_shift: int = 2,
) -> tuple[GateSpec, CalibrationReport]:
    """Grid-search output cells (within ``max_shift`` of ``nominal``) and threshold.

    Every candidate is scored by its separation margin; the incumbent wins
    ties and keeps its threshold when that threshold already separates.
    Otherwise the threshold is placed midway between the ON and OFF levels.
    """
    if not gate.function:
        raise ConfigError(f"gate {gate.name} has no Boolean function to calibrate against")
    free = set(free)
    unknown = free - {"threshold", "output_cells"}
    if unknown:
        raise ConfigError(f"unknown calibration parameters {sorted(unknown)}")
    combos = input_combinations(len(gate.inputs))
    expected = {c: gate.expected(c) for c in combos}
    traces = {c: _simulate(gate, c) for c in combos}
    ro = gate.readout
    v0 = ro.v0
    nominal = tuple(gate.nominal.get("output_cells", ro.cells)) if "output_cells" in free else ro.cells
    candidates = [ro.cells]
    if "output_cells" in free:
        sites = gate.stimulus_nodes()
        for cells in _candidate_cells(nominal, gate.filament.n_cells, max_shift):
            nodes = {gate.filament.node_of(c) for c in cells}
            if cells != ro.cells and not nodes & sites and len(nodes) == len(cells):
                candidates.append(cells)

    best = None
    table = {}
    for cells in candidates:
        r = replace(ro, cells=cells)
        levels = {c: output_level(traces[c], r, gate.filament) for c in combos}
        margin, lo_on, hi_off = separation_margin(levels, expected, v0)
        table[cells] = levels
        if "threshold" in free:
            theta = ro.threshold_fraction
            if not (hi_off < theta * v0 <= lo_on):
                theta = 0.5 * (lo_on + hi_off) / v0
        else:
            theta = ro.threshold_fraction
            if not (hi_off < theta * v0 <= lo_on):
                continue
        if not 0 < theta < 1:
            continue
        if best is None or margin > best[0]:
            best = (margin, cells, theta, levels)
    if best is None or best[0] <= 0:
        raise CalibrationError(f"no separating configuration for {gate.name}", levels=table)
    margin, cells, theta, levels = best
    calibrated = replace(
        gate,
        readout=replace(ro, cells=cells, threshold_fraction=float(theta)),
        calibration={
            "margin": float(margin),
            "threshold_fraction": float(theta),
            "output_cells": list(cells),
            "levels": {"".join(map(str, c)): float(v) for c, v in levels.items()},
        },
    )
    log.info("calibrated %s: cells=%s theta=%.4f margin=%.4f", gate.name, cells, theta, margin)
    return calibrated, CalibrationReport(float(margin), float(theta), cells, levels, len(candidates))


def gate_margin(gate: GateSpec) -> float:
    """Separation margin of ``gate`` as configured (no search)."""
    combos = input_combinations(len(gate.inputs))
    levels = {c: output_level(_simulate(gate, c), gate.readout, gate.filament) for c in combos}
    return separation_margin(levels, {c: gate.expected(c) for c in combos}, gate.readout.v0)[0]


def dt_sensitivity(gate: AnyGate, factor: int = 2) -> float:
    """Largest change of any analog output level when ``dt`` is divided by ``factor``."""
    parts = gate.outputs if isinstance(gate, ParallelGate) else (("out", gate),)
    worst = 0.0
    for _, g in parts:
        fine = g.run.with_dt(g.run.dt / factor)
        for c in input_combinations(len(g.inputs)):
            a = output_level(_simulate(g, c), g.readout, g.filament)
            b = output_level(_simulate(g, c, fine), g.readout, g.filament)
            worst = max(worst, abs(a - b))
    return worst


def gate_raster(trace: Trace, readout: ReadoutSpec) -> np.ndarray:
    return digitize_trace(trace, readout.threshold_fraction, readout.v0, readout.magnitude)
