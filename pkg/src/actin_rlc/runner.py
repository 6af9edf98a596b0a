"""Simulation jobs and observables shared by the ``simulate`` and ``sweep`` commands."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .analysis import (
    MONOMER_LENGTH,
    InsufficientDataError,
    arrival_times,
    estimate_speed,
)
from .config import RunConfig
from .errors import ActinError, ConfigError, NumericalError
from .gates import GateSpec, input_combinations, output_level, separation_margin
from .integrator import RunSettings, run_simulation
from .model import FilamentConfig, fingerprint
from .stimuli import StimulusSpec, TanhStep
from .trace import Trace

ARRIVAL_THRESHOLD = 0.01  # fraction of v0 used for arrival times and speed


@dataclass(frozen=True)
class SimJob:
    filament: FilamentConfig
    stimuli: tuple[StimulusSpec, ...]
    run: RunSettings

    @property
    def key(self) -> str:
        return fingerprint(
            {
                "filament": self.filament.to_dict(),
                "stimuli": [s.to_dict() for s in self.stimuli],
                "run": self.run.to_dict(),
            }
        )

    def simulate(self) -> Trace:
        return run_simulation(self.filament, self.stimuli, self.run)


def bits_label(bits) -> str:
    return "".join(str(b) for b in bits)


def jobs_for(cfg: RunConfig) -> dict[str, SimJob]:
    """Simulations needed by ``cfg``, keyed by input label (``"run"`` without a gate).

    A single-filament gate without ``inputs`` expands to its full truth table.
    """
    extra = tuple(cfg.stimuli)
    if cfg.gate is None:
        return {"run": SimJob(cfg.filament, extra, cfg.run)}
    gate = cfg.gate
    if not isinstance(gate, GateSpec):
        raise ConfigError(f"{gate.name} is a composite gate; use the 'gate' command", "gate")
    combos = [cfg.gate_inputs] if cfg.gate_inputs is not None else input_combinations(len(gate.inputs))
    return {bits_label(c): SimJob(gate.filament, tuple(gate.stimuli_for(c)) + extra, gate.run) for c in combos}


def _run_job(job: SimJob):
    try:
        return job.simulate(), None
    except NumericalError as exc:
        return None, {"kind": "numerical", "message": str(exc)}
    except ActinError as exc:
        return None, {"kind": "config", "message": str(exc)}


def run_jobs(jobs: list[SimJob], workers: int = 1) -> dict[str, tuple[Trace | None, dict | None]]:
    """Run each distinct job once; results keyed by :attr:`SimJob.key`.

    Failures are returned as ``(None, {"kind", "message"})`` rather than raised.
    """
    unique: dict[str, SimJob] = {}
    for j in jobs:
        unique.setdefault(j.key, j)
    keys = list(unique)
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, [unique[k] for k in keys]))
    else:
        results = [_run_job(unique[k]) for k in keys]
    return dict(zip(keys, results))


def tanh_t0(stimuli) -> float | None:
    """Earliest step midpoint among tanh-step stimuli, if any."""
    t0s = [s.waveform.t0 for s in stimuli if isinstance(s.waveform, TanhStep)]
    return min(t0s) if t0s else None


def _speed(distance_m: float, dt_ns: float) -> float | None:
    return distance_m / (dt_ns * 1e-9) if dt_ns > 0 else None


def trace_observables(trace: Trace, stimuli, theta: float = ARRIVAL_THRESHOLD) -> dict:
    """Arrival times, regression speed, per-node two-point speeds and peaks.

    Two-point speeds take the travelled distance as the node position times
    the monomer length, timed both from t = 0 and from the tanh step midpoint.
    """
    arrivals = arrival_times(trace, theta)
    try:
        speed = estimate_speed(trace, theta)
    except InsufficientDataError:
        speed = None
    t0 = tanh_t0(stimuli)
    two_point = []
    for label, pos, t in zip(trace.labels, trace.positions, arrivals):
        if t is None:
            continue
        dist = float(pos) * MONOMER_LENGTH
        two_point.append(
            {
                "node": label,
                "arrival_ns": t,
                "speed_from_t_zero_m_per_s": _speed(dist, t),
                "speed_from_t0_m_per_s": None if t0 is None else _speed(dist, t - t0),
            }
        )
    return {
        "arrival_threshold_fraction": theta,
        "arrivals_ns": arrivals,
        "speed_m_per_s": speed,
        "step_t0_ns": t0,
        "two_point": two_point,
        "peak_v": [float(x) for x in trace.voltages.max(axis=0)],
    }


def gate_observables(gate: GateSpec, traces: dict[str, Trace]) -> dict:
    """Levels and bits per input combination; margins when all combinations ran."""
    ro = gate.readout
    rows = []
    levels = {}
    for label, tr in traces.items():
        bits = tuple(int(c) for c in label)
        lvl = output_level(tr, ro, gate.filament)
        levels[bits] = lvl
        rows.append(
            {
                "inputs": list(bits),
                "level": lvl,
                "bit": int(lvl >= ro.threshold_fraction * ro.v0),
                "expected": gate.expected(bits),
            }
        )
    out = {"name": gate.name, "threshold_fraction": ro.threshold_fraction, "rows": rows}
    combos = input_combinations(len(gate.inputs))
    if gate.function and set(levels) == set(combos):
        expected = {c: gate.expected(c) for c in combos}
        margin, lo_on, hi_off = separation_margin(levels, expected, ro.v0)
        theta = ro.threshold_fraction * ro.v0
        out["margin"] = margin
        out["threshold_margin"] = min(lo_on - theta, theta - hi_off) / ro.v0
    return out
