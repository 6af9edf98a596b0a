"""Input excitations: tanh steps, sinusoids, constants, and their placement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, DomainError
from .model import FilamentConfig, LatticeState, charge_map


def eval_tanh_step(t, t0):
    """Unit step that starts at 1 and falls to 0 around ``t0``."""
    return 0.5 - 0.5 * np.tanh(np.subtract(t, t0))


def eval_sine(t, amplitude, period, phase):
    if not period > 0:
        raise DomainError(f"period must be positive, got {period!r}")
    return amplitude * np.sin(2.0 * math.pi * np.asarray(t) / period + phase)


@dataclass(frozen=True)
class TanhStep:
    t0: float = 3.0
    scale: float = 1.0
    kind = "tanh_step"

    def value(self, t):
        return self.scale * eval_tanh_step(t, self.t0)

    def derivative(self, t):
        return -0.5 * self.scale / np.cosh(np.subtract(t, self.t0)) ** 2

    def to_dict(self):
        return {"kind": self.kind, "t0_ns": self.t0}


@dataclass(frozen=True)
class Sine:
    amplitude: float = 1.0
    period: float = 1.0
    phase: float = 0.0
    scale: float = 1.0
    kind = "sine"

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError(f"period must be positive, got {self.period!r}")

    def value(self, t):
        return self.scale * eval_sine(t, self.amplitude, self.period, self.phase)

    def derivative(self, t):
        w = 2.0 * math.pi / self.period
        return self.scale * self.amplitude * w * np.cos(w * np.asarray(t) + self.phase)

    def to_dict(self):
        return {
            "kind": self.kind,
            "amplitude": self.amplitude,
            "period_ns": self.period,
            "phase_rad": self.phase,
        }


@dataclass(frozen=True)
class Constant:
    v: float = 1.0
    scale: float = 1.0
    kind = "constant"

    def value(self, t):
        return self.scale * self.v + 0.0 * np.asarray(t, dtype=float)

    def derivative(self, t):
        return 0.0 * np.asarray(t, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "value": self.v}


Waveform = Union[TanhStep, Sine, Constant]


@dataclass(frozen=True)
class StimulusSpec:
    """Waveform applied to 1-based ``cells``.

    ``mode="initial"`` sets the voltage at t=0 (with zero ``dW/dt``) and lets
    the lattice evolve freely; ``mode="clamp"`` imposes the waveform for the
    whole run.
    """

    cells: tuple[int, ...]
    mode: str
    waveform: Waveform

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(c) for c in self.cells))
        if self.mode not in ("initial", "clamp"):
            raise ConfigError(f"mode must be 'initial' or 'clamp', got {self.mode!r}")
        if not self.cells:
            raise ConfigError("stimulus needs at least one cell")

    def to_dict(self):
        return {
            "cells": list(self.cells),
            "mode": self.mode,
            "waveform": self.waveform.to_dict(),
            "scale": self.waveform.scale,
        }


def apply_stimuli(config: FilamentConfig, specs: Sequence[StimulusSpec]):
    """Build the initial state and the clamp schedule ``{node: waveform}``.

    Every node may be targeted by at most one stimulus.
    """
    b = config.b
    W = np.zeros(config.n_nodes)
    owner: dict[int, int] = {}
    clamps = {}
    for i, spec in enumerate(specs):
        nodes = []
        for c in spec.cells:
            if not 1 <= c <= config.n_cells:
                raise ConfigError(f"cell {c} outside 1..{config.n_cells}", f"stimuli[{i}].cells")
            k = config.node_of(c)
            if k not in nodes:
                nodes.append(k)
        for k in nodes:
            if k in owner:
                raise ConfigError(
                    f"node {config.node_labels()[k]} already driven by stimuli[{owner[k]}]",
                    f"stimuli[{i}].cells",
                )
            owner[k] = i
            if spec.mode == "clamp":
                clamps[k] = spec.waveform
            else:
                v = float(spec.waveform.value(0.0))
                if b > 0 and v > 1.0 / (2.0 * b):
                    raise DomainError(f"initial voltage {v} beyond charge-map branch 1/(2b) = {1 / (2 * b)}")
                W[k] = charge_map(v, b)
    state = LatticeState(W, np.zeros(config.n_nodes), 0.0, clamps)
    state.sync_clamps(b)
    return state, dict(sorted(clamps.items()))
