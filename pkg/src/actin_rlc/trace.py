"""Sampled output of a simulation run."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Trace:
    """Node voltages ``voltages[sample, node]`` at ``times`` (ns).

    ``labels`` name the nodes (``V1``, ``V8-17`` ...); ``positions`` are node
    centres in monomer units.
    """

    times: np.ndarray
    voltages: np.ndarray
    labels: tuple[str, ...]
    positions: np.ndarray
    config_fingerprint: str = ""
    settings_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        volts = np.asarray(self.voltages, dtype=float)
        if volts.ndim != 2 or volts.shape[0] != times.size or volts.shape[1] != len(self.labels):
            raise ConfigError("trace dimensions are inconsistent")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ConfigError("trace times must be strictly increasing")
        times.setflags(write=False)
        volts.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "voltages", volts)
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))

    @property
    def n_nodes(self) -> int:
        return self.voltages.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.voltages[:, self.labels.index(label)]
