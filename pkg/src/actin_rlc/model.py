"""Lattice model of the filament: state, nonlinear charge map, right-hand side.

The evolved variables are the charge-like ``W = V - b V**2`` and its time
derivative ``U``.  Per node ``n``::

    L C0 dU/dt = V[n+1] + V[n-1] - 2 V[n] - R1 C0 U[n] - R2 C0 (2 U[n] - U[n+1] - U[n-1])

with grounded ends (phantom neighbours at ``V = U = 0``).  Time is measured
in ``time_unit`` seconds, nanoseconds by default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Protocol

import numpy as np

from .errors import ConfigError, NonlinearityDomainError
from .params import CellParams, lump_cell_params


class Waveform(Protocol):
    def value(self, t: float) -> float: ...

    def derivative(self, t: float) -> float: ...


def charge_map(v, b):
    """``W = V - b V**2``, the capacitor charge divided by ``C0``."""
    return v - b * v * v


def invert_charge_map(w, b, *, time_ns=None):
    """Invert :func:`charge_map` on the branch through the origin.

    Works on scalars and arrays.  Raises :class:`NonlinearityDomainError`
    when ``w > 1/(4b)``; for arrays the first offending index is reported as
    a 1-based cell number.
    """
    if b == 0:
        return w if np.ndim(w) else float(w)
    disc = 1.0 - 4.0 * b * np.asarray(w, dtype=float)
    if np.any(disc < 0) or np.any(np.isnan(disc)):
        bad = np.flatnonzero(~(disc >= 0))
        cell = int(bad[0]) + 1 if np.ndim(w) else None
        raise NonlinearityDomainError(
            f"nonlinearity domain exceeded: w > 1/(4b) = {1 / (4 * b):.6g}", time_ns=time_ns, cell=cell
        )
    # 2w / (1 + sqrt(disc)) avoids cancellation for small w.
    v = 2.0 * np.asarray(w, dtype=float) / (1.0 + np.sqrt(disc))
    return v if np.ndim(w) else float(v)


def charge_map_slope_inverse(w, b):
    """dV/dW evaluated on the principal branch."""
    if b == 0:
        return np.ones_like(np.asarray(w, dtype=float))
    return 1.0 / np.sqrt(1.0 - 4.0 * b * np.asarray(w, dtype=float))


@dataclass(frozen=True)
class FilamentConfig:
    """A chain of ``n_cells`` monomers, some possibly merged into lumped nodes.

    ``lumped_groups`` lists inclusive 1-based monomer ranges ``(lo, hi)``; each
    range becomes a single node with :func:`lump_cell_params` applied.  All
    other monomers are nodes of their own.  ``time_unit`` is the length of one
    model time unit in seconds.
    """

    n_cells: int
    params: CellParams
    lumped_groups: tuple[tuple[int, int], ...] = ()
    time_unit: float = 1e-9
    boundary: str = "grounded"

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ConfigError("n_cells must be an integer >= 2", "filament.n_cells")
        if self.boundary != "grounded":
            raise ConfigError(f"unsupported boundary {self.boundary!r}", "filament.boundary")
        if not self.time_unit > 0:
            raise ConfigError("time_unit must be positive", "filament.time_unit")
        groups = tuple(sorted((int(lo), int(hi)) for lo, hi in self.lumped_groups))
        prev_hi = 0
        for i, (lo, hi) in enumerate(groups):
            if not 1 <= lo <= hi <= self.n_cells:
                raise ConfigError(f"group {lo}-{hi} outside 1..{self.n_cells}", f"filament.lumped_groups[{i}]")
            if lo <= prev_hi:
                raise ConfigError("lumped groups overlap", f"filament.lumped_groups[{i}]")
            prev_hi = hi
        object.__setattr__(self, "lumped_groups", groups)
        nodes = []
        cell = 1
        for lo, hi in groups:
            nodes.extend((c, c) for c in range(cell, lo))
            nodes.append((lo, hi))
            cell = hi + 1
        nodes.extend((c, c) for c in range(cell, self.n_cells + 1))
        if len(nodes) < 2:
            raise ConfigError("filament must have at least two nodes", "filament.lumped_groups")
        object.__setattr__(self, "_nodes", tuple(nodes))
        lookup = np.empty(self.n_cells + 1, dtype=int)
        lookup[0] = -1
        for k, (lo, hi) in enumerate(nodes):
            lookup[lo : hi + 1] = k
        object.__setattr__(self, "_lookup", lookup)

        node_params = [
            self.params if lo == hi else lump_cell_params(self.params, hi - lo + 1) for lo, hi in nodes
        ]
        tu = self.time_unit
        L = np.array([p.L for p in node_params])
        C0 = np.array([p.C0 for p in node_params])
        R1 = np.array([p.R1 for p in node_params])
        R2 = np.array([p.R2 for p in node_params])
        # Coefficients in model time units; arrays are made read-only.
        for name, arr in (("inertia", L * C0 / tu**2), ("damping", R1 * C0 / tu), ("coupling", R2 * C0 / tu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def b(self) -> float:
        return self.params.b

    @property
    def nodes(self) -> tuple[tuple[int, int], ...]:
        """Monomer range ``(lo, hi)`` covered by each node."""
        return self._nodes

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    def node_of(self, cell: int) -> int:
        """0-based node index holding 1-based monomer ``cell``."""
        if not 1 <= cell <= self.n_cells:
            raise ConfigError(f"cell {cell} outside 1..{self.n_cells}")
        return int(self._lookup[cell])

    def node_labels(self) -> list[str]:
        return [f"V{lo}" if lo == hi else f"V{lo}-{hi}" for lo, hi in self._nodes]

    def node_positions(self) -> np.ndarray:
        """Centre of each node in monomer units (cell 1 at position 1)."""
        return np.array([(lo + hi) / 2 for lo, hi in self._nodes], dtype=float)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "n_cells": self.n_cells,
            "b": p.b,
            "params": {"R1_ohm": p.R1, "R2_ohm": p.R2, "L_henry": p.L, "C0_farad": p.C0},
            "lumped_groups": [{"cells": [lo, hi]} for lo, hi in self.lumped_groups],
            "time_unit_s": self.time_unit,
            "boundary": self.boundary,
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def fingerprint(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class LatticeState:
    """Per-node ``W`` (V) and ``U = dW/dt`` (V per time unit) at time ``t``.

    ``clamps`` maps 0-based node indices to waveforms imposing the node
    voltage; the integrator keeps clamped entries of ``W``/``U`` in sync.
    """

    W: np.ndarray
    U: np.ndarray
    t: float = 0.0
    clamps: Mapping[int, Waveform] = field(default_factory=dict)

    def __post_init__(self):
        self.W = np.array(self.W, dtype=float)
        self.U = np.array(self.U, dtype=float)
        if self.W.ndim != 1 or self.W.shape != self.U.shape or self.W.size < 2:
            raise ConfigError("W and U must be 1-D arrays of equal length >= 2")
        self.clamps = MappingProxyType(dict(self.clamps))

    @classmethod
    def zeros(cls, n_nodes: int, clamps=None) -> "LatticeState":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes), 0.0, clamps or {})

    def copy(self) -> "LatticeState":
        return LatticeState(self.W.copy(), self.U.copy(), self.t, self.clamps)

    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.W.size, dtype=bool)
        mask[list(self.clamps)] = False
        return mask

    def sync_clamps(self, b: float) -> None:
        """Overwrite clamped entries with the waveform values at ``self.t``."""
        for k, wf in self.clamps.items():
            v = wf.value(self.t)
            self.W[k] = charge_map(v, b)
            self.U[k] = wf.derivative(self.t) * (1.0 - 2.0 * b * v)

    def voltages(self, b: float) -> np.ndarray:
        V = invert_charge_map(self.W, b, time_ns=self.t)
        V = np.array(V, dtype=float)
        for k, wf in self.clamps.items():
            V[k] = wf.value(self.t)
        return V


def clamp_values(clamps: Mapping[int, Waveform], t: float, b: float):
    """Imposed ``(V, U)`` of each clamped node at time ``t``."""
    out = {}
    for k, wf in clamps.items():
        v = wf.value(t)
        out[k] = (v, wf.derivative(t) * (1.0 - 2.0 * b * v))
    return out


def _force(V, U, config: FilamentConfig):
    """Right-hand side of ``L C0 dU/dt`` given node voltages and currents."""
    Vp = np.zeros(V.size + 2)
    Vp[1:-1] = V
    Up = np.zeros(U.size + 2)
    Up[1:-1] = U
    lap_v = Vp[2:] + Vp[:-2] - 2.0 * V
    lap_u = Up[2:] + Up[:-2] - 2.0 * U
    return lap_v - config.damping * U + config.coupling * lap_u


def rhs_first_order(state: LatticeState, config: FilamentConfig, t: float | None = None):
    """Return ``(dW, dU)``; clamped nodes receive zero derivatives.

    Clamped nodes still feed their imposed voltage and analytic ``dW/dt`` to
    their neighbours.
    """
    t = state.t if t is None else t
    if state.W.size != config.n_nodes:
        raise ConfigError(f"state has {state.W.size} nodes, filament has {config.n_nodes}")
    b = config.b
    V = np.array(invert_charge_map(state.W, b, time_ns=t), dtype=float)
    U = state.U.copy()
    for k, (v, u) in clamp_values(state.clamps, t, b).items():
        V[k] = v
        U[k] = u
    dU = _force(V, U, config) / config.inertia
    dW = U.copy()
    if state.clamps:
        idx = list(state.clamps)
        dW[idx] = 0.0
        dU[idx] = 0.0
    return dW, dU
