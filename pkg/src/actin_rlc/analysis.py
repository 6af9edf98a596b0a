"""Observables extracted from traces: arrivals, speed, energy, rasters."""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .model import FilamentConfig, LatticeState
from .trace import Trace

MONOMER_LENGTH = 5.4e-9  # m


class InsufficientDataError(DomainError):
    pass


def _check_theta(theta):
    if not 0 < theta < 1:
        raise DomainError(f"threshold fraction must lie in (0, 1), got {theta!r}")


def arrival_times(trace: Trace, theta: float, v0: float = 1.0) -> list[float | None]:
    """First sample time at which each node reaches ``theta * v0`` (or None)."""
    _check_theta(theta)
    hit = trace.voltages >= theta * v0
    out: list[float | None] = []
    for k in range(trace.n_nodes):
        idx = np.flatnonzero(hit[:, k])
        out.append(float(trace.times[idx[0]]) if idx.size else None)
    return out


def estimate_speed(
    trace: Trace, theta: float, v0: float = 1.0, monomer_length: float = MONOMER_LENGTH
) -> float:
    """Propagation speed in m/s from a least-squares fit of arrival time vs. position."""
    arrivals = arrival_times(trace, theta, v0)
    pts = [(x, t) for x, t in zip(trace.positions, arrivals) if t is not None]
    return speed_from_arrivals([p[0] for p in pts], [p[1] for p in pts], monomer_length)


def speed_from_arrivals(positions, times_ns, monomer_length: float = MONOMER_LENGTH) -> float:
    x = np.asarray(positions, dtype=float) * monomer_length
    t = np.asarray(times_ns, dtype=float) * 1e-9
    if x.size < 2 or np.ptp(x) == 0:
        raise InsufficientDataError("need arrivals at two or more distinct cells")
    slope = np.polyfit(x, t, 1)[0]  # s/m
    if slope <= 0:
        raise InsufficientDataError("arrival times do not increase along the filament")
    return float(1.0 / slope)


def line_energy(state: LatticeState, config: FilamentConfig) -> float:
    """Quadratic energy of the linear (``b = 0``) line, in model units.

    ``E = sum 1/2 L C0 U**2 + 1/2 sum (V[n+1] - V[n])**2``; the second sum runs
    over every bond including the two bonds to the grounded phantom nodes.
    """
    V = state.voltages(config.b)
    Vp = np.zeros(V.size + 2)
    Vp[1:-1] = V
    kinetic = 0.5 * np.sum(config.inertia * state.U**2)
    potential = 0.5 * np.sum(np.diff(Vp) ** 2)
    return float(kinetic + potential)


def digitize_trace(trace: Trace, theta: float, v0: float = 1.0, magnitude: bool = False) -> np.ndarray:
    """Raster ``bits[node, sample]``: 1 where ``V >= theta * v0``.

    With ``magnitude=True`` the comparison uses ``|V|``.
    """
    _check_theta(theta)
    v = np.abs(trace.voltages) if magnitude else trace.voltages
    return (v >= theta * v0).T.astype(np.uint8)


def render_raster_pbm(raster) -> bytes:
    """Plain PBM (P1).  Rows are nodes, highest-numbered first; 1 is black."""
    r = np.asarray(raster)
    if r.ndim != 2 or r.size == 0:
        raise DomainError("raster must be a non-empty 2-D array")
    height, width = r.shape
    lines = [f"P1\n{width} {height}\n"]
    for row in r[::-1]:
        lines.append(" ".join("1" if x else "0" for x in row) + "\n")
    return "".join(lines).encode("ascii")


def parse_pbm(data: bytes) -> np.ndarray:
    """Inverse of :func:`render_raster_pbm` (plain P1 only; comments allowed)."""
    tokens = []
    for line in data.decode("ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P1":
        raise DomainError("not a plain PBM (P1) image")
    width, height = int(tokens[1]), int(tokens[2])
    body = "".join(tokens[3:])
    if len(body) != width * height or set(body) - {"0", "1"}:
        raise DomainError("PBM pixel data does not match its header")
    img = np.frombuffer(body.encode(), dtype=np.uint8).reshape(height, width) - ord("0")
    return img[::-1].copy()
