"""Time stepping for the lattice equations.

The physical parameters make the system extremely stiff: the current
relaxation rate ``R1/L`` is ~3.6e9 per ns while the observed dynamics evolve
over nanoseconds.  The default method is therefore the implicit trapezoidal
rule, solved by Newton iteration with a tridiagonal Jacobian.  Classical RK4
is kept as a reference for non-stiff test configurations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg.lapack import dgtsv

from .errors import ConfigError, NonlinearityDomainError, NumericalError
from .model import (
    FilamentConfig,
    LatticeState,
    clamp_values,
    fingerprint,
    rhs_first_order,
)
from .stimuli import apply_stimuli
from .trace import Trace

log = logging.getLogger(__name__)

METHODS = ("implicit_trapezoidal", "explicit_rk4")


def _steps(total: float, dt: float, what: str) -> int:
    n = total / dt
    k = round(n)
    if k < 1 or abs(n - k) > 1e-6 * max(1.0, n):
        raise ConfigError(f"{what} must be an integer multiple of dt", f"run.{what}")
    return k


@dataclass(frozen=True)
class RunSettings:
    t_end: float
    dt: float = 1e-3
    sample_every: float = 1e-2
    method: str = "implicit_trapezoidal"
    newton_tol: float = 1e-10
    newton_max_iters: int = 25

    def __post_init__(self):
        if not (0 < self.dt <= self.sample_every <= self.t_end):
            raise ConfigError("need 0 < dt <= sample_every <= t_end", "run")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}", "run.method")
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive", "run.newton_tol")
        if int(self.newton_max_iters) != self.newton_max_iters or self.newton_max_iters < 1:
            raise ConfigError("newton_max_iters must be a positive integer", "run.newton_max_iters")
        _steps(self.sample_every, self.dt, "sample_every")
        _steps(self.t_end, self.sample_every, "t_end")

    @property
    def n_steps(self) -> int:
        return _steps(self.t_end, self.dt, "t_end")

    @property
    def steps_per_sample(self) -> int:
        return _steps(self.sample_every, self.dt, "sample_every")

    def with_dt(self, dt: float) -> "RunSettings":
        d = asdict(self)
        d["dt"] = dt
        return RunSettings(**d)

    def to_dict(self) -> dict:
        return {
            "t_end_ns": self.t_end,
            "dt_ns": self.dt,
            "sample_every_ns": self.sample_every,
            "method": self.method,
            "newton_tol": self.newton_tol,
            "newton_max_iters": self.newton_max_iters,
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def _check_finite(state: LatticeState, t: float) -> None:
    if not (np.all(np.isfinite(state.W)) and np.all(np.isfinite(state.U))):
        bad = np.flatnonzero(~(np.isfinite(state.W) & np.isfinite(state.U)))
        raise NumericalError("non-finite state (overflow)", time_ns=t, cell=int(bad[0]) + 1)


class _TrapezoidStepper:
    """Implicit trapezoidal steps for a fixed config, clamp set and ``dt``.

    With ``W1 = W0 + dt/2 (U0 + U1)`` substituted, each step is a nonlinear
    system in ``U1`` alone whose Jacobian is tridiagonal.  Residual rows are
    scaled by ``L C0`` so the system stays well posed however small the
    inertia is.  Clamped nodes are eliminated (identity rows, zero update).
    """

    def __init__(self, config: FilamentConfig, clamps, dt, newton_tol=1e-10, newton_max_iters=25):
        self.config = config
        self.clamps = clamps
        self.b = config.b
        self.dt = dt
        self.h = h = 0.5 * dt
        self.tol = newton_tol
        self.max_iters = newton_max_iters
        n = config.n_nodes
        self.n = n
        self.m = config.inertia
        free = np.ones(n, dtype=bool)
        free[list(clamps)] = False
        self.free = free
        self.clamped_idx = np.flatnonzero(~free)
        freef = free.astype(float)
        self.freef = freef
        self.hfree = h * freef
        ci = self.clamped_idx
        self._ci_upper = ci[ci < n - 1]  # row ci, column ci+1
        self._ci_lower = ci[ci > 0] - 1  # row ci, column ci-1
        r1, r2 = config.damping, config.coupling
        self.r1, self.r2 = r1, r2
        self._vp = np.zeros(n + 2)
        self._up = np.zeros(n + 2)
        self.diag0 = self.m + h * (r1 + 2.0 * r2)
        self.upper0 = -h * r2[:-1] * freef[1:]
        self.lower0 = -h * r2[1:] * freef[:-1]
        self.upper0[~free[:-1]] = 0.0
        self.lower0[~free[1:]] = 0.0
        self.diag0[~free] = 1.0

    def voltages(self, W, t):
        """Return ``(V, dV/dW)`` for free nodes; raises on a domain violation."""
        b = self.b
        if b == 0:
            return W.copy(), np.ones_like(W)
        disc = 1.0 - 4.0 * b * W
        if self.clamped_idx.size:
            disc[self.clamped_idx] = 1.0
        if not disc.min() >= 0.0:
            bad = np.flatnonzero(~(disc >= 0.0))
            raise NonlinearityDomainError(
                f"nonlinearity domain exceeded: w > 1/(4b) = {1 / (4 * b):.6g}", time_ns=t, cell=int(bad[0]) + 1
            )
        root = np.sqrt(disc)
        return 2.0 * W / (1.0 + root), 1.0 / root

    def clamp_arrays(self, t):
        Vc = np.zeros(self.n)
        Uc = np.zeros(self.n)
        for k, (v, u) in clamp_values(self.clamps, t, self.b).items():
            Vc[k] = v
            Uc[k] = u
        return Vc, Uc

    def force(self, V, U):
        # Same as model._force, with reusable padded buffers.
        Vp, Up = self._vp, self._up
        Vp[1:-1] = V
        Up[1:-1] = U
        lap_v = Vp[2:] + Vp[:-2] - 2.0 * V
        lap_u = Up[2:] + Up[:-2] - 2.0 * U
        return lap_v - self.r1 * U + self.r2 * lap_u

    def step(self, W0, U0, F0, t1):
        """Return ``(W1, U1, F1, V1)``; ``F1`` is the force at the new state, reused by the next step."""
        h = self.h
        ci = self.clamped_idx
        Vc, Uc = self.clamp_arrays(t1)
        U1 = U0.copy()
        if ci.size:
            U1[ci] = Uc[ci]
        resid = math.inf
        scale0 = float(np.abs(U0).max())
        for _ in range(self.max_iters):
            W1 = W0 + h * (U0 + U1)
            V1, slope = self.voltages(W1, t1)
            if ci.size:
                V1[ci] = Vc[ci]
            F1 = self.force(V1, U1)
            G = self.m * (U1 - U0) - h * (F0 + F1)
            d = self.hfree * slope  # zero on clamped nodes
            if ci.size:
                G[ci] = 0.0
            resid = float(np.abs(G).max())
            diag = self.diag0 + (2.0 * h) * d
            upper = self.upper0 - h * d[1:]
            lower = self.lower0 - h * d[:-1]
            if ci.size:
                upper[self._ci_upper] = 0.0
                lower[self._ci_lower] = 0.0
            *_, delta, info = dgtsv(lower, diag, upper, -G)
            if info != 0:
                raise NumericalError("singular Newton matrix", time_ns=t1, residual=resid)
            U1 = U1 + delta
            if float(np.abs(delta).max()) <= self.tol * max(float(np.abs(U1).max()), scale0):
                break
        else:
            raise NumericalError(
                f"Newton iteration did not converge in {self.max_iters} iterations (residual {resid:.3g})",
                time_ns=t1,
                residual=resid,
            )
        W1 = W0 + h * (U0 + U1)
        if ci.size:
            W1[ci] = Vc[ci] - self.b * Vc[ci] ** 2
            U1[ci] = Uc[ci]
        V1, _ = self.voltages(W1, t1)
        if ci.size:
            V1[ci] = Vc[ci]
        if not (np.all(np.isfinite(W1)) and np.all(np.isfinite(U1))):
            bad = np.flatnonzero(~(np.isfinite(W1) & np.isfinite(U1)))
            raise NumericalError("non-finite state (overflow)", time_ns=t1, cell=int(bad[0]) + 1)
        return W1, U1, self.force(V1, U1), V1

    def initial_force(self, state: LatticeState):
        V, _ = self.voltages(state.W, state.t)
        Vc, Uc = self.clamp_arrays(state.t)
        ci = self.clamped_idx
        U = state.U.copy()
        if ci.size:
            V[ci] = Vc[ci]
            U[ci] = Uc[ci]
        return self.force(V, U)


def step_implicit(
    state: LatticeState,
    config: FilamentConfig,
    dt: float,
    newton_tol: float = 1e-10,
    newton_max_iters: int = 25,
) -> LatticeState:
    """Advance one implicit trapezoidal step (Newton with tridiagonal Jacobian)."""
    stepper = _TrapezoidStepper(config, state.clamps, dt, newton_tol, newton_max_iters)
    F0 = stepper.initial_force(state)
    W1, U1, _, _ = stepper.step(state.W, state.U, F0, state.t + dt)
    return LatticeState(W1, U1, state.t + dt, state.clamps)


def step_rk4(state: LatticeState, config: FilamentConfig, dt: float) -> LatticeState:
    """Classical fourth-order Runge-Kutta step (explicit, conditionally stable)."""
    t = state.t

    def f(W, U, tt):
        return rhs_first_order(LatticeState(W, U, tt, state.clamps), config, tt)

    W, U = state.W, state.U
    with np.errstate(over="ignore", invalid="ignore"):
        k1w, k1u = f(W, U, t)
        k2w, k2u = f(W + 0.5 * dt * k1w, U + 0.5 * dt * k1u, t + 0.5 * dt)
        k3w, k3u = f(W + 0.5 * dt * k2w, U + 0.5 * dt * k2u, t + 0.5 * dt)
        k4w, k4u = f(W + dt * k3w, U + dt * k3u, t + dt)
        W1 = W + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        U1 = U + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
    new = LatticeState(W1, U1, t + dt, state.clamps)
    _check_finite(new, t + dt)
    new.sync_clamps(config.b)
    return new


def integrate(state: LatticeState, config: FilamentConfig, settings: RunSettings):
    """Advance ``state`` to ``t_end`` and return ``(times, voltages, final_state)``.

    Time is computed as ``k * dt`` (never accumulated) so sample instants are
    reproducible.  On failure the samples gathered so far are attached to the
    raised error as ``partial = (times, voltages)``.
    """
    if state.W.size != config.n_nodes:
        raise ConfigError(f"state has {state.W.size} nodes, filament has {config.n_nodes}")
    every = settings.steps_per_sample
    n_steps = settings.n_steps
    dt = settings.dt
    t_start = state.t
    times = [t_start]
    volts = [state.voltages(config.b)]
    try:
        if settings.method == "explicit_rk4":
            for k in range(1, n_steps + 1):
                state = step_rk4(state, config, dt)
                state.t = t_start + k * dt
                if k % every == 0:
                    times.append(state.t)
                    volts.append(state.voltages(config.b))
        else:
            stepper = _TrapezoidStepper(config, state.clamps, dt, settings.newton_tol, settings.newton_max_iters)
            W, U = state.W, state.U
            F = stepper.initial_force(state)
            for k in range(1, n_steps + 1):
                t1 = t_start + k * dt
                W, U, F, V = stepper.step(W, U, F, t1)
                if k % every == 0:
                    times.append(t1)
                    volts.append(V)
            state = LatticeState(W, U, t_start + n_steps * dt, state.clamps)
    except NumericalError as exc:
        exc.partial = (np.array(times), np.array(volts))
        raise
    return np.array(times), np.array(volts), state


def run_simulation(config: FilamentConfig, stimuli, settings: RunSettings, initial_state=None) -> Trace:
    """Integrate from t=0 to ``settings.t_end`` and sample all node voltages.

    ``stimuli`` is a sequence of :class:`~actin_rlc.stimuli.StimulusSpec`;
    ``initial_state`` overrides the state they would build.
    """
    if initial_state is None:
        state, _ = apply_stimuli(config, list(stimuli))
    else:
        state = initial_state.copy()
    meta = {"method": settings.method}
    cfp, sfp = config.fingerprint(), settings.fingerprint()
    try:
        times, volts, _ = integrate(state, config, settings)
    except NumericalError as exc:
        log.warning("simulation failed: %s", exc)
        if exc.partial is not None:
            t, v = exc.partial
            exc.partial = Trace(
                t,
                v.reshape(len(t), config.n_nodes),
                tuple(config.node_labels()),
                config.node_positions(),
                cfp,
                sfp,
                {**meta, "failed_at_ns": exc.time_ns},
            )
        raise
    return Trace(times, volts, tuple(config.node_labels()), config.node_positions(), cfp, sfp, meta)


@dataclass(frozen=True)
class ConvergenceReport:
    dts: tuple[float, ...]
    max_abs_diffs: tuple[float, ...]  # between consecutive refinements

    @property
    def max_abs_diff(self) -> float:
        return self.max_abs_diffs[0]

    @property
    def ratios(self) -> tuple[float, ...]:
        d = self.max_abs_diffs
        return tuple(d[i] / d[i + 1] if d[i + 1] > 0 else math.inf for i in range(len(d) - 1))


def convergence_report(config, stimuli, settings: RunSettings, levels: int = 2) -> ConvergenceReport:
    """Compare runs at ``dt, dt/2, ...`` (``levels`` runs) on shared samples."""
    if levels < 2:
        raise ConfigError("convergence_report needs at least two levels")
    dts = tuple(settings.dt / 2**i for i in range(levels))
    traces = [run_simulation(config, stimuli, settings.with_dt(dt)) for dt in dts]
    diffs = tuple(
        float(np.max(np.abs(traces[i].voltages - traces[i + 1].voltages))) for i in range(levels - 1)
    )
    return ConvergenceReport(dts, diffs)
