"""IMEX time integration of the coupled system.

Linear parts (``nu Lap`` on u, ``Gamma (Lap - a)`` on Q) are inverted
modewise; nonlinear parts are explicit.

IMEX1
    Backward Euler on the linear part, forward Euler on the rest.
IMEX2
    Crank-Nicolson on the linear part with a Heun predictor-corrector on
    the explicit part (second order).
"""
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from . import dynamics
from .dynamics import Model
from .qtensor import PotentialParams

log = logging.getLogger(__name__)

SCHEMES = ("IMEX1", "IMEX2")


class StepError(RuntimeError):
    """Base class for aborted steps; ``state`` is the last valid state."""

    def __init__(self, msg, state):
        super().__init__(msg)
        self.state = state


class CFLViolation(StepError):
    pass


class NaNDetected(StepError):
    pass


@dataclass(frozen=True)
class State:
    """Snapshot ``(t, u, q)``; ``u`` is ``(dim, ...)``, ``q`` is ``(5, ...)``."""

    t: float
    u: np.ndarray
    q: np.ndarray

    def copy(self):
        return State(self.t, self.u.copy(), self.q.copy())


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    potential: PotentialParams
    scheme: str = "IMEX2"
    dealias: bool = True
    record_every: int = 1
    viscosity: float = 1.0
    relaxation: float = 1.0
    cfl: float = 0.5
    elastic_sign: float = -1.0
    freeze_velocity: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def model(self):
        return Model(self.potential, self.viscosity, self.relaxation,
                     self.elastic_sign, self.dealias, self.freeze_velocity)

    @property
    def n_steps(self):
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return n


class Stepper:
    """Holds the modewise factors for one (grid, config) pair."""

    def __init__(self, grid, cfg):
        self.grid = grid
        self.cfg = cfg
        self.model = cfg.model
        dt = cfg.dt
        lu, lq = dynamics.linear_symbols(grid, self.model)
        if cfg.scheme == "IMEX1":
            self.inv_u = 1.0 / (1.0 - dt * lu)
            self.inv_q = 1.0 / (1.0 - dt * lq)
        else:
            self.inv_u = 1.0 / (1.0 - 0.5 * dt * lu)
            self.inv_q = 1.0 / (1.0 - 0.5 * dt * lq)
            self.exp_u = 1.0 + 0.5 * dt * lu
            self.exp_q = 1.0 + 0.5 * dt * lq
        self._zero = (Ellipsis,) + (0,) * grid.dim

    def _nonlinear(self, uh, qh):
        return dynamics.nonlinear_hat(self.grid, uh, qh, self.model)

    def advance_hat(self, uh, qh):
        dt = self.cfg.dt
        nu0, nq0 = self._nonlinear(uh, qh)
        if self.cfg.scheme == "IMEX1":
            uh1 = (uh + dt * nu0) * self.inv_u
            qh1 = (qh + dt * nq0) * self.inv_q
        else:
            base_u = self.exp_u * uh
            base_q = self.exp_q * qh
            up = (base_u + dt * nu0) * self.inv_u
            qp = (base_q + dt * nq0) * self.inv_q
            nu1, nq1 = self._nonlinear(up, qp)
            uh1 = (base_u + 0.5 * dt * (nu0 + nu1)) * self.inv_u
            qh1 = (base_q + 0.5 * dt * (nq0 + nq1)) * self.inv_q
        if not self.model.freeze_velocity:
            uh1 = self.grid.leray_hat(uh1)
            uh1[self._zero] = 0.0
        return uh1, qh1

    def check_cfl(self, state):
        g = self.grid
        umax = float(np.max(g.magnitude(state.u))) if state.u.size else 0.0
        number = self.cfg.dt * umax * (g.n / 2)
        if number > self.cfg.cfl:
            raise CFLViolation(
                f"CFL number {number:.3g} exceeds {self.cfg.cfl} at t={state.t:.6g}",
                state)
        return number


def step(grid, state, cfg, stepper=None):
    """Advance ``state`` by one step of size ``cfg.dt``."""
    stepper = stepper or Stepper(grid, cfg)
    stepper.check_cfl(state)
    uh, qh = stepper.advance_hat(grid.fft(state.u), grid.fft(state.q))
    new = State(state.t + cfg.dt, grid.ifft(uh), grid.ifft(qh))
    if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.q))):
        raise NaNDetected(f"non-finite values after step to t={new.t:.6g}", state)
    return new


@dataclass
class RunResult:
    state: State
    records: list = field(default_factory=list)
    steps: int = 0


def run(grid, s0, cfg, recorder=None, sinks=(), observers=(), checkpoint=None):
    """Integrate from ``s0`` to ``s0.t + cfg.t_end``.

    ``recorder(state)`` builds a diagnostics record every
    ``cfg.record_every`` steps (and at the start); each record is passed to
    every sink's ``emit``.  ``observers`` are called as ``obs(k, state)``
    after every step.  ``checkpoint`` is an optional ``(every, callback)``
    pair.  Step errors propagate; records emitted so far stay valid.
    """
    stepper = Stepper(grid, cfg)
    nsteps = cfg.n_steps
    result = RunResult(s0)

    def emit(state):
        if recorder is None:
            return
        rec = recorder(state)
        result.records.append(rec)
        for sink in sinks:
            sink.emit(rec)

    if nsteps == 0:
        return result
    emit(s0)
    state = s0
    uh, qh = grid.fft(s0.u), grid.fft(s0.q)
    for k in range(1, nsteps + 1):
        stepper.check_cfl(state)
        uh, qh = stepper.advance_hat(uh, qh)
        new = State(s0.t + k * cfg.dt, grid.ifft(uh), grid.ifft(qh))
        if not (np.all(np.isfinite(new.u)) and np.all(np.isfinite(new.q))):
            raise NaNDetected(f"non-finite values after step to t={new.t:.6g}", state)
        state = new
        result.state = state
        result.steps = k
        for obs in observers:
            obs(k, state)
        if k % cfg.record_every == 0 or k == nsteps:
            emit(state)
        if checkpoint is not None and checkpoint[0] and k % checkpoint[0] == 0:
            checkpoint[1](state)
    return result


def with_dt(cfg, dt):
    return replace(cfg, dt=dt)


def linear_relaxation_exact(grid, q0, a, t, relaxation=1.0):
    """Exact ``exp(Gamma (Lap - a) t) q0`` for the pure-relaxation problem."""
    return grid.ifft(np.exp(-relaxation * (grid.k2 + a) * t) * grid.fft(q0))


def heat_exact(grid, u0, t, viscosity=1.0):
    return grid.ifft(np.exp(-viscosity * grid.k2 * t) * grid.fft(u0))


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def observed_order(errors, ratio=2.0):
    """Orders ``log(e_i/e_{i+1})/log(ratio)`` for errors at successively
    refined step sizes."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)
