"""Euler integration of guided flow ODEs and the caching inversion pass."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from flowbypass.errors import ConfigError, NumericalError
from flowbypass.field import (
    DEFAULT_ZETA,
    EXACT_DIAGONAL,
    UNIFORM_OFFSET,
    EvalCounter,
    Guidance,
    VelocityField,
    fd_elementwise_derivative,
    guided_velocity,
)
from flowbypass.timegrid import TimeGrid

INVERSION = "inversion"
BYPASS_Q = "bypass_q"
BYPASS_P = "bypass_p"
RECONSTRUCTION = "reconstruction"


@dataclass
class InversionRecord:
    """Inversion states plus the per-node terms the bypass needs.

    ``q[u]`` is the reconstruction-minus-inversion guided velocity at
    ``states[u]`` and ``p[u]`` the finite-difference diagonal derivative of the
    reconstruction guided velocity there. Both are cached at every node
    ``0..N`` so one inversion serves any bypass index.
    """

    grid: TimeGrid
    states: np.ndarray          # (N+1, d)
    q: np.ndarray               # (N+1, d)
    p: np.ndarray               # (N+1, d)
    guidance_inv: Guidance
    guidance_rec: Guidance
    zeta: float
    derivative_mode: str
    eval_count: EvalCounter = dc_field(default_factory=EvalCounter)

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def summary(self):
        return {
            "n_steps": self.grid.n_steps,
            "shift": self.grid.shift,
            "guidance_inv": self.guidance_inv.to_dict(),
            "guidance_rec": self.guidance_rec.to_dict(),
            "zeta": self.zeta,
            "derivative_mode": self.derivative_mode,
            "terminal_state": self.states[-1].tolist(),
            "eval_count": dict(sorted(self.eval_count.items())),
        }


def _check_finite(arr, what, step):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite {what} at step {step}", step=step)


def euler_step(field: VelocityField, state, t_from: float, t_to: float, guidance: Guidance,
               counter: EvalCounter | None = None, purpose: str = "other") -> np.ndarray:
    """``state + (t_to - t_from) * v(state, t_from)``."""
    for t in (t_from, t_to):
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"times must lie in [0, 1], got {t!r}")
    state = np.asarray(state, dtype=np.float64)
    v = guided_velocity(field, state, t_from, guidance, counter, purpose)
    out = state + (t_to - t_from) * v
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite state stepping {t_from} -> {t_to}")
    return out


def invert(field: VelocityField, x0, grid: TimeGrid, guidance_inv: Guidance,
           guidance_rec: Guidance, zeta: float = DEFAULT_ZETA,
           derivative_mode: str = UNIFORM_OFFSET) -> InversionRecord:
    """Euler inversion from t=0 to t=1 with the bypass terms cached.

    The velocity is evaluated at the current state and current time.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise ConfigError("invert takes a single (d,) state")
    _check_finite(x0, "input state", 0)
    counter = EvalCounter()
    times = grid.times
    n = grid.n_steps
    states = np.empty((n + 1, x0.shape[0]))
    v_inv = np.empty_like(states)
    states[0] = x0
    for i in range(n):
        v_inv[i] = guided_velocity(field, states[i], times[i], guidance_inv, counter, INVERSION)
        states[i + 1] = states[i] + (times[i + 1] - times[i]) * v_inv[i]
        _check_finite(states[i + 1], "inversion state", i + 1)
    # the terminal node only feeds the bypass
    v_inv[n] = guided_velocity(field, states[n], times[n], guidance_inv, counter, BYPASS_Q)

    q = np.empty_like(states)
    p = np.empty_like(states)
    for u in range(n + 1):
        v_rec = guided_velocity(field, states[u], times[u], guidance_rec, counter, BYPASS_Q)
        q[u] = v_rec - v_inv[u]
        p[u] = fd_elementwise_derivative(field, states[u], times[u], guidance_rec, zeta,
                                         derivative_mode, base=v_rec, counter=counter,
                                         purpose=BYPASS_P)
        _check_finite(q[u], "bypass term q", u)
        _check_finite(p[u], "bypass term p", u)
    return InversionRecord(grid=grid, states=states, q=q, p=p, guidance_inv=guidance_inv,
                           guidance_rec=guidance_rec, zeta=float(zeta),
                           derivative_mode=derivative_mode, eval_count=counter)


def reconstruct(field: VelocityField, y_start, grid: TimeGrid, start_index: int,
                guidance: Guidance, counter: EvalCounter | None = None,
                return_path: bool = False):
    """Euler from ``t_B`` down to ``t_0``. ``start_index=0`` returns the input.

    With ``return_path`` the states at ``t_B, ..., t_0`` are returned as well.
    """
    if not 0 <= start_index <= grid.n_steps:
        raise ConfigError(f"start index must be in [0, {grid.n_steps}], got {start_index}")
    times = grid.times
    y = np.array(y_start, dtype=np.float64)
    _check_finite(y, "reconstruction start", start_index)
    path = [y.copy()]
    for i in range(start_index, 0, -1):
        v = guided_velocity(field, y, times[i], guidance, counter, RECONSTRUCTION)
        y = y + (times[i - 1] - times[i]) * v
        _check_finite(y, "reconstruction state", i - 1)
        if return_path:
            path.append(y.copy())
    if return_path:
        return y, np.array(path)
    return y


def expected_eval_budget(n_steps: int, start_index: int, guidance_inv: Guidance,
                         guidance_rec: Guidance, dim: int,
                         derivative_mode: str = UNIFORM_OFFSET) -> dict:
    """Closed-form evaluation counts of one edit, by purpose.

    One "evaluation" is one conditional velocity at one state.
    """
    e_inv = guidance_inv.evals_per_state
    e_rec = guidance_rec.evals_per_state
    per_p = dim if derivative_mode == EXACT_DIAGONAL else 1
    return {
        INVERSION: n_steps * e_inv,
        BYPASS_Q: (n_steps + 1) * e_rec + e_inv,
        BYPASS_P: (n_steps + 1) * e_rec * per_p,
        RECONSTRUCTION: start_index * e_rec,
    }


def bypass_share(budget: dict) -> float:
    """Fraction of all evaluations spent on caching bypass terms."""
    total = sum(budget.values())
    return (budget[BYPASS_Q] + budget[BYPASS_P]) / total
