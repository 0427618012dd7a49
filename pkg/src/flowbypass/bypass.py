"""Discrete bypass between the inversion and reconstruction trajectories.

:func:`compute_bypass` is the production path: a clamped trapezoidal sum
over terms cached during inversion. The three oracles compute the same
quantity independently:

* :func:`dense_linear_oracle` integrates the linearized bypass ODE
  ``db/dt = Q + P*b, b(1) = 0`` with fine explicit Euler;
* :func:`coupled_exact_oracle` integrates the unlinearized bypass ODE
  ``db/dt = v_rec(x + b) - v_inv(x)``;
* :func:`analytic_form_quadrature` evaluates the integrating-factor closed
  form by nested Gauss-Legendre quadrature on an adaptive-RK path, without
  the clamp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from flowbypass._backend import kernels
from flowbypass.errors import ConfigError, NumericalError
from flowbypass.field import (
    DEFAULT_ZETA,
    UNIFORM_OFFSET,
    Guidance,
    VelocityField,
    fd_elementwise_derivative,
    guided_velocity,
)
from flowbypass.trajectory import InversionRecord

DEFAULT_SUBSTEPS = 1000


@dataclass
class BypassResult:
    b_star: np.ndarray
    exponent_trace: np.ndarray | None = None   # (N - B + 1, d), row k is grid index B + k
    e_factors: np.ndarray | None = None


def gamma(x):
    """``exp(x)`` for ``x <= 0``, ``x + 1`` above. Elementwise on arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        return math.exp(x) if x <= 0.0 else x + 1.0
    return kernels.gamma_clamp(np.asarray(x, dtype=np.float64))


def compute_bypass(record: InversionRecord, start_index: int) -> BypassResult:
    """Clamped trapezoidal bypass at grid index ``start_index``."""
    n = record.n_steps
    if not 0 <= start_index <= n:
        raise ConfigError(f"bypass index must be in [0, {n}], got {start_index}")
    times = np.ascontiguousarray(record.grid.times)
    q = np.ascontiguousarray(record.q)
    p = np.ascontiguousarray(record.p)
    b_star, exponents = kernels.bypass_trapezoid(times, q, p, start_index)
    if not (np.all(np.isfinite(b_star)) and np.all(np.isfinite(exponents))):
        raise NumericalError("bypass accumulation produced non-finite values", step=start_index)
    return BypassResult(b_star=b_star, exponent_trace=exponents,
                        e_factors=kernels.gamma_clamp(exponents))


# --------------------------------------------------------------------------
# Oracles


def fine_grid(t_b: float, substeps: int):
    """Uniform pieces on ``[0, t_b]`` and ``[t_b, 1]`` with ``t_b`` as a node.

    About ``substeps`` intervals in total. Returns ``(times, index_of_t_b)``.
    """
    if not 0.0 <= t_b <= 1.0:
        raise ConfigError(f"t_B must lie in [0, 1], got {t_b!r}")
    if substeps < 2:
        raise ConfigError("substeps must be >= 2")
    m_lo = math.ceil(substeps * t_b) if t_b > 0.0 else 0
    m_hi = math.ceil(substeps * (1.0 - t_b)) if t_b < 1.0 else 0
    lo = np.linspace(0.0, t_b, m_lo + 1) if m_lo else np.array([0.0])
    hi = np.linspace(t_b, 1.0, m_hi + 1) if m_hi else np.array([1.0])
    times = np.concatenate([lo, hi[1:]])
    return times, m_lo


def euler_path(field: VelocityField, x0, times, guidance: Guidance) -> np.ndarray:
    """Forward Euler along ``times``; returns all states, shape ``(len(times), d)``."""
    x = np.array(x0, dtype=np.float64)
    out = np.empty((len(times), x.shape[0]))
    out[0] = x
    for i in range(len(times) - 1):
        x = x + (times[i + 1] - times[i]) * guided_velocity(field, x, times[i], guidance)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"oracle trajectory blew up at substep {i + 1}", step=i + 1)
        out[i + 1] = x
    return out


def _qp_along(field, states, times, guidance_inv, guidance_rec, zeta, derivative_mode):
    v_inv = guided_velocity(field, states, times, guidance_inv)
    v_rec = guided_velocity(field, states, times, guidance_rec)
    p = fd_elementwise_derivative(field, states, times, guidance_rec, zeta, derivative_mode,
                                  base=v_rec)
    return np.ascontiguousarray(v_rec - v_inv), np.ascontiguousarray(p)


def dense_linear_oracle(field: VelocityField, x0, guidance_inv: Guidance,
                        guidance_rec: Guidance, t_b: float,
                        substeps: int = DEFAULT_SUBSTEPS,
                        derivative_mode: str = UNIFORM_OFFSET,
                        zeta: float = DEFAULT_ZETA) -> np.ndarray:
    """Fine-Euler solution of the linearized bypass ODE at ``t_b``."""
    times, ib = fine_grid(t_b, substeps)
    xs = euler_path(field, x0, times, guidance_inv)
    upper_t = np.ascontiguousarray(times[ib:])
    q, p = _qp_along(field, xs[ib:], upper_t, guidance_inv, guidance_rec, zeta, derivative_mode)
    return kernels.linear_backward_euler(upper_t, q, p)


def coupled_exact_oracle(field: VelocityField, x0, guidance_inv: Guidance,
                         guidance_rec: Guidance, t_b: float,
                         substeps: int = DEFAULT_SUBSTEPS,
                         formulation: str = "bypass_ode") -> np.ndarray:
    """``y(t_b) - x(t_b)`` without any linearization.

    ``formulation="bypass_ode"`` integrates ``db/dt = v_rec(x + b) - v_inv(x)``,
    ``b(1) = 0``, downward along the stored fine inversion path, with the same
    grid and Euler rule as :func:`dense_linear_oracle`, so the difference
    between the two is the linearization alone. ``"trajectory"`` re-integrates
    ``y`` from the shared noise ``x(1)`` and subtracts; it also carries the
    O(1/substeps) mismatch between forward and backward Euler.
    """
    times, ib = fine_grid(t_b, substeps)
    xs = euler_path(field, x0, times, guidance_inv)
    if formulation == "trajectory":
        y = xs[-1].copy()
        for k in range(len(times) - 1, ib, -1):
            y = y + (times[k - 1] - times[k]) * guided_velocity(field, y, times[k], guidance_rec)
            if not np.all(np.isfinite(y)):
                raise NumericalError(f"exact oracle blew up at substep {k - 1}", step=k - 1)
        return y - xs[ib]
    if formulation != "bypass_ode":
        raise ConfigError(f"unknown formulation {formulation!r}")
    upper_t = times[ib:]
    v_inv = guided_velocity(field, xs[ib:], upper_t, guidance_inv)
    b = np.zeros_like(xs[0])
    for k in range(len(upper_t) - 1, 0, -1):
        y_k = xs[ib + k] + b
        b = b + (upper_t[k - 1] - upper_t[k]) * (
            guided_velocity(field, y_k, upper_t[k], guidance_rec) - v_inv[k])
        if not np.all(np.isfinite(b)):
            raise NumericalError(f"exact oracle blew up at substep {ib + k - 1}", step=ib + k - 1)
    return b


def analytic_form_quadrature(field: VelocityField, x0, guidance_inv: Guidance,
                             guidance_rec: Guidance, t_b: float,
                             outer_nodes: int = 64, inner_nodes: int = 64,
                             derivative_mode: str = UNIFORM_OFFSET,
                             zeta: float = DEFAULT_ZETA,
                             rtol: float = 1e-12) -> np.ndarray:
    """``-int_{t_b}^1 Q(u) exp(-int_{t_b}^u P(s) ds) du`` by nested Gauss-Legendre.

    The inversion path comes from a DOP853 solve with dense output, and the
    exponential is not clamped.
    """
    if outer_nodes < 64 or inner_nodes < 64:
        raise ConfigError("quadrature needs at least 64 outer and inner nodes")
    if not 0.0 <= t_b <= 1.0:
        raise ConfigError(f"t_B must lie in [0, 1], got {t_b!r}")
    x0 = np.asarray(x0, dtype=np.float64)
    if t_b == 1.0:
        return np.zeros_like(x0)

    sol = solve_ivp(lambda t, x: guided_velocity(field, x, t, guidance_inv), (0.0, 1.0), x0,
                    method="DOP853", rtol=rtol, atol=rtol, dense_output=True)
    if not sol.success:
        raise NumericalError(f"quadrature path integration failed: {sol.message}")

    xi, wi = np.polynomial.legendre.leggauss(outer_nodes)
    eta, we = np.polynomial.legendre.leggauss(inner_nodes)
    half = 0.5 * (1.0 - t_b)
    u = t_b + half * (xi + 1.0)                          # (n_out,)
    u_w = half * wi
    inner_half = 0.5 * (u - t_b)                         # (n_out,)
    s = t_b + inner_half[:, None] * (eta[None, :] + 1.0)  # (n_out, n_in)
    s_w = inner_half[:, None] * we[None, :]

    s_flat = s.reshape(-1)
    xs_inner = sol.sol(s_flat).T
    v_rec_inner = guided_velocity(field, xs_inner, s_flat, guidance_rec)
    p_inner = fd_elementwise_derivative(field, xs_inner, s_flat, guidance_rec, zeta,
                                        derivative_mode, base=v_rec_inner)
    d = x0.shape[0]
    integral_p = (s_w[:, :, None] * p_inner.reshape(outer_nodes, inner_nodes, d)).sum(axis=1)

    xs_outer = sol.sol(u).T
    q_outer = (guided_velocity(field, xs_outer, u, guidance_rec)
               - guided_velocity(field, xs_outer, u, guidance_inv))
    with np.errstate(over="ignore"):
        integrand = q_outer * np.exp(-integral_p)
    return -(u_w[:, None] * integrand).sum(axis=0)
