"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_kernels_c.pyx``.
Inputs are assumed validated and C-contiguous float64.
"""
import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def _component_terms(states, t, weights, means, stds):
    d = states.shape[1]
    one_m_t = (1.0 - t)[:, None]                                  # (n, 1)
    var = t[:, None] ** 2 + one_m_t ** 2 * stds[None, :] ** 2     # (n, K)
    resid = states[:, None, :] - one_m_t[:, :, None] * means[None, :, :]   # (n, K, d)
    sq = np.einsum("nkd,nkd->nk", resid, resid)
    logits = np.log(weights)[None, :] - 0.5 * d * (LOG_2PI + np.log(var)) - 0.5 * sq / var
    logits -= logits.max(axis=1, keepdims=True)
    resp = np.exp(logits)
    resp /= resp.sum(axis=1, keepdims=True)
    return one_m_t, var, resid, resp


def mixture_velocity(states, t, weights, means, stds):
    """Marginal rectified-flow velocity of an isotropic Gaussian mixture.

    Parameters
    ----------
    states : (n, d) array
    t : (n,) array of times in [0, 1], one per state
    weights : (K,) array
    means : (K, d) array
    stds : (K,) array

    Returns
    -------
    (n, d) array
    """
    one_m_t, var, resid, resp = _component_terms(states, t, weights, means, stds)
    coef = (t[:, None] - one_m_t * stds[None, :] ** 2) / var     # (n, K)
    per_comp = coef[:, :, None] * resid - means[None, :, :]
    return np.einsum("nk,nkd->nd", resp, per_comp)


def mixture_responsibilities(states, t, weights, means, stds):
    return _component_terms(states, t, weights, means, stds)[3]


def gamma_clamp(x):
    x = np.asarray(x, dtype=np.float64)
    # exp is only evaluated on the nonpositive part so it never overflows
    return np.where(x <= 0.0, np.exp(np.minimum(x, 0.0)), x + 1.0)


def bypass_trapezoid(times, q, p, start):
    """Clamped trapezoidal bypass from grid index ``start`` up to the last node.

    Returns ``(b_star, exponents)`` where ``exponents[k]`` is the clamp
    argument at grid index ``start + k``.
    """
    n_nodes, d = q.shape
    last = n_nodes - 1
    exponents = np.zeros((n_nodes - start, d))
    acc = np.zeros(d)
    expo = np.zeros(d)
    e_cur = gamma_clamp(expo)
    for u in range(start, last):
        dt = times[u + 1] - times[u]
        expo = expo - 0.5 * dt * (p[u] + p[u + 1])
        exponents[u + 1 - start] = expo
        e_next = gamma_clamp(expo)
        acc = acc + dt * (q[u] * e_cur + q[u + 1] * e_next)
        e_cur = e_next
    return -0.5 * acc, exponents


def linear_backward_euler(times, q, p):
    """Integrate db/dt = q + p*b from the last node down to the first, b(end)=0.

    Explicit Euler with the derivative sampled at the node being left.
    Returns the value at ``times[0]``.
    """
    n_nodes, d = q.shape
    b = np.zeros(d)
    for k in range(n_nodes - 1, 0, -1):
        h = times[k - 1] - times[k]
        b = b + h * (q[k] + p[k] * b)
    return b
