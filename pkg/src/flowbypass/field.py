"""Velocity fields standing in for a trained conditional flow network.

The main field is :class:`ConditionedFieldSpec`, a set of isotropic Gaussian
mixtures (one per condition label) whose exact marginal rectified-flow
velocity is available in closed form. Two synthetic fields with trivially
known solutions, :class:`ConstantField` and :class:`DiagonalLinearField`,
exist for exactness tests.

States are float64 arrays of shape ``(d,)`` or ``(n, d)``; a batch of states
is evaluated in one kernel call.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field as dc_field
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from flowbypass._backend import kernels
from flowbypass.errors import ConfigError, FieldError

UNIFORM_OFFSET = "uniform_offset"
EXACT_DIAGONAL = "exact_diagonal"
DERIVATIVE_MODES = (UNIFORM_OFFSET, EXACT_DIAGONAL)
DEFAULT_ZETA = 0.01


@dataclass(frozen=True)
class Condition:
    """A prompt analog. ``label=None`` is the null condition."""

    label: str | None = None

    @property
    def is_null(self) -> bool:
        return self.label is None

    def __str__(self):
        return "<null>" if self.label is None else self.label


NULL = Condition(None)


def labeled(label: str) -> Condition:
    return Condition(str(label))


@dataclass(frozen=True)
class Guidance:
    """Classifier-free guidance ``v_neg + scale * (v_pos - v_neg)``."""

    positive: Condition
    negative: Condition
    scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.scale):
            raise ConfigError(f"guidance scale must be finite, got {self.scale!r}")

    @property
    def collapsed(self) -> bool:
        """True when one conditional evaluation suffices."""
        return self.positive == self.negative or self.scale == 1.0 or self.scale == 0.0

    @property
    def evals_per_state(self) -> int:
        return 1 if self.collapsed else 2

    def to_dict(self):
        return {"positive": self.positive.label, "negative": self.negative.label,
                "scale": self.scale}


class EvalCounter(Counter):
    """Per-purpose count of conditional velocity evaluations (one per state).

    Not shared between tasks; merge counters with ``+`` after the fact.
    """

    def add(self, purpose: str, n: int = 1):
        self[purpose] += int(n)


# --------------------------------------------------------------------------
# Gaussian mixtures


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        m = np.ascontiguousarray(self.means, dtype=np.float64)
        s = np.ascontiguousarray(self.stds, dtype=np.float64).reshape(-1)
        if m.ndim == 1:
            m = m.reshape(1, -1)
        if m.ndim != 2 or not (len(w) == len(s) == m.shape[0]) or len(w) == 0:
            raise ConfigError("mixture needs K weights, K stds and a (K, d) means array")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ConfigError("mixture parameters must be finite")
        if np.any(w <= 0):
            raise ConfigError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if np.any(s <= 0):
            raise ConfigError("component stddevs must be strictly positive")
        for name, arr in (("weights", w), ("means", m), ("stds", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_components(cls, components):
        """Build from an iterable of ``(weight, mean, std)`` triples."""
        components = list(components)
        return cls(
            weights=[c[0] for c in components],
            means=[list(np.atleast_1d(c[1])) for c in components],
            stds=[c[2] for c in components],
        )

    @classmethod
    def isotropic(cls, mean, std=1.0):
        return cls(weights=[1.0], means=[np.atleast_1d(mean)], stds=[std])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_density(self, points) -> np.ndarray | float:
        """log sum_k w_k N(x; mu_k, std_k^2 I) of the clean (t=0) data."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        d = self.dim
        var = self.stds ** 2
        sq = ((pts[:, None, :] - self.means[None]) ** 2).sum(axis=-1)
        comp = np.log(self.weights) - 0.5 * d * np.log(2 * np.pi * var) - 0.5 * sq / var
        out = logsumexp(comp, axis=1)
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        ks = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[ks] + self.stds[ks, None] * z

    def to_dict(self):
        return {"components": [
            {"weight": float(w), "mean": [float(v) for v in m], "std": float(s)}
            for w, m, s in zip(self.weights, self.means, self.stds)
        ]}


def pool_mixtures(mixtures) -> GaussianMixture:
    """Uniform-weight pooling of several mixtures into one."""
    mixtures = list(mixtures)
    share = 1.0 / len(mixtures)
    weights = np.concatenate([m.weights * share for m in mixtures])
    weights /= weights.sum()
    return GaussianMixture(
        weights=weights,
        means=np.concatenate([m.means for m in mixtures]),
        stds=np.concatenate([m.stds for m in mixtures]),
    )


def _as_batch(state, dim=None):
    arr = np.asarray(state, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.ascontiguousarray(np.atleast_2d(arr))
    if arr.ndim != 2:
        raise FieldError(f"state must be (d,) or (n, d), got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise FieldError(f"state dimension {arr.shape[1]} does not match field dimension {dim}")
    if not np.all(np.isfinite(arr)):
        raise FieldError("state has non-finite components")
    return arr, single


def _time_array(t, n):
    """Broadcast a scalar or per-state time to a contiguous (n,) array."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim > 1 or (arr.ndim == 1 and arr.shape[0] != n):
        raise FieldError(f"time must be a scalar or one value per state, got shape {arr.shape}")
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise FieldError(f"t must lie in [0, 1], got {t!r}")
    return np.ascontiguousarray(np.broadcast_to(arr, (n,)))


def gaussian_mixture_velocity(mixture: GaussianMixture, state, t: float) -> np.ndarray:
    """Exact ``E[eps - z0 | z_t = state]`` for ``z_t = t*eps + (1-t)*z0``.

    With ``var_k = t^2 + (1-t)^2 std_k^2`` and responsibilities
    ``pi_k ~ w_k N(state; (1-t) mu_k, var_k I)`` the velocity is
    ``sum_k pi_k [((t - (1-t) std_k^2) / var_k) (state - (1-t) mu_k) - mu_k]``.
    """
    batch, single = _as_batch(state, mixture.dim)
    t = _time_array(t, batch.shape[0])
    out = kernels.mixture_velocity(batch, t, mixture.weights, mixture.means, mixture.stds)
    return out[0] if single else out


def mixture_responsibilities(mixture: GaussianMixture, state, t: float) -> np.ndarray:
    batch, single = _as_batch(state, mixture.dim)
    t = _time_array(t, batch.shape[0])
    out = kernels.mixture_responsibilities(batch, t, mixture.weights, mixture.means, mixture.stds)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Conditional fields


class VelocityField:
    """Base class: a velocity ``v(state, t, condition)``.

    Subclasses implement ``labels`` and ``_velocity(condition, batch, t)``,
    which receives a validated ``(n, d)`` batch and an ``(n,)`` time array.
    """

    dim: int

    @property
    def labels(self) -> tuple:
        raise NotImplementedError

    def check_condition(self, condition: Condition):
        if not isinstance(condition, Condition):
            raise FieldError(f"expected a Condition, got {condition!r}")
        if not condition.is_null and condition.label not in self.labels:
            raise FieldError(f"unknown condition {condition.label!r}")

    def velocity(self, condition: Condition, state, t: float) -> np.ndarray:
        self.check_condition(condition)
        batch, single = _as_batch(state, self.dim)
        t = _time_array(t, batch.shape[0])
        out = self._velocity(condition, batch, t)
        return out[0] if single else out

    def _velocity(self, condition, batch, t):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ConditionedFieldSpec(VelocityField):
    """Gaussian-mixture data model, one mixture per condition label.

    ``null_mixture`` defaults to the uniform pooling of the labeled mixtures.
    """

    dim: int
    labeled_mixtures: Mapping[str, GaussianMixture]
    null_mixture: GaussianMixture | None = None
    null_is_default: bool = dc_field(default=False, init=False)

    def __post_init__(self):
        if not self.labeled_mixtures:
            raise ConfigError("field needs at least one labeled mixture")
        mixtures = dict(sorted(self.labeled_mixtures.items()))
        for label, mix in mixtures.items():
            if mix.dim != self.dim:
                raise ConfigError(f"mixture {label!r} has dimension {mix.dim}, expected {self.dim}")
        object.__setattr__(self, "labeled_mixtures", mixtures)
        if self.null_mixture is None:
            object.__setattr__(self, "null_mixture", pool_mixtures(mixtures.values()))
            object.__setattr__(self, "null_is_default", True)
        elif self.null_mixture.dim != self.dim:
            raise ConfigError("null mixture dimension mismatch")

    @property
    def labels(self):
        return tuple(self.labeled_mixtures)

    def mixture(self, condition: Condition) -> GaussianMixture:
        self.check_condition(condition)
        if condition.is_null:
            return self.null_mixture
        return self.labeled_mixtures[condition.label]

    def _velocity(self, condition, batch, t):
        mix = self.mixture(condition)
        return kernels.mixture_velocity(batch, t, mix.weights, mix.means, mix.stds)

    def to_dict(self):
        out = {
            "dim": self.dim,
            "conditions": {k: m.to_dict() for k, m in self.labeled_mixtures.items()},
        }
        if not self.null_is_default:
            out["null"] = self.null_mixture.to_dict()
        return out


class ConstantField(VelocityField):
    """Velocity depends only on the condition. Euler is exact on it."""

    def __init__(self, velocities: Mapping[str, object], null=None):
        self._vel = {k: np.asarray(v, dtype=np.float64) for k, v in velocities.items()}
        dims = {v.shape for v in self._vel.values()}
        if len(dims) != 1:
            raise ConfigError("all constant velocities need the same shape")
        self.dim = len(next(iter(self._vel.values())))
        if null is None:
            null = np.mean(list(self._vel.values()), axis=0)
        self._null = np.asarray(null, dtype=np.float64)

    @property
    def labels(self):
        return tuple(self._vel)

    def _velocity(self, condition, batch, t):
        c = self._null if condition.is_null else self._vel[condition.label]
        return np.broadcast_to(c, batch.shape).copy()


class DiagonalLinearField(VelocityField):
    """``v = slope * state + offset`` elementwise, per condition.

    ``params`` maps label to ``(slope, offset)``; ``null`` likewise.
    """

    def __init__(self, params: Mapping[str, tuple], null=None):
        self._params = {k: (np.asarray(a, dtype=np.float64), np.asarray(c, dtype=np.float64))
                        for k, (a, c) in params.items()}
        first = next(iter(self._params.values()))
        self.dim = len(first[0])
        if null is None:
            null = (np.mean([a for a, _ in self._params.values()], axis=0),
                    np.mean([c for _, c in self._params.values()], axis=0))
        self._null = (np.asarray(null[0], dtype=np.float64), np.asarray(null[1], dtype=np.float64))

    @property
    def labels(self):
        return tuple(self._params)

    def params(self, condition: Condition):
        self.check_condition(condition)
        return self._null if condition.is_null else self._params[condition.label]

    def _velocity(self, condition, batch, t):
        a, c = self.params(condition)
        return batch * a + c


# --------------------------------------------------------------------------
# Guidance and derivatives


def guided_velocity(field: VelocityField, state, t, guidance: Guidance,
                    counter: EvalCounter | None = None, purpose: str = "other") -> np.ndarray:
    """``v_neg + scale * (v_pos - v_neg)``, one evaluation when it collapses.

    ``t`` is a scalar or one time per state.
    """
    field.check_condition(guidance.positive)
    field.check_condition(guidance.negative)
    n_states = 1 if np.ndim(state) == 1 else np.shape(state)[0]
    if guidance.collapsed:
        # scale 0 keeps only the negative branch
        cond = guidance.negative if guidance.scale == 0.0 else guidance.positive
        if counter is not None:
            counter.add(purpose, n_states)
        return field.velocity(cond, state, t)
    v_neg = field.velocity(guidance.negative, state, t)
    v_pos = field.velocity(guidance.positive, state, t)
    if counter is not None:
        counter.add(purpose, 2 * n_states)
    return v_neg + guidance.scale * (v_pos - v_neg)


def fd_elementwise_derivative(field: VelocityField, state, t, guidance: Guidance,
                              zeta: float = DEFAULT_ZETA, mode: str = UNIFORM_OFFSET,
                              base: np.ndarray | None = None,
                              counter: EvalCounter | None = None,
                              purpose: str = "other") -> np.ndarray:
    """Forward-difference proxy for the diagonal of the guided Jacobian.

    ``uniform_offset`` shifts every coordinate by ``zeta`` at once (one extra
    guided evaluation); ``exact_diagonal`` perturbs one coordinate at a time
    (``d`` extra evaluations) and returns the true diagonal up to O(zeta).
    ``base`` may carry an already computed unperturbed guided velocity.
    """
    zeta = float(zeta)
    if not (zeta > 0.0 and math.isfinite(zeta)):
        raise ConfigError(f"zeta must be a positive finite real, got {zeta!r}")
    if mode not in DERIVATIVE_MODES:
        raise ConfigError(f"unknown derivative mode {mode!r}")
    state = np.asarray(state, dtype=np.float64)
    if base is None:
        base = guided_velocity(field, state, t, guidance, counter, purpose)
    if mode == UNIFORM_OFFSET:
        shifted = guided_velocity(field, state + zeta, t, guidance, counter, purpose)
        return (shifted - base) / zeta
    out = np.empty(np.broadcast_shapes(state.shape, base.shape))
    for j in range(state.shape[-1]):
        bumped = state.copy()
        bumped[..., j] += zeta
        v = guided_velocity(field, bumped, t, guidance, counter, purpose)
        out[..., j] = (v[..., j] - base[..., j]) / zeta
    return out
