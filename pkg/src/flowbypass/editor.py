"""The three-stage bypass edit and the ablation sweeps built on it."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

from flowbypass.bypass import compute_bypass
from flowbypass.errors import ConfigError, EditError, FieldError, NumericalError
from flowbypass.field import (
    DEFAULT_ZETA,
    DERIVATIVE_MODES,
    NULL,
    UNIFORM_OFFSET,
    Condition,
    EvalCounter,
    Guidance,
    VelocityField,
)
from flowbypass.metrics import MetricPair, alignment, fidelity
from flowbypass.timegrid import DEFAULT_SHIFT, DEFAULT_STEPS, make_time_grid
from flowbypass.trajectory import RECONSTRUCTION, invert, reconstruct

ORIGIN, EDIT, NULL_ROLE = "origin", "edit", "null"
_ROLE_CODES = {"x": ORIGIN, "y": EDIT, "e": NULL_ROLE}


@dataclass(frozen=True)
class PromptCombo:
    """Roles of the four prompts: inversion and reconstruction, positive and negative."""

    inv_positive: str
    inv_negative: str
    rec_positive: str
    rec_negative: str

    def __post_init__(self):
        for role in asdict(self).values():
            if role not in (ORIGIN, EDIT, NULL_ROLE):
                raise ConfigError(f"unknown prompt role {role!r}")

    @classmethod
    def from_name(cls, name: str) -> "PromptCombo":
        """Parse ``"ee/yx"``: x = origin, y = edit, e = null; positive first."""
        try:
            inv, rec = name.split("/")
            roles = [_ROLE_CODES[c] for c in inv + rec]
        except (ValueError, KeyError):
            raise ConfigError(f"bad prompt combination {name!r}") from None
        if len(roles) != 4:
            raise ConfigError(f"bad prompt combination {name!r}")
        return cls(*roles)

    @property
    def name(self) -> str:
        codes = {v: k for k, v in _ROLE_CODES.items()}
        r = [codes[x] for x in (self.inv_positive, self.inv_negative,
                                 self.rec_positive, self.rec_negative)]
        return f"{r[0]}{r[1]}/{r[2]}{r[3]}"

    def conditions(self, origin: Condition, target: Condition):
        lookup = {ORIGIN: origin, EDIT: target, NULL_ROLE: NULL}
        return tuple(lookup[r] for r in (self.inv_positive, self.inv_negative,
                                          self.rec_positive, self.rec_negative))


# The twelve rows of the prompt-choice ablation, in table order.
PRESET_NAMES = (
    "xy/yx", "xy/ye", "xy/yy",
    "xe/yx", "xe/ye", "xe/yy",
    "xx/yy", "xx/yx",
    "ey/yx",
    "ee/yy", "ee/ye", "ee/yx",
)
PRESETS = {name: PromptCombo.from_name(name) for name in PRESET_NAMES}
DEFAULT_COMBO = "ee/yx"


@dataclass(frozen=True)
class EditConfig:
    n_steps: int = DEFAULT_STEPS
    shift: float = DEFAULT_SHIFT
    cfg_scale: float = 2.0
    cfg_scale_inv: float | None = None     # None shares cfg_scale
    bypass_index: int = 30
    zeta: float = DEFAULT_ZETA
    combo: str = DEFAULT_COMBO
    derivative_mode: str = UNIFORM_OFFSET
    use_bypass: bool = True
    seed: int = 0

    def __post_init__(self):
        make_time_grid(self.n_steps, self.shift)
        if not 0 <= self.bypass_index <= self.n_steps:
            raise ConfigError(f"bypass_index must be in [0, {self.n_steps}], got {self.bypass_index}")
        if not (self.zeta > 0 and math.isfinite(self.zeta)):
            raise ConfigError(f"zeta must be positive, got {self.zeta!r}")
        if self.derivative_mode not in DERIVATIVE_MODES:
            raise ConfigError(f"unknown derivative mode {self.derivative_mode!r}")
        PromptCombo.from_name(self.combo)
        for s in (self.cfg_scale, self.cfg_scale_inv):
            if s is not None and not math.isfinite(s):
                raise ConfigError("guidance scales must be finite")

    @property
    def prompt_combo(self) -> PromptCombo:
        return PromptCombo.from_name(self.combo)

    def guidances(self, origin: Condition, target: Condition):
        ip, in_, rp, rn = self.prompt_combo.conditions(origin, target)
        inv_scale = self.cfg_scale if self.cfg_scale_inv is None else self.cfg_scale_inv
        return Guidance(ip, in_, inv_scale), Guidance(rp, rn, self.cfg_scale)

    def to_dict(self):
        return asdict(self)


@dataclass
class EditResult:
    x0: np.ndarray
    x_tB: np.ndarray
    b_star: np.ndarray
    y_tB: np.ndarray
    y0: np.ndarray
    t_B: float
    config: EditConfig
    inversion: object                     # InversionRecord
    reconstruction_path: np.ndarray       # states at t_B, ..., t_0
    metrics: MetricPair | None
    eval_counters: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "t_B": self.t_B,
            "x0": self.x0.tolist(),
            "x_tB": self.x_tB.tolist(),
            "b_star": self.b_star.tolist(),
            "y_tB": self.y_tB.tolist(),
            "y0": self.y0.tolist(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "eval_counters": dict(sorted(self.eval_counters.items())),
            "inversion": self.inversion.summary(),
        }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (NumericalError, FieldError, FloatingPointError) as exc:
        raise EditError(name, exc) from exc


def edit(field: VelocityField, x0, origin: Condition, target: Condition,
         config: EditConfig = EditConfig()) -> EditResult:
    """Invert, compute the bypass at ``config.bypass_index``, reconstruct from there."""
    field.check_condition(origin)
    field.check_condition(target)
    x0 = np.asarray(x0, dtype=np.float64)
    grid = make_time_grid(config.n_steps, config.shift)
    g_inv, g_rec = config.guidances(origin, target)
    B = config.bypass_index

    record = _stage("inversion", invert, field, x0, grid, g_inv, g_rec,
                    config.zeta, config.derivative_mode)
    if config.use_bypass:
        b_star = _stage("bypass", compute_bypass, record, B).b_star
    else:
        b_star = np.zeros_like(x0)
    x_tB = record.states[B].copy()
    y_tB = x_tB + b_star
    counter = EvalCounter(record.eval_count)
    y0, path = _stage("reconstruction", reconstruct, field, y_tB, grid, B, g_rec,
                      counter=counter, return_path=True)
    counter.setdefault(RECONSTRUCTION, 0)

    metrics = None
    if hasattr(field, "mixture"):
        metrics = MetricPair(fidelity=fidelity(x0, y0),
                             alignment=alignment(y0, field.mixture(target)))
    return EditResult(x0=x0, x_tB=x_tB, b_star=b_star, y_tB=y_tB, y0=y0, t_B=grid[B],
                      config=config, inversion=record, reconstruction_path=path,
                      metrics=metrics, eval_counters=dict(counter))


# --------------------------------------------------------------------------
# Sweeps

SWEEP_AXES = {
    "bypass_index": "bypass_index",
    "cfg_scale": "cfg_scale",
    "zeta": "zeta",
    "combo": "combo",
    "no_bypass_index": "bypass_index",
}


@dataclass(frozen=True)
class SweepSpec:
    """One axis of settings over a fixed base configuration.

    ``no_bypass_index`` sweeps the reconstruction start with the bypass off.
    """

    axis: str
    values: tuple
    base: EditConfig = EditConfig()

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {sorted(SWEEP_AXES)}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:
            self.config_for(v)

    def config_for(self, value) -> EditConfig:
        changes = {SWEEP_AXES[self.axis]: value}
        if self.axis == "no_bypass_index":
            changes["use_bypass"] = False
        return replace(self.base, **changes)


@dataclass
class SweepReport:
    axis: str
    settings: list
    points: list      # dicts ordered by (setting index, dataset index)
    means: list       # one dict per setting

    def to_dict(self):
        return {"axis": self.axis, "settings": self.settings, "means": self.means,
                "points": self.points}

    def mean_series(self, key):
        return [m[key] for m in self.means]


def sample_dataset(field, origin: Condition, target: Condition, count: int, seed: int):
    """``count`` inputs drawn from the origin mixture with a Philox generator."""
    if count < 1:
        raise ConfigError("dataset count must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    xs = field.mixture(origin).sample(rng, count)
    return [(x, origin, target) for x in xs]


def _run_point(args):
    field, setting_idx, point_idx, x0, origin, target, config = args
    row = {"setting_index": setting_idx, "point_index": point_idx,
           "fidelity": None, "alignment": None, "error": None}
    try:
        res = edit(field, x0, origin, target, config)
        row["fidelity"] = res.metrics.fidelity
        row["alignment"] = res.metrics.alignment
    except (EditError, ConfigError, FieldError) as exc:
        row["error"] = str(exc)
    return row


def run_sweep(field, dataset, sweep: SweepSpec, jobs: int = 1) -> SweepReport:
    """Mean fidelity and alignment per setting over the dataset.

    Point failures are recorded, not raised. Output order is fixed, so
    ``jobs`` does not change the report.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    tasks = []
    for si, value in enumerate(sweep.values):
        cfg = sweep.config_for(value)
        for pi, (x0, origin, target) in enumerate(dataset):
            tasks.append((field, si, pi, np.asarray(x0, dtype=np.float64), origin, target, cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_run_point(t) for t in tasks]
    rows.sort(key=lambda r: (r["setting_index"], r["point_index"]))

    means = []
    for si, value in enumerate(sweep.values):
        ok = [r for r in rows if r["setting_index"] == si and r["error"] is None]
        means.append({
            "setting": value,
            "n_ok": len(ok),
            "n_failed": sum(1 for r in rows if r["setting_index"] == si) - len(ok),
            "mean_fidelity": float(np.mean([r["fidelity"] for r in ok])) if ok else None,
            "mean_alignment": float(np.mean([r["alignment"] for r in ok])) if ok else None,
        })
    return SweepReport(axis=sweep.axis, settings=list(sweep.values), points=rows, means=means)


def count_violations(series, increasing=True) -> int:
    """Adjacent pairs breaking monotonicity (non-strict)."""
    sign = 1 if increasing else -1
    return sum(1 for a, b in zip(series, series[1:]) if sign * (b - a) < 0)
