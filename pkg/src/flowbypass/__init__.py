"""Bypass-initialized editing for rectified-flow ODEs on analytic mixture fields."""
from flowbypass._backend import BACKEND
from flowbypass.bypass import (
    BypassResult,
    analytic_form_quadrature,
    compute_bypass,
    coupled_exact_oracle,
    dense_linear_oracle,
    gamma,
)
from flowbypass.editor import (
    PRESET_NAMES,
    PRESETS,
    EditConfig,
    EditResult,
    PromptCombo,
    SweepReport,
    SweepSpec,
    edit,
    run_sweep,
    sample_dataset,
)
from flowbypass.errors import ConfigError, EditError, FieldError, NumericalError
from flowbypass.field import (
    NULL,
    Condition,
    ConditionedFieldSpec,
    ConstantField,
    DiagonalLinearField,
    GaussianMixture,
    Guidance,
    fd_elementwise_derivative,
    guided_velocity,
    labeled,
)
from flowbypass.metrics import MetricPair, alignment, fidelity
from flowbypass.timegrid import TimeGrid, make_time_grid
from flowbypass.trajectory import InversionRecord, invert, reconstruct

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BypassResult", "Condition", "ConditionedFieldSpec", "ConfigError",
    "ConstantField", "DiagonalLinearField", "EditConfig", "EditError", "EditResult",
    "FieldError", "GaussianMixture", "Guidance", "InversionRecord", "MetricPair", "NULL",
    "NumericalError", "PRESETS", "PRESET_NAMES", "PromptCombo", "SweepReport", "SweepSpec",
    "TimeGrid", "alignment", "analytic_form_quadrature", "compute_bypass",
    "coupled_exact_oracle", "dense_linear_oracle", "edit", "fd_elementwise_derivative",
    "fidelity", "gamma", "guided_velocity", "invert", "labeled", "make_time_grid",
    "reconstruct", "run_sweep", "sample_dataset",
]
