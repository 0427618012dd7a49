"""Geometric stand-ins for perceptual fidelity and text alignment."""
from dataclasses import asdict, dataclass

import numpy as np

from flowbypass.errors import FieldError
from flowbypass.field import GaussianMixture


@dataclass(frozen=True)
class MetricPair:
    fidelity: float     # RMS distance to the input, lower is more faithful
    alignment: float    # log-density under the target mixture, higher is better

    def to_dict(self):
        return asdict(self)


def fidelity(a, b) -> float:
    """Per-dimension RMS distance ``||a - b|| / sqrt(d)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise FieldError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / np.sqrt(a.size))


def alignment(y0, target_mixture: GaussianMixture) -> float:
    """Log-density of ``y0`` under the clean target-conditioned mixture."""
    return float(target_mixture.log_density(np.asarray(y0, dtype=np.float64)))
