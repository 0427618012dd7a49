"""Shifted timestep schedule on [0, 1]."""
from dataclasses import dataclass

import numpy as np

from flowbypass.errors import ConfigError

DEFAULT_STEPS = 50
DEFAULT_SHIFT = 3.0


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Discretization ``t_i = shift*i / (N + (shift-1)*i)`` for ``i = 0..N``.

    ``times`` is a read-only float64 array of length ``n_steps + 1``.
    """

    n_steps: int
    shift: float
    times: np.ndarray

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return float(self.times[i])

    def widths(self) -> np.ndarray:
        return np.diff(self.times)

    def index_of(self, t: float) -> int:
        """Index of the grid node equal to ``t`` (within 1e-12)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-12:
            raise ConfigError(f"t={t!r} is not a node of the grid")
        return idx

    def to_dict(self):
        return {"n_steps": self.n_steps, "shift": self.shift}


def make_time_grid(n_steps: int = DEFAULT_STEPS, shift: float = DEFAULT_SHIFT) -> TimeGrid:
    if isinstance(n_steps, bool) or int(n_steps) != n_steps or n_steps < 2:
        raise ConfigError(f"n_steps must be an integer >= 2, got {n_steps!r}")
    shift = float(shift)
    if not np.isfinite(shift) or shift <= 0.0:
        raise ConfigError(f"shift must be a positive finite real, got {shift!r}")
    n_steps = int(n_steps)
    i = np.arange(n_steps + 1, dtype=np.float64)
    times = shift * i / (n_steps + (shift - 1.0) * i)
    times[0] = 0.0
    times[-1] = 1.0
    times.setflags(write=False)
    return TimeGrid(n_steps=n_steps, shift=shift, times=times)
