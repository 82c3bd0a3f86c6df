"""Time grids for the memory-kernel steppers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes t_0 = 0 < t_1 < ... < t_N = T."""

    nodes: np.ndarray
    dt: np.ndarray = field(init=False, repr=False)
    midpoints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("TimeGrid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("TimeGrid must start at t = 0")
        dt = np.diff(nodes)
        if not np.all(dt > 0):
            raise ValueError("TimeGrid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "midpoints", (nodes[1:] + nodes[:-1]) / 2.0)

    @classmethod
    def uniform(cls, t_final: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        return cls(np.linspace(0.0, float(t_final), n_steps + 1))

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def t_final(self) -> float:
        return float(self.nodes[-1])

    @property
    def quasi_uniform_ratio(self) -> float:
        """max dt / min dt; 1 for a uniform grid."""
        return float(self.dt.max() / self.dt.min())

    @property
    def is_uniform(self) -> bool:
        d0 = self.dt[0]
        return bool(np.all(np.abs(self.dt - d0) <= 1e-12 * d0))
