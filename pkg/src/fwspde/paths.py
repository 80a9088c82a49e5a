"""Time grids, control paths, and state trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bases import SpectralBasis, SpectralField


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_end] with n_steps steps (n_steps + 1 nodes)."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.t_end <= 0 or self.n_steps < 1:
            raise ValueError("need t_end > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def trapezoid_energy(grid: TimeGrid, values: np.ndarray) -> float:
    """(1/2) integral of |u(t)|_H^2 by the trapezoid rule on grid nodes."""
    sq = np.sum(values ** 2, axis=1)
    return float(0.5 * np.sum(grid.trapezoid_weights() * sq))


@dataclass(frozen=True, eq=False)
class ControlPath:
    """H-valued control on a time grid; values[n, j] is mode j at node n."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.n_steps + 1:
            raise ValueError("values must be (n_steps + 1, n_noise_modes)")
        if not np.isfinite(v).all():
            raise ValueError("control values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n_noise_modes(self) -> int:
        return self.values.shape[1]

    @property
    def energy(self) -> float:
        return trapezoid_energy(self.grid, self.values)

    @staticmethod
    def zero(grid: TimeGrid, n_noise_modes: int) -> "ControlPath":
        return ControlPath(grid, np.zeros((grid.n_steps + 1, n_noise_modes)))

    @staticmethod
    def constant(grid: TimeGrid, value) -> "ControlPath":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return ControlPath(grid, np.tile(value, (grid.n_steps + 1, 1)))

    def resample(self, grid: TimeGrid) -> "ControlPath":
        """Linear interpolation onto another grid (free optimization knob)."""
        if grid.n_steps == self.grid.n_steps and grid.t_end == self.grid.t_end:
            return self
        out = np.empty((grid.n_steps + 1, self.n_noise_modes))
        for j in range(self.n_noise_modes):
            out[:, j] = np.interp(grid.nodes, self.grid.nodes, self.values[:, j])
        return ControlPath(grid, out)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Basis-coefficient path; coeffs[n] is the state at node n."""

    basis: SpectralBasis
    grid: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.grid.n_steps + 1, self.basis.n_modes):
            raise ValueError("coeffs must be (n_steps + 1, n_modes)")
        object.__setattr__(self, "coeffs", c)

    def state(self, n: int) -> SpectralField:
        return SpectralField(self.basis, self.coeffs[n])

    @property
    def initial(self) -> SpectralField:
        return self.state(0)

    @property
    def terminal(self) -> SpectralField:
        return self.state(self.grid.n_steps)

    def node_l2(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    @property
    def path_norms(self) -> float:
        """sup over nodes of the H-norm."""
        return float(np.max(self.node_l2()))

    def sup_distance(self, other: "Trajectory") -> float:
        """sup over nodes of the H-norm of the difference."""
        if other.coeffs.shape != self.coeffs.shape:
            raise ValueError("trajectories live on different grids")
        return float(np.max(np.linalg.norm(self.coeffs - other.coeffs, axis=1)))

    @staticmethod
    def from_rows(basis: SpectralBasis, grid: TimeGrid, rows: np.ndarray) -> "Trajectory":
        return Trajectory(basis, grid, rows)
