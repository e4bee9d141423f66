"""Discretization scaffold: log-space spatial nodes, time nodes, surfaces.

The spatial variable is z = log x on [0, z_max], so x = 1 sits at the first
node and the PDE coefficients become constant per regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ValidatedModel

__all__ = ["Grid", "Surface", "default_z_max", "truncation_tail_bound"]

DEFAULT_N_X = 400
DEFAULT_N_T = 200


def default_z_max(model: ValidatedModel) -> float:
    """Domain truncation for the log-ratio grid.

    Four standard deviations of the most volatile regime over the horizon,
    plus the worst-case log-drift if positive, plus log 2 headroom.  Under
    the single-regime reflection bound this keeps the probability that the
    running maximum ever leaves the grid below about 1e-4.
    """
    sig_max = float(np.max(model.sigma))
    drift = float(np.max(model.mu - 0.5 * model.sigma**2))
    return 4.0 * sig_max * np.sqrt(model.T) + max(0.0, drift) * model.T + np.log(2.0)


def truncation_tail_bound(model: ValidatedModel, z_max: float) -> float:
    """Reflection-principle bound on P(sup log-path ratio > z_max), per regime.

    Treats each regime as if frozen for the whole horizon and reports the
    worst case; a diagnostic for whether a sentinel boundary could be a
    truncation artifact rather than maturity-only exercise.
    """
    worst = 0.0
    from scipy.stats import norm

    for j in range(model.m):
        nu = model.mu[j] - 0.5 * model.sigma[j] ** 2
        s = model.sigma[j] * np.sqrt(model.T)
        a = z_max
        p = norm.sf((a - nu * model.T) / s) + np.exp(2.0 * nu * a / model.sigma[j] ** 2) * norm.sf(
            (a + nu * model.T) / s
        )
        worst = max(worst, float(p))
    return worst


@dataclass(frozen=True)
class Grid:
    """Uniform nodes in z = log x on [0, z_max] and in t on [0, T]."""

    z: np.ndarray
    t: np.ndarray
    m: int

    @classmethod
    def for_model(
        cls,
        model: ValidatedModel,
        n_x: int = DEFAULT_N_X,
        n_t: int = DEFAULT_N_T,
        z_max: float | None = None,
    ) -> "Grid":
        if n_x < 3:
            raise ValueError("need at least 3 spatial nodes")
        if n_t < 1:
            raise ValueError("need at least 1 time step")
        zm = default_z_max(model) if z_max is None else float(z_max)
        if zm <= 0.0:
            raise ValueError("z_max must be positive")
        return cls(np.linspace(0.0, zm, n_x), np.linspace(0.0, model.T, n_t + 1), model.m)

    @property
    def n_x(self) -> int:
        return self.z.shape[0]

    @property
    def n_t(self) -> int:
        """Number of time steps (one less than the number of time nodes)."""
        return self.t.shape[0] - 1

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def x(self) -> np.ndarray:
        return np.exp(self.z)

    @property
    def z_max(self) -> float:
        return float(self.z[-1])

    def t_index(self, t: float) -> int:
        """Index of the nearest time node."""
        k = int(round(t / self.dt))
        return min(max(k, 0), self.n_t)


@dataclass
class Surface:
    """Scalar field over (time node, z node, regime)."""

    values: np.ndarray  # (n_t + 1, n_x, m)
    meta: str
    info: dict = field(default_factory=dict)

    def slice_t(self, k: int) -> np.ndarray:
        return self.values[k]

    def interp_z(self, k: int, x: float, j: int, grid: Grid) -> float:
        """Linear interpolation in z at a fixed time node and regime."""
        z = np.log(x)
        return float(np.interp(z, grid.z, self.values[k, :, j]))
