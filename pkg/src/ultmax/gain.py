"""The gain surface: expected payoff of stopping at once.

G(t, x, j) is the conditional expectation of max(x, future max-to-current
ratio) given the regime.  It is computed two independent ways: straight
Monte Carlo over simulated paths, and a backward finite-difference solve of
the coupled system

    mu G + G_t - mu x G_x + 1/2 sigma^2 x^2 G_xx + sum_i q_ji G(., i) = 0

with G(T, x, j) = x, a reflecting edge G_x(t, 1+, j) = 0 and zero curvature
in x at the far end (the surface is asymptotically linear in x).  In
z = log x the per-regime coefficients are diffusion sigma^2/2, advection
-(mu + sigma^2/2) and reaction mu.

From G follow its spatial derivative (a conditional CDF, so clamped to
[0, 1]), the generator image LG = x sigma^2 G_x - mu G, and the per-time sign
level h(t, j) above which LG is nonnegative.
"""

from __future__ import annotations

import numpy as np

from .grids import Grid, Surface
from .model import ValidatedModel
from .paths import reduce_terminal
from .stepping import BackwardStepper

__all__ = ["g_monte_carlo", "g_pde", "dG_dx", "lg", "h_level"]


def g_monte_carlo(
    model: ValidatedModel,
    t: float,
    x: float,
    j: int,
    n_paths: int,
    seed,
    n_steps: int = 16,
    bridge_max: bool = True,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the gain at (t, x, j).

    With the bridge maximum on, the sampled running maximum has the exact law
    for any step count, since regime jumps are merged with the grid; the
    default small n_steps just keeps the jump bookkeeping shallow.  At t = T
    the gain is x exactly and no paths are simulated.
    """
    if x < 1.0:
        raise ValueError("x must be at least 1")
    if t > model.T:
        raise ValueError("t must not exceed the horizon")
    if t == model.T:
        return float(x), 0.0

    logx = np.log(x)

    def block_stats(state, ylog, ymaxlog):
        g = np.exp(np.maximum(logx, ymaxlog))
        return np.array([g.sum(), (g * g).sum(), g.shape[0]])

    totals = np.sum(
        reduce_terminal(model, t, j, n_paths, n_steps, seed, bridge_max, block_stats), axis=0
    )
    mean = totals[0] / totals[2]
    var = max(totals[1] / totals[2] - mean**2, 0.0)
    return float(mean), float(np.sqrt(var / totals[2]))


def g_pde(model: ValidatedModel, grid: Grid) -> Surface:
    """Backward finite-difference solve of the gain surface on the grid."""
    stepper = BackwardStepper(
        model,
        grid,
        advection=-(model.mu + 0.5 * model.sigma**2),
        reaction=model.mu,
    )
    values = np.empty((grid.n_t + 1, grid.n_x, grid.m))
    values[-1] = grid.x[:, None]
    for k in range(grid.n_t - 1, -1, -1):
        values[k] = stepper.step(values[k + 1])
    return Surface(values, "G")


def dG_dx(surface_g: Surface, grid: Grid) -> Surface:
    """Spatial derivative of the gain in x, clamped to [0, 1].

    Central differences in the interior, one-sided at the far end.  The x = 1
    column carries the reflecting-edge value 0 enforced by the scheme.  The
    number of nodes clamped is recorded in ``info`` as a scheme-quality
    diagnostic (the true derivative is a conditional CDF).
    """
    u = surface_g.values
    x = grid.x
    d = np.empty_like(u)
    # Centered in the price variable: exact (derivative 1) wherever the
    # surface has gone linear in x, which is the whole far field.
    d[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (x[2:] - x[:-2])[None, :, None]
    d[:, -1] = (u[:, -1] - u[:, -2]) / (x[-1] - x[-2])
    d[:, 0] = 0.0
    # Count only violations above the far-field noise floor; everything is
    # still clamped.  Genuine scheme defects show up at 1e-3 and larger.
    clamped = int(np.sum((d < -1e-6) | (d > 1.0 + 1e-6)))
    out = np.clip(d, 0.0, 1.0)
    return Surface(out, "dGdx", info={"clamped_nodes": clamped, "clamp_fraction": clamped / d.size})


def lg(surface_g: Surface, surface_dgdx: Surface, model: ValidatedModel, grid: Grid) -> Surface:
    """Generator image LG = x sigma^2 dG/dx - mu G, pointwise.

    No re-differencing in time.  On the terminal slice the image is pinned to
    its closed form -mu(j) x: the algebraic combination is discontinuous
    there, because the derivative of the terminal condition is 1 rather than
    the left limit of the exceedance CDF.
    """
    g = surface_g.values
    d = surface_dgdx.values
    x = grid.x[None, :, None]
    sig2 = (model.sigma**2)[None, None, :]
    mu = model.mu[None, None, :]
    out = x * sig2 * d - mu * g
    out[-1] = -model.mu[None, :] * grid.x[:, None]
    return Surface(out, "LG")


def h_level(surface_lg: Surface, grid: Grid, j: int, eps_sign: float) -> np.ndarray:
    """Per-time level above which LG stays above -eps_sign at every node.

    Scans each time slice from the top of the grid; returns +inf where even
    the topmost node dips below -eps_sign (the level lies beyond z_max, or
    nowhere).  Sign tests tighter than the scheme tolerance are meaningless,
    hence the eps_sign slack.
    """
    v = surface_lg.values[:, :, j]
    out = np.empty(v.shape[0])
    for k in range(v.shape[0]):
        bad = v[k] < -eps_sign
        if bad[-1]:
            out[k] = np.inf
        elif not bad.any():
            out[k] = grid.x[0]
        else:
            out[k] = grid.x[int(np.flatnonzero(bad).max()) + 1]
    return out
