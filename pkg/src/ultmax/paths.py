"""Joint simulation of (regime, asset, running maximum) and the ratio process.

Paths are advanced block by block on a uniform time grid.  Regime jumps
inside a step are merged with the grid exactly: each frozen-regime segment
gets an exact lognormal update, and the running maximum is refreshed at every
merged event time.  An optional Brownian-bridge draw adds the intra-segment
maximum, which makes the law of the recorded running maximum exact over each
frozen-regime segment (the default leaves it off, with O(sqrt(dt)) bias).

The inner loop tracks log Y and log of the running max; consumers that need
levels exponentiate once at the end.

Randomness: every (block, step) pair gets its own generator derived from the
root seed, so results do not depend on how blocks are scheduled, and the
draws for a step never influence earlier steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .markov import _step_jumps, derive_rng, embedded_jump_cdf
from .model import ValidatedModel

__all__ = [
    "PathBundle",
    "XPath",
    "simulate_paths",
    "lift_to_x",
    "iter_path_blocks",
    "reduce_terminal",
    "BLOCK_SIZE",
]

# Fixed block size: seeds are derived per (block, step), so the partition into
# blocks is part of the reproducibility contract and must not depend on the
# execution environment.
BLOCK_SIZE = 1 << 16

_MAX_JUMP_ROUNDS = 100_000


@dataclass(frozen=True)
class PathBundle:
    """Simulated block of paths on a uniform grid, Y normalized to 1 at t0."""

    n_paths: int
    n_steps: int
    times: np.ndarray
    states: np.ndarray   # (n_paths, n_steps + 1) regime indices
    y: np.ndarray        # (n_paths, n_steps + 1) asset level, y[:, 0] = 1
    ymax: np.ndarray     # (n_paths, n_steps + 1) running max of y from t0
    seed: int


@dataclass(frozen=True)
class XPath:
    """Ratio process max(x0 * Y_t0, running max) / Y along a bundle."""

    x: np.ndarray
    x0: float


def _log_update(ylog, ymaxlog, mu_s, sig_s, seg, rng, bridge_max):
    """Advance log Y over frozen-regime segments of lengths ``seg`` in place.

    Draws one normal per path (and one uniform when ``bridge_max``).  The
    bridge draw samples the maximum of the log-path over the segment given
    its endpoints; zero-length segments reduce to no-ops without special
    casing because log1p(-u) stays finite.
    """
    dlog = (mu_s - 0.5 * sig_s**2) * seg + sig_s * np.sqrt(seg) * rng.standard_normal(ylog.shape[0])
    if bridge_max:
        u = rng.random(ylog.shape[0])
        var = sig_s**2 * seg
        peak = 0.5 * (dlog + np.sqrt(dlog * dlog - 2.0 * var * np.log1p(-u)))
        np.maximum(ymaxlog, ylog + peak, out=ymaxlog)
        ylog += dlog
    else:
        ylog += dlog
        np.maximum(ymaxlog, ylog, out=ymaxlog)


def _advance_block(model, times, j0, n, seed, block_index, bridge_max, on_step=None):
    """Evolve one block of n paths; returns final (state, ylog, ymaxlog).

    ``on_step(k, state, ylog, ymaxlog)`` is invoked at k = 0 and after every
    step.  The callback must copy anything it wants to keep.
    """
    mu, sigma = model.mu, model.sigma
    rates = model.jump_rates()
    cdf = embedded_jump_cdf(model.Q)
    no_jumps = not np.any(rates > 0.0)

    state = np.full(n, int(j0), dtype=np.int16)
    ylog = np.zeros(n)
    ymaxlog = np.zeros(n)
    if on_step is not None:
        on_step(0, state, ylog, ymaxlog)

    for k in range(len(times) - 1):
        rng = derive_rng(seed, block_index, k)
        dt = times[k + 1] - times[k]
        if no_jumps:
            _log_update(ylog, ymaxlog, mu[state], sigma[state], dt, rng, bridge_max)
            if on_step is not None:
                on_step(k + 1, state, ylog, ymaxlog)
            continue

        remaining = np.full(n, dt)
        holding, nxt, jumped = _step_jumps(rates, cdf, state, remaining, rng)
        seg = np.where(jumped, holding, remaining)
        _log_update(ylog, ymaxlog, mu[state], sigma[state], seg, rng, bridge_max)
        state = nxt
        remaining -= seg
        idx = np.flatnonzero(jumped)
        rounds = 0
        while idx.size:
            rounds += 1
            if rounds > _MAX_JUMP_ROUNDS:
                raise RuntimeError("regime jump loop did not terminate; check Q scaling")
            sub_state = state[idx]
            sub_rem = remaining[idx]
            holding, nxt, jumped = _step_jumps(rates, cdf, sub_state, sub_rem, rng)
            seg = np.where(jumped, holding, sub_rem)
            ylog_sub = ylog[idx]
            ymaxlog_sub = ymaxlog[idx]
            _log_update(ylog_sub, ymaxlog_sub, mu[sub_state], sigma[sub_state], seg, rng, bridge_max)
            ylog[idx] = ylog_sub
            ymaxlog[idx] = ymaxlog_sub
            state[idx] = nxt
            remaining[idx] = sub_rem - seg
            idx = idx[jumped]
        if on_step is not None:
            on_step(k + 1, state, ylog, ymaxlog)
    return state, ylog, ymaxlog


def _block_sizes(n_paths: int):
    sizes = [BLOCK_SIZE] * (n_paths // BLOCK_SIZE)
    if n_paths % BLOCK_SIZE:
        sizes.append(n_paths % BLOCK_SIZE)
    return sizes


def _materialize(model, t0, j0, n_paths, n_steps, seed, bridge_max, offset_blocks):
    times = np.linspace(t0, model.T, n_steps + 1)
    sizes = _block_sizes(n_paths)
    states = np.empty((n_steps + 1, n_paths), dtype=np.int16)
    y = np.empty((n_steps + 1, n_paths))
    ymax = np.empty((n_steps + 1, n_paths))
    lo = 0
    for b, size in enumerate(sizes):
        sl = slice(lo, lo + size)

        def record(k, st, yl, ml):
            states[k, sl] = st
            y[k, sl] = yl
            ymax[k, sl] = ml

        _advance_block(model, times, j0, size, seed, b + offset_blocks, bridge_max, record)
        lo += size
    np.exp(y, out=y)
    np.exp(ymax, out=ymax)
    return PathBundle(n_paths, n_steps, times, states.T, y.T, ymax.T, int(seed))


def simulate_paths(
    model: ValidatedModel,
    t0: float,
    j0: int,
    n_paths: int,
    n_steps: int,
    seed,
    bridge_max: bool = False,
) -> PathBundle:
    """Simulate n_paths of (regime, Y, running max) on [t0, T], Y_t0 = 1.

    The regime path is sampled exactly; between merged event times Y gets the
    exact frozen-regime lognormal update.  Deterministic given seed.
    """
    if not t0 < model.T:
        raise ValueError("t0 must be strictly before the horizon")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    return _materialize(model, t0, j0, n_paths, n_steps, seed, bridge_max, 0)


def iter_path_blocks(
    model: ValidatedModel,
    t0: float,
    j0: int,
    n_paths: int,
    n_steps: int,
    seed,
    bridge_max: bool = False,
) -> Iterator[PathBundle]:
    """Yield the simulation of :func:`simulate_paths` as per-block bundles.

    Identical values in identical path order, but with bounded memory;
    estimators reduce block by block.
    """
    for b, size in enumerate(_block_sizes(n_paths)):
        yield _materialize(model, t0, j0, size, n_steps, seed, bridge_max, b)


def reduce_terminal(
    model: ValidatedModel,
    t0: float,
    j0: int,
    n_paths: int,
    n_steps: int,
    seed,
    bridge_max: bool,
    fn: Callable[[np.ndarray, np.ndarray, np.ndarray], object],
    t_end: float | None = None,
):
    """Apply ``fn(state, log_y, log_ymax)`` to the final slice of each block.

    Simulates on [t0, t_end] (the horizon by default).  Returns per-block
    results in block order (fixed reduction order, so sums over blocks are
    reproducible regardless of scheduling).
    """
    times = np.linspace(t0, model.T if t_end is None else t_end, n_steps + 1)
    out = []
    for b, size in enumerate(_block_sizes(n_paths)):
        state, ylog, ymaxlog = _advance_block(model, times, j0, size, seed, b, bridge_max)
        out.append(fn(state, ylog, ymaxlog))
    return out


def lift_to_x(bundle: PathBundle, x0: float) -> XPath:
    """Ratio process started at x0 >= 1: max(x0 * y[0], ymax[s]) / y[s]."""
    if x0 < 1.0:
        raise ValueError("x0 must be at least 1")
    x = np.maximum(x0 * bundle.y[:, :1], bundle.ymax) / bundle.y
    return XPath(x, float(x0))
