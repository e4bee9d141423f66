"""Path-level regret evaluation of stopping policies.

The regret of a stopping rule is the expected ratio of the global running
maximum over the whole horizon to the level at which the rule stopped; the
optimal rule minimizes it.  Policies read only current information: the
stopping test at a grid time uses the ratio process and regime at that time,
and boundary lookups use the latest solver time node not after the current
time (never anticipating).

All policies in a comparison share the same simulated paths (common random
numbers), so paired differences carry far less variance than the individual
estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .boundary import Boundary
from .model import ValidatedModel
from .paths import _advance_block, _block_sizes

__all__ = ["Policy", "RegretEstimate", "PairedComparison", "evaluate_policy", "compare_policies"]


@dataclass(frozen=True)
class Policy:
    """A stopping rule: immediate, at maturity, boundary, or fixed thresholds."""

    kind: str
    boundary: Optional[Boundary] = None
    levels: Optional[np.ndarray] = None

    @classmethod
    def immediate(cls) -> "Policy":
        return cls("immediate")

    @classmethod
    def at_maturity(cls) -> "Policy":
        return cls("at_maturity")

    @classmethod
    def from_boundary(cls, boundary: Boundary) -> "Policy":
        return cls("boundary", boundary=boundary)

    @classmethod
    def fixed_threshold(cls, levels) -> "Policy":
        levels = np.atleast_1d(np.asarray(levels, dtype=float))
        if np.any(levels < 1.0):
            raise ValueError("threshold levels must be at least 1")
        return cls("fixed_threshold", levels=levels)

    def name(self) -> str:
        if self.kind == "fixed_threshold":
            return "threshold(" + ",".join(f"{v:g}" for v in self.levels) + ")"
        return self.kind


@dataclass(frozen=True)
class RegretEstimate:
    mean: float
    std_error: float
    n_paths: int
    policy: Policy


@dataclass(frozen=True)
class PairedComparison:
    """Mean regret difference a - b under common random numbers."""

    policy_a: str
    policy_b: str
    diff: float
    diff_se: float


def _stop_log_levels(policy: Policy, model: ValidatedModel, times: np.ndarray) -> np.ndarray:
    """Per (step, regime) log threshold on the ratio process; inf = never.

    Immediate stops at step 0 regardless; at-maturity never stops early; both
    are encoded as thresholds so every policy runs through one code path.
    The final step always stops.
    """
    n_steps = len(times) - 1
    thr = np.full((n_steps + 1, model.m), np.inf)
    if policy.kind == "immediate":
        thr[0] = -np.inf
    elif policy.kind == "at_maturity":
        pass
    elif policy.kind == "fixed_threshold":
        if policy.levels.shape[0] != model.m:
            raise ValueError("need one threshold level per regime")
        thr[:] = np.log(policy.levels)[None, :]
    elif policy.kind == "boundary":
        b = policy.boundary
        if abs(b.grid.t[-1] - times[-1]) > 1e-12:
            raise ValueError("boundary horizon does not match the model horizon")
        for k, t in enumerate(times):
            idx = int(np.searchsorted(b.grid.t, t + 1e-12, side="right")) - 1
            idx = min(max(idx, 0), b.grid.n_t)
            with np.errstate(divide="ignore"):
                thr[k] = np.log(b.b_smoothed[idx])
    else:
        raise ValueError(f"unknown policy kind {policy.kind!r}")
    thr[n_steps] = -np.inf
    return thr


def _regret_pass(model, policies, j0, n_paths, n_steps, seed, bridge_max):
    """One streaming pass producing per-policy regret sums and pairwise stats."""
    times = np.linspace(0.0, model.T, n_steps + 1)
    thresholds = [_stop_log_levels(p, model, times) for p in policies]
    P = len(policies)
    sums = np.zeros(P)
    sumsq = np.zeros(P)
    pair_sum = np.zeros((P, P))
    pair_sumsq = np.zeros((P, P))
    total = 0

    for b, size in enumerate(_block_sizes(n_paths)):
        stopped = np.zeros((P, size), dtype=bool)
        log_y_tau = np.zeros((P, size))

        def on_step(k, state, ylog, ymaxlog):
            # Ratio process from x0 = 1 in log scale; info up to this step only.
            xlog = np.maximum(0.0, ymaxlog) - ylog
            for p in range(P):
                hit = xlog >= thresholds[p][k, state]
                newly = hit & ~stopped[p]
                if newly.any():
                    log_y_tau[p][newly] = ylog[newly]
                    stopped[p][newly] = True

        _, _, final_ymaxlog = _advance_block(model, times, j0, size, seed, b, bridge_max, on_step)
        regrets = np.exp(final_ymaxlog[None, :] - log_y_tau)
        sums += regrets.sum(axis=1)
        sumsq += (regrets**2).sum(axis=1)
        d = regrets[:, None, :] - regrets[None, :, :]
        pair_sum += d.sum(axis=2)
        pair_sumsq += (d**2).sum(axis=2)
        total += size

    return sums, sumsq, pair_sum, pair_sumsq, total


def evaluate_policy(
    model: ValidatedModel,
    policy: Policy,
    j0: int,
    n_paths: int,
    n_steps: int,
    seed,
    bridge_max: bool = True,
) -> RegretEstimate:
    """Monte Carlo regret of one policy started at t = 0, ratio 1, regime j0."""
    sums, sumsq, _, _, n = _regret_pass(model, [policy], j0, n_paths, n_steps, seed, bridge_max)
    mean = sums[0] / n
    var = max(sumsq[0] / n - mean**2, 0.0)
    return RegretEstimate(float(mean), float(np.sqrt(var / n)), n, policy)


def compare_policies(
    model: ValidatedModel,
    policies: Sequence[Policy],
    j0: int,
    n_paths: int,
    n_steps: int,
    seed,
    bridge_max: bool = True,
):
    """Evaluate policies on shared paths; returns (estimates, paired diffs).

    Estimates come back sorted by mean regret (best first); the paired table
    covers every ordered pair once.
    """
    if len(policies) < 2:
        raise ValueError("need at least two policies to compare")
    sums, sumsq, pair_sum, pair_sumsq, n = _regret_pass(
        model, list(policies), j0, n_paths, n_steps, seed, bridge_max
    )
    estimates = []
    for p, pol in enumerate(policies):
        mean = sums[p] / n
        var = max(sumsq[p] / n - mean**2, 0.0)
        estimates.append(RegretEstimate(float(mean), float(np.sqrt(var / n)), n, pol))
    pairs = []
    for a in range(len(policies)):
        for b in range(a + 1, len(policies)):
            dm = pair_sum[a, b] / n
            dvar = max(pair_sumsq[a, b] / n - dm**2, 0.0)
            pairs.append(
                PairedComparison(policies[a].name(), policies[b].name(), float(dm), float(np.sqrt(dvar / n)))
            )
    order = np.argsort([e.mean for e in estimates], kind="stable")
    return [estimates[i] for i in order], pairs
