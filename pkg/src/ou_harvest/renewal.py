"""Regenerated process bookkeeping: cycles, harvest flow, the cumulative
reward R(t), and the renewal-reward identity that ties the long-run average
R(t)/t to the closed-form ratio E[Q]/E[T].

A cycle runs the process from the reset level x0 until it leaves the
corridor, collects q_eta or q_theta depending on the boundary hit, and
resets to x0 instantaneously.  Cycles are therefore i.i.d., and by the
renewal-reward theorem R(t)/t converges almost surely to E[Q]/E[T] with

    E[Q] = q_theta + (q_eta - q_theta) * rho(x0),    E[T] = psi(x0).

Counting convention: N(t) is the number of cycles COMPLETED by time t and
R(t) sums rewards 1..N(t).  A sum starting at n = 0 would book one harvest
at time zero; that constant offset does not affect the long-run average and
the completed-cycle convention keeps R(t) well defined for every horizon
(see INDEXING_NOTE, which reports carry verbatim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .functionals import psi, rho
from .ou_model import Boundary, first_passage_batch, DEFAULT_STEP_CAP

__all__ = [
    "CycleRecord",
    "HarvestPolicy",
    "INDEXING_NOTE",
    "InsufficientCyclesError",
    "RenewalCheck",
    "RenewalRunStats",
    "expected_ratio",
    "level_reset_policy",
    "pool_runs",
    "renewal_theorem_check",
    "simulate_renewal",
]

INDEXING_NOTE = (
    "N(t) counts completed cycles and R(t) sums rewards for cycles 1..N(t); "
    "a convention that also booked a harvest at time zero would shift R(t) by "
    "a constant without changing the long-run average."
)

MIN_CYCLES_FOR_CHECK = 100


class InsufficientCyclesError(RuntimeError):
    """Too few completed cycles for a meaningful standard-error estimate."""


@dataclass(frozen=True)
class HarvestPolicy:
    """Amount collected at each boundary: q_eta on hitting eta (negative for
    a restock), q_theta on hitting theta."""

    q_eta: float
    q_theta: float

    def __post_init__(self):
        if not (math.isfinite(self.q_eta) and math.isfinite(self.q_theta)):
            raise ValueError(f"harvest amounts must be finite, got {self.q_eta}, {self.q_theta}")

    def reward(self, boundary):
        return self.q_eta if boundary is Boundary.LOWER else self.q_theta


def level_reset_policy(eta, theta, x):
    """The policy Q(y) = y - x: restock eta - x at the lower boundary,
    harvest theta - x at the upper one."""
    return HarvestPolicy(q_eta=eta - x, q_theta=theta - x)


@dataclass(frozen=True)
class CycleRecord:
    boundary: Boundary
    duration: float
    reward: float


@dataclass(frozen=True)
class RenewalRunStats:
    """Outcome of one renewal simulation over a fixed horizon.

    n_cycles is the completed-cycle count N(horizon); the final straddling
    cycle contributes neither a record nor reward, while its elapsed time
    still counts in the denominator of time_average = R(horizon)/horizon.
    """

    horizon: float
    n_cycles: int
    total_reward: float
    cycle_records: tuple
    time_average: float

    def __post_init__(self):
        if self.n_cycles != len(self.cycle_records):
            raise ValueError(
                f"n_cycles={self.n_cycles} does not match {len(self.cycle_records)} records"
            )


def expected_ratio(ctx, x, policy):
    """Closed-form long-run harvest rate E[Q]/E[T] =
    (q_theta + (q_eta - q_theta) rho(x)) / psi(x) for x strictly inside the
    corridor.  At a boundary psi vanishes; the boundary limit is the job of
    the sign-analysis module, so boundary x is rejected here."""
    if not (ctx.eta < x < ctx.theta):
        raise ValueError(
            f"x={x} must be strictly inside ({ctx.eta}, {ctx.theta}); "
            "psi(x) vanishes at the boundaries"
        )
    numer = policy.q_theta + (policy.q_eta - policy.q_theta) * rho(ctx, x)
    return numer / psi(ctx, x)


def simulate_renewal(params, corridor, policy, horizon, h, stream,
                     bridge_correction=False, step_cap=DEFAULT_STEP_CAP):
    """Run the regenerated process from x0 until the cumulative cycle time
    exceeds the horizon, recording (boundary, duration, reward) per cycle.

    Cycles are i.i.d. first passages from x0, so they are generated in
    vectorized batches on the run's stream and laid end to end; the result
    is a pure function of (arguments, stream seed) regardless of batching.
    """
    if not horizon > 0.0:
        raise ValueError(f"horizon={horizon} must be > 0")
    records = []
    elapsed = 0.0
    total_reward = 0.0
    done = False
    batch = 64
    while not done:
        hit_upper, steps = first_passage_batch(
            corridor, h, params, stream, batch,
            bridge_correction=bridge_correction, step_cap=step_cap,
        )
        durations = steps * h
        for up, duration in zip(hit_upper, durations):
            if elapsed + duration > horizon:
                done = True
                break
            elapsed += duration
            boundary = Boundary.UPPER if up else Boundary.LOWER
            reward = policy.reward(boundary)
            total_reward += reward
            records.append(CycleRecord(boundary=boundary, duration=float(duration), reward=reward))
        else:
            # Size the next batch from the observed mean duration, with slack
            # so most runs finish in two or three batches.
            mean_dur = elapsed / len(records) if records else float(np.mean(durations))
            remaining = max(horizon - elapsed, 0.0)
            batch = int(min(max(16, 1.25 * remaining / mean_dur + 8), 65536))
    return RenewalRunStats(
        horizon=float(horizon),
        n_cycles=len(records),
        total_reward=total_reward,
        cycle_records=tuple(records),
        time_average=total_reward / horizon,
    )


def pool_runs(runs):
    """Merge independent runs into one pooled RenewalRunStats (cycles are
    i.i.d. across runs, so pooling is legitimate for ratio estimation)."""
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run to pool")
    records = []
    for run in runs:
        records.extend(run.cycle_records)
    horizon = sum(run.horizon for run in runs)
    total_reward = sum(run.total_reward for run in runs)
    return RenewalRunStats(
        horizon=horizon,
        n_cycles=len(records),
        total_reward=total_reward,
        cycle_records=tuple(records),
        time_average=total_reward / horizon,
    )


@dataclass(frozen=True)
class RenewalCheck:
    """Comparison of a simulated time average against the analytic ratio.

    std_error is the delta-method standard error of the ratio estimator,
    computed from the per-cycle residuals Q_i - ratio_hat * T_i; the
    difference being within three of these is the usual consistency bar.
    """

    time_average: float
    analytic_ratio: float
    difference: float
    std_error: float
    n_cycles: int
    within_three_se: bool


def renewal_theorem_check(stats, analytic_ratio):
    """Check lim R(t)/t = E[Q]/E[T] on a finished run (or pooled records).

    `stats` may be a RenewalRunStats or any object with cycle_records and
    time_average.  Refuses to report on fewer than 100 cycles, where the
    cycle-level standard error is itself too noisy to trust.
    """
    records = stats.cycle_records
    n = len(records)
    if n < MIN_CYCLES_FOR_CHECK:
        raise InsufficientCyclesError(
            f"only {n} completed cycles; need at least {MIN_CYCLES_FOR_CHECK} "
            "for a usable standard error"
        )
    rewards = np.array([r.reward for r in records])
    durations = np.array([r.duration for r in records])
    ratio_hat = float(rewards.sum() / durations.sum())
    residuals = rewards - ratio_hat * durations
    mean_duration = float(durations.mean())
    std_error = float(residuals.std(ddof=1) / (math.sqrt(n) * mean_duration))
    time_average = stats.time_average
    difference = time_average - analytic_ratio
    return RenewalCheck(
        time_average=time_average,
        analytic_ratio=analytic_ratio,
        difference=difference,
        std_error=std_error,
        n_cycles=n,
        within_three_se=abs(difference) <= 3.0 * std_error,
    )
