"""Monte Carlo for Y(t), the population at time t.

Y(t) sums, over the jump times S_k <= t of the immigration process, the
clans started by the I_k immigrants of batch k, each observed at age t - S_k.

Two engines produce the batch totals:

``events``
    Event-driven simulation on the particle count (exponential lifetimes,
    i.i.d. offspring). Batches larger than ``batch_threshold`` first thin
    the immigrants to the Binomial number of clans alive at the observation
    time and then simulate only those, each conditioned on survival by
    rejection. Works for every offspring law.
``exact``
    For PurePower offspring the clan and batch laws are mixed Poisson with
    explicit mixing measures (see ``sampling``), so batches are drawn
    directly in O(1). This is the only way to reach large t at useful n.

``auto`` picks ``exact`` whenever it applies.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from . import analytic
from . import sampling
from .laws import ModelSpec, sibuya


@dataclass(frozen=True)
class SimBudget:
    """Limits on the event-driven engine. Breaches flag a replicate, never abort."""

    max_events_per_clan: int = 10**7
    max_total_population: int = 10**12
    max_events_per_replicate: int = 10**8
    batch_threshold: int = 10**4

    def __post_init__(self):
        for name in ("max_events_per_clan", "max_total_population", "max_events_per_replicate", "batch_threshold"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


DEFAULT_BUDGET = SimBudget()


@dataclass(frozen=True)
class SampleSet:
    t: float
    values: tuple  # Python ints
    truncated: np.ndarray
    master_seed: int
    model: ModelSpec

    @property
    def n(self):
        return len(self.values)

    def as_float(self):
        return np.array([float(v) for v in self.values])

    def positive(self):
        return np.array([v > 0 for v in self.values], dtype=bool)

    @property
    def truncated_fraction(self):
        return float(np.mean(self.truncated)) if self.n else 0.0


def replicate_rng(master_seed, index):
    """Random stream of replicate ``index``; depends on (master_seed, index) only."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def poisson_jumps(intensity, horizon, rng):
    """Jump times on [0, horizon] of a Poisson process with rate ``intensity``."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if horizon == 0:
        return np.empty(0)
    bound = intensity.bound(0.0, horizon)
    count = rng.poisson(bound * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    if intensity.is_constant:
        return times
    keep = rng.random(count) * bound < intensity(times)
    return times[keep]


def simulate_clan(model, duration, rng, budget=DEFAULT_BUDGET):
    """Clan of one ancestor by event-driven simulation: (size, events, truncated)."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    size, events, truncated = _kernels.clan_path(
        rng, model.mu, float(duration), *model.offspring.sampler_args(),
        budget.max_events_per_clan, budget.max_total_population)
    return int(size), int(events), bool(truncated)


# ---------------------------------------------------------------------------
# engines

class _EventEngine:
    # log W on a log grid of mu * age; the spline is accurate to ~1e-9
    GRID = np.linspace(math.log(1e-4), math.log(1e9), 1401)

    def __init__(self, model):
        self.model = model
        self.ctx = analytic.AnalyticContext(model)
        self.args = model.offspring.sampler_args()
        log_w = [analytic.log_w(self.ctx, math.exp(z)) for z in self.GRID]
        self.spline = CubicSpline(self.GRID, log_w)

    def clan_survival(self, ages):
        """P(a clan of each age is alive), vectorized."""
        y = self.model.mu * np.atleast_1d(np.asarray(ages, dtype=float))
        out = np.empty(y.size)
        inside = (y >= math.exp(self.GRID[0])) & (y <= math.exp(self.GRID[-1]))
        out[inside] = np.exp(-self.spline(np.log(y[inside])))
        for i in np.nonzero(~inside)[0]:
            out[i] = math.exp(-analytic.log_w(self.ctx, y[i])) if y[i] > 0 else 1.0
        return out

    def _alive(self, rng, counts, ages):
        p = self.clan_survival(ages)
        return sum(sampling.binomial_int(rng, int(c), float(q)) for c, q in zip(counts, p))

    def run(self, ages, rng, budget):
        model = self.model
        ages = np.asarray(ages, dtype=float)
        counts = model.immigration.sample_array(rng, ages.size)
        batches = np.nonzero(counts)[0]
        total = 0
        truncated = False
        left = budget.max_events_per_replicate
        for pos, i in enumerate(batches):
            if left <= 0:
                # out of budget: alive clans are counted once each
                rest = batches[pos:]
                total += self._alive(rng, counts[rest], ages[rest])
                truncated = True
                break
            count = int(counts[i])
            age = float(ages[i])
            conditioned = count > budget.batch_threshold
            if conditioned:
                count = self._alive(rng, [count], [age])
                if count == 0:
                    continue
            if count > 2**62:
                truncated = True
                total += count
                continue
            size, used, trunc = _kernels.clans_total(
                rng, count, conditioned, model.mu, age, *self.args,
                budget.max_events_per_clan, budget.max_total_population, left)
            total += int(size)
            left -= int(used)
            truncated |= bool(trunc)
        return total, truncated


class _ExactEngine:
    def __init__(self, model):
        off, imm = model.offspring, model.immigration
        if off.family != "PurePower":
            raise ValueError("the exact engine needs PurePower offspring")
        self.gamma = off.gamma
        self.rate = off.c * off.gamma * model.mu
        self.imm = imm
        self.mixture = imm.family == "ScaledSibuya" and imm.alpha <= off.gamma
        self.sibuya = sibuya(imm.alpha) if imm.family == "ScaledSibuya" else None
        beta = imm.alpha / off.gamma
        self.j_law = sibuya(beta) if self.mixture and beta < 1.0 else None

    def run(self, ages, rng, budget):
        k = self.rate * np.asarray(ages, dtype=float)
        if k.size == 0:
            return 0, False
        if self.mixture:
            return sampling.batch_sum_mixture(rng, self.gamma, k, self.imm, self.j_law, self.sibuya), False
        return sampling.batch_sum_survivors(rng, self.gamma, k, self.imm, self.sibuya), False


def exact_engine_applies(model):
    return model.offspring.family == "PurePower"


@functools.lru_cache(maxsize=32)
def _engine(model, method):
    if method == "auto":
        method = "exact" if exact_engine_applies(model) else "events"
    if method == "exact":
        return _ExactEngine(model)
    if method == "events":
        return _EventEngine(model)
    raise ValueError(f"unknown simulation method {method!r}")


def simulate_Y(model, t, rng, budget=DEFAULT_BUDGET, method="auto"):
    """One draw of Y(t): (value, truncated)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    ages = t - poisson_jumps(model.intensity, t, rng)
    return _engine(model, method).run(ages, rng, budget)


def _run_block(model, t, master_seed, start, stop, budget, method):
    values, flags = [], []
    for i in range(start, stop):
        y, tr = simulate_Y(model, t, replicate_rng(master_seed, i), budget, method)
        values.append(y)
        flags.append(tr)
    return values, flags


def monte_carlo(model, t, n, master_seed, workers=1, budget=DEFAULT_BUDGET, method="auto"):
    """n replicates of Y(t); the result does not depend on ``workers``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    master_seed = int(master_seed)
    if workers == 1 or n < 2:
        values, flags = _run_block(model, t, master_seed, 0, n, budget, method)
    else:
        blocks = max(workers * 4, 1)
        edges = np.linspace(0, n, min(blocks, n) + 1).astype(int)
        values, flags = [], []
        workers = min(workers, os.cpu_count() * 8 if os.cpu_count() else workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, model, t, master_seed, int(a), int(b), budget, method)
                       for a, b in zip(edges[:-1], edges[1:]) if b > a]
            for fut in futures:
                v, f = fut.result()
                values.extend(v)
                flags.extend(f)
    return SampleSet(float(t), tuple(values), np.array(flags, dtype=bool), master_seed, model)

