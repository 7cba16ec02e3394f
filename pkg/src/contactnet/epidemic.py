"""Stochastic SEIR outbreaks on a workplace contact network.

Time advances in half-day steps, 14 per week. Step 0 is Monday morning and
only the five weekday mornings are work steps, the only steps on which the
network transmits. The index case becomes infectious on a uniformly chosen
work step of the first week. An exposed person becomes infectious
``ceil(2 * (0.5 + W))`` steps later with ``W ~ Weibull(shape, scale)`` days,
stays infectious for one step, and is then removed.

Runs are simulated in vectorised batches. Each realization (network) gets its
own generator spawned from the root seed, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateInput

STEPS_PER_WEEK = 14
WORK_STEPS = (0, 2, 4, 6, 8)
PSI_GRID = tuple(float(v) for v in np.round(np.linspace(0.009, 0.135, 15), 12))

_WORK = np.zeros(STEPS_PER_WEEK, dtype=bool)
_WORK[list(WORK_STEPS)] = True


def is_work_step(t):
    return _WORK[np.asarray(t) % STEPS_PER_WEEK]


@dataclass(frozen=True)
class EpiParams:
    psi: float
    weibull_shape: float = 2.21
    weibull_scale: float = 1.10
    latent_offset: float = 0.5   # days
    infectious_steps: int = 1

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ValueError(f"psi must lie in [0, 1], got {self.psi}")
        if self.weibull_shape <= 0 or self.weibull_scale <= 0:
            raise ValueError("Weibull shape and scale must be positive")
        if self.latent_offset < 0:
            raise ValueError("latent offset must be nonnegative")
        if self.infectious_steps != 1:
            raise ValueError("only a single infectious step is supported")


def infection_probability(minutes, psi):
    """1 - (1 - psi)**minutes, exact at psi = 1 and for zero minutes."""
    w = np.asarray(minutes, dtype=float)
    if psi >= 1.0:
        out = (w > 0).astype(float)
    else:
        out = -np.expm1(w * np.log1p(-psi))
    return out if out.ndim else float(out)


def latent_steps(params, rng, size):
    """Exposed-to-infectious delay in half-day steps."""
    days = params.latent_offset + params.weibull_scale * rng.weibull(params.weibull_shape, size=size)
    return np.maximum(np.ceil(2.0 * days), 1).astype(np.int64)


def latent_step_pmf(params, max_steps=64):
    """Exact P(delay = l) for l = 0..max_steps from the Weibull CDF."""
    edges = (np.arange(max_steps + 1) / 2.0) - params.latent_offset
    cdf = stats.weibull_min.cdf(np.maximum(edges, 0.0) / params.weibull_scale, params.weibull_shape)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    return pmf


@dataclass(frozen=True)
class Outbreak:
    final_size_minus_index: int
    incidence: np.ndarray   # new infectious persons per step, index included
    index: str
    start_step: int
    seed: object


@dataclass(frozen=True)
class OutbreakBatch:
    final_sizes: np.ndarray   # ever infected minus the index, per run
    incidence: np.ndarray     # (runs, steps) new infectious persons
    index: np.ndarray
    start_step: np.ndarray
    max_active: int           # largest E + I count seen (diagnostics)
    exposed_at: np.ndarray    # (runs, n) exposure step, -1 for the index
    onset: np.ndarray         # (runs, n) infectious step; int64 max if never

    def compartments(self, t):
        """(S, E, I, R) counts per run at step ``t``."""
        never = np.iinfo(np.int64).max
        hit = (self.exposed_at <= t) & (self.onset != never)
        S = (~hit).sum(axis=1)
        E = (hit & (self.onset > t)).sum(axis=1)
        I = (self.onset == t).sum(axis=1)
        R = (hit & (self.onset < t)).sum(axis=1)
        return S, E, I, R


def simulate_batch(minutes, params, runs, rng):
    """Simulate ``runs`` independent outbreaks on one minute matrix."""
    minutes = np.asarray(minutes, dtype=float)
    n = len(minutes)
    R = int(runs)
    never = np.iinfo(np.int64).max
    onset = np.full((R, n), never, dtype=np.int64)   # step of the infectious period
    rows = np.arange(R)
    index = rng.integers(0, n, size=R)
    start = np.asarray(WORK_STEPS)[rng.integers(0, len(WORK_STEPS), size=R)]
    onset[rows, index] = start
    exposed_at = np.full((R, n), never, dtype=np.int64)
    exposed_at[rows, index] = -1
    infected = np.zeros((R, n), dtype=bool)
    infected[rows, index] = True

    log_escape = np.log1p(-params.psi) if params.psi < 1.0 else -np.inf
    incidence = []
    t = 0
    max_active = 1
    while True:
        pending = onset[infected] >= t
        if not pending.any():
            break
        active = int(pending.sum())
        max_active = max(max_active, active)
        infectious = onset == t
        incidence.append(infectious.sum(axis=1))
        if _WORK[t % STEPS_PER_WEEK] and params.psi > 0 and infectious.any():
            w = infectious.astype(float) @ minutes
            if params.psi >= 1.0:
                prob = (w > 0).astype(float)
            else:
                prob = -np.expm1(w * log_escape)
            u = rng.random((R, n))
            new = (~infected) & (u < prob)
            if new.any():
                delays = latent_steps(params, rng, int(new.sum()))
                onset[new] = t + delays
                exposed_at[new] = t
                infected |= new
        t += 1
    incidence = np.stack(incidence, axis=1) if incidence else np.zeros((R, 0), dtype=np.int64)
    return OutbreakBatch(infected.sum(axis=1) - 1, incidence, index, start, max_active, exposed_at, onset)


def _net_minutes(net):
    return getattr(net, "minutes", net)


def run_epidemic(net, params, seed=0):
    """A single outbreak on ``net`` (SimNetwork or minute matrix)."""
    rng = np.random.default_rng(seed)
    batch = simulate_batch(_net_minutes(net), params, 1, rng)
    ids = getattr(net, "ids", None)
    idx = int(batch.index[0])
    return Outbreak(int(batch.final_sizes[0]), batch.incidence[0],
                    ids[idx] if ids is not None else str(idx), int(batch.start_step[0]), seed)


def resolve_threads(threads=None):
    if threads is None:
        threads = os.environ.get("CONTACTNET_THREADS", "1")
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def final_sizes(ensemble, params, runs_per_network, seed=0, threads=None):
    """(realizations, runs) final sizes; realization k uses seed stream k."""
    if runs_per_network < 1:
        raise ValueError("runs_per_network must be at least 1")
    ensemble = list(ensemble)
    children = np.random.SeedSequence(seed).spawn(len(ensemble))

    def one(k):
        rng = np.random.default_rng(children[k])
        return simulate_batch(_net_minutes(ensemble[k]), params, runs_per_network, rng).final_sizes

    threads = resolve_threads(threads)
    if threads == 1 or len(ensemble) == 1:
        out = [one(k) for k in range(len(ensemble))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(len(ensemble))))
    return np.stack(out)


@dataclass(frozen=True)
class FinalSizeSummary:
    mean: float
    ci_low: float
    ci_high: float
    se: float
    runs: int

    def as_row(self):
        return {"mean": self.mean, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "se": self.se, "runs": self.runs}


def summarize_final_sizes(sizes, seed=0, resamples=1000, level=0.95):
    """Mean with a bootstrap interval from resampling run outcomes.

    Each resample redraws all runs with replacement, done as a multinomial
    draw over the observed final-size histogram.
    """
    sizes = np.asarray(sizes, dtype=np.int64).ravel()
    N = sizes.size
    counts = np.bincount(sizes)
    values = np.arange(len(counts), dtype=float)
    mean = float(sizes.mean())
    # entropy distinct from the simulation streams
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    draws = rng.multinomial(N, counts / N, size=resamples)
    boot = draws @ values / N
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(boot, [tail, 1.0 - tail])
    se = float(sizes.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return FinalSizeSummary(mean, float(lo), float(hi), se, N)


def mean_final_size(ensemble, params, runs_per_network, seed=0, threads=None, resamples=1000):
    sizes = final_sizes(ensemble, params, runs_per_network, seed, threads)
    return summarize_final_sizes(sizes, seed, resamples)


def epidemiological_importance(net, psi):
    """Expected secondary cases per node over one infectious work step with
    every contact partner susceptible."""
    minutes = np.asarray(_net_minutes(net), dtype=float)
    prob = infection_probability(minutes, psi)
    np.fill_diagonal(prob, 0.0)
    return prob.sum(axis=1)


@dataclass(frozen=True)
class TauResult:
    tau: float
    odds_ratio: float
    p_value: float


def concordance_odds(tau):
    return float("inf") if tau >= 1.0 else (1.0 + tau) / (1.0 - tau)


def kendall_tau(a, b):
    """Tie-corrected Kendall tau-b and the concordant/discordant odds ratio."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors with at least two entries")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateInput("Kendall tau is undefined for a constant vector")
    res = stats.kendalltau(a, b, variant="b")
    tau = float(np.clip(res.statistic, -1.0, 1.0))
    if abs(abs(tau) - 1.0) < 1e-12:
        tau = math.copysign(1.0, tau)  # perfect (dis)agreement is exact; undo division rounding
    return TauResult(tau, concordance_odds(tau), float(res.pvalue))
