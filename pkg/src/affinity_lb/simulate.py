"""Event-driven simulation of the affinity-scheduling Markov chain.

The chain has one aggregate Poisson arrival clock (rate Σ_S λ_S) and two
aggregate service clocks: rate μ₁ times the number of servers holding a
type-I job and μ₂ times the number of servers holding only a type-II job.
A departure picks its server uniformly from the matching class, which is
exactly the per-server exponential race.
"""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._accel import jit
from .errors import ConfigError
from .model import (
    BUSY_I,
    BUSY_II,
    COMBINATORIAL,
    DEFAULT_LEVELS,
    GRAPH,
    OccupancyState,
    SelectionFamily,
    allocate_k,
    apply_arrival_k,
    complete_service_k,
    cumulative_counts,
)
from .rng import CounterRNG, next_index, next_uniform

DEFAULT_IMAX = 12

EV_ARRIVAL, EV_DEPARTURE = 1, 2


# -- kernels --------------------------------------------------------------


@jit
def sample_selection_k(kind, n, d, ptr, idx, cum, perm, sel, st):
    """Write one primary selection into ``sel`` and return its size.

    Combinatorial draws are a partial Fisher-Yates shuffle of the
    persistent permutation ``perm``; the C(N, d) sets are never built.
    """
    if kind == COMBINATORIAL:
        for a in range(d):
            j = a + next_index(st, n - a)
            tmp = perm[a]
            perm[a] = perm[j]
            perm[j] = tmp
            sel[a] = perm[a]
        return d
    if kind == GRAPH:
        k = next_index(st, ptr.size - 1)
    else:
        k = np.searchsorted(cum, next_uniform(st) * cum[-1], side="right")
        if k >= cum.size:
            k = cum.size - 1
    m = ptr[k + 1] - ptr[k]
    for a in range(m):
        sel[a] = idx[ptr[k] + a]
    return m


@jit
def total_event_rate(S, arrival_rate, mu1, mu2):
    return arrival_rate + mu1 * S.mcount[BUSY_I] + mu2 * S.mcount[BUSY_II]


@jit
def fire_event_k(S, kind, n, d, ptr, idx, cum, perm, sel, arrival_rate, mu1, mu2, st):
    """Apply one event of the embedded jump chain; returns (event, server, job type)."""
    r1 = mu1 * S.mcount[BUSY_I]
    v = next_uniform(st) * (arrival_rate + r1 + mu2 * S.mcount[BUSY_II])
    if v < arrival_rate:
        m = sample_selection_k(kind, n, d, ptr, idx, cum, perm, sel, st)
        s, t = allocate_k(S, sel, m, st)
        apply_arrival_k(S, s, t)
        return EV_ARRIVAL, s, t
    if (v < arrival_rate + r1 and S.mcount[BUSY_I] > 0) or S.mcount[BUSY_II] == 0:
        s = S.members[BUSY_I, next_index(st, S.mcount[BUSY_I])]
    else:
        s = S.members[BUSY_II, next_index(st, S.mcount[BUSY_II])]
    t = complete_service_k(S, s)
    return EV_DEPARTURE, s, t


@jit
def run_k(S, kind, n, d, ptr, idx, cum, arrival_rate, mu1, mu2,
          sample_dt, n_samples, imax, out_q, st):
    perm = np.arange(n)
    sel = np.empty(n, dtype=np.int64)
    t = 0.0
    k = 0
    n_events = 0
    while k < n_samples:
        R = total_event_rate(S, arrival_rate, mu1, mu2)
        if R > 0.0:
            t_next = t - math.log(1.0 - next_uniform(st)) / R
        else:
            t_next = math.inf
        while k < n_samples and k * sample_dt < t_next:
            out_q[k] = cumulative_counts(S, imax) / n
            k += 1
        if k >= n_samples:
            break
        t = t_next
        fire_event_k(S, kind, n, d, ptr, idx, cum, perm, sel, arrival_rate, mu1, mu2, st)
        n_events += 1
    return n_events


@jit
def allocation_counts_k(S, kind, n, d, ptr, idx, cum, n_arrivals, st):
    top = S.cnt.shape[0] - 1
    out = np.zeros((top + 1, 2, 2), dtype=np.int64)
    perm = np.arange(n)
    sel = np.empty(n, dtype=np.int64)
    for _ in range(n_arrivals):
        m = sample_selection_k(kind, n, d, ptr, idx, cum, perm, sel, st)
        s, t = allocate_k(S, sel, m, st)
        out[min(S.ti[s], top), S.tii[s], t - 1] += 1
    return out


# -- configuration and results ---------------------------------------------


@dataclass
class SimConfig:
    family: SelectionFamily
    mu1: float = 1.0
    mu2: float = 0.5
    horizon: float = 100.0
    seed: int = 0
    sample_dt: float = 1.0
    initial: object = "empty"
    imax: int = DEFAULT_IMAX
    levels: int = DEFAULT_LEVELS

    def validate(self):
        if not (self.mu1 > self.mu2 > 0):
            raise ConfigError(f"need mu1 > mu2 > 0, got mu1={self.mu1}, mu2={self.mu2}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError(f"horizon must be positive and finite, got {self.horizon}")
        if not self.sample_dt > 0:
            raise ConfigError(f"sample_dt must be positive, got {self.sample_dt}")
        if self.imax < 1:
            raise ConfigError("imax must be at least 1")
        self.family.validate()
        if not math.isfinite(self.family.total_rate):
            raise ConfigError("total arrival rate must be finite")

    def initial_state(self):
        n = self.family.n_servers
        levels = max(self.levels, self.imax)
        init = self.initial
        if isinstance(init, OccupancyState):
            if init.n_servers != n:
                raise ConfigError("initial state size does not match the family")
            return OccupancyState(init.arrays.ti, init.arrays.tii, levels)
        if isinstance(init, str):
            key = init.lower().replace("-", "_")
            if key == "empty":
                return OccupancyState.empty(n, levels)
            if key in ("all_type_ii", "all_one_type_ii", "type_ii"):
                return OccupancyState.all_type_ii(n, levels)
            raise ConfigError(f"unknown initial preset {init!r}")
        configs = list(init)
        if len(configs) != n:
            raise ConfigError("explicit initial configs must list every server")
        return OccupancyState.from_configs(configs, levels)


def csv_header(imax):
    return ["t"] + [f"q{i}{j}" for i in range(imax + 1) for j in (0, 1)]


@dataclass
class Trajectory:
    """Fluid-scaled occupancy samples: ``qbar[k, i, j]`` = Q̄_ij / N at ``times[k]``."""

    times: np.ndarray
    qbar: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def imax(self):
        return self.qbar.shape[1] - 1

    def column(self, i, j):
        return self.qbar[:, i, j]

    def to_csv(self, fname):
        with open(fname, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(csv_header(self.imax))
            flat = self.qbar.reshape(len(self.times), -1)
            for t, row in zip(self.times, flat):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, fname):
        with open(fname, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        imax = (len(header) - 1) // 2 - 1
        if header != csv_header(imax):
            raise ValueError(f"{fname}: unexpected trajectory header")
        data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
        return cls(data[:, 0].copy(), data[:, 1:].reshape(len(body), imax + 1, 2).copy())


# -- public API -------------------------------------------------------------


def _kernel_family_args(family):
    ptr, idx, cum = family.csr()
    return family.kind_code, family.n_servers, family.d, ptr, idx, cum


def run(config):
    """Simulate ``config`` and return the sampled :class:`Trajectory`."""
    config.validate()
    state = config.initial_state()
    rng = CounterRNG(config.seed, "simulate")
    n_samples = int(math.floor(config.horizon / config.sample_dt + 1e-9)) + 1
    out = np.zeros((n_samples, config.imax + 1, 2))
    n_events = run_k(state.arrays, *_kernel_family_args(config.family),
                     config.family.total_rate, config.mu1, config.mu2,
                     config.sample_dt, n_samples, config.imax, out, rng.state)
    times = np.arange(n_samples) * config.sample_dt
    meta = {"n_events": int(n_events), "seed": config.seed,
            "n_servers": config.family.n_servers, "final_state": state}
    return Trajectory(times, out, meta)


def _run_seed(args):
    config, seed = args
    cfg = SimConfig(**{**config.__dict__, "seed": seed})
    traj = run(cfg)
    traj.meta.pop("final_state")
    return traj


def run_replications(config, seeds, jobs=1):
    """Independent runs of ``config`` for each seed, optionally in worker processes."""
    work = [(config, int(s)) for s in seeds]
    if jobs <= 1:
        return [_run_seed(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_seed, work))


def sample_selection(family, rng):
    """One primary selection drawn from ``family`` (sorted server ids)."""
    rng = rng if isinstance(rng, CounterRNG) else CounterRNG(int(rng))
    n = family.n_servers
    sel = np.empty(n, dtype=np.int64)
    m = sample_selection_k(*_kernel_family_args(family), np.arange(n), sel, rng.state)
    return frozenset(int(x) for x in sel[:m])


class Simulation:
    """Step-by-step handle on the simulator, mainly for inspection and tests."""

    def __init__(self, config):
        config.validate()
        self.config = config
        self.state = config.initial_state()
        self.rng = CounterRNG(config.seed, "simulate")
        self.t = 0.0
        self._fam = _kernel_family_args(config.family)
        n = config.family.n_servers
        self._perm = np.arange(n)
        self._sel = np.empty(n, dtype=np.int64)

    def step(self):
        """Advance one event; returns ``(time, event, server, job_type)`` or None if frozen."""
        cfg = self.config
        R = total_event_rate(self.state.arrays, cfg.family.total_rate, cfg.mu1, cfg.mu2)
        if R <= 0:
            return None
        self.t -= math.log(1.0 - next_uniform(self.rng.state)) / R
        ev, s, t = fire_event_k(self.state.arrays, *self._fam, self._perm, self._sel,
                                cfg.family.total_rate, cfg.mu1, cfg.mu2, self.rng.state)
        return self.t, int(ev), int(s), int(t)


def empirical_allocation_frequencies(config, n_arrivals, state=None):
    """Replay ``n_arrivals`` independent arrivals against a frozen state.

    Returns ``{(i, j, "I" | "II"): frequency}`` keyed by the configuration
    of the receiving server before the arrival.  Only the combinatorial
    family is supported.
    """
    if config.family.kind != "combinatorial":
        raise ConfigError("allocation frequencies are defined for the combinatorial family")
    state = config.initial_state() if state is None else state.copy()
    rng = CounterRNG(config.seed, "allocation-frequencies")
    counts = allocation_counts_k(state.arrays, *_kernel_family_args(config.family),
                                 int(n_arrivals), rng.state)
    out = {}
    for i, j, t in zip(*np.nonzero(counts)):
        out[(int(i), int(j), "I" if t == 0 else "II")] = counts[i, j, t] / n_arrivals
    return out


def write_summary(traj, fname):
    import json

    tail = traj.qbar[len(traj.qbar) // 2:]
    summary = {
        "n_samples": int(len(traj.times)),
        "horizon": float(traj.times[-1]),
        "meta": {k: v for k, v in traj.meta.items() if isinstance(v, (int, float, str))},
        "final": {f"q{i}{j}": float(traj.qbar[-1, i, j])
                  for i in range(traj.imax + 1) for j in (0, 1)},
        "tail_mean": {f"q{i}{j}": float(tail[:, i, j].mean())
                      for i in range(traj.imax + 1) for j in (0, 1)},
    }
    Path(fname).write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return summary
