"""Server state and the affinity-scheduling allocation policy.

A server holds ``type_i`` fast (primary) jobs and ``type_ii`` slow
(secondary) jobs and serves them under preemptive priority for type I.
An arriving job with primary selection ``S``

1. goes to an idle server of ``S`` as a type-I job, else
2. goes to an idle server outside ``S`` as a type-II job, else
3. joins the server of ``S`` with the lexicographically smallest
   ``(type_i, type_ii)`` as a type-I job.

Ties in every step are broken uniformly at random.

The state is a :class:`StateArrays` tuple of numpy arrays so the same
jitted update functions serve the Python API below, the simulator and
the coupling engine.
"""

from collections import namedtuple
from dataclasses import dataclass, field
from enum import IntEnum
from math import comb
from typing import NamedTuple

import numpy as np

from ._accel import jit
from .errors import ConfigError, InvariantError
from .rng import CounterRNG, next_index

IDLE, BUSY_I, BUSY_II = 0, 1, 2

DEFAULT_LEVELS = 64


class JobType(IntEnum):
    I = 1  # noqa: E741
    II = 2


class ServerConfig(NamedTuple):
    type_i: int
    type_ii: int


#: ti/tii: per-server job counts.  cls/members/mpos/mcount: the servers
#: partitioned into IDLE, BUSY_I (type_i > 0) and BUSY_II (only a type-II
#: job) with O(1) insert/remove/sample.  cnt[i, j]: number of servers with
#: min(type_i, L) == i and type_ii == j, L = cnt.shape[0] - 1, from which
#: the cumulative counts Q̄_ij are suffix sums (exact for i <= L).
StateArrays = namedtuple("StateArrays", "ti tii cls members mpos mcount cnt")


# -- jitted kernels -------------------------------------------------------


@jit
def klass(ti, tii):
    if ti > 0:
        return BUSY_I
    if tii > 0:
        return BUSY_II
    return IDLE


@jit
def _move_class(S, s, new):
    old = S.cls[s]
    if old == new:
        return
    # swap-remove from old class
    p = S.mpos[s]
    last = S.members[old, S.mcount[old] - 1]
    S.members[old, p] = last
    S.mpos[last] = p
    S.mcount[old] -= 1
    # append to new class
    q = S.mcount[new]
    S.members[new, q] = s
    S.mpos[s] = q
    S.mcount[new] += 1
    S.cls[s] = new


@jit
def _cnt_move(S, ti_old, tii_old, ti_new, tii_new):
    top = S.cnt.shape[0] - 1
    S.cnt[min(ti_old, top), tii_old] -= 1
    S.cnt[min(ti_new, top), tii_new] += 1


@jit
def apply_arrival_k(S, s, jtype):
    ti = S.ti[s]
    tii = S.tii[s]
    if jtype == 2:
        if ti != 0 or tii != 0:
            raise InvariantError("type-II job sent to a non-idle server")
        S.tii[s] = 1
        _cnt_move(S, 0, 0, 0, 1)
    else:
        S.ti[s] = ti + 1
        _cnt_move(S, ti, tii, ti + 1, tii)
    _move_class(S, s, klass(S.ti[s], S.tii[s]))


@jit
def complete_service_k(S, s):
    ti = S.ti[s]
    tii = S.tii[s]
    if ti > 0:
        S.ti[s] = ti - 1
        _cnt_move(S, ti, tii, ti - 1, tii)
        done = 1
    elif tii > 0:
        S.tii[s] = tii - 1
        _cnt_move(S, 0, tii, 0, tii - 1)
        done = 2
    else:
        raise InvariantError("service completion at an empty server")
    _move_class(S, s, klass(S.ti[s], S.tii[s]))
    return done


@jit
def allocate_k(S, sel, m, st):
    """Apply the three allocation steps to primary selection ``sel[:m]``.

    Returns ``(server, job_type)``; the state is not modified.
    """
    # step 1: idle primary server
    n_idle = 0
    for a in range(m):
        if S.cls[sel[a]] == IDLE:
            n_idle += 1
    if n_idle > 0:
        r = next_index(st, n_idle)
        for a in range(m):
            s = sel[a]
            if S.cls[s] == IDLE:
                if r == 0:
                    return s, 1
                r -= 1
    # step 2: any idle server left is secondary
    if S.mcount[IDLE] > 0:
        return S.members[IDLE, next_index(st, S.mcount[IDLE])], 2
    # step 3: smallest (type_i, type_ii), uniform among exact ties
    best = sel[0]
    ties = 1
    for a in range(1, m):
        s = sel[a]
        if S.ti[s] < S.ti[best] or (S.ti[s] == S.ti[best] and S.tii[s] < S.tii[best]):
            best = s
            ties = 1
        elif S.ti[s] == S.ti[best] and S.tii[s] == S.tii[best]:
            ties += 1
            if next_index(st, ties) == 0:
                best = s
    return best, 1


@jit
def cumulative_counts(S, imax):
    """Q̄[i, j] = number of servers with at least i type-I and exactly j type-II jobs."""
    top = S.cnt.shape[0] - 1
    out = np.zeros((imax + 1, 2), dtype=np.int64)
    run0 = 0
    run1 = 0
    for i in range(top, -1, -1):
        run0 += S.cnt[i, 0]
        run1 += S.cnt[i, 1]
        if i <= imax:
            out[i, 0] = run0
            out[i, 1] = run1
    return out


def make_state_arrays(type_i, type_ii, levels=DEFAULT_LEVELS):
    ti = np.asarray(type_i, dtype=np.int64).copy()
    tii = np.asarray(type_ii, dtype=np.int64).copy()
    if ti.ndim != 1 or ti.shape != tii.shape or ti.size == 0:
        raise ConfigError("type_i and type_ii must be equal-length nonempty 1-d sequences")
    if (ti < 0).any() or (tii < 0).any():
        raise ConfigError("job counts must be nonnegative")
    if (tii > 1).any():
        raise ConfigError("admissible states hold at most one type-II job per server")
    n = ti.size
    cls = np.where(ti > 0, BUSY_I, np.where(tii > 0, BUSY_II, IDLE)).astype(np.int64)
    members = np.zeros((3, n), dtype=np.int64)
    mpos = np.zeros(n, dtype=np.int64)
    mcount = np.zeros(3, dtype=np.int64)
    for s in range(n):
        c = cls[s]
        members[c, mcount[c]] = s
        mpos[s] = mcount[c]
        mcount[c] += 1
    cnt = np.zeros((levels + 1, 2), dtype=np.int64)
    np.add.at(cnt, (np.minimum(ti, levels), tii), 1)
    return StateArrays(ti, tii, cls, members, mpos, mcount, cnt)


# -- selection families ---------------------------------------------------

GENERAL, GRAPH, COMBINATORIAL = 0, 1, 2
_KINDS = {"general": GENERAL, "graph": GRAPH, "combinatorial": COMBINATORIAL}


@dataclass
class SelectionFamily:
    """The primary selections S with their Poisson arrival rates λ_S.

    Build with :meth:`general`, :meth:`graph` or :meth:`combinatorial`.
    The combinatorial family (all d-subsets at rate λN / C(N, d) each) is
    kept implicit.
    """

    n_servers: int
    kind: str
    selections: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    d: int = 0
    lam: float = 0.0
    adjacency: list = None

    @classmethod
    def general(cls, n_servers, selections, rates):
        sels = [tuple(sorted(set(int(x) for x in S))) for S in selections]
        rates = [float(r) for r in rates]
        if len(sels) != len(rates):
            raise ConfigError("need one rate per selection")
        fam = cls(int(n_servers), "general", sels, rates)
        fam.validate()
        return fam

    @classmethod
    def graph(cls, adjacency, lam):
        """One selection per node: the node plus its neighbours, each at rate ``lam``."""
        n = len(adjacency)
        sels = [tuple(sorted({v, *adjacency[v]})) for v in range(n)]
        fam = cls(n, "graph", sels, [float(lam)] * n, lam=float(lam),
                  adjacency=[list(a) for a in adjacency])
        fam.validate()
        return fam

    @classmethod
    def combinatorial(cls, n_servers, d, lam):
        fam = cls(int(n_servers), "combinatorial", d=int(d), lam=float(lam))
        fam.validate()
        return fam

    def validate(self):
        if self.n_servers < 1:
            raise ConfigError("need at least one server")
        if self.kind == "combinatorial":
            if not 1 <= self.d <= self.n_servers:
                raise ConfigError(f"need 1 <= d <= N, got d={self.d}, N={self.n_servers}")
            if not (self.lam >= 0 and np.isfinite(self.lam)):
                raise ConfigError("arrival rate must be finite and nonnegative")
            return
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown family kind {self.kind!r}")
        for S, r in zip(self.selections, self.rates):
            if not S:
                raise ConfigError("empty selection")
            if S[0] < 0 or S[-1] >= self.n_servers:
                raise ConfigError(f"selection {S} has ids outside [0, {self.n_servers})")
            if not (r >= 0 and np.isfinite(r)):
                raise ConfigError("selection rates must be finite and nonnegative")

    @property
    def kind_code(self):
        return _KINDS[self.kind]

    @property
    def total_rate(self):
        if self.kind == "combinatorial":
            return self.lam * self.n_servers
        return float(sum(self.rates))

    @property
    def nu(self):
        """Per-selection rate of the combinatorial family."""
        return self.lam * self.n_servers / comb(self.n_servers, self.d)

    def max_selection_size(self):
        if self.kind == "combinatorial":
            return self.d
        return max((len(S) for S in self.selections), default=1)

    def csr(self):
        """(ptr, idx, cumulative rates) arrays for the kernels."""
        if self.kind == "combinatorial":
            return (np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float64))
        ptr = np.zeros(len(self.selections) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(S) for S in self.selections])
        idx = np.fromiter((x for S in self.selections for x in S), dtype=np.int64,
                          count=int(ptr[-1]))
        cum = np.cumsum(np.asarray(self.rates, dtype=np.float64))
        return ptr, idx, cum


# -- Python API -----------------------------------------------------------


class OccupancyState:
    """Configurations of all servers with cached occupancy counts."""

    def __init__(self, type_i, type_ii=None, levels=DEFAULT_LEVELS):
        if type_ii is None:
            type_ii = np.zeros(len(type_i), dtype=np.int64)
        self.arrays = make_state_arrays(type_i, type_ii, levels)

    @classmethod
    def empty(cls, n, levels=DEFAULT_LEVELS):
        return cls(np.zeros(n, np.int64), np.zeros(n, np.int64), levels)

    @classmethod
    def all_type_ii(cls, n, levels=DEFAULT_LEVELS):
        """Every server holds exactly one type-II job."""
        return cls(np.zeros(n, np.int64), np.ones(n, np.int64), levels)

    @classmethod
    def from_configs(cls, configs, levels=DEFAULT_LEVELS):
        configs = list(configs)
        return cls([c[0] for c in configs], [c[1] for c in configs], levels)

    @property
    def n_servers(self):
        return self.arrays.ti.size

    @property
    def levels(self):
        return self.arrays.cnt.shape[0] - 1

    @property
    def configs(self):
        return [ServerConfig(int(a), int(b)) for a, b in zip(self.arrays.ti, self.arrays.tii)]

    def config(self, server):
        self._check_id(server)
        return ServerConfig(int(self.arrays.ti[server]), int(self.arrays.tii[server]))

    def qbar(self, imax=None):
        """Cumulative counts Q̄_ij for ``0 <= i <= imax`` and j in {0, 1}."""
        imax = self.levels if imax is None else int(imax)
        if imax > self.levels:
            raise ValueError(f"counts are tracked up to level {self.levels}")
        return cumulative_counts(self.arrays, imax)

    def fractions(self, imax=None):
        return self.qbar(imax) / self.n_servers

    def total_jobs(self):
        return int(self.arrays.ti.sum() + self.arrays.tii.sum())

    def copy(self):
        new = object.__new__(OccupancyState)
        new.arrays = StateArrays(*(a.copy() for a in self.arrays))
        return new

    def _check_id(self, server):
        if not 0 <= int(server) < self.n_servers:
            raise ValueError(f"server id {server} outside [0, {self.n_servers})")

    def __repr__(self):
        return f"OccupancyState(n={self.n_servers}, jobs={self.total_jobs()})"


def _as_rng(rng):
    if rng is None:
        return CounterRNG(0)
    if isinstance(rng, CounterRNG):
        return rng
    if isinstance(rng, (int, np.integer)):
        return CounterRNG(int(rng))
    raise TypeError("rng must be a CounterRNG, an integer seed or None")


def allocate(state, primary, rng=None):
    """Server and job type chosen for an arrival with primary selection ``primary``.

    The state is left untouched; pass the result to :func:`apply_arrival`.
    """
    sel = np.unique(np.asarray(list(primary), dtype=np.int64))
    if sel.size == 0:
        raise ValueError("primary selection is empty")
    if sel[0] < 0 or sel[-1] >= state.n_servers:
        raise ValueError(f"primary selection has ids outside [0, {state.n_servers})")
    s, t = allocate_k(state.arrays, sel, sel.size, _as_rng(rng).state)
    return int(s), JobType(t)


def apply_arrival(state, server, job_type):
    state._check_id(server)
    apply_arrival_k(state.arrays, int(server), int(JobType(job_type)))


def complete_service(state, server):
    """Finish one job at ``server`` (type I first) and return its type."""
    state._check_id(server)
    return JobType(complete_service_k(state.arrays, int(server)))


def service_rate(state, server, mu1, mu2):
    ti, tii = state.config(server)
    if ti > 0:
        return float(mu1)
    if tii > 0:
        return float(mu2)
    return 0.0
