"""Coupled sample paths of the affinity system and a reference system.

Both systems are kept as ordered lists of positions 1..N.  The affinity
side orders its real servers by ``(type_i, type_ii)`` (``order[p]`` is
the server at position p, ``pos_of`` the inverse); the reference side is
a sorted array of queue lengths.  One random stream drives both:

* a μ₁N clock of potential type-I/reference departures, split into
  shared, one-sided and void completions by the active position sets;
* an arrival clock whose shape depends on the reference policy
  (random assignment, MJSQ(k) or JSQ(k));
* a μ₂ clock for type-II-only servers of the affinity side, which the
  reference system never sees.

After each event the tail-sum majorization of type-I occupancy by the
reference occupancy is checked, together with the positional property
that a type-I insertion lands no higher than the reference insertion.
"""

import csv
import math
from collections import namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from ._accel import jit
from .errors import ConfigError, InvariantError
from .model import (
    BUSY_I,
    BUSY_II,
    OccupancyState,
    SelectionFamily,
    allocate_k,
    apply_arrival_k,
    complete_service_k,
)
from .rng import CounterRNG, next_index, next_uniform
from .stability import lambda0 as solve_lambda0

RA, MJSQ, JSQ = 0, 1, 2
POLICY_NAMES = {RA: "ra", MJSQ: "mjsq", JSQ: "jsq"}
EV_ARRIVAL, EV_SERVICE, EV_SERVICE_II = 1, 2, 3
EVENT_NAMES = {EV_ARRIVAL: "arrival", EV_SERVICE: "service", EV_SERVICE_II: "service_ii"}
LEVEL_CAP = 4096

#: order/pos_of: affinity positions; ref: sorted reference queues;
#: caff/cref: number of positions at each type-I / queue level;
#: info: [highest level seen, busy reference positions].
CoupleArrays = namedtuple("CoupleArrays", "order pos_of ref caff cref info")

#: Everything the kernels need to know about the coupling variant.
CouplePlan = namedtuple(
    "CouplePlan",
    "policy n arrival_rate mu1 mu2 k d sel_ptr sel_idx srv_ptr srv_sel srv_cum "
    "lam_star lam0 f_aff f_ref",
)


# -- step functions ---------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """Nondecreasing map from positions 1..N to [0, 1] with value 1 at N.

    ``exact[x - 1]`` holds the rational value at position x; ``values``
    the same as floats.
    """

    exact: tuple

    def __post_init__(self):
        if not self.exact:
            raise ValueError("step function needs at least one position")
        if any(b < a for a, b in zip(self.exact, self.exact[1:])):
            raise ValueError("step function must be nondecreasing")
        if self.exact[-1] != 1:
            raise ValueError("step function must reach 1 at the last position")

    @property
    def n(self):
        return len(self.exact)

    @property
    def values(self):
        return np.array([float(v) for v in self.exact])

    def __call__(self, x):
        if not 1 <= x <= self.n:
            raise ValueError(f"position {x} outside 1..{self.n}")
        return self.exact[x - 1]

    def inverse(self, u):
        """Smallest position x with f(x) >= u (inverse-transform sampling)."""
        return int(np.searchsorted(self.values, u, side="left")) + 1

    def dominates(self, other):
        return self.n == other.n and all(a >= b for a, b in zip(self.exact, other.exact))


def build_f_ref(n, k):
    """Fraction of the C(N, k) selections whose lowest position is at most x."""
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= k <= N, got k={k}, N={n}")
    total = comb(n, k)
    vals, acc = [], 0
    for x in range(1, n + 1):
        if x <= n - k + 1:
            acc += comb(n - x, k - 1)
        vals.append(Fraction(acc, total))
    return StepFunction(tuple(vals))


def build_f_aff(n, d):
    """Worst-case stacking of the N closed neighbourhoods of a d-regular graph.

    The d + 1 selections through the lowest server have their minimum at
    position 1.  Every other selection is pushed as high as it can go:
    groups of d + 1 selections at positions N - d, N - d - 1, ..., and the
    remainder one position lower.
    """
    if not 1 <= d < n:
        raise ConfigError(f"need 1 <= d < N, got d={d}, N={n}")
    at = [0] * (n + 1)
    at[1] = d + 1
    rest = n - d - 1
    pos = n - d
    while rest > 0:
        take = min(d + 1, rest)
        at[pos] += take
        rest -= take
        pos -= 1
    vals, acc = [], 0
    for x in range(1, n + 1):
        acc += at[x]
        vals.append(Fraction(acc, n))
    return StepFunction(tuple(vals))


def worst_case_stacking(n, d):
    """Brute-force oracle for :func:`build_f_aff`.

    Places the minima one selection at a time, each at the highest
    position still allowed: a selection's minimum can be at most N - d,
    and at most d + 1 selections share a minimum because each server
    lies in exactly d + 1 neighbourhoods.  The first d + 1 selections
    are pinned to position 1 (the lowest server's neighbourhoods).
    """
    mins = [1] * (d + 1)
    load = {}
    for _ in range(n - d - 1):
        p = n - d
        while load.get(p, 0) >= d + 1:
            p -= 1
        load[p] = load.get(p, 0) + 1
        mins.append(p)
    return [sum(1 for m in mins if m <= x) / n for x in range(1, n + 1)]


# -- kernels ------------------------------------------------------------------


@jit
def _key(S, s):
    return 2 * S.ti[s] + S.tii[s]


@jit
def _resort(S, C, s):
    """Move server ``s`` to its place after its key changed (single-element insertion)."""
    n = C.order.size
    p = C.pos_of[s]
    kv = _key(S, s)
    while p + 1 < n and _key(S, C.order[p + 1]) < kv:
        o = C.order[p + 1]
        C.order[p] = o
        C.pos_of[o] = p
        p += 1
    while p > 0 and _key(S, C.order[p - 1]) > kv:
        o = C.order[p - 1]
        C.order[p] = o
        C.pos_of[o] = p
        p -= 1
    C.order[p] = s
    C.pos_of[s] = p


@jit
def _first_with_ti(S, C, s):
    """Lowest position holding the same type-I count as server ``s``."""
    p = C.pos_of[s]
    t = S.ti[s]
    while p > 0 and S.ti[C.order[p - 1]] == t:
        p -= 1
    return p


@jit
def _level_up(counts, info, old):
    counts[old] -= 1
    counts[old + 1] += 1
    if old + 1 > info[0]:
        info[0] = old + 1


@jit
def _ref_insert(C, p):
    """Add a job at position ``p``; returns the position actually incremented."""
    n = C.ref.size
    v = C.ref[p]
    q = p
    while q + 1 < n and C.ref[q + 1] == v:
        q += 1
    if v + 1 >= C.cref.size:
        return -1
    C.ref[q] = v + 1
    _level_up(C.cref, C.info, v)
    if v == 0:
        C.info[1] += 1
    return q


@jit
def _ref_remove(C, p):
    v = C.ref[p]
    q = p
    while q > 0 and C.ref[q - 1] == v:
        q -= 1
    C.ref[q] = v - 1
    C.cref[v] -= 1
    C.cref[v - 1] += 1
    if v == 1:
        C.info[1] -= 1
    return q


@jit
def _aff_arrival(S, C, s, jtype):
    """Apply an affinity arrival; returns the type-I insertion position or -1."""
    pos = -1
    if jtype == 1:
        pos = _first_with_ti(S, C, s)
        if S.ti[s] + 1 >= C.caff.size:
            return -2
        _level_up(C.caff, C.info, S.ti[s])
    apply_arrival_k(S, s, jtype)
    _resort(S, C, s)
    return pos


@jit
def _aff_remove(S, C, s):
    t = S.ti[s]
    done = complete_service_k(S, s)
    if done == 1:
        C.caff[t] -= 1
        C.caff[t - 1] += 1
    _resort(S, C, s)
    return done


@jit
def majorized_k(C):
    """Tail sums of type-I occupancy never exceed the reference tail sums."""
    qa = 0
    qr = 0
    ta = 0
    tr = 0
    for i in range(C.info[0], 0, -1):
        qa += C.caff[i]
        qr += C.cref[i]
        ta += qa
        tr += qr
        if ta > tr:
            return False
    return True


@jit
def service_step_k(S, C, x, u):
    """One tick of the μ₁N clock; returns (affinity position, reference position), -1 if none."""
    n = C.order.size
    wa = S.mcount[BUSY_I]
    wr = C.info[1]
    w = min(wa, wr)
    if x <= w / n and w > 0:
        p = n - 1 - min(int(u * w), w - 1)
        s = C.order[p]
        _aff_remove(S, C, s)
        q = _ref_remove(C, p)
        return p, q
    wp = max(wa, wr)
    if x <= wp / n and wp > w:
        m = wp - w
        p = n - wp + min(int(u * m), m - 1)
        if wa > wr:
            _aff_remove(S, C, C.order[p])
            return p, -1
        return -1, _ref_remove(C, p)
    return -1, -1


@jit
def type_ii_service_k(S, C, u):
    c = S.mcount[BUSY_II]
    s = S.members[BUSY_II, min(int(u * c), c - 1)]
    p = C.pos_of[s]
    _aff_remove(S, C, s)
    return p


@jit
def ra_arrival_step_k(S, C, P, n_star, y1, y2, sel, st):
    """Returns (affinity type-I position or -1, reference position)."""
    q = _ref_insert(C, n_star)
    if q < 0:
        return -2, -2
    s = C.order[n_star]
    if y1 * P.lam0 >= P.lam_star[s]:
        return -1, n_star
    a = P.srv_ptr[s]
    b = P.srv_ptr[s + 1]
    target = y2 * P.srv_cum[b - 1]
    e = a
    while e < b - 1 and P.srv_cum[e] <= target:
        e += 1
    kk = P.srv_sel[e]
    m = P.sel_ptr[kk + 1] - P.sel_ptr[kk]
    for j in range(m):
        sel[j] = P.sel_idx[P.sel_ptr[kk] + j]
    srv, jt = allocate_k(S, sel, m, st)
    return _aff_arrival(S, C, srv, jt), n_star


@jit
def mjsq_arrival_step_k(S, C, P, node, sel, st):
    q = _ref_insert(C, P.k)
    if q < 0:
        return -2, -2
    m = P.sel_ptr[node + 1] - P.sel_ptr[node]
    for j in range(m):
        sel[j] = P.sel_idx[P.sel_ptr[node] + j]
    srv, jt = allocate_k(S, sel, m, st)
    return _aff_arrival(S, C, srv, jt), P.k


@jit
def jsq_positions_k(P, x):
    n_aff = np.searchsorted(P.f_aff, x, side="left")
    n_ref = np.searchsorted(P.f_ref, x, side="left")
    return min(n_aff, P.n - 1), min(n_ref, P.n - 1)


@jit
def jsq_arrival_step_k(S, C, P, x, sel, st):
    n_aff, n_ref = jsq_positions_k(P, x)
    if n_aff > n_ref:
        return -3, n_ref
    q = _ref_insert(C, n_ref)
    if q < 0:
        return -2, -2
    # worst-case selection: the server at n_aff plus the d highest positions
    sel[0] = C.order[n_aff]
    for j in range(P.d):
        sel[j + 1] = C.order[P.n - 1 - j]
    srv, jt = allocate_k(S, sel, P.d + 1, st)
    return _aff_arrival(S, C, srv, jt), n_ref


@jit
def arrival_step_k(S, C, P, sel, st):
    if P.policy == RA:
        n_star = next_index(st, P.n)
        y1 = next_uniform(st)
        y2 = next_uniform(st)
        return ra_arrival_step_k(S, C, P, n_star, y1, y2, sel, st)
    if P.policy == MJSQ:
        return mjsq_arrival_step_k(S, C, P, next_index(st, P.n), sel, st)
    return jsq_arrival_step_k(S, C, P, next_uniform(st), sel, st)


@jit
def run_coupling_k(S, C, P, n_events, warmup, log, st):
    """Fire ``n_events`` coupled events.

    Returns ``(status, majorization violations, positional violations,
    ∫ reference jobs dt, ∫ type-I jobs dt, elapsed time)``, the integrals
    and elapsed time taken after ``warmup`` events.  ``status`` is 0, or
    1 when a level exceeded the tracked range.  When ``log`` has rows,
    row e receives ``(t, kind, pos_aff, pos_ref, ok)`` with 1-based
    positions (0 = none).
    """
    n = P.n
    sel = np.empty(n, dtype=np.int64)
    t = 0.0
    maj_bad = 0
    pos_bad = 0
    int_ref = 0.0
    int_aff = 0.0
    elapsed = 0.0
    tot_ref = 0
    tot_aff = 0
    for i in range(n):
        tot_ref += C.ref[i]
        tot_aff += S.ti[i]
    service_rate = P.mu1 * n
    for e in range(n_events):
        R = service_rate + P.arrival_rate + P.mu2 * S.mcount[BUSY_II]
        dt = -math.log(1.0 - next_uniform(st)) / R
        if e >= warmup:
            int_ref += tot_ref * dt
            int_aff += tot_aff * dt
            elapsed += dt
        t += dt
        v = next_uniform(st) * R
        pa = -1
        pr = -1
        good_pos = True
        if v < service_rate:
            kind = EV_SERVICE
            x = next_uniform(st)
            u = next_uniform(st)
            pa, pr = service_step_k(S, C, x, u)
            if pa >= 0:
                tot_aff -= 1
            if pr >= 0:
                tot_ref -= 1
        elif v < service_rate + P.arrival_rate:
            kind = EV_ARRIVAL
            pa, pr = arrival_step_k(S, C, P, sel, st)
            if pa == -2:
                return 1, maj_bad, pos_bad, int_ref, int_aff, elapsed
            if pa == -3:
                good_pos = False
                pa = -1
            tot_ref += 1
            if pa >= 0:
                tot_aff += 1
                if pa > pr:
                    good_pos = False
        else:
            kind = EV_SERVICE_II
            pa = type_ii_service_k(S, C, next_uniform(st))
        ok = majorized_k(C)
        if not ok:
            maj_bad += 1
        if not good_pos:
            pos_bad += 1
        if e < log.shape[0]:
            log[e, 0] = t
            log[e, 1] = kind
            log[e, 2] = pa + 1
            log[e, 3] = pr + 1
            log[e, 4] = 1.0 if ok and good_pos else 0.0
    return 0, maj_bad, pos_bad, int_ref, int_aff, elapsed


# -- policies -------------------------------------------------------------------

_EMPTY_I = np.zeros(1, dtype=np.int64)
_EMPTY_F = np.zeros(1, dtype=np.float64)


def _plan(policy, n, arrival_rate, mu1, mu2, k=0, d=0, sel_ptr=_EMPTY_I, sel_idx=_EMPTY_I,
          srv_ptr=_EMPTY_I, srv_sel=_EMPTY_I, srv_cum=_EMPTY_F, lam_star=_EMPTY_F, lam0=0.0,
          f_aff=_EMPTY_F, f_ref=_EMPTY_F):
    if not (mu1 > mu2 > 0):
        raise ConfigError(f"need mu1 > mu2 > 0, got mu1={mu1}, mu2={mu2}")
    return CouplePlan(int(policy), int(n), float(arrival_rate), float(mu1), float(mu2),
                      int(k), int(d), sel_ptr, sel_idx, srv_ptr, srv_sel, srv_cum,
                      np.asarray(lam_star, dtype=np.float64), float(lam0),
                      np.asarray(f_aff, dtype=np.float64), np.asarray(f_ref, dtype=np.float64))


def ra_plan(family, mu1=1.0, mu2=0.5, split=None):
    """Random-assignment reference at rate λ₀ per server, using the optimal splits."""
    if family.kind == "combinatorial":
        raise ConfigError("the random-assignment coupling needs an explicit selection list")
    split = solve_lambda0(family) if split is None else split
    n = family.n_servers
    if split.lambda0 <= 0:
        raise ConfigError("family has no arrivals")
    if (split.loads > split.lambda0 * (1 + 1e-12)).any():
        raise InvariantError("split loads exceed lambda0")
    per_server = [[] for _ in range(n)]
    for (kk, srv), p in sorted(split.splits.items()):
        per_server[srv].append((kk, split.rates[kk] * p))
    srv_ptr = np.zeros(n + 1, dtype=np.int64)
    srv_ptr[1:] = np.cumsum([max(len(v), 1) for v in per_server])
    srv_sel = np.zeros(srv_ptr[-1], dtype=np.int64)
    srv_cum = np.zeros(srv_ptr[-1], dtype=np.float64)
    for srv, entries in enumerate(per_server):
        a = srv_ptr[srv]
        acc = 0.0
        for j, (kk, w) in enumerate(entries):
            acc += w
            srv_sel[a + j] = kk
            srv_cum[a + j] = acc
        if not entries:
            srv_cum[a] = 1.0
    sel_ptr = np.zeros(len(split.selections) + 1, dtype=np.int64)
    sel_ptr[1:] = np.cumsum([len(S) for S in split.selections])
    sel_idx = np.fromiter((x for S in split.selections for x in S), dtype=np.int64)
    return _plan(RA, n, split.lambda0 * n, mu1, mu2, sel_ptr=sel_ptr, sel_idx=sel_idx,
                 srv_ptr=srv_ptr, srv_sel=srv_sel, srv_cum=srv_cum,
                 lam_star=split.loads, lam0=split.lambda0)


def mjsq_plan(family, k, mu1=1.0, mu2=0.5):
    """MJSQ(k) reference for a graph family whose neighbourhoods have at least N - k servers."""
    if family.kind != "graph":
        raise ConfigError("the MJSQ(k) coupling needs a graph family")
    n = family.n_servers
    if not 0 <= k < n:
        raise ConfigError(f"need 0 <= k < N, got k={k}, N={n}")
    smallest = min(len(S) for S in family.selections)
    if smallest < n - k:
        raise ConfigError(f"minimum degree {smallest - 1} is below N - k - 1 = {n - k - 1}")
    ptr, idx, _ = family.csr()
    return _plan(MJSQ, n, family.lam * n, mu1, mu2, k=k, sel_ptr=ptr, sel_idx=idx)


def jsq_plan(n, d, k, lam, mu1=1.0, mu2=0.5):
    """JSQ(k) reference against the worst-case d-regular stacking."""
    f_aff = build_f_aff(n, d)
    f_ref = build_f_ref(n, k)
    if not f_aff.dominates(f_ref):
        raise ConfigError(f"f_aff does not dominate f_ref for N={n}, d={d}, k={k}")
    return _plan(JSQ, n, lam * n, mu1, mu2, k=k, d=d, f_aff=f_aff.values, f_ref=f_ref.values)


# -- coupled state and Python API ------------------------------------------------


def _make_arrays(aff_state, ref):
    S = aff_state.arrays
    n = S.ti.size
    ref = np.sort(np.asarray(ref, dtype=np.int64))
    if ref.size != n:
        raise ConfigError("both systems need the same number of servers")
    if (ref < 0).any():
        raise ConfigError("queue lengths must be nonnegative")
    cap = max(LEVEL_CAP, int(ref.max(initial=0)) + 2, int(S.ti.max(initial=0)) + 2)
    order = np.array(sorted(range(n), key=lambda s: (S.ti[s], S.tii[s], s)), dtype=np.int64)
    pos_of = np.empty(n, dtype=np.int64)
    pos_of[order] = np.arange(n)
    caff = np.bincount(S.ti, minlength=cap + 1).astype(np.int64)
    cref = np.bincount(ref, minlength=cap + 1).astype(np.int64)
    top = int(max(S.ti.max(initial=0), ref.max(initial=0)))
    info = np.array([top, int((ref > 0).sum())], dtype=np.int64)
    return CoupleArrays(order, pos_of, ref, caff, cref, info)


class CoupledState:
    """The two ordered systems plus the plan and random stream that drive them."""

    def __init__(self, plan=None, aff=None, ref=None, seed=0, n=None):
        if plan is not None:
            n = plan.n
        if aff is None and ref is None and n is None:
            raise ConfigError("need a plan, explicit systems or a server count")
        if aff is None:
            n = len(ref) if n is None else n
            aff = OccupancyState.empty(n)
        elif not isinstance(aff, OccupancyState):
            aff = list(aff)
            if aff and isinstance(aff[0], (tuple, list)):
                aff = OccupancyState.from_configs(aff)
            else:
                aff = OccupancyState(aff)
        if ref is None:
            ref = np.zeros(aff.n_servers, dtype=np.int64)
        self.plan = plan
        self.aff_state = aff
        self.arrays = _make_arrays(aff, ref)
        self.rng = CounterRNG(seed, "coupling")
        self._sel = np.empty(aff.n_servers, dtype=np.int64)

    @property
    def n(self):
        return self.aff_state.n_servers

    @property
    def aff(self):
        """(type_i, type_ii) per position, ascending."""
        S = self.aff_state.arrays
        return [(int(S.ti[s]), int(S.tii[s])) for s in self.arrays.order]

    @property
    def ref(self):
        return [int(v) for v in self.arrays.ref]

    def aff_qbar(self):
        """Q̄_i of type-I jobs: positions with at least i type-I jobs, i = 0..max level."""
        return _cumulative([a for a, _ in self.aff])

    def ref_qbar(self):
        return _cumulative(self.ref)

    def is_sorted(self):
        a = self.aff
        return a == sorted(a) and self.ref == sorted(self.ref)

    def _need(self, policy):
        if self.plan is None or self.plan.policy != policy:
            raise ConfigError(f"state is not set up for the {POLICY_NAMES[policy]} coupling")


def _cumulative(levels):
    top = max(levels, default=0)
    return [sum(1 for v in levels if v >= i) for i in range(top + 1)]


def _pos(p):
    return None if p < 0 else int(p) + 1


def service_step(state, x, u):
    """Potential type-I completion driven by (x, u); returns 1-based (aff, ref) positions or None."""
    if not (0 <= x <= 1 and 0 <= u <= 1):
        raise ValueError("x and u must lie in [0, 1]")
    pa, pr = service_step_k(state.aff_state.arrays, state.arrays, float(x), float(u))
    return _pos(pa), _pos(pr)


def ra_arrival_step(state, n_star, y1, y2):
    """Random-assignment arrival at 1-based position ``n_star``.

    Returns ``(aff_position, ref_position)``; ``aff_position`` is None
    unless a type-I job was added to the affinity system.
    """
    state._need(RA)
    if not 1 <= n_star <= state.n:
        raise ValueError(f"position {n_star} outside 1..{state.n}")
    pa, pr = ra_arrival_step_k(state.aff_state.arrays, state.arrays, state.plan, int(n_star) - 1,
                               float(y1), float(y2), state._sel, state.rng.state)
    return _check_arrival(pa, pr)


def mjsq_arrival_step(state, node=None):
    """MJSQ(k) arrival; the affinity job's selection is the closed neighbourhood of ``node``."""
    state._need(MJSQ)
    node = state.rng.integers(state.n) if node is None else int(node)
    pa, pr = mjsq_arrival_step_k(state.aff_state.arrays, state.arrays, state.plan, node,
                                 state._sel, state.rng.state)
    return _check_arrival(pa, pr)


def jsq_arrival_step(state, x):
    """JSQ(k) arrival by inverse transform of ``x`` under both step functions."""
    state._need(JSQ)
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    pa, pr = jsq_arrival_step_k(state.aff_state.arrays, state.arrays, state.plan, float(x),
                                state._sel, state.rng.state)
    if pa == -3:
        raise InvariantError("f_aff inverse exceeds f_ref inverse: step-function dominance broken")
    return _check_arrival(pa, pr)


def _check_arrival(pa, pr):
    if pa == -2:
        raise InvariantError("occupancy level exceeds the tracked range")
    if pa >= 0 and pa > pr:
        raise InvariantError(f"type-I insertion at position {pa + 1} above reference {pr + 1}")
    return _pos(pa), _pos(pr)


def type_ii_service_step(state, u):
    if state.aff_state.arrays.mcount[BUSY_II] == 0:
        return None
    return _pos(type_ii_service_k(state.aff_state.arrays, state.arrays, float(u)))


def check_majorization(state):
    """True iff Σ_{i≥m} Q̄^aff_i ≤ Σ_{i≥m} Q̄^ref_i for every m ≥ 1."""
    return bool(majorized_k(state.arrays))


def majorization_slack(aff_levels, ref_levels):
    """Reference oracle: min over m of the tail-sum gap, from plain per-position lists."""
    top = max(max(aff_levels, default=0), max(ref_levels, default=0))
    gaps = [sum(max(v - m + 1, 0) for v in ref_levels) - sum(max(v - m + 1, 0) for v in aff_levels)
            for m in range(1, top + 1)]
    return min(gaps, default=0)


def position_index(cumulative, n):
    """Occupancy level at ordered position ``n``: max{j : Q̄_j >= N - n + 1}."""
    cumulative = list(cumulative)
    big_n = cumulative[0]
    if not 1 <= n <= big_n:
        raise ValueError(f"position {n} outside 1..{big_n}")
    need = big_n - n + 1
    return max(j for j, q in enumerate(cumulative) if q >= need)


# -- driver ------------------------------------------------------------------------


@dataclass
class CouplingResult:
    policy: str
    n_events: int
    seed: int
    violations: int
    positional_violations: int
    mean_ref_jobs: float
    mean_type_i_jobs: float
    elapsed: float
    final: CoupledState = None
    log: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self):
        return self.violations == 0 and self.positional_violations == 0

    def write_log(self, fname):
        write_event_log(self.log, fname)


def run_coupling(plan, n_events, seed=0, warmup=0, log=False):
    """Run ``n_events`` coupled events from two empty systems."""
    state = CoupledState(plan, seed=seed)
    buf = np.zeros((n_events if log else 0, 5))
    status, bad, pbad, iref, iaff, elapsed = run_coupling_k(
        state.aff_state.arrays, state.arrays, plan, int(n_events), int(warmup), buf,
        state.rng.state)
    if status:
        raise InvariantError("occupancy level exceeds the tracked range")
    el = elapsed if elapsed > 0 else float("nan")
    return CouplingResult(POLICY_NAMES[plan.policy], int(n_events), seed, int(bad), int(pbad),
                          iref / el, iaff / el, elapsed, state, buf if log else None)


def write_event_log(log, fname):
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "event_kind", "pos_aff", "pos_ref", "ok"])
        for t, kind, pa, pr, ok in log:
            w.writerow([repr(float(t)), EVENT_NAMES[int(kind)], int(pa), int(pr),
                        "true" if ok else "false"])


def random_family(n, n_selections, max_size, target_lambda0, rng):
    """Random general family rescaled so that its λ₀ equals ``target_lambda0``."""
    sels, rates = [], []
    for _ in range(n_selections):
        size = int(rng.integers(1, max_size + 1))
        sels.append(sorted(int(x) for x in rng.choice(n, size=size, replace=False)))
        rates.append(float(rng.uniform(0.1, 1.0)))
    fam = SelectionFamily.general(n, sels, rates)
    scale = target_lambda0 / solve_lambda0(fam).lambda0
    return SelectionFamily.general(n, sels, [r * scale for r in rates])
