"""Stability thresholds: the min-max split rate λ₀ and structural graph conditions."""

import csv
from collections import deque
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ConfigError

LAMBDA0_TOL = 1e-9
_FLOW_EPS = 1e-12


class _FlowNetwork:
    """Dinic max-flow on float capacities."""

    def __init__(self, n):
        self.n = n
        self.adj = [[] for _ in range(n)]
        self.to = []
        self.cap = []

    def add_edge(self, u, v, c):
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(c))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)
        return len(self.to) - 2

    def _bfs(self, s, t):
        self.level = [-1] * self.n
        self.level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in self.adj[u]:
                if self.cap[e] > _FLOW_EPS and self.level[self.to[e]] < 0:
                    self.level[self.to[e]] = self.level[u] + 1
                    q.append(self.to[e])
        return self.level[t] >= 0

    def _dfs(self, u, t, f):
        if u == t:
            return f
        while self.it[u] < len(self.adj[u]):
            e = self.adj[u][self.it[u]]
            v = self.to[e]
            if self.cap[e] > _FLOW_EPS and self.level[v] == self.level[u] + 1:
                pushed = self._dfs(v, t, min(f, self.cap[e]))
                if pushed > _FLOW_EPS:
                    self.cap[e] -= pushed
                    self.cap[e ^ 1] += pushed
                    return pushed
            self.it[u] += 1
        return 0.0

    def max_flow(self, s, t):
        total = 0.0
        while self._bfs(s, t):
            self.it = [0] * self.n
            while True:
                f = self._dfs(s, t, float("inf"))
                if f <= _FLOW_EPS:
                    break
                total += f
        return total

    def flow(self, e):
        return self.cap[e ^ 1]


@dataclass
class SplitSolution:
    """Optimal fractional split of selection streams over their servers.

    ``splits[(k, n)]`` is the fraction of selection ``k``'s jobs routed to
    server ``n``; ``loads[n]`` the resulting per-server rate λ*_n.
    """

    lambda0: float
    splits: dict = field(default_factory=dict)
    loads: np.ndarray = None
    selections: list = field(default_factory=list)
    rates: list = field(default_factory=list)

    def to_json(self):
        return {
            "lambda0": self.lambda0,
            "loads": [float(x) for x in self.loads],
            "splits": [{"selection": list(self.selections[k]), "server": int(n), "p": float(p)}
                       for (k, n), p in sorted(self.splits.items())],
        }


def _route(selections, rates, n_servers, cap):
    """Max-flow with server capacities ``cap``; returns (flow value, per-edge flows)."""
    m = len(selections)
    src, sink = m + n_servers, m + n_servers + 1
    net = _FlowNetwork(m + n_servers + 2)
    unbounded = float(sum(rates)) + 1.0
    sel_edges = []
    for k, (S, r) in enumerate(zip(selections, rates)):
        net.add_edge(src, k, r)
        sel_edges.append([(n, net.add_edge(k, m + n, unbounded)) for n in S])
    for n in range(n_servers):
        net.add_edge(m + n, sink, cap)
    value = net.max_flow(src, sink)
    flows = [[(n, net.flow(e)) for n, e in edges] for edges in sel_edges]
    return value, flows


def lambda0(family):
    """Smallest achievable max per-server load over fractional splits.

    Binary search on the candidate load with a max-flow feasibility test:
    source -> selection (capacity λ_S), selection -> member servers
    (unbounded), server -> sink (capacity = candidate load).
    """
    if family.kind == "combinatorial":
        raise ConfigError("the combinatorial family is symmetric: lambda0 equals lam")
    selections = [S for S, r in zip(family.selections, family.rates) if r > 0]
    rates = [r for r in family.rates if r > 0]
    n = family.n_servers
    if not selections:
        return SplitSolution(0.0, {}, np.zeros(n), [], [])
    total = float(sum(rates))
    lo = total / n
    # every job of every selection through one server is always feasible
    incident = np.zeros(n)
    for S, r in zip(selections, rates):
        incident[list(S)] += r
    hi = float(incident.max())
    need = total * (1 - 1e-12)
    if _route(selections, rates, n, lo)[0] >= need:
        hi = lo
    else:
        while hi - lo > LAMBDA0_TOL:
            mid = 0.5 * (lo + hi)
            if _route(selections, rates, n, mid)[0] >= need:
                hi = mid
            else:
                lo = mid
    _, flows = _route(selections, rates, n, hi)
    splits = {}
    loads = np.zeros(n)
    for k, (r, edges) in enumerate(zip(rates, flows)):
        routed = sum(f for _, f in edges)
        for srv, f in edges:
            # renormalise away the max-flow's tiny shortfall so each S sums to 1
            p = f / routed if routed > 0 else 1.0 / len(edges)
            if p > 0:
                splits[(k, srv)] = p
                loads[srv] += r * p
    return SplitSolution(float(loads.max()), splits, loads, selections, rates)


def lambda0_grid(family, step=1e-3, max_points=2_000_000):
    """Brute-force λ₀ for small instances.

    Every selection except the largest is split over a grid of the
    simplex with spacing ``step``; the largest one is then poured into
    its servers by exact water-filling, which is its optimal split given
    the others.  Independent of the max-flow route in :func:`lambda0`.
    """
    pairs = [(S, r) for S, r in zip(family.selections, family.rates) if r > 0]
    n = family.n_servers
    if not pairs:
        return 0.0
    pairs.sort(key=lambda p: len(p[0]))
    *gridded, (last, r_last) = pairs
    ticks = int(round(1 / step))
    loads = np.zeros((1, n))
    for S, r in gridded:
        pts = np.array(list(_simplex_points(len(S), ticks)), dtype=np.float64) / ticks
        if len(loads) * len(pts) > max_points:
            raise ValueError("instance too large for the grid oracle")
        add = np.zeros((len(pts), n))
        add[:, list(S)] = r * pts
        loads = (loads[:, None, :] + add[None, :, :]).reshape(-1, n)
    inside = loads[:, list(last)]
    outside = np.delete(loads, list(last), axis=1)
    level = _water_level(inside, r_last)
    if outside.shape[1]:
        level = np.maximum(level, outside.max(axis=1))
    return float(level.min())


def _water_level(base, amount):
    """Row-wise max load after pouring ``amount`` into the lowest of ``base``."""
    b = np.sort(base, axis=1)
    m = b.shape[1]
    csum = np.cumsum(b, axis=1)
    # with the lowest k+1 servers filled, w = (amount + sum of their bases) / (k+1)
    best = np.full(b.shape[0], np.inf)
    for k in range(m):
        w = (amount + csum[:, k]) / (k + 1)
        ok = w >= b[:, k]
        if k + 1 < m:
            ok &= w <= b[:, k + 1]
        best = np.where(ok & (w < best), w, best)
    return np.maximum(best, b[:, -1])


def _simplex_points(size, ticks):
    if size == 1:
        yield (ticks,)
        return
    for a in range(ticks + 1):
        for rest in _simplex_points(size - 1, ticks - a):
            yield (a,) + rest


def lambda0_density(family):
    """λ₀ as the densest server subset: max_T (Σ_{S ⊆ T} λ_S) / |T| (tiny N only)."""
    from itertools import combinations

    n = family.n_servers
    best = 0.0
    for size in range(1, n + 1):
        for T in combinations(range(n), size):
            Tset = set(T)
            mass = sum(r for S, r in zip(family.selections, family.rates) if set(S) <= Tset)
            best = max(best, mass / size)
    return best


def mjsq_condition(n, k, lam, mu1):
    """Whether the MJSQ(k) reference system is stable: λN < μ₁(N − k)."""
    if not 0 <= k < n:
        raise ConfigError(f"need 0 <= k < N, got k={k}, N={n}")
    return lam * n < mu1 * (n - k)


def dregular_condition(n, d, k):
    """Σ_{i=1}^{N-d-1} C(N-i, k-1) < (d+1)/N · C(N, k), in exact integers."""
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= k <= N, got k={k}, N={n}")
    if not 1 <= d < n:
        raise ConfigError(f"need 1 <= d < N, got d={d}, N={n}")
    lhs = sum(comb(n - i, k - 1) for i in range(1, n - d))
    return lhs * n < (d + 1) * comb(n, k)


def min_regular_degree(n, k):
    for d in range(1, n):
        if dregular_condition(n, d, k):
            return d
    raise AssertionError("d = N - 1 always qualifies")  # pragma: no cover


TABLE1_KS = (2, 3, 4, 5, 10, 15, 25)


def regular_degree_table(n=50, ks=TABLE1_KS):
    return [(k, min_regular_degree(n, k)) for k in ks]


def write_regular_degree_csv(fname, n=50, ks=TABLE1_KS):
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "d_min"])
        w.writerows(regular_degree_table(n, ks))
