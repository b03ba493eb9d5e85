"""Graph topologies used to build graph-model selection families.

Graphs are adjacency lists over dense 0-based node ids.
"""

from pathlib import Path

from .errors import ConfigError


def cycle(n):
    if n < 3:
        raise ConfigError("cycle needs at least 3 nodes")
    return [sorted({(v - 1) % n, (v + 1) % n}) for v in range(n)]


def path(n):
    if n < 2:
        raise ConfigError("path needs at least 2 nodes")
    return [[u for u in (v - 1, v + 1) if 0 <= u < n] for v in range(n)]


def complete(n):
    if n < 1:
        raise ConfigError("complete graph needs at least 1 node")
    return [[u for u in range(n) if u != v] for v in range(n)]


def circulant_regular(n, d):
    """d-regular circulant graph: v ~ v±1..v±d//2, plus the antipode when d is odd."""
    if not 0 <= d < n:
        raise ConfigError(f"need 0 <= d < n, got d={d}, n={n}")
    if d % 2 == 1 and n % 2 == 1:
        raise ConfigError("odd-degree regular graph needs an even number of nodes")
    adj = []
    for v in range(n):
        nbrs = set()
        for s in range(1, d // 2 + 1):
            nbrs.add((v + s) % n)
            nbrs.add((v - s) % n)
        if d % 2 == 1:
            nbrs.add((v + n // 2) % n)
        adj.append(sorted(nbrs))
    return adj


def from_edges(n, edges):
    adj = [set() for _ in range(n)]
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ConfigError(f"edge ({u}, {v}) out of range for {n} nodes")
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    return [sorted(a) for a in adj]


def read_edge_list(fname):
    """Whitespace separated ``u v`` lines; ``#`` comments; n = max id + 1."""
    edges = []
    for line in Path(fname).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigError(f"bad edge line: {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges:
        raise ConfigError(f"no edges in {fname}")
    n = max(max(e) for e in edges) + 1
    return from_edges(n, edges)


def parse_graph_spec(spec):
    """``cycle:n``, ``path:n``, ``complete:n``, ``regular:n:d`` or an edge-list file path."""
    parts = spec.split(":")
    try:
        if parts[0] == "cycle" and len(parts) == 2:
            return cycle(int(parts[1]))
        if parts[0] == "path" and len(parts) == 2:
            return path(int(parts[1]))
        if parts[0] == "complete" and len(parts) == 2:
            return complete(int(parts[1]))
        if parts[0] == "regular" and len(parts) == 3:
            return circulant_regular(int(parts[1]), int(parts[2]))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad graph spec {spec!r}") from exc
    if Path(spec).is_file():
        return read_edge_list(spec)
    raise ConfigError(f"unknown graph spec {spec!r}")


def min_degree(adj):
    return min(len(a) for a in adj)
