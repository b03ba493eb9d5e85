import pytest

from affinity_lb import ConfigError
from affinity_lb.graphs import (
    circulant_regular,
    complete,
    cycle,
    from_edges,
    min_degree,
    parse_graph_spec,
    path,
    read_edge_list,
)


def is_symmetric(adj):
    return all(v in adj[u] for v in range(len(adj)) for u in adj[v])


def test_basic_shapes():
    assert cycle(4) == [[1, 3], [0, 2], [1, 3], [0, 2]]
    assert path(3) == [[1], [0, 2], [1]]
    assert complete(3) == [[1, 2], [0, 2], [0, 1]]
    for g in (cycle(7), path(5), complete(4)):
        assert is_symmetric(g)


@pytest.mark.parametrize("n,d", [(10, 7), (20, 16), (50, 31), (9, 4), (12, 0), (8, 7)])
def test_circulant_is_regular(n, d):
    g = circulant_regular(n, d)
    assert all(len(a) == d for a in g)
    assert all(v not in g[v] for v in range(n))
    assert is_symmetric(g)
    assert min_degree(g) == d


def test_circulant_odd_degree_needs_even_n():
    with pytest.raises(ConfigError):
        circulant_regular(9, 3)
    with pytest.raises(ConfigError):
        circulant_regular(5, 5)


def test_small_graph_errors():
    for f, n in ((cycle, 2), (path, 1), (complete, 0)):
        with pytest.raises(ConfigError):
            f(n)


def test_edges_and_files(tmp_path):
    assert from_edges(3, [(0, 1), (1, 1), (1, 0)]) == [[1], [0], []]
    with pytest.raises(ConfigError):
        from_edges(2, [(0, 2)])
    f = tmp_path / "g.txt"
    f.write_text("# square\n0 1\n1 2\n2,3\n3 0\n")
    assert read_edge_list(f) == cycle(4)
    assert parse_graph_spec(str(f)) == cycle(4)
    (tmp_path / "bad.txt").write_text("0 1 2\n")
    with pytest.raises(ConfigError):
        read_edge_list(tmp_path / "bad.txt")
    (tmp_path / "empty.txt").write_text("# nothing\n")
    with pytest.raises(ConfigError):
        read_edge_list(tmp_path / "empty.txt")


def test_parse_graph_spec():
    assert parse_graph_spec("cycle:5") == cycle(5)
    assert parse_graph_spec("path:4") == path(4)
    assert parse_graph_spec("complete:3") == complete(3)
    assert parse_graph_spec("regular:10:4") == circulant_regular(10, 4)
    for bad in ("cycle:x", "star:4", "regular:5"):
        with pytest.raises(ConfigError):
            parse_graph_spec(bad)
