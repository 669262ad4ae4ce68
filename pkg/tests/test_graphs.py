import itertools

import numpy as np
import pytest

from tvgo import graphs
from tvgo.graphs import (GraphError, active_set, build_graph, cycle_graph,
                         grid_graph, incidence, is_admissible, path_graph,
                         read_active_set, read_graph, tree_graph, write_graph,
                         write_active_set)


def test_path_edges():
    assert path_graph(3).edges == ((1, 2), (2, 3))
    assert path_graph(2).edges == ((1, 2),)


def test_cycle_edges():
    g = cycle_graph(4)
    assert g.edges == ((1, 2), (2, 3), (3, 4), (4, 1))
    assert g.m == g.n == 4


def test_grid_2x2():
    g = grid_graph(2, 2)
    assert g.n == 4 and g.m == 4
    assert g.edges == ((1, 2), (3, 4), (1, 3), (2, 4))


def test_grid_row_major_order():
    g = grid_graph(2, 3)
    horizontal = g.edges[:4]
    vertical = g.edges[4:]
    assert horizontal == ((1, 2), (2, 3), (4, 5), (5, 6))
    assert vertical == ((1, 4), (2, 5), (3, 6))


def test_tree_parent_array():
    # vertex 2 hangs off 1, vertex 3 off 1, vertex 4 off 3
    g = tree_graph([1, 1, 3])
    assert g.edges == ((1, 2), (1, 3), (3, 4))


def test_tree_parent_after_child_is_fine():
    # parents may point to higher-numbered vertices as long as 1 is reached
    g = tree_graph([3, 1])  # 2 -> 3 -> 1
    assert g.edges == ((3, 2), (1, 3))


def test_tree_cycle_detected():
    with pytest.raises(GraphError, match="cycle"):
        tree_graph([3, 2])  # 2 <-> 3 never reach the root
    with pytest.raises(GraphError, match="out of range"):
        tree_graph([5])
    with pytest.raises(GraphError, match="own parent"):
        tree_graph([2])


def test_minimum_sizes():
    with pytest.raises(GraphError):
        path_graph(1)
    with pytest.raises(GraphError):
        cycle_graph(2)


def test_incidence_path3():
    D = incidence(path_graph(3)).toarray()
    assert np.array_equal(D, [[-1, 1, 0], [0, -1, 1]])


def test_incidence_cycle3():
    D = incidence(cycle_graph(3)).toarray()
    assert np.array_equal(D, [[-1, 1, 0], [0, -1, 1], [1, 0, -1]])


@pytest.mark.parametrize("g", [path_graph(7), cycle_graph(6), grid_graph(3, 4),
                               tree_graph([1, 1, 2, 2, 5])])
def test_incidence_invariants(g):
    D = incidence(g)
    A = D.toarray()
    assert A.shape == (g.m, g.n)
    assert np.all(np.isin(A, [-1.0, 0.0, 1.0]))
    assert np.allclose(A.sum(axis=1), 0.0)
    assert np.all((A == -1).sum(axis=1) == 1)
    assert np.all((A == 1).sum(axis=1) == 1)
    # connected graphs: rank = n - 1
    assert np.linalg.matrix_rank(A) == g.n - 1


def test_canonical_order_stable():
    D1 = incidence(build_graph("grid", height=3, width=5)).toarray()
    D2 = incidence(build_graph("grid", height=3, width=5)).toarray()
    assert np.array_equal(D1, D2)


def test_active_set_path_split():
    a = active_set(path_graph(5), [2])
    assert a.comp_sizes == (2, 3)
    assert a.r_S == 2 and a.n_min == 2 and a.n_max == 3
    assert a.inactive == (1, 3, 4)
    assert a.i_star(3) == 1
    with pytest.raises(ValueError):
        a.i_star(2)


def test_active_set_cycle_singleton():
    a = active_set(cycle_graph(4), [1])
    assert a.r_S == 1


def test_active_set_empty_connected():
    for g in [path_graph(6), cycle_graph(5), grid_graph(2, 3)]:
        assert active_set(g, []).r_S == 1


def test_active_set_validates_range():
    with pytest.raises(GraphError):
        active_set(path_graph(4), [9])


def _random_subset(rng, m):
    return [i + 1 for i in range(m) if rng.random() < 0.35]


@pytest.mark.parametrize("g", [path_graph(9), cycle_graph(8), grid_graph(3, 4),
                               tree_graph([1, 2, 2, 1, 4, 4, 3, 8, 8, 10, 1])])
def test_r_S_matches_rank_nullity(g):
    # component count equals n - rank of the reduced incidence, all n <= 12
    rng = np.random.default_rng(g.n * 31 + g.m)
    D = incidence(g).toarray()
    for _ in range(25):
        S = _random_subset(rng, g.m)
        a = active_set(g, S)
        keep = [i - 1 for i in a.inactive]
        rank = np.linalg.matrix_rank(D[keep]) if keep else 0
        assert a.r_S == g.n - rank


def test_admissible_exhaustive_path_cycle():
    # paths: every subset works; cycles: exactly the non-singletons
    for n in range(3, 9):
        g = path_graph(n)
        D = incidence(g)
        for r in range(g.m + 1):
            for S in itertools.combinations(range(1, g.m + 1), r):
                assert is_admissible(D, active_set(g, S))
    for n in range(3, 9):
        g = cycle_graph(n)
        D = incidence(g)
        for r in range(g.m + 1):
            for S in itertools.combinations(range(1, g.m + 1), r):
                ok = is_admissible(D, active_set(g, S))
                assert ok == (len(S) != 1)


def test_admissible_matches_projection_criterion():
    # the component test agrees with the exact nullspace projection of d_i
    rng = np.random.default_rng(3)
    for g in [grid_graph(3, 3), cycle_graph(7), tree_graph([1, 1, 2, 3, 3])]:
        D = incidence(g)
        Dd = D.toarray()
        for _ in range(30):
            S = _random_subset(rng, g.m)
            a = active_set(g, S)
            keep = [i - 1 for i in a.inactive]
            sub = Dd[keep] if keep else np.zeros((0, g.n))
            null_proj = np.eye(g.n) - np.linalg.pinv(sub) @ sub
            expected = all(np.linalg.norm(null_proj @ Dd[i - 1]) > 1e-9 for i in S)
            assert is_admissible(D, a) == expected


def test_graph_file_round_trip(tmp_path):
    g = grid_graph(3, 4)
    p = tmp_path / "g.txt"
    write_graph(g, str(p))
    g2 = read_graph(str(p))
    assert g2 == g
    assert np.array_equal(incidence(g).toarray(), incidence(g2).toarray())
    assert p.read_text().splitlines()[0] == "12 17"


def test_active_set_file_round_trip(tmp_path):
    p = tmp_path / "s.txt"
    write_active_set([4, 2, 9], str(p))
    assert read_active_set(str(p)) == (2, 4, 9)


def test_build_graph_dispatch():
    assert build_graph("path", n=4).m == 3
    assert build_graph("cycle", n=4).m == 4
    assert build_graph("tree", parents=[1, 2]).m == 2
    with pytest.raises(GraphError):
        build_graph("hypercube", n=4)
