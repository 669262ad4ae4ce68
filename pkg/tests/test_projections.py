import math

import numpy as np
import pytest

from tvgo import graphs, projections
from tvgo.graphs import active_set, cycle_graph, grid_graph, incidence, path_graph, tree_graph
from tvgo.projections import (antiproject_nullspace, gamma_bound,
                              project_nullspace, pseudoinverse, theory_report)


def _random_tree(rng, n):
    return tree_graph([int(rng.integers(1, v)) for v in range(2, n + 1)])


def _mp_identities_err(Dm, P):
    return max(np.abs(Dm @ P @ Dm - Dm).max(), np.abs(P @ Dm @ P - P).max(),
               np.abs((Dm @ P).T - Dm @ P).max(), np.abs((P @ Dm).T - P @ Dm).max())


CASES = [
    (path_graph(2), []),
    (path_graph(6), [3]),
    (path_graph(9), [2, 5]),
    (cycle_graph(5), []),
    (cycle_graph(8), [1, 4]),
    (grid_graph(3, 3), []),
    (grid_graph(3, 4), [2, 7, 11]),
    (tree_graph([1, 1, 2, 2, 3, 3, 5]), [2, 6]),
]


@pytest.mark.parametrize("g,S", CASES)
def test_moore_penrose_identities(g, S):
    D = incidence(g)
    a = active_set(g, S)
    P = pseudoinverse(D, a).to_dense()
    Dm = D.toarray()[[i - 1 for i in a.inactive]]
    assert _mp_identities_err(Dm, P) < 1e-10


@pytest.mark.parametrize("g,S", CASES)
def test_pinv_matches_numpy(g, S):
    D = incidence(g)
    a = active_set(g, S)
    P = pseudoinverse(D, a).to_dense()
    Dm = D.toarray()[[i - 1 for i in a.inactive]]
    assert np.abs(P - np.linalg.pinv(Dm)).max() < 1e-10


def test_pinv_path2():
    D = incidence(path_graph(2))
    P = pseudoinverse(D, active_set(path_graph(2), [])).to_dense()
    assert np.allclose(P.ravel(), [-0.5, 0.5], atol=1e-12)


def test_pinv_block_structure():
    # deleting the middle edge of path(6) leaves two independent 3-vertex blocks
    g = path_graph(6)
    a = active_set(g, [3])
    P = pseudoinverse(incidence(g), a).to_dense()
    assert np.all(P[3:, :2] == 0)
    assert np.all(P[:3, 2:] == 0)
    g3 = path_graph(3)
    P3 = pseudoinverse(incidence(g3), active_set(g3, [])).to_dense()
    assert np.allclose(P[:3, :2], P3, atol=1e-12)
    assert np.allclose(P[3:, 2:], P3, atol=1e-12)


def test_pinv_apply_transpose_consistent():
    rng = np.random.default_rng(0)
    for g, S in CASES:
        a = active_set(g, S)
        pinv = pseudoinverse(incidence(g), a)
        V = rng.standard_normal((g.n, 3))
        assert np.allclose(pinv.apply_transpose(V), pinv.to_dense().T @ V, atol=1e-10)
        v = rng.standard_normal(g.n)
        assert np.allclose(pinv.apply_transpose(v), pinv.to_dense().T @ v, atol=1e-10)


def test_pinv_requires_inactive_rows():
    g = path_graph(3)
    with pytest.raises(ValueError, match="no rows"):
        pseudoinverse(incidence(g), active_set(g, [1, 2]))


def test_project_constant_mean():
    a = active_set(path_graph(4), [])
    assert np.allclose(project_nullspace(a, np.array([1.0, 2, 3, 4])), 2.5)


def test_project_componentwise_means():
    a = active_set(path_graph(4), [2])
    out = project_nullspace(a, np.array([1.0, 3, 5, 7]))
    assert np.allclose(out, [2, 2, 6, 6])


def test_projection_idempotent_and_complement():
    rng = np.random.default_rng(1)
    for g, S in CASES:
        a = active_set(g, S)
        v = rng.standard_normal(g.n)
        p = project_nullspace(a, v)
        assert np.allclose(project_nullspace(a, p), p, atol=1e-12)
        assert np.allclose(p + antiproject_nullspace(a, v), v, atol=1e-12)


def test_antiprojection_fixes_rowspan():
    # vectors in the rowspan of the reduced operator are untouched
    g = path_graph(7)
    a = active_set(g, [4])
    Dm = incidence(g).toarray()[[i - 1 for i in a.inactive]]
    rng = np.random.default_rng(2)
    v = Dm.T @ rng.standard_normal(Dm.shape[0])
    assert np.allclose(antiproject_nullspace(a, v), v, atol=1e-10)


def test_omega_gamma_weights_path2():
    g = path_graph(2)
    rep = theory_report(incidence(g), active_set(g, []))
    assert rep.gamma == pytest.approx(0.5, abs=1e-12)
    assert rep.omega[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.weights[0] == pytest.approx(0.0, abs=1e-12)


def test_omega_symmetry_path3():
    g = path_graph(3)
    rep = theory_report(incidence(g), active_set(g, []))
    assert rep.omega[0] == pytest.approx(rep.omega[1], abs=1e-14)
    assert np.allclose(rep.weights, 0.0, atol=1e-14)


@pytest.mark.parametrize("g,S", CASES)
def test_omega_matches_gram_inverse(g, S):
    # omega_i^2 equals the matching diagonal entry of (D_m D_m')^{-1}/n
    a = active_set(g, S)
    rep = theory_report(incidence(g), a)
    Dm = incidence(g).toarray()[[i - 1 for i in a.inactive]]
    if np.linalg.matrix_rank(Dm) < Dm.shape[0]:
        pytest.skip("reduced operator not of full row rank")
    diag = np.diag(np.linalg.inv(Dm @ Dm.T)) / g.n
    got = rep.omega[np.asarray(a.inactive) - 1] ** 2
    assert np.abs(got - diag).max() < 1e-8


def test_omega_zero_on_active_weights_one():
    g = path_graph(10)
    a = active_set(g, [3, 7])
    rep = theory_report(incidence(g), a)
    act = np.asarray(a.S) - 1
    assert np.all(rep.omega[act] == 0.0)
    assert np.all(rep.weights[act] == 1.0)
    assert rep.weights.min() == pytest.approx(0.0, abs=1e-14)
    assert np.all((rep.weights >= 0) & (rep.weights <= 1))
    assert rep.weights[np.argmax(rep.omega)] == pytest.approx(0.0, abs=1e-14)


def test_path_column_norm_closed_form():
    # ||(D+)_j||_2 = sqrt(j (k-j)/k) for an isolated path with k vertices
    for k in range(2, 65):
        g = path_graph(k)
        pinv = pseudoinverse(incidence(g), active_set(g, []))
        norms = pinv.column_norms()
        j = np.arange(1, k)
        expected = np.sqrt(j * (k - j) / k)
        assert np.abs(norms - expected).max() < 1e-10


def test_gamma_bound_small_tree():
    assert gamma_bound("tree", 2, 2) == pytest.approx(math.sqrt(3 / 8))
    g = path_graph(2)
    rep = theory_report(incidence(g), active_set(g, []))
    assert rep.gamma <= gamma_bound("tree", 2, 2)


def test_gamma_bound_limit():
    # with a single component the bound tends to 1/2 from above
    vals = [gamma_bound("tree", n, n) for n in (10, 100, 10_000)]
    assert vals[0] > vals[1] > vals[2] > 0.5
    assert vals[2] == pytest.approx(0.5, abs=1e-4)


def test_gamma_bound_grid_needs_constant():
    with pytest.raises(ValueError):
        gamma_bound("grid", 100, 100)
    assert gamma_bound("grid", 100, 100, grid_constant=2.0) == \
        pytest.approx(2.0 * math.sqrt(math.log(100) / 100))


def test_g_function_maximum():
    # i(n-i)/n peaks at the midpoint
    for k in (6, 8, 12):
        g = np.array([i * (k - i) / k for i in range(1, k)])
        assert g.argmax() + 1 == k // 2


def test_gamma_bound_holds_random_trees():
    rng = np.random.default_rng(99)
    for _ in range(60):
        n = int(rng.integers(2, 51))
        g = _random_tree(rng, n)
        S = [i + 1 for i in range(g.m) if rng.random() < 0.3]
        a = active_set(g, S)
        if len(a.inactive) == 0:
            continue
        rep = theory_report(incidence(g), a)
        assert rep.gamma <= math.sqrt((a.n_max + 1) / (4 * n)) + 1e-12


def test_gamma_bound_holds_cycles():
    rng = np.random.default_rng(7)
    for n in (5, 12, 30, 50):
        g = cycle_graph(n)
        for _ in range(15):
            S = [i + 1 for i in range(n) if rng.random() < 0.25]
            if len(S) < 2:
                S = [1, n // 2]
            a = active_set(g, S)
            rep = theory_report(incidence(g), a)
            assert rep.gamma <= math.sqrt((a.n_max + 1) / (4 * n)) + 1e-12


def test_grid_gamma_scaling_shape():
    # gamma on square grids decays like sqrt(log(n)/n) up to a constant;
    # the bound's constant is configuration, so only the shape is checked
    ratios = []
    for k in (4, 6, 8, 10):
        g = grid_graph(k, k)
        rep = theory_report(incidence(g), active_set(g, []))
        n = k * k
        ratios.append(rep.gamma / math.sqrt(math.log(n) / n))
    assert max(ratios) / min(ratios) < 2.0


def test_theory_report_serialization():
    g = path_graph(5)
    d = theory_report(incidence(g), active_set(g, [2])).to_dict()
    assert set(d) == {"omega", "gamma", "weights", "r_S", "component_sizes"}
    assert len(d["omega"]) == 4 and d["r_S"] == 2


def test_pinv_reversed_edge_orientation():
    # a path 1-2-3 whose first edge points toward the root vertex
    from tvgo.graphs import DirectedGraph
    g = DirectedGraph(3, ((2, 1), (2, 3)))
    a = active_set(g, [])
    D = incidence(g)
    P = pseudoinverse(D, a).to_dense()
    assert np.abs(P - np.linalg.pinv(D.toarray())).max() < 1e-12
    rep = theory_report(D, a)
    assert rep.gamma == pytest.approx(np.sqrt(2.0 / 3.0) / np.sqrt(3))


def test_disconnected_graph_components():
    # two components: a 3-path and an isolated edge
    from tvgo.graphs import DirectedGraph
    g = DirectedGraph(5, ((1, 2), (2, 3), (5, 4)))
    a = active_set(g, [])
    assert a.r_S == 2 and a.comp_sizes == (3, 2)
    D = incidence(g)
    P = pseudoinverse(D, a).to_dense()
    assert np.abs(P - np.linalg.pinv(D.toarray())).max() < 1e-12
    v = np.array([1.0, 2.0, 3.0, 10.0, 20.0])
    assert np.allclose(project_nullspace(a, v), [2, 2, 2, 15, 15])
