import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from umvd.harness.generators import generate_planted
from umvd.instance import Ultrametric, build_ladder, instance_from_levels
from umvd.newick import NewickError, newick_distances, parse_newick, to_newick

from conftest import levels_matrix


def _um(lv, values):
    inst = instance_from_levels(lv, values=values)
    lad = build_ladder(inst)
    return Ultrametric(lad.level_of.copy(), lad)


def test_two_points():
    u = _um(np.array([[0, 1], [1, 0]]), [3.0])
    assert to_newick(u, ["a", "b"]) == "(a:1.5,b:1.5);"


def test_three_points():
    u = _um(levels_matrix({(0, 1): 2, (0, 2): 1, (1, 2): 1}, 3), [4.0, 2.0])
    text = to_newick(u, ["a", "b", "c"])
    assert text == "((a:1,b:1):1,c:2);"
    labels, D = newick_distances(text)
    assert labels == ["a", "b", "c"]
    assert sorted(D[np.triu_indices(3, 1)]) == [2, 4, 4]


def test_star_tree():
    lv = np.ones((4, 4), dtype=np.int64)
    np.fill_diagonal(lv, 0)
    text = to_newick(_um(lv, [6.0]))
    assert text == "(1:3,2:3,3:3,4:3);"
    assert text.count("(") == 1


def test_rejects_non_ultrametric():
    lad_inst = instance_from_levels(levels_matrix({(0, 1): 2, (0, 2): 2, (1, 2): 1}, 3))
    lad = build_ladder(lad_inst)
    with pytest.raises(NewickError, match="not an ultrametric"):
        to_newick(Ultrametric(lad.level_of.copy(), lad))


def test_quoted_labels_roundtrip():
    u = _um(levels_matrix({(0, 1): 2, (0, 2): 1, (1, 2): 1}, 3), [4.0, 2.0])
    text = to_newick(u, ["it's", "a b", "c:d"])
    labels, _ = newick_distances(text)
    assert labels == ["it's", "a b", "c:d"]


def test_parser_errors():
    for bad in ["(a:1,b:1)", "(a:1,b:1));", "(a:x,b:1);", "('a:1,b:1);"]:
        with pytest.raises(NewickError):
            parse_newick(bad)


@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 5))
def test_roundtrip_reproduces_levels(seed, n, L):
    g = generate_planted("perturbed_ultrametric", n, L, k=0, seed=seed)
    u = _um(g.planted, [float(L - l + 1) for l in range(1, L + 1)])
    labels, D = newick_distances(to_newick(u))
    order = [int(v) - 1 for v in labels]
    back = np.empty_like(D)
    back[np.ix_(order, order)] = D
    assert np.array_equal(back, u.distance_matrix())
