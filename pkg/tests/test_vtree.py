import pytest
from hypothesis import given
from hypothesis import strategies as st

from spl.errors import EmptyVariableSet, ParseError
from spl.vtree import build_vtree, parse_vtree


def test_right_linear_three_vars():
    vt = build_vtree([0, 1, 2], "rightLinear")
    assert vt.shape() == (0, (1, 2))
    assert vt.height() == 2


def test_balanced_four_vars_has_depth_two():
    vt = build_vtree(range(4), "balanced")
    assert vt.shape() == ((0, 1), (2, 3))
    assert vt.height() == 2


def test_single_leaf():
    vt = build_vtree([5])
    assert vt.is_leaf(vt.root) and vt.variables == (5,)


def test_empty_and_unknown_strategy():
    with pytest.raises(EmptyVariableSet):
        build_vtree([])
    with pytest.raises(ValueError):
        build_vtree([0], "zigzag")


def test_duplicate_leaves_rejected():
    with pytest.raises(ValueError):
        parse_vtree("(0 0)")


@given(st.permutations(list(range(7))), st.sampled_from(["right-linear", "balanced"]))
def test_text_round_trip_and_leaf_permutation(order, strategy):
    vt = build_vtree(order, strategy)
    assert sorted(vt.variables) == list(range(7))
    assert list(vt.variables) == list(order)
    back = parse_vtree(vt.dumps())
    assert back == vt and hash(back) == hash(vt)


def test_lca_and_containment():
    vt = parse_vtree("((0 1) (2 3))")
    a, b = vt.leaf_of[0], vt.leaf_of[3]
    assert vt.lca(a, b) == vt.root
    assert vt.in_left(vt.root, a) and not vt.in_left(vt.root, b)
    assert vt.node_vars(vt.left[vt.root]) == [0, 1]


@pytest.mark.parametrize("text", ["(0 1", "(0 1 2)", "(0 x)", ")", "0 1"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_vtree(text)
