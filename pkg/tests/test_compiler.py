import itertools

import numpy as np
import pytest
from conftest import ANIMAL_MODELS, brute_models, random_cnf
from hypothesis import given
from hypothesis import strategies as st

from spl.circuit import support_count, support_set, validate_structure
from spl.compiler import (
    CnfFormula,
    SddManager,
    clauses_to_models,
    compile_cnf,
    conjoin,
    constant,
    disjoin,
    from_models,
    parse_dimacs,
)
from spl.errors import (
    DuplicateModel,
    InconsistentScope,
    LiteralOutOfRange,
    MalformedHeader,
    UnterminatedClause,
    VtreeMismatch,
)
from spl.vtree import build_vtree, parse_vtree


def test_parse_animals():
    f = parse_dimacs("c comment\np cnf 3 2\n-1 3 0\n-2 3 0\n")
    assert f.num_vars == 3
    assert f.clauses == [((0, False), (2, True)), ((1, False), (2, True))]


def test_parse_empty_and_tautological_clause():
    assert parse_dimacs("p cnf 1 0\n").clauses == []
    f = parse_dimacs("p cnf 2 1\n1 -1 0\n")
    assert f.clauses == [((0, True), (0, False))]
    assert support_count(compile_cnf(f).circuit) == 4


def test_parse_clause_spanning_lines():
    f = parse_dimacs("p cnf 3 1\n1 2\n3 0\n")
    assert f.clauses == [((0, True), (1, True), (2, True))]


@pytest.mark.parametrize(
    "text, err",
    [
        ("1 2 0\n", MalformedHeader),
        ("p cnf x 1\n1 0\n", MalformedHeader),
        ("p cnf 2 2\n1 0\n", MalformedHeader),
        ("p cnf 2 1\n3 0\n", LiteralOutOfRange),
        ("p cnf 2 1\n1 -2\n", UnterminatedClause),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_dimacs(text)


def test_dimacs_round_trip():
    f = parse_dimacs("p cnf 3 2\n-1 3 0\n-2 3 0\n")
    assert parse_dimacs(f.to_dimacs()).clauses == f.clauses


def test_compile_examples(animals):
    assert support_set(animals.circuit) == ANIMAL_MODELS
    assert animals.model_count() == 5
    unsat = compile_cnf(CnfFormula(1, [((0, True),), ((0, False),)]))
    assert unsat.is_false and support_count(unsat.circuit) == 0
    clauses = [tuple((v, True) for v in range(4))]
    clauses += [((a, False), (b, False)) for a, b in itertools.combinations(range(4), 2)]
    assert support_count(compile_cnf(CnfFormula(4, clauses)).circuit) == 4


def test_compiled_circuit_flags(animals):
    rep = validate_structure(animals.circuit)
    assert rep.smooth and rep.decomposable and rep.deterministic
    c = animals.circuit
    assert c.vtree == animals.vtree
    # only indicators as inputs, all weights one
    assert set(np.unique(c.kind)) <= {0, 2, 3}
    assert (animals.params() == 1).all()


def test_tautology_is_constant_one_over_scope():
    c = compile_cnf(CnfFormula(3, [])).circuit
    assert support_count(c) == 8
    assert validate_structure(c).smooth


def _agrees(formula, circuit):
    return brute_models(circuit) == set(clauses_to_models(formula, range(formula.num_vars)))


clause_st = st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=1, max_size=3).map(tuple)


@given(st.lists(clause_st, max_size=10), st.sampled_from(["right-linear", "balanced"]))
def test_compile_matches_brute_force(clauses, strategy):
    f = CnfFormula(6, clauses)
    cc = compile_cnf(f, build_vtree(range(6), strategy))
    assert _agrees(f, cc.circuit)
    assert validate_structure(cc.circuit).deterministic


def test_cache_does_not_change_support():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(1, 9))
        f = random_cnf(rng, n, int(rng.integers(0, 12)))
        on = compile_cnf(f, use_cache=True)
        off = compile_cnf(f, use_cache=False)
        assert support_set(on.circuit) == support_set(off.circuit)
        assert on.model_count() == off.model_count()


def test_apply_cache_is_used():
    f = parse_dimacs("p cnf 4 3\n1 2 0\n-2 3 0\n3 4 0\n")
    mgr_on, mgr_off = SddManager(build_vtree(range(4))), SddManager(build_vtree(range(4)), use_cache=False)
    compile_cnf(f, mgr_on)
    compile_cnf(f, mgr_off)
    assert mgr_on.apply_calls <= mgr_off.apply_calls


def test_from_models_examples():
    vt = build_vtree([0, 1])
    xor = from_models([(1, 0), (0, 1)], vt)
    assert support_set(xor.circuit) == {(1, 0), (0, 1)}
    assert from_models([], vt).is_false
    two_by_two = from_models([(1, 0, 1, 0), (0, 1, 0, 1)], build_vtree(range(4)))
    assert support_count(two_by_two.circuit) == 2


def test_from_models_errors():
    vt = build_vtree([0, 1])
    with pytest.raises(DuplicateModel):
        from_models([(1, 0), (1, 0)], vt)
    with pytest.raises(InconsistentScope):
        from_models([(1, 0, 1)], vt)
    with pytest.raises(InconsistentScope):
        from_models([(1,)], vt, variables=[7])


@given(st.sets(st.tuples(*[st.integers(0, 1)] * 5), max_size=20), st.integers(0, 10**6))
def test_from_models_support_is_exact(models, seed):
    rng = np.random.default_rng(seed)
    order = [int(v) for v in rng.permutation(5)]
    vt = build_vtree(order, "balanced" if seed % 2 else "right-linear")
    cc = from_models(sorted(models), vt)
    assert support_set(cc.circuit) == set(models) or (not models and support_count(cc.circuit) == 0)
    assert cc.model_count() == len(models)
    assert validate_structure(cc.circuit).deterministic


def test_conjoin_disjoin_identities(animals):
    mgr = animals.manager
    a = compile_cnf(parse_dimacs("p cnf 3 1\n-1 3 0\n"), mgr)
    b = compile_cnf(parse_dimacs("p cnf 3 1\n-2 3 0\n"), mgr)
    assert support_count(conjoin(a, b).circuit) == 5
    assert support_set(disjoin(animals, constant(mgr, False, 3)).circuit) == ANIMAL_MODELS
    assert support_set(conjoin(animals, constant(mgr, True, 3)).circuit) == ANIMAL_MODELS
    assert support_set((a | b).circuit) == support_set(a.circuit) | support_set(b.circuit)
    assert support_count((~animals).circuit) == 3
    assert validate_structure(disjoin(a, b).circuit).deterministic


def test_operands_on_equal_vtrees_are_imported(animals):
    other = compile_cnf(parse_dimacs("p cnf 3 1\n1 0\n"))
    assert support_count(conjoin(animals, other).circuit) == 2


def test_vtree_mismatch(animals):
    other = compile_cnf(parse_dimacs("p cnf 3 1\n1 0\n"), parse_vtree("((0 1) 2)"))
    with pytest.raises(VtreeMismatch):
        conjoin(animals, other)


def test_unknown_variable_in_formula():
    with pytest.raises(InconsistentScope):
        compile_cnf(parse_dimacs("p cnf 3 1\n3 0\n"), build_vtree([0, 1]))
