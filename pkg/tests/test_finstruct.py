import itertools

import pytest
from hypothesis import given, settings, strategies as st

from etale_lab.finstruct import (
    FinStructure,
    NotFound,
    StructureError,
    all_models,
    automorphisms,
    back_and_forth,
    definability_search,
    evaluate,
    is_isomorphic,
    isomorphisms,
    models,
    orbits,
    satisfying,
    scott_sentence,
)
from etale_lab.logic import TOP, And, Atomic, Exists, Not, Signature, classify

from oracle import holds, iso_classes, naive_automorphisms, naive_isomorphic, raw_structures
from strategies import SIG, formulas

P1 = Signature.relational({"P": 1})
R2 = Signature.relational({"R": 2})
EMPTY = Signature.relational({})


def pure(n):
    return FinStructure(EMPTY, {"S": [str(i) for i in range(n)]})


def p_struct(n, p):
    return FinStructure(P1, {"S": [str(i) for i in range(n)]}, {"P": [(a,) for a in p]})


@st.composite
def structures(draw, sig=SIG, max_size=3):
    n = draw(st.integers(0, max_size))
    univ = [str(i) for i in range(n)]
    rels = {}
    for r, args in sig.relations.items():
        tuples = list(itertools.product(univ, repeat=len(args)))
        rels[r] = draw(st.sets(st.sampled_from(tuples))) if tuples else set()
    return FinStructure(sig, {"S": univ}, rels)


# evaluation ---------------------------------------------------------------------


def test_evaluate_examples():
    M = FinStructure(R2, {"S": ["0", "1"]}, {"R": [("0", "1")]})
    assert evaluate(Exists("y", "S", Atomic("R", ("x", "y"))), M, {"x": "0"})
    assert evaluate(TOP, M)
    assert not evaluate(Exists("y", "S", TOP), pure(0))


def test_evaluate_requires_env():
    with pytest.raises(StructureError):
        evaluate(Atomic("P", ("x",)), p_struct(1, []))


def test_structure_checks():
    with pytest.raises(StructureError):
        FinStructure(P1, {"S": ["0"]}, {"P": [("1",)]})
    f1 = Signature(("S",), {}, {"f": (("S",), "S")})
    with pytest.raises(StructureError):
        FinStructure(f1, {"S": ["0", "1"]}, functions={"f": {"0": "1"}})


@given(formulas(), structures())
def test_evaluate_matches_reference(phi, M):
    names = ("x", "y", "z")
    for vals in itertools.product(M.universes["S"], repeat=3):
        env = dict(zip(names, vals))
        assert evaluate(phi, M, env) == holds(phi, M, env)


# enumeration ----------------------------------------------------------------------


def test_all_models_examples():
    assert len(list(all_models(P1, 1))) == 3
    assert [M.size() for M in all_models(EMPTY, 2)] == [0, 1, 2]
    assert [M.size() for M in all_models(P1, 0)] == [0]
    nonempty = Exists("x", "S", TOP)
    assert list(all_models(P1, 0, [nonempty])) == []


@pytest.mark.parametrize("sig,bound", [(P1, 3), (R2, 2), (SIG, 2)])
def test_all_models_matches_brute_force(sig, bound):
    got = list(all_models(sig, bound))
    want = iso_classes(M for n in range(bound + 1) for M in raw_structures(sig, n))
    assert len(got) == len(want)
    for W in want:
        assert sum(naive_isomorphic(W, G) for G in got) == 1


def test_all_models_respects_axioms():
    # R irreflexive and symmetric: simple graphs on at most 3 vertices
    irr = Not(Exists("x", "S", Atomic("R", ("x", "x"))))
    sym = Not(Exists("x", "S", Exists("y", "S", And((Atomic("R", ("x", "y")), Not(Atomic("R", ("y", "x"))))))))
    got = list(all_models(R2, 3, [irr, sym]))
    assert len(got) == 1 + 1 + 2 + 4


# isomorphisms ---------------------------------------------------------------------


def test_isomorphism_examples():
    order = lambda: FinStructure(R2, {"S": ["0", "1"]}, {"R": [("0", "1")]})
    assert len(isomorphisms(order(), order())) == 1
    assert len(isomorphisms(pure(2), pure(2))) == 2
    assert isomorphisms(pure(2), pure(3)) == []


@given(structures(), structures())
def test_isomorphism_matches_naive(M, N):
    assert is_isomorphic(M, N) == naive_isomorphic(M, N)


@given(structures())
def test_automorphisms_form_group(M):
    auts = [tuple(sorted(f.items())) for f in automorphisms(M)]
    assert sorted(auts) == sorted(tuple(sorted(f.items())) for f in naive_automorphisms(M))
    group = {a for a in auts}
    for f, g in itertools.product(auts, repeat=2):
        fd, gd = dict(f), dict(g)
        assert tuple(sorted((a, gd[fd[a]]) for a in fd)) in group


def test_orbit_examples():
    M = p_struct(2, ["0"])
    assert sorted(map(sorted, orbits(M, 1))) == [[("0",)], [("1",)]]
    assert len(orbits(pure(2), 1)) == 1
    assert orbits(pure(2), 0) == [frozenset({()})]


@given(structures(), st.integers(0, 2))
def test_orbits_match_naive_closure(M, n):
    auts = naive_automorphisms(M)
    got = {frozenset(o) for o in orbits(M, n)}
    want = set()
    for t in itertools.product(M.universes["S"], repeat=n):
        want.add(frozenset(tuple(f[a] for a in t) for f in auts))
    assert got == want


# definability --------------------------------------------------------------------


def test_definability_examples():
    M = p_struct(2, ["0"])
    phi = definability_search(M, {("0",)}, 1)
    assert not isinstance(phi, NotFound)
    assert satisfying(phi, M, ["x0"], ["S"]) == {("0",)} and classify(phi).sigma == 1
    assert isinstance(definability_search(M, {("1",)}, 1, depth=3), NotFound)
    neg = definability_search(M, {("1",)}, 2)
    assert satisfying(neg, M, ["x0"], ["S"]) == {("1",)} and classify(neg).sigma <= 2
    top = definability_search(M, {("0",), ("1",)}, 1)
    assert satisfying(top, M, ["x0"], ["S"]) == {("0",), ("1",)}


def test_sigma1_negative_definition_is_impossible_by_brute_force():
    # no positive existential formula of depth <= 3 picks out the P-free point:
    # the identity on {1} extends to the embedding 1 -> 0, which preserves Sigma_1 truth
    M = p_struct(2, ["0"])
    for phi in [Atomic("P", ("x0",)), Exists("y", "S", Atomic("P", ("y",))), TOP]:
        assert holds(phi, M, {"x0": "1"}) <= holds(phi, M, {"x0": "0"})


@given(structures(max_size=3), st.data())
@settings(max_examples=40)
def test_definability_postcondition(M, data):
    tuples = list(itertools.product(M.universes["S"], repeat=1))
    target = data.draw(st.sets(st.sampled_from(tuples)) if tuples else st.just(set()))
    alpha = data.draw(st.integers(1, 3))
    phi = definability_search(M, target, alpha, sorts=("S",))
    invariant = all((f[t[0]],) in target for f in naive_automorphisms(M) for t in target)
    if isinstance(phi, NotFound):
        # literals plus the exhaustion clause pin down orbits in structures of size <= 3
        assert alpha < 3 or not invariant
        return
    assert invariant
    assert classify(phi).sigma <= alpha
    assert satisfying(phi, M, ["x0"], ["S"]) == frozenset(target)


# Scott sentences -------------------------------------------------------------------


def test_scott_examples():
    one = scott_sentence(pure(1))
    assert [M.size() for M in all_models(EMPTY, 3, [one])] == [1]
    empty = scott_sentence(pure(0))
    assert [M.size() for M in all_models(EMPTY, 3, [empty])] == [0]
    M = p_struct(2, ["0"])
    got = list(all_models(P1, 3, [scott_sentence(M)]))
    assert len(got) == 1 and is_isomorphic(got[0], M)


def test_scott_sentence_is_pi2_after_morleyization():
    from etale_lab.logic import morleyize_fragment, negated_atomics_fragment

    mor = morleyize_fragment(SIG, negated_atomics_fragment(SIG))
    for M in all_models(SIG, 2):
        assert classify(mor.translate(scott_sentence(M))).is_pi(2)


def test_scott_sentences_pin_iso_classes():
    reps = list(all_models(SIG, 2))
    for M in reps:
        got = list(all_models(SIG, 2, [scott_sentence(M)]))
        assert len(got) == 1 and naive_isomorphic(got[0], M)


@given(structures(max_size=3))
@settings(max_examples=15)
def test_scott_sentence_size_three(M):
    got = list(all_models(SIG, 3, [scott_sentence(M)]))
    assert len(got) == 1 and naive_isomorphic(got[0], M)


# back and forth --------------------------------------------------------------------


def ef_oracle(M, N, rounds):
    """Duplicator wins the ``rounds``-round game from the empty position."""

    def partial_iso(a, b):
        if any((a[i] == a[j]) != (b[i] == b[j]) for i in range(len(a)) for j in range(len(a))):
            return False
        for r, args in M.sig.relations.items():
            for pos in itertools.product(range(len(a)), repeat=len(args)):
                if (tuple(a[i] for i in pos) in M.relations[r]) != (tuple(b[i] for i in pos) in N.relations[r]):
                    return False
        return True

    def win(k, a, b):
        if not partial_iso(a, b):
            return False
        if k == 0:
            return True
        um, un = M.universes["S"], N.universes["S"]
        return all(any(win(k - 1, a + (x,), b + (y,)) for y in un) for x in um) and all(
            any(win(k - 1, a + (x,), b + (y,)) for x in um) for y in un
        )

    return win(rounds, (), ())


def test_back_and_forth_examples():
    M = p_struct(2, ["0"])
    assert back_and_forth(M, M, 3).rounds == 3
    assert back_and_forth(M, p_struct(2, []), 3).rounds == 0
    assert back_and_forth(pure(2), pure(3), 3).rounds == 2


@given(structures(max_size=2), structures(max_size=2))
@settings(max_examples=40)
def test_back_and_forth_matches_game_oracle(M, N):
    got = back_and_forth(M, N, 3).rounds
    want = max((k for k in range(4) if ef_oracle(M, N, k)), default=-1)
    assert got == want
