import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from etale_lab.etale import EtaleError, EtaleStructure, from_fibers, morleyize_etale, trivial_structure
from etale_lab.finspace import ContinuousMap, EtaleSpace, FinSpace
from etale_lab.finstruct import FinStructure, is_isomorphic, satisfying
from etale_lab.logic import TOP, And, Atomic, Exists, Fragment, Not, Or, Signature, negated_atomics_fragment
from etale_lab.paramgen import gen_fixed_universe, gen_partially_enumerated, gen_up_to_size

from oracle import holds
from strategies import formulas

P1 = Signature.relational({"P": 1})
PR = Signature.relational({"P": 1, "R": 2})
SIERP = FinSpace.sierpinski()

INSTANCES = {
    "fixed1": lambda: gen_fixed_universe(P1, 1, "sierpinski").structure,
    "fixed2": lambda: gen_fixed_universe(P1, 2, "discrete").structure,
    "upto": lambda: gen_up_to_size(P1, 2, "scott", "sierpinski").structure,
    "partial": lambda: gen_partially_enumerated(P1, 2).structure,
    "binary": lambda: gen_fixed_universe(Signature.relational({"R": 2}), 1, "sierpinski").structure,
}


def sierp_bundle(p_points):
    fibers = {x: FinStructure(P1, {"S": ["a"]}, {"P": [("a",)] if x in p_points else []}) for x in "01"}
    return from_fibers(P1, SIERP, fibers)


# validation -------------------------------------------------------------------


def test_trivial_structure_validates():
    M = trivial_structure(SIERP)
    assert M.validate() == []
    assert M.fiber("0").size() == 0


def test_non_open_relation_named():
    bad = sierp_bundle({"0"})
    msgs = bad.validate()
    assert msgs and any("P" in m for m in msgs)
    assert sierp_bundle({"1"}).validate() == []


def test_function_breaking_fibers_named():
    sig = Signature(("S",), {}, {"f": (("S",), "S")})
    base = FinSpace.discrete(["u", "v"])
    fib = {x: FinStructure(sig, {"S": ["a"]}, functions={"f": {"a": "a"}}) for x in base.points}
    M = from_fibers(sig, base, fib)
    assert M.validate() == []
    broken = EtaleStructure(sig, base, M.spaces, functions={"f": {("u", "a"): ("v", "a"), ("v", "a"): ("v", "a")}})
    assert any("f" in m for m in broken.validate())


# fibers -------------------------------------------------------------------------


def test_fiber_examples():
    M = gen_fixed_universe(P1, 2, "discrete").structure
    F = M.fiber("10")
    assert F.universes["S"] == ("0", "1") and F.relations["P"] == {("0",)}
    single = from_fibers(P1, FinSpace.discrete(["*"]), {"*": FinStructure(P1, {"S": ["a", "b"]}, {"P": [("b",)]})})
    assert single.fiber("*").relations["P"] == {("b",)}
    with pytest.raises(EtaleError):
        M.fiber("nope")


# interpretation ----------------------------------------------------------------


def test_interpret_top_sentence_is_base():
    M = INSTANCES["fixed1"]()
    got = M.interpret(TOP, (), ())
    assert got.points == {(x,) for x in M.base.points} and got.open


def test_negation_not_open_on_sierpinski_relation():
    M = INSTANCES["fixed1"]()
    pos = M.interpret(Atomic("P", ("x",)))
    neg = M.interpret(Not(Atomic("P", ("x",))))
    assert pos.open and not neg.open
    assert pos.points | neg.points == set(M.spaces["S"].points)


@pytest.mark.parametrize("name", sorted(INSTANCES))
@given(phi=formulas(depth=2))
@settings(max_examples=25)
def test_interpret_is_fiberwise(name, phi):
    M = INSTANCES[name]()
    (s,) = M.sig.sorts
    if _rels(phi) - set(M.sig.relations):
        return
    variables = ("x", "y")
    if not set(_free(phi)) <= set(variables):
        return
    got = M.interpret(phi, variables, (s, s)).points
    want = set()
    for x in M.base.points:
        F = M.fiber(x)
        for t in itertools.product(F.universes[s], repeat=2):
            if holds(phi, F, dict(zip(variables, t))):
                want.add((x,) + t)
    assert got == want


def _rels(phi):
    from etale_lab.logic import subformulas

    return {f.rel for f in subformulas(phi) if isinstance(f, Atomic)}


def _free(phi):
    from etale_lab.logic import free_vars

    return free_vars(phi)


def test_interpret_compositional():
    M = INSTANCES["upto"]()
    phi, psi = Atomic("P", ("x",)), Exists("y", "S", Not(Atomic("P", ("y",))))
    a = M.interpret(phi, ("x",), ("S",)).points
    b = M.interpret(psi, ("x",), ("S",)).points
    assert M.interpret(And((phi, psi)), ("x",), ("S",)).points == a & b
    assert M.interpret(Or((phi, psi)), ("x",), ("S",)).points == a | b
    # existential = projection image
    ex = M.interpret(Exists("x", "S", phi), (), ()).points
    assert ex == {(e[0],) for e in a}


@given(formulas(depth=4, negation=False, vars_=("x", "y")))
@settings(max_examples=200)
def test_sigma1_interpretations_open(phi):
    for name in ("fixed1", "upto", "partial"):
        M = INSTANCES[name]()
        if _rels(phi) - set(M.sig.relations):
            continue
        assert M.interpret(phi, ("x", "y"), ("S", "S")).open


# pullback ------------------------------------------------------------------------


def test_pullback_examples():
    M = INSTANCES["upto"]()
    ident = M.pullback(ContinuousMap(M.base, M.base, {p: p for p in M.base.points}))
    assert all(ident.fiber(x) == M.fiber(x) for x in M.base.points)
    z = FinSpace.discrete(["p", "q"])
    x0 = M.base.points[-1]
    const = M.pullback(ContinuousMap(z, M.base, {"p": x0, "q": x0}))
    assert all(is_isomorphic(const.fiber(p), M.fiber(x0)) for p in z.points)
    assert const.validate() == []


def test_pullback_along_discrete_cover():
    M = sierp_bundle({"1"})
    cover = FinSpace.discrete(["u", "v"])
    N = M.pullback(ContinuousMap(cover, SIERP, {"u": "0", "v": "1"}))
    assert N.validate() == []
    assert is_isomorphic(N.fiber("u"), M.fiber("0")) and is_isomorphic(N.fiber("v"), M.fiber("1"))
    # interpretation commutes with pullback
    phi = Not(Atomic("P", ("x",)))
    got = N.interpret(phi, ("x",), ("S",)).points
    want = {(z,) + e[1:] for z, x in (("u", "0"), ("v", "1")) for e in M.interpret(phi, ("x",), ("S",)).points if e[0] == x}
    assert got == want


@pytest.mark.parametrize("name", sorted(INSTANCES))
def test_pullback_coherent_over_subspaces(name):
    M = INSTANCES[name]()
    for u in M.base.basis():
        N = M.restrict_base(u)
        assert N.validate() == []
        for z in N.base.points:
            assert is_isomorphic(N.fiber(z), M.fiber(z))


def test_pullback_target_mismatch():
    M = INSTANCES["fixed1"]()
    with pytest.raises(EtaleError):
        other = FinSpace.discrete(["0", "1"])
        M.pullback(ContinuousMap(other, other, {"0": "0", "1": "1"}))


# Morleyization -------------------------------------------------------------------


def test_atomic_morleyization_keeps_topology():
    M = INSTANCES["fixed1"]()
    out = morleyize_etale(M, Fragment.atomics(P1))
    assert out.structure.base == M.base


def test_negation_morleyization_adds_opens():
    M = INSTANCES["fixed1"]()
    out = morleyize_etale(M, negated_atomics_fragment(P1))
    N = out.structure
    assert N.validate() == []
    # the point where P fails at 0 becomes open
    assert not M.base.is_open({"0"}) and N.base.is_open({"0"})
    for x in N.base.points:
        assert all(holds(ax, N.fiber(x), {}) for _, ax in out.morley.axioms)


@pytest.mark.parametrize("name", sorted(INSTANCES))
def test_morleyization_reduct_and_refinement(name):
    M = INSTANCES[name]()
    out = morleyize_etale(M, negated_atomics_fragment(M.sig))
    N = out.structure
    assert N.validate() == []
    red = N.reduct(M.sig)
    assert all(red.fiber(x) == M.fiber(x) for x in M.base.points)
    assert all(N.base.is_open(o) for o in M.base.opens())
    for rel, (cphi, srt) in out.morley.formula_of.items():
        names = tuple(f"x{i}" for i in range(len(srt)))
        assert N.interpret(Atomic(rel, names), names, srt).open


# JSON ---------------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(INSTANCES))
def test_json_round_trip(name):
    M = INSTANCES[name]()
    text = json.dumps(M.to_json(), sort_keys=True)
    N = EtaleStructure.from_json(json.loads(text))
    assert json.dumps(N.to_json(), sort_keys=True) == text
    assert all(N.fiber(x) == M.fiber(x) for x in M.base.points)
