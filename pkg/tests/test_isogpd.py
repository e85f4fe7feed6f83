import itertools
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from etale_lab.etale import from_fibers, trivial_structure
from etale_lab.finspace import DiffNode, FinSpace, leaf, realize_borel, union
from etale_lab.finstruct import FinStructure
from etale_lab.isogpd import (
    GroupoidError,
    SaturationReport,
    certify_sigma1_saturations,
    check_open_groupoid,
    compute_iso_groupoid,
    lopez_escobar,
)
from etale_lab.logic import BOT, Or, Signature, classify
from etale_lab.paramgen import gen_fixed_universe, gen_partially_enumerated, gen_up_to_size

from oracle import naive_automorphisms, naive_isomorphic

P1 = Signature.relational({"P": 1})
EMPTY = Signature.relational({})


@lru_cache(maxsize=None)
def instance(name):
    return {
        "fixed1s": lambda: gen_fixed_universe(P1, 1, "sierpinski"),
        "fixed2d": lambda: gen_fixed_universe(P1, 2, "discrete"),
        "fixed2dM": lambda: gen_fixed_universe(P1, 2, "discrete", morleyize=True),
        "fixed1sM": lambda: gen_fixed_universe(P1, 1, "sierpinski", morleyize=True),
        "upto1": lambda: gen_up_to_size(P1, 1, "scott", "sierpinski", morleyize="neq"),
        "partial1": lambda: gen_partially_enumerated(P1, 1),
    }[name]()


def count_isos(F, G):
    import itertools as it

    if F.size() != G.size():
        return 0
    u, v = F.universes["S"], G.universes["S"]
    return sum(
        1
        for perm in it.permutations(v)
        if {tuple(dict(zip(u, perm))[a] for a in t) for t in F.relations.get("P", ())} == G.relations.get("P", frozenset())
    )


# construction ------------------------------------------------------------------


def test_trivial_bundle_gives_pair_groupoid():
    M = trivial_structure(FinSpace.sierpinski())
    G = compute_iso_groupoid(M)
    assert sorted((g.dom, g.cod) for g in G.morphisms) == sorted(itertools.product("01", repeat=2))


def test_fixed_two_discrete_has_eight_morphisms():
    I = instance("fixed2d")
    M = I.structure
    want = sum(count_isos(M.fiber(x), M.fiber(y)) for x in M.base.points for y in M.base.points)
    assert want == 8 and len(I.groupoid) == 8


def test_single_fiber_gives_automorphism_group():
    F = FinStructure(P1, {"S": ["a", "b", "c"]}, {"P": [("a",)]})
    M = from_fibers(P1, FinSpace.discrete(["*"]), {"*": F})
    G = compute_iso_groupoid(M)
    assert len(G) == len(naive_automorphisms(F)) == 2
    assert all(G.topology.minimal_open(g) == {g} for g in G.ids)


@pytest.mark.parametrize("name", ["fixed1s", "fixed2d", "fixed2dM", "upto1", "partial1"])
def test_groupoid_laws_and_action(name):
    G = instance(name).groupoid
    assert G.check_laws() == []
    assert G.check_action() == []
    # morphism count agrees with naive isomorphism search per fiber pair
    M = G.M
    for x in M.base.points:
        for y in M.base.points:
            n = sum(1 for g in G.morphisms if g.dom == x and g.cod == y)
            assert (n > 0) == naive_isomorphic(M.fiber(x), M.fiber(y))


def topology_oracle(G, k):
    """Subbasis from dom/cod preimages and <<U -> V>> over all opens of fiber powers."""
    M = G.M
    sub = []
    for o in M.base.opens():
        sub.append([gid for gid, g in zip(G.ids, G.morphisms) if g.dom in o])
        sub.append([gid for gid, g in zip(G.ids, G.morphisms) if g.cod in o])
    for n in range(1, k + 1):
        for sorts in itertools.product(M.sig.sorts, repeat=n):
            pw = M.power(sorts)
            opens = list(pw.total.opens())
            for u in opens:
                for v in opens:
                    sub.append(
                        [gid for gid, g in zip(G.ids, G.morphisms) if any(g.act(sorts, a) in v for a in u if a[0] == g.dom)]
                    )
    return FinSpace.from_subbasis(G.ids, sub)


@pytest.mark.parametrize("name", ["fixed1s", "upto1", "partial1"])
def test_topology_matches_subbasis_oracle(name):
    I = instance(name)
    G = compute_iso_groupoid(I.structure, 1)
    assert G.topology == topology_oracle(G, 1)
    assert G.stabilized_at is not None and G.stabilized_at <= 1


# saturation ---------------------------------------------------------------------


def test_saturation_examples():
    I = instance("fixed2d")
    G = I.groupoid
    assert G.saturation({("10",)}, ()) == {("10",), ("01",)}
    assert G.saturation(set(), ()) == frozenset()
    inv = {("00",), ("11",)}
    assert G.saturation(inv, ()) == inv


@given(st.data())
@settings(max_examples=40)
def test_saturation_is_closure_operator(data):
    G = instance("fixed2d").groupoid
    pts = list(G.M.power(("S",)).points)
    a = data.draw(st.sets(st.sampled_from(pts)))
    b = data.draw(st.sets(st.sampled_from(pts)))
    sat = lambda s: G.saturation(s, ("S",))
    assert a <= sat(a)
    assert sat(sat(a)) == sat(a)
    assert sat(a | b) == sat(a) | sat(b)
    if a <= b:
        assert sat(a) <= sat(b)


# certification -----------------------------------------------------------------------


def test_unmorleyized_fixed_two_fails():
    I = instance("fixed2d")
    rep = certify_sigma1_saturations(I.structure, 1, 4, G=I.groupoid)
    assert not rep.complete
    failed = {k for k, _ in rep.failures}
    assert ((), ("10",)) in failed and (("S",), ("10", "0")) in failed


def test_morleyized_fixed_two_certifies():
    I = instance("fixed2dM")
    rep = certify_sigma1_saturations(I.structure, 2, 3, G=I.groupoid)
    assert rep.complete and rep.validate() == []
    for (sorts, e), w in rep.entries.items():
        assert classify(w.formula).sigma == 1


def test_trivial_point_bundle_certifies_vacuously():
    M = trivial_structure(FinSpace.discrete(["*"]))
    rep = certify_sigma1_saturations(M, 1, 3)
    assert rep.complete


@pytest.mark.parametrize("name", ["fixed2dM", "fixed1sM", "upto1", "partial1"])
def test_certified_implies_open(name):
    I = instance(name)
    rep = certify_sigma1_saturations(I.structure, 1, 3, G=I.groupoid)
    assert rep.complete
    assert check_open_groupoid(I.groupoid)


def test_check_open_groupoid_counterexample():
    # discrete morphism topology over a Sierpinski base: the identity at the
    # closed point is open, but its domain is not
    I = instance("fixed1s")
    G = I.groupoid
    assert check_open_groupoid(G)
    bad = G.with_topology(FinSpace.discrete(G.ids))
    assert not check_open_groupoid(bad)
    assert check_open_groupoid(compute_iso_groupoid(gen_fixed_universe(P1, 1, "discrete").structure))


def test_missing_witness_raises():
    I = instance("fixed2d")
    rep = SaturationReport(I.structure, I.groupoid, 1)
    with pytest.raises(GroupoidError):
        rep.witness((), ("10",))


# Vaught transform -----------------------------------------------------------------


def vaught_oracle(G, w, a, sorts):
    M = G.M
    out = set()
    opens = list(G.topology.opens())
    for x in M.base.points:
        into = frozenset(gid for gid, g in zip(G.ids, G.morphisms) if g.cod == x)
        sub_opens = {o & into for o in opens}

        def nowhere_dense(s):
            closure = into - frozenset().union(*(o for o in sub_opens if not o & s))
            return not any(o and o <= closure for o in sub_opens)

        for b in M.power(sorts).fiber(x):
            hits = frozenset(
                G.ids[i] for i in w if G.morphisms[i].cod == x and G.morphisms[G.inverse[i]].act(sorts, b) in a
            )
            if hits and not all(nowhere_dense({h}) for h in hits):
                out.add(b)
    return frozenset(out)


@pytest.mark.parametrize("name", ["fixed1s", "upto1", "partial1", "fixed2dM"])
@given(data=st.data())
@settings(max_examples=15)
def test_vaught_matches_oracle(name, data):
    G = instance(name).groupoid
    pts = list(G.M.power(("S",)).points)
    a = data.draw(st.sets(st.sampled_from(pts)))
    w = data.draw(st.sets(st.sampled_from(range(len(G)))))
    got = G.vaught_transform(w, a, ("S",))
    assert got == vaught_oracle(G, w, a, ("S",))
    assert got <= G.saturation(a, ("S",), within=w)


def test_vaught_examples():
    G = instance("fixed2d").groupoid
    everything = range(len(G))
    assert G.vaught_transform(everything, set(), ("S",)) == frozenset()
    # discrete cod fibers: the transform is the plain saturation
    pts = [("10", "0"), ("11", "1")]
    assert G.vaught_transform(everything, pts, ("S",)) == G.saturation(pts, ("S",))


@pytest.mark.parametrize("name", ["fixed1s", "upto1", "partial1", "fixed2dM"])
def test_vaught_of_open_is_saturation(name):
    G = instance(name).groupoid
    pw = G.M.power(("S",))
    for o in pw.total.opens():
        assert G.vaught_transform(range(len(G)), o, ("S",)) == G.saturation(o, ("S",))


# Lopez-Escobar -----------------------------------------------------------------------


def test_lopez_escobar_leaf_and_union():
    I = instance("fixed2dM")
    M, G, rep = I.structure, I.groupoid, I.report
    pw = M.power(("S",))
    u = pw.total.minimal_open(("10", "0"))
    v = pw.total.minimal_open(("11", "1"))
    phi = lopez_escobar(M, G, rep, leaf(u), ("S",))
    assert phi == rep.witness(("S",), ("10", "0"))
    both = lopez_escobar(M, G, rep, union(leaf(u), leaf(v)), ("S",))
    assert isinstance(both, Or) and set(both.parts) == {phi, rep.witness(("S",), ("11", "1"))}
    assert lopez_escobar(M, G, rep, leaf(set()), ("S",)) == BOT


def test_lopez_escobar_difference():
    I = instance("fixed2dM")
    M, G, rep = I.structure, I.groupoid, I.report
    pw = M.power(("S",))
    a = pw.total.minimal_open(("10", "0")) | pw.total.minimal_open(("11", "0"))
    b = pw.total.minimal_open(("11", "0"))
    code = DiffNode(leaf(a), leaf(b))
    phi = lopez_escobar(M, G, rep, code, ("S",))
    assert classify(phi).sigma <= 2
    names = ("x0",)
    want = vaught_oracle(G, range(len(G)), realize_borel(pw.total, code)[0], ("S",))
    assert M.interpret(phi, names, ("S",)).points == want


@st.composite
def codes(draw, opens, depth):
    if depth == 1 or draw(st.booleans()):
        return leaf(draw(st.sampled_from(opens)))
    if draw(st.booleans()):
        return union(draw(codes(opens, depth - 1)), draw(codes(opens, depth - 1)))
    return DiffNode(draw(codes(opens, depth - 1)), draw(codes(opens, depth - 1)))


@pytest.mark.parametrize("name", ["fixed1sM", "upto1", "partial1"])
@given(data=st.data())
@settings(max_examples=20)
def test_lopez_escobar_matches_vaught(name, data):
    I = instance(name)
    M, G, rep = I.structure, I.groupoid, I.report
    n = data.draw(st.integers(0, 2))
    sorts = ("S",) * n
    pw = M.power(sorts)
    opens = sorted(pw.total.opens(), key=lambda o: (len(o), sorted(o)))
    code = data.draw(codes(opens, 3))
    phi = lopez_escobar(M, G, rep, code, sorts)
    assert classify(phi).sigma <= code.rank
    names = tuple(f"x{i}" for i in range(n))
    a, _ = realize_borel(pw.total, code)
    assert M.interpret(phi, names, sorts).points == vaught_oracle(G, range(len(G)), a, sorts)
