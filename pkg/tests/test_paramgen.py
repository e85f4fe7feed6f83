import pytest

from oracle import iso_classes, raw_structures

from etale_lab.finstruct import is_isomorphic
from etale_lab.isogpd import certify_sigma1_saturations
from etale_lab.logic import Signature, classify
from etale_lab.paramgen import (
    enumerated_cover,
    gen_fixed_universe,
    gen_marked,
    gen_partially_enumerated,
    gen_up_to_size,
)


E = Signature.relational({})
P1 = Signature.relational({"P": 1})
R2 = Signature.relational({"R": 2})
F1 = Signature(("S",), {}, {"f": (("S",), "S")})


def certifies(inst, arity=2):
    return certify_sigma1_saturations(inst.structure, arity, 3, G=inst.groupoid).complete


def same_classes(fibers, expected):
    reps = iso_classes(fibers)
    return len(reps) == len(expected) and all(any(is_isomorphic(a, b) for b in reps) for a in expected)


# fixed universe ---------------------------------------------------------------------


def test_fixed_one_unary_one_element():
    inst = gen_fixed_universe(P1, 1, "discrete")
    assert sorted(inst.structure.base.points) == ["0", "1"]
    G = inst.groupoid
    assert len(G.morphisms) == 2
    assert sorted(G.identity.values()) == list(range(len(G.morphisms)))
    assert all(m.dom == m.cod for m in G.morphisms)


def test_fixed_zero_elements():
    inst = gen_fixed_universe(P1, 0)
    (x,) = inst.structure.base.points
    assert inst.structure.fiber(x).size() == 0


def test_fixed_two_unary_needs_morleyization():
    assert not certifies(gen_fixed_universe(P1, 2, "discrete"))
    assert certifies(gen_fixed_universe(P1, 2, "discrete", morleyize=True))


def test_unknown_topology():
    with pytest.raises(ValueError):
        gen_fixed_universe(P1, 1, "scott")


@pytest.mark.parametrize("sig,n", [(P1, 2), (R2, 2), (P1, 3)])
def test_fixed_fibers_cover_all_structures(sig, n):
    inst = gen_fixed_universe(sig, n)
    assert same_classes(list(inst.structure.fibers().values()), iso_classes(raw_structures(sig, n)))


# up to size -------------------------------------------------------------------------


def test_up_to_size_empty_signature_is_a_chain():
    X = gen_up_to_size(E, 2, "scott").structure.base
    assert X.points == ("0:", "1:", "2:")
    assert [sorted(X.minimal_open(p)) for p in X.points] == [["0:", "1:", "2:"], ["1:", "2:"], ["2:"]]


def test_up_to_size_discrete_sizes_fail_plain():
    assert not certifies(gen_up_to_size(P1, 2, "discrete", "sierpinski"))


def test_up_to_size_scott_with_neq():
    assert certifies(gen_up_to_size(P1, 2, "scott", "sierpinski", morleyize="neq"))


def test_up_to_size_fibers_cover_all_sizes():
    inst = gen_up_to_size(P1, 2)
    expected = [F for n in range(3) for F in iso_classes(raw_structures(P1, n))]
    assert same_classes(list(inst.structure.fibers().values()), expected)


# partially enumerated ----------------------------------------------------------------


def test_partially_enumerated_one_unary():
    inst = gen_partially_enumerated(P1, 1)
    fibers = inst.structure.fibers()
    assert sorted(F.size() for F in fibers.values()) == [0, 1, 1]
    assert sorted(len(F.relations["P"]) for F in fibers.values()) == [0, 0, 1]


def test_partially_enumerated_certifies_unmorleyized():
    inst = gen_partially_enumerated(P1, 1)
    assert inst.morley is None
    assert certifies(inst)
    rep = inst.report
    for key in rep.keys():
        rep.witness(*key)
    assert rep.complete and rep.validate() == []


def test_partially_enumerated_truncation_is_flagged():
    # a merged enumeration of length 2 only reaches one-element fibers, and
    # the set of one-element fibers is not closed under extensions
    rep = gen_partially_enumerated(E, 2).report
    for key in rep.keys():
        try:
            rep.witness(*key)
        except Exception:
            pass
    assert ((), ("2:00:",)) in [key for key, _ in rep.failures]
    assert rep.validate() == []


@pytest.mark.parametrize("sig,n", [(P1, 1), (E, 2), (P1, 2)])
def test_quotient_map_is_open(sig, n):
    cover, M, qmap = enumerated_cover(sig, n)
    assert cover.validate() == []
    src, tgt = cover.power(("S",)).total, M.power(("S",)).total
    for e in src.points:
        image = frozenset(qmap[u] for u in src.minimal_open(e))
        assert tgt.is_open(image), e


def test_partially_enumerated_fibers_include_collapses():
    inst = gen_partially_enumerated(P1, 2)
    expected = [F for n in range(3) for F in iso_classes(raw_structures(P1, n))]
    assert same_classes(list(inst.structure.fibers().values()), expected)


# marked -----------------------------------------------------------------------------


def test_marked_one_function():
    inst = gen_marked(F1, 1, 1)
    M = inst.structure
    assert M.validate() == []
    # terms a0, f(a0); the quotient must keep f total, so a0 = f(a0)
    assert M.base.points == ("00:",)
    (F,) = M.fibers().values()
    assert F.size() == 1
    assert certifies(inst, 1)


def test_marked_two_generators():
    inst = gen_marked(F1, 2, 1)
    assert inst.structure.validate() == []
    assert len(inst.structure.base.points) > 1


def test_marked_constants_only():
    C = Signature(("S",), {}, {"c": ((), "S"), "d": ((), "S")})
    inst = gen_marked(C, 0, 0)
    sizes = sorted(F.size() for F in inst.structure.fibers().values())
    assert sizes == [1, 2]


# invariants ----------------------------------------------------------------------------


INSTANCES = [
    lambda: gen_fixed_universe(P1, 1, "sierpinski", morleyize=True),
    lambda: gen_fixed_universe(P1, 2, "discrete", morleyize=True),
    lambda: gen_up_to_size(P1, 1, morleyize="neq"),
    lambda: gen_up_to_size(E, 2, morleyize="neq"),
    lambda: gen_partially_enumerated(P1, 1),
    lambda: gen_partially_enumerated(E, 2),
    lambda: gen_marked(F1, 1, 1),
]


@pytest.mark.parametrize("make", INSTANCES)
def test_closed_form_witnesses_revalidate(make):
    inst = make()
    assert inst.structure.validate() == []
    rep = inst.report
    for key in rep.keys():
        try:
            rep.witness(*key)
        except Exception:
            pass
    assert rep.validate() == []


@pytest.mark.parametrize("make", INSTANCES[:5])
def test_sigma1_closed_forms(make):
    rep = make().report
    for key in rep.keys():
        assert classify(rep.witness(*key)).is_sigma(1), key


@pytest.mark.parametrize(
    "plain,morley",
    [
        (lambda: gen_fixed_universe(P1, 1, "discrete"), lambda: gen_fixed_universe(P1, 1, "discrete", morleyize=True)),
        (lambda: gen_fixed_universe(P1, 2, "discrete"), lambda: gen_fixed_universe(P1, 2, "discrete", morleyize=True)),
        (lambda: gen_fixed_universe(P1, 1, "sierpinski"), lambda: gen_fixed_universe(P1, 1, "sierpinski", morleyize=True)),
        (lambda: gen_up_to_size(P1, 1), lambda: gen_up_to_size(P1, 1, morleyize="neq")),
        (lambda: gen_up_to_size(E, 2), lambda: gen_up_to_size(E, 2, morleyize="neq")),
    ],
)
def test_morleyizing_never_breaks_certification(plain, morley):
    if certifies(plain()):
        assert certifies(morley())
