from functools import lru_cache

import pytest

from etale_lab.imaginary import (
    EtaleIsoSpace,
    Imaginary,
    ImaginaryError,
    Part,
    equality_imaginary,
    equivariant_isomorphism,
    imaginary_disjoint_union,
    imaginary_product,
    imaginary_quotient,
    imaginary_subsort,
    interpret_imaginary,
    iso_disjoint_union,
    iso_fiber_product,
    joyal_tierney_synthesize,
)
from etale_lab.isogpd import certify_sigma1_saturations
from etale_lab.logic import TOP, Atomic, Not, Signature, Var
from etale_lab.paramgen import gen_fixed_universe, gen_up_to_size


P1 = Signature.relational({"P": 1})
S1 = ("S",)


@lru_cache(maxsize=None)
def setup(name="fixed2"):
    I = {
        "fixed2": lambda: gen_fixed_universe(P1, 2, "discrete", morleyize=True),
        "fixed1s": lambda: gen_fixed_universe(P1, 1, "sierpinski", morleyize=True),
        "upto": lambda: gen_up_to_size(P1, 1, "scott", "sierpinski", morleyize="neq"),
    }[name]()
    rep = certify_sigma1_saturations(I.structure, 2, 3, G=I.groupoid)
    assert rep.complete
    return I.structure, I.groupoid, rep, I.morley


def iso(a, b):
    return equivariant_isomorphism(a, b) is not None


# interpretation ------------------------------------------------------------------


def test_equality_imaginary_is_the_bundle():
    M, G, _, _ = setup()
    A = interpret_imaginary(equality_imaginary(S1), M, G)
    assert A.validate() == []
    assert iso(A, EtaleIsoSpace.from_power(G, S1))


def test_singleton_is_the_base():
    from etale_lab.imaginary import singleton_imaginary

    M, G, _, _ = setup()
    A = interpret_imaginary(singleton_imaginary(), M, G)
    assert iso(A, EtaleIsoSpace.trivial(G))


def test_partition_by_p_and_its_negation():
    M, G, _, mor = setup()
    p = Atomic("P", (Var("x0"),))
    notp = mor.translate(Not(p), {"x0": "S"})
    phi = imaginary_disjoint_union([equality_imaginary(S1, p), equality_imaginary(S1, notp)])
    assert phi.is_sigma1
    A = interpret_imaginary(phi, M, G)
    assert A.validate() == []
    assert iso(A, EtaleIsoSpace.from_power(G, S1))


def test_schema_violations_reported():
    M, G, _, _ = setup()
    bad = Imaginary((Part(TOP, S1),), {})
    msgs = bad.violations(M.fibers())
    assert msgs and "reflexivity" in msgs[0]
    with pytest.raises(ImaginaryError):
        interpret_imaginary(bad, M, G)


# closure operations ---------------------------------------------------------------------


def test_product_with_singleton():
    from etale_lab.imaginary import singleton_imaginary

    M, G, _, _ = setup()
    phi = equality_imaginary(S1)
    prod = imaginary_product(phi, singleton_imaginary())
    assert iso(interpret_imaginary(prod, M, G), interpret_imaginary(phi, M, G))


@pytest.mark.parametrize("name", ["fixed2", "fixed1s", "upto"])
def test_product_is_fiber_product(name):
    M, G, _, _ = setup(name)
    phi = equality_imaginary(S1, Atomic("P", (Var("x0"),)))
    psi = equality_imaginary(S1)
    got = interpret_imaginary(imaginary_product(phi, psi), M, G)
    want = iso_fiber_product(interpret_imaginary(phi, M, G), interpret_imaginary(psi, M, G))
    assert iso(got, want)


def test_subsort_by_own_formula():
    M, G, _, _ = setup()
    phi = equality_imaginary(S1, Atomic("P", (Var("x0"),)))
    sub = imaginary_subsort(phi, [p.phi for p in phi.parts], M.fibers())
    assert iso(interpret_imaginary(sub, M, G), interpret_imaginary(phi, M, G))


def test_subsort_outside_summand_rejected():
    M, _, _, _ = setup()
    phi = equality_imaginary(S1, Atomic("P", (Var("x0"),)))
    with pytest.raises(ImaginaryError):
        imaginary_subsort(phi, [TOP], M.fibers())


def test_quotient_halves_two_element_fibers():
    M, G, _, _ = setup()
    phi = equality_imaginary(S1)
    total = imaginary_quotient(phi, {(0, 0): TOP}, M.fibers())
    A = interpret_imaginary(total, M, G)
    assert A.validate() == []
    for x in M.base.points:
        assert len(A.carrier.fiber(x)) * 2 == len(M.spaces["S"].fiber(x))


def test_quotient_must_contain_old_relation():
    M, _, _, _ = setup()
    phi = equality_imaginary(S1)
    with pytest.raises(ImaginaryError):
        imaginary_quotient(phi, {(0, 0): Atomic("P", (Var("x0"),))}, M.fibers())


def test_imaginary_json_round_trip():
    _, _, _, mor = setup()
    p = Atomic("P", (Var("x0"),))
    phi = imaginary_disjoint_union([equality_imaginary(S1, p), equality_imaginary(("S", "S"))])
    back = Imaginary.from_json(phi.to_json(), mor.signature)
    assert back.to_json() == phi.to_json()
    assert back.parts == phi.parts and back.eps == phi.eps


# Joyal-Tierney ----------------------------------------------------------------------


def check_synthesis(M, G, rep, A):
    syn = joyal_tierney_synthesize(M, G, rep, A)
    assert syn.imaginary.is_sigma1
    assert syn.imaginary.violations(M.fibers()) == []
    again = interpret_imaginary(syn.imaginary, M, G)
    assert again.validate() == []
    assert iso(again, A)
    return syn


@pytest.mark.parametrize("name", ["fixed2", "fixed1s", "upto"])
def test_synthesis_of_bundle(name):
    M, G, rep, _ = setup(name)
    check_synthesis(M, G, rep, EtaleIsoSpace.from_power(G, S1))


@pytest.mark.parametrize("name", ["fixed2", "fixed1s", "upto"])
def test_synthesis_of_base(name):
    M, G, rep, _ = setup(name)
    syn = check_synthesis(M, G, rep, EtaleIsoSpace.trivial(G))
    assert all(p.arity == 0 for p in syn.imaginary.parts)


@pytest.mark.parametrize("name", ["fixed2", "upto"])
def test_synthesis_of_square(name):
    M, G, rep, _ = setup(name)
    check_synthesis(M, G, rep, EtaleIsoSpace.from_power(G, ("S", "S")))


def test_synthesis_of_invariant_open_and_sum():
    M, G, rep, _ = setup("fixed2")
    A = EtaleIsoSpace.from_power(G, S1)
    p_pts = M.interpret(Atomic("P", (Var("x0"),)), ("x0",), S1).points
    sub = A.restrict(p_pts)
    check_synthesis(M, G, rep, sub)
    check_synthesis(M, G, rep, iso_disjoint_union([A, EtaleIsoSpace.trivial(G)]))


def test_h_tables_well_defined():
    # g.T_y = g'.T_y' forces g.S_y = g'.S_y': checked pointwise on the chosen sections
    M, G, rep, _ = setup("fixed2")
    A = EtaleIsoSpace.from_power(G, ("S", "S"))
    syn = joyal_tierney_synthesize(M, G, rep, A)
    pw = M.power
    for a, sorts, c in syn.sections:
        seen = {}
        for y in G.base.minimal_open(a[0]):
            ty, sy = pw(sorts).transport(c, y), A.carrier.transport(a, y)
            for i in G.morphisms_from(y):
                d = G.act(i, sorts, ty)
                assert seen.setdefault(d, A.table[i, sy]) == A.table[i, sy]
