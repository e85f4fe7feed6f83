import itertools
import random

import pytest

from etale_lab.finspace import FinSpace
from etale_lab.reconstruct import (
    GroupoidSpecError,
    OpenSubgroupoid,
    TopGroupoid,
    canonical_structure,
    check_open_nonarchimedean,
    coset_space,
    cyclic_group,
    disjoint_union,
    group_groupoid,
    klein_group,
    open_subgroupoids,
    pair_groupoid,
    random_groupoid,
    reconstruct,
    right_multiplication,
    rmul_condition,
    symmetric_group,
)


GROUPS = [lambda: cyclic_group(1), lambda: cyclic_group(2), lambda: cyclic_group(3), lambda: cyclic_group(4), klein_group, lambda: symmetric_group(3)]


def brute_subgroupoids(G):
    pts = G.morphisms.points
    out = set()
    for r in range(1, len(pts) + 1):
        for s in itertools.combinations(pts, r):
            s = frozenset(s)
            if not G.morphisms.is_open(s) or any(G.inv[g] not in s for g in s):
                continue
            if any(G.comp[g, h] not in s for g in s for h in s if G.dom[g] == G.cod[h]):
                continue
            out.add(s)
    return out


def z3_bad():
    """Z/3 where e's smallest neighbourhood is {e, a}: not a subgroup."""
    grp = cyclic_group(3)
    nm = grp.name
    els = grp.elements
    e, a, b = (nm(x) for x in els)
    space = FinSpace([e, a, b], {e: [e, a], a: [a], b: [b]})
    return TopGroupoid(
        FinSpace.discrete(["*"]),
        space,
        {nm(x): "*" for x in els},
        {nm(x): "*" for x in els},
        {"*": e},
        {nm(x): nm(grp.inverse(x)) for x in els},
        {(nm(x), nm(y)): nm(grp.mul(x, y)) for x in els for y in els},
    )


def seeded(n, size=12):
    rng = random.Random(n)
    return random_groupoid(rng, size)


# non-Archimedean check ---------------------------------------------------------------


@pytest.mark.parametrize("make", GROUPS)
def test_discrete_groups_are_nonarchimedean(make):
    grp = make()
    G = group_groupoid(grp)
    rep = check_open_nonarchimedean(G)
    assert rep.ok
    members = {u.members for u in rep.bases["*"]}
    assert frozenset(G.morphisms.points) in members
    assert frozenset([grp.name(grp.identity)]) in members


def test_pair_groupoid_is_nonarchimedean():
    assert check_open_nonarchimedean(pair_groupoid(FinSpace.discrete(["a", "b"]))).ok


def test_small_neighbourhood_without_subgroupoid():
    G = z3_bad()
    rep = check_open_nonarchimedean(G)
    assert not rep.ok and rep.failures == ["*"]
    assert [u.members for u in rep.bases["*"]] == [frozenset(G.morphisms.points)]
    # on a finite group this is only possible with discontinuous structure maps
    assert not G.composition_continuous()


@pytest.mark.parametrize("seed", range(8))
def test_open_subgroupoids_vs_brute_force(seed):
    G = seeded(seed, 10)
    assert {u.members for u in open_subgroupoids(G)} == brute_subgroupoids(G)


# cosets ------------------------------------------------------------------------------------


def test_z2_trivial_subgroup_has_two_swapped_cosets():
    grp = cyclic_group(2)
    G = group_groupoid(grp)
    e = grp.name(grp.identity)
    (s,) = [g for g in G.morphisms.points if g != e]
    C = coset_space(G, OpenSubgroupoid(frozenset([e])))
    assert C.validate() == []
    pts = sorted(C.space.fiber("*"))
    assert len(pts) == 2
    assert {C.act(s, p) for p in pts} == set(pts)
    assert all(C.act(s, p) != p for p in pts)


def test_whole_group_has_one_coset():
    G = group_groupoid(symmetric_group(3))
    C = coset_space(G, OpenSubgroupoid(frozenset(G.morphisms.points)))
    assert len(C.space.points) == 1


def test_pair_groupoid_cosets_of_identities():
    G = pair_groupoid(FinSpace.discrete(["a", "b"]))
    U = OpenSubgroupoid(frozenset(G.unit.values()))
    C = coset_space(G, U)
    assert C.validate() == []
    # one coset per morphism, sitting over its codomain
    assert sorted(C.members.values(), key=sorted) == sorted((frozenset([g]) for g in G.morphisms.points), key=sorted)
    for h in G.morphisms.points:
        for g in G.morphisms.points:
            if G.cod[g] == G.dom[h]:
                assert C.act(h, C.point(g)) == C.point(G.comp[h, g])


@pytest.mark.parametrize("seed", range(12))
def test_coset_spaces_validate(seed):
    G = seeded(seed)
    for U in open_subgroupoids(G):
        assert coset_space(G, U).validate() == []


@pytest.mark.parametrize("seed", range(12))
def test_right_multiplication_exactly_when_u_in_ss_inverse(seed):
    G = seeded(seed, 8)
    C = canonical_structure(G)
    for i, U in enumerate(C.family):
        for j in range(len(C.family)):
            for S in C.covers[j]:
                defined = right_multiplication(C.cosets[i], C.cosets[j], S) is not None
                assert defined == rmul_condition(G, U, S), (i, j, sorted(S))


# canonical structure ----------------------------------------------------------------------


def test_z2_canonical_sorts():
    G = group_groupoid(cyclic_group(2))
    C = canonical_structure(G)
    M = C.structure
    sizes = sorted(M.fiber("*").size(M.sig.sorts[i]) for i in range(len(C.family)))
    assert sizes == [1, 2]
    assert C.functions
    assert M.validate() == []


def test_trivial_group_sorts_are_singletons():
    r = reconstruct(group_groupoid(cyclic_group(1)))
    M = r.structure.structure
    assert all(M.fiber("*").size(s) == 1 for s in M.sig.sorts)
    assert r.ok
    assert len(r.report.iso) == 1


def test_two_objects_without_arrows():
    G = disjoint_union(group_groupoid(cyclic_group(1)), group_groupoid(cyclic_group(1)))
    r = reconstruct(G)
    assert r.ok
    M = r.structure.structure
    # each sort lives over the object of its subgroupoid only
    for s in M.sig.sorts:
        assert sorted(M.fiber(x).size(s) for x in G.objects.points) in ([0, 1], [1, 1])


def test_bad_family_is_rejected():
    G = group_groupoid(cyclic_group(2))
    whole = OpenSubgroupoid(frozenset(G.morphisms.points))
    with pytest.raises(GroupoidSpecError):
        canonical_structure(G, [whole])


def test_not_nonarchimedean_is_rejected():
    with pytest.raises(GroupoidSpecError):
        canonical_structure(z3_bad())


# reconstruction ------------------------------------------------------------------------------


def test_z2_flags():
    r = reconstruct(group_groupoid(cyclic_group(2)))
    rep = r.report
    assert rep.embedding and rep.fiberwise_dense and rep.surjective and rep.isomorphism
    assert len(rep.iso) == 2


def test_pair_groupoid_flags():
    G = pair_groupoid(FinSpace.discrete(["a", "b"]))
    r = reconstruct(G)
    assert r.ok
    assert len(r.report.iso) == 4


def test_non_t0_is_not_faithful():
    grp = cyclic_group(2)
    G = group_groupoid(grp, normal=grp.elements)
    assert not G.is_t0()
    r = reconstruct(G)
    assert not r.ok
    assert not r.report.embedding


@pytest.mark.parametrize("seed", range(20))
def test_random_groupoids_reconstruct(seed):
    G = seeded(seed)
    assert G.validate() == []
    assert len(G) <= 12
    r = reconstruct(G)
    assert r.ok, r.report.problems + r.coherence
    # the functor carries composition, inverses and units onto Iso
    iso, iota = r.report.iso, r.report.iota
    for g, h in G.composable():
        assert iota[G.comp[g, h]] == iso.compose(iota[g], iota[h])


def test_groupoid_json_round_trip():
    G = seeded(3)
    back = TopGroupoid.from_json(G.to_json())
    assert back.to_json() == G.to_json()
    assert back.validate() == []
