import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from etale_lab import _kernels
from etale_lab.finspace import (
    BorelError,
    ContinuousMap,
    DiffNode,
    EtaleSpace,
    FinSpace,
    SpaceError,
    all_topologies,
    code_from_json,
    code_to_json,
    fiber_power,
    fiber_product,
    is_etale,
    is_meager,
    is_nowhere_dense,
    leaf,
    min_dense_open,
    realize_borel,
    union,
)

SIERP = FinSpace.sierpinski()
POINT = FinSpace.discrete(["*"])


def subsets(points):
    pts = list(points)
    for r in range(len(pts) + 1):
        for c in itertools.combinations(pts, r):
            yield frozenset(c)


def opens_by_preorder(sp):
    # open = up-closed under the specialization order, computed from scratch
    rel = sp.specialization_preorder()
    return [a for a in subsets(sp.points) if all(q in a for (p, q) in rel if p in a)]


@st.composite
def spaces(draw, max_points=5):
    n = draw(st.integers(0, max_points))
    pts = [str(i) for i in range(n)]
    gens = draw(st.lists(st.sets(st.sampled_from(pts)) if pts else st.just(set()), max_size=6))
    return FinSpace.from_subbasis(pts, gens)


# specialization order ------------------------------------------------------


def test_sierpinski_preorder():
    rel = SIERP.specialization_preorder()
    assert ("0", "1") in rel and ("1", "1") in rel
    assert ("1", "0") not in rel


def test_discrete_and_indiscrete_preorders():
    d = FinSpace.discrete(["a", "b"])
    assert d.specialization_preorder() == {("a", "a"), ("b", "b")}
    i = FinSpace.indiscrete(["a", "b"])
    assert i.specialization_preorder() == {(p, q) for p in "ab" for q in "ab"}
    assert not i.is_t0() and d.is_t0()


def test_t0_flag_rejects_indiscrete():
    with pytest.raises(SpaceError):
        FinSpace.from_subbasis(["a", "b"], [], t0=True)


def test_from_opens_checks_lattice():
    with pytest.raises(SpaceError):
        FinSpace.from_opens(["a", "b", "c"], [[], ["a", "b", "c"], ["a"], ["b"]])
    sp = FinSpace.from_opens(["a", "b"], [[], ["a", "b"], ["a"]])
    assert set(sp.opens()) == {frozenset(), frozenset("a"), frozenset("ab")}


@given(spaces())
def test_opens_lattice_and_preorder(sp):
    fam = set(sp.opens())
    assert frozenset() in fam and sp.full in fam
    for a, b in itertools.combinations(fam, 2):
        assert a | b in fam and a & b in fam
    assert fam == set(opens_by_preorder(sp))
    rel = sp.specialization_preorder()
    assert all((p, p) in rel for p in sp.points)
    assert all((a, c) in rel for (a, b) in rel for (b2, c) in rel if b == b2)
    antisym = all(not ((p, q) in rel and (q, p) in rel) for p in sp.points for q in sp.points if p != q)
    assert sp.is_t0() == antisym


def test_all_topologies_counts():
    # labelled topologies on n points
    counts = [sum(1 for _ in all_topologies([str(i) for i in range(n)])) for n in range(5)]
    assert counts == [1, 1, 4, 29, 355]


# étale maps ----------------------------------------------------------------


def test_identity_is_etale():
    chk = is_etale(ContinuousMap(SIERP, SIERP, {"0": "0", "1": "1"}))
    assert chk.etale and chk.sections == (SIERP.full,)


def test_discrete_cover_of_point_is_etale():
    d = FinSpace.discrete(["a", "b"])
    chk = is_etale(ContinuousMap(d, POINT, {"a": "*", "b": "*"}))
    assert chk.etale
    assert set(chk.sections) == {frozenset("a"), frozenset("b")}


def test_sierpinski_to_point_not_etale():
    chk = is_etale(ContinuousMap(SIERP, POINT, {"0": "*", "1": "*"}))
    assert not chk.etale and chk.witness == "0"


def test_discontinuous_map_rejected():
    with pytest.raises(ValueError):
        ContinuousMap(SIERP, SIERP, {"0": "1", "1": "0"})


def test_fiber_power_zero_is_base():
    p = EtaleSpace.trivial(SIERP, ["a", "b"])
    z = fiber_power(p, 0)
    assert z.width == 0 and sorted(e[0] for e in z.points) == ["0", "1"]
    assert z.total.specialization_preorder() == {((a,), (b,)) for a, b in SIERP.specialization_preorder()}


def test_fiber_product_with_identity():
    p = EtaleSpace.trivial(SIERP, ["a", "b"])
    q = fiber_product(EtaleSpace.identity(SIERP), p)
    assert q.total == p.total


def test_discrete_square_over_point():
    p = EtaleSpace.trivial(POINT, ["a", "b"])
    sq = fiber_power(p, 2)
    assert sorted(sq.points) == [("*", a, b) for a in "ab" for b in "ab"]
    assert all(sq.total.minimal_open(e) == {e} for e in sq.points)


def test_fiber_product_base_mismatch():
    with pytest.raises(SpaceError):
        fiber_product(EtaleSpace.trivial(SIERP, ["a"]), EtaleSpace.trivial(POINT, ["a"]))


@given(spaces(max_points=4), st.integers(1, 3), st.integers(1, 2))
def test_trivial_bundles_are_etale_with_discrete_fibers(sp, k, n):
    p = fiber_power(EtaleSpace.trivial(sp, [f"l{i}" for i in range(k)]), n)
    assert p.validate() == []
    secs = p.sections()
    assert frozenset().union(*secs) == p.total.full if secs else not p.points
    for x in sp.points:
        fib = frozenset(p.fiber(x))
        for e in fib:
            assert any(o & fib == {e} for o in p.total.opens())


# Baire category -------------------------------------------------------------


def test_min_dense_open_examples():
    assert min_dense_open(SIERP) == {"1"}
    assert min_dense_open(FinSpace.discrete("abc")) == frozenset("abc")
    assert min_dense_open(FinSpace.discrete([])) == frozenset()


def test_is_meager_examples():
    assert is_meager(SIERP, {"0"})
    assert not is_meager(SIERP, {"1"})
    assert is_meager(SIERP, set())


def meager_oracle(sp, a):
    """A is a finite union of nowhere dense sets, computed from the open family."""
    opens = opens_by_preorder(sp)

    def closure(s):
        return sp.full - frozenset().union(*(o for o in opens if not o & s))

    def interior(s):
        return frozenset().union(*(o for o in opens if o <= s))

    nd = [s for s in subsets(sp.points) if not interior(closure(s))]
    covered = frozenset().union(*(s for s in nd if s <= a)) if nd else frozenset()
    return covered == a


def test_meager_oracle_all_small_topologies():
    for n in range(4):
        for sp in all_topologies([str(i) for i in range(n)]):
            for a in subsets(sp.points):
                assert is_meager(sp, a) == meager_oracle(sp, a), (sp.specialization_preorder(), a)


@given(spaces(max_points=5))
def test_meager_oracle_random(sp):
    for a in subsets(sp.points):
        assert is_meager(sp, a) == meager_oracle(sp, a)


@given(spaces())
def test_nonempty_opens_not_meager(sp):
    d = min_dense_open(sp)
    assert sp.is_open(d) and sp.closure(d) == sp.full
    for o in sp.opens():
        if o:
            assert not is_meager(sp, o)
    for p in sp.points:
        assert is_nowhere_dense(sp, {p}) == is_meager(sp, {p})


# Borel codes ----------------------------------------------------------------


def test_realize_borel_examples():
    assert realize_borel(SIERP, leaf({"1"})) == (frozenset({"1"}), 1)
    assert realize_borel(SIERP, DiffNode(leaf(SIERP.full), leaf(set())))[0] == SIERP.full
    code = union(DiffNode(leaf({"1"}), leaf(set())), DiffNode(leaf({"0", "1"}), leaf({"1"})))
    assert realize_borel(SIERP, code) == (frozenset({"0", "1"}), 2)


def test_realize_borel_rejects_non_open_leaf():
    with pytest.raises(BorelError):
        realize_borel(SIERP, leaf({"0"}))


@st.composite
def codes(draw, sp, depth=3):
    opens = sorted(sp.opens(), key=sorted)
    if depth == 0 or draw(st.booleans()):
        return leaf(draw(st.sampled_from(opens)))
    if draw(st.booleans()):
        return union(*draw(st.lists(codes(sp, depth - 1), min_size=1, max_size=3)))
    return DiffNode(draw(codes(sp, depth - 1)), draw(codes(sp, depth - 1)))


@given(st.data())
def test_borel_union_idempotent_and_diff_complement(data):
    sp = data.draw(spaces(max_points=4))
    c = data.draw(codes(sp))
    got, rank = realize_borel(sp, c)
    assert realize_borel(sp, union(c, c))[0] == got
    assert rank >= 1
    assert sp.full - realize_borel(sp, DiffNode(leaf(sp.full), c))[0] == got
    assert code_from_json(code_to_json(c)) == c


# kernels --------------------------------------------------------------------


@given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_numba_and_numpy_kernels_agree(k, n, seed):
    rng = np.random.default_rng(seed)
    sub = rng.random((k, n)) < 0.4
    fast = _kernels._numba_kernel()(np.ascontiguousarray(sub))
    slow = _kernels._neighborhoods_numpy(sub)
    loop = _kernels._neighborhoods_loop(sub)
    if k == 0:
        return
    assert np.array_equal(fast, slow) and np.array_equal(slow, loop)
