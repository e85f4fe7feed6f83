"""Finite topological spaces, étale bundles over them, finite Baire category
and Borel codes.

A finite space is Alexandrov: every point has a least open neighbourhood, and
the open sets are exactly the unions of those.  We store that neighbourhood
table instead of the (possibly exponential) family of all opens.  Points are
strings for base spaces and tuples ``(base_point, label, ...)`` for total
spaces of bundles; either way they sort lexicographically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _kernels

Point = Hashable
PointSet = frozenset


class SpaceError(ValueError):
    pass


class FinSpace:
    """A finite topological space given by minimal open neighbourhoods."""

    __slots__ = ("points", "_up", "_index", "_hash")

    def __init__(self, points: Iterable[Point], up: Mapping[Point, Iterable[Point]], t0: bool = False):
        pts = tuple(sorted(set(points)))
        self.points = pts
        self._index = {p: i for i, p in enumerate(pts)}
        self._up = {p: frozenset(up[p]) for p in pts}
        self._hash = None
        for p in pts:
            nb = self._up[p]
            if p not in nb:
                raise SpaceError(f"point {p!r} missing from its own neighbourhood")
            if not nb <= self._up.keys():
                raise SpaceError(f"neighbourhood of {p!r} leaves the space")
            for q in nb:
                if not self._up[q] <= nb:
                    raise SpaceError(f"neighbourhood table is not transitive at {p!r}")
        if t0 and not self.is_t0():
            raise SpaceError("T0 flag set but the specialization preorder is not antisymmetric")

    # construction -----------------------------------------------------

    @classmethod
    def from_subbasis(cls, points: Iterable[Point], subbasis: Iterable[Iterable[Point]], t0: bool = False) -> "FinSpace":
        pts = tuple(sorted(set(points)))
        index = {p: i for i, p in enumerate(pts)}
        rows = []
        for s in subbasis:
            row = np.zeros(len(pts), dtype=np.bool_)
            for p in s:
                if p not in index:
                    raise SpaceError(f"subbasis set mentions unknown point {p!r}")
                row[index[p]] = True
            rows.append(row)
        sub = np.array(rows, dtype=np.bool_).reshape(len(rows), len(pts))
        nb = _kernels.minimal_neighborhoods(sub)
        up = {p: [pts[j] for j in np.flatnonzero(nb[i])] for i, p in enumerate(pts)}
        return cls(pts, up, t0=t0)

    @classmethod
    def from_opens(cls, points: Iterable[Point], opens: Iterable[Iterable[Point]]) -> "FinSpace":
        """Build from an explicit open family, checking the lattice axioms."""
        pts = frozenset(points)
        fam = {frozenset(o) for o in opens}
        if frozenset() not in fam or pts not in fam:
            raise SpaceError("open family must contain the empty set and the whole space")
        for a, b in itertools.combinations(fam, 2):
            if a | b not in fam or a & b not in fam:
                raise SpaceError("open family is not closed under union and intersection")
        return cls.from_subbasis(pts, fam)

    @classmethod
    def from_preorder(cls, points: Iterable[Point], leq: Iterable[tuple[Point, Point]]) -> "FinSpace":
        """Opens are the up-sets of the reflexive-transitive closure of ``leq``."""
        pts = tuple(sorted(set(points)))
        succ = {p: {p} for p in pts}
        for a, b in leq:
            succ[a].add(b)
        changed = True
        while changed:
            changed = False
            for p in pts:
                new = set().union(*(succ[q] for q in succ[p]))
                if new != succ[p]:
                    succ[p] = new
                    changed = True
        return cls(pts, succ)

    @classmethod
    def discrete(cls, points: Iterable[Point]) -> "FinSpace":
        pts = list(points)
        return cls(pts, {p: (p,) for p in pts})

    @classmethod
    def indiscrete(cls, points: Iterable[Point]) -> "FinSpace":
        pts = list(points)
        return cls(pts, {p: pts for p in pts})

    @classmethod
    def sierpinski(cls) -> "FinSpace":
        return cls(("0", "1"), {"0": ("0", "1"), "1": ("1",)})

    # basic queries ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, p) -> bool:
        return p in self._up

    def __eq__(self, other) -> bool:
        return isinstance(other, FinSpace) and self.points == other.points and self._up == other._up

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.points, tuple(self._up[p] for p in self.points)))
        return self._hash

    def __repr__(self) -> str:
        return f"FinSpace({len(self.points)} points)"

    @property
    def full(self) -> PointSet:
        return frozenset(self.points)

    def minimal_open(self, p: Point) -> PointSet:
        return self._up[p]

    def leq(self, p: Point, q: Point) -> bool:
        """Specialization order: every open containing p contains q."""
        return q in self._up[p]

    def specialization_preorder(self) -> frozenset:
        return frozenset((p, q) for p in self.points for q in self._up[p])

    def is_t0(self) -> bool:
        return all(not (q in self._up[p] and p in self._up[q]) for p in self.points for q in self._up[p] if q != p)

    def is_open(self, a: Iterable[Point]) -> bool:
        a = frozenset(a)
        return all(self._up[p] <= a for p in a)

    def interior(self, a: Iterable[Point]) -> PointSet:
        a = frozenset(a)
        return frozenset(p for p in a if self._up[p] <= a)

    def closure(self, a: Iterable[Point]) -> PointSet:
        a = frozenset(a)
        return frozenset(p for p in self.points if self._up[p] & a)

    def up_closure(self, a: Iterable[Point]) -> PointSet:
        """Smallest open set containing ``a``."""
        out = set()
        for p in a:
            out |= self._up[p]
        return frozenset(out)

    def basis(self) -> list[PointSet]:
        """Distinct minimal neighbourhoods, in canonical order."""
        seen = {}
        for p in self.points:
            seen.setdefault(self._up[p], p)
        return [s for s, _ in sorted(seen.items(), key=lambda kv: kv[1])]

    def opens(self) -> Iterator[PointSet]:
        """Enumerate every open set (exponential; meant for small spaces)."""
        pts = self.points
        down = {p: frozenset(q for q in pts if p in self._up[q]) for p in pts}

        def rec(i, inc, exc):
            if i == len(pts):
                yield frozenset(inc)
                return
            p = pts[i]
            if p in inc or p in exc:
                yield from rec(i + 1, inc, exc)
                return
            yield from rec(i + 1, inc, exc | down[p])
            yield from rec(i + 1, inc | self._up[p], exc)

        yield from rec(0, frozenset(), frozenset())

    def subspace(self, a: Iterable[Point]) -> "FinSpace":
        a = frozenset(a)
        if not a <= self._up.keys():
            raise SpaceError("subspace mentions points outside the space")
        return FinSpace(a, {p: self._up[p] & a for p in a})

    def to_json(self) -> dict:
        return {"points": [_jpt(p) for p in self.points], "opens": [sorted(_jpt(p) for p in s) for s in self.basis()]}

    @classmethod
    def from_json(cls, data: Mapping) -> "FinSpace":
        pts = [_pt(p) for p in data["points"]]
        return cls.from_subbasis(pts, [[_pt(p) for p in o] for o in data.get("opens", [])])


def _jpt(p):
    return list(p) if isinstance(p, tuple) else p


def _pt(p):
    return tuple(p) if isinstance(p, list) else p


# maps ----------------------------------------------------------------


class MapError(ValueError):
    pass


class ContinuousMap:
    __slots__ = ("source", "target", "graph")

    def __init__(self, source: FinSpace, target: FinSpace, graph: Mapping[Point, Point]):
        self.source = source
        self.target = target
        self.graph = dict(graph)
        for p in source.points:
            if p not in self.graph:
                raise MapError(f"map is not total: {p!r} has no image")
            if self.graph[p] not in target:
                raise MapError(f"image of {p!r} is not a target point")
        for p in source.points:
            fp = self.graph[p]
            if not all(self.graph[q] in target.minimal_open(fp) for q in source.minimal_open(p)):
                raise MapError(f"map is not continuous at {p!r}")

    def __call__(self, p: Point) -> Point:
        return self.graph[p]

    def image(self, a: Iterable[Point]) -> PointSet:
        return frozenset(self.graph[p] for p in a)

    def preimage(self, b: Iterable[Point]) -> PointSet:
        b = frozenset(b)
        return frozenset(p for p in self.source.points if self.graph[p] in b)

    def is_open_map(self) -> bool:
        return all(self.target.is_open(self.image(self.source.minimal_open(p))) for p in self.source.points)

    def to_json(self) -> dict:
        return {"graph": {str(_jpt(k)): _jpt(v) for k, v in sorted(self.graph.items())}}


@dataclass(frozen=True)
class EtaleCheck:
    etale: bool
    sections: tuple = ()
    witness: Point | None = None


def _is_section(p: ContinuousMap, s: PointSet) -> bool:
    src, tgt = p.source, p.target
    if not src.is_open(s):
        return False
    img = p.image(s)
    if len(img) != len(s) or not tgt.is_open(img):
        return False
    # homeomorphism onto the image: the specialization order must be reflected
    for a in s:
        for b in s:
            if tgt.leq(p(a), p(b)) and not src.leq(a, b):
                return False
    return True


def is_etale(p: ContinuousMap) -> EtaleCheck:
    """Decide whether ``p`` is a local homeomorphism.

    A point has a section neighbourhood iff its minimal neighbourhood is one,
    so checking those suffices; the cover returned is the whole source when
    that is a section, otherwise the distinct minimal neighbourhoods needed.
    """
    src = p.source
    for x in src.points:
        if not _is_section(p, src.minimal_open(x)):
            return EtaleCheck(False, (), x)
    if _is_section(p, src.full):
        return EtaleCheck(True, (src.full,) if src.points else ())
    cover, covered = [], set()
    for x in src.points:
        if x in covered:
            continue
        nb = src.minimal_open(x)
        cover.append(nb)
        covered |= nb
    return EtaleCheck(True, tuple(cover))


# étale spaces --------------------------------------------------------


class EtaleSpace:
    """An étale space over ``base`` whose points are ``(x, l_1, ..., l_w)``.

    ``width`` is the number of label slots: 1 for an ordinary bundle, n for an
    n-fold fiber power, 0 for the base viewed as a bundle over itself.
    """

    __slots__ = ("base", "total", "width", "_fibers", "_hash")

    def __init__(self, base: FinSpace, total: FinSpace, width: int):
        self.base = base
        self.total = total
        self.width = width
        fibers = {x: [] for x in base.points}
        for e in total.points:
            fibers[e[0]].append(e)
        self._fibers = {x: tuple(v) for x, v in fibers.items()}
        self._hash = None

    @classmethod
    def from_transport(
        cls,
        base: FinSpace,
        fibers: Mapping[Point, Iterable[tuple]],
        transport: Callable[[Point, Point, tuple], tuple],
        width: int,
    ) -> "EtaleSpace":
        """``transport(x, y, labels)`` moves a label tuple from fiber x to y >= x."""
        fib = {x: {tuple(l) for l in fibers.get(x, ())} for x in base.points}
        up = {}
        for x in base.points:
            for lab in fib[x]:
                nb = set()
                for y in base.minimal_open(x):
                    moved = tuple(transport(x, y, lab))
                    if moved not in fib[y]:
                        raise SpaceError(f"transport of {lab!r} from {x!r} to {y!r} leaves the fiber")
                    nb.add((y,) + moved)
                up[(x,) + lab] = nb
        for e, nb in up.items():
            if sum(1 for f in nb if f[0] == e[0]) != 1:
                raise SpaceError(f"transport is not the identity on the fiber of {e!r}")
        try:
            total = FinSpace(up.keys(), up)
        except SpaceError as exc:
            raise SpaceError(f"transport is not functorial: {exc}") from None
        return cls(base, total, width)

    @classmethod
    def trivial(cls, base: FinSpace, labels: Iterable[str]) -> "EtaleSpace":
        labs = [(l,) for l in labels]
        return cls.from_transport(base, {x: labs for x in base.points}, lambda x, y, l: l, 1)

    @classmethod
    def identity(cls, base: FinSpace) -> "EtaleSpace":
        return cls.from_transport(base, {x: [()] for x in base.points}, lambda x, y, l: l, 0)

    @classmethod
    def from_map(cls, p: ContinuousMap) -> "EtaleSpace":
        chk = is_etale(p)
        if not chk.etale:
            raise SpaceError(f"map is not étale at {chk.witness!r}")
        src = p.source
        up = {(p(e), e): [(p(f), f) for f in src.minimal_open(e)] for e in src.points}
        return cls(p.target, FinSpace(up.keys(), up), 1)

    def __eq__(self, other) -> bool:
        return isinstance(other, EtaleSpace) and self.width == other.width and self.base == other.base and self.total == other.total

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.width, self.base, self.total))
        return self._hash

    def __repr__(self) -> str:
        return f"EtaleSpace(width={self.width}, {len(self.total)} points over {len(self.base)})"

    @property
    def points(self) -> tuple:
        return self.total.points

    def fiber(self, x: Point) -> tuple:
        if x not in self._fibers:
            raise SpaceError(f"unknown base point {x!r}")
        return self._fibers[x]

    def transport(self, e: tuple, y: Point) -> tuple:
        for f in self.total.minimal_open(e):
            if f[0] == y:
                return f
        raise SpaceError(f"{y!r} is not above the base point of {e!r}")

    def project(self, a: Iterable[tuple]) -> PointSet:
        return frozenset(e[0] for e in a)

    def projection(self) -> ContinuousMap:
        return ContinuousMap(self.total, self.base, {e: e[0] for e in self.total.points})

    def sections(self) -> tuple:
        return is_etale(self.projection()).sections

    def restrict(self, a: Iterable[tuple]) -> "EtaleSpace":
        """The open subspace ``a`` as an étale space over the same base."""
        a = frozenset(a)
        if not self.total.is_open(a):
            raise SpaceError("restriction to a non-open subset")
        return EtaleSpace(self.base, self.total.subspace(a), self.width)

    def validate(self) -> list[str]:
        out = []
        try:
            chk = is_etale(self.projection())
        except MapError as exc:
            return [str(exc)]
        if not chk.etale:
            out.append(f"no open section around {chk.witness!r}")
        for x in self.base.points:
            fib = frozenset(self.fiber(x))
            for e in fib:
                if self.total.minimal_open(e) & fib != {e}:
                    out.append(f"fiber over {x!r} is not discrete at {e!r}")
        return out


def fiber_product(p: EtaleSpace, q: EtaleSpace) -> EtaleSpace:
    """Points ``(x, labels_p..., labels_q...)`` with the componentwise topology."""
    if p.base != q.base:
        raise SpaceError("fiber product needs a common base")
    fibers = {x: [a[1:] + b[1:] for a in p.fiber(x) for b in q.fiber(x)] for x in p.base.points}
    w = p.width

    def move(x, y, lab):
        return p.transport((x,) + lab[:w], y)[1:] + q.transport((x,) + lab[w:], y)[1:]

    return EtaleSpace.from_transport(p.base, fibers, move, p.width + q.width)


def fiber_power(p: EtaleSpace, n: int) -> EtaleSpace:
    out = EtaleSpace.identity(p.base)
    for _ in range(n):
        out = fiber_product(out, p)
    return out


# finite Baire category -------------------------------------------------


def min_dense_open(x: FinSpace) -> PointSet:
    """Intersection of all dense open sets: the union of the minimal nonempty opens."""
    return frozenset(p for p in x.points if all(x.leq(q, p) for q in x.minimal_open(p)))


def is_meager(x: FinSpace, a: Iterable[Point]) -> bool:
    a = frozenset(a)
    if not a <= x.full:
        raise SpaceError("subset mentions points outside the space")
    return not (a & min_dense_open(x))


def is_nowhere_dense(x: FinSpace, a: Iterable[Point]) -> bool:
    return not x.interior(x.closure(a))


# Borel codes -----------------------------------------------------------


class BorelError(ValueError):
    pass


@dataclass(frozen=True)
class OpenLeaf:
    points: frozenset

    @property
    def rank(self) -> int:
        return 1


@dataclass(frozen=True)
class UnionNode:
    children: tuple

    @property
    def rank(self) -> int:
        return max((c.rank for c in self.children), default=1)


@dataclass(frozen=True)
class DiffNode:
    left: object
    right: object

    @property
    def rank(self) -> int:
        return max(self.left.rank, self.right.rank) + 1


BorelCode = OpenLeaf | UnionNode | DiffNode


def leaf(points: Iterable[Point]) -> OpenLeaf:
    return OpenLeaf(frozenset(points))


def union(*children) -> UnionNode:
    return UnionNode(tuple(children))


def realize_borel(x: FinSpace, code) -> tuple[PointSet, int]:
    """Evaluate a code to its point set; returns ``(set, rank)``."""

    def ev(c):
        if isinstance(c, OpenLeaf):
            if not c.points <= x.full:
                raise BorelError("leaf refers to points outside the space")
            if not x.is_open(c.points):
                raise BorelError("leaf refers to a set that is not open")
            return c.points
        if isinstance(c, UnionNode):
            return frozenset().union(*(ev(k) for k in c.children))
        if isinstance(c, DiffNode):
            return ev(c.left) - ev(c.right)
        raise BorelError(f"not a Borel code: {c!r}")

    return ev(code), code.rank


def map_leaves(code, f: Callable[[frozenset], frozenset]):
    if isinstance(code, OpenLeaf):
        return OpenLeaf(frozenset(f(code.points)))
    if isinstance(code, UnionNode):
        return UnionNode(tuple(map_leaves(c, f) for c in code.children))
    return DiffNode(map_leaves(code.left, f), map_leaves(code.right, f))


def count_leaves(code) -> int:
    if isinstance(code, OpenLeaf):
        return 1
    if isinstance(code, UnionNode):
        return sum(count_leaves(c) for c in code.children)
    return count_leaves(code.left) + count_leaves(code.right)


def code_to_json(code):
    if isinstance(code, OpenLeaf):
        return {"open": sorted(_jpt(p) for p in code.points)}
    if isinstance(code, UnionNode):
        return {"union": [code_to_json(c) for c in code.children]}
    return {"diff": [code_to_json(code.left), code_to_json(code.right)]}


def code_from_json(data):
    if "open" in data:
        return OpenLeaf(frozenset(_pt(p) for p in data["open"]))
    if "union" in data:
        return UnionNode(tuple(code_from_json(c) for c in data["union"]))
    if "diff" in data:
        l, r = data["diff"]
        return DiffNode(code_from_json(l), code_from_json(r))
    raise BorelError(f"unrecognised code node: {sorted(data)}")


def all_topologies(points: Sequence[Point]) -> Iterator[FinSpace]:
    """Every topology on ``points`` (as preorders), for exhaustive tests."""
    pts = tuple(points)
    pairs = [(a, b) for a in pts for b in pts if a != b]
    seen = set()
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        rel = {pr for pr, bit in zip(pairs, bits) if bit}
        if any((a, c) not in rel for (a, b) in rel for (b2, c) in rel if b == b2 and a != c):
            continue
        sp = FinSpace.from_preorder(pts, rel)
        if sp not in seen:
            seen.add(sp)
            yield sp
