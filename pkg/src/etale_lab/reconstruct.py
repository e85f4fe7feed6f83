"""Abstract finite topological groupoids and their canonical structures.

A groupoid is given by tables over string names: objects, morphisms,
``dom``/``cod``, units, inverses and a partial composition keyed by
``(g, h)`` with ``dom(g) == cod(h)`` (so ``gh`` means "first h").  Both
spaces are finite, so continuity of every structure map is monotonicity
for the specialization preorders.

From a family of open subgroupoids ``U`` the canonical structure has one
sort of left cosets ``G/U`` per member and one unary right-multiplication
function per admissible ``(U, V, S)``.  The left translation action gives a
functor into the isomorphism groupoid of that structure, which is checked
exhaustively for being an isomorphism of topological groupoids.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .etale import EtaleStructure
from .finspace import ContinuousMap, EtaleSpace, FinSpace, MapError, SpaceError
from .isogpd import IsoGroupoid, Morphism, compute_iso_groupoid
from .logic import Signature
from .util import parallel_map


class GroupoidSpecError(ValueError):
    pass


def _product_space(a: FinSpace, b: FinSpace, name) -> FinSpace:
    pts = {name(p, q): (p, q) for p in a.points for q in b.points}
    up = {n: [name(p2, q2) for p2 in a.minimal_open(p) for q2 in b.minimal_open(q)] for n, (p, q) in pts.items()}
    return FinSpace(pts, up)


class TopGroupoid:
    """A finite topological groupoid ``G => X`` with ``X`` embedded as units."""

    def __init__(
        self,
        objects: FinSpace,
        morphisms: FinSpace,
        dom: Mapping[str, str],
        cod: Mapping[str, str],
        unit: Mapping[str, str],
        inv: Mapping[str, str],
        comp: Mapping[tuple, str],
    ):
        self.objects = objects
        self.morphisms = morphisms
        self.dom = dict(dom)
        self.cod = dict(cod)
        self.unit = dict(unit)
        self.inv = dict(inv)
        self.comp = {tuple(k): v for k, v in comp.items()}

    def __repr__(self) -> str:
        return f"TopGroupoid({len(self.objects)} objects, {len(self.morphisms)} morphisms)"

    def __len__(self) -> int:
        return len(self.morphisms)

    @cached_property
    def into(self) -> dict:
        out: dict = {x: [] for x in self.objects.points}
        for g in self.morphisms.points:
            out[self.cod[g]].append(g)
        return out

    @cached_property
    def out_of(self) -> dict:
        out: dict = {x: [] for x in self.objects.points}
        for g in self.morphisms.points:
            out[self.dom[g]].append(g)
        return out

    def compose(self, g: str, h: str) -> str:
        return self.comp[g, h]

    def leq(self, g: str, h: str) -> bool:
        return self.morphisms.leq(g, h)

    def composable(self) -> list[tuple]:
        return [(g, h) for g in self.morphisms.points for h in self.into[self.dom[g]]]

    def validate(self) -> list[str]:
        """Groupoid axioms, continuity of the structure maps and the unit
        embedding being a subspace inclusion."""
        out = []
        G, X = self.morphisms, self.objects
        for name, table in (("dom", self.dom), ("cod", self.cod), ("inv", self.inv)):
            if set(table) != set(G.points):
                out.append(f"{name} is not defined exactly on the morphisms")
        if set(self.unit) != set(X.points):
            out.append("unit is not defined exactly on the objects")
        if out:
            return out
        for x, e in self.unit.items():
            if self.dom[e] != x or self.cod[e] != x:
                out.append(f"unit of {x} is not a loop at {x}")
        for g, h in self.composable():
            gh = self.comp.get((g, h))
            if gh is None:
                out.append(f"composite of {g} after {h} is missing")
            elif self.dom[gh] != self.dom[h] or self.cod[gh] != self.cod[g]:
                out.append(f"composite of {g} after {h} has the wrong ends")
        extra = set(self.comp) - set(self.composable())
        if extra:
            out.append(f"composition is defined on a non-composable pair {sorted(extra)[0]!r}")
        if out:
            return out
        for g in G.points:
            if self.comp[self.unit[self.cod[g]], g] != g or self.comp[g, self.unit[self.dom[g]]] != g:
                out.append(f"unit law fails at {g}")
            gi = self.inv[g]
            if self.dom[gi] != self.cod[g] or self.comp[g, gi] != self.unit[self.cod[g]] or self.comp[gi, g] != self.unit[self.dom[g]]:
                out.append(f"inverse law fails at {g}")
        for g, h in self.composable():
            for k in self.into[self.dom[h]]:
                if self.comp[self.comp[g, h], k] != self.comp[g, self.comp[h, k]]:
                    out.append(f"associativity fails at {g}, {h}, {k}")
        for name, table, src, tgt in (
            ("dom", self.dom, G, X),
            ("cod", self.cod, G, X),
            ("inv", self.inv, G, G),
            ("unit", self.unit, X, G),
        ):
            try:
                ContinuousMap(src, tgt, table)
            except MapError:
                out.append(f"{name} is not continuous")
        if not self.composition_continuous():
            out.append("composition is not continuous")
        for x, y in itertools.product(X.points, repeat=2):
            if X.leq(x, y) != G.leq(self.unit[x], self.unit[y]):
                out.append("units do not carry the subspace topology")
                break
        return out

    def composition_continuous(self) -> bool:
        pairs = self.composable()
        le = self.leq
        for (g, h), (k, l) in itertools.product(pairs, repeat=2):
            if le(g, k) and le(h, l) and not le(self.comp[g, h], self.comp[k, l]):
                return False
        return True

    def is_t0(self) -> bool:
        return self.morphisms.is_t0() and self.objects.is_t0()

    def is_open(self) -> bool:
        """``dom`` and ``cod`` are open maps (tested on minimal opens)."""
        for g in self.morphisms.points:
            nb = self.morphisms.minimal_open(g)
            if not self.objects.is_open({self.dom[h] for h in nb}) or not self.objects.is_open({self.cod[h] for h in nb}):
                return False
        return True

    # JSON --------------------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "objects": self.objects.to_json(),
            "morphisms": self.morphisms.to_json(),
            "dom": dict(sorted(self.dom.items())),
            "cod": dict(sorted(self.cod.items())),
            "unit": dict(sorted(self.unit.items())),
            "inv": dict(sorted(self.inv.items())),
            "comp": sorted([g, h, gh] for (g, h), gh in self.comp.items()),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "TopGroupoid":
        return cls(
            FinSpace.from_json(data["objects"]),
            FinSpace.from_json(data["morphisms"]),
            data["dom"],
            data["cod"],
            data["unit"],
            data["inv"],
            {(g, h): gh for g, h, gh in data["comp"]},
        )


# constructions ------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteGroup:
    """A permutation group; elements are tuples, ``a * b`` applies ``b`` first."""

    elements: tuple

    @staticmethod
    def generated(gens: Sequence[tuple], degree: int) -> "FiniteGroup":
        ident = tuple(range(degree))
        seen = {ident}
        frontier = [ident]
        while frontier:
            nxt = []
            for a in frontier:
                for g in gens:
                    b = tuple(g[i] for i in a)
                    if b not in seen:
                        seen.add(b)
                        nxt.append(b)
            frontier = nxt
        return FiniteGroup(tuple(sorted(seen)))

    @property
    def identity(self) -> tuple:
        return tuple(range(len(self.elements[0])))

    @staticmethod
    def mul(a: tuple, b: tuple) -> tuple:
        return tuple(a[i] for i in b)

    @staticmethod
    def inverse(a: tuple) -> tuple:
        out = [0] * len(a)
        for i, v in enumerate(a):
            out[v] = i
        return tuple(out)

    def name(self, a: tuple) -> str:
        return "".join(map(str, a)) if len(a) <= 10 else ",".join(map(str, a))

    def subgroups(self) -> list[frozenset]:
        """Subgroups generated by at most two elements (all of them for the
        small groups used here)."""
        deg = len(self.identity)
        found = {frozenset(FiniteGroup.generated(gens, deg).elements) for gens in itertools.combinations_with_replacement(self.elements, 2)}
        return sorted(found, key=lambda s: (len(s), sorted(s)))


def cyclic_group(n: int) -> FiniteGroup:
    return FiniteGroup.generated([tuple((i + 1) % n for i in range(n))] if n > 1 else [], max(n, 1))


def klein_group() -> FiniteGroup:
    return FiniteGroup.generated([(1, 0, 3, 2), (2, 3, 0, 1)], 4)


def symmetric_group(n: int) -> FiniteGroup:
    gens = [tuple(itertools.chain([1, 0], range(2, n)))] if n > 1 else []
    if n > 2:
        gens.append(tuple((i + 1) % n for i in range(n)))
    return FiniteGroup.generated(gens, max(n, 1))


def group_groupoid(group: FiniteGroup, normal: Iterable[tuple] | None = None) -> TopGroupoid:
    """One-object groupoid; with ``normal`` given, the opens are the unions of
    its cosets (non-T0 unless ``normal`` is trivial)."""
    els = group.elements
    nm = group.name
    if normal is None:
        space = FinSpace.discrete([nm(a) for a in els])
    else:
        n = frozenset(normal)
        space = FinSpace([nm(a) for a in els], {nm(a): [nm(group.mul(a, b)) for b in n] for a in els})
    obj = FinSpace.discrete(["*"])
    return TopGroupoid(
        obj,
        space,
        {nm(a): "*" for a in els},
        {nm(a): "*" for a in els},
        {"*": nm(group.identity)},
        {nm(a): nm(group.inverse(a)) for a in els},
        {(nm(a), nm(b)): nm(group.mul(a, b)) for a in els for b in els},
    )


def pair_groupoid(objects: FinSpace) -> TopGroupoid:
    """One morphism ``y<-x`` for every pair, topologized as ``X x X``."""
    name = lambda y, x: f"{y}<-{x}"
    space = _product_space(objects, objects, name)
    pts = objects.points
    return TopGroupoid(
        objects,
        space,
        {name(y, x): x for y in pts for x in pts},
        {name(y, x): y for y in pts for x in pts},
        {x: name(x, x) for x in pts},
        {name(y, x): name(x, y) for y in pts for x in pts},
        {(name(z, y), name(y, x)): name(z, x) for x in pts for y in pts for z in pts},
    )


def action_groupoid(group: FiniteGroup, objects: FinSpace, act: Mapping[tuple, Mapping[str, str]]) -> TopGroupoid:
    """Morphisms ``g@x : x -> g.x``, topologized as ``discrete G x X``.

    ``act[g]`` must be a homeomorphism of ``objects`` for every ``g``."""
    nm = group.name
    name = lambda g, x: f"{nm(g)}@{x}"
    els = group.elements
    pts = objects.points
    up = {name(g, x): [name(g, y) for y in objects.minimal_open(x)] for g in els for x in pts}
    space = FinSpace(up.keys(), up)
    return TopGroupoid(
        objects,
        space,
        {name(g, x): x for g in els for x in pts},
        {name(g, x): act[g][x] for g in els for x in pts},
        {x: name(group.identity, x) for x in pts},
        {name(g, x): name(group.inverse(g), act[g][x]) for g in els for x in pts},
        {(name(h, act[g][x]), name(g, x)): name(group.mul(h, g), x) for g in els for h in els for x in pts},
    )


def coset_action(group: FiniteGroup, subgroups: Sequence[frozenset]) -> tuple[list[str], dict]:
    """The left action on the disjoint union of ``G/H`` for each listed ``H``."""
    points: list[str] = []
    rep: dict = {}
    for k, h in enumerate(subgroups):
        count = 0
        for a in group.elements:
            c = frozenset(group.mul(a, b) for b in h)
            if (k, c) not in rep:
                rep[k, c] = f"o{k}c{count}"
                points.append(rep[k, c])
                count += 1
    act = {}
    for g in group.elements:
        act[g] = {rep[k, c]: rep[k, frozenset(group.mul(g, a) for a in c)] for k, c in rep}
    return points, act


def disjoint_union(a: TopGroupoid, b: TopGroupoid) -> TopGroupoid:
    ta = lambda n: f"0:{n}"
    tb = lambda n: f"1:{n}"

    def space(sa: FinSpace, sb: FinSpace) -> FinSpace:
        up = {ta(p): [ta(q) for q in sa.minimal_open(p)] for p in sa.points}
        up.update({tb(p): [tb(q) for q in sb.minimal_open(p)] for p in sb.points})
        return FinSpace(up.keys(), up)

    def tab(d1, d2):
        out = {ta(k): ta(v) for k, v in d1.items()}
        out.update({tb(k): tb(v) for k, v in d2.items()})
        return out

    comp = {(ta(g), ta(h)): ta(v) for (g, h), v in a.comp.items()}
    comp.update({(tb(g), tb(h)): tb(v) for (g, h), v in b.comp.items()})
    return TopGroupoid(
        space(a.objects, b.objects),
        space(a.morphisms, b.morphisms),
        tab(a.dom, b.dom),
        tab(a.cod, b.cod),
        tab(a.unit, b.unit),
        tab(a.inv, b.inv),
        comp,
    )


def product(a: TopGroupoid, b: TopGroupoid) -> TopGroupoid:
    name = lambda p, q: f"{p}|{q}"
    objs = _product_space(a.objects, b.objects, name)
    mors = _product_space(a.morphisms, b.morphisms, name)
    pairs = [(g, h) for g in a.morphisms.points for h in b.morphisms.points]
    comp = {}
    for (g1, h1), (g2, h2) in itertools.product(pairs, repeat=2):
        if (g1, g2) in a.comp and (h1, h2) in b.comp:
            comp[name(g1, h1), name(g2, h2)] = name(a.comp[g1, g2], b.comp[h1, h2])
    return TopGroupoid(
        objs,
        mors,
        {name(g, h): name(a.dom[g], b.dom[h]) for g, h in pairs},
        {name(g, h): name(a.cod[g], b.cod[h]) for g, h in pairs},
        {name(x, y): name(a.unit[x], b.unit[y]) for x in a.objects.points for y in b.objects.points},
        {name(g, h): name(a.inv[g], b.inv[h]) for g, h in pairs},
        comp,
    )


def from_iso_groupoid(G: IsoGroupoid) -> TopGroupoid:
    """Forget the structure: the abstract groupoid underlying ``Iso_X(M)``."""
    ids = G.ids
    unit = {x: ids[i] for x, i in G.identity.items()}
    comp = {}
    for i, g in enumerate(G.morphisms):
        for j in G.morphisms_into(g.dom):
            comp[ids[i], ids[j]] = ids[G.compose(i, j)]
    return TopGroupoid(
        G.base,
        G.topology,
        {ids[i]: g.dom for i, g in enumerate(G.morphisms)},
        {ids[i]: g.cod for i, g in enumerate(G.morphisms)},
        unit,
        {ids[i]: ids[G.inverse[i]] for i in range(len(ids))},
        comp,
    )


def invariant_topology(points: Sequence[str], act: Mapping, rng: random.Random, generators: int = 2) -> FinSpace:
    """A random topology on ``points`` for which every ``act[g]`` is a
    homeomorphism: a random subbasis closed under the action."""
    sub = []
    for _ in range(generators):
        s = frozenset(p for p in points if rng.random() < 0.5)
        for table in act.values():
            sub.append(frozenset(table[p] for p in s))
    return FinSpace.from_subbasis(points, sub)


# open subgroupoids -------------------------------------------------------------------


@dataclass(frozen=True)
class OpenSubgroupoid:
    members: frozenset

    def objects(self, G: TopGroupoid) -> frozenset:
        """``{x : 1_x in U}``."""
        return frozenset(x for x, e in G.unit.items() if e in self.members)

    def problems(self, G: TopGroupoid) -> list[str]:
        out = []
        m = self.members
        if not G.morphisms.is_open(m):
            out.append("not open")
        if any(G.inv[g] not in m for g in m):
            out.append("not closed under inverse")
        if any(G.comp[g, h] not in m for g in m for h in G.into[G.dom[g]] if h in m):
            out.append("not closed under composition")
        return out


def _subgroupoid_closure(G: TopGroupoid, a: Iterable[str]) -> frozenset:
    cur = set(a)
    while True:
        nxt = set(cur)
        for g in cur:
            nxt |= G.morphisms.minimal_open(g)
            nxt.add(G.inv[g])
        for g in cur:
            for h in G.into[G.dom[g]]:
                if h in cur:
                    nxt.add(G.comp[g, h])
        if nxt == cur:
            return frozenset(cur)
        cur = nxt


def open_subgroupoids(G: TopGroupoid) -> list[OpenSubgroupoid]:
    """All nonempty open subgroupoids, by closing ``S + {g}`` from the empty one."""
    found = {frozenset()}
    frontier = [frozenset()]
    while frontier:
        nxt = []
        for s in frontier:
            for g in G.morphisms.points:
                if g in s:
                    continue
                t = _subgroupoid_closure(G, s | {g})
                if t not in found:
                    found.add(t)
                    nxt.append(t)
        frontier = nxt
    found.discard(frozenset())
    return [OpenSubgroupoid(s) for s in sorted(found, key=lambda s: (len(s), sorted(s)))]


@dataclass
class NonArchimedeanReport:
    open_maps: bool
    nonarchimedean: bool
    bases: dict  # object -> open subgroupoids containing its unit
    failures: list  # objects whose minimal neighbourhood holds no such subgroupoid

    @property
    def ok(self) -> bool:
        return self.open_maps and self.nonarchimedean

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "open_maps": self.open_maps,
            "nonarchimedean": self.nonarchimedean,
            "bases": {x: [sorted(u.members) for u in us] for x, us in sorted(self.bases.items())},
            "failures": list(self.failures),
        }


def check_open_nonarchimedean(G: TopGroupoid) -> NonArchimedeanReport:
    """Every open neighbourhood of ``1_x`` must contain an open subgroupoid
    through ``1_x``; on a finite space it suffices to test the minimal one."""
    subs = open_subgroupoids(G)
    bases, failures = {}, []
    for x, e in sorted(G.unit.items()):
        nb = G.morphisms.minimal_open(e)
        through = [u for u in subs if e in u.members]
        bases[x] = through
        if not any(u.members <= nb for u in through):
            failures.append(x)
    return NonArchimedeanReport(G.is_open(), not failures, bases, failures)


# cosets ----------------------------------------------------------------------------------


@dataclass
class CosetSpace:
    """``G/U`` over the objects, with cosets labelled by their least member."""

    G: TopGroupoid
    U: OpenSubgroupoid
    space: EtaleSpace
    coset_of: dict  # morphism with dom in U -> label
    members: dict  # label -> frozenset of morphisms

    def point(self, g: str) -> tuple:
        return (self.G.cod[g], self.coset_of[g])

    def act(self, h: str, p: tuple) -> tuple:
        """Left translation of the coset ``p`` by ``h : cod(p) -> y``."""
        G = self.G
        if G.dom[h] != p[0]:
            raise GroupoidSpecError(f"{h} does not start at {p[0]!r}")
        g = next(iter(self.members[p[1]]))
        return self.point(G.comp[h, g])

    def lift(self, points: Iterable[tuple]) -> frozenset:
        return frozenset().union(*(self.members[p[1]] for p in points)) if points else frozenset()

    def validate(self) -> list[str]:
        out = list(self.space.validate())
        G = self.G
        for x in G.objects.points:
            for h in G.out_of[x]:
                img = [self.act(h, p) for p in self.space.fiber(x)]
                if sorted(img) != sorted(self.space.fiber(G.cod[h])):
                    out.append(f"translation by {h} is not a bijection of fibers")
                for p in self.space.fiber(x):
                    for k in G.out_of[G.cod[h]]:
                        if self.act(k, self.act(h, p)) != self.act(G.comp[k, h], p):
                            out.append(f"action is not functorial at {k}, {h}")
            for p in self.space.fiber(x):
                if self.act(G.unit[x], p) != p:
                    out.append(f"unit acts non-trivially on {p!r}")
        # joint continuity on the specialization preorders
        tot = self.space.total
        for h in G.morphisms.points:
            for p in self.space.fiber(G.dom[h]):
                hp = self.act(h, p)
                for k in G.morphisms.minimal_open(h):
                    for q in tot.minimal_open(p):
                        if q[0] == G.dom[k] and self.act(k, q) not in tot.minimal_open(hp):
                            out.append(f"action is not continuous at {h}, {p!r}")
        return out


def coset_space(G: TopGroupoid, U: OpenSubgroupoid) -> CosetSpace:
    """Left cosets ``gU`` for ``dom(g)`` an object of ``U``, projected by
    ``cod``, with the quotient topology from ``dom^-1(U)``."""
    objs = U.objects(G)
    domain = [g for g in G.morphisms.points if G.dom[g] in objs]
    coset_of, members = {}, {}
    for g in domain:
        if g in coset_of:
            continue
        c = frozenset(G.comp[g, u] for u in U.members if G.cod[u] == G.dom[g])
        label = min(c)
        members[label] = c
        for h in c:
            coset_of[h] = label
    up = {}
    for label, c in members.items():
        hull = set(c)
        while True:
            opened = set().union(*(G.morphisms.minimal_open(g) for g in hull))
            sat = set().union(*(members[coset_of[g]] for g in opened))
            if sat == hull:
                break
            hull = sat
        x = G.cod[next(iter(c))]
        up[(x, label)] = {(G.cod[g], coset_of[g]) for g in hull}
    try:
        total = FinSpace(up.keys(), up)
    except SpaceError as exc:
        raise GroupoidSpecError(f"coset topology is inconsistent: {exc}") from None
    return CosetSpace(G, U, EtaleSpace(G.objects, total, 1), coset_of, members)


def sections_cover(C: CosetSpace) -> list[frozenset]:
    """Lifts of the minimal neighbourhoods of the cosets: open right-invariant
    sets, each meeting every ``cod`` fiber in at most one coset."""
    out = []
    for p in C.space.points:
        s = C.lift(C.space.total.minimal_open(p))
        if s not in out:
            out.append(s)
    return out


def rmul_condition(G: TopGroupoid, U: OpenSubgroupoid, S: frozenset) -> bool:
    """``U`` is contained in ``S S^-1``."""
    prod = {G.comp[s, G.inv[t]] for s in S for t in S if G.dom[s] == G.dom[t]}
    return U.members <= prod


def right_multiplication(CU: CosetSpace, CV: CosetSpace, S: frozenset) -> dict | None:
    """The map ``gU -> g s V`` with ``s in S``, ``cod(s) = dom(g)``, computed
    over every representative and every choice of ``s``; ``None`` unless the
    result is total and single-valued."""
    G = CU.G
    table: dict = {}
    for label, c in CU.members.items():
        images = set()
        for g in c:
            choices = [s for s in S if G.cod[s] == G.dom[g]]
            if not choices:
                return None
            images.update(CV.point(G.comp[g, s]) for s in choices)
        if len(images) != 1:
            return None
        x = G.cod[next(iter(c))]
        table[(x, label)] = images.pop()
    return table


# canonical structure -------------------------------------------------------------------


@dataclass
class CanonicalStructure:
    G: TopGroupoid
    family: list  # OpenSubgroupoid per sort, sort i is "U{i}"
    covers: list  # per sort: list of lifted sections
    cosets: list  # CosetSpace per sort
    structure: EtaleStructure
    functions: dict = field(default_factory=dict)  # name -> (i, j, k)

    def sort(self, i: int) -> str:
        return f"U{i}"


def canonical_structure(
    G: TopGroupoid,
    family: Sequence[OpenSubgroupoid] | None = None,
    covers: Sequence[Sequence[frozenset]] | None = None,
) -> CanonicalStructure:
    """One sort ``G/U`` per member of ``family`` (default: every open
    subgroupoid) and a function ``(-)S : G/U -> G/V`` named ``r{i}_{j}_{k}``
    for every ``S = covers[j][k]`` with ``U_i`` inside ``S S^-1``."""
    rep = check_open_nonarchimedean(G)
    if not rep.ok:
        raise GroupoidSpecError("groupoid is not open and non-Archimedean")
    family = list(family) if family is not None else open_subgroupoids(G)
    for u in family:
        bad = u.problems(G)
        if bad:
            raise GroupoidSpecError(f"family member is {bad[0]}")
    for x, e in G.unit.items():
        nb = G.morphisms.minimal_open(e)
        if not any(e in u.members and u.members <= nb for u in family):
            raise GroupoidSpecError(f"family is not a neighbourhood basis at {x!r}")
    cosets = [coset_space(G, u) for u in family]
    if covers is None:
        covers = [sections_cover(c) for c in cosets]
    covers = [list(c) for c in covers]
    if len(covers) != len(family):
        raise GroupoidSpecError("need one cover per family member")
    for j, (C, cov) in enumerate(zip(cosets, covers)):
        dom_v = frozenset(C.coset_of)
        for s in cov:
            if not s <= dom_v or not G.morphisms.is_open(s):
                raise GroupoidSpecError(f"cover set of U{j} is not an open subset of dom^-1(U{j})")
            if C.lift({C.point(g) for g in s}) != s:
                raise GroupoidSpecError(f"cover set of U{j} is not right-invariant")
            if any(len({C.coset_of[g] for g in s if G.cod[g] == x}) > 1 for x in G.objects.points):
                raise GroupoidSpecError(f"cover set of U{j} is not a section")
        if frozenset().union(*cov) != dom_v:
            raise GroupoidSpecError(f"covers of U{j} miss part of dom^-1(U{j})")
    sorts = [f"U{i}" for i in range(len(family))]
    fn_sig, fn_tab, names = {}, {}, {}
    for i, j in itertools.product(range(len(family)), repeat=2):
        for k, s in enumerate(covers[j]):
            if not rmul_condition(G, family[i], s):
                continue
            table = right_multiplication(cosets[i], cosets[j], s)
            if table is None:
                raise GroupoidSpecError(f"right multiplication r{i}_{j}_{k} is not well-defined")
            name = f"r{i}_{j}_{k}"
            fn_sig[name] = ((sorts[i],), sorts[j])
            fn_tab[name] = {(x, lab): pt for (x, lab), pt in table.items()}
            names[name] = (i, j, k)
    sig = Signature(sorts, {}, fn_sig)
    M = EtaleStructure(sig, G.objects, {s: c.space for s, c in zip(sorts, cosets)}, {}, fn_tab)
    bad = M.validate()
    if bad:
        raise GroupoidSpecError(f"canonical structure is invalid: {bad[0]}")
    return CanonicalStructure(G, family, covers, cosets, M, names)


# canonical functor ------------------------------------------------------------------------


@dataclass
class FunctorReport:
    iota: dict  # morphism -> index in the isomorphism groupoid
    iso: IsoGroupoid
    embedding: bool
    fiberwise_dense: bool
    surjective: bool
    isomorphism: bool
    problems: list

    def to_json(self) -> dict:
        return {
            "embedding": self.embedding,
            "fiberwise_dense": self.fiberwise_dense,
            "surjective": self.surjective,
            "isomorphism": self.isomorphism,
            "iota": {g: self.iso.ids[i] for g, i in sorted(self.iota.items())},
            "iso_morphisms": len(self.iso),
            "problems": list(self.problems),
        }


def translation(C: CanonicalStructure, g: str) -> Morphism:
    G = C.G
    x, y = G.dom[g], G.cod[g]
    maps = {}
    for i, cs in enumerate(C.cosets):
        maps[C.sort(i)] = {p[1]: cs.act(g, p)[1] for p in cs.space.fiber(x)}
    return Morphism(x, y, maps)


def canonical_functor(C: CanonicalStructure, arity: int = 1) -> FunctorReport:
    """Send each ``g`` to its left translation and compare with the
    isomorphism groupoid computed independently from the structure."""
    G = C.G
    iso = compute_iso_groupoid(C.structure, arity)
    problems = []
    gs = list(G.morphisms.points)
    images = parallel_map(lambda g: translation(C, g), gs)
    iota = {}
    for g, m in zip(gs, images):
        if m not in iso.index:
            problems.append(f"translation by {g} is not an isomorphism of fibers")
        else:
            iota[g] = iso.index[m]
    if problems:
        return FunctorReport(iota, iso, False, False, False, False, problems)
    ids = iso.ids
    top = iso.topology
    injective = len(set(iota.values())) == len(gs)
    if not injective:
        problems.append("translation action is not faithful")
    homeo = all(G.leq(g, h) == top.leq(ids[iota[g]], ids[iota[h]]) for g in gs for h in gs)
    if not homeo:
        problems.append("image topology differs from the topology of G")
    embedding = injective and homeo
    image = {ids[i] for i in iota.values()}
    dense = True
    for y in G.objects.points:
        fib = [ids[i] for i in iso.morphisms_into(y)]
        sub = top.subspace(fib)
        if sub.closure(image & set(fib)) != frozenset(fib):
            dense = False
            problems.append(f"image is not dense in the fiber over {y!r}")
    surjective = len(image) == len(iso)
    if not surjective:
        problems.append(f"{len(iso) - len(image)} isomorphisms are not translations")
    functorial = all(iota[G.comp[g, h]] == iso.compose(iota[g], iota[h]) for g, h in G.composable())
    functorial = functorial and all(iota[G.inv[g]] == iso.inverse[iota[g]] for g in gs)
    functorial = functorial and all(iota[e] == iso.identity[x] for x, e in G.unit.items())
    if not functorial:
        problems.append("translation does not preserve the groupoid tables")
    isomorphism = embedding and surjective and functorial
    return FunctorReport(iota, iso, embedding, dense, surjective, isomorphism, problems)


def coherence_violations(C: CanonicalStructure, iso: IsoGroupoid) -> list[str]:
    """Every ``f : M_x -> M_y`` satisfies ``f(1_x U) V = f(1_x V)`` whenever
    ``1_x in U`` and ``U`` is contained in ``V``."""
    G = C.G
    out = []
    fam = C.family
    for f in iso.morphisms:
        x = f.dom
        e = G.unit[x]
        for i, j in itertools.product(range(len(fam)), repeat=2):
            U, V = fam[i], fam[j]
            if e not in U.members or not U.members <= V.members:
                continue
            cu, cv = C.cosets[i], C.cosets[j]
            img_u = f.maps[C.sort(i)][cu.coset_of[e]]
            rep = next(iter(cu.members[img_u]))
            if cv.coset_of[rep] != f.maps[C.sort(j)][cv.coset_of[e]]:
                out.append(f"coherence fails for U{i} inside U{j} at {f!r}")
    return out


# random groupoids -----------------------------------------------------------------------------

_GROUPS = (
    lambda: cyclic_group(1),
    lambda: cyclic_group(2),
    lambda: cyclic_group(3),
    lambda: cyclic_group(4),
    klein_group,
    lambda: symmetric_group(3),
)


def random_groupoid(rng: random.Random, max_morphisms: int = 12) -> TopGroupoid:
    """Sample a finite open non-Archimedean T0 groupoid: a discrete group, an
    action groupoid on an invariant topology, a pair groupoid, or a disjoint
    union or product of two smaller ones."""
    for _ in range(200):
        kinds = ["group", "action", "action", "pair"] + (["union", "product"] if max_morphisms >= 4 else [])
        kind = rng.choice(kinds)
        if kind == "group":
            G = group_groupoid(rng.choice(_GROUPS)())
        elif kind == "action":
            grp = rng.choice(_GROUPS)()
            subs = grp.subgroups()
            picks = [rng.choice(subs) for _ in range(rng.randint(1, 2))]
            pts, act = coset_action(grp, picks)
            if len(pts) * len(grp.elements) > max_morphisms:
                continue
            G = action_groupoid(grp, invariant_topology(pts, act, rng, rng.randint(0, 3)), act)
        elif kind == "pair":
            n = rng.randint(1, 3)
            pts = [f"p{i}" for i in range(n)]
            G = pair_groupoid(_random_t0_space(pts, rng))
        else:
            half = max(1, max_morphisms // (2 if kind == "union" else 3))
            a = random_groupoid(rng, half)
            b = random_groupoid(rng, max_morphisms // len(a) if kind == "product" else max_morphisms - len(a))
            G = disjoint_union(a, b) if kind == "union" else product(a, b)
        if len(G) <= max_morphisms and G.is_t0():
            return G
    return group_groupoid(cyclic_group(1))


def _random_t0_space(points: Sequence[str], rng: random.Random) -> FinSpace:
    for _ in range(50):
        sub = [frozenset(p for p in points if rng.random() < 0.5) for _ in range(len(points))]
        X = FinSpace.from_subbasis(points, sub)
        if X.is_t0():
            return X
    return FinSpace.discrete(points)


@dataclass
class ReconstructionResult:
    groupoid: TopGroupoid
    structure: CanonicalStructure
    report: FunctorReport
    coherence: list

    @property
    def ok(self) -> bool:
        r = self.report
        return r.embedding and r.fiberwise_dense and r.surjective and r.isomorphism and not self.coherence


def reconstruct(G: TopGroupoid, family=None, covers=None) -> ReconstructionResult:
    C = canonical_structure(G, family, covers)
    rep = canonical_functor(C)
    return ReconstructionResult(G, C, rep, coherence_violations(C, rep.iso))
