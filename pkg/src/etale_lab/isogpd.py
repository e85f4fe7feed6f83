"""Isomorphism groupoids of étale structures.

Morphisms are all isomorphisms between fibers.  The topology is generated by
``dom``/``cod`` preimages of base opens and by the sets
``<<U -> V>> = {g : g(U_dom) meets V_cod}`` for basic opens ``U, V`` of fiber
powers up to an arity bound.  The minimal-neighbourhood table is computed by
the boolean kernel in ``_kernels``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .etale import EtaleStructure
from .finspace import (
    ContinuousMap,
    DiffNode,
    FinSpace,
    OpenLeaf,
    UnionNode,
    is_meager,
    map_leaves,
    realize_borel,
)
from .finstruct import FinStructure, NotFound, _iter_isomorphisms, definability_search_multi
from .logic import BOT, And, Not, Or, classify, exists_many, to_text
from .util import parallel_map


class GroupoidError(ValueError):
    pass


class Morphism:
    """An isomorphism ``M_dom -> M_cod``; ``maps[sort][label]`` is the image label."""

    __slots__ = ("dom", "cod", "maps", "_key")

    def __init__(self, dom, cod, maps: Mapping[str, Mapping]):
        self.dom = dom
        self.cod = cod
        self.maps = {s: dict(m) for s, m in maps.items()}
        self._key = (dom, cod, tuple((s, tuple(sorted(m.items(), key=repr))) for s, m in sorted(self.maps.items())))

    def __eq__(self, other) -> bool:
        return isinstance(other, Morphism) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"Morphism({self.dom!r} -> {self.cod!r})"

    def act(self, sorts: Sequence[str], e: tuple) -> tuple:
        if e[0] != self.dom:
            raise GroupoidError("point is not in the domain fiber")
        return (self.cod,) + tuple(self.maps[s][a] for s, a in zip(sorts, e[1:]))


def _compose(g: Morphism, h: Morphism) -> Morphism:
    """``g . h`` (first ``h``)."""
    return Morphism(h.dom, g.cod, {s: {a: g.maps[s][b] for a, b in m.items()} for s, m in h.maps.items()})


def _inverse(g: Morphism) -> Morphism:
    return Morphism(g.cod, g.dom, {s: {b: a for a, b in m.items()} for s, m in g.maps.items()})


class IsoGroupoid:
    def __init__(self, M: EtaleStructure, arity: int = 1, topology: FinSpace | None = None):
        self.M = M
        self.base = M.base
        self.arity = arity
        morphs: list[Morphism] = []
        pts = list(self.base.points)
        pairs = [(x, y) for x in pts for y in pts]
        found = parallel_map(lambda xy: self._isos(*xy), pairs)
        for lst in found:
            morphs.extend(lst)
        self.morphisms = morphs
        self.ids = [f"g{i}" for i in range(len(morphs))]
        self.index = {g: i for i, g in enumerate(morphs)}
        self.identity = {}
        for x in pts:
            ident = Morphism(x, x, {s: {e[1]: e[1] for e in M.spaces[s].fiber(x)} for s in M.sig.sorts})
            self.identity[x] = self.index[ident]
        self.inverse = [self.index[_inverse(g)] for g in morphs]
        self._by_cod: dict = {}
        self._by_dom: dict = {}
        for i, g in enumerate(morphs):
            self._by_cod.setdefault(g.cod, []).append(i)
            self._by_dom.setdefault(g.dom, []).append(i)
        self.stabilized_at = None
        if topology is None:
            topology, self.stabilized_at = self._generate_topology(arity)
        self.topology = topology

    def _isos(self, x, y) -> list[Morphism]:
        M = self.M
        fx, fy = M.fiber(x), M.fiber(y)
        out = []
        if len(M.sig.sorts) != 1:
            return [Morphism(x, y, maps) for maps in _iter_sorted_isos(fx, fy)]
        s = M.sig.default_sort
        for iso in _iter_isomorphisms(fx, fy):
            out.append(Morphism(x, y, {s: iso}))
        return out

    # structure --------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.morphisms)

    def morphism(self, gid: str) -> Morphism:
        return self.morphisms[int(gid[1:])]

    def gid(self, g: Morphism) -> str:
        return self.ids[self.index[g]]

    def compose(self, i: int, j: int) -> int:
        return self.index[_compose(self.morphisms[i], self.morphisms[j])]

    def dom_map(self) -> ContinuousMap:
        return ContinuousMap(self.topology, self.base, {gid: g.dom for gid, g in zip(self.ids, self.morphisms)})

    def cod_map(self) -> ContinuousMap:
        return ContinuousMap(self.topology, self.base, {gid: g.cod for gid, g in zip(self.ids, self.morphisms)})

    def morphisms_into(self, x) -> list[int]:
        return self._by_cod.get(x, [])

    def morphisms_from(self, x) -> list[int]:
        return self._by_dom.get(x, [])

    def with_topology(self, topology: FinSpace) -> "IsoGroupoid":
        out = object.__new__(IsoGroupoid)
        out.__dict__.update(self.__dict__)
        out.topology = topology
        out.stabilized_at = None
        return out

    # topology -------------------------------------------------------------------

    def sort_tuples(self, k: int) -> list[tuple]:
        return [t for n in range(k + 1) for t in itertools.product(self.M.sig.sorts, repeat=n)]

    def _subbasis_rows(self, k: int) -> list[frozenset]:
        M = self.M
        rows: dict = {}
        for sorts in self.sort_tuples(k):
            pw = M.power(sorts)
            down: dict = {a: [] for a in pw.points}
            for e in pw.points:
                for a in pw.total.minimal_open(e):
                    down[a].append(e)
            for i, g in enumerate(self.morphisms):
                for a in pw.fiber(g.dom):
                    b = g.act(sorts, a)
                    for e in down[a]:
                        for f in down[b]:
                            rows.setdefault((sorts, e, f), set()).add(i)
        return list({frozenset(r) for r in rows.values()})

    def _space_from_rows(self, rows: Sequence[frozenset]) -> FinSpace:
        n = len(self.morphisms)
        mat = np.zeros((len(rows), n), dtype=bool)
        for r, row in enumerate(rows):
            mat[r, list(row)] = True
        nb = _kernels.minimal_neighborhoods(mat)
        up = {self.ids[i]: [self.ids[j] for j in np.flatnonzero(nb[i])] for i in range(n)}
        return FinSpace(self.ids, up)

    def _generate_topology(self, k: int):
        # dom/cod preimages are the arity-0 case of <<U -> V>>
        spaces = [self._space_from_rows(self._subbasis_rows(j)) for j in range(k + 1)]
        final = spaces[-1]
        stable = next(j for j in range(k + 1) if spaces[j] == final)
        return final, stable

    # action ------------------------------------------------------------------------

    def act(self, i: int, sorts: Sequence[str], e: tuple) -> tuple:
        return self.morphisms[i].act(sorts, e)

    def saturation(self, a: Iterable[tuple], sorts: Sequence[str], within: Iterable[int] | None = None) -> frozenset:
        allowed = None if within is None else set(within)
        out = set()
        for e in a:
            for i in self._by_dom.get(e[0], []):
                if allowed is None or i in allowed:
                    out.add(self.morphisms[i].act(sorts, e))
        return frozenset(out)

    def vaught_transform(self, w: Iterable[int], a: Iterable[tuple], sorts: Sequence[str]) -> frozenset:
        """Points ``b`` whose set ``{g in W into b's fiber : g^-1 b in A}`` is
        non-meager in the subspace ``cod^-1(x)``."""
        w = set(w)
        a = frozenset(a)
        pw = self.M.power(sorts)
        out = set()
        for x in self.base.points:
            into = self._by_cod.get(x, [])
            sub = self.topology.subspace([self.ids[i] for i in into])
            for b in pw.fiber(x):
                hits = [self.ids[i] for i in into if i in w and self.morphisms[self.inverse[i]].act(sorts, b) in a]
                if hits and not is_meager(sub, hits):
                    out.add(b)
        return frozenset(out)

    def basic_open(self, sorts_u, e, sorts_v, f) -> frozenset:
        """``<<N_e -> N_f>>`` as a set of morphism indices."""
        pu, pv = self.M.power(sorts_u), self.M.power(sorts_v)
        nu, nv = pu.total.minimal_open(e), pv.total.minimal_open(f)
        return frozenset(i for i, g in enumerate(self.morphisms) if any(g.act(sorts_u, a) in nv for a in nu if a[0] == g.dom))

    # checks -----------------------------------------------------------------------------

    def check_laws(self) -> list[str]:
        out = []
        n = len(self.morphisms)
        for i, g in enumerate(self.morphisms):
            if self.compose(self.identity[g.cod], i) != i or self.compose(i, self.identity[g.dom]) != i:
                out.append(f"identity law fails at {self.ids[i]}")
            if self.compose(i, self.inverse[i]) != self.identity[g.cod] or self.compose(self.inverse[i], i) != self.identity[g.dom]:
                out.append(f"inverse law fails at {self.ids[i]}")
        for i in range(n):
            for j in self._by_cod.get(self.morphisms[i].dom, []):
                ij = self.compose(i, j)
                for k in self._by_cod.get(self.morphisms[j].dom, []):
                    if self.compose(ij, k) != self.compose(i, self.compose(j, k)):
                        out.append(f"associativity fails at {self.ids[i]}, {self.ids[j]}, {self.ids[k]}")
        top = self.topology
        le = lambda a, b: top.leq(self.ids[a], self.ids[b])
        for i in range(n):
            for j in range(n):
                if le(i, j) and not le(self.inverse[i], self.inverse[j]):
                    out.append("inverse is not continuous")
                    break
        pairs = [(i, j) for i in range(n) for j in self._by_cod.get(self.morphisms[i].dom, [])]
        for (i, j), (k, l) in itertools.product(pairs, repeat=2):
            if le(i, k) and le(j, l) and not le(self.compose(i, j), self.compose(k, l)):
                out.append("composition is not continuous")
                break
        for name, m in (("dom", self.dom_map), ("cod", self.cod_map)):
            try:
                m()
            except ValueError:
                out.append(f"{name} is not continuous")
        return out

    def check_action(self, max_arity: int | None = None) -> list[str]:
        out = []
        k = self.arity if max_arity is None else max_arity
        for sorts in self.sort_tuples(k):
            pw = self.M.power(sorts)
            for x in self.base.points:
                for e in pw.fiber(x):
                    if self.act(self.identity[x], sorts, e) != e:
                        out.append(f"identity acts non-trivially on {e!r}")
                    for j in self._by_dom.get(x, []):
                        for i in self._by_dom.get(self.morphisms[j].cod, []):
                            if self.act(self.compose(i, j), sorts, e) != self.act(i, sorts, self.act(j, sorts, e)):
                                out.append(f"action is not functorial at {e!r}")
            # joint continuity on the Alexandrov preorders
            top = self.topology
            for i, g in enumerate(self.morphisms):
                for a in pw.fiber(g.dom):
                    ga = g.act(sorts, a)
                    nb = pw.total.minimal_open(ga)
                    for j in (int(s[1:]) for s in top.minimal_open(self.ids[i])):
                        h = self.morphisms[j]
                        if h.dom not in self.base.minimal_open(g.dom):
                            continue
                        b = pw.transport(a, h.dom)
                        if h.act(sorts, b) not in nb:
                            out.append(f"action is not continuous at {self.ids[i]}, {a!r}")
        return out

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "morphisms": [
                {"id": gid, "dom": g.dom, "cod": g.cod, "maps": {s: sorted([a, b] for a, b in m.items()) for s, m in sorted(g.maps.items())}}
                for gid, g in zip(self.ids, self.morphisms)
            ],
            "topology": self.topology.to_json(),
            "arity": self.arity,
            "stabilized_at": self.stabilized_at,
        }


def _iter_sorted_isos(fx, fy):
    """Isomorphisms of multi-sorted fibers returned as per-sort maps."""
    sig = fx.sig

    def tagged(M):
        return FinStructure(
            sig,
            {s: [(s, a) for a in M.universes[s]] for s in sig.sorts},
            {r: [tuple((st, a) for st, a in zip(sig.relations[r], t)) for t in ts] for r, ts in M.relations.items()},
            {
                f: {tuple((st, a) for st, a in zip(sig.functions[f][0], k)): (sig.functions[f][1], v) for k, v in t.items()}
                for f, t in M.functions.items()
            },
        )

    for iso in _iter_isomorphisms(tagged(fx), tagged(fy)):
        maps = {s: {} for s in sig.sorts}
        for (s, a), (_, b) in iso.items():
            maps[s][a] = b
        yield maps


def compute_iso_groupoid(M: EtaleStructure, arity: int = 1) -> IsoGroupoid:
    return IsoGroupoid(M, arity)


def check_open_groupoid(G: IsoGroupoid) -> bool:
    """``dom`` and ``cod`` send opens to opens (enough to test minimal opens)."""
    for gid in G.ids:
        nb = G.topology.minimal_open(gid)
        ms = [G.morphism(h) for h in nb]
        if not G.base.is_open({g.dom for g in ms}) or not G.base.is_open({g.cod for g in ms}):
            return False
    return True


# saturation witnesses --------------------------------------------------------------


@dataclass
class Witness:
    formula: object = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.formula is not None


Provider = Callable[[tuple, tuple], object]


class SaturationReport:
    """Witness formulas for saturations of basic opens ``N_e`` (``e`` a point of
    a fiber power of the given sorts), in free variables ``x0, x1, ...``.

    Entries are filled eagerly by certification or lazily through ``provider``.
    """

    def __init__(self, M: EtaleStructure, G: IsoGroupoid, arity: int, provider: Provider | None = None):
        self.M = M
        self.G = G
        self.arity = arity
        self.entries: dict = {}
        self.provider = provider

    def keys(self):
        return [(sorts, e) for sorts in self.G.sort_tuples(self.arity) for e in self.M.power(sorts).points]

    @property
    def complete(self) -> bool:
        return all(k in self.entries and self.entries[k].ok for k in self.keys())

    @property
    def failures(self) -> list:
        return [(k, w) for k, w in self.entries.items() if not w.ok]

    def witness(self, sorts: tuple, e: tuple):
        key = (tuple(sorts), e)
        w = self.entries.get(key)
        if w is None and self.provider is not None:
            phi = self.provider(tuple(sorts), e)
            w = Witness(phi) if phi is not None and not isinstance(phi, NotFound) else Witness(None, getattr(phi, "reason", "no witness"))
            self.entries[key] = w
        if w is None or not w.ok:
            raise GroupoidError(f"missing saturation witness for {e!r} over sorts {sorts!r}")
        return w.formula

    def witness_for_open(self, sorts: tuple, u: Iterable[tuple]):
        """Saturation of an arbitrary open set: the disjunction over its
        minimal generators."""
        u = frozenset(u)
        pw = self.M.power(sorts)
        gens = [e for e in sorted(u, key=repr) if not any(f != e and e in pw.total.minimal_open(f) and f not in pw.total.minimal_open(e) for f in u)]
        # drop generators whose neighbourhood repeats another one's
        seen, keep = set(), []
        for e in gens:
            nb = pw.total.minimal_open(e)
            if nb not in seen:
                seen.add(nb)
                keep.append(e)
        parts = tuple(dict.fromkeys(self.witness(sorts, e) for e in keep))
        if len(parts) == 1:
            return parts[0]
        return Or(parts)

    def validate(self) -> list[str]:
        out = []
        for (sorts, e), w in self.entries.items():
            if not w.ok:
                continue
            names = tuple(f"x{i}" for i in range(len(sorts)))
            got = self.M.interpret(w.formula, names, sorts).points
            want = self.G.saturation(self.M.power(sorts).total.minimal_open(e), sorts)
            if got != want:
                out.append(f"witness for {e!r} over {sorts!r} does not define the saturation")
        return out

    def to_json(self) -> dict:
        rows = []
        for (sorts, e), w in sorted(self.entries.items(), key=lambda kv: repr(kv[0])):
            row = {"sorts": list(sorts), "point": list(e)}
            if w.ok:
                row["formula"] = to_text(w.formula)
            else:
                row["failure"] = w.failure
            rows.append(row)
        return {"arity": self.arity, "complete": self.complete, "witnesses": rows}


class SearchProvider:
    """Witnesses by bounded definability search, cached by target set."""

    def __init__(self, M: EtaleStructure, G: IsoGroupoid, depth: int, alpha: int = 1):
        self.M, self.G, self.depth, self.alpha = M, G, depth, alpha
        self._cache: dict = {}

    def target(self, sorts, e) -> frozenset:
        return self.G.saturation(self.M.power(sorts).total.minimal_open(e), sorts)

    def __call__(self, sorts, e):
        tgt = self.target(sorts, e)
        return self.for_target(sorts, tgt)

    def for_target(self, sorts, tgt):
        key = (sorts, tgt)
        if key not in self._cache:
            pairs = []
            for x in self.M.base.points:
                pairs.append((self.M.fiber(x), {t[1:] for t in tgt if t[0] == x}))
            self._cache[key] = definability_search_multi(pairs, sorts, self.alpha, self.depth)
        return self._cache[key]


def certify_sigma1_saturations(
    M: EtaleStructure,
    arity: int = 1,
    depth: int = 3,
    G: IsoGroupoid | None = None,
    alpha: int = 1,
) -> SaturationReport:
    G = G or compute_iso_groupoid(M, max(arity, 1))
    prov = SearchProvider(M, G, depth, alpha)
    rep = SaturationReport(M, G, arity, provider=prov)
    keys = rep.keys()
    results = parallel_map(lambda k: prov(*k), keys)
    for k, phi in zip(keys, results):
        if isinstance(phi, NotFound) or phi is None:
            rep.entries[k] = Witness(None, getattr(phi, "reason", "no witness"))
            continue
        names = tuple(f"x{i}" for i in range(len(k[0])))
        got = M.interpret(phi, names, k[0]).points
        if got != prov.target(*k):
            rep.entries[k] = Witness(None, "witness failed re-validation")
        else:
            rep.entries[k] = Witness(phi)
    return rep


# Lopez-Escobar -----------------------------------------------------------------------


def product_code(code, u: frozenset):
    """``A x_X U`` for every leaf ``A``: differences and unions distribute."""

    def times(leaf_set):
        return frozenset(a + b[1:] for a in leaf_set for b in u if a[0] == b[0])

    return map_leaves(code, times)


def lopez_escobar(
    M: EtaleStructure,
    G: IsoGroupoid,
    report: SaturationReport,
    code,
    sorts: Sequence[str],
    max_width: int | None = None,
):
    """Formula defining ``G * A`` for the set ``A`` coded by ``code`` in the
    fiber power of ``sorts``, built by induction on the code.

    Needs a T0 base so that every non-meager transform is witnessed by a
    single basic open; widths run up to the largest fiber size.
    """
    if max_width is None:
        max_width = max((M.fiber(x).size() for x in M.base.points), default=0)
    return _le(M, G, report, code, tuple(sorts), max_width, {})


def _le(M, G, report, code, sorts, max_width, memo):
    key = (code, sorts)
    if key in memo:
        return memo[key]
    pw = M.power(sorts)
    n = len(sorts)
    if isinstance(code, OpenLeaf):
        if not code.points:
            out = BOT
        else:
            if not pw.total.is_open(code.points):
                raise GroupoidError("leaf is not open")
            out = report.witness_for_open(sorts, code.points)
    elif isinstance(code, UnionNode):
        parts = tuple(dict.fromkeys(p for p in (_le(M, G, report, c, sorts, max_width, memo) for c in code.children) if p != BOT))
        out = parts[0] if len(parts) == 1 else Or(parts)
    elif isinstance(code, DiffNode):
        left_set, _ = realize_borel(pw.total, code.left)
        disjuncts = []
        for m in range(max_width + 1):
            for tail in itertools.product(M.sig.sorts, repeat=m):
                ext = sorts + tuple(tail)
                tp = M.power(tuple(tail))
                for e in tp.points:
                    u = tp.total.minimal_open(e)
                    if not any(a[0] == b[0] for a in left_set for b in u):
                        continue
                    phi = _le(M, G, report, product_code(code.left, u), ext, max_width, memo)
                    if phi == BOT:
                        continue
                    psi = _le(M, G, report, product_code(code.right, u), ext, max_width, memo)
                    bound = [(f"x{n + i}", s) for i, s in enumerate(tail)]
                    body = phi if psi == BOT else And((phi, Not(psi)))
                    disjuncts.append(exists_many(bound, body))
        parts = tuple(dict.fromkeys(disjuncts))
        out = parts[0] if len(parts) == 1 else Or(parts)
    else:
        raise GroupoidError(f"not a Borel code: {code!r}")
    memo[key] = out
    return out
