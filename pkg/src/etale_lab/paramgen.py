"""Generators of étale structures that parametrize finite structures.

Each generator returns a ``ParamInstance`` carrying the structure, a
saturation report whose witnesses come from closed-form formulas (checked
against brute-force saturations by ``report.validate()``), and a tag
describing how it was built.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

from .etale import EtaleStructure, from_fibers, morleyize_etale
from .finspace import FinSpace
from .finstruct import FinStructure, NotFound
from .isogpd import IsoGroupoid, SaturationReport, compute_iso_groupoid
from .logic import (
    TOP,
    And,
    App,
    Atomic,
    Eq,
    FragmentError,
    Morleyization,
    Not,
    Or,
    Signature,
    Var,
    exists_many,
    forall_many,
    negated_atomics_fragment,
    to_text_term,
)

MAX_TERMS = 8


@dataclass
class ParamInstance:
    structure: EtaleStructure
    provenance: dict
    closed_form: object = None
    morley: Morleyization | None = None
    arity: int = 2

    @cached_property
    def groupoid(self) -> IsoGroupoid:
        return compute_iso_groupoid(self.structure, self.arity)

    @cached_property
    def report(self) -> SaturationReport:
        if getattr(self.closed_form, "checked", False):
            self.closed_form.groupoid = self.groupoid
        return SaturationReport(self.structure, self.groupoid, self.arity, provider=self.closed_form)

    @property
    def name(self) -> str:
        return self.provenance.get("example", "instance")


# helpers ----------------------------------------------------------------------


def _facts(sig: Signature, elems: Sequence[str]) -> list[tuple]:
    return [(r, t) for r, args in sorted(sig.relations.items()) for t in itertools.product(elems, repeat=len(args))]


def _fiber(sig: Signature, elems, true_facts, functions=None) -> FinStructure:
    rels = {r: [] for r in sig.relations}
    for r, t in true_facts:
        rels[r].append(t)
    return FinStructure(sig, {sig.default_sort: list(elems)}, rels, functions or {})


def _require_relational(sig: Signature) -> None:
    if sig.functions or len(sig.sorts) != 1:
        raise ValueError("generator needs a single-sorted relational signature")


def _translate(morley: Morleyization | None, phi):
    if morley is None:
        return phi
    try:
        return morley.translate(phi)
    except FragmentError:
        return phi


def _morleyize(structure: EtaleStructure, mode):
    if not mode:
        return structure, None
    if mode in (True, "negations"):
        frag = negated_atomics_fragment(structure.sig)
    elif mode == "neq":
        frag = negated_atomics_fragment(structure.sig, equality=True, relations=False)
    else:
        raise ValueError(f"unknown Morleyization mode {mode!r}")
    out = morleyize_etale(structure, frag)
    return out.structure, out.morley


def _at_most(n: int, sort: str):
    """``not exists n+1 distinct elements``."""
    zs = [(f"w{i}", sort) for i in range(n + 1)]
    neq = And(tuple(Not(Eq(Var(a), Var(b))) for (a, _), (b, _) in itertools.combinations(zs, 2)))
    return Not(exists_many(zs, neq))


class _EnumeratedWitness:
    """Closed-form saturation witnesses for parametrizations whose points are
    enumerated structures ``(N, facts)``.

    For the point ``p`` and labels ``a``, the formula asserts distinct
    witnesses ``y_0 .. y_{N-1}`` for the enumeration carrying every fact that
    is constant on the minimal neighbourhood of ``p``, with ``x_i = y_{a_i}``;
    size and out-of-range clauses are added when the topology fixes them.
    """

    checked = False

    def __init__(self, structure, sig, info, sort, size_mode, morley, distinct=True, eq_classes=None):
        self.M = structure
        self.sig = sig
        self.info = info  # point -> (N, frozenset of true facts)
        self.sort = sort
        self.size_mode = size_mode
        self.morley = morley
        self.distinct = distinct
        self.eq_classes = eq_classes or {}
        self.groupoid = None  # set to check each formula against the brute-force saturation

    def __call__(self, sorts, e):
        p, labels = e[0], e[1:]
        n_elems, facts = self.info[p]
        up = self.M.base.minimal_open(p)
        elems = [str(i) for i in range(n_elems)]
        yv = {a: f"y{a}" for a in elems}
        lits = []
        for r, t in _facts(self.sig, elems):
            vals = {(r, t) in self.info[q][1] for q in up if all(int(a) < self.info[q][0] for a in t)}
            atom = Atomic(r, tuple(Var(yv[a]) for a in t))
            if vals == {True}:
                lits.append(atom)
            elif vals == {False}:
                lits.append(Not(atom))
        if self.distinct:
            for a, b in itertools.combinations(elems, 2):
                lits.append(Not(Eq(Var(yv[a]), Var(yv[b]))))
        for a, b in self.eq_classes.get(p, ()):
            lits.append(Eq(Var(yv[a]), Var(yv[b])))
        for i, lab in enumerate(labels):
            lits.append(Eq(Var(f"x{i}"), Var(yv[lab])))
        extra = []
        sizes = {self.info[q][0] for q in up}
        if self.size_mode == "discrete" and sizes == {n_elems}:
            extra.append(_at_most(n_elems, self.sort))
        # facts on elements outside the enumeration that stay false on the
        # whole neighbourhood (discrete relations over growing sizes)
        outside = self._outside_clause(up, n_elems, yv)
        if outside is not None:
            extra.append(outside)
        body = And(tuple(lits)) if len(lits) != 1 else lits[0]
        core = exists_many([(yv[a], self.sort) for a in elems], body if not extra else And((body, *extra)))
        phi = _translate(self.morley, core)
        if self.groupoid is not None:
            names = tuple(f"x{i}" for i in range(len(sorts)))
            want = self.groupoid.saturation(self.M.power(tuple(sorts)).total.minimal_open(e), tuple(sorts))
            if self.M.interpret(phi, names, tuple(sorts)).points != want:
                # merged enumerations of bounded length cannot reach every
                # larger fiber, so the saturation may stop being Sigma_1
                return NotFound(f"truncation at this size bound breaks the closed form at {e!r}", e)
        return phi

    def _outside_clause(self, up, n_elems, yv):
        bigger = [q for q in up if self.info[q][0] > n_elems]
        if not bigger or not self.sig.relations:
            return None
        # all facts touching a new element are false across the neighbourhood?
        for q in bigger:
            nq, fq = self.info[q]
            if any(any(int(a) >= n_elems for a in t) for _, t in fq):
                return None
        z = "z"
        names = [Var(v) for v in yv.values()] + [Var(z)]
        fails = []
        for r, args in sorted(self.sig.relations.items()):
            for t in itertools.product(names, repeat=len(args)):
                if Var(z) in t:
                    fails.append(Not(Atomic(r, t)))
        known = Or(tuple(Eq(Var(z), v) for v in names[:-1]))
        return forall_many([(z, self.sort)], Or((known, And(tuple(fails)))))


# fixed universe ---------------------------------------------------------------------


def gen_fixed_universe(
    sig: Signature,
    n: int,
    topology: str = "discrete",
    morleyize=False,
    arity: int = 2,
) -> ParamInstance:
    """Base: truth assignments to every fact over ``{0..n-1}``; fibers: the
    structure each assignment describes.  ``topology`` is ``discrete`` (both
    truth values open) or ``sierpinski`` (only truth open)."""
    _require_relational(sig)
    if topology not in ("discrete", "sierpinski"):
        raise ValueError(f"unknown relation topology {topology!r}")
    elems = [str(i) for i in range(n)]
    facts = _facts(sig, elems)
    points, info, fibers = [], {}, {}
    for bits in itertools.product("01", repeat=len(facts)):
        pid = "".join(bits) or "e"
        true = frozenset(f for f, b in zip(facts, bits) if b == "1")
        points.append(pid)
        info[pid] = (n, true)
        fibers[pid] = _fiber(sig, elems, true)
    sub = []
    for f in facts:
        sub.append([p for p in points if f in info[p][1]])
        if topology == "discrete":
            sub.append([p for p in points if f not in info[p][1]])
    base = FinSpace.from_subbasis(points, sub)
    M = from_fibers(sig, base, fibers)
    M2, mor = _morleyize(M, morleyize)
    wit = _EnumeratedWitness(M2, sig, info, sig.default_sort, "fixed", mor)
    prov = {"example": "fixed-universe", "n": n, "topology": topology, "morleyize": morleyize or False}
    return ParamInstance(M2, prov, wit, mor, arity)


# structures of size at most N -------------------------------------------------------


def gen_up_to_size(
    sig: Signature,
    n_max: int,
    size_topology: str = "scott",
    relation_topology: str = "sierpinski",
    morleyize=False,
    arity: int = 2,
) -> ParamInstance:
    """Base points ``(N, x)`` for every structure ``x`` on ``{0..N-1}``,
    ``N <= n_max``; sizes carry the discrete or the upper-set topology."""
    _require_relational(sig)
    if size_topology not in ("discrete", "scott"):
        raise ValueError(f"unknown size topology {size_topology!r}")
    if relation_topology not in ("discrete", "sierpinski"):
        raise ValueError(f"unknown relation topology {relation_topology!r}")
    all_elems = [str(i) for i in range(n_max)]
    points, info, fibers = [], {}, {}
    for size in range(n_max + 1):
        elems = all_elems[:size]
        facts = _facts(sig, elems)
        for bits in itertools.product("01", repeat=len(facts)):
            pid = f"{size}:{''.join(bits)}"
            true = frozenset(f for f, b in zip(facts, bits) if b == "1")
            points.append(pid)
            info[pid] = (size, true)
            fibers[pid] = _fiber(sig, elems, true)
    sub = []
    for size in range(n_max + 1):
        if size_topology == "scott":
            sub.append([p for p in points if info[p][0] >= size])
        else:
            sub.append([p for p in points if info[p][0] == size])
    for f in _facts(sig, all_elems):
        sub.append([p for p in points if f in info[p][1]])
        if relation_topology == "discrete":
            sub.append([p for p in points if f not in info[p][1]])
    base = FinSpace.from_subbasis(points, sub)
    M = from_fibers(sig, base, fibers)
    M2, mor = _morleyize(M, morleyize)
    wit = _EnumeratedWitness(M2, sig, info, sig.default_sort, size_topology, mor)
    prov = {
        "example": "up-to-size",
        "n_max": n_max,
        "size_topology": size_topology,
        "relation_topology": relation_topology,
        "morleyize": morleyize or False,
    }
    return ParamInstance(M2, prov, wit, mor, arity)


# partially enumerated ----------------------------------------------------------------


def _partitions(elems: Sequence[str]):
    """Restricted growth strings: block index per element."""
    n = len(elems)

    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))

    yield from rec([], -1)


def gen_partially_enumerated(sig: Signature, n_max: int, arity: int = 2, total: bool = False) -> ParamInstance:
    """Base points ``(N, ~, x)``: an equivalence on ``{0..N-1}`` and a
    ``~``-invariant structure; the fiber is the quotient, labelled by class
    minima.  Sizes are Scott-open, facts and ``~``-pairs Sierpinski-open.
    ``total`` fixes ``N = n_max``."""
    _require_relational(sig)
    all_elems = [str(i) for i in range(n_max)]
    points, info, fibers, blocks_of, eqs = [], {}, {}, {}, {}
    sizes = [n_max] if total else range(n_max + 1)
    for size in sizes:
        elems = all_elems[:size]
        for rgs in _partitions(elems):
            rep = {}
            for a, b in zip(elems, rgs):
                rep.setdefault(b, a)
            cls = {a: rep[b] for a, b in zip(elems, rgs)}
            reps = sorted(set(cls.values()), key=int)
            qfacts = _facts(sig, reps)
            for bits in itertools.product("01", repeat=len(qfacts)):
                qtrue = frozenset(f for f, bit in zip(qfacts, bits) if bit == "1")
                # lift to the enumeration: invariant facts
                true = frozenset((r, t) for r, t in _facts(sig, elems) if (r, tuple(cls[a] for a in t)) in qtrue)
                pid = f"{size}:{''.join(map(str, rgs))}:{''.join(bits)}"
                points.append(pid)
                info[pid] = (size, true)
                blocks_of[pid] = cls
                eqs[pid] = [(a, b) for a, b in itertools.combinations(elems, 2) if cls[a] == cls[b]]
                fibers[pid] = _fiber(sig, reps, qtrue)
    sub = []
    for size in range(n_max + 1):
        sub.append([p for p in points if info[p][0] >= size])
    for f in _facts(sig, all_elems):
        sub.append([p for p in points if f in info[p][1]])
    for a, b in itertools.combinations(all_elems, 2):
        sub.append([p for p in points if a in blocks_of[p] and b in blocks_of[p] and blocks_of[p][a] == blocks_of[p][b]])
    base = FinSpace.from_subbasis(points, sub)

    def transport(sort, x, y, lab):
        return blocks_of[y][lab]

    M = from_fibers(sig, base, fibers, transport)
    wit = _EnumeratedWitness(M, sig, info, sig.default_sort, "scott", None, distinct=False, eq_classes=eqs)
    wit.checked = True
    prov = {"example": "partially-enumerated", "n_max": n_max, "total": total}
    return ParamInstance(M, prov, wit, None, arity)


def enumerated_cover(sig: Signature, n_max: int):
    """The enumerated parametrization over the same points as
    ``gen_partially_enumerated`` together with the quotient map on total
    spaces, for checking that the quotient is open."""
    inst = gen_partially_enumerated(sig, n_max)
    M = inst.structure
    s = sig.default_sort
    fibers, info = {}, {}
    for x in M.base.points:
        size = int(x.split(":")[0])
        fibers[x] = FinStructure(sig, {s: [str(i) for i in range(size)]}, {r: [] for r in sig.relations})
    cover = from_fibers(sig, M.base, fibers)
    qmap = {}
    for x in M.base.points:
        rgs = x.split(":")[1]
        rep = {}
        for i, b in enumerate(rgs):
            rep.setdefault(b, str(i))
        for i, b in enumerate(rgs):
            qmap[(x, str(i))] = (x, rep[b])
    return cover, M, qmap


# marked structures ---------------------------------------------------------------------


def _terms(sig: Signature, k: int, depth: int) -> list:
    by_depth = [[Var(f"a{i}") for i in range(k)] + [App(c) for c, (args, _) in sorted(sig.functions.items()) if not args]]
    seen = set(by_depth[0])
    for d in range(1, depth + 1):
        prev = [t for lvl in by_depth for t in lvl]
        new = []
        for f, (args, _) in sorted(sig.functions.items()):
            if not args:
                continue
            for combo in itertools.product(prev, repeat=len(args)):
                t = App(f, combo)
                if t not in seen and any(_depth(a) == d - 1 for a in combo):
                    seen.add(t)
                    new.append(t)
        by_depth.append(new)
        if len(seen) > MAX_TERMS:
            raise ValueError(f"term set exceeds {MAX_TERMS} terms")
    return [t for lvl in by_depth for t in lvl]


def _depth(t) -> int:
    if isinstance(t, Var) or not t.args:
        return 0
    return 1 + max(_depth(a) for a in t.args)


def gen_marked(sig: Signature, k: int, depth: int, arity: int = 1) -> ParamInstance:
    """Base points: congruences on the terms of depth ``<= depth`` in
    ``a_0..a_{k-1}`` whose classes all contain a term of lower depth (so
    functions stay total on the quotient), together with invariant relation
    assignments; the fiber is the generated quotient structure."""
    if len(sig.sorts) != 1:
        raise ValueError("marked structures need a single sort")
    s = sig.default_sort
    terms = _terms(sig, k, depth)
    text = [to_text_term(t) for t in terms]
    idx = {t: i for i, t in enumerate(terms)}
    points, info, fibers, classes = [], {}, {}, {}
    for rgs in _partitions(text):
        cls = {}
        for i, b in enumerate(rgs):
            cls.setdefault(b, []).append(i)
        if not all(any(_depth(terms[j]) < depth for j in members) for members in cls.values()) and depth > 0:
            continue
        if not _is_congruence(sig, terms, idx, rgs):
            continue
        rep = {b: min(members, key=lambda j: (_depth(terms[j]), text[j])) for b, members in cls.items()}
        reps = sorted({rep[b] for b in rgs})
        labels = [text[j] for j in reps]
        lab_of = {i: text[rep[rgs[i]]] for i in range(len(terms))}
        fns = {}
        for f, (args, _) in sig.functions.items():
            table = {}
            for combo in itertools.product(reps, repeat=len(args)):
                # a member of lower depth in each class keeps the image in range
                lows = [min(cls[rgs[j]], key=lambda m: _depth(terms[m])) for j in combo]
                img = App(f, tuple(terms[j] for j in lows))
                table[tuple(text[j] for j in combo)] = lab_of[idx[img]] if img in idx else None
            if None in table.values():
                break
            fns[f] = table
        else:
            qfacts = _facts(sig, labels)
            for bits in itertools.product("01", repeat=len(qfacts)):
                qtrue = frozenset(f for f, bit in zip(qfacts, bits) if bit == "1")
                pid = f"{''.join(map(str, rgs))}:{''.join(bits)}"
                points.append(pid)
                classes[pid] = lab_of
                info[pid] = (rgs, qtrue)
                fibers[pid] = FinStructure(sig, {s: labels}, {r: [t for rr, t in qtrue if rr == r] for r in sig.relations}, fns)
    sub = []
    for i, j in itertools.combinations(range(len(terms)), 2):
        sub.append([p for p in points if info[p][0][i] == info[p][0][j]])
    for r, args in sorted(sig.relations.items()):
        for combo in itertools.product(range(len(terms)), repeat=len(args)):
            sub.append([p for p in points if (r, tuple(classes[p][j] for j in combo)) in info[p][1]])
    base = FinSpace.from_subbasis(points, sub)

    def transport(sort, x, y, lab):
        return classes[y][text.index(lab)]

    M = from_fibers(sig, base, fibers, transport)
    wit = _MarkedWitness(M, sig, terms, text, info, classes, depth)
    prov = {"example": "marked", "k": k, "depth": depth}
    return ParamInstance(M, prov, wit, None, arity)


def _is_congruence(sig, terms, idx, rgs) -> bool:
    for f, (args, _) in sig.functions.items():
        if not args:
            continue
        for combo1 in itertools.product(range(len(terms)), repeat=len(args)):
            for combo2 in itertools.product(range(len(terms)), repeat=len(args)):
                if all(rgs[a] == rgs[b] for a, b in zip(combo1, combo2)):
                    t1 = App(f, tuple(terms[a] for a in combo1))
                    t2 = App(f, tuple(terms[b] for b in combo2))
                    if t1 in idx and t2 in idx and rgs[idx[t1]] != rgs[idx[t2]]:
                        return False
    return True


class _MarkedWitness:
    """``exists a_0..a_{k-1} (x_i = t_i & facts & every element is a term)``.

    The last clause says the ``a_i`` generate the fiber; without it the
    formula is too weak once the number of generators is bounded.
    """

    def __init__(self, M, sig, terms, text, info, classes, depth):
        self.M, self.sig, self.terms, self.text = M, sig, terms, text
        self.info, self.classes, self.depth = info, classes, depth

    def __call__(self, sorts, e):
        p, labels = e[0], e[1:]
        s = self.sig.default_sort
        up = self.M.base.minimal_open(p)
        rgs, _ = self.info[p]
        lits = []
        n = len(self.terms)
        for i, j in itertools.combinations(range(n), 2):
            if all(self.info[q][0][i] == self.info[q][0][j] for q in up):
                lits.append(Eq(self.terms[i], self.terms[j]))
        for r, args in sorted(self.sig.relations.items()):
            for combo in itertools.product(range(n), repeat=len(args)):
                if all((r, tuple(self.classes[q][j] for j in combo)) in self.info[q][1] for q in up):
                    lits.append(Atomic(r, tuple(self.terms[j] for j in combo)))
        for i, lab in enumerate(labels):
            lits.append(Eq(Var(f"x{i}"), self.terms[self.text.index(lab)]))
        low = [t for t in self.terms if _depth(t) < self.depth] if self.depth > 0 else list(self.terms)
        gen = forall_many([("z", s)], Or(tuple(Eq(Var("z"), t) for t in low)))
        gens = sorted({v for t in self.terms for v in _vars_of(t)})
        body = And((*lits, gen))
        return exists_many([(g, s) for g in gens], body)


def _vars_of(t):
    if isinstance(t, Var):
        return [t.name]
    return [v for a in t.args for v in _vars_of(a)]


GENERATORS = {
    "fixed-universe": gen_fixed_universe,
    "up-to-size": gen_up_to_size,
    "partially-enumerated": gen_partially_enumerated,
    "marked": gen_marked,
}
