"""Imaginary sorts, étale spaces with a groupoid action, and the synthesis of
an imaginary naming a given action.

Carrier labels of derived spaces (unions, quotients, interpreted
imaginaries) are compact JSON strings so they stay unambiguous under nesting.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .etale import EtaleStructure
from .finspace import EtaleSpace, SpaceError, fiber_product as _fiber_product
from .finstruct import satisfying
from .isogpd import IsoGroupoid, SaturationReport
from .logic import (
    BOT,
    TOP,
    And,
    Eq,
    Signature,
    Var,
    classify,
    formula_from_json,
    parse_formula,
    substitute,
    to_text,
)


class ImaginaryError(ValueError):
    pass


def _code(parts) -> str:
    return json.dumps(list(parts), separators=(",", ":"))


def _decode(label: str) -> list:
    return json.loads(label)


def _names(n: int, start: int = 0) -> tuple:
    return tuple(f"x{i}" for i in range(start, start + n))


def _remap(phi, mapping: Mapping[str, str]):
    """Simultaneous renaming of free variables."""
    tmp = {a: Var(f"\x00{i}") for i, a in enumerate(mapping)}
    out = substitute(phi, tmp)
    return substitute(out, {f"\x00{i}": Var(b) for i, b in enumerate(mapping.values())})


# imaginaries ------------------------------------------------------------------------


@dataclass(frozen=True)
class Part:
    phi: object
    sorts: tuple

    @property
    def arity(self) -> int:
        return len(self.sorts)


@dataclass
class Imaginary:
    """``(disjoint union of phi_i) / (eps_ij)``.

    ``phi_i`` has free variables ``x0 .. x{n_i-1}``; ``eps_ij`` has
    ``x0 .. x{n_i+n_j-1}``, the first ``n_i`` for the left argument.
    Missing ``eps`` entries are false.
    """

    parts: tuple
    eps: dict = field(default_factory=dict)

    def epsilon(self, i: int, j: int):
        return self.eps.get((i, j), BOT)

    @property
    def is_sigma1(self) -> bool:
        fs = [p.phi for p in self.parts] + list(self.eps.values())
        return all(classify(f).is_sigma(1) for f in fs)

    # the four schemas, checked as set inclusions on each fiber
    def violations(self, fibers: Mapping) -> list[str]:
        out = []
        k = len(self.parts)
        for x, F in fibers.items():
            sat = [satisfying(p.phi, F, _names(p.arity), p.sorts) for p in self.parts]
            rel = {}
            for i, j in itertools.product(range(k), repeat=2):
                ni = self.parts[i].arity
                pts = satisfying(self.epsilon(i, j), F, _names(ni + self.parts[j].arity), self.parts[i].sorts + self.parts[j].sorts)
                rel[i, j] = {(t[:ni], t[ni:]) for t in pts}
            for (i, j), pairs in rel.items():
                if any(a not in sat[i] or b not in sat[j] for a, b in pairs):
                    out.append(f"support fails for eps[{i}][{j}] over {x!r}")
                if any((b, a) not in rel[j, i] for a, b in pairs):
                    out.append(f"symmetry fails for eps[{i}][{j}] over {x!r}")
            for i in range(k):
                if any((a, a) not in rel[i, i] for a in sat[i]):
                    out.append(f"reflexivity fails for eps[{i}][{i}] over {x!r}")
            for i, j, l in itertools.product(range(k), repeat=3):
                succ = {}
                for b, c in rel[j, l]:
                    succ.setdefault(b, []).append(c)
                if any((a, c) not in rel[i, l] for a, b in rel[i, j] for c in succ.get(b, ())):
                    out.append(f"transitivity fails for eps[{i}][{j}][{l}] over {x!r}")
        return out

    def to_json(self) -> dict:
        k = len(self.parts)
        single = all(len(set(p.sorts)) <= 1 for p in self.parts)
        sorts = []
        for p in self.parts:
            row = {"phi": to_text(p.phi), "arity": p.arity}
            if not single or p.sorts and p.sorts[0] != "S":
                row["sorts"] = list(p.sorts)
            sorts.append(row)
        return {"sorts": sorts, "eps": [[to_text(self.epsilon(i, j)) for j in range(k)] for i in range(k)]}

    @classmethod
    def from_json(cls, data: Mapping, sig: Signature | None = None) -> "Imaginary":
        default = (sig.default_sort if sig is not None else None) or "S"
        parts = []
        for row in data["sorts"]:
            phi = row["phi"]
            phi = formula_from_json(phi) if isinstance(phi, Mapping) else parse_formula(phi, sig)
            parts.append(Part(phi, tuple(row.get("sorts") or (default,) * row["arity"])))
        eps = {}
        for i, line in enumerate(data.get("eps", [])):
            for j, txt in enumerate(line):
                f = formula_from_json(txt) if isinstance(txt, Mapping) else parse_formula(txt, sig)
                if f != BOT:
                    eps[i, j] = f
        return cls(tuple(parts), eps)


def equality_imaginary(sorts: Sequence[str], phi=TOP) -> Imaginary:
    """``phi / (xs = ys)``: the definable set ``phi`` itself."""
    n = len(sorts)
    eq = And(tuple(Eq(Var(f"x{i}"), Var(f"x{n + i}")) for i in range(n)))
    both = And((phi, _remap(phi, {f"x{i}": f"x{n + i}" for i in range(n)}), eq)) if phi != TOP else eq
    return Imaginary((Part(phi, tuple(sorts)),), {(0, 0): both})


def singleton_imaginary() -> Imaginary:
    """The nullary product ``T / T``."""
    return Imaginary((Part(TOP, ()),), {(0, 0): TOP})


def imaginary_product(phi: Imaginary, psi: Imaginary) -> Imaginary:
    parts, index = [], {}
    for (i, p), (k, q) in itertools.product(enumerate(phi.parts), enumerate(psi.parts)):
        shifted = _remap(q.phi, {f"x{t}": f"x{p.arity + t}" for t in range(q.arity)})
        index[i, k] = len(parts)
        parts.append(Part(And((p.phi, shifted)), p.sorts + q.sorts))
    eps = {}
    for (i, k), a in index.items():
        for (j, l), b in index.items():
            e1, e2 = phi.epsilon(i, j), psi.epsilon(k, l)
            if e1 == BOT or e2 == BOT:
                continue
            ni, mk, nj, ml = phi.parts[i].arity, psi.parts[k].arity, phi.parts[j].arity, psi.parts[l].arity
            left = [f"x{t}" for t in range(ni + mk)]
            right = [f"x{ni + mk + t}" for t in range(nj + ml)]
            m1 = dict(zip(_names(ni + nj), left[:ni] + right[:nj]))
            m2 = dict(zip(_names(mk + ml), left[ni:] + right[nj:]))
            eps[a, b] = And((_remap(e1, m1), _remap(e2, m2)))
    return Imaginary(tuple(parts), eps)


def imaginary_subsort(phi: Imaginary, psis: Sequence, fibers: Mapping | None = None) -> Imaginary:
    """Restrict each summand to ``psi_i``; with ``fibers`` given, check that
    ``psi_i`` lies inside ``phi_i`` and is ``eps``-invariant there."""
    if len(psis) != len(phi.parts):
        raise ImaginaryError("one formula per summand is required")
    parts = tuple(Part(And((p.phi, s)), p.sorts) if s != p.phi else p for p, s in zip(phi.parts, psis))
    eps = {}
    for (i, j), e in phi.eps.items():
        ni, nj = phi.parts[i].arity, phi.parts[j].arity
        right = _remap(psis[j], {f"x{t}": f"x{ni + t}" for t in range(nj)})
        eps[i, j] = And((e, psis[i], right))
    out = Imaginary(parts, eps)
    if fibers is not None:
        for x, F in fibers.items():
            for i, (p, s) in enumerate(zip(phi.parts, psis)):
                a = satisfying(s, F, _names(p.arity), p.sorts)
                if not a <= satisfying(p.phi, F, _names(p.arity), p.sorts):
                    raise ImaginaryError(f"subsort formula {i} leaves its summand over {x!r}")
            bad = [v for v in phi.violations({x: F}) if v]
            if bad:
                raise ImaginaryError(bad[0])
            # invariance: eps-related points agree on membership
            for (i, j), e in phi.eps.items():
                ni, nj = phi.parts[i].arity, phi.parts[j].arity
                rel = satisfying(e, F, _names(ni + nj), phi.parts[i].sorts + phi.parts[j].sorts)
                si = satisfying(psis[i], F, _names(ni), phi.parts[i].sorts)
                sj = satisfying(psis[j], F, _names(nj), phi.parts[j].sorts)
                if any((t[:ni] in si) != (t[ni:] in sj) for t in rel):
                    raise ImaginaryError(f"subsort is not invariant under eps[{i}][{j}] over {x!r}")
    return out


def imaginary_disjoint_union(items: Sequence[Imaginary]) -> Imaginary:
    parts, eps, offset = [], {}, 0
    for im in items:
        parts.extend(im.parts)
        for (i, j), e in im.eps.items():
            eps[offset + i, offset + j] = e
        offset += len(im.parts)
    return Imaginary(tuple(parts), eps)


def imaginary_quotient(phi: Imaginary, eta: Mapping, fibers: Mapping | None = None) -> Imaginary:
    """Replace ``eps`` by ``eta``, which must be an equivalence on the
    interpretation containing ``eps`` (checked on ``fibers`` when given)."""
    out = Imaginary(phi.parts, dict(eta))
    if fibers is not None:
        bad = out.violations(fibers)
        if bad:
            raise ImaginaryError(bad[0])
        for x, F in fibers.items():
            for (i, j), e in phi.eps.items():
                ni, nj = phi.parts[i].arity, phi.parts[j].arity
                srt = phi.parts[i].sorts + phi.parts[j].sorts
                if not satisfying(e, F, _names(ni + nj), srt) <= satisfying(out.epsilon(i, j), F, _names(ni + nj), srt):
                    raise ImaginaryError(f"eta does not contain eps[{i}][{j}] over {x!r}")
    return out


# spaces with an action --------------------------------------------------------------


class EtaleIsoSpace:
    """An étale space over ``G.base`` with a fiberwise action of ``G``.

    ``table[(i, a)]`` is the image of ``a`` (over ``dom g_i``) under ``g_i``.
    """

    def __init__(self, carrier: EtaleSpace, G: IsoGroupoid, table: Mapping):
        if carrier.base != G.base:
            raise ImaginaryError("carrier and groupoid have different bases")
        self.carrier = carrier
        self.G = G
        self.table = dict(table)

    @classmethod
    def build(cls, carrier: EtaleSpace, G: IsoGroupoid, act: Callable[[int, tuple], tuple]) -> "EtaleIsoSpace":
        table = {}
        for i, g in enumerate(G.morphisms):
            for a in carrier.fiber(g.dom):
                table[i, a] = act(i, a)
        return cls(carrier, G, table)

    @classmethod
    def from_power(cls, G: IsoGroupoid, sorts: Sequence[str]) -> "EtaleIsoSpace":
        sorts = tuple(sorts)
        return cls.build(G.M.power(sorts), G, lambda i, a: G.act(i, sorts, a))

    @classmethod
    def trivial(cls, G: IsoGroupoid) -> "EtaleIsoSpace":
        """The base itself with one point per fiber."""
        return cls.build(EtaleSpace.identity(G.base), G, lambda i, a: (G.morphisms[i].cod,))

    def __repr__(self) -> str:
        return f"EtaleIsoSpace({len(self.carrier.points)} points over {len(self.G.base)})"

    @property
    def points(self) -> tuple:
        return self.carrier.points

    def act(self, i: int, a: tuple) -> tuple:
        return self.table[i, a]

    def orbit(self, a: tuple) -> frozenset:
        return frozenset(self.table[i, a] for i in self.G.morphisms_from(a[0]))

    def stabilizer(self, a: tuple) -> frozenset:
        return frozenset(i for i in self.G.morphisms_from(a[0]) if self.table[i, a] == a)

    def saturation(self, pts: Iterable[tuple]) -> frozenset:
        return frozenset(b for a in pts for b in self.orbit(a))

    def restrict(self, u: Iterable[tuple]) -> "EtaleIsoSpace":
        u = frozenset(u)
        if self.saturation(u) != u:
            raise ImaginaryError("restriction to a non-invariant set")
        try:
            car = self.carrier.restrict(u)
        except SpaceError as exc:
            raise ImaginaryError(str(exc)) from None
        return EtaleIsoSpace(car, self.G, {k: v for k, v in self.table.items() if k[1] in u})

    def validate(self) -> list[str]:
        out = list(self.carrier.validate())
        G, top = self.G, self.G.topology
        for x in G.base.points:
            fib = set(self.carrier.fiber(x))
            for a in fib:
                if self.table[G.identity[x], a] != a:
                    out.append(f"identity moves {a!r}")
            for i in G.morphisms_from(x):
                g = G.morphisms[i]
                img = {self.table[i, a] for a in fib}
                if img != set(self.carrier.fiber(g.cod)) or len(img) != len(fib):
                    out.append(f"{G.ids[i]} is not a bijection of fibers")
                for j in G.morphisms_from(g.cod):
                    ji = G.compose(j, i)
                    if any(self.table[ji, a] != self.table[j, self.table[i, a]] for a in fib):
                        out.append(f"action is not functorial at {G.ids[j]} . {G.ids[i]}")
        # joint continuity on the specialization preorders
        for i, g in enumerate(G.morphisms):
            for a in self.carrier.fiber(g.dom):
                nb = self.carrier.total.minimal_open(self.table[i, a])
                for gid in top.minimal_open(G.ids[i]):
                    j = int(gid[1:])
                    h = G.morphisms[j]
                    if h.dom not in G.base.minimal_open(g.dom):
                        continue
                    if self.table[j, self.carrier.transport(a, h.dom)] not in nb:
                        out.append(f"action is not continuous at {G.ids[i]}, {a!r}")
        return out


def iso_fiber_product(a: EtaleIsoSpace, b: EtaleIsoSpace) -> EtaleIsoSpace:
    car = _fiber_product(a.carrier, b.carrier)
    w = a.carrier.width

    def act(i, e):
        x = e[0]
        return a.table[i, (x,) + e[1 : 1 + w]] + b.table[i, (x,) + e[1 + w :]][1:]

    return EtaleIsoSpace.build(car, a.G, act)


def iso_disjoint_union(items: Sequence[EtaleIsoSpace]) -> EtaleIsoSpace:
    G = items[0].G
    base = G.base
    fibers = {x: [(_code([k, *e[1:]]),) for k, it in enumerate(items) for e in it.carrier.fiber(x)] for x in base.points}

    def unwrap(lab):
        k, *rest = _decode(lab)
        return k, tuple(rest)

    def move(x, y, lab):
        k, rest = unwrap(lab[0])
        return (_code([k, *items[k].carrier.transport((x,) + rest, y)[1:]]),)

    car = EtaleSpace.from_transport(base, fibers, move, 1)

    def act(i, e):
        k, rest = unwrap(e[1])
        img = items[k].table[i, (e[0],) + rest]
        return (img[0], _code([k, *img[1:]]))

    return EtaleIsoSpace.build(car, G, act)


def iso_quotient(a: EtaleIsoSpace, rel: Iterable[tuple]) -> tuple[EtaleIsoSpace, dict]:
    """Quotient by an invariant open equivalence given as pairs of points.
    Returns the quotient and the quotient map."""
    rel = set(rel)
    G, car = a.G, a.carrier
    cls: dict = {}
    for x in G.base.points:
        fib = sorted(car.fiber(x), key=repr)
        for e in fib:
            if (e, e) not in rel:
                raise ImaginaryError(f"relation is not reflexive at {e!r}")
        for e in fib:
            block = sorted((f for f in fib if (e, f) in rel), key=repr)
            for f in block:
                if (f, e) not in rel or any((f, h) not in rel for h in block):
                    raise ImaginaryError(f"relation is not an equivalence over {x!r}")
            cls[e] = block[0]

    def label(e):
        rep = cls[e]
        return _code(rep[1:]) if car.width != 1 else rep[1]

    qmap = {e: (e[0], label(e)) for e in car.points}
    members: dict = {}
    for e, q in qmap.items():
        members.setdefault(q, []).append(e)
    fibers = {x: [] for x in G.base.points}
    for q in members:
        fibers[q[0]].append(q[1:])

    def move(x, y, lab):
        imgs = {qmap[car.transport(e, y)] for e in members[(x,) + lab]}
        if len(imgs) != 1:
            raise ImaginaryError(f"relation is not open: class of {(x,) + lab!r} splits over {y!r}")
        return next(iter(imgs))[1:]

    try:
        qcar = EtaleSpace.from_transport(G.base, fibers, move, 1)
    except SpaceError as exc:
        raise ImaginaryError(str(exc)) from None

    def act(i, q):
        imgs = {qmap[a.table[i, e]] for e in members[q]}
        if len(imgs) != 1:
            raise ImaginaryError("relation is not invariant")
        return next(iter(imgs))

    return EtaleIsoSpace.build(qcar, G, act), qmap


# interpretation -----------------------------------------------------------------------


def interpret_imaginary(phi: Imaginary, M: EtaleStructure, G: IsoGroupoid, check: bool = True) -> EtaleIsoSpace:
    """Quotient of the union of the ``phi_i^M`` by the union of the ``eps_ij^M``."""
    if check:
        bad = phi.violations(M.fibers())
        if bad:
            raise ImaginaryError(bad[0])
    pieces = []
    for p in phi.parts:
        pts = M.interpret(p.phi, _names(p.arity), p.sorts).points
        pieces.append(EtaleIsoSpace.from_power(G, p.sorts).restrict(pts))
    union = iso_disjoint_union(pieces)
    rel = set()
    k = len(phi.parts)
    for i, j in itertools.product(range(k), repeat=2):
        e = phi.epsilon(i, j)
        if e == BOT:
            continue
        ni, nj = phi.parts[i].arity, phi.parts[j].arity
        for t in M.interpret(e, _names(ni + nj), phi.parts[i].sorts + phi.parts[j].sorts).points:
            rel.add(((t[0], _code([i, *t[1 : 1 + ni]])), (t[0], _code([j, *t[1 + ni :]]))))
    quotient, _ = iso_quotient(union, rel)
    return quotient


# equivariant isomorphisms ---------------------------------------------------------------


def is_equivariant_isomorphism(a: EtaleIsoSpace, b: EtaleIsoSpace, f: Mapping) -> list[str]:
    out = []
    if set(f) != set(a.points) or set(f.values()) != set(b.points) or len(set(f.values())) != len(f):
        return ["map is not a bijection"]
    if any(f[e][0] != e[0] for e in f):
        out.append("map does not preserve fibers")
    if any(f[a.table[k]] != b.table[k[0], f[k[1]]] for k in a.table):
        out.append("map is not equivariant")
    ta, tb = a.carrier.total, b.carrier.total
    for e in a.points:
        if frozenset(f[z] for z in ta.minimal_open(e)) != tb.minimal_open(f[e]):
            out.append(f"map is not a homeomorphism at {e!r}")
            break
    return out


def equivariant_isomorphism(a: EtaleIsoSpace, b: EtaleIsoSpace) -> dict | None:
    """Backtracking over orbit representatives; images are propagated along
    the action and checked against stabilizers and the topology."""
    if a.G is not b.G and a.G.base != b.G.base:
        return None
    if len(a.points) != len(b.points):
        return None
    reps, seen = [], set()
    for e in sorted(a.points, key=repr):
        if e not in seen:
            orb = a.orbit(e)
            seen |= orb
            reps.append(e)
    f: dict = {}
    used: set = set()
    G = a.G
    ta, tb = a.carrier.total, b.carrier.total

    def consistent(new):
        for e in new:
            for z in f:
                if (z in ta.minimal_open(e)) != (f[z] in tb.minimal_open(f[e])):
                    return False
                if (e in ta.minimal_open(z)) != (f[e] in tb.minimal_open(f[z])):
                    return False
        return True

    def rec(k):
        if k == len(reps):
            return True
        e = reps[k]
        stab = a.stabilizer(e)
        for c in sorted(b.carrier.fiber(e[0]), key=repr):
            if c in used or b.stabilizer(c) != stab:
                continue
            new = {a.table[i, e]: b.table[i, c] for i in G.morphisms_from(e[0])}
            if len(set(new.values())) != len(new) or set(new.values()) & used:
                continue
            f.update(new)
            used.update(new.values())
            if consistent(new) and rec(k + 1):
                return True
            for z in new:
                del f[z]
            used.difference_update(new.values())
        return False

    if not rec(0):
        return None
    return dict(f) if not is_equivariant_isomorphism(a, b, f) else None


# synthesis ----------------------------------------------------------------------------------


@dataclass
class Synthesis:
    imaginary: Imaginary
    iso: dict  # interpreted carrier point -> point of the input space
    space: EtaleIsoSpace
    sections: list  # (a, sorts, c): S = N_a, T = N_c


class SynthesisError(ImaginaryError):
    def __init__(self, msg: str, point=None):
        super().__init__(msg)
        self.point = point


def _admissible(G: IsoGroupoid, A: EtaleIsoSpace, a: tuple, sorts: tuple, c: tuple) -> bool:
    """``<<T -> T>> . S`` stays in ``S`` for ``S = N_a``, ``T = N_c``."""
    pw = G.M.power(sorts)
    nb = G.base.minimal_open(a[0])
    t = {y: pw.transport(c, y) for y in nb}
    s = {y: A.carrier.transport(a, y) for y in nb}
    for y in nb:
        for i in G.morphisms_from(y):
            z = G.morphisms[i].cod
            if z in nb and G.act(i, sorts, t[y]) == t[z] and A.table[i, s[y]] != s[z]:
                return False
    return True


def _h_table(G: IsoGroupoid, A: EtaleIsoSpace, a, sorts, c) -> dict:
    pw = G.M.power(sorts)
    h: dict = {}
    for y in G.base.minimal_open(a[0]):
        ty, sy = pw.transport(c, y), A.carrier.transport(a, y)
        for i in G.morphisms_from(y):
            d, img = G.act(i, sorts, ty), A.table[i, sy]
            if h.setdefault(d, img) != img:
                raise SynthesisError(f"h is not well defined at {d!r}", a)
    return h


def joyal_tierney_synthesize(
    M: EtaleStructure,
    G: IsoGroupoid,
    report: SaturationReport,
    A: EtaleIsoSpace,
    max_arity: int = 2,
) -> Synthesis:
    """Name ``A`` by an imaginary: cover ``A`` by images of maps
    ``h_{S,T} : G.T -> A`` with ``S = N_a``, ``T = N_c``, take the saturation
    witnesses of the ``T`` as summands and of the kernel of ``h`` as ``eps``."""
    chosen = []
    covered: set = set()
    for a in sorted(A.points, key=repr):
        if a in covered:
            continue
        hit = None
        for sorts in G.sort_tuples(max_arity):
            for c in sorted(G.M.power(sorts).fiber(a[0]), key=repr):
                if _admissible(G, A, a, sorts, c):
                    hit = (sorts, c)
                    break
            if hit:
                break
        if hit is None:
            raise SynthesisError(f"no admissible section pair up to arity {max_arity}", a)
        h = _h_table(G, A, a, *hit)
        chosen.append((a, hit[0], hit[1], h))
        covered |= set(h.values())
    parts, eps = [], {}
    for a, sorts, c, h in chosen:
        parts.append(Part(report.witness(sorts, c), sorts))
    for (i, (_, si, _, hi)), (j, (_, sj, _, hj)) in itertools.product(enumerate(chosen), repeat=2):
        kernel = frozenset((d[0],) + d[1:] + e[1:] for d in hi for e in hj if d[0] == e[0] and hi[d] == hj[e])
        if kernel:
            eps[i, j] = report.witness_for_open(si + sj, kernel)
    phi = Imaginary(tuple(parts), eps)
    space = interpret_imaginary(phi, M, G)
    iso = {}
    for q in space.points:
        # a class representative decodes to its summand and labels
        k, *labels = _decode(q[1])
        iso[q] = chosen[k][3][(q[0], *labels)]
    bad = is_equivariant_isomorphism(space, A, iso)
    if bad:
        raise SynthesisError(f"descended map fails: {bad[0]}")
    return Synthesis(phi, iso, space, [(a, s, c) for a, s, c, _ in chosen])
