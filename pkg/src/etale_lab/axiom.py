"""Pi_2 axiomatization of the fibers of an étale structure, omitting types by
finite Baire category, and the four Scott-rank conditions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .etale import EtaleStructure
from .finspace import DiffNode, OpenLeaf, UnionNode, min_dense_open, realize_borel
from .finstruct import (
    FinStructure,
    NotFound,
    all_models,
    definability_search,
    evaluate,
    is_isomorphic,
    orbits,
    satisfying,
    scott_sentence,
)
from .isogpd import IsoGroupoid, SaturationReport
from .logic import (
    BOT,
    TOP,
    And,
    App,
    Atomic,
    Eq,
    Exists,
    Not,
    Or,
    Signature,
    Var,
    classify,
    exists_many,
    forall_implies,
    forall_many,
    iff_all,
    parse_formula,
    to_text,
)

SCHEMAS = ("mono", "coidl", "hom", "cohom", "ext1", "ext2", "ex")


@dataclass
class AxiomBundle:
    axioms: list  # (schema, sentence)

    @property
    def sentences(self) -> list:
        return [s for _, s in self.axioms]

    def count(self) -> dict:
        out = {k: 0 for k in SCHEMAS}
        for k, _ in self.axioms:
            out[k] = out.get(k, 0) + 1
        return out

    def without(self, schema: str) -> "AxiomBundle":
        return AxiomBundle([(k, s) for k, s in self.axioms if k != schema])

    def to_json(self) -> list:
        return [{"schema": k, "sentence": to_text(s)} for k, s in self.axioms]

    @classmethod
    def from_json(cls, rows: Iterable[Mapping], sig: Signature | None = None) -> "AxiomBundle":
        return cls([(r["schema"], parse_formula(r["sentence"], sig)) for r in rows])


class AxiomError(ValueError):
    pass


def _xs(n: int) -> list[str]:
    return [f"x{i}" for i in range(n)]


def basic_formulas(sig: Signature, sorts: Sequence[str]) -> list:
    """Atomic formulas whose arguments are among ``x0 .. x{n-1}``, with
    function symbols only as ``f(xs) = x``."""
    xs = _xs(len(sorts))
    by_sort: dict = {}
    for v, s in zip(xs, sorts):
        by_sort.setdefault(s, []).append(Var(v))
    out = []
    for r, args in sorted(sig.relations.items()):
        for t in itertools.product(*(by_sort.get(s, []) for s in args)):
            out.append(Atomic(r, tuple(t)))
    for s, vs in sorted(by_sort.items()):
        for a, b in itertools.combinations(vs, 2):
            out.append(Eq(a, b))
    for f, (args, res) in sorted(sig.functions.items()):
        for t in itertools.product(*(by_sort.get(s, []) for s in args)):
            for y in by_sort.get(res, []):
                out.append(Eq(App(f, tuple(t)), y))
    return out


def _basis(M: EtaleStructure, sorts: tuple) -> dict:
    """Distinct minimal neighbourhoods of the fiber power, each with a
    generating point."""
    pw = M.power(sorts)
    out: dict = {}
    for e in sorted(pw.points, key=repr):
        out.setdefault(pw.total.minimal_open(e), e)
    return out


def _or(parts):
    parts = tuple(dict.fromkeys(parts))
    return parts[0] if len(parts) == 1 else Or(parts)


def pi2_axiomatize(M: EtaleStructure, report: SaturationReport, arity: int | None = None) -> AxiomBundle:
    """Instantiate the seven schemas over the basis of minimal neighbourhoods
    of each fiber power of length ``<= arity``.

    In this basis a cover of ``U`` by basic opens inside ``U`` must contain
    ``U`` itself, so each cover axiom has a single disjunct.
    """
    if arity is None:
        arity = max((M.fiber(x).size() for x in M.base.points), default=0) + 1
    sig = M.sig
    G = report.G
    tuples = G.sort_tuples(arity)
    basis = {st: _basis(M, st) for st in tuples}

    def phi(st, u):
        try:
            return report.witness(st, basis[st][u])
        except Exception as exc:
            raise AxiomError(f"missing witness for {basis[st][u]!r} over {st!r}") from exc

    axioms = []
    for st in tuples:
        xs = list(zip(_xs(len(st)), st))
        us = list(basis[st])
        for u, v in itertools.product(us, repeat=2):
            if u != v and u <= v:
                axioms.append(("mono", forall_implies(xs, phi(st, u), phi(st, v))))
        for u in us:
            axioms.append(("coidl", forall_implies(xs, phi(st, u), phi(st, u))))
        names = _xs(len(st))
        for psi in basic_formulas(sig, st):
            pts = M.interpret(psi, names, st).points
            for u in us:
                if u <= pts:
                    axioms.append(("hom", forall_implies(xs, phi(st, u), psi)))
                inside = [phi(st, v) for v in us if v <= u & pts]
                axioms.append(("cohom", forall_implies(xs, And((phi(st, u), psi)), _or(inside) if inside else BOT)))
        if len(st) < arity:
            for s in sig.sorts:
                st1 = st + (s,)
                y = f"x{len(st)}"
                pw1 = M.power(st1)
                for u1 in basis[st1]:
                    proj = frozenset(e[:-1] for e in u1)
                    inside = [phi(st, v) for v in us if v <= proj]
                    axioms.append(("ext1", iff_all(xs, Exists(y, s, phi(st1, u1)), _or(inside) if inside else BOT)))
                for u in us:
                    pre = frozenset(e for e in pw1.points if e[:-1] in u)
                    inside = [phi(st1, v) for v in basis[st1] if v <= pre]
                    axioms.append(("ext2", forall_implies(xs + [(y, s)], phi(st, u), _or(inside) if inside else BOT)))
    zero = [phi((), u) for u in basis[()]]
    axioms.append(("ex", _or(zero) if zero else BOT))
    seen, out = set(), []
    for k, s in axioms:
        if (k, s) not in seen:
            seen.add((k, s))
            out.append((k, s))
    return AxiomBundle(out)


@dataclass
class Verification:
    missing: list  # models of the bundle not isomorphic to any fiber
    unsound: list  # (base point, schema, sentence text) failing in a fiber

    @property
    def ok(self) -> bool:
        return not self.missing and not self.unsound

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "missing": [m.to_json() for m in self.missing],
            "unsound": [{"point": x, "schema": k, "sentence": t} for x, k, t in self.unsound],
        }


def verify_axiomatization(bundle: AxiomBundle, M: EtaleStructure, bound: int) -> Verification:
    fibers = M.fibers()
    unsound = []
    for x, F in fibers.items():
        for k, s in bundle.axioms:
            if not evaluate(s, F):
                unsound.append((x, k, to_text(s)))
    reps: list = []
    for F in fibers.values():
        if not any(is_isomorphic(F, R) for R in reps):
            reps.append(F)
    missing = [N for N in all_models(M.sig, bound, bundle.sentences) if not any(is_isomorphic(N, R) for R in reps)]
    return Verification(missing, unsound)


# omitting types ---------------------------------------------------------------------------


@dataclass
class DensityFailure:
    """``theta`` is Sigma_1 and satisfiable in some fiber while ``phi_index``
    and ``theta`` are never satisfied together."""

    index: int
    theta: object
    point: tuple

    def __bool__(self) -> bool:
        return False


@dataclass
class Omitted:
    point: object
    fiber: FinStructure
    comeager: list  # per formula: base points whose fiber satisfies its closure


def omitting_types(M: EtaleStructure, report: SaturationReport, formulas: Sequence[tuple]):
    """``formulas`` are ``(phi, sorts)`` pairs.  Density is tested through the
    saturation witness of every basic open; then each ``forall xs. phi`` holds
    on a comeager set of base points and any point of the intersection of
    these with the smallest dense open is returned."""
    X = M.base
    if not X.points:
        raise ValueError("empty base")
    dense_x = min_dense_open(X)
    keep = set(dense_x)
    comeager = []
    for idx, (phi, sorts) in enumerate(formulas):
        sorts = tuple(sorts)
        names = tuple(_xs(len(sorts)))
        pw = M.power(sorts)
        interp = M.interpret(phi, names, sorts).points
        for u, e in _basis(M, sorts).items():
            theta = report.witness(sorts, e)
            if not interp & M.interpret(theta, names, sorts).points:
                return DensityFailure(idx, theta, e)
        dense = min_dense_open(pw.total)
        if not dense <= interp:
            raise AxiomError(f"formula {idx} is dense but not comeager; is the report sound?")
        bad = pw.project(pw.total.full - interp)
        good = X.full - bad
        if bad & dense_x:
            raise AxiomError(f"projection of a meager set is not meager for formula {idx}")
        comeager.append(good)
        keep &= good
    x = sorted(keep, key=repr)[0]
    return Omitted(x, M.fiber(x), comeager)


def omitting_types_direct(M: EtaleStructure, formulas: Sequence[tuple]) -> list:
    """Cross-check: base points whose fiber satisfies every ``forall xs. phi``."""
    out = []
    for x in M.base.points:
        F = M.fiber(x)
        if all(
            satisfying(phi, F, _xs(len(st)), tuple(st)) == frozenset(F.tuples(tuple(st))) for phi, st in formulas
        ):
            out.append(x)
    return out


# Scott conditions -----------------------------------------------------------------------------


@dataclass
class ScottBudget:
    depth: int = 3
    max_arity: int | None = None  # defaults to the fiber size
    max_sets: int = 64
    check_models: bool = False


@dataclass
class Condition:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ScottReport:
    point: object
    alpha: int
    conditions: list

    def __getitem__(self, key: str) -> Condition:
        return next(c for c in self.conditions if c.name == key)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_json(self) -> dict:
        return {"point": self.point, "alpha": self.alpha, "conditions": [c.to_json() for c in self.conditions]}


def _enumeration(F: FinStructure) -> tuple[tuple, tuple]:
    sorts, values = [], []
    for s in F.sig.sorts:
        for a in F.universes[s]:
            sorts.append(s)
            values.append(a)
    return tuple(sorts), tuple(values)


def orbit_scott_sentence(F: FinStructure, theta):
    """``exists xs. theta & forall xs. (theta -> diagram & every element is
    some x_i)`` for ``theta`` defining the orbit of an enumeration."""
    from .finstruct import _literals

    sorts, values = _enumeration(F)
    names = _xs(len(values))
    diag = _literals(F.sig, names, sorts, values, F, negative=True)
    for r, args in sorted(F.sig.relations.items()):
        if not args:
            diag.append(Atomic(r) if () in F.relations[r] else Not(Atomic(r)))
    closure = []
    for s in F.sig.sorts:
        mine = [Var(v) for v, t in zip(names, sorts) if t == s]
        closure.append(forall_many([("z", s)], Or(tuple(Eq(Var("z"), v) for v in mine))))
    xs = list(zip(names, sorts))
    return And((exists_many(xs, theta), forall_implies(xs, theta, And((*diag, *closure)))))


def scott_conditions(M: EtaleStructure, G: IsoGroupoid, x, alpha: int, budget: ScottBudget | None = None) -> ScottReport:
    budget = budget or ScottBudget()
    F = M.fiber(x)
    sig = F.sig
    k = budget.max_arity if budget.max_arity is not None else F.size()
    conds = []

    # (i) orbits of tuples of length 1..k
    defs: dict = {}
    failed = None
    for n in range(1, k + 1):
        for st in itertools.product(sig.sorts, repeat=n):
            for orb in orbits(F, n, st):
                got = definability_search(F, orb, alpha, budget.depth, st)
                if isinstance(got, NotFound):
                    failed = (st, sorted(orb)[0])
                    break
                defs[st, orb] = got
            if failed:
                break
        if failed:
            break
    if failed:
        conds.append(Condition("orbits", False, f"no Sigma_{alpha} definition found for the orbit of {failed[1]!r}", {"tuple": failed}))
    else:
        conds.append(Condition("orbits", True, f"{len(defs)} orbits of tuples up to length {k} are Sigma_{alpha}", {"definitions": defs}))

    # (ii) Scott sentence
    sorts, values = _enumeration(F)
    theta = None
    if not failed and len(values) <= k:
        if not values:
            theta = TOP
        else:
            theta = next((phi for (st, orb), phi in defs.items() if st == sorts and values in orb), None)
    sentence = orbit_scott_sentence(F, theta) if theta is not None else scott_sentence(F)
    cls = classify(sentence)
    holds = evaluate(sentence, F)
    unique = None
    if budget.check_models:
        found = list(all_models(sig, F.size() + 1, [sentence]))
        unique = len(found) == 1 and is_isomorphic(found[0], F)
    ok = cls.is_pi(alpha + 1) and holds and unique is not False
    how = "orbit formula" if theta is not None else "atomic diagram"
    conds.append(Condition("scott-sentence", ok, f"Scott sentence from the {how} is {cls.label}", {"sentence": sentence, "class": cls.label}))

    # (iii) the orbit of x in the base
    orbit = frozenset(G.morphisms[i].cod for i in G.morphisms_from(x))
    X = M.base
    pieces = []
    for p in sorted(orbit, key=repr):
        nb = X.minimal_open(p)
        below = frozenset().union(*[X.minimal_open(q) for q in nb if p not in X.minimal_open(q)]) if nb else frozenset()
        pieces.append(DiffNode(OpenLeaf(nb), OpenLeaf(below)))
    is_open = X.is_open(orbit)
    code = OpenLeaf(orbit) if is_open else (UnionNode(tuple(pieces)) if len(pieces) != 1 else pieces[0])
    realized, rank = realize_borel(X, code)
    if realized != orbit:
        raise AxiomError("orbit code does not realize the orbit")
    is_closed = X.is_open(X.full - orbit)
    level = "open" if is_open else ("closed" if is_closed else "Delta^0_2")
    conds.append(
        Condition(
            "orbit-class",
            alpha + 1 >= 2 or is_closed,
            f"orbit is {level} in X (finite-space rank collapse: every subset of a finite space is Delta^0_2)",
            {"orbit": orbit, "code": code, "rank": rank},
        )
    )

    # (iv) every nonempty Pi_alpha set contains a nonempty Sigma_alpha set
    checked, bad = 0, None
    for n in range(1, k + 1):
        for st in itertools.product(sig.sorts, repeat=n):
            orbs = orbits(F, n, st)
            everything = frozenset().union(*orbs) if orbs else frozenset()
            for r in range(1, len(orbs) + 1):
                for combo in itertools.combinations(orbs, r):
                    if checked >= budget.max_sets:
                        break
                    target = frozenset().union(*combo)
                    rest = everything - target
                    if rest and isinstance(definability_search(F, rest, alpha, budget.depth, st), NotFound):
                        continue  # not Pi_alpha within budget
                    checked += 1
                    inner = None
                    for r2 in range(1, len(combo) + 1):
                        for sub in itertools.combinations(combo, r2):
                            got = definability_search(F, frozenset().union(*sub), alpha, budget.depth, st)
                            if not isinstance(got, NotFound):
                                inner = got
                                break
                        if inner is not None:
                            break
                    if inner is None:
                        bad = (st, target)
                        break
                if bad:
                    break
            if bad:
                break
        if bad:
            break
    if bad:
        conds.append(Condition("type-condition", False, f"a Pi_{alpha} set over {bad[0]!r} has no Sigma_{alpha} subset", {"set": bad[1]}))
    else:
        conds.append(Condition("type-condition", True, f"{checked} Pi_{alpha} sets each contain a Sigma_{alpha} set"))
    return ScottReport(x, alpha, conds)
