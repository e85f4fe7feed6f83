"""Étale structures over a finite base.

One étale space per sort over a shared base.  Fiber-power points are
``(x, a_1, ..., a_n)`` with ``a_i`` the fiber labels, so the empty context
gives the base itself.  ``interpret`` works on these sets structurally
(intersection, union, complement, projection); ``interpret_fiberwise``
evaluates in each fiber and is kept as the second route.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .finspace import (
    ContinuousMap,
    EtaleSpace,
    FinSpace,
    MapError,
    SpaceError,
    _jpt,
    _pt,
    fiber_product,
)
from .finstruct import FinStructure, satisfying
from .logic import (
    And,
    App,
    Atomic,
    Eq,
    Exists,
    Fragment,
    Morleyization,
    Not,
    Or,
    Signature,
    Var,
    free_vars,
    infer_sorts,
    morleyize_fragment,
)


class EtaleError(ValueError):
    pass


@dataclass(frozen=True)
class Interpretation:
    points: frozenset
    open: bool
    variables: tuple
    sorts: tuple


class EtaleStructure:
    """``spaces[s]`` is a width-1 étale space; relations are sets of fiber-power
    points; functions map fiber-power points to points of the result sort."""

    def __init__(
        self,
        sig: Signature,
        base: FinSpace,
        spaces: Mapping[str, EtaleSpace],
        relations: Mapping[str, Iterable[tuple]] | None = None,
        functions: Mapping[str, Mapping[tuple, tuple]] | None = None,
    ):
        self.sig = sig
        self.base = base
        self.spaces = {s: spaces[s] for s in sig.sorts}
        for s, sp in self.spaces.items():
            if sp.base != base or sp.width != 1:
                raise EtaleError(f"sort {s} is not a bundle over the shared base")
        rels = relations or {}
        self.relations = {r: frozenset(tuple(t) for t in rels.get(r, ())) for r in sig.relations}
        fns = functions or {}
        self.functions = {f: dict(fns.get(f, {})) for f in sig.functions}
        self._powers: dict = {}
        self._fibers: dict = {}

    # fiber powers ---------------------------------------------------------

    def power(self, sorts: Sequence[str]) -> EtaleSpace:
        sorts = tuple(sorts)
        if sorts not in self._powers:
            if not sorts:
                sp = EtaleSpace.identity(self.base)
            elif len(sorts) == 1:
                sp = self.spaces[sorts[0]]
            else:
                sp = fiber_product(self.power(sorts[:-1]), self.spaces[sorts[-1]])
            self._powers[sorts] = sp
        return self._powers[sorts]

    def validate(self) -> list[str]:
        out = []
        for s, sp in self.spaces.items():
            out += [f"sort {s}: {m}" for m in sp.validate()]
        for r, args in self.sig.relations.items():
            pw = self.power(args)
            pts = set(pw.points)
            if not self.relations[r] <= pts:
                out.append(f"relation {r} has points outside its fiber power")
            elif not pw.total.is_open(self.relations[r]):
                out.append(f"relation {r} is not open")
        for f, (args, res) in self.sig.functions.items():
            src, tgt = self.power(args), self.spaces[res]
            table = self.functions[f]
            missing = [e for e in src.points if e not in table]
            if missing:
                out.append(f"function {f} is undefined at {missing[0]!r}")
                continue
            if any(table[e][0] != e[0] for e in src.points):
                out.append(f"function {f} does not preserve fibers")
                continue
            try:
                ContinuousMap(src.total, tgt.total, table)
            except MapError as exc:
                out.append(f"function {f} is not continuous: {exc}")
        return out

    # fibers -----------------------------------------------------------------

    def fiber(self, x) -> FinStructure:
        if x not in self.base:
            raise EtaleError(f"unknown base point {x!r}")
        if x not in self._fibers:
            univ = {s: [e[1] for e in sp.fiber(x)] for s, sp in self.spaces.items()}
            rels = {r: [t[1:] for t in ts if t[0] == x] for r, ts in self.relations.items()}
            fns = {f: {k[1:]: v[1] for k, v in t.items() if k[0] == x} for f, t in self.functions.items()}
            self._fibers[x] = FinStructure(self.sig, univ, rels, fns)
        return self._fibers[x]

    def fibers(self) -> dict:
        return {x: self.fiber(x) for x in self.base.points}

    # interpretation -------------------------------------------------------------

    def _context(self, phi, variables, sorts):
        fv = free_vars(phi)
        if variables is None:
            variables = fv
        variables = tuple(variables)
        missing = [v for v in fv if v not in variables]
        if missing:
            raise EtaleError(f"free variables {missing} are not in the context")
        if sorts is None:
            inferred = infer_sorts(phi, self.sig)
            sorts = tuple(inferred.get(v, self.sig.default_sort) for v in variables)
        return variables, tuple(sorts)

    def interpret(self, phi, variables: Sequence[str] | None = None, sorts: Sequence[str] | None = None) -> Interpretation:
        variables, sorts = self._context(phi, variables, sorts)
        pts = self._interp(phi, variables, sorts, {})
        return Interpretation(pts, self.power(sorts).total.is_open(pts), variables, sorts)

    def interpret_fiberwise(self, phi, variables=None, sorts=None) -> frozenset:
        variables, sorts = self._context(phi, variables, sorts)
        out = set()
        for x in self.base.points:
            for t in satisfying(phi, self.fiber(x), variables, sorts):
                out.add((x,) + t)
        return frozenset(out)

    def _term(self, t, point, variables):
        if isinstance(t, Var):
            return point[1 + variables.index(t.name)]
        key = (point[0],) + tuple(self._term(a, point, variables) for a in t.args)
        return self.functions[t.fn][key][1]

    def _interp(self, phi, variables: tuple, sorts: tuple, memo: dict) -> frozenset:
        key = (phi, variables, sorts)
        hit = memo.get(key)
        if hit is None:
            hit = memo[key] = self._interp_step(phi, variables, sorts, memo)
        return hit

    def _interp_step(self, phi, variables: tuple, sorts: tuple, memo: dict) -> frozenset:
        pw = self.power(sorts)
        if isinstance(phi, Atomic):
            rel = self.relations[phi.rel]
            return frozenset(e for e in pw.points if (e[0],) + tuple(self._term(a, e, variables) for a in phi.args) in rel)
        if isinstance(phi, Eq):
            return frozenset(e for e in pw.points if self._term(phi.left, e, variables) == self._term(phi.right, e, variables))
        if isinstance(phi, And):
            acc = frozenset(pw.points)
            for p in phi.parts:
                acc &= self._interp(p, variables, sorts, memo)
            return acc
        if isinstance(phi, Or):
            acc = frozenset()
            for p in phi.parts:
                acc |= self._interp(p, variables, sorts, memo)
            return acc
        if isinstance(phi, Not):
            return frozenset(pw.points) - self._interp(phi.body, variables, sorts, memo)
        if isinstance(phi, Exists):
            keep = [i for i, v in enumerate(variables) if v != phi.var]
            inner_vars = tuple(variables[i] for i in keep) + (phi.var,)
            inner_sorts = tuple(sorts[i] for i in keep) + (phi.sort,)
            inner = self._interp(phi.body, inner_vars, inner_sorts, memo)
            # lift back: a point of the outer context may carry a value for a
            # shadowed variable that the body never sees
            projected = {(e[0],) + e[1:-1] for e in inner}
            out = []
            for e in pw.points:
                if (e[0],) + tuple(e[1 + i] for i in keep) in projected:
                    out.append(e)
            return frozenset(out)
        raise TypeError(f"not a formula: {phi!r}")

    # transport -----------------------------------------------------------------------

    def pullback(self, f: ContinuousMap) -> "EtaleStructure":
        if f.target != self.base:
            raise EtaleError("pullback map does not land in the base")
        z = f.source

        def pull(sp: EtaleSpace) -> EtaleSpace:
            fibers = {p: [e[1:] for e in sp.fiber(f(p))] for p in z.points}
            return EtaleSpace.from_transport(z, fibers, lambda a, b, lab: sp.transport((f(a),) + lab, f(b))[1:], sp.width)

        spaces = {s: pull(sp) for s, sp in self.spaces.items()}
        out = EtaleStructure(self.sig, z, spaces)
        rels = {}
        for r, args in self.sig.relations.items():
            pw = out.power(args)
            rels[r] = [e for e in pw.points if (f(e[0]),) + e[1:] in self.relations[r]]
        fns = {}
        for g, (args, res) in self.sig.functions.items():
            pw = out.power(args)
            fns[g] = {e: (e[0],) + self.functions[g][(f(e[0]),) + e[1:]][1:] for e in pw.points}
        return EtaleStructure(self.sig, z, spaces, rels, fns)

    def restrict_base(self, points: Iterable) -> "EtaleStructure":
        """Restriction to an open subspace of the base."""
        u = frozenset(points)
        if not self.base.is_open(u):
            raise EtaleError("restriction to a non-open subset of the base")
        sub = self.base.subspace(u)
        return self.pullback(ContinuousMap(sub, self.base, {p: p for p in sub.points}))

    def expand(self, sig: Signature, relations: Mapping[str, Iterable[tuple]], base: FinSpace | None = None) -> "EtaleStructure":
        """Same carriers (re-based along the identity if ``base`` is finer),
        plus new relation symbols."""
        m = self
        if base is not None and base != self.base:
            m = self.pullback(ContinuousMap(base, self.base, {p: p for p in base.points}))
        rels = dict(m.relations)
        rels.update({r: frozenset(v) for r, v in relations.items()})
        return EtaleStructure(sig, m.base, m.spaces, rels, m.functions)

    def reduct(self, sig: Signature) -> "EtaleStructure":
        return EtaleStructure(
            sig,
            self.base,
            {s: self.spaces[s] for s in sig.sorts},
            {r: self.relations[r] for r in sig.relations},
            {f: self.functions[f] for f in sig.functions},
        )

    # json --------------------------------------------------------------------------

    def to_json(self) -> dict:
        def transport_table(sp: EtaleSpace):
            rows = []
            for e in sp.points:
                for y in self.base.minimal_open(e[0]):
                    if y != e[0]:
                        rows.append([_jpt(e[0]), e[1], _jpt(y), sp.transport(e, y)[1]])
            return sorted(rows, key=repr)

        return {
            "signature": self.sig.to_json(),
            "base": self.base.to_json(),
            "sorts": {
                s: {
                    "fibers": [[_jpt(x), [e[1] for e in sp.fiber(x)]] for x in self.base.points],
                    "transport": transport_table(sp),
                }
                for s, sp in self.spaces.items()
            },
            "relations": {r: sorted([_jpt(v) for v in t] for t in ts) for r, ts in sorted(self.relations.items())},
            "functions": {
                f: sorted([[_jpt(v) for v in k], _jpt(val[1])] for k, val in t.items()) for f, t in sorted(self.functions.items())
            },
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "EtaleStructure":
        sig = Signature.from_json(data["signature"])
        base = FinSpace.from_json(data["base"])
        spaces = {}
        for s, d in data["sorts"].items():
            fibers = {_pt(x): [(_pt(l),) for l in labs] for x, labs in d["fibers"]}
            table = {(_pt(x), _pt(l), _pt(y)): _pt(m) for x, l, y, m in d["transport"]}

            def move(x, y, lab, table=table):
                if x == y:
                    return lab
                return (table[(x, lab[0], y)],)

            spaces[s] = EtaleSpace.from_transport(base, fibers, move, 1)
        rels = {r: [tuple(_pt(v) for v in t) for t in ts] for r, ts in data.get("relations", {}).items()}
        fns = {}
        for f, rows in data.get("functions", {}).items():
            fns[f] = {tuple(_pt(v) for v in k): (_pt(k[0]), _pt(val)) for k, val in rows}
        return cls(sig, base, spaces, rels, fns)

    def __repr__(self) -> str:
        return f"EtaleStructure({len(self.base)} base points, sorts {list(self.spaces)})"


def from_fibers(sig: Signature, base: FinSpace, fibers: Mapping, transport=None, extra_opens=None) -> EtaleStructure:
    """Build an étale structure from fiber structures and label transport.

    ``transport(sort, x, y, label)`` gives the image of ``label`` when moving
    from ``x`` up to ``y``; the default keeps labels fixed.
    """
    if transport is None:
        transport = lambda s, x, y, lab: lab
    spaces = {}
    for s in sig.sorts:
        fib = {x: [(a,) for a in fibers[x].universes[s]] for x in base.points}
        spaces[s] = EtaleSpace.from_transport(base, fib, lambda x, y, lab, s=s: (transport(s, x, y, lab[0]),), 1)
    rels = {r: [(x,) + t for x in base.points for t in fibers[x].relations[r]] for r in sig.relations}
    fns = {
        f: {(x,) + k: (x, v) for x in base.points for k, v in fibers[x].functions[f].items()} for f in sig.functions
    }
    return EtaleStructure(sig, base, spaces, rels, fns)


def trivial_structure(base: FinSpace, sig: Signature | None = None) -> EtaleStructure:
    """Every sort is the empty bundle; with the empty signature this is X -> X."""
    sig = sig or Signature((), {}, {})
    return EtaleStructure(sig, base, {s: EtaleSpace.from_transport(base, {}, lambda x, y, l: l, 1) for s in sig.sorts})


@dataclass
class MorleyizedEtale:
    structure: EtaleStructure
    morley: Morleyization
    added_opens: tuple


def morleyize_etale(M: EtaleStructure, frag: Fragment) -> MorleyizedEtale:
    """Refine the base by the projections ``p(U & phi^M)`` for basic opens ``U``
    of each fiber power and each non-atomic ``phi`` in ``frag``; interpret
    the new symbols as ``phi^M`` over the refined base."""
    mor = morleyize_fragment(M.sig, frag, include_atomic=False)
    subbasis = list(M.base.basis())
    interps = {}
    added = []
    for name, (cphi, srt) in sorted(mor.formula_of.items()):
        names = tuple(f"x{i}" for i in range(len(srt)))
        pts = M.interpret(cphi, names, srt).points
        interps[name] = pts
        pw = M.power(srt)
        for e in pw.points:
            u = pw.total.minimal_open(e) & pts
            if u:
                img = pw.project(u)
                if img not in subbasis:
                    subbasis.append(img)
                    added.append(img)
    new_base = FinSpace.from_subbasis(M.base.points, subbasis)
    out = M.expand(mor.signature, interps, base=new_base)
    return MorleyizedEtale(out, mor, tuple(added))
