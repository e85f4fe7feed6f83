"""Multi-sorted finitary first-order syntax.

Formulas are built from atomic relations, equality, finite ``and``/``or``,
single-variable ``exists`` and ``not``.  ``and()`` is truth and ``or()`` is
falsity; universal quantifiers and implications are abbreviations built by
the helpers at the bottom of the AST section.

Text grammar::

    phi  ::= IDENT "(" terms? ")" | term "=" term
           | "and(" phi,* ")" | "or(" phi,* ")" | "not(" phi ")"
           | "exists" IDENT ":" SORT "." phi
    term ::= IDENT | IDENT "(" terms? ")"

A bare identifier in term position is a variable; constants are written
``c()``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

KEYWORDS = frozenset({"and", "or", "not", "exists"})
DEFAULT_SORT = "S"


class ParseError(ValueError):
    """Parse failure; ``pos`` is the character offset."""

    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


class SortError(ValueError):
    pass


class FragmentError(ValueError):
    pass


# signatures ----------------------------------------------------------


class Signature:
    """Sorts, relation symbols (name -> argument sorts) and function symbols
    (name -> (argument sorts, result sort))."""

    __slots__ = ("sorts", "relations", "functions")

    def __init__(
        self,
        sorts: Iterable[str] = (DEFAULT_SORT,),
        relations: Mapping[str, Sequence[str]] | Iterable[tuple[str, Sequence[str]]] = (),
        functions: Mapping[str, tuple[Sequence[str], str]] | Iterable[tuple[str, Sequence[str], str]] = (),
    ):
        self.sorts = tuple(sorts)
        rel_items = relations.items() if isinstance(relations, Mapping) else relations
        self.relations = {name: tuple(args) for name, args in rel_items}
        if isinstance(functions, Mapping):
            fn_items = [(n, a, r) for n, (a, r) in functions.items()]
        else:
            fn_items = list(functions)
        self.functions = {name: (tuple(args), res) for name, args, res in fn_items}
        if len(set(self.sorts)) != len(self.sorts):
            raise SortError("duplicate sort names")
        if set(self.relations) & set(self.functions):
            raise SortError("relation and function symbols share a name")
        for name in itertools.chain(self.relations, self.functions):
            if name in KEYWORDS:
                raise SortError(f"symbol name {name!r} is reserved")
        known = set(self.sorts)
        for name, args in self.relations.items():
            if not set(args) <= known:
                raise SortError(f"relation {name} uses an unknown sort")
        for name, (args, res) in self.functions.items():
            if not set(args) <= known or res not in known:
                raise SortError(f"function {name} uses an unknown sort")

    @classmethod
    def relational(cls, arities: Mapping[str, int], sort: str = DEFAULT_SORT) -> "Signature":
        return cls((sort,), {r: (sort,) * n for r, n in arities.items()})

    @property
    def default_sort(self) -> str | None:
        return self.sorts[0] if len(self.sorts) == 1 else None

    def extend(self, relations=(), functions=(), sorts=()) -> "Signature":
        rels = dict(self.relations)
        rels.update(dict(relations) if isinstance(relations, Mapping) else dict(relations))
        fns = dict(self.functions)
        fns.update({n: (tuple(a), r) for n, a, r in functions})
        return Signature(self.sorts + tuple(s for s in sorts if s not in self.sorts), rels, fns)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Signature)
            and self.sorts == other.sorts
            and self.relations == other.relations
            and self.functions == other.functions
        )

    def __hash__(self) -> int:
        return hash((self.sorts, tuple(sorted(self.relations.items())), tuple(sorted(self.functions.items()))))

    def __repr__(self) -> str:
        return f"Signature(sorts={self.sorts}, relations={self.relations}, functions={self.functions})"

    def to_json(self) -> dict:
        return {
            "sorts": list(self.sorts),
            "relations": {r: list(a) for r, a in sorted(self.relations.items())},
            "functions": {f: {"args": list(a), "result": r} for f, (a, r) in sorted(self.functions.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Signature":
        return cls(
            data.get("sorts", [DEFAULT_SORT]),
            {r: tuple(a) for r, a in data.get("relations", {}).items()},
            {f: (tuple(v["args"]), v["result"]) for f, v in data.get("functions", {}).items()},
        )


# AST -----------------------------------------------------------------


class _Node:
    """Immutable syntax node with structural equality and a cached hash."""

    __slots__ = ("_hash",)
    _fields: tuple = ()

    def __init__(self, *values):
        for name, value in zip(self._fields, values):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _key(self) -> tuple:
        return tuple(getattr(self, f) for f in self._fields)

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash((type(self).__name__,) + self._key())
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return type(self) is type(other) and hash(self) == hash(other) and self._key() == other._key()

    def __repr__(self) -> str:
        args = ", ".join(repr(getattr(self, f)) for f in self._fields)
        return f"{type(self).__name__}({args})"

    def __str__(self) -> str:
        return to_text(self)

    def __reduce__(self):
        return (type(self), self._key())


class Var(_Node):
    __slots__ = ("name",)
    _fields = ("name",)

    def __init__(self, name: str):
        super().__init__(name)


class App(_Node):
    __slots__ = ("fn", "args")
    _fields = ("fn", "args")

    def __init__(self, fn: str, args: Sequence = ()):
        super().__init__(fn, tuple(_as_term(a) for a in args))


class Atomic(_Node):
    __slots__ = ("rel", "args")
    _fields = ("rel", "args")

    def __init__(self, rel: str, args: Sequence = ()):
        super().__init__(rel, tuple(_as_term(a) for a in args))


class Eq(_Node):
    __slots__ = ("left", "right")
    _fields = ("left", "right")

    def __init__(self, left, right):
        super().__init__(_as_term(left), _as_term(right))


class And(_Node):
    __slots__ = ("parts",)
    _fields = ("parts",)

    def __init__(self, parts: Iterable = ()):
        super().__init__(tuple(parts))


class Or(_Node):
    __slots__ = ("parts",)
    _fields = ("parts",)

    def __init__(self, parts: Iterable = ()):
        super().__init__(tuple(parts))


class Exists(_Node):
    __slots__ = ("var", "sort", "body")
    _fields = ("var", "sort", "body")

    def __init__(self, var: str, sort: str, body):
        super().__init__(var, sort, body)


class Not(_Node):
    __slots__ = ("body",)
    _fields = ("body",)

    def __init__(self, body):
        super().__init__(body)


Term = Var | App
Formula = Atomic | Eq | And | Or | Exists | Not

TOP = And(())
BOT = Or(())


def _as_term(t):
    return Var(t) if isinstance(t, str) else t


def exists_many(bound: Sequence[tuple[str, str]], body):
    for v, s in reversed(list(bound)):
        body = Exists(v, s, body)
    return body


def forall(var: str, sort: str, body):
    return Not(Exists(var, sort, Not(body)))


def forall_many(bound: Sequence[tuple[str, str]], body):
    """``forall bound. body`` as a single negated block of existentials."""
    if not bound:
        return body
    return Not(exists_many(bound, Not(body)))


def forall_implies(bound: Sequence[tuple[str, str]], hyp, concl):
    """``forall bound (hyp -> concl)``, written so that it is Pi_2 for Sigma_1 parts."""
    return Not(exists_many(bound, And((hyp, Not(concl)))))


def iff_all(bound: Sequence[tuple[str, str]], left, right):
    return And((forall_implies(bound, left, right), forall_implies(bound, right, left)))


def distinct(names: Sequence[str]):
    return [Not(Eq(Var(a), Var(b))) for a, b in itertools.combinations(names, 2)]


# traversal -----------------------------------------------------------


def term_vars(t) -> list[str]:
    if isinstance(t, Var):
        return [t.name]
    out = []
    for a in t.args:
        out.extend(term_vars(a))
    return out


def free_vars(phi) -> tuple[str, ...]:
    """Free variables in order of first occurrence."""
    seen: dict[str, None] = {}

    def walk(f, bound):
        if isinstance(f, Atomic):
            for a in f.args:
                for v in term_vars(a):
                    if v not in bound:
                        seen.setdefault(v)
        elif isinstance(f, Eq):
            for v in term_vars(f.left) + term_vars(f.right):
                if v not in bound:
                    seen.setdefault(v)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                walk(p, bound)
        elif isinstance(f, Not):
            walk(f.body, bound)
        elif isinstance(f, Exists):
            walk(f.body, bound | {f.var})
        else:
            raise TypeError(f"not a formula: {f!r}")

    walk(phi, frozenset())
    return tuple(seen)


def all_var_names(phi) -> set[str]:
    out = set(free_vars(phi))

    def walk(f):
        if isinstance(f, Exists):
            out.add(f.var)
            walk(f.body)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                walk(p)
        elif isinstance(f, Not):
            walk(f.body)

    walk(phi)
    return out


def subformulas(phi) -> Iterable:
    yield phi
    if isinstance(phi, (And, Or)):
        for p in phi.parts:
            yield from subformulas(p)
    elif isinstance(phi, (Not, Exists)):
        yield from subformulas(phi.body)


def size(phi) -> int:
    return sum(1 for _ in subformulas(phi))


def is_atomic(phi) -> bool:
    return isinstance(phi, (Atomic, Eq))


# sorts ---------------------------------------------------------------


def term_sort(t, sig: Signature, ctx: Mapping[str, str]) -> str:
    if isinstance(t, Var):
        if t.name in ctx:
            return ctx[t.name]
        if sig.default_sort is not None:
            return sig.default_sort
        raise SortError(f"variable {t.name} has no sort in context")
    if t.fn not in sig.functions:
        raise SortError(f"unknown function symbol in {to_text_term(t)}")
    args, res = sig.functions[t.fn]
    if len(args) != len(t.args):
        raise SortError(f"wrong number of arguments in {to_text_term(t)}")
    for want, a in zip(args, t.args):
        got = term_sort(a, sig, ctx)
        if got != want:
            raise SortError(f"argument {to_text_term(a)} of {to_text_term(t)} has sort {got}, expected {want}")
    return res


def _unify_var(ctx: dict, name: str, sort: str, where) -> None:
    prev = ctx.get(name)
    if prev is None:
        ctx[name] = sort
    elif prev != sort:
        raise SortError(f"variable {name} used at sorts {prev} and {sort} in {to_text(where)}")


def _infer_term(t, want: str | None, sig: Signature, ctx: dict, where) -> str | None:
    if isinstance(t, Var):
        if want is not None:
            _unify_var(ctx, t.name, want, where)
        return ctx.get(t.name, want)
    if t.fn not in sig.functions:
        raise SortError(f"unknown function symbol in {to_text_term(t)}")
    args, res = sig.functions[t.fn]
    if len(args) != len(t.args):
        raise SortError(f"wrong number of arguments in {to_text_term(t)}")
    for s, a in zip(args, t.args):
        _infer_term(a, s, sig, ctx, where)
    if want is not None and want != res:
        raise SortError(f"term {to_text_term(t)} has sort {res}, expected {want}")
    return res


def infer_sorts(phi, sig: Signature, ctx: Mapping[str, str] | None = None) -> dict[str, str]:
    """Check well-sortedness; return the sorts of the free variables.

    Variables not pinned down by any symbol fall back to ``ctx`` or, for a
    one-sorted signature, to its only sort.
    """
    base = dict(ctx or {})

    def walk(f, env: dict):
        if isinstance(f, Atomic):
            if f.rel not in sig.relations:
                raise SortError(f"unknown relation symbol in {to_text(f)}")
            want = sig.relations[f.rel]
            if len(want) != len(f.args):
                raise SortError(f"wrong number of arguments in {to_text(f)}")
            for s, a in zip(want, f.args):
                _infer_term(a, s, sig, env, f)
        elif isinstance(f, Eq):
            ls = _infer_term(f.left, None, sig, env, f)
            rs = _infer_term(f.right, ls, sig, env, f)
            if ls is None and rs is not None:
                _infer_term(f.left, rs, sig, env, f)
            elif ls is None and rs is None and sig.default_sort is not None:
                _infer_term(f.left, sig.default_sort, sig, env, f)
                _infer_term(f.right, sig.default_sort, sig, env, f)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                walk(p, env)
        elif isinstance(f, Not):
            walk(f.body, env)
        elif isinstance(f, Exists):
            if f.sort not in sig.sorts:
                raise SortError(f"unknown sort {f.sort} in {to_text(f)}")
            inner = dict(env)
            inner[f.var] = f.sort
            walk(f.body, inner)
            for k, v in inner.items():
                if k != f.var:
                    _unify_var(env, k, v, f)
        else:
            raise TypeError(f"not a formula: {f!r}")

    env = dict(base)
    walk(phi, env)
    out = {}
    for v in free_vars(phi):
        if v in env:
            out[v] = env[v]
        elif sig.default_sort is not None:
            out[v] = sig.default_sort
        else:
            raise SortError(f"cannot determine the sort of free variable {v}")
    return out


# classification --------------------------------------------------------


@dataclass(frozen=True)
class Complexity:
    """Least ``sigma`` with the formula Sigma_sigma and least ``pi`` with it Pi_pi.

    The label names whichever class is lower, preferring Sigma on ties.
    """

    sigma: int
    pi: int

    def is_sigma(self, level: int) -> bool:
        return self.sigma <= level

    def is_pi(self, level: int) -> bool:
        return self.pi <= level

    @property
    def label(self) -> str:
        if self.pi < self.sigma:
            return f"Pi{self.pi}"
        return f"Sigma{self.sigma}"

    def __str__(self) -> str:
        return self.label


def _levels(phi) -> tuple[int, int]:
    if isinstance(phi, (Atomic, Eq)):
        s, p = 1, 2
    elif isinstance(phi, Not):
        bs, bp = _levels(phi.body)
        s, p = bp, bs
    elif isinstance(phi, (And, Or)):
        if not phi.parts:
            s, p = 1, 1
        else:
            lv = [_levels(q) for q in phi.parts]
            s = max(a for a, _ in lv)
            p = max(b for _, b in lv)
    elif isinstance(phi, Exists):
        bs, bp = _levels(phi.body)
        s = min(bs, bp + 1)
        p = s + 1
    else:
        raise TypeError(f"not a formula: {phi!r}")
    s = min(s, p + 1)
    p = min(p, s + 1)
    return s, p


def classify(phi) -> Complexity:
    s, p = _levels(phi)
    return Complexity(s, p)


def normal_form_sigma1(phi):
    """Rewrite a Sigma_1 formula as ``or`` of ``exists``-blocks over ``and`` of atoms."""
    if classify(phi).sigma != 1:
        raise SortError(f"not a Sigma_1 formula: {to_text(phi)}")
    used = set(all_var_names(phi))

    def fresh(base: str) -> str:
        cand = base
        while cand in used:
            cand += "'"
        used.add(cand)
        return cand

    def nf(f) -> list[tuple[tuple, tuple]]:
        # list of disjuncts (bound vars with sorts, atoms)
        if isinstance(f, (Atomic, Eq)):
            return [((), (f,))]
        if isinstance(f, Or):
            return [d for p in f.parts for d in nf(p)]
        if isinstance(f, And):
            acc = [((), ())]
            for p in f.parts:
                acc = [(b1 + b2, a1 + a2) for b1, a1 in acc for b2, a2 in nf(p)]
            return acc
        if isinstance(f, Exists):
            out = []
            for b, atoms in nf(f.body):
                # every disjunct gets its own copy of the bound variable
                v = fresh(f.var)
                ren = {f.var: Var(v)}
                out.append((((v, f.sort),) + b, tuple(substitute(a, ren) for a in atoms)))
            return out
        raise SortError(f"unexpected node in Sigma_1 formula: {to_text(f)}")

    return Or(tuple(exists_many(b, And(atoms)) for b, atoms in nf(phi)))


# substitution ------------------------------------------------------------


def subst_term(t, mapping: Mapping[str, object]):
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    return App(t.fn, tuple(subst_term(a, mapping) for a in t.args))


def substitute(phi, mapping: Mapping[str, object], sig: Signature | None = None, ctx: Mapping[str, str] | None = None):
    """Capture-avoiding substitution of terms for free variables.

    With ``sig`` given, each replacement term must have the sort of the
    variable it replaces.
    """
    mapping = {k: _as_term(v) for k, v in mapping.items()}
    if sig is not None:
        sorts = infer_sorts(phi, sig, ctx)
        tctx = dict(ctx or {})
        for v, t in mapping.items():
            if v in sorts:
                got = term_sort(t, sig, tctx)
                if got != sorts[v]:
                    raise SortError(f"cannot substitute {to_text_term(t)} of sort {got} for {v} of sort {sorts[v]}")

    def go(f, m):
        if not m:
            return f
        if isinstance(f, Atomic):
            return Atomic(f.rel, tuple(subst_term(a, m) for a in f.args))
        if isinstance(f, Eq):
            return Eq(subst_term(f.left, m), subst_term(f.right, m))
        if isinstance(f, And):
            return And(tuple(go(p, m) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(go(p, m) for p in f.parts))
        if isinstance(f, Not):
            return Not(go(f.body, m))
        if isinstance(f, Exists):
            inner = {k: v for k, v in m.items() if k != f.var}
            fv = set(free_vars(f.body))
            inner = {k: v for k, v in inner.items() if k in fv}
            if not inner:
                return f
            incoming = set()
            for t in inner.values():
                incoming.update(term_vars(t))
            var = f.var
            body = f.body
            if var in incoming:
                avoid = incoming | fv | all_var_names(body) | set(inner)
                new = var
                while new in avoid:
                    new += "'"
                body = go(body, {var: Var(new)})
                var = new
            return Exists(var, f.sort, go(body, inner))
        raise TypeError(f"not a formula: {f!r}")

    return go(phi, mapping)


def rename_free(phi, names: Sequence[str]):
    """Rename the free variables (in first-occurrence order) to ``names``."""
    fv = free_vars(phi)
    if len(names) < len(fv):
        raise ValueError("not enough names")
    tmp = {v: Var(f"\x00{i}") for i, v in enumerate(fv)}
    out = substitute(phi, tmp)
    return substitute(out, {f"\x00{i}": Var(n) for i, n in enumerate(names)})


# canonical forms and fragments ------------------------------------------------


def canonical(phi, sorts: Mapping[str, str] | None = None):
    """Alpha-normal copy with free variables ``x0, x1, ...`` in first-occurrence
    order and bound variables named by binding depth.

    Returns ``(formula, free variable names in the original, their sorts)``;
    the sort tuple is empty when ``sorts`` is not supplied.
    """
    fv = free_vars(phi)
    ren = {v: f"x{i}" for i, v in enumerate(fv)}

    def term(t, env):
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        return App(t.fn, tuple(term(a, env) for a in t.args))

    def go(f, env, depth):
        if isinstance(f, Atomic):
            return Atomic(f.rel, tuple(term(a, env) for a in f.args))
        if isinstance(f, Eq):
            return Eq(term(f.left, env), term(f.right, env))
        if isinstance(f, And):
            return And(tuple(go(p, env, depth) for p in f.parts))
        if isinstance(f, Or):
            return Or(tuple(go(p, env, depth) for p in f.parts))
        if isinstance(f, Not):
            return Not(go(f.body, env, depth))
        new = f"b{depth}"
        inner = dict(env)
        inner[f.var] = new
        return Exists(new, f.sort, go(f.body, inner, depth + 1))

    out = go(phi, ren, 0)
    srt = tuple(sorts[v] for v in fv) if sorts is not None else ()
    return out, fv, srt


def _identifications(n: int) -> Iterable[tuple[int, ...]]:
    """Maps from n variables onto initial segments (restricted growth strings)."""

    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for k in range(top + 2):
            yield from rec(prefix + [k], max(top, k))

    yield from rec([], -1)


class Fragment:
    """A finite set of formulas in canonical form, each with its free-variable sorts.

    Membership is up to renaming of variables: ``key(phi)`` is the canonical
    formula together with its sort tuple.
    """

    def __init__(self, sig: Signature, entries: Iterable[tuple] = ()):
        self.sig = sig
        self._entries: dict[tuple, None] = {}
        for phi, srt in entries:
            self._entries.setdefault((phi, tuple(srt)))

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def key(self, phi, ctx: Mapping[str, str] | None = None) -> tuple:
        sorts = infer_sorts(phi, self.sig, ctx)
        c, _, srt = canonical(phi, sorts)
        return (c, srt)

    def contains_formula(self, phi, ctx=None) -> bool:
        return self.key(phi, ctx) in self._entries

    @classmethod
    def atomics(cls, sig: Signature, max_vars: int | None = None) -> "Fragment":
        """All atomic formulas whose arguments are variables, in every
        identification pattern."""
        entries = []
        patterns = []
        for r, args in sorted(sig.relations.items()):
            patterns.append((lambda ts, r=r: Atomic(r, ts), args))
        for s in sig.sorts:
            patterns.append((lambda ts: Eq(ts[0], ts[1]), (s, s)))
        for build, args in patterns:
            for ident in _identifications(len(args)):
                srts: dict[int, str] = {}
                ok = True
                for k, s in zip(ident, args):
                    if srts.setdefault(k, s) != s:
                        ok = False
                if not ok:
                    continue
                if max_vars is not None and len(srts) > max_vars:
                    continue
                phi = build(tuple(Var(f"x{k}") for k in ident))
                ctx = {f"x{k}": s for k, s in srts.items()}
                entries.append(canonical(phi, ctx)[::2])
        return cls(sig, entries)

    @classmethod
    def generate(
        cls,
        sig: Signature,
        seeds: Iterable = (),
        ctx: Mapping[str, str] | None = None,
        include_atomic: bool = True,
        identify: bool = True,
        limit: int = 5000,
    ) -> "Fragment":
        """Close ``seeds`` (plus every atomic formula) under subformulas and
        identification of free variables."""
        frag = cls.atomics(sig) if include_atomic else cls(sig)
        todo = [(phi, dict(ctx or {})) for phi in seeds]
        while todo:
            phi, c = todo.pop()
            sorts = infer_sorts(phi, sig, c)
            key = canonical(phi, sorts)[::2]
            if key in frag._entries:
                continue
            frag._entries[key] = None
            if len(frag._entries) > limit:
                raise FragmentError("fragment closure exceeded its size limit")
            cphi, srt = key
            cctx = {f"x{i}": s for i, s in enumerate(srt)}
            for sub in _immediate_subformulas(cphi):
                sub_ctx = dict(cctx)
                if isinstance(cphi, Exists):
                    sub_ctx[cphi.var] = cphi.sort
                todo.append((sub, sub_ctx))
            if identify:
                n = len(srt)
                for ident in _identifications(n):
                    if len(set(ident)) == n:
                        continue
                    if any(srt[i] != srt[ident.index(ident[i])] for i in range(n)):
                        continue
                    m = {f"x{i}": Var(f"x{ident[i]}") for i in range(n)}
                    todo.append((substitute(cphi, m), {f"x{ident[i]}": srt[i] for i in range(n)}))
        return frag

    def is_closed(self) -> bool:
        for cphi, srt in self._entries:
            cctx = {f"x{i}": s for i, s in enumerate(srt)}
            for sub in _immediate_subformulas(cphi):
                sctx = dict(cctx)
                if isinstance(cphi, Exists):
                    sctx[cphi.var] = cphi.sort
                if self.key(sub, sctx) not in self._entries:
                    return False
        return True


def _immediate_subformulas(phi):
    if isinstance(phi, (And, Or)):
        return list(phi.parts)
    if isinstance(phi, (Not, Exists)):
        return [phi.body]
    return []


def negated_atomics_fragment(sig: Signature, equality: bool = True, relations: bool = True) -> Fragment:
    """Atomic formulas plus the negations of the selected ones."""
    base = Fragment.atomics(sig)
    seeds = []
    for phi, srt in base:
        if isinstance(phi, Eq) and equality:
            seeds.append((Not(phi), srt))
        if isinstance(phi, Atomic) and relations:
            seeds.append((Not(phi), srt))
    entries = list(base) + seeds
    return Fragment(sig, entries)


# Morleyization ----------------------------------------------------------------


def _mangle(phi) -> str:
    text = re.sub(r"[^A-Za-z0-9]+", "_", to_text(phi)).strip("_")
    return text[:48] or "top"


@dataclass
class Morleyization:
    base: Signature
    signature: Signature
    axioms: list  # list of (schema name, sentence)
    symbol_of: dict  # fragment key -> relation name
    formula_of: dict  # relation name -> fragment key
    fragment: Fragment

    def translate(self, phi, ctx: Mapping[str, str] | None = None):
        """Replace maximal fragment members by their new relation symbols.

        Formulas reaching an atomic subformula outside the fragment are
        rejected rather than partially translated.
        """
        sorts = dict(ctx or {})
        sorts.update(infer_sorts(phi, self.base, ctx))

        def go(f, env):
            srt = {v: env[v] for v in free_vars(f)}
            c, fv, st = canonical(f, srt)
            name = self.symbol_of.get((c, st))
            if name is not None:
                return Atomic(name, tuple(Var(v) for v in fv))
            if isinstance(f, (Atomic, Eq)):
                if (c, st) in self.fragment:
                    return f
                raise FragmentError(f"atomic formula {to_text(f)} is outside the fragment")
            if isinstance(f, And):
                return And(tuple(go(p, env) for p in f.parts))
            if isinstance(f, Or):
                return Or(tuple(go(p, env) for p in f.parts))
            if isinstance(f, Not):
                return Not(go(f.body, env))
            inner = dict(env)
            inner[f.var] = f.sort
            return Exists(f.var, f.sort, go(f.body, inner))

        return go(phi, sorts)

    def back_translate(self, phi):
        def go(f):
            if isinstance(f, Atomic) and f.rel in self.formula_of:
                cphi, _ = self.formula_of[f.rel]
                return substitute(cphi, {f"x{i}": a for i, a in enumerate(f.args)})
            if isinstance(f, (Atomic, Eq)):
                return f
            if isinstance(f, And):
                return And(tuple(go(p) for p in f.parts))
            if isinstance(f, Or):
                return Or(tuple(go(p) for p in f.parts))
            if isinstance(f, Not):
                return Not(go(f.body))
            return Exists(f.var, f.sort, go(f.body))

        return go(phi)


def morleyize_fragment(sig: Signature, frag: Fragment, include_atomic: bool = True) -> Morleyization:
    """New relation symbol per fragment member, with the defining Pi_2 axioms.

    ``include_atomic=False`` skips symbols for atomic members (they already
    have names in ``sig``); atomic subformulas then translate to themselves.
    """
    if not frag.is_closed():
        raise FragmentError("fragment is not closed under subformulas")
    symbol_of: dict = {}
    formula_of: dict = {}
    new_rels = {}
    taken = set(sig.relations) | set(sig.functions)
    for key in sorted(frag, key=lambda k: (size(k[0]), to_text(k[0]), k[1])):
        cphi, srt = key
        if not include_atomic and is_atomic(cphi):
            continue
        name = "R_" + _mangle(cphi)
        base, k = name, 1
        while name in taken:
            name = f"{base}_{k}"
            k += 1
        taken.add(name)
        symbol_of[key] = name
        formula_of[name] = key
        new_rels[name] = srt
    new_sig = sig.extend(relations=new_rels)

    def ref(sub, ctx):
        srt = {v: ctx[v] for v in free_vars(sub)}
        c, fv, st = canonical(sub, srt)
        name = symbol_of.get((c, st))
        if name is None:
            if is_atomic(sub):
                return sub
            raise FragmentError(f"subformula {to_text(sub)} missing from the fragment")
        return Atomic(name, tuple(Var(v) for v in fv))

    axioms = []
    for key, name in symbol_of.items():
        cphi, srt = key
        xs = [(f"x{i}", s) for i, s in enumerate(srt)]
        ctx = dict(xs)
        head = Atomic(name, tuple(Var(v) for v, _ in xs))
        if is_atomic(cphi):
            axioms.append(("atomic", iff_all(xs, head, cphi)))
        elif isinstance(cphi, And):
            body = And(tuple(ref(p, ctx) for p in cphi.parts))
            axioms.append(("top" if not cphi.parts else "and", iff_all(xs, head, body)))
        elif isinstance(cphi, Or):
            body = Or(tuple(ref(p, ctx) for p in cphi.parts))
            axioms.append(("or", iff_all(xs, head, body)))
        elif isinstance(cphi, Exists):
            inner = dict(ctx)
            inner[cphi.var] = cphi.sort
            body = Exists(cphi.var, cphi.sort, ref(cphi.body, inner))
            axioms.append(("exists", iff_all(xs, head, body)))
        elif isinstance(cphi, Not):
            pos = ref(cphi.body, ctx)
            axioms.append(("not-disjoint", Not(exists_many(xs, And((pos, head))))))
            axioms.append(("not-cover", forall_implies(xs, TOP, Or((pos, head)))))
    return Morleyization(sig, new_sig, axioms, symbol_of, formula_of, frag)


# printing ------------------------------------------------------------------


def to_text_term(t) -> str:
    if isinstance(t, Var):
        return t.name
    return f"{t.fn}({', '.join(to_text_term(a) for a in t.args)})"


def to_text(phi) -> str:
    if isinstance(phi, (Var, App)):
        return to_text_term(phi)
    if isinstance(phi, Atomic):
        return f"{phi.rel}({', '.join(to_text_term(a) for a in phi.args)})"
    if isinstance(phi, Eq):
        return f"{to_text_term(phi.left)} = {to_text_term(phi.right)}"
    if isinstance(phi, And):
        return f"and({', '.join(to_text(p) for p in phi.parts)})"
    if isinstance(phi, Or):
        return f"or({', '.join(to_text(p) for p in phi.parts)})"
    if isinstance(phi, Not):
        return f"not({to_text(phi.body)})"
    if isinstance(phi, Exists):
        return f"exists {phi.var}:{phi.sort}. {to_text(phi.body)}"
    raise TypeError(f"not a formula: {phi!r}")


print_formula = to_text


# parsing -------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_']*)|(.))", re.S)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].isspace():
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            toks.append(("id", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            ch = m.group(2)
            if ch not in "(),=:.":
                raise ParseError(f"unexpected character {ch!r}", m.start(2))
            toks.append(("p", ch, m.start(2)))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self, kind: str, value: str | None = None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else ("identifier" if kind == "id" else kind)
            got = tok[1] if tok[0] != "eof" else "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", tok[2])
        self.i += 1
        return tok

    def ident(self) -> str:
        tok = self.take("id")
        if tok[1] in KEYWORDS:
            raise ParseError(f"reserved word {tok[1]!r} used as a name", tok[2])
        return tok[1]

    def formula(self):
        tok = self.peek()
        if tok[0] == "id" and tok[1] in ("and", "or"):
            self.i += 1
            self.take("p", "(")
            parts = []
            if not self._at(")"):
                parts.append(self.formula())
                while self._at(","):
                    self.i += 1
                    parts.append(self.formula())
            self.take("p", ")")
            return And(tuple(parts)) if tok[1] == "and" else Or(tuple(parts))
        if tok[0] == "id" and tok[1] == "not":
            self.i += 1
            self.take("p", "(")
            body = self.formula()
            self.take("p", ")")
            return Not(body)
        if tok[0] == "id" and tok[1] == "exists":
            self.i += 1
            var = self.ident()
            self.take("p", ":")
            sort = self.ident()
            self.take("p", ".")
            return Exists(var, sort, self.formula())
        name_tok = self.peek()
        left = self.term()
        if self._at("="):
            self.i += 1
            return Eq(left, self.term())
        if isinstance(left, App):
            return Atomic(left.fn, left.args)
        raise ParseError("expected '(' or '=' after a variable", name_tok[2])

    def _at(self, ch: str) -> bool:
        tok = self.peek()
        return tok[0] == "p" and tok[1] == ch

    def term(self):
        name = self.ident()
        if not self._at("("):
            return Var(name)
        self.i += 1
        args = []
        if not self._at(")"):
            args.append(self.term())
            while self._at(","):
                self.i += 1
                args.append(self.term())
        self.take("p", ")")
        return App(name, tuple(args))


def parse_formula(text: str, sig: Signature | None = None, ctx: Mapping[str, str] | None = None):
    p = _Parser(text)
    phi = p.formula()
    p.take("eof")
    if sig is not None:
        infer_sorts(phi, sig, ctx)
    return phi


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace to the printer's layout."""
    return to_text(parse_formula(text))


# JSON ------------------------------------------------------------------------


def term_to_json(t) -> dict:
    if isinstance(t, Var):
        return {"var": t.name}
    return {"fn": t.fn, "args": [term_to_json(a) for a in t.args]}


def term_from_json(d: Mapping):
    if "var" in d:
        return Var(d["var"])
    return App(d["fn"], tuple(term_from_json(a) for a in d.get("args", [])))


def formula_to_json(phi) -> dict:
    if isinstance(phi, Atomic):
        return {"rel": phi.rel, "args": [term_to_json(a) for a in phi.args]}
    if isinstance(phi, Eq):
        return {"eq": [term_to_json(phi.left), term_to_json(phi.right)]}
    if isinstance(phi, And):
        return {"and": [formula_to_json(p) for p in phi.parts]}
    if isinstance(phi, Or):
        return {"or": [formula_to_json(p) for p in phi.parts]}
    if isinstance(phi, Not):
        return {"not": formula_to_json(phi.body)}
    if isinstance(phi, Exists):
        return {"exists": {"var": phi.var, "sort": phi.sort, "body": formula_to_json(phi.body)}}
    raise TypeError(f"not a formula: {phi!r}")


def formula_from_json(d: Mapping):
    if "rel" in d:
        return Atomic(d["rel"], tuple(term_from_json(a) for a in d.get("args", [])))
    if "eq" in d:
        left, right = d["eq"]
        return Eq(term_from_json(left), term_from_json(right))
    if "and" in d:
        return And(tuple(formula_from_json(p) for p in d["and"]))
    if "or" in d:
        return Or(tuple(formula_from_json(p) for p in d["or"]))
    if "not" in d:
        return Not(formula_from_json(d["not"]))
    if "exists" in d:
        e = d["exists"]
        return Exists(e["var"], e["sort"], formula_from_json(e["body"]))
    raise ValueError(f"unrecognised formula node: {sorted(d)}")
