"""Finite multi-sorted structures.

Evaluation compiles a formula once into nested closures (cached by formula)
and runs them against any structure.  Model enumeration grounds the axioms
over each candidate universe and backtracks over relation tuples, which
keeps Morleyized signatures tractable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

from .logic import (
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
    forall_many,
    free_vars,
    infer_sorts,
    is_atomic,
    to_text,
)

Element = Hashable


class StructureError(ValueError):
    pass


class FinStructure:
    __slots__ = ("sig", "universes", "relations", "functions", "_hash")

    def __init__(
        self,
        sig: Signature,
        universes: Mapping[str, Iterable[Element]],
        relations: Mapping[str, Iterable[Sequence[Element]]] | None = None,
        functions: Mapping[str, Mapping] | None = None,
    ):
        self.sig = sig
        self.universes = {s: tuple(universes.get(s, ())) for s in sig.sorts}
        rels = relations or {}
        self.relations = {r: frozenset(tuple(t) for t in rels.get(r, ())) for r in sig.relations}
        fns = functions or {}
        self.functions = {}
        for f, (args, _res) in sig.functions.items():
            table = fns.get(f, {})
            self.functions[f] = {(k if isinstance(k, tuple) else (k,)): v for k, v in table.items()}
        self._hash = None
        self._check()

    def _check(self) -> None:
        elems = {s: set(u) for s, u in self.universes.items()}
        for s, u in self.universes.items():
            if len(set(u)) != len(u):
                raise StructureError(f"universe of sort {s} repeats an element")
        for r, args in self.sig.relations.items():
            for t in self.relations[r]:
                if len(t) != len(args) or any(a not in elems[s] for a, s in zip(t, args)):
                    raise StructureError(f"tuple {t!r} of {r} is outside the universe")
        for f, (args, res) in self.sig.functions.items():
            table = self.functions[f]
            for key in itertools.product(*(self.universes[s] for s in args)):
                if key not in table:
                    raise StructureError(f"function {f} is not total: missing {key!r}")
                if table[key] not in elems[res]:
                    raise StructureError(f"function {f} leaves its result sort at {key!r}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FinStructure)
            and self.sig == other.sig
            and self.universes == other.universes
            and self.relations == other.relations
            and self.functions == other.functions
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(
                (
                    tuple(self.universes.items()),
                    tuple(sorted(self.relations.items())),
                    tuple((f, frozenset(t.items())) for f, t in sorted(self.functions.items())),
                )
            )
        return self._hash

    def __repr__(self) -> str:
        sizes = ", ".join(f"{s}:{len(u)}" for s, u in self.universes.items())
        return f"FinStructure({sizes})"

    def size(self, sort: str | None = None) -> int:
        if sort is not None:
            return len(self.universes[sort])
        return sum(len(u) for u in self.universes.values())

    def elements(self) -> list[tuple[str, Element]]:
        return [(s, a) for s in self.sig.sorts for a in self.universes[s]]

    def tuples(self, sorts: Sequence[str]) -> Iterator[tuple]:
        return itertools.product(*(self.universes[s] for s in sorts))

    def reduct(self, sig: Signature) -> "FinStructure":
        return FinStructure(
            sig,
            {s: self.universes[s] for s in sig.sorts},
            {r: self.relations[r] for r in sig.relations},
            {f: self.functions[f] for f in sig.functions},
        )

    def rename(self, mapping: Mapping[Element, Element]) -> "FinStructure":
        m = lambda a: mapping.get(a, a)
        return FinStructure(
            self.sig,
            {s: [m(a) for a in u] for s, u in self.universes.items()},
            {r: [tuple(m(a) for a in t) for t in ts] for r, ts in self.relations.items()},
            {f: {tuple(m(a) for a in k): m(v) for k, v in t.items()} for f, t in self.functions.items()},
        )

    def to_json(self) -> dict:
        def key(k):
            return ",".join(str(a) for a in k)

        return {
            "sorts": {s: [str(a) for a in u] for s, u in self.universes.items()},
            "relations": {r: sorted([str(a) for a in t] for t in ts) for r, ts in sorted(self.relations.items())},
            "functions": {f: {key(k): str(v) for k, v in sorted(t.items())} for f, t in sorted(self.functions.items())},
        }

    @classmethod
    def from_json(cls, sig: Signature, data: Mapping) -> "FinStructure":
        fns = {}
        for f, table in data.get("functions", {}).items():
            fns[f] = {tuple(k.split(",")) if k else (): v for k, v in table.items()}
        return cls(sig, data.get("sorts", {}), {r: [tuple(t) for t in ts] for r, ts in data.get("relations", {}).items()}, fns)


# evaluation ---------------------------------------------------------------

_MISSING = object()


def _compile_term(t):
    if isinstance(t, Var):
        name = t.name
        return lambda M, env: env[name]
    fn = t.fn
    args = tuple(_compile_term(a) for a in t.args)
    return lambda M, env: M.functions[fn][tuple(a(M, env) for a in args)]


@lru_cache(maxsize=200_000)
def compile_formula(phi):
    """Return ``f(M, env) -> bool``; ``env`` is a mutable dict of variable values."""
    if isinstance(phi, Atomic):
        rel = phi.rel
        if all(isinstance(a, Var) for a in phi.args):
            names = tuple(a.name for a in phi.args)
            if len(names) == 1:
                n0 = names[0]
                return lambda M, env: (env[n0],) in M.relations[rel]
            if len(names) == 2:
                n0, n1 = names
                return lambda M, env: (env[n0], env[n1]) in M.relations[rel]
            return lambda M, env: tuple(env[n] for n in names) in M.relations[rel]
        args = tuple(_compile_term(a) for a in phi.args)
        return lambda M, env: tuple(a(M, env) for a in args) in M.relations[rel]
    if isinstance(phi, Eq):
        if isinstance(phi.left, Var) and isinstance(phi.right, Var):
            l, r = phi.left.name, phi.right.name
            return lambda M, env: env[l] == env[r]
        lt, rt = _compile_term(phi.left), _compile_term(phi.right)
        return lambda M, env: lt(M, env) == rt(M, env)
    if isinstance(phi, And):
        parts = tuple(compile_formula(p) for p in phi.parts)
        if len(parts) == 2:
            p0, p1 = parts
            return lambda M, env: p0(M, env) and p1(M, env)
        return lambda M, env: all(p(M, env) for p in parts)
    if isinstance(phi, Or):
        parts = tuple(compile_formula(p) for p in phi.parts)
        return lambda M, env: any(p(M, env) for p in parts)
    if isinstance(phi, Not):
        body = compile_formula(phi.body)
        return lambda M, env: not body(M, env)
    if isinstance(phi, Exists):
        var, sort = phi.var, phi.sort
        body = compile_formula(phi.body)

        def ex(M, env):
            saved = env.get(var, _MISSING)
            found = False
            for a in M.universes[sort]:
                env[var] = a
                if body(M, env):
                    found = True
                    break
            if saved is _MISSING:
                env.pop(var, None)
            else:
                env[var] = saved
            return found

        return ex
    raise TypeError(f"not a formula: {phi!r}")


# grounding -------------------------------------------------------------------
# Propositional formulas over relation slots: True, False, an int slot index,
# ("!", f), ("&", parts) or ("|", parts) with ``parts`` a frozenset.


def _p_not(f):
    if f is True or f is False:
        return not f
    if type(f) is tuple and f[0] == "!":
        return f[1]
    return ("!", f)


def _p_junction(op, parts):
    unit, zero = (True, False) if op == "&" else (False, True)
    flat = set()
    for q in parts:
        if q is zero:
            return zero
        if q is unit:
            continue
        if type(q) is tuple and q[0] == op:
            flat |= q[1]
        else:
            flat.add(q)
    if not flat:
        return unit
    if len(flat) == 1:
        return next(iter(flat))
    return (op, frozenset(flat))


@lru_cache(maxsize=50_000)
def _free(phi) -> tuple:
    return free_vars(phi)


class _Grounder:
    """Grounds sentences over fixed universes and function tables."""

    def __init__(self, universes, functions, slot_index):
        self.universes = universes
        self.functions = functions
        self.slot = slot_index
        self.memo: dict = {}

    def term(self, t, env):
        if isinstance(t, Var):
            return env[t.name]
        return self.functions[t.fn][tuple(self.term(a, env) for a in t.args)]

    def __call__(self, phi, env):
        key = (phi, tuple(env[v] for v in _free(phi)))
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = self._ground(phi, env)
        return hit

    def _ground(self, phi, env):
        if isinstance(phi, Atomic):
            return self.slot[(phi.rel, tuple(self.term(a, env) for a in phi.args))]
        if isinstance(phi, Eq):
            return self.term(phi.left, env) == self.term(phi.right, env)
        if isinstance(phi, Not):
            return _p_not(self(phi.body, env))
        if isinstance(phi, (And, Or)):
            op, stop = ("&", False) if isinstance(phi, And) else ("|", True)
            parts = []
            for q in phi.parts:
                g = self(q, env)
                if g is stop:
                    return stop
                parts.append(g)
            return _p_junction(op, parts)
        if isinstance(phi, Exists):
            parts = []
            for a in self.universes[phi.sort]:
                g = self(phi.body, {**env, phi.var: a})
                if g is True:
                    return True
                parts.append(g)
            return _p_junction("|", parts)
        raise TypeError(f"not a formula: {phi!r}")


def _p_support(f, out: set) -> set:
    if type(f) is int:
        out.add(f)
    elif type(f) is tuple:
        if f[0] == "!":
            _p_support(f[1], out)
        else:
            for q in f[1]:
                _p_support(q, out)
    return out


def _p_eval(f, val) -> bool:
    if f is True or f is False:
        return f
    if type(f) is int:
        return val[f]
    op = f[0]
    if op == "!":
        return not _p_eval(f[1], val)
    if op == "&":
        return all(_p_eval(q, val) for q in f[1])
    return any(_p_eval(q, val) for q in f[1])


def _conjuncts(f):
    if type(f) is tuple and f[0] == "&":
        return list(f[1])
    # a negated disjunction is a conjunction of negations
    if type(f) is tuple and f[0] == "!" and type(f[1]) is tuple and f[1][0] == "|":
        return [_p_not(q) for q in f[1][1]]
    return [f]


_TABLE_LIMIT = 12


def _constraints(props):
    """Split grounded sentences into ``(trigger, check)`` pairs, where
    ``check(val)`` may run once every slot up to ``trigger`` is set.
    Constraints over the same slots are merged into one table, which is then
    checked prefix by prefix."""
    seen = set()
    tables: dict = {}
    wide = []
    stack = list(props)
    while stack:
        f = stack.pop()
        if f is True or f in seen:
            continue
        seen.add(f)
        parts = _conjuncts(f)
        if len(parts) > 1:
            stack.extend(parts)
            continue
        if f is False:
            return None
        sup = tuple(sorted(_p_support(f, set())))
        if len(sup) > _TABLE_LIMIT:
            wide.append((sup[-1], lambda val, f=f: _p_eval(f, val)))
            continue
        allowed = set()
        val = {}
        for bits in itertools.product((False, True), repeat=len(sup)):
            val.update(zip(sup, bits))
            if _p_eval(f, val):
                allowed.add(bits)
        tables[sup] = tables[sup] & allowed if sup in tables else allowed
    out = []
    for sup, allowed in tables.items():
        if not allowed:
            return None
        # every slot of the table checks that the decided prefix extends
        for j, trig in enumerate(sup):
            pre = frozenset(bits[: j + 1] for bits in allowed)
            if len(pre) < 2 ** (j + 1):
                out.append((trig, lambda val, head=sup[: j + 1], pre=pre: tuple([val[i] for i in head]) in pre))
    return out + wide


def evaluate(phi, M: FinStructure, env: Mapping[str, Element] | None = None) -> bool:
    env = dict(env or {})
    missing = [v for v in free_vars(phi) if v not in env]
    if missing:
        raise StructureError(f"no value for free variables {missing}")
    return compile_formula(phi)(M, env)


def satisfying(phi, M: FinStructure, variables: Sequence[str], sorts: Sequence[str]) -> frozenset:
    """``phi^M`` as the set of tuples for ``variables`` (of the given sorts)."""
    f = compile_formula(phi)
    out = []
    env: dict = {}
    for t in M.tuples(sorts):
        env.update(zip(variables, t))
        if f(M, env):
            out.append(t)
    return frozenset(out)


def models(M: FinStructure, sentences: Iterable) -> bool:
    return all(compile_formula(s)(M, {}) for s in sentences)


# isomorphism ----------------------------------------------------------------


def _degree_profile(M: FinStructure) -> dict:
    prof = {(s, a): [] for s, a in M.elements()}
    for r in sorted(M.relations):
        args = M.sig.relations[r]
        counts: dict = {}
        for t in M.relations[r]:
            # position and diagonal pattern: loops differ from ordinary edges
            pattern = tuple(t.index(a) for a in t)
            for i, a in enumerate(t):
                key = (args[i], a)
                c = counts.setdefault(key, {})
                c[(i, pattern)] = c.get((i, pattern), 0) + 1
        for e in prof:
            prof[e].append(tuple(sorted(counts.get(e, {}).items())))
    for f in sorted(M.functions):
        args, res = M.sig.functions[f]
        pre: dict = {}
        fixed = set()
        for k, v in M.functions[f].items():
            pre[v] = pre.get(v, 0) + 1
            if len(k) == 1 and k[0] == v and args[0] == res:
                fixed.add(v)
        for s, a in prof:
            prof[(s, a)].append((pre.get(a, 0) if s == res else 0, s == res and a in fixed))
    return {k: tuple(v) for k, v in prof.items()}


def invariant(M: FinStructure) -> tuple:
    prof = _degree_profile(M)
    return (
        tuple(len(M.universes[s]) for s in M.sig.sorts),
        tuple(len(M.relations[r]) for r in sorted(M.relations)),
        tuple(sorted((s, p) for (s, _), p in prof.items())),
    )


def _iter_isomorphisms(M: FinStructure, N: FinStructure, limit: int | None = None):
    if M.sig != N.sig:
        raise StructureError("structures have different signatures")
    for s in M.sig.sorts:
        if len(M.universes[s]) != len(N.universes[s]):
            return
    sig = M.sig
    for r in sig.relations:
        if len(M.relations[r]) != len(N.relations[r]):
            return
    pm, pn = _degree_profile(M), _degree_profile(N)
    order = M.elements()
    cand = {}
    for s, a in order:
        cand[(s, a)] = [b for b in N.universes[s] if pn[(s, b)] == pm[(s, a)]]
        if not cand[(s, a)]:
            return
    order.sort(key=lambda e: len(cand[e]))
    rel_items = [(r, args) for r, args in sig.relations.items()]
    fn_items = [(f, args, res) for f, (args, res) in sig.functions.items()]
    fwd: dict = {}
    used = {s: set() for s in sig.sorts}
    sort_of = {a: s for s, a in order}
    count = 0

    def consistent(a) -> bool:
        for r, args in rel_items:
            Rm, Rn = M.relations[r], N.relations[r]
            pools = [[x for x in M.universes[s] if x in fwd] for s in args]
            for t in itertools.product(*pools):
                if a not in t:
                    continue
                if (t in Rm) != (tuple(fwd[x] for x in t) in Rn):
                    return False
        for f, args, res in fn_items:
            Fm, Fn = M.functions[f], N.functions[f]
            pools = [[x for x in M.universes[s] if x in fwd] for s in args]
            for t in itertools.product(*pools):
                v = Fm[t]
                if v not in fwd:
                    continue
                if a not in t and a != v:
                    continue
                if Fn[tuple(fwd[x] for x in t)] != fwd[v]:
                    return False
        return True

    def rec(i):
        nonlocal count
        if limit is not None and count >= limit:
            return
        if i == len(order):
            count += 1
            yield dict(fwd)
            return
        s, a = order[i]
        for b in cand[(s, a)]:
            if b in used[s]:
                continue
            fwd[a] = b
            used[s].add(b)
            if consistent(a):
                yield from rec(i + 1)
            del fwd[a]
            used[s].discard(b)

    # nullary functions and relations are global constraints
    for r, args in rel_items:
        if not args and (M.relations[r] != N.relations[r]):
            return
    yield from rec(0)


def isomorphisms(M: FinStructure, N: FinStructure) -> list[dict]:
    """Every isomorphism ``M -> N`` as an element map (elements of distinct
    sorts are assumed distinct)."""
    return list(_iter_isomorphisms(M, N))


def is_isomorphic(M: FinStructure, N: FinStructure) -> bool:
    return next(_iter_isomorphisms(M, N, limit=1), None) is not None


def automorphisms(M: FinStructure) -> list[dict]:
    return isomorphisms(M, M)


def orbits(M: FinStructure, n: int, sorts: Sequence[str] | None = None) -> list[frozenset]:
    """Aut(M)-orbits on n-tuples, in canonical order."""
    if sorts is None:
        if n and M.sig.default_sort is None:
            raise StructureError("tuple sorts are required for a multi-sorted signature")
        sorts = (M.sig.default_sort,) * n
    auts = automorphisms(M)
    seen = set()
    out = []
    for t in M.tuples(sorts):
        if t in seen:
            continue
        orb = frozenset(tuple(g[a] for a in t) for g in auts)
        seen |= orb
        out.append(orb)
    return out


# enumeration ------------------------------------------------------------------


def _symbols(phi) -> set[str]:
    out = set()

    def term(t):
        if isinstance(t, App):
            out.add(t.fn)
            for a in t.args:
                term(a)

    def walk(f):
        if isinstance(f, Atomic):
            out.add(f.rel)
            for a in f.args:
                term(a)
        elif isinstance(f, Eq):
            term(f.left)
            term(f.right)
        elif isinstance(f, (And, Or)):
            for p in f.parts:
                walk(p)
        else:
            walk(f.body)

    walk(phi)
    return out


def _all_function_tables(doms: list[tuple], cod: tuple) -> Iterator[dict]:
    keys = list(itertools.product(*doms))
    for vals in itertools.product(cod, repeat=len(keys)):
        yield dict(zip(keys, vals))


def all_models(
    sig: Signature,
    bound: int,
    axioms: Sequence = (),
    sizes: Iterable[Mapping[str, int]] | None = None,
) -> Iterator[FinStructure]:
    """One representative per isomorphism class of models of ``axioms`` with
    every sort of size at most ``bound``.

    Elements of sort ``s`` are named ``"0", "1", ...`` (prefixed by the sort
    name when there are several sorts).  Order: by size vector, then by the
    enumeration order of the interpretations.

    Function tables are chosen whole, checking each axiom once its symbols
    are fixed.  The remaining axioms are then grounded to propositional
    constraints on relation tuples, and tuples are decided one by one,
    checking each constraint as soon as its last tuple is set.
    """
    axioms = list(axioms)
    compiled = [(a, compile_formula(a), _symbols(a)) for a in axioms]
    if sizes is None:
        sizes = [dict(zip(sig.sorts, v)) for v in itertools.product(range(bound + 1), repeat=len(sig.sorts))]
        sizes.sort(key=lambda d: (sum(d.values()), tuple(d[s] for s in sig.sorts)))
    multi = len(sig.sorts) > 1
    fsyms = sorted(sig.functions)
    rsyms = sorted(sig.relations)
    fn_level = []
    fixed: set = set()
    for name in fsyms:
        fixed.add(name)
        fn_level.append(fixed.copy())
    # axioms free of relation symbols are checked during the function phase
    fn_checks: list[list] = [[] for _ in range(len(fsyms) + 1)]
    rel_axioms = []
    for phi, exact, syms in compiled:
        if syms & set(rsyms):
            rel_axioms.append(phi)
            continue
        lvl = 0
        if syms:
            lvl = next((i + 1 for i, fx in enumerate(fn_level) if syms <= fx), len(fsyms))
        fn_checks[lvl].append(exact)
    for size_map in sizes:
        universes = {s: tuple((f"{s}{i}" if multi else str(i)) for i in range(size_map[s])) for s in sig.sorts}
        reps: dict = {}
        functions: dict = {}
        empty_rel = {r: frozenset() for r in rsyms}
        slots = [(r, t) for r in rsyms for t in itertools.product(*(universes[s] for s in sig.relations[r]))]
        # element-major order, so constraints about few elements are checked early
        rank = {a: i for u in universes.values() for i, a in enumerate(u)}
        slots.sort(key=lambda st: (max((rank[a] for a in st[1]), default=-1), st[0], [rank[a] for a in st[1]]))
        slot_index = {st: i for i, st in enumerate(slots)}

        def fn_ok(level):
            if not fn_checks[level]:
                return True
            stub = _Probe(sig, universes, {"relations": {}, "functions": functions}, empty_rel)
            return all(f(stub, {}) for f in fn_checks[level])

        def rel_models():
            g = _Grounder(universes, functions, slot_index)
            cons = _constraints(g(phi, {}) for phi in rel_axioms)
            if cons is None:
                return
            at: list[list] = [[] for _ in slots]
            for trig, check in cons:
                at[trig].append(check)
            val = [False] * len(slots)

            def rec(k):
                if k == len(slots):
                    rels = {r: frozenset(t for (r2, t), i in slot_index.items() if r2 == r and val[i]) for r in rsyms}
                    yield FinStructure(sig, universes, rels, dict(functions))
                    return
                for v in (False, True):
                    val[k] = v
                    if all(c(val) for c in at[k]):
                        yield from rec(k + 1)

            yield from rec(0)

        def fn_rec(i):
            if i == len(fsyms):
                yield from rel_models()
                return
            name = fsyms[i]
            args, res = sig.functions[name]
            for table in _all_function_tables([universes[s] for s in args], universes[res]):
                functions[name] = table
                if fn_ok(i + 1):
                    yield from fn_rec(i + 1)
            functions.pop(name, None)

        if not fn_ok(0):
            continue
        for M in fn_rec(0):
            key = invariant(M)
            bucket = reps.setdefault(key, [])
            if any(is_isomorphic(M, R) for R in bucket):
                continue
            bucket.append(M)
            yield M


class _Probe:
    """Lightweight stand-in for a partially assigned structure."""

    __slots__ = ("sig", "universes", "relations", "functions")

    def __init__(self, sig, universes, partial, stub_rel):
        self.sig = sig
        self.universes = universes
        rels = dict(stub_rel)
        rels.update(partial["relations"])
        self.relations = rels
        self.functions = partial["functions"]


# definability ------------------------------------------------------------------


@dataclass(frozen=True)
class NotFound:
    """Search gave up within its budget; this is not a proof of undefinability."""

    reason: str
    point: tuple | None = None
    structure: int | None = None

    def __bool__(self) -> bool:
        return False


def _literals(sig: Signature, names: Sequence[str], sorts: Sequence[str], values: Sequence, M: FinStructure, negative: bool):
    """Atomic diagram of ``values`` over variable ``names``."""
    by_sort: dict = {}
    for n, s in zip(names, sorts):
        by_sort.setdefault(s, []).append(n)
    val = dict(zip(names, values))
    lits = []
    for r, args in sorted(sig.relations.items()):
        for vs in itertools.product(*(by_sort.get(s, []) for s in args)):
            atom = Atomic(r, tuple(Var(v) for v in vs))
            if tuple(val[v] for v in vs) in M.relations[r]:
                lits.append(atom)
            elif negative:
                lits.append(Not(atom))
    for s, vs in by_sort.items():
        for a, b in itertools.combinations(vs, 2):
            if val[a] == val[b]:
                lits.append(Eq(Var(a), Var(b)))
            elif negative:
                lits.append(Not(Eq(Var(a), Var(b))))
    for f, (args, res) in sorted(sig.functions.items()):
        for vs in itertools.product(*(by_sort.get(s, []) for s in args)):
            out = M.functions[f][tuple(val[v] for v in vs)]
            for w in by_sort.get(res, []):
                if val[w] == out:
                    lits.append(Eq(App(f, tuple(Var(v) for v in vs)), Var(w)))
                    break
    return lits


def closure_clause(names: Sequence[str], sorts: Sequence[str], sig: Signature, fresh: str = "z"):
    """``forall z. or(z = v, ...)`` for every sort: the listed variables exhaust the universe."""
    parts = []
    for s in sig.sorts:
        vs = [n for n, t in zip(names, sorts) if t == s]
        parts.append(forall_many([(fresh, s)], Or(tuple(Eq(Var(fresh), Var(v)) for v in vs))))
    return parts


def _make_clause(bound, lits):
    body = lits[0] if len(lits) == 1 else And(tuple(lits))
    return exists_many(bound, body)


def _simplify(phi):
    if isinstance(phi, And) and len(phi.parts) == 1:
        return phi.parts[0]
    return phi


class _Targets:
    """The same search target read in several structures at once."""

    def __init__(self, pairs: Sequence[tuple[FinStructure, frozenset]], sorts: Sequence[str]):
        self.pairs = [(M, frozenset(T)) for M, T in pairs]
        self.sorts = tuple(sorts)

    def valid(self, phi, names) -> bool:
        f = compile_formula(phi)
        for M, T in self.pairs:
            env: dict = {}
            for t in M.tuples(self.sorts):
                if t in T:
                    continue
                env.update(zip(names, t))
                if f(M, env):
                    return False
        return True

    def covered(self, phi, names) -> list[frozenset]:
        f = compile_formula(phi)
        out = []
        for M, T in self.pairs:
            env: dict = {}
            hit = []
            for t in T:
                env.update(zip(names, t))
                if f(M, env):
                    hit.append(t)
            out.append(frozenset(hit))
        return out

    def exact(self, phi, names) -> bool:
        return all(satisfying(phi, M, names, self.sorts) == T for M, T in self.pairs)


def definability_search_multi(
    pairs: Sequence[tuple[FinStructure, Iterable[tuple]]],
    sorts: Sequence[str],
    alpha: int,
    depth: int,
    names: Sequence[str] | None = None,
    witness_prefix: str = "y",
):
    """Find ``phi`` with ``phi^M = T`` simultaneously for every ``(M, T)``.

    Each target tuple is explained by a clause ``exists ys. D(xs, ys)`` where
    ``D`` is the diagram of the tuple plus at most ``depth`` further distinct
    elements of its own structure: positive atomic at level 1, literal at
    level 2, and literal plus the exhaustion clause from level 3 on.  Clauses
    are kept only if they stay inside the target everywhere, then pruned
    literal by literal and combined into a disjunction.
    """
    sorts = tuple(sorts)
    n = len(sorts)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(n))
    if len(names) != n or len(set(names)) != n:
        raise ValueError("need one distinct name per target column")
    if not pairs:
        return TOP
    sig = pairs[0][0].sig
    tg = _Targets([(M, frozenset(T)) for M, T in pairs], sorts)
    if tg.valid(TOP, names) and all(len(T) == sum(1 for _ in M.tuples(sorts)) for M, T in tg.pairs):
        return TOP
    negative = alpha >= 2
    closing = alpha >= 3
    clauses = []
    remaining = [set(T) for _, T in tg.pairs]
    total = [sum(1 for _ in M.elements()) for M, _ in tg.pairs]
    for idx, (M, T) in enumerate(tg.pairs):
        for a in sorted(T, key=repr):
            if a not in remaining[idx]:
                continue
            clause = None
            others = [(s, e) for s, e in M.elements() if not any(e == x and s == so for x, so in zip(a, sorts))]
            for e in range(0, depth + 1):
                for extra in itertools.combinations(others, e):
                    ynames = [f"{witness_prefix}{i}" for i in range(e)]
                    vnames = list(names) + ynames
                    vsorts = list(sorts) + [s for s, _ in extra]
                    values = list(a) + [v for _, v in extra]
                    if closing and len(set(zip(vsorts, values))) < total[idx]:
                        # the exhaustion clause would be false here
                        continue
                    lits = _literals(sig, vnames, vsorts, values, M, negative)
                    if closing:
                        lits = lits + closure_clause(vnames, vsorts, sig, fresh="z")
                    bound = list(zip(ynames, [s for s, _ in extra]))
                    cand = _make_clause(bound, lits)
                    if tg.valid(cand, names):
                        clause = _prune(bound, lits, tg, names)
                        break
                if clause is not None:
                    break
            if clause is None:
                return NotFound(f"no clause within depth {depth} at level {alpha}", a, idx)
            clauses.append(clause)
            for j, hit in enumerate(tg.covered(clause, names)):
                remaining[j] -= hit
    out = _simplify(Or(tuple(dict.fromkeys(clauses)))) if len(set(clauses)) != 1 else clauses[0]
    if not tg.exact(out, names) or classify(out).sigma > alpha:
        return NotFound("internal check failed")
    return out


def _prune(bound, lits, tg: _Targets, names):
    lits = list(lits)
    i = 0
    while i < len(lits):
        trial = lits[:i] + lits[i + 1 :]
        used = _used_vars(trial)
        tb = [(v, s) for v, s in bound if v in used]
        cand = _make_clause(tb, trial) if trial else exists_many(tb, TOP)
        if tg.valid(cand, names):
            lits = trial
            bound = tb
        else:
            i += 1
    used = _used_vars(lits)
    tb = [(v, s) for v, s in bound if v in used]
    cand = _make_clause(tb, lits) if lits else exists_many(tb, TOP)
    if tg.valid(cand, names):
        bound = tb
    if not lits:
        return exists_many(bound, TOP)
    return _make_clause(bound, lits)


def _used_vars(lits) -> set:
    out = set()
    for l in lits:
        out.update(free_vars(l))
    return out


def definability_search(
    M: FinStructure,
    target: Iterable[tuple],
    alpha: int,
    depth: int = 3,
    sorts: Sequence[str] | None = None,
    names: Sequence[str] | None = None,
):
    target = frozenset(tuple(t) for t in target)
    if sorts is None:
        n = len(next(iter(target))) if target else 1
        if M.sig.default_sort is None:
            raise StructureError("tuple sorts are required for a multi-sorted signature")
        sorts = (M.sig.default_sort,) * n
    return definability_search_multi([(M, target)], sorts, alpha, depth, names)


# Scott sentences ------------------------------------------------------------------


def scott_sentence(M: FinStructure, morley=None):
    """Sentence whose finite models are exactly the copies of ``M``.

    The shape is ``exists distinct xs. diagram(xs)`` together with, for each
    sort, ``forall y_0..y_K. or(y_i = y_j)`` bounding its size by ``K``.
    Over the negated-atomic fragment both parts are Pi_2.  With ``morley``
    given the result is stated in the expanded signature and carries the
    defining axioms.
    """
    sig = M.sig
    names, sorts, values = [], [], []
    for s in sig.sorts:
        for i, a in enumerate(M.universes[s]):
            names.append(f"v_{s}_{i}")
            sorts.append(s)
            values.append(a)
    diag = _literals(sig, names, sorts, values, M, negative=True)
    for r, args in sorted(sig.relations.items()):
        if not args:
            diag.append(Atomic(r) if () in M.relations[r] else Not(Atomic(r)))
    existential = exists_many(list(zip(names, sorts)), And(tuple(diag)))
    bounds = []
    for s in sig.sorts:
        k = len(M.universes[s])
        ys = [f"w_{s}_{i}" for i in range(k + 1)]
        eqs = Or(tuple(Eq(Var(a), Var(b)) for a, b in itertools.combinations(ys, 2)))
        bounds.append(forall_many([(y, s) for y in ys], eqs))
    sentence = And((existential, *bounds))
    if morley is None:
        return sentence
    translated = morley.translate(sentence)
    return And((translated, *(ax for _, ax in morley.axioms)))


# back and forth -------------------------------------------------------------------


@dataclass
class BackForth:
    rounds: int
    bound: int
    family: frozenset = field(default_factory=frozenset)

    @property
    def equivalent_to_bound(self) -> bool:
        return self.rounds == self.bound


def _atomic_type(M: FinStructure, elems: tuple) -> tuple:
    sig = M.sig
    out = []
    idx = range(len(elems))
    for r, args in sorted(sig.relations.items()):
        for pos in itertools.product(idx, repeat=len(args)):
            t = tuple(elems[i][1] for i in pos)
            if all(elems[i][0] == s for i, s in zip(pos, args)):
                out.append(t in M.relations[r])
    for i, j in itertools.combinations(idx, 2):
        out.append(elems[i] == elems[j])
    for f, (args, res) in sorted(sig.functions.items()):
        for pos in itertools.product(idx, repeat=len(args)):
            if not all(elems[i][0] == s for i, s in zip(pos, args)):
                continue
            v = M.functions[f][tuple(elems[i][1] for i in pos)]
            out.append(tuple(j for j in idx if elems[j] == (res, v)))
    out.append(tuple(e[0] for e in elems))
    return tuple(out)


def back_and_forth(M: FinStructure, N: FinStructure, bound: int) -> BackForth:
    """Greatest ``k <= bound`` such that the duplicator survives ``k`` rounds
    of the Ehrenfeucht-Fraisse game on atomic types."""
    if M.sig != N.sig:
        raise StructureError("structures have different signatures")
    em, en = M.elements(), N.elements()
    memo: dict = {}

    def win(j, a, b) -> bool:
        key = (j, a, b)
        if key in memo:
            return memo[key]
        ok = _atomic_type(M, a) == _atomic_type(N, b)
        if ok and j > 0:
            ok = all(any(win(j - 1, a + (x,), b + (y,)) for y in en if y[0] == x[0]) for x in em) and all(
                any(win(j - 1, a + (x,), b + (y,)) for x in em if x[0] == y[0]) for y in en
            )
        memo[key] = ok
        return ok

    k = -1
    for j in range(bound + 1):
        if win(j, (), ()):
            k = j
        else:
            break
    family = frozenset((a, b) for (j, a, b), v in memo.items() if v and j == 0)
    return BackForth(max(k, 0) if k >= 0 else -1, bound, family)
