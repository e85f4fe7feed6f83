"""Acceptance suite: one function per criterion, each with quick and full bounds.

Every check compares a constructive result against an independent brute-force
computation on the same instance.
"""

from __future__ import annotations

import itertools
import json
import random
import time
from dataclasses import dataclass
from functools import lru_cache

from . import axiom, imaginary, reconstruct
from .etale import EtaleStructure
from .finspace import (
    DiffNode,
    FinSpace,
    OpenLeaf,
    UnionNode,
    all_topologies,
    code_from_json,
    code_to_json,
    is_meager,
    realize_borel,
)
from .isogpd import certify_sigma1_saturations, check_open_groupoid, lopez_escobar
from .logic import (
    TOP,
    And,
    Atomic,
    Eq,
    Exists,
    Not,
    Or,
    Signature,
    Var,
    classify,
    formula_from_json,
    formula_to_json,
    free_vars,
    parse_formula,
    to_text,
)
from .paramgen import gen_fixed_universe, gen_marked, gen_partially_enumerated, gen_up_to_size
from .util import dumps, make_rng

PROFILES = {
    "quick": {
        "c4_arities": (1,),
        "c4_sample": 40,
        "c5_instances": 2,
        "c6_instances": 1,
        "c7_instances": 20,
        "c8_groupoids": 30,
        "c8_max_morphisms": 8,
        "c10_samples": (15, 5),
        "c11_formulas": 1000,
        "c12_alphas": (1,),
    },
    "full": {
        "c4_arities": (1, 2),
        "c4_sample": 400,
        "c5_instances": 6,
        "c6_instances": 6,
        "c7_instances": 40,
        "c8_groupoids": 30,
        "c8_max_morphisms": 12,
        "c10_samples": (200, 100),
        "c11_formulas": 1000,
        "c12_alphas": (1, 2, 3),
    },
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.name}: {self.detail}"

    def to_json(self) -> dict:
        # timing is left out so that reports stay byte-stable
        return {"number": self.number, "name": self.name, "passed": self.passed, "detail": self.detail}


P = Signature.relational({"P": 1})
SIGS = [{}, {"P": 1}, {"R": 2}, {"P": 1, "R": 2}]


def _xs(n):
    return tuple(f"x{i}" for i in range(n))


@lru_cache(maxsize=None)
def certified_instances():
    """Instances whose report certifies at arity 2 and whose closed-form
    witnesses agree with the brute-force saturations."""
    makers = [
        lambda: gen_fixed_universe(P, 1, "discrete", True),
        lambda: gen_fixed_universe(P, 2, "discrete", True),
        lambda: gen_fixed_universe(P, 2, "sierpinski", True),
        lambda: gen_up_to_size(P, 1, morleyize="neq"),
        lambda: gen_up_to_size(P, 2, morleyize="neq"),
        lambda: gen_partially_enumerated(P, 1),
        lambda: gen_fixed_universe(P, 1, "sierpinski", True),
    ]
    out = []
    for mk in makers:
        inst = mk()
        cert = certify_sigma1_saturations(inst.structure, 2, 3, inst.groupoid)
        if cert.complete:
            out.append(inst)
    return tuple(out)


# 1 -------------------------------------------------------------------------------


def groupoid_instances():
    for d in SIGS:
        sig = Signature.relational(d)
        for n in range(3):
            for top in ("discrete", "sierpinski"):
                yield gen_fixed_universe(sig, n, top, arity=1)
                for st in ("discrete", "scott"):
                    yield gen_up_to_size(sig, n, st, top, arity=1)
            for total in (False, True):
                yield gen_partially_enumerated(sig, n, 1, total)
        for k in (1, 2):
            yield gen_marked(sig, k, 1)


def criterion_1(prof):
    count, bad = 0, []
    for inst in groupoid_instances():
        G = inst.groupoid
        probs = G.check_laws() + G.check_action()
        count += 1
        if probs:
            bad.append(f"{inst.provenance}: {probs[0]}")
    return not bad, f"{count} instances" + (f"; {bad[0]}" if bad else "")


# 2 -------------------------------------------------------------------------------


def ex61_shape(phi, labels, n) -> bool:
    """``exists y_0..y_{n-1}`` over a conjunction of relational literals in
    the ``y``'s, pairwise distinctness of all ``y``'s and ``x_i = y_{a_i}``."""
    ys = [f"y{i}" for i in range(n)]
    body = phi
    for y in ys:
        if not isinstance(body, Exists) or body.var != y:
            return False
        body = body.body
    parts = body.parts if isinstance(body, And) else (body,)
    eqs, neq, rel = set(), set(), 0
    for p in parts:
        if isinstance(p, Eq):
            eqs.add((p.left.name, p.right.name))
        elif isinstance(p, Atomic):
            names = [a.name for a in p.args]
            if not set(names) <= set(ys):
                return False
            if p.rel.startswith("R_not_x0_x1"):
                neq.add(frozenset(names))
            else:
                rel += 1
        else:
            return False
    want_eq = {(f"x{i}", f"y{a}") for i, a in enumerate(labels)}
    want_neq = {frozenset(pr) for pr in itertools.combinations(ys, 2)}
    return eqs == want_eq and neq == want_neq and rel == n


def criterion_2(prof):
    plain = gen_fixed_universe(P, 2, "discrete", False)
    rep0 = certify_sigma1_saturations(plain.structure, 2, 4, plain.groupoid)
    if rep0.complete:
        return False, "un-Morleyized instance certified"
    # the saturation of P = {0} over a discrete base
    key = (("S",), ("10", "0"))
    if rep0.entries[key].ok:
        return False, "un-Morleyized witness found for P = {0}"
    morl = gen_fixed_universe(P, 2, "discrete", True)
    rep1 = certify_sigma1_saturations(morl.structure, 2, 4, morl.groupoid)
    if not rep1.complete or rep1.validate():
        return False, "Morleyized instance not certified"
    closed = morl.report
    shapes = 0
    for sorts, e in closed.keys():
        phi = closed.witness(sorts, e)
        if not ex61_shape(phi, [int(a) for a in e[1:]], 2):
            return False, f"witness for {e!r} has the wrong shape: {to_text(phi)}"
        if not classify(phi).is_sigma(1):
            return False, "closed-form witness is not Sigma_1"
        shapes += 1
    if closed.validate():
        return False, closed.validate()[0]
    return True, f"{len(rep0.failures)} un-Morleyized failures; {shapes} Morleyized witnesses of the enumerated shape"


# 3 -------------------------------------------------------------------------------


def criterion_3(prof):
    seen, certified = 0, 0
    for inst in itertools.chain(certified_instances(), (gen_fixed_universe(P, 2, "discrete", False),)):
        seen += 1
        rep = certify_sigma1_saturations(inst.structure, 2, 3, inst.groupoid)
        if rep.complete:
            certified += 1
            if not check_open_groupoid(inst.groupoid):
                return False, f"{inst.provenance}: dom/cod not open"
    return certified > 0, f"{certified} of {seen} instances certified; all open"


# 4 -------------------------------------------------------------------------------

SHAPES = (
    ("L", 1),
    ("U2", 2),
    ("D", 2),
    ("U3", 3),
    ("UDL", 3),
    ("DUL", 3),
    ("DLU", 3),
    ("DDL", 3),
    ("DLD", 3),
)


def build_code(shape, leaves):
    a = [OpenLeaf(x) for x in leaves]
    return {
        "L": lambda: a[0],
        "U2": lambda: UnionNode((a[0], a[1])),
        "D": lambda: DiffNode(a[0], a[1]),
        "U3": lambda: UnionNode((a[0], a[1], a[2])),
        "UDL": lambda: UnionNode((DiffNode(a[0], a[1]), a[2])),
        "DUL": lambda: DiffNode(UnionNode((a[0], a[1])), a[2]),
        "DLU": lambda: DiffNode(a[0], UnionNode((a[1], a[2]))),
        "DDL": lambda: DiffNode(DiffNode(a[0], a[1]), a[2]),
        "DLD": lambda: DiffNode(a[0], DiffNode(a[1], a[2])),
    }[shape]()


def leaf_family(space: FinSpace) -> list:
    """All opens of small spaces, else the minimal neighbourhoods with the
    empty and the full set."""
    opens = []
    for o in space.opens():
        opens.append(o)
        if len(opens) > 16:
            break
    if len(opens) <= 16:
        fam = opens
    else:
        fam = {space.minimal_open(p) for p in space.points} | {frozenset(), space.full}
    return sorted(fam, key=lambda s: (len(s), sorted(map(repr, s))))


def codes_for(space, rng, sample):
    fam = leaf_family(space)
    for shape, k in SHAPES:
        combos = list(itertools.product(range(len(fam)), repeat=k))
        if len(combos) > sample:
            combos = rng.sample(combos, sample)
        for c in combos:
            yield build_code(shape, [fam[i] for i in c])


def criterion_4(prof):
    rng = make_rng(4)
    checked = 0
    for inst in certified_instances():
        M, G, rep = inst.structure, inst.groupoid, inst.report
        if len(M.base.points) > 4:
            continue
        for n in prof["c4_arities"]:
            sorts = ("S",) * n
            T = M.power(sorts).total
            for code in codes_for(T, rng, prof["c4_sample"]):
                phi = lopez_escobar(M, G, rep, code, sorts)
                pts, rank = realize_borel(T, code)
                got = M.interpret(phi, _xs(n), sorts).points
                want = G.vaught_transform(range(len(G)), pts, sorts)
                if got != want:
                    return False, f"{inst.provenance}: mismatch on {code_to_json(code)}"
                if not classify(phi).is_sigma(rank):
                    return False, f"output {classify(phi).label} exceeds rank {rank}"
                checked += 1
    return checked > 0, f"{checked} codes agree with the Vaught transform"


# 5 -------------------------------------------------------------------------------


def invariant_opens(A) -> list:
    """Invariant opens generated by saturations of minimal neighbourhoods."""
    T = A.carrier.total
    gens = sorted({A.saturation(T.minimal_open(a)) for a in A.points}, key=lambda s: sorted(map(repr, s)))
    out = set()
    for r in range(1, min(len(gens), 2) + 1):
        for combo in itertools.combinations(gens, r):
            u = frozenset().union(*combo)
            if T.is_open(u) and u != frozenset(A.points):
                out.add(u)
    return sorted(out, key=lambda s: sorted(map(repr, s)))


def jt_spaces(G):
    M = imaginary.EtaleIsoSpace.from_power(G, ("S",))
    yield "M", M
    yield "M^2", imaginary.EtaleIsoSpace.from_power(G, ("S", "S"))
    yield "X", imaginary.EtaleIsoSpace.trivial(G)
    for i, u in enumerate(invariant_opens(M)):
        yield f"open{i}", M.restrict(u)
    yield "M+X", imaginary.iso_disjoint_union([M, imaginary.EtaleIsoSpace.trivial(G)])


def criterion_5(prof):
    done = 0
    insts = [i for i in certified_instances() if max(i.structure.fiber(x).size() for x in i.structure.base.points) <= 3]
    for inst in insts[: prof["c5_instances"]]:
        M, G, rep = inst.structure, inst.groupoid, inst.report
        for name, A in jt_spaces(G):
            syn = imaginary.joyal_tierney_synthesize(M, G, rep, A)
            back = imaginary.interpret_imaginary(syn.imaginary, M, G)
            if not syn.imaginary.is_sigma1:
                return False, f"{name}: imaginary is not Sigma_1"
            if imaginary.equivariant_isomorphism(back, A) is None:
                return False, f"{inst.provenance} {name}: no equivariant isomorphism"
            done += 1
    bad = [i for i in insts[: prof["c5_instances"]] if i.report.validate()]
    if bad:
        return False, "a witness used by synthesis is unsound"
    return done > 0, f"{done} Iso-spaces named by Sigma_1 imaginaries"


# 6 -------------------------------------------------------------------------------


def criterion_6(prof):
    done = []
    for inst in certified_instances()[: prof["c6_instances"]]:
        M = inst.structure
        if max(M.fiber(x).size() for x in M.base.points) > 2:
            continue
        bundle = axiom.pi2_axiomatize(M, inst.report)
        if not all(classify(s).is_pi(2) for s in bundle.sentences):
            return False, "an axiom is not Pi_2"
        ver = axiom.verify_axiomatization(bundle, M, 3)
        if not ver.ok:
            return False, f"{inst.provenance}: missing {len(ver.missing)}, unsound {len(ver.unsound)}"
        done.append(inst.name)
    return bool(done), f"{len(done)} instances axiomatized exactly at size bound 3"


# 7 -------------------------------------------------------------------------------


def random_formula(rng: random.Random, sig: Signature, names, depth: int):
    """Small formula in the free variables ``names`` over a one-sorted signature."""
    s = sig.sorts[0]
    rels = sorted(sig.relations.items())

    def atom(vs):
        if rels and rng.random() < 0.75:
            r, args = rng.choice(rels)
            return Atomic(r, tuple(Var(rng.choice(vs)) for _ in args))
        return Eq(Var(rng.choice(vs)), Var(rng.choice(vs)))

    def go(d, vs):
        if d == 0 or rng.random() < 0.3:
            return atom(vs)
        k = rng.randrange(5)
        if k == 0:
            return Not(go(d - 1, vs))
        if k in (1, 2):
            parts = tuple(go(d - 1, vs) for _ in range(rng.randint(2, 3)))
            return And(parts) if k == 1 else Or(parts)
        v = f"z{d}"
        return Exists(v, s, go(d - 1, vs + [v]))

    return go(depth, list(names))


def density_oracle(M, G, phi, sorts) -> bool:
    """``phi`` meets the saturation of every nonempty basic open."""
    pw = M.power(sorts)
    interp = M.interpret(phi, _xs(len(sorts)), sorts).points
    return all(interp & G.saturation(pw.total.minimal_open(e), sorts) for e in pw.points)


def criterion_7(prof):
    rng = make_rng(7)
    omitted = failures = 0
    insts = certified_instances()
    trials = 0
    while omitted < prof["c7_instances"] or failures < 3:
        trials += 1
        if trials > 40 * prof["c7_instances"]:
            return False, f"only {omitted} dense and {failures} non-dense samples found"
        inst = insts[rng.randrange(len(insts))]
        M, G = inst.structure, inst.groupoid
        base_sig = Signature.relational({"P": 1})
        targets = []
        for _ in range(rng.randint(1, 2)):
            n = rng.randint(1, 2)
            phi = random_formula(rng, base_sig, _xs(n), 2)
            if inst.morley is not None:
                try:
                    phi = inst.morley.translate(phi, {v: "S" for v in _xs(n)})
                except ValueError:
                    continue
            if not set(free_vars(phi)) <= set(_xs(n)):
                continue
            targets.append((phi, ("S",) * n))
        if not targets:
            continue
        dense = all(density_oracle(M, G, phi, st) for phi, st in targets)
        res = axiom.omitting_types(M, inst.report, targets)
        if dense:
            if isinstance(res, axiom.DensityFailure):
                return False, f"density failure reported for dense targets on {inst.provenance}"
            if res.point not in axiom.omitting_types_direct(M, targets):
                return False, "returned fiber fails the direct scan"
            omitted += 1
        else:
            if not isinstance(res, axiom.DensityFailure):
                return False, "non-dense targets were omitted"
            phi, st = targets[res.index]
            names = _xs(len(st))
            th = M.interpret(res.theta, names, st).points
            if not classify(res.theta).is_sigma(1) or not th or th & M.interpret(phi, names, st).points:
                return False, "density counterexample is not a valid Sigma_1 theta"
            failures += 1
    return True, f"{omitted} dense target sets omitted, {failures} density counterexamples"


# 8 -------------------------------------------------------------------------------


def criterion_8(prof):
    rng = make_rng(8)
    n = 0
    for _ in range(prof["c8_groupoids"]):
        G = reconstruct.random_groupoid(rng, prof["c8_max_morphisms"])
        if G.validate() or not reconstruct.check_open_nonarchimedean(G).ok:
            return False, "generated groupoid is not open non-Archimedean"
        res = reconstruct.reconstruct(G)
        if not res.ok:
            return False, f"{len(G)} morphisms: {(res.report.problems + res.coherence)[:1]}"
        n += 1
    return True, f"{n} groupoids reconstructed up to isomorphism"


# 9 -------------------------------------------------------------------------------


def _discrete_cod_fibers(G) -> bool:
    for x in G.base.points:
        fib = [G.ids[i] for i in G.morphisms_into(x)]
        sub = G.topology.subspace(fib)
        if any(len(sub.minimal_open(g)) != 1 for g in fib):
            return False
    return True


def criterion_9(prof):
    rng = make_rng(9)
    opens_checked = discrete = 0
    for inst in groupoid_instances():
        M, G = inst.structure, inst.groupoid
        sorts = (M.sig.sorts[0],)
        pw = M.power(sorts)
        if not pw.points:
            continue
        T = pw.total
        cands = {T.minimal_open(e) for e in pw.points}
        cands.add(T.full)
        for a in sorted(cands, key=lambda s: sorted(map(repr, s))):
            if G.vaught_transform(range(len(G)), a, sorts) != G.saturation(a, sorts):
                return False, f"G*A differs from G.A on {inst.provenance}"
            opens_checked += 1
        if _discrete_cod_fibers(G):
            for _ in range(3):
                w = [i for i in range(len(G)) if rng.random() < 0.5]
                a = frozenset(e for e in pw.points if rng.random() < 0.5)
                if G.vaught_transform(w, a, sorts) != G.saturation(a, sorts, w):
                    return False, f"W*A differs from the W-saturation on {inst.provenance}"
                discrete += 1
    return discrete > 0, f"{opens_checked} open sets; {discrete} (W, A) pairs on discrete-fiber groupoids"


# 10 ------------------------------------------------------------------------------


def nowhere_dense_union_oracle(X: FinSpace, a) -> bool:
    """Meager iff a union of nowhere dense sets; with finitely many points the
    singletons suffice, and a point is nowhere dense iff its closure has
    empty interior.  Interior and closure come from the list of opens."""
    opens = list(X.opens())

    def interior(s):
        return frozenset().union(*[o for o in opens if o <= s])

    def closure(s):
        return X.full - interior(X.full - s)

    return all(not interior(closure(frozenset([p]))) for p in a)


def random_topology(rng, n):
    pts = [str(i) for i in range(n)]
    rel = {(a, b) for a in pts for b in pts if a != b and rng.random() < 0.3}
    return FinSpace.from_preorder(pts, _transitive(rel))


def _transitive(rel):
    rel = set(rel)
    while True:
        extra = {(a, d) for (a, b) in rel for (c, d) in rel if b == c and a != d} - rel
        if not extra:
            return rel
        rel |= extra


def criterion_10(prof):
    rng = make_rng(10)
    spaces = [X for n in range(4) for X in all_topologies([str(i) for i in range(n)])]
    n4, n5 = prof["c10_samples"]
    spaces += [random_topology(rng, 4) for _ in range(n4)] + [random_topology(rng, 5) for _ in range(n5)]
    subsets = 0
    for X in spaces:
        pts = sorted(X.points)
        for r in range(len(pts) + 1):
            for a in itertools.combinations(pts, r):
                if is_meager(X, a) != nowhere_dense_union_oracle(X, a):
                    return False, f"disagreement on {a} in {X.to_json()}"
                subsets += 1
    return True, f"{len(spaces)} spaces, {subsets} subsets"


# 11 ------------------------------------------------------------------------------


def fixture_artifacts() -> list:
    """One JSON artifact of every kind the package writes."""
    from .cli import force_witnesses, instance_bundle

    inst = gen_fixed_universe(P, 1, "discrete", True)
    force_witnesses(inst.report)
    bundle = axiom.pi2_axiomatize(inst.structure, inst.report)
    syn = imaginary.joyal_tierney_synthesize(
        inst.structure, inst.groupoid, inst.report, imaginary.EtaleIsoSpace.from_power(inst.groupoid, ("S",))
    )
    G = reconstruct.group_groupoid(reconstruct.cyclic_group(2))
    code = DiffNode(OpenLeaf(frozenset({("1", "0")})), OpenLeaf(frozenset()))
    return [
        ("instance", instance_bundle(inst.structure, inst.report, inst.provenance)),
        ("structure", inst.structure.to_json()),
        ("signature", inst.structure.sig.to_json()),
        ("space", inst.structure.base.to_json()),
        ("axioms", bundle.to_json()),
        ("imaginary", syn.imaginary.to_json()),
        ("groupoid", G.to_json()),
        ("code", code_to_json(code)),
    ]


def roundtrip_artifact(kind: str, data):
    sig = None
    if kind == "instance":
        from .cli import _table_provider
        from .isogpd import SaturationReport, compute_iso_groupoid

        M = EtaleStructure.from_json(data["structure"])
        G = compute_iso_groupoid(M, data["arity"])
        rep = SaturationReport(M, G, data["arity"], _table_provider(M, data["witnesses"]["witnesses"]))
        from .cli import force_witnesses, instance_bundle

        force_witnesses(rep)
        return instance_bundle(M, rep, data["provenance"])
    if kind == "structure":
        return EtaleStructure.from_json(data).to_json()
    if kind == "signature":
        return Signature.from_json(data).to_json()
    if kind == "space":
        return FinSpace.from_json(data).to_json()
    if kind == "axioms":
        return axiom.AxiomBundle.from_json(data, sig).to_json()
    if kind == "imaginary":
        return imaginary.Imaginary.from_json(data).to_json()
    if kind == "groupoid":
        return reconstruct.TopGroupoid.from_json(data).to_json()
    if kind == "code":
        return code_to_json(code_from_json(data))
    raise ValueError(kind)


def criterion_11(prof):
    rng = make_rng(11)
    sig = Signature.relational({"P": 1, "R": 2})
    for i in range(prof["c11_formulas"]):
        n = rng.randint(0, 3)
        phi = random_formula(rng, sig, _xs(n) or ("x0",), rng.randint(0, 4))
        text = to_text(phi)
        back = parse_formula(text)
        if back != phi or to_text(back) != text:
            return False, f"text round-trip fails for {text}"
        js = dumps(formula_to_json(phi))
        if dumps(formula_to_json(formula_from_json(json.loads(js)))) != js:
            return False, f"JSON round-trip fails for {text}"
    arts = fixture_artifacts()
    for kind, data in arts:
        text = dumps(data)
        if dumps(roundtrip_artifact(kind, json.loads(text))) != text:
            return False, f"{kind} artifact is not byte-stable"
    return True, f"{prof['c11_formulas']} formulas and {len(arts)} artifact kinds"


# 12 ------------------------------------------------------------------------------


def criterion_12(prof):
    rows = held = 0
    for top in ("discrete", "sierpinski"):
        inst = gen_fixed_universe(P, 2, top, True)
        M, G = inst.structure, inst.groupoid
        for x in M.base.points:
            for alpha in prof["c12_alphas"]:
                rep = axiom.scott_conditions(M, G, x, alpha)
                if rep["orbits"].passed:
                    held += 1
                    if not rep["scott-sentence"].passed:
                        return False, f"(i) without (ii) at {x!r}, alpha {alpha}"
                rows += 1
    return held > 0, f"{rows} (point, level) pairs; (i) held at {held}, each with (ii)"


CRITERIA = [
    (1, "groupoid laws", criterion_1),
    (2, "saturation dichotomy", criterion_2),
    (3, "certified implies open groupoid", criterion_3),
    (4, "Lopez-Escobar vs Vaught oracle", criterion_4),
    (5, "Joyal-Tierney synthesis", criterion_5),
    (6, "Pi_2 axiomatization at bound 3", criterion_6),
    (7, "omitting types", criterion_7),
    (8, "groupoid reconstruction", criterion_8),
    (9, "Vaught transform degeneracies", criterion_9),
    (10, "Baire oracle", criterion_10),
    (11, "round-trips", criterion_11),
    (12, "Scott conditions", criterion_12),
]


def run_criterion(number: int, profile: str = "quick") -> CriterionResult:
    prof = PROFILES[profile]
    _, name, fn = CRITERIA[number - 1]
    t = time.perf_counter()
    try:
        ok, detail = fn(prof)
    except Exception as exc:  # reported as a failure, not a crash of the suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t)


def run_selftest(profile: str = "quick", seed: int = 0, only=None) -> list[CriterionResult]:
    """``seed`` is accepted for interface symmetry; each criterion seeds its
    own generator so results do not depend on which criteria run."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    nums = only or [n for n, _, _ in CRITERIA]
    return [run_criterion(n, profile) for n in nums]
