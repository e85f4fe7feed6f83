"""Command-line frontend.

Instance files bundle an étale structure with its saturation witnesses::

    {"kind": "instance", "structure": ..., "provenance": ..., "arity": k,
     "witnesses": {"arity": k, "complete": ..., "witnesses": [rows]}}

Exit status: 0 success, 1 a validation failure (the message names the module
whose invariant broke), 2 a search budget ran out.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import Sequence

from . import axiom, finspace, imaginary, isogpd, logic, paramgen, reconstruct
from .etale import EtaleStructure, morleyize_etale
from .finspace import SpaceError, code_from_json, realize_borel
from .finstruct import NotFound
from .isogpd import GroupoidError, SaturationReport, SearchProvider, compute_iso_groupoid
from .logic import Signature, classify, formula_to_json, free_vars, parse_formula, to_text
from .util import dumps, make_rng, report

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2

SUBCOMMANDS = (
    "parse",
    "eval",
    "gen",
    "iso",
    "saturate",
    "certify",
    "morleyize",
    "axiomatize",
    "verify-ax",
    "lopez-escobar",
    "vaught",
    "jt",
    "omit",
    "scott",
    "reconstruct",
    "selftest",
)


class CliError(Exception):
    def __init__(self, module: str, message: str, status: int = EXIT_INVALID):
        super().__init__(f"{module}: {message}")
        self.status = status


@dataclass
class RunConfig:
    subcommand: str
    inputs: list = field(default_factory=list)
    arity: int = 2
    depth: int = 3
    bound: int = 3
    term_depth: int = 1
    out: str | None = None
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise CliError("cli", f"unknown subcommand {self.subcommand!r}")
        for name in ("arity", "depth", "bound", "term_depth"):
            if getattr(self, name) < 1:
                raise CliError("cli", f"bound {name} must be positive")

    def opt(self, key, default=None):
        v = self.options.get(key)
        return default if v is None else v


# instance files --------------------------------------------------------------------


def _point(row) -> tuple:
    return tuple(finspace._pt(v) for v in row)


def _jpoint(e) -> list:
    return [finspace._jpt(v) for v in e]


def _ctx(sorts) -> dict:
    return {f"x{i}": s for i, s in enumerate(sorts)}


def instance_bundle(M: EtaleStructure, rep: SaturationReport, provenance: dict | None = None) -> dict:
    return report(
        "instance",
        {"structure": M.to_json(), "provenance": provenance or {}, "arity": rep.arity, "witnesses": rep.to_json()},
    )


def force_witnesses(rep: SaturationReport) -> None:
    """Ask the provider for every key so the bundle carries a full table."""
    for sorts, e in rep.keys():
        try:
            rep.witness(sorts, e)
        except GroupoidError:
            pass


def _table_provider(M: EtaleStructure, rows, fallback=None):
    table = {}
    for row in rows:
        key = (tuple(row["sorts"]), _point(row["point"]))
        if "formula" in row:
            table[key] = parse_formula(row["formula"], M.sig, _ctx(key[0]))
        else:
            table[key] = NotFound(row.get("failure", "no witness"))

    def provide(sorts, e):
        got = table.get((tuple(sorts), e))
        if (got is None or isinstance(got, NotFound)) and fallback is not None:
            return fallback(sorts, e)
        return got

    return provide


@dataclass
class Loaded:
    M: EtaleStructure
    G: isogpd.IsoGroupoid
    report: SaturationReport
    provenance: dict


def load_instance(path: str, arity: int | None = None, depth: int | None = None) -> Loaded:
    data = _read_json(path)
    if "structure" not in data:
        raise CliError("cli", f"{path} is not an instance file")
    try:
        M = EtaleStructure.from_json(data["structure"])
    except (ValueError, KeyError) as exc:
        raise CliError("etale", f"cannot rebuild the structure: {exc}") from exc
    problems = M.validate()
    if problems:
        raise CliError("etale", problems[0])
    k = arity or data.get("arity", 1)
    G = compute_iso_groupoid(M, max(k, 1))
    fallback = SearchProvider(M, G, depth) if depth else None
    rows = (data.get("witnesses") or {}).get("witnesses", [])
    provider = _table_provider(M, rows, fallback) if rows else fallback
    rep = SaturationReport(M, G, k, provider=provider)
    return Loaded(M, G, rep, data.get("provenance", {}))


def _search_depth(cfg: RunConfig) -> int:
    """Witnesses missing from the file are searched for up to this depth."""
    return cfg.opt("search_depth") or cfg.depth


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError("cli", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError("cli", f"{path} is not JSON: {exc.msg}") from exc


def _need_input(cfg: RunConfig) -> str:
    if not cfg.inputs:
        raise CliError("cli", f"{cfg.subcommand} needs --in")
    return cfg.inputs[0]


def _sorts(cfg: RunConfig, M: EtaleStructure, default_len: int = 1) -> tuple:
    text = cfg.opt("sorts")
    if text:
        out = tuple(s for s in text.split(",") if s)
    else:
        out = (M.sig.sorts[0],) * default_len
    unknown = [s for s in out if s not in M.sig.sorts]
    if unknown:
        raise CliError("logic", f"unknown sort {unknown[0]!r}")
    return out


def _formula(text: str, sig: Signature, sorts: Sequence[str] = ()):
    try:
        return parse_formula(text, sig, _ctx(sorts))
    except (logic.ParseError, logic.SortError) as exc:
        raise CliError("logic", str(exc)) from exc


def _sig_from_flags(rels: str | None, fns: str | None) -> Signature:
    def pairs(text):
        out = {}
        for item in (text or "").split(","):
            if not item:
                continue
            name, _, n = item.partition(":")
            try:
                out[name] = int(n)
            except ValueError as exc:
                raise CliError("logic", f"bad symbol declaration {item!r}; expected NAME:ARITY") from exc
        return out

    s = logic.DEFAULT_SORT
    try:
        return Signature((s,), {r: (s,) * n for r, n in pairs(rels).items()}, {f: ((s,) * n, s) for f, n in pairs(fns).items()})
    except logic.SortError as exc:
        raise CliError("logic", str(exc)) from exc


# subcommands -------------------------------------------------------------------------


def cmd_parse(cfg: RunConfig):
    text = cfg.opt("formula")
    sig = None
    if cfg.inputs:
        sig = Signature.from_json(_read_json(cfg.inputs[0]))
    phi = _formula(text, sig) if sig else _parse_plain(text)
    payload = {"text": to_text(phi), "ast": formula_to_json(phi), "free": list(free_vars(phi)), "class": classify(phi).label}
    return report("formula", payload), EXIT_OK


def _parse_plain(text):
    try:
        return parse_formula(text)
    except logic.ParseError as exc:
        raise CliError("logic", str(exc)) from exc


def cmd_eval(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    text = cfg.opt("formula")
    phi0 = _parse_plain(text)
    names = tuple(cfg.opt("vars").split(",")) if cfg.opt("vars") else tuple(sorted(free_vars(phi0)))
    sorts = _sorts(cfg, L.M, len(names))
    if len(sorts) != len(names):
        raise CliError("logic", "one sort per variable is required")
    phi = _formula(text, L.M.sig, ())
    logic.infer_sorts(phi, L.M.sig, dict(zip(names, sorts)))
    res = L.M.interpret(phi, names, sorts)
    payload = {
        "formula": to_text(phi),
        "variables": list(names),
        "sorts": list(sorts),
        "open": res.open,
        "points": sorted(_jpoint(e) for e in res.points),
    }
    return report("interpretation", payload), EXIT_OK


def cmd_gen(cfg: RunConfig):
    kind = cfg.opt("generator")
    if kind not in paramgen.GENERATORS:
        raise CliError("paramgen", f"unknown generator {kind!r}; choose from {sorted(paramgen.GENERATORS)}")
    sig = _sig_from_flags(cfg.opt("rels"), cfg.opt("fns"))
    mode = cfg.opt("morleyize", "none")
    mode = {"none": False, "negations": True, "neq": "neq"}[mode]
    try:
        if kind == "fixed-universe":
            inst = paramgen.gen_fixed_universe(sig, cfg.opt("n", 2), cfg.opt("topology", "discrete"), mode, cfg.arity)
        elif kind == "up-to-size":
            inst = paramgen.gen_up_to_size(
                sig, cfg.opt("n", 2), cfg.opt("size_topology", "scott"), cfg.opt("topology", "sierpinski"), mode, cfg.arity
            )
        elif kind == "partially-enumerated":
            inst = paramgen.gen_partially_enumerated(sig, cfg.opt("n", 2), cfg.arity, bool(cfg.opt("total", False)))
        else:
            inst = paramgen.gen_marked(sig, cfg.opt("k", 1), cfg.term_depth, cfg.arity)
    except (ValueError, logic.FragmentError) as exc:
        raise CliError("paramgen", str(exc)) from exc
    rep = inst.report
    force_witnesses(rep)
    bad = rep.validate()
    if bad:
        raise CliError("isogpd", bad[0])
    return instance_bundle(inst.structure, rep, inst.provenance), EXIT_OK


def cmd_iso(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    laws = L.G.check_laws() + L.G.check_action()
    out = report("iso-groupoid", {"groupoid": L.G.to_json(), "open": isogpd.check_open_groupoid(L.G), "problems": laws})
    if laws:
        raise _Fail(out, "isogpd", laws[0])
    return out, EXIT_OK


class _Fail(Exception):
    """A report to emit together with a nonzero status."""

    def __init__(self, payload, module, message, status=EXIT_INVALID):
        super().__init__(f"{module}: {message}")
        self.payload, self.status = payload, status


def cmd_saturate(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    rows, bad = [], []
    for sorts, e in L.report.keys():
        if cfg.opt("sorts") and tuple(sorts) != _sorts(cfg, L.M):
            continue
        sat = L.G.saturation(L.M.power(sorts).total.minimal_open(e), sorts)
        row = {"sorts": list(sorts), "point": _jpoint(e), "saturation": sorted(_jpoint(p) for p in sat)}
        try:
            phi = L.report.witness(sorts, e)
        except GroupoidError:
            phi = None
        if phi is not None:
            row["formula"] = to_text(phi)
            got = L.M.interpret(phi, tuple(_ctx(sorts)), sorts).points
            row["agrees"] = got == sat
            if got != sat:
                bad.append(f"witness for {e!r} does not define its saturation")
        rows.append(row)
    out = report("saturations", {"rows": rows})
    if bad:
        raise _Fail(out, "isogpd", bad[0])
    return out, EXIT_OK


def cmd_certify(cfg: RunConfig):
    data = _read_json(_need_input(cfg))
    M = EtaleStructure.from_json(data["structure"])
    rep = isogpd.certify_sigma1_saturations(M, cfg.arity, cfg.depth, alpha=cfg.opt("alpha", 1))
    out = report("saturation-report", rep.to_json())
    if not rep.complete:
        raise _Fail(out, "isogpd", f"{len(rep.failures)} saturations have no Sigma_1 witness within depth {cfg.depth}", EXIT_BUDGET)
    return out, EXIT_OK


def cmd_morleyize(cfg: RunConfig):
    data = _read_json(_need_input(cfg))
    M = EtaleStructure.from_json(data["structure"])
    mode = cfg.opt("mode", "negations")
    frag = logic.negated_atomics_fragment(M.sig, equality=True, relations=(mode == "negations"))
    res = morleyize_etale(M, frag)
    k = cfg.arity
    G = compute_iso_groupoid(res.structure, k)
    rep = SaturationReport(res.structure, G, k)
    prov = dict(data.get("provenance", {}), morleyize=mode)
    out = instance_bundle(res.structure, rep, prov)
    out["axioms"] = [{"schema": n, "sentence": to_text(s)} for n, s in res.morley.axioms]
    return out, EXIT_OK


def cmd_axiomatize(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity, _search_depth(cfg))
    try:
        bundle = axiom.pi2_axiomatize(L.M, L.report)
    except (GroupoidError, axiom.AxiomError) as exc:
        raise CliError("isogpd", str(exc), EXIT_BUDGET) from exc
    return report("axioms", {"axioms": bundle.to_json(), "count": bundle.count()}), EXIT_OK


def cmd_verify_ax(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    if len(cfg.inputs) < 2:
        raise CliError("cli", "verify-ax needs --in INSTANCE --in AXIOMS")
    data = _read_json(cfg.inputs[1])
    rows = data["axioms"] if isinstance(data, dict) else data
    bundle = axiom.AxiomBundle.from_json(rows, L.M.sig)
    ver = axiom.verify_axiomatization(bundle, L.M, cfg.bound)
    out = report("verification", dict(ver.to_json(), bound=cfg.bound))
    if not ver.ok:
        raise _Fail(out, "axiom", "axioms are unsound or incomplete at this bound")
    return out, EXIT_OK


def _code_arg(cfg: RunConfig, M: EtaleStructure, sorts):
    text = cfg.opt("code")
    if text is None:
        raise CliError("cli", "--code is required")
    data = _read_json(text) if not text.lstrip().startswith("{") else json.loads(text)
    code = code_from_json(data)
    try:
        pts, rank = realize_borel(M.power(sorts).total, code)
    except finspace.BorelError as exc:
        raise CliError("finspace", str(exc)) from exc
    return code, pts, rank


def cmd_lopez_escobar(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity, _search_depth(cfg))
    sorts = _sorts(cfg, L.M)
    code, pts, rank = _code_arg(cfg, L.M, sorts)
    try:
        phi = isogpd.lopez_escobar(L.M, L.G, L.report, code, sorts)
    except GroupoidError as exc:
        raise CliError("isogpd", str(exc), EXIT_BUDGET) from exc
    got = L.M.interpret(phi, tuple(_ctx(sorts)), sorts).points
    want = L.G.vaught_transform(range(len(L.G)), pts, sorts)
    cls = classify(phi)
    payload = {"formula": to_text(phi), "class": cls.label, "rank": rank, "agrees": got == want}
    out = report("lopez-escobar", payload)
    if got != want:
        raise _Fail(out, "isogpd", "formula does not define the Vaught transform")
    if not cls.is_sigma(rank):
        raise _Fail(out, "isogpd", f"formula is {cls.label}, above the rank of the code")
    return out, EXIT_OK


def cmd_vaught(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    sorts = _sorts(cfg, L.M)
    _, pts, rank = _code_arg(cfg, L.M, sorts)
    w = cfg.opt("within")
    within = range(len(L.G)) if not w else [L.G.ids.index(g) for g in w.split(",")]
    res = L.G.vaught_transform(within, pts, sorts)
    payload = {"sorts": list(sorts), "rank": rank, "transform": sorted(_jpoint(e) for e in res)}
    return report("vaught", payload), EXIT_OK


def _iso_space(cfg: RunConfig, L: Loaded):
    kind = cfg.opt("space", "power")
    G = L.G
    if kind == "power":
        return imaginary.EtaleIsoSpace.from_power(G, _sorts(cfg, L.M))
    if kind == "base":
        return imaginary.EtaleIsoSpace.trivial(G)
    if kind == "open":
        sorts = _sorts(cfg, L.M)
        phi = _formula(cfg.opt("formula"), L.M.sig, sorts)
        A = imaginary.EtaleIsoSpace.from_power(G, sorts)
        return A.restrict(L.M.interpret(phi, tuple(_ctx(sorts)), sorts).points)
    if kind == "union":
        return imaginary.iso_disjoint_union([imaginary.EtaleIsoSpace.from_power(G, _sorts(cfg, L.M)), imaginary.EtaleIsoSpace.trivial(G)])
    raise CliError("cli", f"unknown space {kind!r}; choose power, base, open or union")


def cmd_jt(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity, _search_depth(cfg))
    try:
        A = _iso_space(cfg, L)
    except (SpaceError, imaginary.ImaginaryError) as exc:
        raise CliError("imaginary", str(exc)) from exc
    try:
        syn = imaginary.joyal_tierney_synthesize(L.M, L.G, L.report, A, cfg.arity)
    except imaginary.SynthesisError as exc:
        raise CliError("imaginary", str(exc)) from exc
    except GroupoidError as exc:
        raise CliError("isogpd", str(exc), EXIT_BUDGET) from exc
    payload = {"imaginary": syn.imaginary.to_json(), "sigma1": syn.imaginary.is_sigma1, "points": len(A.points)}
    return report("imaginary", payload), EXIT_OK



def cmd_omit(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity, _search_depth(cfg))
    texts = cfg.opt("formulas") or []
    sorts_list = cfg.opt("formula_sorts") or []
    targets = []
    for i, text in enumerate(texts):
        st = tuple(sorts_list[i].split(",")) if i < len(sorts_list) else (L.M.sig.sorts[0],) * len(free_vars(_parse_plain(text)))
        targets.append((_formula(text, L.M.sig, st), st))
    try:
        res = axiom.omitting_types(L.M, L.report, targets)
    except GroupoidError as exc:
        raise CliError("isogpd", str(exc), EXIT_BUDGET) from exc
    direct = axiom.omitting_types_direct(L.M, targets)
    if isinstance(res, axiom.DensityFailure):
        payload = {"omitted": False, "index": res.index, "theta": to_text(res.theta), "point": _jpoint(res.point)}
    else:
        payload = {"omitted": True, "point": finspace._jpt(res.point), "direct": sorted(finspace._jpt(x) for x in direct)}
        if res.point not in direct:
            raise _Fail(report("omitting-types", payload), "axiom", "returned fiber fails the direct scan")
    return report("omitting-types", payload), EXIT_OK


def cmd_scott(cfg: RunConfig):
    L = load_instance(_need_input(cfg), cfg.arity)
    pts = [finspace._pt(json.loads(p)) if p.startswith("[") else p for p in (cfg.opt("points") or [])]
    pts = pts or list(L.M.base.points)
    budget = axiom.ScottBudget(depth=cfg.depth)
    rows = []
    for x in pts:
        if x not in L.M.base:
            raise CliError("etale", f"unknown base point {x!r}")
        rep = axiom.scott_conditions(L.M, L.G, x, cfg.opt("alpha", 1), budget)
        rows.append(dict(rep.to_json(), point=finspace._jpt(x)))
    return report("scott", {"reports": rows}), EXIT_OK


def cmd_reconstruct(cfg: RunConfig):
    if cfg.inputs:
        G = reconstruct.TopGroupoid.from_json(_read_json(cfg.inputs[0]))
    else:
        G = reconstruct.random_groupoid(make_rng(cfg.seed), cfg.opt("max_morphisms", 12))
    problems = G.validate()
    if problems:
        raise CliError("reconstruct", problems[0])
    try:
        res = reconstruct.reconstruct(G)
    except reconstruct.GroupoidSpecError as exc:
        raise CliError("reconstruct", str(exc)) from exc
    payload = {
        "groupoid": G.to_json(),
        "sorts": len(res.structure.cosets),
        "functor": res.report.to_json(),
        "coherence": res.coherence,
        "ok": res.ok,
    }
    out = report("reconstruction", payload)
    if not res.ok:
        raise _Fail(out, "reconstruct", (res.report.problems + res.coherence + ["reconstruction failed"])[0])
    return out, EXIT_OK


def cmd_selftest(cfg: RunConfig):
    from .selftest import run_selftest

    results = run_selftest(cfg.opt("profile", "quick"), cfg.seed)
    rows = [r.to_json() for r in results]
    out = report("selftest", {"profile": cfg.opt("profile", "quick"), "criteria": rows, "passed": all(r.passed for r in results)})
    if not all(r.passed for r in results):
        raise _Fail(out, "selftest", "some criteria failed")
    return out, EXIT_OK


HANDLERS = {
    "parse": cmd_parse,
    "eval": cmd_eval,
    "gen": cmd_gen,
    "iso": cmd_iso,
    "saturate": cmd_saturate,
    "certify": cmd_certify,
    "morleyize": cmd_morleyize,
    "axiomatize": cmd_axiomatize,
    "verify-ax": cmd_verify_ax,
    "lopez-escobar": cmd_lopez_escobar,
    "vaught": cmd_vaught,
    "jt": cmd_jt,
    "omit": cmd_omit,
    "scott": cmd_scott,
    "reconstruct": cmd_reconstruct,
    "selftest": cmd_selftest,
}


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    status = EXIT_OK
    try:
        payload, status = HANDLERS[cfg.subcommand](cfg)
    except _Fail as exc:
        payload, status = exc.payload, exc.status
        print(f"error: {exc}", file=stderr)
    except CliError as exc:
        print(f"error: {exc}", file=stderr)
        return exc.status
    text = dumps(payload)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return status


# argument parsing ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="inputs", action="append", default=[], help="input JSON file (repeatable)")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--arity", type=int, default=None, help="fiber-power arity")
    common.add_argument("--depth", type=int, default=3, help="formula search depth")
    common.add_argument("--bound", type=int, default=3, help="model size bound")
    common.add_argument("--term-depth", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--sorts", help="comma separated sorts of a fiber power")
    common.add_argument("--search-depth", type=int, help="search depth for witnesses missing from the instance file (default: --depth)")

    p = argparse.ArgumentParser(prog="etale-lab", description="Finite étale structures and their isomorphism groupoids.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("parse", parents=[common], help="parse and pretty-print a formula")
    s.add_argument("formula")
    s = sub.add_parser("eval", parents=[common], help="interpret a formula in an instance")
    s.add_argument("formula")
    s.add_argument("--vars")
    s = sub.add_parser("gen", parents=[common], help="generate a parametrizing instance")
    s.add_argument("generator", choices=sorted(paramgen.GENERATORS))
    s.add_argument("--rels", default="P:1")
    s.add_argument("--fns")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--topology", choices=["discrete", "sierpinski"])
    s.add_argument("--size-topology", choices=["discrete", "scott"])
    s.add_argument("--morleyize", choices=["none", "negations", "neq"], default="none")
    s.add_argument("--total", action="store_true")
    for name, text in (
        ("iso", "isomorphism groupoid and its laws"),
        ("saturate", "brute-force saturations of basic opens"),
        ("certify", "search Sigma_1 saturation witnesses"),
        ("axiomatize", "Pi_2 axioms for the parametrized class"),
        ("verify-ax", "check axioms against all models up to --bound"),
    ):
        s = sub.add_parser(name, parents=[common], help=text)
        if name == "certify":
            s.add_argument("--alpha", type=int, default=1)
    s = sub.add_parser("morleyize", parents=[common], help="Morleyize negated atomics")
    s.add_argument("--mode", choices=["negations", "neq"], default="negations")
    for name in ("lopez-escobar", "vaught"):
        s = sub.add_parser(name, parents=[common], help="Borel code transform")
        s.add_argument("--code", required=True, help="code JSON file or literal")
        if name == "vaught":
            s.add_argument("--within", help="comma separated morphism ids")
    s = sub.add_parser("jt", parents=[common], help="name an Iso-space by an imaginary")
    s.add_argument("--space", choices=["power", "base", "open", "union"], default="power")
    s.add_argument("--formula")
    s = sub.add_parser("omit", parents=[common], help="omit types via Baire category")
    s.add_argument("--formula", dest="formulas", action="append", default=[])
    s.add_argument("--formula-sorts", action="append", default=[])
    s = sub.add_parser("scott", parents=[common], help="Scott-rank conditions at base points")
    s.add_argument("--point", dest="points", action="append", default=[])
    s.add_argument("--alpha", type=int, default=1)
    s = sub.add_parser("reconstruct", parents=[common], help="rebuild a groupoid from its canonical structure")
    s.add_argument("--max-morphisms", type=int, default=12)
    s = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    s.add_argument("--profile", choices=["quick", "full"], default="quick")
    return p


_DEFAULT_ARITY = {"gen": 2, "certify": 2, "iso": 2, "saturate": 2, "morleyize": 2}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    opts = {k: v for k, v in vars(ns).items() if k not in {"subcommand", "inputs", "arity", "depth", "bound", "term_depth", "out", "seed"}}
    arity = ns.arity if ns.arity is not None else _DEFAULT_ARITY.get(ns.subcommand, 0)
    return RunConfig(ns.subcommand, list(ns.inputs), arity or _file_arity(ns), ns.depth, ns.bound, ns.term_depth, ns.out, ns.seed, opts)


def _file_arity(ns) -> int:
    """Arity stored in the first input file, else 1."""
    if ns.inputs:
        try:
            with open(ns.inputs[0], encoding="utf-8") as fh:
                return int(json.load(fh).get("arity", 1)) or 1
        except (OSError, ValueError, AttributeError):
            pass
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
