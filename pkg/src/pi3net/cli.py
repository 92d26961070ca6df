"""Command-line front end.

Exit codes: 0 success or true verdict, 1 false verdict, 2 input error,
3 violated precondition (non-live m0, non-ergodic net).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path

import networkx as nx

from .bags import StructureError, check_pi2, infer_pi3
from .ergodicity import cover_bound, is_ergodic
from .model import Model, model_from_netfile
from .netcore import NetError, ParseError, parse_net, serialize_net, validate_net
from .normalizer import NotErgodic, normalizing_constant
from .oracle import MAX_DIRECT_STATES, Deadlock, constant_bracketed, enumerate_reachable, gillespie
from .qualitative import (NotLive, gen_independent_set_net, invariant_system, is_bounded, is_live,
                          is_reachable, reachset_description)
from .stochastic import weight

EXIT_OK, EXIT_FALSE, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def rational(x: Fraction) -> dict:
    x = Fraction(x)
    return {"num": str(x.numerator), "den": str(x.denominator)}


def approx(x: Fraction) -> str:
    """15 significant digits, computed exactly from the rational."""
    x = Fraction(x)
    with localcontext() as ctx:
        ctx.prec = 15
        return str(Decimal(x.numerator) / Decimal(x.denominator))


def _read(path: str) -> tuple[str, str]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc.strerror}") from None
    return data.decode("utf-8"), hashlib.sha256(data).hexdigest()


def _load(path: str) -> tuple[Model, dict]:
    text, digest = _read(path)
    nf = parse_net(text)
    try:
        model = model_from_netfile(nf)
    except StructureError as exc:
        raise CliError(EXIT_INPUT, f"not a layered product-form net: {exc}") from None
    return model, {"file": path, "sha256": digest}


def _marking(model: Model, text: str | None):
    return model.m0 if text is None else model.marking(text)


def _marking_json(model: Model, m) -> dict:
    return model.net.as_dict(m)


# --- commands --------------------------------------------------------------------

def cmd_validate(args) -> tuple[int, dict]:
    text, digest = _read(args.file)
    nf = parse_net(text)
    violations = validate_net(nf.net)
    rep: dict = {"input": {"file": args.file, "sha256": digest}, "violations": violations}
    pi2 = check_pi2(nf.net)
    rep["weakly_reversible"] = pi2.weakly_reversible
    rep["witnesses_exist"] = pi2.witnesses is not None
    accepted = not violations and pi2.is_pi2
    if accepted:
        try:
            s = infer_pi3(nf.net)
            if nf.is_open:
                from .bags import derive_open
                _, s = derive_open(nf.net, s, nf.external)
            rep["structure"] = s.describe()
        except StructureError as exc:
            accepted = False
            rep["reason"] = str(exc)
    rep["accepted"] = accepted
    return (EXIT_OK if accepted else EXIT_FALSE), rep


def cmd_live(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    m = _marking(model, args.marking)
    rep = is_live(model.s, m)
    out = {
        "input": inp,
        "marking": _marking_json(model, m),
        "live": rep.live,
        "layers": [{"layer": i, "live": f} for i, f in enumerate(rep.flags, start=1)],
        "violations": list(rep.violations),
    }
    return (EXIT_OK if rep.live else EXIT_FALSE), out


def cmd_reach(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    out: dict = {"input": inp, "m0": _marking_json(model, model.m0)}
    if args.describe:
        out["description"] = reachset_description(model.s, model.m0)
    if args.marking is None:
        if not args.describe:
            raise CliError(EXIT_INPUT, "reach needs --marking or --describe")
        return EXIT_OK, out
    m = model.marking(args.marking)
    out["marking"] = _marking_json(model, m)
    if is_live(model.s, model.m0).live:
        ok = is_reachable(model.s, model.m0, m)
        out.update({"reachable": ok, "method": "invariants"})
        return (EXIT_OK if ok else EXIT_FALSE), out
    # The invariant test is only valid from a live m0; fall back to bounded search.
    cutoff = args.cutoff if args.cutoff is not None else 2 * max(sum(model.m0), sum(m)) + model.net.max_weight
    res = enumerate_reachable(model.net, model.m0, cutoff, limit=MAX_DIRECT_STATES)
    ok = m in res.markings or m in res.frontier
    out.update({"reachable": ok, "method": "oracle", "cutoff": cutoff,
                "definitive": ok or not res.frontier_truncated})
    return (EXIT_OK if ok else EXIT_FALSE), out


def cmd_bounded(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    ok, bound = is_bounded(model.s, model.m0)
    out = {"input": inp, "bounded": ok, "token_bound": bound,
           "invariant_constants": list(invariant_system(model.s, model.m0).constants)}
    return (EXIT_OK if ok else EXIT_FALSE), out


def cmd_ergodic(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    rep = is_ergodic(model.pf, model.s, model.m0)
    out: dict = {"input": inp, "ergodic": rep.ergodic}
    if model.s.is_open:
        from .ergodicity import family_F
        fam = family_F(model.s)
        out["generators"] = [
            {"kind": g.kind, "vector": g.as_dict(model.net.places), "weight": rational(v),
             "weight_approx": approx(v), "violated": v >= 1}
            for g, v in zip(fam, rep.values)
        ]
        out["cover_bound"] = cover_bound(model.s, model.m0).G_bound
    return (EXIT_OK if rep.ergodic else EXIT_FALSE), out


def cmd_constant(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    value = normalizing_constant(model.s, model.pf, model.m0)
    out: dict = {"input": inp, "constant": rational(value), "constant_approx": approx(value)}
    code = EXIT_OK
    if args.oracle is not None:
        eps = Fraction(args.oracle)
        if not model.s.is_open:
            raise CliError(EXIT_INPUT, "--oracle applies to open nets")
        br = constant_bracketed(model.s, model.pf, model.m0, eps)
        inside = br.contains(value)
        out["oracle"] = {
            "lower": rational(br.lower), "upper": rational(br.upper),
            "lower_approx": approx(br.lower), "upper_approx": approx(br.upper),
            "eps": rational(eps), "cutoff": br.cutoff, "converged": br.converged, "contains": inside,
        }
        if not (inside and br.converged):
            code = EXIT_FALSE
    return code, out


def cmd_prob(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    m = model.marking(args.marking)
    out: dict = {"input": inp, "marking": _marking_json(model, m)}
    if not is_reachable(model.s, model.m0, m):
        out["reachable"] = False
        return EXIT_FALSE, out
    value = normalizing_constant(model.s, model.pf, model.m0)
    p = weight(model.pf, m) / value
    out.update({"reachable": True, "probability": rational(p), "probability_approx": approx(p)})
    return EXIT_OK, out


def _plot(path: str, model: Model, rows: list[dict]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [r["label"] for r in rows]
    xs = range(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(rows)), 4.0))
    ax.bar([x - 0.2 for x in xs], [r["empirical"] for r in rows], width=0.4, label="simulated")
    ax.bar([x + 0.2 for x in xs], [float(r["analytic_value"]) for r in rows], width=0.4, label="exact")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.set_title(f"{model.net.name}: occupancy vs product form")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_simulate(args) -> tuple[int, dict]:
    model, inp = _load(args.file)
    occ = gillespie(model.net, model.rates, model.m0, args.steps, args.seed)
    value = normalizing_constant(model.s, model.pf, model.m0)
    top = sorted(occ, key=lambda m: (-weight(model.pf, m), m))[: args.top]
    rows = []
    tv = Fraction(0)
    for m in top:
        exact = weight(model.pf, m) / value
        emp = occ.get(m, 0.0)
        tv += abs(Fraction(emp) - exact)
        rows.append({"marking": _marking_json(model, m), "label": model.net.format_marking(m),
                     "empirical": emp, "analytic": rational(exact), "analytic_value": exact,
                     "analytic_approx": approx(exact)})
    out = {"input": inp, "steps": args.steps, "seed": args.seed, "states_visited": len(occ),
           "total_variation_approx": approx(tv / 2), "table": rows}
    if args.plot:
        _plot(args.plot, model, rows)
        out["plot"] = args.plot
    for r in rows:
        del r["analytic_value"]
    return EXIT_OK, out


def read_graph(text: str) -> nx.Graph:
    """Edge list: ``u v`` per line; a lone ``v`` declares an isolated vertex."""
    g = nx.Graph()
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) == 1:
            g.add_node(line[0])
        elif len(line) == 2 and line[0] != line[1]:
            g.add_edge(line[0], line[1])
        else:
            raise CliError(EXIT_INPUT, f"graph line {no}: expected 'u v' or 'v'")
    return g


def cmd_genhard(args) -> tuple[int, dict]:
    text, digest = _read(args.graph)
    g = read_graph(text)
    if args.k < 1 or args.k > g.number_of_nodes():
        raise CliError(EXIT_INPUT, "k must satisfy 1 <= k <= number of vertices")
    nf = gen_independent_set_net(g, args.k)
    net_text = serialize_net(nf)
    out: dict = {"input": {"file": args.graph, "sha256": digest}, "k": args.k,
                 "vertices": g.number_of_nodes(), "edges": g.number_of_edges()}
    if args.output:
        Path(args.output).write_text(net_text, encoding="utf-8")
        out["output"] = args.output
    else:
        out["net"] = net_text
    return EXIT_OK, out


# --- text rendering -----------------------------------------------------------------

def _frac_text(d: dict) -> str:
    return d["num"] if d["den"] == "1" else f"{d['num']}/{d['den']}"


def render_text(rep: dict) -> str:
    cmd = rep["command"]
    lines = []
    if "error" in rep:
        return f"error: {rep['error']}"
    if cmd == "genhard" and "net" in rep:
        return rep["net"].rstrip("\n")
    for key, val in rep.items():
        if key in ("command", "input", "exit_code", "timing_ms", "net"):
            continue
        if isinstance(val, dict) and set(val) == {"num", "den"}:
            lines.append(f"{key}: {_frac_text(val)}")
        elif key == "table":
            lines.append(f"{'marking':40s} {'simulated':>12s} {'exact':>18s}")
            for r in val:
                lines.append(f"{r['label']:40s} {r['empirical']:12.6f} {r['analytic_approx']:>18s}")
        elif key == "description":
            for e in val["equalities"]:
                lines.append(f"invariant: {e['text']}")
            for e in val["live"]:
                lines.append(f"live: {e['text']}")
        elif key == "generators":
            for g in val:
                vec = " + ".join(f"{k}{p}" if k > 1 else p for p, k in g["vector"].items())
                mark = "  VIOLATED" if g["violated"] else ""
                lines.append(f"generator {g['kind']}: {vec}  weight {g['weight_approx']}{mark}")
        elif key == "layers":
            lines.append("layers: " + " ".join(f"{x['layer']}:{'ok' if x['live'] else 'FAIL'}" for x in val))
        elif isinstance(val, (dict, list)):
            lines.append(f"{key}: {json.dumps(val, default=str)}")
        else:
            lines.append(f"{key}: {val}")
    return "\n".join(lines)


# --- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pi3net", description="Analyse layered product-form stochastic Petri nets.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("validate", cmd_validate, "check the structural class")
    sp.add_argument("file")
    sp = add("live", cmd_live, "liveness verdict per layer")
    sp.add_argument("file")
    sp.add_argument("--marking", help="marking to test instead of m0, e.g. p=1,q=2")
    sp = add("reach", cmd_reach, "reachability from m0")
    sp.add_argument("file")
    sp.add_argument("--marking")
    sp.add_argument("--describe", action="store_true", help="print the constraints defining the reachability set")
    sp.add_argument("--cutoff", type=int, help="token cutoff for the search used when m0 is not live")
    sp = add("bounded", cmd_bounded, "boundedness verdict and token bound")
    sp.add_argument("file")
    sp = add("ergodic", cmd_ergodic, "ergodicity verdict and lattice generators")
    sp.add_argument("file")
    sp = add("constant", cmd_constant, "exact normalizing constant")
    sp.add_argument("file")
    sp.add_argument("--oracle", metavar="EPS", help="also bracket the constant by enumeration to within EPS")
    sp = add("prob", cmd_prob, "exact steady-state probability of a marking")
    sp.add_argument("file")
    sp.add_argument("--marking", required=True)
    sp = add("simulate", cmd_simulate, "simulate and compare with the exact distribution")
    sp.add_argument("file")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--top", type=int, default=10, help="number of most probable states to report")
    sp.add_argument("--plot", metavar="PNG", help="write a bar chart of the comparison")
    sp = add("genhard", cmd_genhard, "reduction net for independent set of size k")
    sp.add_argument("graph")
    sp.add_argument("k", type=int)
    sp.add_argument("-o", "--output")
    return p


def run(argv=None) -> tuple[int, dict, str]:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = EXIT_OK if exc.code == 0 else EXIT_INPUT
        return code, {"command": None, "error": "bad arguments", "exit_code": code}, "text"
    t0 = time.perf_counter()
    try:
        code, rep = args.fn(args)
    except CliError as exc:
        code, rep = exc.code, {"error": str(exc)}
    except (NotLive, NotErgodic, Deadlock) as exc:
        code, rep = EXIT_PRECONDITION, {"error": str(exc)}
    except (ParseError, NetError, ValueError, ArithmeticError) as exc:
        code, rep = EXIT_INPUT, {"error": str(exc)}
    rep = {"command": args.command, **rep, "exit_code": code,
           "timing_ms": round((time.perf_counter() - t0) * 1000, 3)}
    return code, rep, args.format


def main(argv=None) -> int:
    code, rep, fmt = run(argv)
    if rep.get("command") is None:
        return code
    if fmt == "json":
        print(json.dumps(rep, indent=2))
    else:
        stream = sys.stderr if "error" in rep else sys.stdout
        print(render_text(rep), file=stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
