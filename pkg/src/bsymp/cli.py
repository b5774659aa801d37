"""Command-line front end.

Exit codes: 0 when every task passes, 1 when a task fails or raises, 2 for
unreadable or malformed input. Reports are JSON with sorted keys, so identical
inputs and flags give byte-identical output.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenario as sc
from .errors import BsympError, ParseError, ScenarioError
from .report import jsonable

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _common(p):
    p.add_argument("--grid", type=int, help="sample points per axis")
    p.add_argument("--tol", type=float, help="override the task's main tolerance")
    p.add_argument("--seed", type=int, help="random seed (overrides the scenario seed)")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--profile-C", dest="C", type=float, help="support radius of the twist profile")
    p.add_argument("--period", type=float, help="period of the mapping-torus 1-form")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bsymp", description="Construct and verify b-symplectic structures.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute every task of a scenario file")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--in", dest="infile")
    _common(p)

    p = sub.add_parser("verify", help="run the verification tasks of a scenario file")
    p.add_argument("--in", dest="infile", required=True)
    _common(p)

    p = sub.add_parser("double", help="double the trivial cobordism over a scenario's pair")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--pair", help="name of the cosymplectic pair (default: the only one)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--both-out", dest="tags", action="store_const", const=("out", "out"))
    g.add_argument("--both-in", dest="tags", action="store_const", const=("in", "in"))
    g.add_argument("--opposite", dest="tags", action="store_const", const=("in", "out"))
    _common(p)

    p = sub.add_parser("torus", help="symplectic mapping torus over (T^2, dx^dy)")
    p.add_argument("--holonomy", choices=("identity", "translation", "twist"), default="identity")
    p.add_argument("--shift", type=float, default=0.5, help="translation amount")
    p.add_argument("--filling", action="store_true", help="also verify the product filling")
    _common(p)

    p = sub.add_parser("twist", help="model Dehn twist suite on T*S^(n-1)")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--points", type=int, default=20, help="points for the flow comparison")
    _common(p)

    p = sub.add_parser("chain", help="cobordism certificate chain for a Dehn word")
    p.add_argument("--word", required=True)
    p.add_argument("--spheres", help="comma-separated sphere labels to accept")
    _common(p)

    p = sub.add_parser("report", help="summarise a saved report")
    p.add_argument("--in", dest="infile", required=True)
    return ap


def _emit(tree, out) -> int:
    text = json.dumps(jsonable(tree), sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if tree.get("passed") else EXIT_FAIL


def _overrides(a):
    return {"grid": a.grid, "tol": a.tol, "C": getattr(a, "C", None), "period": getattr(a, "period", None)}


def _single(op, task, a):
    scn = sc.Scenario(op, a.seed or 0, tasks=[task])
    return sc.run_scenario(scn, _overrides(a))


def _cmd_run(a):
    path = a.infile or a.scenario
    if not path:
        raise ScenarioError("no scenario given")
    scn = sc.load_scenario(path)
    if a.seed is not None:
        scn.seed = a.seed
    return sc.run_scenario(scn, _overrides(a))


def _cmd_double(a):
    scn = sc.load_scenario(a.infile)
    from .cosymplectic import CosymplecticPair
    pairs = sorted(k for k, v in scn.fields.items() if isinstance(v, CosymplecticPair))
    name = a.pair or (pairs[0] if len(pairs) == 1 else None)
    if name is None:
        raise ScenarioError(f"choose a pair with --pair (found {pairs or 'none'})")
    if name not in pairs:
        raise ScenarioError(f"{name!r} is not a cosymplectic pair in the scenario")
    task = {"op": "double", "pair": name, "tags": list(a.tags or ("out", "out"))}
    run = sc.Scenario(scn.name, scn.seed if a.seed is None else a.seed, scn.charts, scn.fields, [task])
    return sc.run_scenario(run, _overrides(a))


def _cmd_torus(a):
    task = {"op": "mapping_torus", "holonomy": a.holonomy, "shift": a.shift, "filling": a.filling}
    return _single("torus", task, a)


def _cmd_twist(a):
    task = {"op": "twist", "n": a.n, "points": a.points}
    if a.seed is not None:
        task["seed"] = a.seed
    return _single("twist", task, a)


def _cmd_chain(a):
    task = {"op": "chain", "word": a.word}
    if a.spheres:
        task["spheres"] = [s.strip() for s in a.spheres.split(",") if s.strip()]
    return _single("chain", task, a)


def _cmd_report(a):
    try:
        tree = json.loads(Path(a.infile).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {a.infile}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{a.infile} is not a report: {exc}") from None
    if not isinstance(tree, dict) or "tasks" not in tree:
        raise ParseError(f"{a.infile} is not a report")
    lines = [f"scenario {tree.get('scenario')}: {'PASS' if tree.get('passed') else 'FAIL'}"]
    for t in tree["tasks"]:
        lines.append(f"  [{t.get('index')}] {t.get('op')}: {'pass' if t.get('passed') else 'FAIL'}")
        for r in t.get("residuals", []):
            cmp = "<" if r["kind"] == "max" else ">"
            lines.append(f"      {r['name']}: {r['value']} {cmp} {r['tol']} "
                         f"{'ok' if r['passed'] else 'FAIL'}")
        for k, v in sorted(t.get("checks", {}).items()):
            lines.append(f"      {k}: {'ok' if v else 'FAIL'}")
        if "error" in t:
            lines.append(f"      error: {t['error']}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if tree.get("passed") else EXIT_FAIL


_COMMANDS = {"run": _cmd_run, "verify": _cmd_run, "double": _cmd_double, "torus": _cmd_torus,
             "twist": _cmd_twist, "chain": _cmd_chain}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(args)
        tree = _COMMANDS[args.command](args)
    except (ParseError, ScenarioError) as exc:
        print(f"bsymp: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BsympError as exc:
        print(f"bsymp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    code = _emit(tree, args.out)
    failed = [f"{t['index']}:{t['op']}" for t in tree["tasks"] if not t["passed"]]
    if failed:
        print(f"bsymp: failed tasks {', '.join(failed)}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
