"""Scenario files: charts, fields and an ordered task list in YAML.

Example::

    name: collar
    seed: 0
    charts:
      T3: {coords: [x, y, z], periodic: [true, true, true], bounds: [[0, 2pi], [0, 2pi], [0, 2pi]]}
    fields:
      theta: {kind: form, chart: T3, degree: 1, components: {z: 1}}
      eta:   {kind: form, chart: T3, degree: 2, components: {x y: 1}}
      pair:  {kind: pair, theta: theta, eta: eta}
    tasks:
      - {op: roundtrip, pair: pair}
      - {op: double, pair: pair, tags: [out, out], save: dbl}

Component values are numbers or prefix-notation expressions such as
``(* t (sin y))``. Keys of ``components`` list coordinate names separated by
spaces (``"1"`` for a function). A task may ``save`` its construction under a
new name, which later tasks can reference; references to names that are not
yet defined are rejected, so the task graph is acyclic by construction.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bgeometry, construct, cosymplectic, dehn
from .chartcalc import ChartDomain, ChartMap, FormField, MultivectorField, SampleGrid
from .errors import BsympError, ParseError, ScenarioError
from .expr import as_expr, parse
from .report import VerificationReport, jsonable

__all__ = ["Scenario", "load_scenario", "parse_scenario", "run_scenario", "bundled", "BUNDLED_DIR",
           "OPS"]

BUNDLED_DIR = Path(__file__).parent / "scenarios"
_PI = re.compile(r"^\s*(-?\d*\.?\d*)\s*\*?\s*pi\s*$")


def _number(v) -> float:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str):
        m = _PI.match(v)
        if m:
            c = m.group(1)
            return (float(c) if c not in ("", "-") else (-1.0 if c == "-" else 1.0)) * math.pi
        try:
            return float(v)
        except ValueError:
            pass
    raise ParseError(f"expected a number, got {v!r}")


def _expr(v):
    if isinstance(v, bool):
        raise ParseError("booleans are not expressions")
    if isinstance(v, (int, float)):
        return as_expr(float(v))
    if isinstance(v, str):
        try:
            return as_expr(_number(v))
        except ParseError:
            return parse(v)
    raise ParseError(f"expected an expression, got {v!r}")


@dataclass
class Scenario:
    name: str
    seed: int = 0
    charts: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)
    source: str = ""


def _chart(name, spec) -> ChartDomain:
    if not isinstance(spec, dict) or "coords" not in spec:
        raise ParseError(f"chart {name!r} needs 'coords'")
    coords = tuple(str(c) for c in spec["coords"])
    periodic = tuple(bool(p) for p in spec.get("periodic", [False] * len(coords)))
    default = [[0, "2pi"] if p else [-1, 1] for p in periodic]
    bounds = tuple((_number(a), _number(b)) for a, b in spec.get("bounds", default))
    if not len(periodic) == len(bounds) == len(coords):
        raise ParseError(f"chart {name!r}: coords, bounds and periodic differ in length")
    try:
        return ChartDomain(coords, bounds, periodic)
    except (ValueError, BsympError) as exc:
        raise ParseError(f"chart {name!r}: {exc}") from None


def _alternating(name, spec, charts, cls):
    chart = charts.get(spec.get("chart"))
    if chart is None:
        raise ScenarioError(f"field {name!r} references unknown chart {spec.get('chart')!r}")
    degree = int(spec.get("degree", 1))
    comps = {}
    for key, val in (spec.get("components") or {}).items():
        names = [] if str(key).strip() in ("1", "") else str(key).split()
        if len(names) != degree:
            raise ParseError(f"field {name!r}: key {key!r} does not have {degree} coordinates")
        try:
            idx = tuple(chart.index(n) for n in names)
        except (KeyError, ValueError, BsympError):
            raise ScenarioError(f"field {name!r}: unknown coordinate in {key!r}") from None
        if len(set(idx)) != len(idx):
            raise ParseError(f"field {name!r}: repeated coordinate in {key!r}")
        order = sorted(range(len(idx)), key=lambda k: idx[k])
        sign = _perm_sign(order)
        e = _expr(val)
        s_idx = tuple(idx[k] for k in order)
        e = e * float(sign)
        comps[s_idx] = comps[s_idx] + e if s_idx in comps else e
    return cls(chart, degree, comps)


def _perm_sign(order) -> int:
    sign, seen = 1, list(order)
    for i in range(len(seen)):
        for j in range(i + 1, len(seen)):
            if seen[i] > seen[j]:
                sign = -sign
    return sign


def _ref(env, name, kind=None):
    if name not in env:
        raise ScenarioError(f"reference to undefined name {name!r}")
    obj = env[name]
    if kind is not None and not isinstance(obj, kind):
        raise ScenarioError(f"{name!r} is a {type(obj).__name__}, expected {kind.__name__}")
    return obj


def _field(name, spec, charts, env):
    kind = spec.get("kind")
    if kind == "form":
        return _alternating(name, spec, charts, FormField)
    if kind in ("multivector", "bivector"):
        spec = dict(spec)
        spec.setdefault("degree", 2)
        return _alternating(name, spec, charts, MultivectorField)
    if kind == "pair":
        return cosymplectic.CosymplecticPair(_ref(env, spec["theta"]).domain,
                                             _ref(env, spec["theta"], FormField),
                                             _ref(env, spec["eta"], FormField))
    if kind == "bform":
        alpha = _ref(env, spec["alpha"], FormField)
        beta = _ref(env, spec["beta"], FormField)
        collar = bgeometry.CollarChart.around(beta.domain, spec.get("t", beta.domain.coords[0]))
        return bgeometry.BForm(collar, alpha, beta)
    if kind == "map":
        src = charts.get(spec.get("source"))
        tgt = charts.get(spec.get("target"))
        if src is None or tgt is None:
            raise ScenarioError(f"map {name!r} references unknown charts")
        comps = {c: _expr(spec["components"][c]) for c in tgt.coords}
        return ChartMap(src, tgt, comps, name=name)
    raise ParseError(f"field {name!r} has unknown kind {kind!r}")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{source}: not valid YAML ({exc})") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a mapping")
    unknown = set(data) - {"name", "seed", "charts", "fields", "tasks", "description"}
    if unknown:
        raise ParseError(f"{source}: unknown sections {sorted(unknown)}")
    try:
        charts = {str(k): _chart(k, v) for k, v in (data.get("charts") or {}).items()}
        env = {}
        for name, spec in (data.get("fields") or {}).items():
            if not isinstance(spec, dict):
                raise ParseError(f"field {name!r} must be a mapping")
            env[str(name)] = _field(name, spec, charts, env)
    except (ParseError, ScenarioError):
        raise
    except (BsympError, ValueError, TypeError, KeyError) as exc:
        raise ParseError(f"{source}: {type(exc).__name__}: {exc}") from None
    tasks = data.get("tasks") or []
    if not isinstance(tasks, list) or not all(isinstance(t, dict) and "op" in t for t in tasks):
        raise ParseError(f"{source}: tasks must be a list of mappings with an 'op'")
    known = set(env)
    for i, t in enumerate(tasks):
        if t["op"] not in OPS:
            raise ParseError(f"{source}: task {i} has unknown op {t['op']!r}")
        for key in _REFS.get(t["op"], ()):
            if key in t and t[key] not in known:
                raise ScenarioError(f"task {i} ({t['op']}) references undefined {t[key]!r}")
        if "save" in t:
            known.add(str(t["save"]))
    return Scenario(str(data.get("name", Path(source).stem)), int(data.get("seed", 0)),
                    charts, env, tasks, source)


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists() and (BUNDLED_DIR / p.name).exists():
        p = BUNDLED_DIR / p.name
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def bundled() -> list:
    return sorted(p.name for p in BUNDLED_DIR.glob("*.scn"))


# -- tasks --------------------------------------------------------------------

def _grid(dom, opts, banded=None):
    res = opts.get("grid")
    if res is None:
        res = {2: 17, 3: 9, 4: 7, 5: 5, 6: 4}.get(dom.dim, 3)
    if banded:
        return SampleGrid.banded(dom, int(res), {banded: 0.0}, float(opts.get("band", 0.05)))
    return SampleGrid(dom, int(res))


def _tol(opts, default):
    return float(opts["tol"]) if opts.get("tol") is not None else default


def _op_radko(env, o):
    atlas = construct.radko_sphere(resolution=int(o.get("grid") or 17))
    return atlas.report, atlas


def _op_disk_double(env, o):
    atlas = construct.glue_double(construct.disk_cobordism())
    rep = atlas.report
    rep.merge(construct.radko_identification(atlas), prefix="radko")
    return rep, atlas


def _op_b_symplectic(env, o):
    w = _ref(env, o["field"], bgeometry.BForm)
    kw = {"tol_closed": _tol(o, bgeometry.TOL_CLOSED)}
    return bgeometry.is_b_symplectic(w, _grid(w.domain, o, banded=w.collar.t), **kw)


def _op_locus(env, o):
    pi = _ref(env, o["field"], MultivectorField)
    loc = bgeometry.singular_locus(pi, _grid(pi.domain, o), o.get("coord"))
    rep = VerificationReport("singular_locus")
    rep.provenance["locus"] = loc.to_dict()
    if not loc.empty:
        rep.add("transversality_margin", loc.margin, float(o.get("threshold", bgeometry.TRANSVERSALITY_THRESHOLD)), kind="min")
    if "expect" in o:
        rep.check("locus_matches_expectation", loc.root_values() == [float(v) for v in o["expect"]])
    return rep


def _op_b_serious(env, o):
    pi = _ref(env, o["field"], MultivectorField)
    return bgeometry.is_b_serious(pi, _grid(pi.domain, o), o.get("coord"))


def _pair(env, o):
    return _ref(env, o["pair"], cosymplectic.CosymplecticPair)


def _op_reeb(env, o):
    p = _pair(env, o)
    rep = cosymplectic.check_volume(p)
    rep.merge(cosymplectic.reeb_residuals(p, cosymplectic.reeb_data(p), tol=_tol(o, cosymplectic.REEB_TOL)),
              prefix="reeb")
    data = cosymplectic.reeb_data(p)
    rep.provenance.update({"R": data.R.to_dict(), "nu": data.nu.to_dict()})
    return rep


def _op_equivalence(env, o):
    p = _pair(env, o)
    eq = cosymplectic.closedness_equivalence(p, tol_brackets=_tol(o, cosymplectic.TOL_BRACKETS))
    return eq.to_report()


def _op_roundtrip(env, o):
    return construct.collar_roundtrip(_pair(env, o), tol=_tol(o, construct.MATCH_TOL))


def _op_symplectic_collar(env, o):
    p = _pair(env, o)
    w = construct.symplectic_collar(p, float(o.get("eps", 1.0)))
    rep = VerificationReport("symplectic_collar")
    rep.add("symplectic_margin", construct.symplectic_margin(w, _grid(w.domain, o).points()),
            construct.SYMPLECTIC_MARGIN, kind="min")
    rep.provenance["omega"] = w.to_dict()
    return rep, w


def _op_double(env, o):
    p = _pair(env, o)
    tags = tuple(o.get("tags", ("out", "out")))
    cob = construct.trivial_cobordism(p, tags)
    if tags[0] == tags[1]:
        atlas = construct.glue_double(cob, 1, seam_tol=_tol(o, construct.SEAM_TOL))
    else:
        atlas = construct.glue(cob, 1, cob, 0, seam_tol=_tol(o, construct.SEAM_TOL))
    return atlas.report, atlas


def _op_thurston(env, o):
    lw = _ref(env, o["leafwise"], FormField)
    th = _ref(env, o["theta0"], FormField)
    ends = {_number(k): _ref(env, v, FormField) for k, v in (o.get("ends") or {}).items()}
    grid = SampleGrid(lw.domain, int(o["grid"])) if o.get("grid") else None
    res = construct.thurston_inflate(lw, th, o.get("t", "t"), float(o.get("K0", 1.0)), grid=grid, ends=ends)
    return res.report, res


def _op_mapping_torus(env, o):
    sigma = _ref(env, o["sigma"], FormField) if "sigma" in o else None
    hol = str(o.get("holonomy", "identity"))
    if hol == "twist":
        prof = dehn.default_profile(float(o.get("C", 2.0)))
        phi = dehn.grafted_t2_twist(prof)
        fiber = phi.source
        sigma = FormField(fiber, 2, {(0, 1): 1.0})
    else:
        if sigma is None:
            fiber = ChartDomain.torus(("x", "y"))
            sigma = FormField(fiber, 2, {(0, 1): 1.0})
        fiber = sigma.domain
        if hol == "identity":
            phi = ChartMap.identity(fiber)
        elif hol == "translation":
            a = float(o.get("shift", 0.5))
            comps = {c: fiber.var(c) + a if k == 0 else fiber.var(c) for k, c in enumerate(fiber.coords)}
            phi = ChartMap(fiber, fiber, comps, name=f"translation({a:g})")
        elif hol in env:
            phi = _ref(env, hol, ChartMap)
        else:
            raise ScenarioError(f"unknown holonomy {hol!r}")
    mt = construct.mapping_torus(fiber, sigma, phi, float(o.get("period", 1.0)),
                                 tol=_tol(o, construct.SEAM_TOL))
    rep = mt.report
    if o.get("filling"):
        rep.merge(construct.verify_filling(construct.product_filling(fiber if hol != "twist" else None,
                                                                    sigma if hol != "twist" else None)),
                  prefix="filling")
    return rep, mt


def _op_twist(env, o, seed):
    prof = dehn.default_profile(float(o.get("C", 2.0)))
    return dehn.twist_suite(prof, int(o.get("n", 3)), int(o.get("points", 20)),
                            int(o.get("seed", seed)), tol=_tol(o, dehn.TWIST_TOL))


def _op_chain(env, o):
    spheres = o.get("spheres")
    chain = dehn.dehn_word_chain(str(o["word"]), spheres)
    rep = VerificationReport("dehn_word_chain")
    rep.provenance["chain"] = chain.to_dict()
    rep.check("terminates_at_Z(id)", chain.links[-1]["mapping_torus"] == "Z(id)")
    rep.check("filling_verified", bool(chain.filling.get("verified")))
    return rep, chain


def _op_folded(env, o):
    w = _ref(env, o["form"], FormField)
    th = _ref(env, o["theta"], FormField)
    metric = np.asarray(o["metric"], dtype=float) if "metric" in o else None
    t = o.get("t", w.domain.coords[0])
    pi, rep = construct.verify_folded(w, th, metric, t, _grid(w.domain, o))
    rep.provenance["pi"] = pi.to_dict()
    return rep, pi


def _op_profile(env, o):
    return construct.GlueProfile().check()


def _field_diff(a, b, pts) -> float:
    va, vb = a.evaluate(pts), b.evaluate(pts)
    z = np.zeros(len(pts))
    return max((float(np.max(np.abs(np.broadcast_to(va.get(k, z) - vb.get(k, z), (len(pts),)))))
                for k in set(va) | set(vb)), default=0.0)


def _op_b_flat(env, o):
    w = _ref(env, o["field"], bgeometry.BForm)
    flat = bgeometry.b_flat(w)
    rep = VerificationReport("b_flat")
    rep.provenance["b_flat"] = flat.to_dict()
    if "expect" in o:
        exp = _ref(env, o["expect"], FormField)
        rep.add("match", _field_diff(flat, exp, _grid(exp.domain, o).points()), _tol(o, 1e-12))
    return rep, flat


def _op_b_bivector(env, o):
    w = _ref(env, o["field"], bgeometry.BForm)
    pi = bgeometry.bivector_from_bform(w).as_multivector()
    rep = VerificationReport("bivector_from_bform")
    rep.provenance["bivector"] = pi.to_dict()
    if "expect" in o:
        exp = _ref(env, o["expect"], MultivectorField)
        rep.add("match", _field_diff(pi, exp, _grid(exp.domain, o).points()), _tol(o, 1e-12))
    back = bgeometry.bform_from_bivector(bgeometry.bivector_from_bform(w))
    pts = _grid(w.domain, o, banded=w.collar.t).points()
    rep.add("roundtrip", _field_diff(back.as_form(), w.as_form(), pts), _tol(o, construct.MATCH_TOL))
    return rep, pi


def _op_circle_action(env, o, seed):
    n = int(o.get("n", 3))
    pts = dehn.constraint_points(n, int(o.get("points", 50)), seed=int(o.get("seed", seed)),
                                 norms=np.linspace(0.1, 3.0, int(o.get("points", 50))))
    img = dehn.circle_action(float(o.get("t", 0.5)), pts)
    rep = VerificationReport("circle_action")
    rep.add("half_turn_is_minus_identity", float(np.max(np.abs(img + pts))), _tol(o, 1e-12))
    full = dehn.circle_action(1.0, pts)
    rep.add("full_turn_is_identity", float(np.max(np.abs(full - pts))), _tol(o, 1e-12))
    return rep


OPS = {
    "radko_sphere": _op_radko, "disk_double": _op_disk_double, "b_symplectic": _op_b_symplectic,
    "singular_locus": _op_locus, "b_serious": _op_b_serious, "reeb": _op_reeb,
    "equivalence": _op_equivalence, "roundtrip": _op_roundtrip,
    "symplectic_collar": _op_symplectic_collar, "double": _op_double, "thurston": _op_thurston,
    "mapping_torus": _op_mapping_torus, "twist": _op_twist, "chain": _op_chain,
    "folded": _op_folded, "glue_profile": _op_profile, "b_flat": _op_b_flat,
    "bivector_from_bform": _op_b_bivector, "circle_action": _op_circle_action,
}
_REFS = {
    "b_symplectic": ("field",), "singular_locus": ("field",), "b_serious": ("field",),
    "reeb": ("pair",), "equivalence": ("pair",), "roundtrip": ("pair",),
    "symplectic_collar": ("pair",), "double": ("pair",), "thurston": ("leafwise", "theta0"),
    "mapping_torus": ("sigma",), "folded": ("form", "theta"), "b_flat": ("field", "expect"),
    "bivector_from_bform": ("field", "expect"),
}
_SEEDED = ("twist", "circle_action")


def run_scenario(scn: Scenario, overrides: dict = None) -> dict:
    """Execute the tasks in order; returns the report tree.

    ``overrides`` (``grid``, ``tol``, ``C``, ``period``) replace the
    corresponding task parameters. A task that raises is recorded as failed
    with its diagnostic and the run continues.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    env = dict(scn.fields)
    out = []
    for i, task in enumerate(scn.tasks):
        opts = {**task, **overrides}
        op = task["op"]
        entry = {"index": i, "op": op}
        try:
            res = OPS[op](env, opts, scn.seed) if op in _SEEDED else OPS[op](env, opts)
            rep, obj = res if isinstance(res, tuple) else (res, None)
            if "save" in task and obj is not None:
                env[str(task["save"])] = obj
            entry.update(rep.to_dict())
        except Exception as exc:  # a failing task is reported, not fatal
            entry.update({"passed": False, "error": f"{type(exc).__name__}: {exc}"})
            if getattr(exc, "report", None) is not None:
                entry["diagnostic"] = exc.report.to_dict()
        out.append(entry)
    return jsonable({"scenario": scn.name, "seed": scn.seed, "passed": all(e["passed"] for e in out),
                     "tasks": out, "overrides": overrides})
