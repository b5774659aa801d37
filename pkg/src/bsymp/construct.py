"""Constructions: collars, glued doubles, Thurston inflation, mapping tori,
the Radko sphere atlas and the folded-to-b-serious passage.

Gluing conventions. Near an end of a cobordism, in the inward coordinate
``tau`` (``tau = 0`` on the boundary), the form is ``e dtau ^ theta_end + eta``
with ``e = +1`` for an incoming end and ``e = -1`` for an outgoing one; here
``theta_end = i_v omega`` for the transverse field ``v`` (inward for incoming,
outward for outgoing). The mediating collar is ``[-1, 1]_s x Z`` with form
``df ^ theta_c + eta`` and ``theta_c = e_A theta_A``. Piece ``A`` attaches on
``s in [3/4, 1]`` with ``tau = s - 3/4``; piece ``B`` on ``s in [-1, -3/4]``
with ``tau = -s - 3/4``. Equal tags call for ``f' -> -1`` at ``s = -1`` (the
even log profile, a b-form); opposite tags for ``f = s`` (symplectic).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bgeometry import (BBivector, BForm, CollarChart, bivector_from_bform,
                        is_b_serious, is_b_symplectic, singular_locus)
from .chartcalc import (DEFAULT_BAND, FD_STEP, ChartDomain, ChartMap, FormField,
                        MultivectorField, SampleGrid, exterior_derivative, field_matrices,
                        inverse_bivector, pullback, pullback_at, top_coefficient, top_power,
                        wedge)
from .cosymplectic import CosymplecticPair, check_volume, reeb_data
from .errors import (BoundaryMismatch, DegenerateError, DomainError, InflationFail,
                     NotSymplectic, ProfileError)
from .expr import (ONE, absolute, add, const, cos, evaluate_many, is_zero, log, sin, var, where,
                   symbolically_equal)
from .report import VerificationReport

SEAM_TOL = 1e-6
MATCH_TOL = 1e-8
SYMPLECTIC_MARGIN = 1e-6
ANTIPODAL_TOL = 1e-10

__all__ = [
    "symplectic_collar", "b_collar", "collar_poisson", "collar_roundtrip", "GlueProfile",
    "CobordismEnd", "CosymplecticCobordism", "trivial_cobordism", "disk_cobordism",
    "GluedAtlas", "glue", "glue_double", "radko_identification", "thurston_inflate", "ThurstonResult", "MappingTorus",
    "mapping_torus", "product_filling", "verify_filling", "RadkoAtlas", "radko_sphere",
    "folded_to_bserious", "verify_folded", "fd_closedness", "symplectic_margin",
]


# -- helpers --------------------------------------------------------------------

def fd_closedness(form: FormField, points, step: float = FD_STEP) -> float:
    """``max |d form|`` at ``points`` with central differences of the components."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dom = form.domain
    p = form.degree
    if p >= dom.dim or not len(pts):
        return 0.0
    partial = []
    for k in range(dom.dim):
        e = np.zeros(dom.dim)
        e[k] = step
        hi, lo = form.evaluate(pts + e), form.evaluate(pts - e)
        partial.append({key: (hi[key] - lo[key]) / (2 * step) for key in hi})
    worst = 0.0
    import itertools
    for I in itertools.combinations(range(dom.dim), p + 1):
        acc = np.zeros(len(pts))
        for a, i in enumerate(I):
            rest = I[:a] + I[a + 1:]
            if rest in partial[i]:
                acc += (-1) ** a * partial[i][rest]
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


def symplectic_margin(omega: FormField, points) -> float:
    """Smallest singular value of the form's matrix over ``points``."""
    M = field_matrices(omega, points)
    return float(np.min(np.linalg.svd(M, compute_uv=False)[:, -1]))


def _lift(form: FormField, domain: ChartDomain) -> FormField:
    return form.on(domain)


def _grid_for(domain, resolution=None, **kw):
    if resolution is None:
        resolution = {2: 17, 3: 9, 4: 7, 5: 5, 6: 4}.get(domain.dim, 3)
    return SampleGrid(domain, resolution, **kw)


# -- collars --------------------------------------------------------------------

def _collar_of(pair: CosymplecticPair, eps: float, t: str) -> CollarChart:
    return CollarChart(pair.domain, eps, t)


def _require_volume(pair, grid=None):
    rep = check_volume(pair, grid)
    if not rep.passed:
        raise DegenerateError("theta ^ eta^(n-1) is not a volume form on the grid")


def symplectic_collar(pair: CosymplecticPair, eps: float = 1.0, t: str = "t",
                      grid: SampleGrid = None) -> FormField:
    """``dt ^ theta + eta`` on ``(-eps, eps) x Z``."""
    _require_volume(pair, grid)
    dom = _collar_of(pair, eps, t).domain
    return wedge(dom.d(t), _lift(pair.theta, dom)) + _lift(pair.eta, dom)


def b_collar(pair: CosymplecticPair, eps: float = 1.0, t: str = "t",
             grid: SampleGrid = None) -> BForm:
    """``dlog|t| ^ theta + eta`` as a :class:`BForm`."""
    _require_volume(pair, grid)
    col = _collar_of(pair, eps, t)
    return BForm(col, _lift(pair.theta, col.domain), _lift(pair.eta, col.domain))


def collar_poisson(pair: CosymplecticPair, eps: float = 1.0, t: str = "t") -> BBivector:
    """``t d_t ^ R + nu`` from the Reeb data of the pair."""
    col = _collar_of(pair, eps, t)
    data = reeb_data(pair)
    return BBivector(col, data.R.on(col.domain), data.nu.on(col.domain))


def collar_roundtrip(pair: CosymplecticPair, grid: SampleGrid = None, eps: float = 1.0,
                     tol: float = MATCH_TOL) -> VerificationReport:
    """``b_collar`` and ``collar_poisson`` invert each other at grid points off ``Z``."""
    from .bgeometry import bform_from_bivector
    w = b_collar(pair, eps)
    p = collar_poisson(pair, eps)
    col = w.collar
    if grid is None:
        res = {3: 9, 5: 5}.get(pair.domain.dim, 4)
        grid = SampleGrid.banded(col.domain, res, {col.t: 0.0}, DEFAULT_BAND)
    pts = grid.points()
    pi_from_w = bivector_from_bform(w).as_multivector()
    w_from_pi = bform_from_bivector(p).as_form()
    rep = VerificationReport("collar_roundtrip", grid=grid.metadata())
    rep.add("bivector_match", _diff(pi_from_w, p.as_multivector(), pts), tol)
    rep.add("bform_match", _diff(w_from_pi, w.as_form(), pts), tol)
    # the two compositions, pointwise
    A = field_matrices(w.as_form(), pts)
    P = field_matrices(p.as_multivector(), pts)
    n = A.shape[1]
    rep.add("matrix_inverse", float(np.max(np.abs(np.transpose(P, (0, 2, 1)) @ A - np.eye(n)))), tol)
    return rep


def _diff(a, b, pts) -> float:
    va, vb = a.evaluate(pts), b.evaluate(pts)
    keys = set(va) | set(vb)
    z = np.zeros(len(pts))
    return max((float(np.max(np.abs(va.get(k, z) - vb.get(k, z)))) for k in keys), default=0.0)


# -- glue profile ---------------------------------------------------------------

@dataclass(frozen=True)
class GlueProfile:
    """Even profile ``f(s) = g(|s|)`` with ``df = dlog|s|`` near 0 and ``df = +-ds`` near ``+-1``.

    ``g = log`` on ``[0, 1/4]``, ``g = tau + c`` on ``[3/4, 1]`` and in between
    ``g' = p(x)`` with ``x = 2 (tau - 1/4)`` and ``p(x) = -2x^3 + 7x^2 - 8x + 4``,
    the cubic Hermite interpolant of the slopes (4 -> 1) and curvatures
    (-16 -> 0). So ``g`` is a quartic there and all knots are C^2.
    """

    var: str = "s"
    inner: float = 0.25
    outer: float = 0.75
    kind: str = "log"

    def __post_init__(self):
        if self.kind not in ("log", "linear"):
            raise ProfileError("profile kind must be 'log' or 'linear'")
        if (self.inner, self.outer) != (0.25, 0.75) and self.kind == "log":
            raise ProfileError("the log profile is built for knots 1/4 and 3/4")

    @classmethod
    def linear(cls, var: str = "s") -> "GlueProfile":
        return cls(var, kind="linear")

    @property
    def c(self) -> float:
        return math.log(0.25) + 11.0 / 12.0 - 0.75

    def _tau(self):
        return absolute(var(self.var))

    def _blend(self, tau):
        x = 2 * (tau - 0.25)
        return const(math.log(0.25)) + 0.5 * (-0.5 * x ** 4 + (7.0 / 3.0) * x ** 3 - 4 * x * x + 4 * x)

    def _blend_slope(self, tau):
        x = 2 * (tau - 0.25)
        return -2 * x ** 3 + 7 * x * x - 8 * x + 4

    def f(self):
        s = var(self.var)
        if self.kind == "linear":
            return s
        tau = self._tau()
        return where(0.25 - tau, log(tau), where(0.75 - tau, self._blend(tau), tau + self.c))

    def s_df(self):
        """``s f'(s)``: equals 1 on the log band, smooth and positive for ``s != 0``."""
        s = var(self.var)
        if self.kind == "linear":
            return s
        tau = self._tau()
        return where(0.25 - tau, ONE, where(0.75 - tau, tau * self._blend_slope(tau), tau))

    def df(self):
        s = var(self.var)
        if self.kind == "linear":
            return ONE
        return self.s_df() / s

    def check(self, samples: int = 20001) -> VerificationReport:
        """Knot continuity up to second order, asymptotics and monotonicity."""
        rep = VerificationReport("glue_profile")
        if self.kind == "linear":
            rep.check("monotone", True)
            return rep
        f, f1 = self.f(), self.df()
        f2 = f1.diff(self.var)
        worst = 0.0
        for knot in (0.25, 0.75):
            for sign in (1.0, -1.0):
                lo, hi = sign * (knot - 1e-12), sign * (knot + 1e-12)
                vals = evaluate_many([f, f1, f2], {self.var: np.array([lo, hi])})
                worst = max(worst, max(abs(float(v[0] - v[1])) for v in vals))
        rep.add("knot_jump_C2", worst, 1e-9)
        s = np.linspace(-1, 1, samples)
        s = s[s != 0]
        (d,) = evaluate_many([f1], {self.var: s})
        rep.check("monotone", bool(np.all(d[s > 0] > 0) and np.all(d[s < 0] < 0)))
        band = np.abs(s) <= 0.25
        near = np.abs(s) >= 0.75
        rep.add("dlog_band", float(np.max(np.abs(d[band] * s[band] - 1.0))), 1e-12)
        rep.add("linear_ends", float(np.max(np.abs(np.abs(d[near]) - 1.0))), 1e-12)
        return rep


# -- cobordisms -----------------------------------------------------------------

@dataclass(frozen=True)
class CobordismEnd:
    """End of a cobordism at ``coord = value`` with its boundary pair and tag."""

    value: float
    tag: str
    pair: CosymplecticPair

    def __post_init__(self):
        if self.tag not in ("in", "out"):
            raise ValueError("end tag must be 'in' or 'out'")

    @property
    def sign(self) -> int:
        return 1 if self.tag == "in" else -1


@dataclass
class CosymplecticCobordism:
    """Symplectic chart ``coord x Z`` near its ends, plus optional extra charts.

    ``extra`` entries are ``(name, domain, form, map_to_main, overlap_grid)``.
    """

    domain: ChartDomain
    omega: FormField
    coord: str
    ends: dict
    extra: list = field(default_factory=list)
    name: str = "cobordism"

    @property
    def base_coords(self) -> tuple:
        return tuple(c for c in self.domain.coords if c != self.coord)

    def end(self, key) -> CobordismEnd:
        return self.ends[key]

    def inward(self, key):
        """``tau`` as a function of the coordinate, and its inverse."""
        v = self.ends[key].value
        a, b = self.domain.bounds[self.domain.index(self.coord)]
        if abs(v - a) < 1e-12:
            return 1.0, v
        if abs(v - b) < 1e-12:
            return -1.0, v
        raise DomainError("end is not on the boundary of the collar coordinate")

    def verify(self, grid: SampleGrid = None, margin: float = SYMPLECTIC_MARGIN) -> VerificationReport:
        rep = VerificationReport(f"cobordism:{self.name}")
        grid = grid or _grid_for(self.domain)
        pts = grid.points()
        rep.add("symplectic_margin", symplectic_margin(self.omega, pts), margin, kind="min")
        rep.add("closed", fd_closedness(self.omega, pts), SEAM_TOL)
        for key, end in self.ends.items():
            eta = self.omega.restrict(self.coord, end.value).on(end.pair.domain)
            rep.add(f"end[{key}].eta", _diff(eta, end.pair.eta, _grid_for(end.pair.domain).points()), MATCH_TOL)
            v = MultivectorField(self.domain, 1, {(self.domain.index(self.coord),): float(self.inward(key)[0] * end.sign)})
            from .chartcalc import interior_product
            th = interior_product(v, self.omega).restrict(self.coord, end.value).on(end.pair.domain)
            rep.add(f"end[{key}].theta", _diff(th, end.pair.theta, _grid_for(end.pair.domain).points()), MATCH_TOL)
        for name, dom, form, fmap, ogrid in self.extra:
            pts_e = ogrid.points()
            rep.add(f"{name}.symplectic_margin", symplectic_margin(form, SampleGrid(dom, 9).points()),
                    margin, kind="min")
            rep.add(f"{name}.overlap", _pull_diff(fmap, self.omega, form, pts_e), MATCH_TOL)
        return rep


def _pull_diff(fmap: ChartMap, target_form: FormField, source_form: FormField, pts) -> float:
    pulled = pullback_at(fmap, target_form, pts)
    own = source_form.dense(pts)
    return float(np.max(np.abs(pulled - own))) if len(pts) else 0.0


def trivial_cobordism(pair: CosymplecticPair, tags=("in", "out"), coord: str = "s") -> CosymplecticCobordism:
    """``([0, 1] x Z, ds ^ theta + eta)``; the field ``d_s`` is transverse at both ends."""
    dom = pair.domain.with_axis(coord, (0.0, 1.0), first=True)
    omega = wedge(dom.d(coord), _lift(pair.theta, dom)) + _lift(pair.eta, dom)
    ends = {}
    for key, value, tag in ((0, 0.0, tags[0]), (1, 1.0, tags[1])):
        # d_s is inward at 0 and outward at 1
        v_sign = (1 if value == 0.0 else -1) * (1 if tag == "in" else -1)
        th = pair.theta if v_sign > 0 else pair.theta * -1.0
        ends[key] = CobordismEnd(value, tag, CosymplecticPair(pair.domain, th, pair.eta))
    return CosymplecticCobordism(dom, omega, coord, ends, name="trivial")


def disk_cobordism(cap: float = 0.9) -> CosymplecticCobordism:
    """Disk of area ``2 pi`` as a filling of ``(S^1, dphi, 0)``.

    Main chart ``(rho, phi)`` with ``rho = r^2/2`` and ``omega = drho ^ dphi``;
    the boundary ``rho = 1`` is outgoing for ``d_rho``. A Cartesian cap chart
    with ``dx ^ dy`` covers the centre.
    """
    dom = ChartDomain(("rho", "phi"), ((0.05, 1.0), (0.0, 2 * math.pi)), (False, True))
    omega = wedge(dom.d("rho"), dom.d("phi"))
    circle = ChartDomain(("phi",), ((0.0, 2 * math.pi),), (True,))
    end = CobordismEnd(1.0, "out", CosymplecticPair(circle, circle.d("phi"), FormField(circle, 2)))
    capdom = ChartDomain(("x", "y"), ((-cap, cap), (-cap, cap)))
    capform = wedge(capdom.d("x"), capdom.d("y"))
    to_main = _polar_map(capdom, dom)
    ogrid = SampleGrid(capdom, 17, predicate=lambda p: np.hypot(p[:, 0], p[:, 1]) ** 2 / 2 > 0.06)
    return CosymplecticCobordism(dom, omega, "rho", {1: end},
                                 [("cap", capdom, capform, to_main, ogrid)], name="disk")


def _polar_map(capdom, dom):
    """Cartesian ``(x, y) -> (r^2/2, atan2(y, x) mod 2 pi)`` with analytic Jacobian."""
    def f(P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        return np.stack([(x * x + y * y) / 2, np.mod(np.arctan2(y, x), 2 * math.pi)], axis=1)

    def jac(P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        r2 = x * x + y * y
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0], J[:, 0, 1] = x, y
        J[:, 1, 0], J[:, 1, 1] = -y / r2, x / r2
        return J

    return ChartMap(capdom, dom, func=f, jacobian=jac, name="cap_to_polar")


# -- gluing ---------------------------------------------------------------------

@dataclass
class GluedAtlas:
    collar: object            # BForm (b case) or FormField
    collar_domain: ChartDomain
    pieces: list              # (name, cobordism, end key, side)
    profile: GlueProfile
    theta_c: FormField
    report: VerificationReport
    locus: object = None

    @property
    def b_case(self) -> bool:
        return isinstance(self.collar, BForm)

    def collar_form(self) -> FormField:
        return self.collar.as_form() if self.b_case else self.collar

    def collar_bivector(self) -> MultivectorField:
        if self.b_case:
            return bivector_from_bform(self.collar).as_multivector()
        return inverse_bivector(self.collar)

    def to_dict(self):
        return {"b_case": self.b_case, "pieces": [p[0] for p in self.pieces],
                "collar_coords": list(self.collar_domain.coords),
                "locus": self.locus.to_dict() if self.locus is not None else None,
                "report": self.report.to_dict()}


def _piece_transition(collar_dom, cob: CosymplecticCobordism, key, side: int):
    """Affine map from the collar overlap ``|s| in [3/4, 1]`` on ``side`` into the piece."""
    s_name = collar_dom.coords[0]
    sgn_tau, v = cob.inward(key)            # tau = sgn_tau * (coord - v)
    s = var(s_name)
    tau = (s - 0.75) if side > 0 else (-s - 0.75)
    comps = {cob.coord: v + sgn_tau * tau}
    for c in cob.base_coords:
        comps[c] = var(c)
    lo, hi = (0.75, 1.0) if side > 0 else (-1.0, -0.75)
    bounds = ((lo, hi),) + collar_dom.bounds[1:]
    odom = ChartDomain(collar_dom.coords, bounds, collar_dom.periodic)
    return ChartMap(odom, cob.domain, comps, name=f"collar_to_{cob.name}")


def glue(cob_a: CosymplecticCobordism, key_a, cob_b: CosymplecticCobordism, key_b,
         profile: GlueProfile = None, grid_resolution: int = None, tol: float = MATCH_TOL,
         seam_tol: float = SEAM_TOL, coord: str = "s") -> GluedAtlas:
    """Glue end ``key_a`` of ``A`` to end ``key_b`` of ``B`` through a mediating collar."""
    ea, eb = cob_a.end(key_a), cob_b.end(key_b)
    zdom = ea.pair.domain
    if eb.pair.domain != zdom:
        raise BoundaryMismatch("ends live on different charts")
    zgrid = _grid_for(zdom)
    zp = zgrid.points()
    mis_t = _diff(ea.pair.theta, eb.pair.theta, zp)
    mis_e = _diff(ea.pair.eta, eb.pair.eta, zp)
    if mis_t > tol or mis_e > tol:
        raise BoundaryMismatch(f"boundary pairs disagree (theta {mis_t:.3g}, eta {mis_e:.3g})")
    b_case = ea.tag == eb.tag
    profile = profile or (GlueProfile(coord) if b_case else GlueProfile.linear(coord))
    if b_case and profile.kind != "log":
        raise ProfileError("equal end tags need the log profile")
    if not b_case and profile.kind != "linear":
        raise ProfileError("opposite end tags glue with the linear profile")
    if b_case:
        pc = profile.check()
        if not pc.passed:
            raise ProfileError(f"glue profile fails: {pc.failures()}")
    col = CollarChart(zdom, 1.0, coord)
    cdom = col.domain
    theta_c = _lift(ea.pair.theta, cdom) * float(ea.sign)
    eta = _lift(ea.pair.eta, cdom)
    if b_case:
        collar = BForm(col, theta_c * profile.s_df(), eta)
        cform = collar.as_form()
    else:
        collar = wedge(cdom.d(coord), theta_c) + eta
        cform = collar
    rep = VerificationReport("glue")
    rep.provenance.update({"b_case": b_case, "tags": [ea.tag, eb.tag], "profile": profile.kind})
    res = grid_resolution or {2: 17, 4: 7, 6: 4}.get(cdom.dim, 5)
    cgrid = SampleGrid.banded(cdom, res, {coord: 0.0}, DEFAULT_BAND)
    rep.grid = cgrid.metadata()
    rep.add("collar.closedness_fd", fd_closedness(cform, cgrid.points()), seam_tol)
    pieces = []
    for name, cob, key, side in (("A", cob_a, key_a, 1), ("B", cob_b, key_b, -1)):
        tmap = _piece_transition(cdom, cob, key, side)
        ogrid = SampleGrid(tmap.source, res)
        op = ogrid.points()
        pulled = pullback(tmap, cob.omega)
        local = FormField(tmap.source, 2, cform.components)
        rep.add(f"{name}.overlap_match", _diff(pulled, local, op), tol)
        rep.add(f"{name}.seam_closedness_fd",
                max(fd_closedness(local, op),
                    fd_closedness(cob.omega, tmap(op))), seam_tol)
        prep = cob.verify()
        rep.merge(prep, prefix=f"{name}")
        pieces.append((name, cob, key, side))
    atlas = GluedAtlas(collar, cdom, pieces, profile, theta_c, rep)
    lgrid = SampleGrid(cdom, res)
    if b_case:
        brep = is_b_symplectic(collar, cgrid)
        rep.merge(brep, prefix="collar")
    else:
        rep.add("collar.symplectic_margin", symplectic_margin(collar, SampleGrid(cdom, res).points()),
                SYMPLECTIC_MARGIN, kind="min")
    locus = singular_locus(atlas.collar_bivector(), lgrid, coord)
    atlas.locus = locus
    rep.provenance["locus"] = locus.to_dict()
    if b_case:
        one_copy = (locus.root_values() == [0.0]) and len(locus.roots) == locus.lines
        rep.check("locus_is_one_copy_of_Z", one_copy)
    else:
        rep.check("locus_empty", locus.empty)
    return atlas


def glue_double(cob: CosymplecticCobordism, key=None, profile: GlueProfile = None,
                **kw) -> GluedAtlas:
    """Double ``M`` along one end: glue that end to itself in a mirror copy."""
    if key is None:
        key = sorted(cob.ends)[-1]
    return glue(cob, key, cob, key, profile, **kw)


def radko_identification(atlas: GluedAtlas, radko: "RadkoAtlas" = None, resolution: int = 17,
                         tol: float = MATCH_TOL) -> VerificationReport:
    """Compare a doubled disk with the Radko sphere through ``h = sgn(s) e^f(s)``, ``theta = -phi``.

    Since ``dlog|h| = df`` the collar form ``df ^ (-dphi)`` is carried onto
    ``(1/h) dh ^ dtheta`` on the whole collar, and ``h = s`` on the log band.
    """
    if not atlas.b_case or atlas.collar_domain.dim != 2:
        raise DomainError("expected a doubled surface with a b-collar")
    radko = radko or radko_sphere(resolution=resolution)
    prof = atlas.profile
    cdom = atlas.collar_domain
    s_name, phi_name = cdom.coords
    f, sdf = prof.f(), prof.s_df()
    sign = float(evaluate_many([atlas.theta_c.component((1,))], {})[0])

    def hmap(P):
        P = np.atleast_2d(P)
        fv = np.broadcast_to(evaluate_many([f], {s_name: P[:, 0]})[0], (len(P),))
        return np.stack([np.sign(P[:, 0]) * np.exp(fv), np.mod(sign * P[:, 1], 2 * math.pi)], axis=1)

    def hjac(P):
        P = np.atleast_2d(P)
        fv, gv = (np.broadcast_to(v, (len(P),)) for v in evaluate_many([f, sdf], {s_name: P[:, 0]}))
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0] = np.exp(fv) * gv / np.abs(P[:, 0])
        J[:, 1, 1] = sign
        return J

    ident = ChartMap(cdom, radko.cylinder, func=hmap, jacobian=hjac, name="collar_to_cylinder")
    grid = SampleGrid.banded(cdom, resolution, {s_name: 0.0}, DEFAULT_BAND)
    pts = grid.points()
    rep = VerificationReport("radko_identification", grid=grid.metadata())
    rep.add("form_match", _pull_diff(ident, radko.omega.as_form(), atlas.collar_form(), pts), tol)
    band = pts[np.abs(pts[:, 0]) <= prof.inner]
    rep.add("h_equals_s_on_band", float(np.max(np.abs(hmap(band)[:, 0] - band[:, 0]))), 1e-12)
    rep.check("loci_agree", atlas.locus.root_values() == radko.locus.root_values() == [0.0])
    rep.add("transversality_margin_error", abs(atlas.locus.margin - radko.locus.margin), tol)
    rep.provenance["h_range"] = [float(hmap(np.array([[-1.0, 0.0]]))[0, 0]),
                                 float(hmap(np.array([[1.0, 0.0]]))[0, 0])]
    return rep


# -- Thurston inflation ---------------------------------------------------------

@dataclass
class ThurstonResult:
    K: float
    omega: FormField
    report: VerificationReport


def thurston_inflate(leafwise: FormField, theta0: FormField, t: str = "t", K0: float = 1.0,
                     grid: SampleGrid = None, ends: dict = None, margin: float = SYMPLECTIC_MARGIN,
                     kmax_factor: float = 2.0 ** 20) -> ThurstonResult:
    """Smallest tested ``K`` making ``leafwise + K theta0 ^ dt`` nondegenerate on the grid.

    Doubling from ``K0`` until the Pfaffian keeps one sign and ``|Pf|`` exceeds
    ``margin`` at every grid point, then bisection to two significant digits. ``ends`` maps values of ``t``
    to the expected restrictions, checked symbolically.
    """
    dom = leafwise.domain
    if theta0.is_zero():
        raise InflationFail("theta0 vanishes identically: no transverse term to inflate with")
    if not exterior_derivative(leafwise).is_zero() and fd_closedness(leafwise, _grid_for(dom).points()) > 1e-8:
        raise NotSymplectic("leafwise form is not closed")
    if not exterior_derivative(theta0).is_zero():
        raise NotSymplectic("theta0 is not closed")
    # even counts put the half-period on every periodic axis
    grid = grid or SampleGrid(dom, 8)
    pts = grid.points()
    base = field_matrices(leafwise, pts)
    extra = field_matrices(wedge(theta0, dom.d(t)), pts)

    def score(K):
        # a nonvanishing Pfaffian on a connected chart keeps one sign, so a
        # sign change between samples betrays a zero the grid stepped over
        pf = _kernels.pfaffian(base + K * extra)
        if np.min(pf) < 0 < np.max(pf):
            return 0.0
        return float(np.min(np.abs(pf)))

    rep = VerificationReport("thurston_inflate", grid=grid.metadata())
    K = float(K0)
    kmax = K0 * kmax_factor
    trail = []
    m = score(K)
    trail.append([K, m])
    lo = None
    while not m > margin:
        lo = K
        K *= 2
        if K > kmax:
            raise InflationFail(f"no K <= {kmax:g} makes the form nondegenerate on the grid")
        m = score(K)
        trail.append([K, m])
    if lo is not None:
        hi = K
        while (hi - lo) > 0.005 * hi:
            mid = 0.5 * (lo + hi)
            sm = score(mid)
            trail.append([mid, sm])
            if sm > margin:
                hi = mid
            else:
                lo = mid
        mag = 10.0 ** (math.floor(math.log10(hi)) - 1)
        K = round(hi / mag) * mag
        while not score(K) > margin:
            K += mag
        K = float(f"{K:.2g}") if score(float(f"{K:.2g}")) > margin else K
        m = score(K)
    omega = leafwise + wedge(theta0, dom.d(t)) * K
    rep.add("nondegeneracy_margin", m, margin, kind="min")
    rep.provenance.update({"K": K, "K0": K0, "search": trail, "steps": len(trail)})
    for value, eta in (ends or {}).items():
        restricted = omega.restrict(t, value)
        target = eta.on(restricted.domain) if eta.domain != restricted.domain else eta
        ok = all(symbolically_equal(restricted.component(k), target.component(k))
                 for k in set(restricted.components) | set(target.components))
        rep.check(f"end[{t}={value:g}]", ok)
    return ThurstonResult(K, omega, rep)


# -- mapping tori and fillings --------------------------------------------------

@dataclass
class MappingTorus:
    fiber: ChartDomain
    sigma: FormField
    holonomy: ChartMap
    period: float
    domain: ChartDomain
    eta: FormField
    theta: FormField
    report: VerificationReport
    name: str = "Z(phi)"


def mapping_torus(fiber: ChartDomain, sigma: FormField, holonomy: ChartMap = None,
                  period: float = 1.0, grid: SampleGrid = None, tol: float = SEAM_TOL,
                  coord: str = "s", name: str = None) -> MappingTorus:
    """Suspension on ``F x [0, 1]`` glued by ``(x, 1) ~ (phi(x), 0)``."""
    holonomy = holonomy or ChartMap.identity(fiber)
    grid = grid or SampleGrid(fiber, 17)
    pts = grid.points()
    if holonomy.symbolic:
        diff = pullback(holonomy, sigma) - sigma
        resid = 0.0 if diff.is_zero() else diff.max_abs(pts)
    else:
        resid = float(np.max(np.abs(pullback_at(holonomy, sigma, pts) - sigma.dense(pts))))
    rep = VerificationReport("mapping_torus", grid=grid.metadata())
    rep.add("seam_residual", resid, tol)
    if not resid < tol:
        raise NotSymplectic(f"holonomy does not preserve sigma (residual {resid:.3g})")
    dom = fiber.with_axis(coord, (0.0, 1.0), first=False)
    eta = sigma.on(dom)
    theta = dom.d(coord) * period
    rep.provenance.update({"holonomy": holonomy.name or "map", "period": period,
                           "seam_exact": resid == 0.0})
    # fibre restriction and closedness
    rep.add("eta_closed", 0.0 if exterior_derivative(eta).is_zero()
            else exterior_derivative(eta).max_abs(SampleGrid(dom, 7).points()), 1e-8)
    return MappingTorus(fiber, sigma, holonomy, period, dom, eta, theta, rep,
                        name or f"Z({holonomy.name or 'phi'})")


@dataclass
class Filling:
    domain: ChartDomain
    omega: FormField
    sigma: FormField
    fiber: ChartDomain


def product_filling(fiber: ChartDomain = None, sigma: FormField = None) -> Filling:
    """``(F x D^2, sigma + dy1 ^ dy2)``."""
    if fiber is None:
        fiber = ChartDomain.torus(("x", "y"))
        sigma = wedge(fiber.d("x"), fiber.d("y"))
    dom = fiber.product(ChartDomain(("y1", "y2"), ((-1.0, 1.0), (-1.0, 1.0))))
    omega = sigma.on(dom) + wedge(dom.d("y1"), dom.d("y2"))
    return Filling(dom, omega, sigma, fiber)


def verify_filling(fill: Filling, resolution: int = 5) -> VerificationReport:
    """Symplectic on the disk bundle and restricting to ``sigma`` on ``F x S^1``."""
    rep = VerificationReport("filling")
    grid = SampleGrid(fill.domain, resolution,
                      predicate=lambda p: p[:, -2] ** 2 + p[:, -1] ** 2 <= 1.0)
    rep.add("symplectic_margin", symplectic_margin(fill.omega, grid.points()), SYMPLECTIC_MARGIN, kind="min")
    rep.add("closed", 0.0 if exterior_derivative(fill.omega).is_zero() else 1.0, 1e-12)
    bdom = fill.fiber.with_axis("phi", (0.0, 2 * math.pi), periodic=True, first=False)
    comps = {c: var(c) for c in fill.fiber.coords}
    comps.update({"y1": cos(var("phi")), "y2": sin(var("phi"))})
    inc = ChartMap(bdom, fill.domain, comps, name="boundary")
    restricted = pullback(inc, fill.omega)
    target = fill.sigma.on(bdom)
    diff = restricted - target
    rep.check("boundary_restriction_is_sigma", diff.is_zero() or diff.max_abs(SampleGrid(bdom, 7).points()) < 1e-12)
    return rep


# -- Radko sphere -----------------------------------------------------------------

@dataclass
class RadkoAtlas:
    cylinder: ChartDomain
    omega: BForm
    bivector: MultivectorField
    caps: dict
    transitions: dict
    report: VerificationReport
    locus: object = None


def _cap_map(capdom, cyl, sign):
    """Cap ``(x, y)`` -> cylinder ``(h, theta)`` with ``h = sign (1 - r^2/2)``."""
    def f(P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        return np.stack([sign * (1 - (x * x + y * y) / 2), np.mod(np.arctan2(y, x), 2 * math.pi)], axis=1)

    def jac(P):
        P = np.atleast_2d(P)
        x, y = P[:, 0], P[:, 1]
        r2 = x * x + y * y
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0], J[:, 0, 1] = -sign * x, -sign * y
        J[:, 1, 0], J[:, 1, 1] = -y / r2, x / r2
        return J

    return ChartMap(capdom, cyl, func=f, jacobian=jac, name="north" if sign > 0 else "south")


def radko_sphere(h_max: float = 0.95, cap: float = 0.9, resolution: int = 17) -> RadkoAtlas:
    """``(1/h) dh ^ dtheta`` on the cylinder and smooth symplectic polar caps."""
    cyl = ChartDomain(("h", "theta"), ((-h_max, h_max), (0.0, 2 * math.pi)), (False, True))
    col = CollarChart.around(cyl, "h")
    cdom = col.domain
    omega = BForm(col, cdom.d("theta"), FormField(cdom, 2))
    rep = VerificationReport("radko_sphere")
    pi = bivector_from_bform(omega).as_multivector()
    rep.check("bivector_is_h_dh_dtheta", set(pi.components) == {(0, 1)} and
              symbolically_equal(pi.component((0, 1)), var("h")))
    rep.check("schouten_pi_pi_symbolic_zero", schouten_zero(pi))
    grid = SampleGrid(cdom, resolution)
    locus = singular_locus(pi, grid, "h")
    rep.provenance["locus"] = locus.to_dict()
    rep.check("locus_is_equator", locus.root_values() == [0.0] and len(locus.roots) == locus.lines)
    rep.add("transversality_margin_error", abs(locus.margin - 1.0), 1e-8)
    rep.merge(is_b_symplectic(omega, SampleGrid.banded(cdom, resolution, {"h": 0.0})), prefix="b")
    # antipodal invariance on the cylinder, off the equator
    anti = ChartMap(cdom, cdom, {"h": -var("h"), "theta": var("theta") + math.pi}, name="antipodal")
    plain = omega.as_form()
    pulled = pullback(anti, plain)
    band = SampleGrid.banded(cdom, resolution, {"h": 0.0}, DEFAULT_BAND).points()
    rep.add("antipodal_residual", _diff(pulled, plain, band), ANTIPODAL_TOL)
    # caps
    caps, trans = {}, {}
    for name, sign in (("north", 1.0), ("south", -1.0)):
        capdom = ChartDomain(("x", "y"), ((-cap, cap), (-cap, cap)))
        hx = sign * (1 - (var("x") ** 2 + var("y") ** 2) / 2)
        form = wedge(capdom.d("x"), capdom.d("y")) * (-sign / hx)
        caps[name] = (capdom, form)
        cg = SampleGrid(capdom, resolution)
        rep.add(f"{name}.cap_margin", symplectic_margin(form, cg.points()), SYMPLECTIC_MARGIN, kind="min")
        rep.add(f"{name}.pole_margin", symplectic_margin(form, np.zeros((1, 2))), SYMPLECTIC_MARGIN, kind="min")
        tmap = _cap_map(capdom, cdom, sign)
        trans[name] = tmap
        ov = SampleGrid(capdom, resolution,
                        predicate=lambda p: (1 - (p[:, 0] ** 2 + p[:, 1] ** 2) / 2) < h_max - 1e-9).points()
        rep.add(f"{name}.overlap_match", _pull_diff(tmap, plain, form, ov), MATCH_TOL)
    # leaves: rank 0 on the equator, 2 elsewhere
    Pz = field_matrices(pi, locus.roots)
    Po = field_matrices(pi, band)
    rank_eq = np.linalg.matrix_rank(Pz, tol=1e-8) if len(Pz) else np.array([])
    rank_off = np.linalg.matrix_rank(Po, tol=1e-12)
    rep.check("leaves_points_on_equator", bool(np.all(rank_eq == 0)))
    rep.check("leaves_open_hemispheres", bool(np.all(rank_off == 2)))
    rep.provenance["bivector_at_h_half"] = float(evaluate_many([pi.component((0, 1))], {"h": np.array([0.5]), "theta": np.array([0.0])})[0][0])
    return RadkoAtlas(cdom, omega, pi, caps, trans, rep, locus)


def schouten_zero(pi: MultivectorField) -> bool:
    """``[pi, pi]`` vanishes symbolically (component-wise, with sympy as referee)."""
    from .chartcalc import schouten_bracket
    br = schouten_bracket(pi, pi)
    return all(symbolically_equal(v, 0) for v in br.components.values())


# -- folded to b-serious --------------------------------------------------------

def _metric_inverse(metric, n):
    if metric is None:
        return np.eye(n)
    G = np.asarray(metric, dtype=float)
    if G.shape != (n, n) or not np.allclose(G, G.T) or np.min(np.linalg.eigvalsh(G)) <= 0:
        raise ValueError("metric must be a symmetric positive-definite matrix on Z")
    return np.linalg.inv(G)


def folded_to_bserious(folded: FormField, theta: FormField, metric=None, t: str = "t",
                       grid: SampleGrid = None, threshold: float = 1e-4) -> MultivectorField:
    """``pi = t d_t ^ R + nu`` with ``R = g(theta)`` and ``nu = g(phi_Z + t^2/2 dtheta)``.

    ``metric`` is a constant matrix ``g_Z`` (identity by default); the full
    metric is ``g_Z + dt^2``. Preconditions on the fold are checked on ``grid``.
    """
    return verify_folded(folded, theta, metric, t, grid, threshold)[0]


def verify_folded(folded: FormField, theta: FormField, metric=None, t: str = "t",
                  grid: SampleGrid = None, threshold: float = 1e-4):
    dom = folded.domain
    if dom.coords[0] != t:
        raise DomainError("the fold coordinate must come first")
    zdom = dom.without(t)
    theta_z = theta if theta.domain == zdom else theta.on(zdom)
    n = dom.dim // 2
    zgrid = _grid_for(zdom).points()
    phi_z = folded.restrict(t, 0.0).on(zdom)
    # fold transversality: top coefficient vanishes on t = 0 with nonzero t-derivative
    c = top_coefficient(folded)
    zpts = np.insert(zgrid, 0, 0.0, axis=1)
    cv, dcv = (np.broadcast_to(v, (len(zpts),)) for v in evaluate_many([c, c.diff(t)], dom.env(zpts)))
    if np.max(np.abs(cv)) > 1e-10 or np.min(np.abs(dcv)) < threshold:
        raise DegenerateError("folded form does not vanish transversally along t = 0")
    if n > 1:
        pw = top_power(phi_z, n - 1) if n - 1 >= 1 else None
        if pw.is_zero() or np.min(np.max(np.abs(pw.dense(zgrid)), axis=1)) < threshold:
            raise DegenerateError("phi^(n-1) vanishes somewhere on the fold")
        vol = wedge(theta_z, pw)
    else:
        vol = theta_z
    vc = vol.component(tuple(range(zdom.dim)))
    vv = np.broadcast_to(evaluate_many([vc], zdom.env(zgrid))[0], (len(zgrid),))
    if np.min(np.abs(vv)) < threshold:
        raise DegenerateError("theta ^ phi_Z^(n-1) vanishes somewhere on the fold")
    Ginv = _metric_inverse(metric, zdom.dim)
    tv = var(t)
    lifted_theta = theta_z.on(dom)
    two = phi_z.on(dom) + exterior_derivative(theta_z).on(dom) * (0.5 * tv * tv)
    m = zdom.dim
    Rc = {}
    for i in range(m):
        acc = add(*[lifted_theta.component((j + 1,)) * float(Ginv[i, j]) for j in range(m) if Ginv[i, j] != 0])
        Rc[(i + 1,)] = acc
    R = MultivectorField(dom, 1, Rc)
    W = [[two.component((k + 1, l + 1)) for l in range(m)] for k in range(m)]
    nuc = {}
    for i in range(m):
        for j in range(i + 1, m):
            terms = [W[k][l] * float(Ginv[i, k] * Ginv[j, l]) for k in range(m) for l in range(m)
                     if Ginv[i, k] * Ginv[j, l] != 0 and not is_zero(W[k][l])]
            nuc[(i + 1, j + 1)] = add(*terms) if terms else 0.0
    nu = MultivectorField(dom, 2, nuc)
    pi = wedge(MultivectorField(dom, 1, {(0,): tv}), R) + nu
    grid = grid or _grid_for(dom)
    rep = is_b_serious(pi, grid, t)
    normal = wedge(dom.d(t), lifted_theta) * tv + phi_z.on(dom) + exterior_derivative(theta_z).on(dom) * (0.5 * tv * tv)
    rep.provenance["normal_form_residual"] = _diff(normal, folded, grid.points())
    return pi, rep
