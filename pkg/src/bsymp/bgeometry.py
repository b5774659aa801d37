"""b-forms and b-bivectors on a collar around a hypersurface ``Z = {t = 0}``.

A :class:`BForm` stores ``w = dlog|t| ^ alpha + beta`` and is never evaluated
as an ordinary form on ``Z``. All numeric checks use the b-frame
``(t d_t, d_base)`` with dual coframe ``(dt/t, dx_base)``; in it a b-form has
bounded components

* on ``(T, J)``: ``alpha_J + t * beta_{tJ}``
* on a base index set ``J``: ``beta_J``

so the b-frame version :meth:`BForm.frame_form` is an ordinary smooth field
whose Pfaffian measures b-nondegeneracy across ``t = 0``. Dually a
:class:`BBivector` is ``t d_t ^ r + nu`` and has b-frame matrix entries
``[T, i] = r^i`` and ``[i, j] = nu^ij``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chartcalc import (DEFAULT_BAND, REL_CONDITION, ChartDomain, FormField, MultivectorField,
                        SampleGrid, conditioning, exterior_derivative, field_matrices,
                        form_matrix, sym_inverse, top_coefficient, wedge)
from .errors import ArityError, DegenerateError, DomainError, TransversalityFail
from .expr import add, div, evaluate_many, mul, neg, var
from .report import LocusReport, VerificationReport

TOL_CLOSED = 1e-8
NONDEGENERACY_MARGIN = 1e-6
TRANSVERSALITY_THRESHOLD = 1e-4
BISECTION_TOL = 1e-10
TANGENCY_TOL = 1e-7

__all__ = [
    "CollarChart", "BForm", "BBivector", "b_flat", "b_differential", "is_b_symplectic",
    "bivector_from_bform", "bform_from_bivector", "singular_locus", "is_b_serious",
    "TOL_CLOSED", "NONDEGENERACY_MARGIN", "TRANSVERSALITY_THRESHOLD",
]


@dataclass(frozen=True)
class CollarChart:
    """``base x (-eps, eps)`` with the transverse coordinate placed first."""

    base: ChartDomain
    eps: float = 1.0
    t: str = "t"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("collar width must be positive")
        if self.t in self.base.coords:
            raise ValueError(f"transverse coordinate {self.t!r} clashes with the base")

    @classmethod
    def around(cls, domain: ChartDomain, t: str = "t") -> "CollarChart":
        """Collar whose total chart is ``domain`` (which must contain ``t``)."""
        a, b = domain.bounds[domain.index(t)]
        if domain.index(t) != 0:
            raise ValueError("the transverse coordinate must come first")
        if not a < 0 < b:
            raise ValueError("collar chart must straddle t = 0")
        return cls(domain.without(t), min(-a, b), t)

    @property
    def domain(self) -> ChartDomain:
        return self.base.with_axis(self.t, (-self.eps, self.eps), first=True)

    @property
    def dim(self) -> int:
        return self.base.dim + 1

    def grid(self, resolution=17, band=DEFAULT_BAND) -> SampleGrid:
        return SampleGrid.banded(self.domain, resolution, {self.t: 0.0}, band)


def _drop_t(form: FormField, ti: int = 0) -> FormField:
    return FormField(form.domain, form.degree,
                     {k: v for k, v in form.components.items() if ti not in k})


class BForm:
    """``dlog|t| ^ alpha + beta`` on a collar; ``alpha`` has no ``dt`` part."""

    __slots__ = ("collar", "alpha", "beta")

    def __init__(self, collar: CollarChart, alpha: FormField, beta: FormField):
        dom = collar.domain
        if alpha.domain != dom or beta.domain != dom:
            raise DomainError("alpha and beta must live on the collar chart")
        if alpha.degree + 1 != beta.degree:
            raise ArityError("alpha must have degree one less than beta")
        self.collar = collar
        self.alpha = _drop_t(alpha)
        self.beta = beta

    @classmethod
    def ordinary(cls, collar, beta: FormField) -> "BForm":
        return cls(collar, FormField(collar.domain, beta.degree - 1), beta)

    @property
    def degree(self) -> int:
        return self.beta.degree

    @property
    def domain(self) -> ChartDomain:
        return self.collar.domain

    @property
    def is_smooth(self) -> bool:
        return self.alpha.is_zero()

    def frame_form(self) -> FormField:
        """Components in the b-frame ``(t d_t, d_base)`` as a smooth field."""
        t = var(self.collar.t)
        comps = {}
        for k, v in self.alpha.components.items():
            comps[(0,) + k] = v
        for k, v in self.beta.components.items():
            if 0 in k:
                tv = mul(t, v)
                comps[k] = add(comps[k], tv) if k in comps else tv
            else:
                comps[k] = add(comps[k], v) if k in comps else v
        return FormField(self.domain, self.degree, comps)

    def as_form(self) -> FormField:
        """Ordinary form ``dt/t ^ alpha + beta``; singular on ``t = 0``."""
        dom = self.domain
        dlog = FormField(dom, 1, {(0,): div(1.0, var(self.collar.t))})
        return wedge(dlog, self.alpha) + self.beta

    def evaluate(self, points) -> dict:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(pts[:, 0] == 0.0) and not self.is_smooth:
            raise DomainError("a b-form has no ordinary value on t = 0")
        return self.as_form().evaluate(pts)

    def __add__(self, other):
        return BForm(self.collar, self.alpha + other.alpha, self.beta + other.beta)

    def __mul__(self, s):
        return BForm(self.collar, self.alpha * s, self.beta * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"BForm(alpha={self.alpha!r}, beta={self.beta!r})"


class BBivector:
    """``t d_t ^ r + nu`` on a collar."""

    __slots__ = ("collar", "r_part", "nu_part")

    def __init__(self, collar: CollarChart, r_part: MultivectorField, nu_part: MultivectorField):
        dom = collar.domain
        if r_part.domain != dom or nu_part.domain != dom:
            raise DomainError("parts must live on the collar chart")
        if r_part.degree + 1 != nu_part.degree:
            raise ArityError("r_part must have degree one less than nu_part")
        self.collar = collar
        self.r_part = MultivectorField(dom, r_part.degree,
                                       {k: v for k, v in r_part.components.items() if 0 not in k})
        self.nu_part = nu_part

    @property
    def domain(self):
        return self.collar.domain

    def as_multivector(self) -> MultivectorField:
        tdt = MultivectorField(self.domain, 1, {(0,): var(self.collar.t)})
        return wedge(tdt, self.r_part) + self.nu_part

    def frame_field(self) -> MultivectorField:
        """b-frame components ``[T, J] = r^J``, ``[J] = nu^J``; needs ``nu`` tangent to ``Z``."""
        if any(0 in k for k in self.nu_part.components) and not self.r_part.is_zero():
            raise DomainError("nu has d_t components; not a b-bivector in this decomposition")
        comps = {(0,) + k: v for k, v in self.r_part.components.items()}
        comps.update(self.nu_part.components)
        return MultivectorField(self.domain, self.nu_part.degree, comps)

    def __repr__(self):
        return f"BBivector(r={self.r_part!r}, nu={self.nu_part!r})"


# -- operations -------------------------------------------------------------

def b_flat(omega: BForm) -> FormField:
    """``alpha`` restricted to ``Z``, as a form on the base chart."""
    return omega.alpha.restrict(omega.collar.t, 0.0).on(omega.collar.base)


def b_differential(omega: BForm) -> BForm:
    """``bd(dlog|t| ^ a + b) = -dlog|t| ^ da + db``."""
    return BForm(omega.collar, -exterior_derivative(omega.alpha), exterior_derivative(omega.beta))


def _with_t_slice(points, ti=0):
    """Grid points plus their projections onto ``t = 0``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sl = pts.copy()
    sl[:, ti] = 0.0
    return np.unique(np.vstack([pts, sl]), axis=0)


def _max_abs(field, points) -> float:
    if field.is_zero():
        return 0.0
    return field.max_abs(points)


def is_b_symplectic(omega: BForm, grid: SampleGrid = None, tol_closed: float = TOL_CLOSED,
                    margin: float = NONDEGENERACY_MARGIN) -> VerificationReport:
    """Closedness of ``bd omega`` and b-nondegeneracy, measured in the b-frame.

    Nondegeneracy is ``min |omega^n|`` over the grid together with its
    ``t = 0`` slice (the hypersurface itself is where b-nondegeneracy bites).
    A smooth form (no ``dlog|t|`` part) is judged as an ordinary symplectic
    form with empty singular locus.
    """
    if omega.degree != 2:
        raise ArityError("is_b_symplectic expects a b-form of degree 2")
    dom = omega.domain
    if dom.dim % 2:
        raise ArityError("collar must be even-dimensional")
    grid = grid or omega.collar.grid()
    rep = VerificationReport("is_b_symplectic", grid=grid.metadata())
    pts = grid.points()
    full = _with_t_slice(pts)
    bd = b_differential(omega).frame_form()
    closed = _max_abs(bd, full)
    rep.add("closedness", closed, tol_closed)
    coeff = top_coefficient(omega.beta if omega.is_smooth else omega.frame_form())
    vals = np.abs(np.broadcast_to(evaluate_many([coeff], dom.env(full))[0], (len(full),)))
    rep.add("nondegeneracy", float(vals.min()), margin, kind="min")
    rep.provenance["singular_locus"] = [] if omega.is_smooth else [omega.collar.t + " = 0"]
    rep.provenance["smooth"] = omega.is_smooth
    rep.provenance["symbolically_closed"] = bd.is_zero()
    return rep


def _neg_matrix(M):
    return [[neg(e) for e in row] for row in M]


def bivector_from_bform(omega: BForm, grid: SampleGrid = None,
                        rel_threshold: float = REL_CONDITION) -> BBivector:
    """The b-bivector inverse to a b-symplectic form, in closed form.

    ``Pi_b = -inv(Omega_b)`` in the b-frame. For a smooth form the ordinary
    inverse is returned with ``r = 0``. When ``grid`` is given the b-frame
    matrices are checked for conditioning first.
    """
    if omega.degree != 2:
        raise ArityError("expected a b-form of degree 2")
    collar, dom = omega.collar, omega.domain
    wf = omega.beta if omega.is_smooth else omega.frame_form()
    if grid is not None:
        pts = _with_t_slice(grid.points()) if not omega.is_smooth else grid.points()
        smin, smax = conditioning(field_matrices(wf, pts))
        bad = ~(smin >= rel_threshold * smax) | (smax == 0)
        if bad.any():
            raise DegenerateError(f"b-form degenerate at {int(bad.sum())} grid points")
    try:
        P = _neg_matrix(sym_inverse(form_matrix(wf)))
    except DegenerateError:
        raise DegenerateError("b-form is identically degenerate") from None
    n = dom.dim
    if omega.is_smooth:
        nu = MultivectorField(dom, 2, {(i, j): P[i][j] for i in range(n) for j in range(i + 1, n)})
        return BBivector(collar, MultivectorField(dom, 1), nu)
    r = MultivectorField(dom, 1, {(j,): P[0][j] for j in range(1, n)})
    nu = MultivectorField(dom, 2, {(i, j): P[i][j] for i in range(1, n) for j in range(i + 1, n)})
    return BBivector(collar, r, nu)


def bform_from_bivector(pi: BBivector, grid: SampleGrid = None,
                        rel_threshold: float = REL_CONDITION) -> BForm:
    """Inverse of :func:`bivector_from_bform` (``Omega_b = -inv(Pi_b)``)."""
    if pi.nu_part.degree != 2:
        raise ArityError("expected a b-bivector of degree 2")
    collar, dom = pi.collar, pi.domain
    n = dom.dim
    smooth = pi.r_part.is_zero()
    pf = pi.nu_part if smooth else pi.frame_field()
    if grid is not None:
        pts = grid.points() if smooth else _with_t_slice(grid.points())
        smin, smax = conditioning(field_matrices(pf, pts))
        bad = ~(smin >= rel_threshold * smax) | (smax == 0)
        if bad.any():
            raise DegenerateError(f"b-bivector degenerate at {int(bad.sum())} grid points")
    W = _neg_matrix(sym_inverse(form_matrix(pf)))
    if smooth:
        beta = FormField(dom, 2, {(i, j): W[i][j] for i in range(n) for j in range(i + 1, n)})
        return BForm.ordinary(collar, beta)
    alpha = FormField(dom, 1, {(j,): W[0][j] for j in range(1, n)})
    beta = FormField(dom, 2, {(i, j): W[i][j] for i in range(1, n) for j in range(i + 1, n)})
    return BForm(collar, alpha, beta)


# -- singular locus -----------------------------------------------------------

def _bisect(f, lo, hi, flo, tol=BISECTION_TOL):
    """Vectorised bisection for sign changes of ``f`` on ``[lo, hi]`` (arrays)."""
    lo, hi, flo = lo.copy(), hi.copy(), flo.copy()
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        exact = fm == 0.0
        lo = np.where(left & ~exact, mid, lo)
        flo = np.where(left & ~exact, fm, flo)
        hi = np.where(left & ~exact, hi, mid)
        lo = np.where(exact, mid, lo)
        hi = np.where(exact, mid, hi)
    return 0.5 * (lo + hi)


def _transverse_coord(domain, coord):
    if coord is not None:
        return domain.index(coord)
    return domain.index("t") if "t" in domain.coords else 0


def singular_locus(pi: MultivectorField, grid: SampleGrid, coord=None, samples: int = None,
                   threshold: float = TRANSVERSALITY_THRESHOLD, touch_tol: float = 1e-8) -> LocusReport:
    """Zeros of the coefficient of ``pi^n`` along grid lines in ``coord``.

    Sign changes are bracketed and bisected to 1e-10; exact zeros at sample
    points count directly; a local extremum of the coefficient with
    ``|c| < touch_tol`` counts as a (non-transverse) zero. Raises
    :class:`TransversalityFail` if any zero has ``|dc/dt| < threshold``.
    """
    if isinstance(pi, BBivector):
        pi = pi.as_multivector()
    dom = pi.domain
    if pi.degree != 2 or dom.dim % 2:
        raise ArityError("singular_locus expects a bivector on an even-dimensional chart")
    ci = _transverse_coord(dom, coord)
    name = dom.coords[ci]
    c = top_coefficient(pi)
    dc = c.diff(name)
    base, ts = grid.lines(name, samples)
    L, M = len(base), len(ts)

    def points_at(tvals, rows):
        P = np.insert(base[rows], ci, tvals, axis=1)
        return P

    def evalc(expr, rows):
        def f(tvals):
            P = points_at(tvals, rows)
            return np.broadcast_to(evaluate_many([expr], dom.env(P))[0], (len(P),)).astype(float)
        return f

    rows_all = np.repeat(np.arange(L), M)
    t_all = np.tile(ts, L)
    C = evalc(c, rows_all)(t_all).reshape(L, M)
    DC = evalc(dc, rows_all)(t_all).reshape(L, M)

    found_rows, found_t = [], []
    # exact zeros at samples
    zr, zk = np.nonzero(C == 0.0)
    found_rows.append(zr)
    found_t.append(ts[zk])
    # sign changes between neighbours (with wrap-around on periodic axes)
    k_lo = np.arange(M - 1)
    k_hi = k_lo + 1
    t_lo, t_hi = ts[k_lo], ts[k_hi]
    if dom.periodic[ci] and M > 1:
        k_lo = np.append(k_lo, M - 1)
        k_hi = np.append(k_hi, 0)
        t_lo = np.append(t_lo, ts[-1])
        t_hi = np.append(t_hi, ts[0] + dom.period(name))
    prod = C[:, k_lo] * C[:, k_hi]
    sr, sk = np.nonzero(prod < 0)
    if len(sr):
        roots = _bisect(evalc(c, sr), t_lo[sk], t_hi[sk], C[sr, k_lo[sk]])
        found_rows.append(sr)
        found_t.append(roots)
    # touching zeros: derivative changes sign while c keeps its sign
    dprod = DC[:, k_lo] * DC[:, k_hi]
    tr, tk = np.nonzero((dprod < 0) & (prod > 0))
    if len(tr):
        ext = _bisect(evalc(dc, tr), t_lo[tk], t_hi[tk], DC[tr, k_lo[tk]])
        cv = evalc(c, tr)(ext)
        hit = np.abs(cv) < touch_tol
        found_rows.append(tr[hit])
        found_t.append(ext[hit])

    rows = np.concatenate(found_rows).astype(int)
    tv = np.concatenate(found_t).astype(float)
    if dom.periodic[ci]:
        a, _ = dom.bounds[ci]
        tv = a + np.mod(tv - a, dom.period(name))
    if len(rows):
        pts = points_at(tv, rows)
        pts = np.unique(np.round(pts, 12), axis=0)
        der = np.broadcast_to(evaluate_many([dc], dom.env(pts))[0], (len(pts),)).astype(float)
    else:
        pts = np.zeros((0, dom.dim))
        der = np.zeros(0)
    rep = LocusReport(name, ci, pts, der, L, threshold)
    if len(pts) and rep.margin < threshold:
        raise TransversalityFail(
            f"top power of the bivector vanishes non-transversally (|d/d{name}| = {rep.margin:.3g}"
            f" < {threshold:g})", rep)
    return rep


def is_b_serious(pi: MultivectorField, grid: SampleGrid, coord=None,
                 tol: float = TANGENCY_TOL,
                 threshold: float = TRANSVERSALITY_THRESHOLD) -> VerificationReport:
    """Transversal nondegeneracy plus tangency to the located hypersurface.

    After translating the transverse coordinate to each root, the bivector has
    the shape ``t d_t ^ (.) + (.)`` iff every ``d_t ^ d_j`` component vanishes
    on the locus. Closedness/Poisson is not required.
    """
    if isinstance(pi, BBivector):
        pi = pi.as_multivector()
    locus = singular_locus(pi, grid, coord, threshold=threshold)
    rep = VerificationReport("is_b_serious", grid=grid.metadata())
    rep.provenance["locus"] = locus.to_dict()
    if locus.empty:
        rep.notes.append("empty singular locus: nondegenerate bivector, b-serious vacuously")
        return rep
    rep.add("transversality", locus.margin, threshold, kind="min")
    ci = locus.coord_index
    tcomps = [v for k, v in pi.components.items() if ci in k]
    if tcomps:
        vals = evaluate_many(tcomps, pi.domain.env(locus.roots))
        worst = max(float(np.max(np.abs(v))) for v in vals)
    else:
        worst = 0.0
    rep.add("normal_components_on_locus", worst, tol)
    return rep
