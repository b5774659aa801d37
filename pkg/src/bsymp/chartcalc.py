"""Exterior calculus on coordinate charts.

Conventions used throughout the package:

* Antisymmetric fields store components for strictly increasing index tuples:
  a p-form is ``sum_I w_I dx^I``, a p-vector ``sum_I P^I d_I``. Evaluation is
  ``w(V_1..V_p) = sum_I w_I det[V_j^i]_{i in I}``, so ``dx^dy(e1, e2) = 1``.
* Interior products contract the leading slots:
  ``(i_V w)(W..) = w(V_1, .., V_k, W..)`` for ``V = V_1^..^V_k``. The same rule
  contracts a form into a multivector.
* Schouten bracket, with odd symbols ``z_i`` standing for ``d_i``::

      [P, Q] = sum_i (P d<z_i)(d_i Q) - (d_i P)(d>z_i Q)

  (right derivative on P, left derivative on Q). On vector fields this is the
  Lie bracket; ``[P, Q] = -(-1)^((p-1)(q-1)) [Q, P]`` and ``[pi, pi] = 0`` is
  the Poisson condition.
* Musical maps: ``w_flat(v) = w(., v)`` and ``pi_sharp(xi) = pi(xi, .)``. The
  bivector inverse to a nondegenerate 2-form satisfies
  ``pi_sharp o w_flat = id``; in component matrices ``Pi = -inv(Omega)``, so
  ``dx^dy`` corresponds to ``d_x ^ d_y``.

Derivatives of field components are symbolic. Maps given only numerically use
central differences with step :data:`FD_STEP`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ArityError, DegenerateError, DomainError
from .expr import (ONE, ZERO, Expr, add, as_expr, div, evaluate_many, is_zero, mul, neg,
                   var)

FD_STEP = 1e-5
REL_CONDITION = 1e-8
DEFAULT_RESOLUTION = 17
DEFAULT_BAND = 0.05

__all__ = [
    "ChartDomain", "SampleGrid", "FormField", "MultivectorField", "ChartMap",
    "eval_form", "exterior_derivative", "wedge", "top_power", "interior_product",
    "schouten_bracket", "lie_bracket", "pullback", "pullback_at", "sharp_inverse",
    "inverse_bivector", "inverse_form", "sym_det", "sym_inverse", "form_matrix",
    "field_matrices", "conditioning", "top_coefficient", "FD_STEP", "REL_CONDITION",
]


# -- domains and grids ------------------------------------------------------

@dataclass(frozen=True)
class ChartDomain:
    """Box in R^n with named coordinates; periodic axes carry their period."""

    coords: tuple
    bounds: tuple
    periodic: tuple = None

    def __post_init__(self):
        coords = tuple(self.coords)
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        periodic = tuple(bool(p) for p in (self.periodic or (False,) * len(coords)))
        if not (len(coords) == len(bounds) == len(periodic)):
            raise ValueError("coords, bounds and periodic flags must have equal length")
        if len(set(coords)) != len(coords):
            raise ValueError(f"duplicate coordinate names in {coords}")
        for name, (a, b), p in zip(coords, bounds, periodic):
            if not name.isidentifier():
                raise ValueError(f"bad coordinate name {name!r}")
            if not b > a:
                raise ValueError(f"empty interval for {name}")
            if p and not math.isfinite(b - a):
                raise ValueError(f"periodic coordinate {name} needs a finite period")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def box(cls, **axes):
        """``ChartDomain.box(x=(0, 1), theta=("periodic", 0, 2*pi))``."""
        coords, bounds, periodic = [], [], []
        for name, spec in axes.items():
            coords.append(name)
            if spec[0] == "periodic":
                bounds.append((spec[1], spec[2]))
                periodic.append(True)
            else:
                bounds.append(tuple(spec))
                periodic.append(False)
        return cls(tuple(coords), tuple(bounds), tuple(periodic))

    @classmethod
    def torus(cls, names, period=2 * math.pi):
        return cls(tuple(names), tuple((0.0, period) for _ in names), (True,) * len(names))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.dim:
                raise IndexError(name)
            return int(name)
        try:
            return self.coords.index(name)
        except ValueError:
            raise KeyError(f"no coordinate {name!r} in {self.coords}") from None

    def indices(self, key) -> tuple:
        if isinstance(key, str):
            key = key.replace(",", " ").split()
        elif isinstance(key, (int, np.integer)):
            key = (key,)
        return tuple(self.index(k) for k in key)

    def var(self, name) -> Expr:
        return var(self.coords[self.index(name)])

    def d(self, name) -> "FormField":
        return FormField(self, 1, {(self.index(name),): ONE})

    def partial(self, name) -> "MultivectorField":
        return MultivectorField(self, 1, {(self.index(name),): ONE})

    def period(self, name) -> float:
        i = self.index(name)
        if not self.periodic[i]:
            raise ValueError(f"{name} is not periodic")
        a, b = self.bounds[i]
        return b - a

    def contains(self, points, atol=1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all(np.isfinite(pts), axis=1)
        for i, ((a, b), p) in enumerate(zip(self.bounds, self.periodic)):
            if not p:
                ok &= (pts[:, i] >= a - atol) & (pts[:, i] <= b + atol)
        return ok

    def env(self, points) -> dict:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ArityError(f"points have {pts.shape[1]} coordinates, domain has {self.dim}")
        return {name: pts[:, i] for i, name in enumerate(self.coords)}

    def with_axis(self, name, bounds, periodic=False, first=True) -> "ChartDomain":
        if first:
            return ChartDomain((name,) + self.coords, (tuple(bounds),) + self.bounds,
                               (periodic,) + self.periodic)
        return ChartDomain(self.coords + (name,), self.bounds + (tuple(bounds),),
                           self.periodic + (periodic,))

    def without(self, name) -> "ChartDomain":
        i = self.index(name)
        keep = [k for k in range(self.dim) if k != i]
        return ChartDomain(tuple(self.coords[k] for k in keep), tuple(self.bounds[k] for k in keep),
                           tuple(self.periodic[k] for k in keep))

    def product(self, other: "ChartDomain") -> "ChartDomain":
        return ChartDomain(self.coords + other.coords, self.bounds + other.bounds,
                           self.periodic + other.periodic)

    def to_dict(self) -> dict:
        return {"coords": list(self.coords), "bounds": [list(b) for b in self.bounds],
                "periodic": list(self.periodic)}


@dataclass(frozen=True)
class SampleGrid:
    """Tensor grid of interior points, optionally thinned by exclusion bands.

    Closed axes get ``resolution`` equally spaced interior points
    ``a + (b - a) k / (res + 1)``; periodic axes get ``resolution`` points of one
    period starting at ``a``. ``exclude`` holds ``(coord, center, band)``
    triples; points with ``|x - center| < band`` are dropped.
    """

    domain: ChartDomain
    resolution: object = DEFAULT_RESOLUTION
    exclude: tuple = ()
    predicate: Callable = field(default=None, compare=False)

    def __post_init__(self):
        res = self.resolution
        if isinstance(res, Mapping):
            res = tuple(int(res.get(c, DEFAULT_RESOLUTION)) for c in self.domain.coords)
        elif np.ndim(res) == 0:
            res = (int(res),) * self.domain.dim
        else:
            res = tuple(int(r) for r in res)
        if len(res) != self.domain.dim or min(res, default=1) < 1:
            raise ValueError("resolution must give a positive count per axis")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "exclude", tuple((str(c), float(x0), float(w)) for c, x0, w in self.exclude))

    @classmethod
    def banded(cls, domain, resolution=DEFAULT_RESOLUTION, singular=None, band=DEFAULT_BAND):
        """Grid excluding ``band`` around each ``{coord: value}`` in ``singular``."""
        singular = singular or {}
        return cls(domain, resolution, tuple((c, v, band) for c, v in singular.items()))

    def axis(self, i) -> np.ndarray:
        (a, b), p, n = self.domain.bounds[i], self.domain.periodic[i], self.resolution[i]
        k = np.arange(n, dtype=float)
        if p:
            return a + (b - a) * k / n
        return a + (b - a) * (k + 1) / (n + 1)

    def points(self) -> np.ndarray:
        axes = [self.axis(i) for i in range(self.domain.dim)]
        if not axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        keep = np.ones(len(pts), dtype=bool)
        for c, x0, w in self.exclude:
            keep &= np.abs(pts[:, self.domain.index(c)] - x0) >= w
        if self.predicate is not None:
            keep &= np.asarray(self.predicate(pts), dtype=bool)
        return pts[keep]

    def lines(self, coord, samples=None) -> tuple:
        """Base points of lines parallel to ``coord`` and the sample values on them."""
        i = self.domain.index(coord)
        sub = SampleGrid(self.domain.without(self.domain.coords[i]),
                         tuple(r for k, r in enumerate(self.resolution) if k != i))
        base = sub.points()
        (a, b) = self.domain.bounds[i]
        n = samples or self.resolution[i]
        if self.domain.periodic[i]:
            ts = a + (b - a) * np.arange(n) / n
        else:
            ts = a + (b - a) * (np.arange(n) + 1.0) / (n + 1)
        return base, ts

    def metadata(self) -> dict:
        return {"coords": list(self.domain.coords), "resolution": list(self.resolution),
                "exclude": [list(e) for e in self.exclude], "points": int(len(self.points()))}


# -- index bookkeeping -------------------------------------------------------

def _merge_sign(a: tuple, b: tuple):
    """Sign and sorted union of the concatenation ``a + b`` (0 on overlap)."""
    if set(a) & set(b):
        return 0, None
    seq = list(a) + list(b)
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return (-1 if inv % 2 else 1), tuple(sorted(seq))


def _sort_sign(idx: tuple):
    if len(set(idx)) != len(idx):
        return 0, None
    return _merge_sign(tuple(idx), ())


def _combos(dim, p):
    return list(itertools.combinations(range(dim), p))


# -- fields -----------------------------------------------------------------

class _Alternating:
    kind = "alternating"
    __slots__ = ("domain", "degree", "components")

    def __init__(self, domain: ChartDomain, degree: int, components=None):
        if degree < 0:
            raise ArityError("negative degree")
        comps = {}
        if degree <= domain.dim:
            allowed = set(domain.coords)
            for key, value in (components or {}).items():
                idx = () if degree == 0 and key in ((), "", None) else domain.indices(key)
                if len(idx) != degree:
                    raise ArityError(f"component {key!r} has {len(idx)} indices, degree is {degree}")
                sign, srt = _sort_sign(idx)
                if sign == 0:
                    continue
                e = as_expr(value)
                stray = e.free_vars() - allowed
                if stray:
                    raise DomainError(f"expression uses {sorted(stray)} outside chart {domain.coords}")
                e = e if sign > 0 else neg(e)
                comps[srt] = add(comps[srt], e) if srt in comps else e
        self.domain = domain
        self.degree = degree
        self.components = {k: v for k, v in sorted(comps.items()) if not is_zero(v)}

    def _new(self, degree, comps, domain=None):
        return type(self)(domain or self.domain, degree, comps)

    @classmethod
    def scalar(cls, domain, value):
        return cls(domain, 0, {(): value})

    # algebra
    def __add__(self, other):
        self._check(other)
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = add(comps[k], v) if k in comps else v
        return self._new(self.degree, comps)

    def __neg__(self):
        return self._new(self.degree, {k: neg(v) for k, v in self.components.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, _Alternating):
            return wedge(self, scalar)
        s = as_expr(scalar)
        return self._new(self.degree, {k: mul(s, v) for k, v in self.components.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.domain != self.domain:
            raise DomainError("fields live on different charts")
        if other.degree != self.degree:
            raise ArityError("degree mismatch")

    # access
    def component(self, key) -> Expr:
        idx = self.domain.indices(key) if not isinstance(key, tuple) or any(
            isinstance(k, str) for k in key) else tuple(key)
        sign, srt = _sort_sign(idx)
        if sign == 0:
            return ZERO
        e = self.components.get(srt, ZERO)
        return e if sign > 0 else neg(e)

    def is_zero(self) -> bool:
        return not self.components

    def names(self, idx) -> str:
        return " ".join(self.domain.coords[i] for i in idx)

    def evaluate(self, points) -> dict:
        """Component values at ``points``: ``{index tuple: array (N,)}``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        env = self.domain.env(pts)
        keys = list(self.components)
        vals = evaluate_many([self.components[k] for k in keys], env)
        return {k: np.broadcast_to(v, (len(pts),)).astype(float) for k, v in zip(keys, vals)}

    def dense(self, points) -> np.ndarray:
        """Values as an array (N, C(dim, p)) in lexicographic index order."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        combos = _combos(self.domain.dim, self.degree)
        vals = self.evaluate(pts)
        out = np.zeros((len(pts), len(combos)))
        for j, c in enumerate(combos):
            if c in vals:
                out[:, j] = vals[c]
        return out

    def max_abs(self, points) -> float:
        vals = self.evaluate(points)
        if not vals:
            return 0.0
        return float(max(np.max(np.abs(v)) for v in vals.values()))

    def subs(self, mapping, domain=None):
        return self._new(self.degree, {k: v.subs(mapping) for k, v in self.components.items()},
                         domain)

    def on(self, domain: ChartDomain):
        """Same components re-indexed on a chart that shares the coordinate names."""
        comps = {}
        for k, v in self.components.items():
            comps[tuple(domain.index(self.domain.coords[i]) for i in k)] = v
        return type(self)(domain, self.degree, comps)

    def restrict(self, coord, value):
        """Pull back to the slice ``coord = value`` (drops components along ``coord``)."""
        i = self.domain.index(coord)
        sub = self.domain.without(coord)
        name = self.domain.coords[i]
        comps = {}
        for k, v in self.components.items():
            if i in k:
                continue
            comps[tuple(sub.index(self.domain.coords[j]) for j in k)] = v.subs({name: value})
        return type(self)(sub, self.degree, comps)

    def to_dict(self) -> dict:
        from .expr import dumps
        return {self.names(k): dumps(v) for k, v in self.components.items()}

    def __repr__(self):
        body = ", ".join(f"{self.names(k) or '1'}: {v}" for k, v in self.components.items())
        return f"{type(self).__name__}(deg={self.degree}, {{{body}}})"


class FormField(_Alternating):
    kind = "form"
    __slots__ = ()


class MultivectorField(_Alternating):
    kind = "multivector"
    __slots__ = ()


def _same_kind(a, b):
    if type(a) is not type(b):
        raise TypeError(f"expected two {type(a).__name__}s, got {type(b).__name__}")
    if a.domain != b.domain:
        raise DomainError("fields live on different charts")


# -- operations -------------------------------------------------------------

def eval_form(omega: FormField, x, vectors: Sequence) -> float:
    """Alternating multilinear evaluation ``omega_x(V_1, .., V_p)``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != omega.domain.dim or not omega.domain.contains(x)[0]:
        raise DomainError(f"point {x[0]} is outside the chart")
    vecs = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
    if len(vecs) != omega.degree:
        raise ArityError(f"{omega.degree}-form given {len(vecs)} vectors")
    if any(v.shape[0] != omega.domain.dim for v in vecs):
        raise ArityError("vector dimension does not match the chart")
    if omega.degree == 0:
        return float(omega.evaluate(x).get((), np.zeros(1))[0])
    V = np.stack(vecs, axis=1)
    total = 0.0
    for idx, val in omega.evaluate(x).items():
        total += val[0] * np.linalg.det(V[list(idx), :])
    return float(total)


def exterior_derivative(omega: FormField) -> FormField:
    if not isinstance(omega, FormField):
        raise TypeError("exterior_derivative expects a FormField")
    dom = omega.domain
    if omega.degree >= dom.dim:
        return FormField(dom, omega.degree + 1)
    comps = {}
    for idx, e in omega.components.items():
        for i, name in enumerate(dom.coords):
            de = e.diff(name)
            if is_zero(de):
                continue
            sign, srt = _merge_sign((i,), idx)
            if sign == 0:
                continue
            term = de if sign > 0 else neg(de)
            comps[srt] = add(comps[srt], term) if srt in comps else term
    return FormField(dom, omega.degree + 1, comps)


def wedge(a, b):
    """Graded-commutative product of two forms or two multivector fields."""
    _same_kind(a, b)
    deg = a.degree + b.degree
    if deg > a.domain.dim:
        return a._new(deg, {})
    comps = {}
    for ia, ea in a.components.items():
        for ib, eb in b.components.items():
            sign, srt = _merge_sign(ia, ib)
            if sign == 0:
                continue
            term = mul(ea, eb) if sign > 0 else neg(mul(ea, eb))
            comps[srt] = add(comps[srt], term) if srt in comps else term
    return a._new(deg, comps)


def top_power(P, n: int):
    """n-fold wedge power of a degree-2 field."""
    if P.degree != 2:
        raise ArityError("top_power expects a degree-2 field")
    if n < 1 or 2 * n > P.domain.dim:
        raise ArityError(f"cannot take power {n} of a bivector on a {P.domain.dim}-dimensional chart")
    out = P
    for _ in range(n - 1):
        out = wedge(out, P)
    return out


def top_coefficient(P) -> Expr:
    """Single coefficient of the top power ``P^n`` (degree 2 field, even dim)."""
    n = P.domain.dim // 2
    if P.domain.dim % 2:
        raise ArityError("top coefficient needs an even-dimensional chart")
    if n == 0:
        return ONE
    return top_power(P, n).component(tuple(range(P.domain.dim)))


def interior_product(V, omega):
    """Contract ``V`` into the leading slots of ``omega``.

    ``V`` a multivector and ``omega`` a form gives a form; the mirror case (a
    form contracted into a multivector) gives a multivector.
    """
    if V.domain != omega.domain:
        raise DomainError("fields live on different charts")
    if isinstance(V, MultivectorField) and isinstance(omega, FormField):
        out_type = FormField
    elif isinstance(V, FormField) and isinstance(omega, MultivectorField):
        out_type = MultivectorField
    else:
        raise TypeError("interior_product pairs a multivector with a form")
    if V.degree > omega.degree:
        raise ArityError(f"cannot contract degree {V.degree} into degree {omega.degree}")
    deg = omega.degree - V.degree
    comps = {}
    for iv, ev in V.components.items():
        for iw, ew in omega.components.items():
            if not set(iv) <= set(iw):
                continue
            rest = tuple(i for i in iw if i not in iv)
            sign, _ = _merge_sign(iv, rest)
            term = mul(ev, ew) if sign > 0 else neg(mul(ev, ew))
            comps[rest] = add(comps[rest], term) if rest in comps else term
    return out_type(V.domain, deg, comps)


def _zeta_deriv(idx, i, side):
    """Odd derivative of the monomial z_idx by z_i: (sign, remaining) or None."""
    if i not in idx:
        return None
    k = idx.index(i)
    m = len(idx)
    exponent = k if side == "left" else m - 1 - k
    return (-1 if exponent % 2 else 1), idx[:k] + idx[k + 1:]


def schouten_bracket(P: MultivectorField, Q: MultivectorField) -> MultivectorField:
    _same_kind(P, Q)
    if not isinstance(P, MultivectorField):
        raise TypeError("schouten_bracket expects multivector fields")
    dom = P.domain
    deg = P.degree + Q.degree - 1
    if deg < 0:
        return MultivectorField(dom, 0)
    if deg > dom.dim:
        return MultivectorField(dom, deg)
    comps = {}

    def acc(key, term):
        comps[key] = add(comps[key], term) if key in comps else term

    for i, name in enumerate(dom.coords):
        for ip, ep in P.components.items():
            dp = _zeta_deriv(ip, i, "right")
            if dp is not None:
                for iq, eq in Q.components.items():
                    dq = eq.diff(name)
                    if is_zero(dq):
                        continue
                    sign, srt = _merge_sign(dp[1], iq)
                    if sign:
                        s = sign * dp[0]
                        acc(srt, mul(ep, dq) if s > 0 else neg(mul(ep, dq)))
            dpx = ep.diff(name)
            if is_zero(dpx):
                continue
            for iq, eq in Q.components.items():
                dq = _zeta_deriv(iq, i, "left")
                if dq is None:
                    continue
                sign, srt = _merge_sign(ip, dq[1])
                if sign:
                    s = -sign * dq[0]
                    acc(srt, mul(dpx, eq) if s > 0 else neg(mul(dpx, eq)))
    return MultivectorField(dom, deg, comps)


def lie_bracket(X: MultivectorField, Y: MultivectorField) -> MultivectorField:
    if X.degree != 1 or Y.degree != 1:
        raise ArityError("lie_bracket expects vector fields")
    return schouten_bracket(X, Y)


# -- symbolic linear algebra ------------------------------------------------

def sym_det(M) -> Expr:
    """Determinant of a square matrix of expressions (memoised Laplace expansion)."""
    n = len(M)
    if n == 0:
        return ONE
    memo = {}

    def det(r, cols):
        if r == n:
            return ONE
        key = (r, cols)
        hit = memo.get(key)
        if hit is not None:
            return hit
        terms = []
        for pos, c in enumerate(cols):
            entry = M[r][c]
            if is_zero(entry):
                continue
            minor = det(r + 1, cols[:pos] + cols[pos + 1:])
            if is_zero(minor):
                continue
            t = mul(entry, minor)
            terms.append(t if pos % 2 == 0 else neg(t))
        out = add(*terms)
        memo[key] = out
        return out

    return det(0, tuple(range(n)))


def sym_inverse(M):
    """Inverse as a nested list of expressions (adjugate over determinant)."""
    n = len(M)
    D = sym_det(M)
    if is_zero(D):
        raise DegenerateError("matrix is identically singular")
    inv = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != i] for r in range(n) if r != j]
            cof = sym_det(minor)
            if is_zero(cof):
                continue
            inv[i][j] = div(cof if (i + j) % 2 == 0 else neg(cof), D)
    return inv


def form_matrix(omega) -> list:
    """Antisymmetric matrix of expressions for a degree-2 field."""
    if omega.degree != 2:
        raise ArityError("expected a degree-2 field")
    n = omega.domain.dim
    M = [[ZERO] * n for _ in range(n)]
    for (i, j), e in omega.components.items():
        M[i][j] = e
        M[j][i] = neg(e)
    return M


def _from_matrix(cls, domain, M):
    n = domain.dim
    return cls(domain, 2, {(i, j): M[i][j] for i in range(n) for j in range(i + 1, n)})


def inverse_bivector(omega: FormField) -> MultivectorField:
    """Closed-form bivector with ``pi_sharp o omega_flat = id`` (``Pi = -inv(Omega)``)."""
    inv = sym_inverse(form_matrix(omega))
    n = omega.domain.dim
    return _from_matrix(MultivectorField, omega.domain, [[neg(inv[i][j]) for j in range(n)] for i in range(n)])


def inverse_form(pi: MultivectorField) -> FormField:
    """Closed-form 2-form inverse to a nondegenerate bivector (``Omega = -inv(Pi)``)."""
    inv = sym_inverse(form_matrix(pi))
    n = pi.domain.dim
    return _from_matrix(FormField, pi.domain, [[neg(inv[i][j]) for j in range(n)] for i in range(n)])


def field_matrices(f, points) -> np.ndarray:
    """Dense antisymmetric matrices (N, d, d) of a degree-2 field at ``points``."""
    if f.degree != 2:
        raise ArityError("expected a degree-2 field")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = f.domain.dim
    out = np.zeros((len(pts), n, n))
    for (i, j), v in f.evaluate(pts).items():
        out[:, i, j] = v
        out[:, j, i] = -v
    return out


def conditioning(mats) -> tuple:
    """Smallest and largest singular values of a stack of matrices."""
    s = np.linalg.svd(np.asarray(mats, dtype=float), compute_uv=False)
    return s[:, -1], s[:, 0]


def sharp_inverse(omega: FormField, x, rel_threshold: float = REL_CONDITION) -> np.ndarray:
    """Component matrix ``Pi`` of the bivector inverse to ``omega`` at ``x``.

    ``Pi.T @ Omega == I`` (the matrix of ``pi_sharp`` is ``Pi.T``).
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if not omega.domain.contains(x)[0]:
        raise DomainError(f"point {x[0]} is outside the chart")
    Om = field_matrices(omega, x)[0]
    smin, smax = conditioning(Om[None])
    if not np.isfinite(Om).all() or smax[0] == 0 or smin[0] < rel_threshold * smax[0]:
        raise DegenerateError(f"2-form is degenerate at {x[0]} (sigma_min={smin[0]:.3g})")
    return -np.linalg.inv(Om)


# -- maps and pullbacks -----------------------------------------------------

class ChartMap:
    """Smooth map between charts.

    Either symbolic (``components``: target coordinate -> expression in source
    coordinates) or numeric (``func`` on arrays of shape (N, source.dim), with
    an optional analytic ``jacobian``; otherwise central differences with step
    ``fd_step``).
    """

    def __init__(self, source: ChartDomain, target: ChartDomain, components=None, func=None,
                 jacobian=None, fd_step: float = FD_STEP, name: str = None):
        self.source, self.target = source, target
        self.name = name
        self.fd_step = fd_step
        if components is not None:
            comps = {}
            for k, v in components.items():
                comps[target.coords[target.index(k)]] = as_expr(v)
            missing = set(target.coords) - comps.keys()
            if missing:
                raise ValueError(f"map is missing components for {sorted(missing)}")
            stray = set().union(*(e.free_vars() for e in comps.values())) - set(source.coords)
            if stray:
                raise DomainError(f"map components use {sorted(stray)} outside the source chart")
            self.components = tuple(comps[c] for c in target.coords)
            self._func = None
        elif func is not None:
            self.components = None
            self._func = func
        else:
            raise ValueError("ChartMap needs components or func")
        self._jacobian = jacobian

    @classmethod
    def identity(cls, domain):
        return cls(domain, domain, {c: var(c) for c in domain.coords}, name="identity")

    @property
    def symbolic(self) -> bool:
        return self.components is not None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.symbolic:
            vals = evaluate_many(self.components, self.source.env(pts))
            return np.stack([np.broadcast_to(v, (len(pts),)) for v in vals], axis=1).astype(float)
        return np.asarray(self._func(pts), dtype=float)

    def jacobian_exprs(self):
        if not self.symbolic:
            raise TypeError("numeric map has no symbolic Jacobian")
        return [[c.diff(s) for s in self.source.coords] for c in self.components]

    def jacobian(self, points, step: float = None) -> np.ndarray:
        """Jacobian matrices (N, target.dim, source.dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        N = len(pts)
        if self.symbolic:
            J = self.jacobian_exprs()
            flat = [e for row in J for e in row]
            vals = evaluate_many(flat, self.source.env(pts))
            out = np.stack([np.broadcast_to(v, (N,)) for v in vals], axis=1)
            return out.reshape(N, self.target.dim, self.source.dim).astype(float)
        if self._jacobian is not None and step is None:
            return np.asarray(self._jacobian(pts), dtype=float)
        return fd_jacobian(self._func, pts, step or self.fd_step)

    def compose(self, inner: "ChartMap") -> "ChartMap":
        """``self o inner``."""
        if inner.target != self.source:
            raise DomainError("maps do not compose: chart mismatch")
        if self.symbolic and inner.symbolic:
            sub = dict(zip(self.source.coords, inner.components))
            return ChartMap(inner.source, self.target,
                            {c: e.subs(sub) for c, e in zip(self.target.coords, self.components)})
        outer = self

        def func(p):
            return outer(inner(p))

        def jac(p):
            return outer.jacobian(inner(p)) @ inner.jacobian(p)

        return ChartMap(inner.source, self.target, func=func, jacobian=jac)


def fd_jacobian(func, points, step=FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``func`` at ``points`` (N, m, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    N, n = pts.shape
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        cols.append((np.asarray(func(pts + e)) - np.asarray(func(pts - e))) / (2 * step))
    return np.stack(cols, axis=2)


def pullback(F: ChartMap, omega: FormField) -> FormField:
    """Closed-form pullback along a symbolic map."""
    if omega.domain != F.target:
        raise DomainError("form does not live on the map's target chart")
    if not F.symbolic:
        raise TypeError("numeric maps only support pointwise pullback (pullback_at)")
    _check_image(F)
    sub = dict(zip(F.target.coords, F.components))
    J = F.jacobian_exprs()
    p = omega.degree
    comps = {}
    for I, e in omega.components.items():
        e_src = e.subs(sub)
        for Jdx in _combos(F.source.dim, p):
            minor = sym_det([[J[i][j] for j in Jdx] for i in I])
            if is_zero(minor):
                continue
            term = mul(e_src, minor)
            comps[Jdx] = add(comps[Jdx], term) if Jdx in comps else term
    return FormField(F.source, p, comps)


def _check_image(F, resolution=5):
    grid = SampleGrid(F.source, min(resolution, max(2, int(round(4096 ** (1 / max(F.source.dim, 1)))))))
    img = F(grid.points())
    if not F.target.contains(img).all():
        raise DomainError("map sends sample points outside the target chart")


def pullback_at(F: ChartMap, omega: FormField, points, step: float = None) -> np.ndarray:
    """Components of ``F*omega`` at ``points`` (N, C(n, p)), lexicographic order."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if omega.domain != F.target:
        raise DomainError("form does not live on the map's target chart")
    img = F(pts)
    if not F.target.contains(img).all():
        raise DomainError("image leaves the target chart")
    J = F.jacobian(pts, step=step)
    p = omega.degree
    vals = omega.evaluate(img)
    src = _combos(F.source.dim, p)
    out = np.zeros((len(pts), len(src)))
    if p == 0:
        out[:, 0] = vals.get((), np.zeros(len(pts)))
        return out
    for I, v in vals.items():
        for k, Jdx in enumerate(src):
            out[:, k] += v * np.linalg.det(J[:, list(I)][:, :, list(Jdx)])
    return out


def pfaffian_of(f, points) -> np.ndarray:
    """Pfaffian of a degree-2 field's component matrix at each point."""
    return _kernels.pfaffian(field_matrices(f, points))
