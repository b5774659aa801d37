"""Cosymplectic pairs ``(theta, eta)`` and their Reeb data ``(R, nu)``.

The Reeb field and the dual bivector are read off the inverse of the collar
form ``dt ^ theta + eta``: with ``Pi = -inv(A)`` for its component matrix
``A`` (``t`` first), ``R^i = Pi[t, i]`` and ``nu^ij = Pi[i, j]``. The inverse
is computed in closed form, so both fields are expressions and the brackets
``[R, nu]``, ``[nu, nu]`` are differentiated exactly.

Musical maps follow :mod:`bsymp.chartcalc`: ``eta_sharp(v) = eta(., v)`` and
``nu_sharp(xi) = nu(xi, .)``; the identity ``nu_sharp o eta_sharp + theta (x) R = id``
reads ``N.T @ E + outer(R, theta) = I`` in components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chartcalc import (ChartDomain, FormField, MultivectorField, SampleGrid,
                        exterior_derivative, field_matrices, form_matrix, interior_product,
                        schouten_bracket, sym_inverse, top_power, wedge)
from .errors import ArityError, DegenerateError
from .expr import ZERO, cos, evaluate_many, neg, sin, var
from .report import EquivalenceReport, VerificationReport

VOLUME_MARGIN = 1e-6
REEB_TOL = 1e-10
TOL_FORMS = 1e-8
TOL_BRACKETS = 1e-7

__all__ = ["CosymplecticPair", "ReebData", "check_volume", "reeb_data", "reeb_residuals",
           "closedness_equivalence", "random_pair", "torus_coords"]


@dataclass(frozen=True)
class CosymplecticPair:
    domain: ChartDomain
    theta: FormField
    eta: FormField

    def __post_init__(self):
        if self.domain.dim % 2 == 0:
            raise ArityError("a cosymplectic pair lives on an odd-dimensional chart")
        if self.theta.degree != 1 or self.eta.degree != 2:
            raise ArityError("theta must be a 1-form and eta a 2-form")
        if self.theta.domain != self.domain or self.eta.domain != self.domain:
            raise ArityError("theta and eta must live on the pair's chart")

    @property
    def n(self) -> int:
        return (self.domain.dim + 1) // 2

    def volume_form(self) -> FormField:
        if self.n == 1:
            return self.theta
        return wedge(self.theta, top_power(self.eta, self.n - 1))

    def volume_coefficient(self):
        return self.volume_form().component(tuple(range(self.domain.dim)))

    def scaled(self, lam) -> "CosymplecticPair":
        return CosymplecticPair(self.domain, self.theta * lam, self.eta)

    def grid(self, resolution=None) -> SampleGrid:
        if resolution is None:
            resolution = {1: 17, 3: 9, 5: 5}.get(self.domain.dim, 4)
        return SampleGrid(self.domain, resolution)

    def to_dict(self):
        return {"domain": self.domain.to_dict(), "theta": self.theta.to_dict(),
                "eta": self.eta.to_dict()}


@dataclass(frozen=True)
class ReebData:
    R: MultivectorField
    nu: MultivectorField


def check_volume(pair: CosymplecticPair, grid: SampleGrid = None,
                 margin: float = VOLUME_MARGIN) -> VerificationReport:
    grid = grid or pair.grid()
    pts = grid.points()
    coeff = pair.volume_coefficient()
    vals = np.broadcast_to(evaluate_many([coeff], pair.domain.env(pts))[0], (len(pts),))
    rep = VerificationReport("check_volume", grid=grid.metadata())
    rep.add("volume_min", float(np.min(np.abs(vals))), margin, kind="min")
    return rep


def _collar_matrix(pair):
    """Component matrix of ``dt ^ theta + eta`` with ``t`` in slot 0."""
    n = pair.domain.dim
    E = form_matrix(pair.eta)
    A = [[ZERO] * (n + 1) for _ in range(n + 1)]
    for j in range(n):
        th = pair.theta.component((j,))
        A[0][j + 1] = th
        A[j + 1][0] = neg(th)
        for i in range(n):
            A[i + 1][j + 1] = E[i][j]
    return A


def reeb_data(pair: CosymplecticPair, grid: SampleGrid = None) -> ReebData:
    """Closed-form Reeb field and dual bivector.

    When ``grid`` is given, the volume condition is checked there first and a
    :class:`DegenerateError` is raised if it fails.
    """
    if grid is not None:
        vol = check_volume(pair, grid)
        if not vol.passed:
            raise DegenerateError(f"theta ^ eta^(n-1) too small on the grid "
                                  f"({vol.residual('volume_min').value:.3g})")
    try:
        inv = sym_inverse(_collar_matrix(pair))
    except DegenerateError:
        raise DegenerateError("pair is identically degenerate") from None
    n = pair.domain.dim
    R = MultivectorField(pair.domain, 1, {(i,): neg(inv[0][i + 1]) for i in range(n)})
    nu = MultivectorField(pair.domain, 2, {(i, j): neg(inv[i + 1][j + 1])
                                           for i in range(n) for j in range(i + 1, n)})
    return ReebData(R, nu)


def reeb_residuals(pair: CosymplecticPair, data: ReebData, grid: SampleGrid = None,
                   tol: float = REEB_TOL) -> VerificationReport:
    """Defining equations of ``(R, nu)`` evaluated on the grid."""
    grid = grid or pair.grid()
    pts = grid.points()
    N = len(pts)
    dom = pair.domain
    d = dom.dim
    rep = VerificationReport("reeb_residuals", grid=grid.metadata())
    env = dom.env(pts)
    iRth = interior_product(data.R, pair.theta)
    val = evaluate_many([iRth.component(())], env)[0]
    rep.add("iR_theta_minus_1", float(np.max(np.abs(np.broadcast_to(val, (N,)) - 1.0))), tol)
    rep.add("iR_eta", _max(interior_product(data.R, pair.eta), pts), tol)
    rep.add("itheta_nu", _max(interior_product(pair.theta, data.nu), pts), tol)
    E = field_matrices(pair.eta, pts)
    Nm = field_matrices(data.nu, pts)
    Rv = np.zeros((N, d))
    for (i,), v in data.R.evaluate(pts).items():
        Rv[:, i] = v
    th = np.zeros((N, d))
    for (i,), v in pair.theta.evaluate(pts).items():
        th[:, i] = v
    ident = np.transpose(Nm, (0, 2, 1)) @ E + Rv[:, :, None] * th[:, None, :]
    rep.add("identity", float(np.max(np.abs(ident - np.eye(d)))), tol)
    return rep


def _max(field, pts):
    return 0.0 if field.is_zero() else field.max_abs(pts)


def closedness_equivalence(pair: CosymplecticPair, grid: SampleGrid = None,
                           tol_forms: float = TOL_FORMS,
                           tol_brackets: float = TOL_BRACKETS) -> EquivalenceReport:
    """Evaluate ``d theta``, ``d eta``, ``[R, nu]`` and ``[nu, nu]`` on the grid."""
    grid = grid or pair.grid()
    pts = grid.points()
    data = reeb_data(pair)
    return EquivalenceReport(
        d_theta=_max(exterior_derivative(pair.theta), pts),
        d_eta=_max(exterior_derivative(pair.eta), pts),
        bracket_r_nu=_max(schouten_bracket(data.R, data.nu), pts),
        bracket_nu_nu=_max(schouten_bracket(data.nu, data.nu), pts),
        tol_forms=tol_forms, tol_brackets=tol_brackets)


# -- randomized families ----------------------------------------------------

def torus_coords(n: int) -> tuple:
    """Coordinates of ``T^(2n-1)``: ``x y z`` for n = 2, ``x1 y1 .. z`` otherwise."""
    if n == 2:
        return ("x", "y", "z")
    return tuple(c for k in range(1, n) for c in (f"x{k}", f"y{k}")) + ("z",)


def _trig(rng, names):
    """Random trigonometric polynomial in two of ``names``."""
    a, b = rng.choice(len(names), size=2, replace=False)
    u, v = var(names[a]), var(names[b])
    c = rng.uniform(0.5, 1.0)
    ph = rng.uniform(0, 2 * math.pi)
    k = int(rng.integers(1, 3))
    f = sin(k * u + ph) if rng.random() < 0.5 else cos(k * u + ph)
    return c * f * cos(v)


def random_pair(rng, n: int = 2, closed: bool = True, eps=None) -> CosymplecticPair:
    """Perturbed standard pair on ``T^(2n-1)``.

    Closed pairs use exact perturbations ``theta = dz + e dg`` and
    ``eta = sum dx_k ^ dy_k + e d(beta)``. Broken pairs add a non-closed term to
    ``theta`` or ``eta``.
    """
    rng = np.random.default_rng(rng)
    names = torus_coords(n)
    dom = ChartDomain.torus(names)
    e = rng.uniform(0.05, 0.2) if eps is None else eps
    g = _trig(rng, names)
    dg = FormField(dom, 1, {(i,): g.diff(c) for i, c in enumerate(names)})
    theta = dom.d("z") + dg * e
    beta = FormField(dom, 1, {(int(rng.integers(len(names))),): _trig(rng, names)})
    eta = exterior_derivative(beta) * e
    for k in range(n - 1):
        eta = eta + (dom.d(names[2 * k]) ^ dom.d(names[2 * k + 1]))
    if not closed:
        z = var("z")
        x0 = var(names[0])
        if rng.random() < 0.5:
            amp = rng.uniform(0.05, 0.2)
            theta = theta + dom.d(names[1]) * (amp * sin(x0 + z))
        else:
            amp = rng.uniform(0.05, 0.2)
            eta = eta + (dom.d(names[1]) ^ dom.d("z")) * (amp * cos(x0))
    return CosymplecticPair(dom, theta, eta)
