import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsymp.chartcalc import (ChartDomain, ChartMap, FormField, MultivectorField, SampleGrid,
                             eval_form, exterior_derivative, fd_jacobian, field_matrices,
                             interior_product, lie_bracket, pullback, pullback_at,
                             schouten_bracket, sharp_inverse, sym_det, top_coefficient, top_power,
                             wedge)
from bsymp.errors import ArityError, DegenerateError, DomainError
from bsymp.expr import const, cos, sin, var

from _oracles import (box, dense, eval_sympy_comps, random_field, random_points, sympy_d,
                      tensor_contract, tensor_wedge)

R2 = box("xy")
R3 = box("xyz")
R4 = box("xyzw")


def close(a, b, pts, tol=1e-12):
    va, vb = a.evaluate(pts), b.evaluate(pts)
    z = np.zeros(len(pts))
    return all(np.max(np.abs(np.broadcast_to(va.get(k, z) - vb.get(k, z), z.shape))) < tol
               for k in set(va) | set(vb))


# -- domains and grids -----------------------------------------------------------

def test_box_and_torus_constructors():
    d = ChartDomain.box(x=(-1, 1), theta=("periodic", 0, 2 * math.pi))
    assert d.coords == ("x", "theta") and d.periodic == (False, True)
    t = ChartDomain.torus(("a", "b"))
    assert t.dim == 2 and all(t.periodic) and t.period("a") == pytest.approx(2 * math.pi)


def test_grid_counts_band_and_periodic_axis():
    d = ChartDomain(("t", "phi"), ((-1, 1), (0, 2 * math.pi)), (False, True))
    g = SampleGrid(d, 4)
    assert g.points().shape == (16, 2)
    assert np.allclose(g.axis(1), np.arange(4) * math.pi / 2)
    assert np.allclose(g.axis(0), [-0.6, -0.2, 0.2, 0.6])
    banded = SampleGrid.banded(d, 17, {"t": 0.0}, 0.05)
    assert np.all(np.abs(banded.points()[:, 0]) >= 0.05)
    assert banded.metadata()["points"] == len(banded.points())


def test_contains_ignores_periodic_axes():
    d = ChartDomain(("t", "phi"), ((-1, 1), (0, 1)), (False, True))
    assert d.contains(np.array([[0.5, 7.0], [2.0, 0.5]])).tolist() == [True, False]


# -- algebra examples ----------------------------------------------------------

def test_evaluation_convention():
    assert eval_form(wedge(R2.d("x"), R2.d("y")), [0, 0], [[1, 0], [0, 1]]) == 1.0
    assert eval_form(wedge(R2.d("x"), R2.d("y")), [0, 0], [[0, 1], [1, 0]]) == -1.0


def test_d_examples():
    x = var("x")
    assert close(exterior_derivative(R2.d("y") * x), wedge(R2.d("x"), R2.d("y")), random_points(np.random.default_rng(0), R2))
    assert exterior_derivative(wedge(R2.d("x"), R2.d("y"))).is_zero()
    dd = exterior_derivative(R2.d("y") * sin(x))
    assert dd.evaluate(np.array([[0.0, 0.3]]))[(0, 1)][0] == pytest.approx(1.0)


def test_wedge_examples():
    assert wedge(R2.d("x"), R2.d("x")).is_zero()
    w = wedge(R2.d("x") + R2.d("y"), R2.d("x"))
    assert w.evaluate(np.zeros((1, 2)))[(0, 1)] == pytest.approx(-1.0)
    assert wedge(wedge(R2.d("x"), R2.d("y")), R2.d("x")).is_zero()


def test_top_power_examples():
    P = MultivectorField(R4, 2, {(0, 1): 1.0, (2, 3): 1.0})
    T = top_power(P, 2)
    assert T.evaluate(np.zeros((1, 4)))[(0, 1, 2, 3)] == pytest.approx(2.0)
    radko = ChartDomain(("h", "theta"), ((-1, 1), (0, 2 * math.pi)), (False, True))
    pi = MultivectorField(radko, 2, {(0, 1): var("h")})
    c = top_coefficient(top_power(pi, 1))
    assert str(c) == "h"
    with pytest.raises(ArityError):
        top_power(P, 3)


def test_interior_examples():
    dxdy = wedge(R3.d("x"), R3.d("y"))
    assert close(interior_product(R3.partial("x"), dxdy), R3.d("y"), np.zeros((1, 3)))
    assert interior_product(R3.partial("z"), dxdy).is_zero()
    vol = wedge(dxdy, R3.d("z"))
    bi = wedge(R3.partial("x"), R3.partial("y"))
    assert close(interior_product(bi, vol), R3.d("z"), np.zeros((1, 3)))
    with pytest.raises(ArityError):
        interior_product(bi, R3.d("x"))


def test_schouten_examples():
    x = var("x")
    lie = schouten_bracket(R2.partial("x"), R2.partial("y") * x)
    assert close(lie, R2.partial("y"), np.zeros((1, 2)))
    f = sin(var("x")) * var("y") + 2.0
    P = MultivectorField(R2, 2, {(0, 1): f})
    assert schouten_bracket(P, P).is_zero() or schouten_bracket(P, P).max_abs(random_points(np.random.default_rng(1), R2)) < 1e-12
    d = ChartDomain(("t", "theta", "x", "y"), ((-1, 1), (0, 6.3), (-1, 1), (-1, 1)))
    nf = MultivectorField(d, 2, {(0, 1): var("t"), (2, 3): 1.0})
    assert schouten_bracket(nf, nf).is_zero()


def test_schouten_detects_non_poisson():
    # {x, y} = 1, {x, z} = x has Jacobiator {y, {z, x}} = 1, so |[P, P]| = 2
    P = MultivectorField(R3, 2, {(0, 1): 1.0, (0, 2): var("x")})
    br = schouten_bracket(P, P)
    assert abs(br.evaluate(np.zeros((1, 3)))[(0, 1, 2)]) == pytest.approx(2.0)


def test_sharp_inverse_examples():
    assert np.allclose(sharp_inverse(wedge(R2.d("x"), R2.d("y")), [0, 0]), [[0, 1], [-1, 0]])
    assert np.allclose(sharp_inverse(wedge(R2.d("x"), R2.d("y")) * 2.0, [0, 0]), [[0, 0.5], [-0.5, 0]])
    radko = ChartDomain(("h", "theta"), ((-3, 3), (0, 2 * math.pi)), (False, True))
    w = wedge(radko.d("h"), radko.d("theta")) * (1 / var("h"))
    assert sharp_inverse(w, [2.0, 1.0])[0, 1] == pytest.approx(2.0)
    with pytest.raises(DegenerateError):
        sharp_inverse(wedge(R4.d("x"), R4.d("y")), [0, 0, 0, 0])


def test_pullback_examples():
    line = box("s", 2.0)
    plane = ChartDomain(("x", "y"), ((-3, 3), (-5, 5)), (False, False))
    F = ChartMap(line, plane, {"x": var("s"), "y": var("s") ** 2})
    pb = pullback(F, plane.d("y"))
    pts = np.array([[0.3], [-1.2]])
    assert np.allclose(pb.evaluate(pts)[(0,)], 2 * pts[:, 0])
    ident = ChartMap.identity(plane)
    w = wedge(plane.d("x"), plane.d("y")) * var("x")
    assert close(pullback(ident, w), w, np.array([[0.2, 0.1]]))
    far = ChartMap(line, plane, {"x": var("s") * 10, "y": var("s")})
    with pytest.raises(DomainError):
        pullback(far, plane.d("x"))


def test_pullback_of_collar_under_reeb_flow():
    # theta = dz + e dg with g = sin x cos z; eta = dx^dy. The Reeb flow
    # preserves both forms, so the flow map pulls the collar form back to itself.
    from scipy.integrate import solve_ivp

    from bsymp.cosymplectic import CosymplecticPair, reeb_data
    from bsymp.construct import symplectic_collar

    Z = ChartDomain.torus(("x", "y", "z"))
    g = sin(var("x")) * cos(var("z"))
    e = 0.2
    theta = Z.d("z") + FormField(Z, 1, {(0,): g.diff("x") * e, (2,): g.diff("z") * e})
    pair = CosymplecticPair(Z, theta, wedge(Z.d("x"), Z.d("y")))
    R = reeb_data(pair).R
    omega = symplectic_collar(pair, 1.0)
    cdom = omega.domain

    def flow(P, time=0.7):
        out = []
        for p in np.atleast_2d(P):
            sol = solve_ivp(lambda _s, y: np.array([R.evaluate(y[None])[(i,)][0] if (i,) in R.components else 0.0
                                                    for i in range(3)]),
                            (0, time), p[1:], rtol=1e-12, atol=1e-12, method="DOP853")
            out.append(np.concatenate([[p[0]], sol.y[:, -1]]))
        return np.array(out)

    F = ChartMap(cdom, cdom, func=flow, fd_step=1e-5)
    pts = np.array([[0.3, 0.4, 1.0, 2.0], [-0.5, 2.0, 0.1, 4.0], [0.1, 5.0, 3.0, 1.0]])
    assert np.max(np.abs(pullback_at(F, omega, pts) - omega.dense(pts))) < 1e-7


def test_fd_jacobian_matches_symbolic():
    d = box("uv")
    F = ChartMap(d, box("ab", 5), {"a": var("u") * var("v"), "b": sin(var("u"))})
    P = random_points(np.random.default_rng(3), d, 5)
    assert np.max(np.abs(fd_jacobian(F, P) - F.jacobian(P))) < 1e-9


def test_sym_det_matches_numpy():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((4, 4))
    assert float(sym_det([[const(v) for v in row] for row in M]).value) == pytest.approx(np.linalg.det(M))


# -- property suites against the dense oracles -------------------------------------

SEEDS = range(100)


@pytest.mark.parametrize("seed", SEEDS)
def test_d_matches_sympy_and_squares_to_zero(seed):
    rng = np.random.default_rng(seed)
    dom = [R2, R3, R4][seed % 3]
    p = int(rng.integers(0, dom.dim - 1))
    w = random_field(rng, dom, p)
    dw = exterior_derivative(w)
    comps, syms = sympy_d(w)
    pts = random_points(rng, dom, 20)
    ref = eval_sympy_comps(comps, syms, dom, pts)
    got = dw.evaluate(pts)
    z = np.zeros(len(pts))
    for k in set(ref) | set(got):
        assert np.max(np.abs(np.broadcast_to(got.get(k, z), z.shape) - ref.get(k, z))) < 1e-10
    ddw = exterior_derivative(dw)
    assert ddw.is_zero() or ddw.max_abs(pts) < 1e-9


@pytest.mark.parametrize("seed", SEEDS)
def test_graded_leibniz(seed):
    rng = np.random.default_rng(1000 + seed)
    dom = [R3, R4][seed % 2]
    p = int(rng.integers(0, 2))
    q = int(rng.integers(0, dom.dim - p - 1)) if dom.dim - p - 1 > 0 else 0
    a, b = random_field(rng, dom, p), random_field(rng, dom, q)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) + wedge(a, exterior_derivative(b)) * float((-1) ** p)
    pts = random_points(rng, dom, 20)
    diff = lhs - rhs
    assert diff.is_zero() or diff.max_abs(pts) < 1e-8


@pytest.mark.parametrize("seed", range(30))
def test_wedge_and_contraction_against_dense_tensors(seed):
    rng = np.random.default_rng(2000 + seed)
    dom = R4
    p, q = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    a, b = random_field(rng, dom, p), random_field(rng, dom, q)
    pt = random_points(rng, dom, 1)
    assert np.allclose(dense(wedge(a, b), pt[0]), tensor_wedge(dense(a, pt[0]), dense(b, pt[0])), atol=1e-12)
    k = int(rng.integers(1, 3))
    V = random_field(rng, dom, k, MultivectorField)
    W = random_field(rng, dom, k + int(rng.integers(0, 2)))
    assert np.allclose(np.asarray(dense(interior_product(V, W), pt[0])),
                       tensor_contract(dense(V, pt[0]), dense(W, pt[0])), atol=1e-12)


def _graded_sign(p, q):
    return (-1) ** ((p - 1) * (q - 1))


@pytest.mark.parametrize("seed", SEEDS)
def test_schouten_graded_symmetry_and_jacobi(seed):
    rng = np.random.default_rng(3000 + seed)
    dom = [R3, R4][seed % 2]
    degs = [int(rng.integers(1, 3)) for _ in range(3)]
    P, Q, S = (random_field(rng, dom, d, MultivectorField, density=0.5) for d in degs)
    p, q, r = degs
    pts = random_points(rng, dom, 15)

    def small(F):
        return F.is_zero() or F.max_abs(pts) < 1e-8

    assert small(schouten_bracket(P, Q) + schouten_bracket(Q, P) * float(_graded_sign(p, q)))
    if p + q + r - 2 > dom.dim:
        return
    jac = (schouten_bracket(P, schouten_bracket(Q, S)) * float((-1) ** ((p - 1) * (r - 1)))
           + schouten_bracket(Q, schouten_bracket(S, P)) * float((-1) ** ((q - 1) * (p - 1)))
           + schouten_bracket(S, schouten_bracket(P, Q)) * float((-1) ** ((r - 1) * (q - 1))))
    assert small(jac)


@pytest.mark.parametrize("seed", range(20))
def test_lie_bracket_is_commutator_of_derivations(seed):
    rng = np.random.default_rng(4000 + seed)
    X, Y = random_field(rng, R3, 1, MultivectorField), random_field(rng, R3, 1, MultivectorField)
    f = random_field(rng, R3, 0)
    df = exterior_derivative(f)

    def act(V, g):
        return interior_product(V, exterior_derivative(g))

    lhs = act(lie_bracket(X, Y), f)
    rhs = act(X, act(Y, f)) - act(Y, act(X, f))
    pts = random_points(rng, R3, 10)
    diff = lhs - rhs
    assert diff.is_zero() or diff.max_abs(pts) < 1e-9
    assert df.degree == 1


@pytest.mark.parametrize("seed", SEEDS)
def test_pullback_functoriality(seed):
    rng = np.random.default_rng(5000 + seed)
    A, B = box("uv", 1.0), box("ab", 3.0)
    C = box("xyz", 30.0)
    u, v, a, b = var("u"), var("v"), var("a"), var("b")
    c = rng.uniform(-1, 1, 4)
    F = ChartMap(A, B, {"a": u + c[0] * v * v, "b": sin(v) + c[1] * u})
    G = ChartMap(B, C, {"x": a * b, "y": cos(a) + c[2] * b, "z": a + c[3] * b * b})
    w = random_field(rng, C, int(rng.integers(1, 3)))
    pts = random_points(rng, A, 10)
    direct = pullback_at(G.compose(F), w, pts)
    stepwise = pullback(F, pullback(G, w)).dense(pts)
    assert np.max(np.abs(direct - stepwise)) < 1e-7
    numeric = pullback_at(ChartMap(A, C, func=lambda P: G(F(P))), w, pts)
    assert np.max(np.abs(numeric - stepwise)) < 1e-6


@pytest.mark.parametrize("seed", range(30))
def test_sharp_inverse_identity(seed):
    rng = np.random.default_rng(6000 + seed)
    w = random_field(rng, R4, 2, density=1.0)
    for x in random_points(rng, R4, 5):
        M = field_matrices(w, x[None])[0]
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] < 1e-3 * s[0]:
            continue
        Pi = sharp_inverse(w, x)
        assert np.max(np.abs(Pi.T @ M - np.eye(4))) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=4))
def test_wedge_anticommutes_on_one_forms(coef):
    a = R4.d("x") * coef[0] + R4.d("y") * coef[1]
    b = R4.d("z") * coef[2] + R4.d("x") * coef[3]
    s = wedge(a, b) + wedge(b, a)
    assert s.is_zero() or s.max_abs(np.zeros((1, 4))) < 1e-12


def test_fields_reject_mismatched_domains():
    with pytest.raises(DomainError):
        wedge(R2.d("x"), R3.d("x"))
