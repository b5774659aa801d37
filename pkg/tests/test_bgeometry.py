import math

import numpy as np
import pytest

from bsymp.bgeometry import (BBivector, BForm, CollarChart, b_differential, b_flat,
                             bform_from_bivector, bivector_from_bform, is_b_serious,
                             is_b_symplectic, singular_locus)
from bsymp.chartcalc import (ChartDomain, FormField, MultivectorField, SampleGrid,
                             exterior_derivative, wedge)
from bsymp.errors import DegenerateError, DomainError, TransversalityFail
from bsymp.expr import dumps, var

from _oracles import random_field, random_points

Z3 = ChartDomain.torus(("x", "y", "z"))
COL = CollarChart(Z3, 1.0, "t")
D = COL.domain
RADKO = CollarChart.around(ChartDomain(("h", "theta"), ((-1, 1), (0, 2 * math.pi)), (False, True)), "h")


def normal_form():
    return BForm(COL, D.d("z"), wedge(D.d("x"), D.d("y")))


def grid(res=7):
    return COL.grid(res)


def test_collar_layout():
    assert D.coords == ("t", "x", "y", "z") and D.bounds[0] == (-1.0, 1.0)
    with pytest.raises(ValueError):
        CollarChart.around(ChartDomain(("x", "t"), ((-1, 1), (-1, 1))), "t")
    with pytest.raises(ValueError):
        CollarChart(Z3, 0.0)


def test_bform_refuses_ordinary_value_on_Z():
    w = normal_form()
    with pytest.raises(DomainError):
        w.evaluate(np.zeros((1, 4)))
    val = w.evaluate(np.array([[0.5, 0, 0, 0]]))
    assert val[(0, 3)][0] == pytest.approx(2.0)


def test_b_flat_examples():
    assert b_flat(normal_form()).components.keys() == {(2,)}
    assert b_flat(BForm.ordinary(COL, wedge(D.d("x"), D.d("y")))).is_zero()
    w = BForm(COL, D.d("z") + D.d("x") * var("t"), wedge(D.d("x"), D.d("y")))
    flat = b_flat(w)
    assert flat.domain == Z3 and set(flat.components) == {(2,)}


def test_b_differential_examples():
    assert b_differential(normal_form()).alpha.is_zero()
    beta = D.d("x") * var("y")
    got = b_differential(BForm.ordinary(COL, beta)).beta.components
    want = exterior_derivative(beta).components
    assert {k: dumps(v) for k, v in got.items()} == {k: dumps(v) for k, v in want.items()}
    w = BForm(COL, D.d("z") * var("x"), FormField(D, 2))
    bd = b_differential(w)
    # -dlog|t| ^ (dx ^ dz)
    assert set(bd.alpha.components) == {(1, 3)}
    pts = np.array([[0.4, 0.1, 0.2, 0.3], [-0.7, 1.0, 2.0, 3.0]])
    ordinary = exterior_derivative(w.as_form())
    assert np.allclose(bd.as_form().dense(pts), ordinary.dense(pts))


@pytest.mark.parametrize("seed", range(15))
def test_bd_squares_to_zero(seed):
    rng = np.random.default_rng(seed)
    w = BForm(COL, random_field(rng, D, 1), random_field(rng, D, 2))
    dd = b_differential(b_differential(w))
    pts = random_points(rng, D, 10)
    for part in (dd.alpha, dd.beta):
        assert part.is_zero() or part.max_abs(pts) < 1e-9


def test_flat_zero_gives_smooth_extension():
    # alpha vanishing on Z: dlog|t| ^ (t dz) = dt ^ dz extends across t = 0
    w = BForm(COL, D.d("z") * var("t"), wedge(D.d("x"), D.d("y")))
    assert b_flat(w).is_zero() or b_flat(w).max_abs(np.zeros((1, 3))) == 0
    for h in (1e-3, 1e-6):
        a = w.evaluate(np.array([[h, 0.1, 0.2, 0.3]]))[(0, 3)]
        b = w.evaluate(np.array([[-h, 0.1, 0.2, 0.3]]))[(0, 3)]
        assert abs(a - b).max() < 1e-12


def test_is_b_symplectic_examples():
    rep = is_b_symplectic(normal_form(), grid())
    assert rep.passed and rep.residual("nondegeneracy").value == pytest.approx(2.0)
    smooth = BForm.ordinary(COL, wedge(D.d("x"), D.d("y")) + wedge(D.d("z"), D.d("t")))
    rep = is_b_symplectic(smooth, grid())
    assert rep.passed and rep.provenance["singular_locus"] == []
    bad = BForm(COL, D.d("z"), wedge(D.d("x"), D.d("y")) * var("t"))
    rep = is_b_symplectic(bad, grid())
    assert not rep.passed and "nondegeneracy" in rep.failures()
    open_form = BForm(COL, D.d("z") * var("x"), wedge(D.d("x"), D.d("y")))
    assert "closedness" in is_b_symplectic(open_form, grid()).failures()


def test_bivector_examples():
    pi = bivector_from_bform(normal_form(), grid())
    P = pi.as_multivector()
    assert {k: str(v) for k, v in P.components.items()} == {(0, 3): "t", (1, 2): "1"}
    smooth = BForm.ordinary(COL, wedge(D.d("x"), D.d("y")) + wedge(D.d("t"), D.d("z")))
    assert bivector_from_bform(smooth).r_part.is_zero()
    rd = RADKO.domain
    w = BForm(RADKO, rd.d("theta"), FormField(rd, 2))
    assert str(bivector_from_bform(w).as_multivector().component((0, 1))) == "h"
    with pytest.raises(DegenerateError):
        bivector_from_bform(BForm(COL, D.d("z"), FormField(D, 2)), grid())


@pytest.mark.parametrize("seed", range(10))
def test_bform_bivector_roundtrip(seed):
    rng = np.random.default_rng(100 + seed)
    c = rng.uniform(-0.3, 0.3, 3)
    alpha = D.d("z") + D.d("x") * c[0]
    beta = wedge(D.d("x"), D.d("y")) + wedge(D.d("y"), D.d("z")) * c[1] + wedge(D.d("t"), D.d("x")) * c[2]
    w = BForm(COL, alpha, beta)
    back = bform_from_bivector(bivector_from_bform(w, grid()), grid())
    pts = grid().points()
    assert np.max(np.abs(back.as_form().dense(pts) - w.as_form().dense(pts))) < 1e-8


def test_singular_locus_examples():
    rd = RADKO.domain
    loc = singular_locus(MultivectorField(rd, 2, {(0, 1): var("h")}), SampleGrid(rd, 17), "h")
    assert loc.root_values() == [0.0] and loc.margin == pytest.approx(1.0, abs=1e-8)
    R4 = ChartDomain(("x", "y", "z", "w"), ((-1, 1),) * 4)
    assert singular_locus(MultivectorField(R4, 2, {(0, 1): 1.0, (2, 3): 1.0}), SampleGrid(R4, 5)).empty
    sq = MultivectorField(D, 2, {(0, 3): var("t") ** 2, (1, 2): 1.0})
    with pytest.raises(TransversalityFail) as err:
        singular_locus(sq, SampleGrid(D, 5), "t")
    assert err.value.report is not None


def test_singular_locus_off_centre_and_multiple_roots():
    rd = ChartDomain(("s", "phi"), ((-1, 1), (0, 2 * math.pi)), (False, True))
    s = var("s")
    loc = singular_locus(MultivectorField(rd, 2, {(0, 1): (s - 0.3) * (s + 0.5)}), SampleGrid(rd, 9), "s")
    assert loc.root_values() == [-0.5, 0.3]


def test_is_b_serious_examples():
    g = SampleGrid(D, 5)
    nf = MultivectorField(D, 2, {(0, 3): var("t"), (1, 2): 1.0})
    assert is_b_serious(nf, g, "t").passed
    sym = MultivectorField(D, 2, {(0, 3): 1.0, (1, 2): 1.0})
    rep = is_b_serious(sym, g, "t")
    assert rep.passed and rep.notes
    # t d_t^d_z + d_t^d_x has vanishing top power: no transverse locus at all
    degenerate = MultivectorField(D, 2, {(0, 3): var("t"), (0, 1): 1.0})
    with pytest.raises(TransversalityFail):
        is_b_serious(degenerate, g, "t")
    # with d_x^d_y added the locus is transverse but d_t^d_x survives on it
    tangent_fail = MultivectorField(D, 2, {(0, 3): var("t"), (1, 2): 1.0, (0, 1): 1.0})
    rep = is_b_serious(tangent_fail, g, "t")
    assert not rep.passed and "normal_components_on_locus" in rep.failures()


def test_bbivector_frame_roundtrip():
    r = MultivectorField(D, 1, {(3,): 1.0})
    nu = MultivectorField(D, 2, {(1, 2): 1.0})
    pi = BBivector(COL, r, nu)
    assert str(pi.as_multivector().component((0, 3))) == "t"
    w = bform_from_bivector(pi)
    assert set(w.alpha.components) == {(3,)} and set(w.beta.components) == {(1, 2)}
