import numpy as np
import pytest

from bsymp.chartcalc import ChartDomain, FormField, SampleGrid, exterior_derivative, wedge
from bsymp.cosymplectic import (CosymplecticPair, check_volume, closedness_equivalence,
                                random_pair, reeb_data, reeb_residuals, torus_coords)
from bsymp.errors import ArityError, DegenerateError
from bsymp.expr import var

from _oracles import dense, reeb_at

T3 = ChartDomain.torus(("x", "y", "z"))
dx, dy, dz = (T3.d(c) for c in "xyz")


def pair(theta, eta):
    return CosymplecticPair(T3, theta, eta)


def standard():
    return pair(dz, wedge(dx, dy))


def test_arity_checks():
    with pytest.raises(ArityError):
        CosymplecticPair(ChartDomain.torus(("x", "y")), FormField(ChartDomain.torus(("x", "y")), 1),
                         FormField(ChartDomain.torus(("x", "y")), 2))
    with pytest.raises(ArityError):
        CosymplecticPair(T3, wedge(dx, dy), wedge(dx, dy))


def test_check_volume_examples():
    assert check_volume(standard()).passed
    assert check_volume(standard()).residual("volume_min").value == pytest.approx(1.0)
    assert not check_volume(pair(dz, FormField(T3, 2))).passed
    tilted = pair(dz + dx * 0.1, wedge(dx, dy))
    rep = check_volume(tilted)
    assert rep.passed and rep.residual("volume_min").value == pytest.approx(1.0)
    # brute-force determinant of the collar matrix dt^theta + eta agrees
    th = np.array([0.1, 0.0, 1.0])
    E = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0.0]])
    A = np.zeros((4, 4))
    A[0, 1:], A[1:, 0], A[1:, 1:] = th, -th, E
    assert np.sqrt(np.linalg.det(A)) == pytest.approx(1.0)


def _field_at(field, pt):
    return dense(field, pt)


def test_reeb_examples():
    d = reeb_data(standard())
    pt = np.array([0.3, 0.4, 0.5])
    assert np.allclose(_field_at(d.R, pt), [0, 0, 1])
    assert np.allclose(_field_at(d.nu, pt), [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    d2 = reeb_data(pair(dz * 2.0, wedge(dx, dy)))
    assert np.allclose(_field_at(d2.R, pt), [0, 0, 0.5])
    assert np.allclose(_field_at(d2.nu, pt), [[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    # eta = dx^dy + dz^dx: i_R eta = 0 with R^z = 1 forces R = d_y + d_z
    skew = pair(dz, wedge(dx, dy) + wedge(dz, dx))
    d3 = reeb_data(skew)
    assert np.allclose(_field_at(d3.R, pt), [0, 1, 1])
    assert reeb_residuals(skew, d3).passed
    assert max(r.value for r in reeb_residuals(skew, d3).residuals) < 1e-10


def test_reeb_degenerate_raises():
    with pytest.raises(DegenerateError):
        reeb_data(pair(dz, FormField(T3, 2)))
    weak = pair(dz, wedge(dx, dy) * var("x"))
    with pytest.raises(DegenerateError):
        reeb_data(weak, SampleGrid(T3, 5))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("seed", range(6))
def test_reeb_against_oracle(n, seed):
    p = random_pair(seed, n)
    d = reeb_data(p)
    rng = np.random.default_rng(seed)
    for pt in rng.uniform(0, 2 * np.pi, (4, p.domain.dim)):
        R, N = reeb_at(p.theta, p.eta, pt)
        assert np.allclose(_field_at(d.R, pt), R, atol=1e-10)
        assert np.allclose(_field_at(d.nu, pt), N, atol=1e-10)
    rep = reeb_residuals(p, d, SampleGrid(p.domain, 4))
    assert rep.passed, rep.failures()


def test_torus_coords():
    assert torus_coords(2) == ("x", "y", "z")
    assert torus_coords(3) == ("x1", "y1", "x2", "y2", "z")


def test_random_pairs_are_reproducible_and_volume_positive():
    a, b = random_pair(7, 2), random_pair(7, 2)
    assert a.to_dict() == b.to_dict()
    for s in range(5):
        assert check_volume(random_pair(s, 2)).passed


def test_equivalence_examples():
    rep = closedness_equivalence(standard())
    assert rep.forms_closed and rep.brackets_vanish and rep.consistent
    x = var("x")
    exact = pair(dz, wedge(dx, dy) + exterior_derivative(dy * (x * x)))
    rep = closedness_equivalence(exact)
    assert rep.forms_closed and rep.brackets_vanish
    broken = pair(dz, wedge(dx, dy) + wedge(dy, dz) * x)
    rep = closedness_equivalence(broken)
    assert not rep.forms_closed and not rep.brackets_vanish and rep.consistent
    assert rep.to_report().passed


@pytest.mark.parametrize("closed", [True, False])
@pytest.mark.parametrize("seed", range(4))
def test_equivalence_random(closed, seed):
    p = random_pair(1000 + seed, 2, closed=closed)
    rep = closedness_equivalence(p, SampleGrid(p.domain, 5))
    assert rep.forms_closed is closed
    assert rep.consistent


def test_scaled_pair_scales_reeb():
    p = standard().scaled(4.0)
    assert np.allclose(_field_at(reeb_data(p).R, np.zeros(3)), [0, 0, 0.25])
