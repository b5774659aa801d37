import math

import numpy as np
import pytest
import sympy

from bsymp.dehn import (DehnWord, circle_action, constraint_points, constraint_violation,
                        default_profile, dehn_word_chain, grafted_t2_twist, hamiltonian_flow,
                        model_dehn_twist, scaling_map, tangent_frames, twist_suite,
                        verify_symplectomorphism)
from bsymp.errors import ConstraintError, DomainError, ParseError, ProfileError
from bsymp.expr import to_sympy

PROFILE = default_profile()


def _action_oracle(t, p):
    n = len(p) // 2
    u, v = p[:n], p[n:]
    nv = np.linalg.norm(v)
    c, s = math.cos(2 * math.pi * t), math.sin(2 * math.pi * t)
    return np.concatenate([c * u + s * v / nv, c * v - s * nv * u])


def _r_prime():
    s = sympy.Symbol("s", real=True)
    return sympy.lambdify(s, sympy.diff(to_sympy(PROFILE.r, {"s": s}), s), "math")


# -- circle action ---------------------------------------------------------------------

def test_circle_action_examples():
    p = np.array([[1.0, 0, 0, 0, 2.0, 0]])
    assert np.allclose(circle_action(0.25, p), [[0, 1, 0, -2, 0, 0]], atol=1e-15)
    assert np.allclose(circle_action(0.5, p), -p, atol=1e-15)
    assert np.allclose(circle_action(0.0, p), p)
    with pytest.raises(DomainError):
        circle_action(0.1, np.array([[1.0, 0, 0, 0, 0, 0]]))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_circle_action_properties(n):
    P = constraint_points(n, 100, seed=n)
    P = P[np.linalg.norm(P[:, n:], axis=1) > 1e-3]
    rng = np.random.default_rng(n)
    t, s = rng.uniform(-1, 1, 2)
    Q = circle_action(t, P)
    assert constraint_violation(Q).max() < 1e-12
    assert np.allclose(np.linalg.norm(Q[:, n:], axis=1), np.linalg.norm(P[:, n:], axis=1), atol=1e-12)
    assert np.max(np.abs(circle_action(s, Q) - circle_action(s + t, P))) < 1e-10
    for p, q in zip(P[:10], Q[:10]):
        assert np.allclose(q, _action_oracle(t, p), atol=1e-13)


# -- profile --------------------------------------------------------------------------

def test_default_profile():
    rep = PROFILE.validate()
    assert rep.passed, rep.failures()
    r1 = _r_prime()
    assert r1(0.0) == pytest.approx(0.5)
    assert r1(PROFILE.C) == 0.0 and r1(3.0) == 0.0
    with pytest.raises(ProfileError):
        default_profile(C=-1)
    with pytest.raises(ProfileError):
        default_profile(a=1.5)


# -- model twist ------------------------------------------------------------------------

def test_twist_examples():
    psi = model_dehn_twist()
    far = constraint_points(3, 50, norms=[2.0, 2.5, 5.0], seed=1)
    assert np.array_equal(psi(far), far)
    zero = np.array([[0, 0, 1.0, 0, 0, 0]])
    assert np.allclose(psi(zero), -zero)
    r1 = _r_prime()
    mid = constraint_points(3, 20, norms=np.linspace(0.6, 1.9, 20), seed=2)
    for p in mid:
        assert np.allclose(psi(p[None])[0], _action_oracle(r1(np.linalg.norm(p[3:])), p), atol=1e-12)
    # continuity across |v| = C
    edge = constraint_points(3, 20, norms=[PROFILE.C - 1e-6], seed=3)
    assert np.max(np.abs(psi(edge) - edge)) < 1e-6


def test_twist_zero_section_limit_and_inverse():
    psi = model_dehn_twist()
    P = constraint_points(3, 40, norms=[1e-4], seed=4)
    assert np.max(np.abs(psi(P) + P)) < 1e-6
    Q = constraint_points(3, 200, seed=5)
    inv = psi.inverse()
    assert np.max(np.abs(inv(psi(Q)) - Q)) < 1e-8
    assert np.max(np.abs(psi(inv(Q)) - Q)) < 1e-8


def test_verify_symplectomorphism_examples():
    P = constraint_points(3, 200, seed=6)
    ident = lambda X: np.asarray(X)
    ident.jacobian = lambda X: np.broadcast_to(np.eye(6), (len(X), 6, 6))
    assert verify_symplectomorphism(ident, P).residual("symplectic_residual").value == 0.0
    psi = model_dehn_twist()
    assert verify_symplectomorphism(psi, P, "analytic").residual("symplectic_residual").value < 1e-6
    assert verify_symplectomorphism(psi, P, "fd").residual("symplectic_residual").value < 1e-4
    rep = verify_symplectomorphism(scaling_map(2.0), P)
    # (u, 2v)^* w - w = w, so the residual is max |w(E_i, E_j)| over the frame
    E = tangent_frames(P)
    W = np.einsum("nik,nil->nkl", E[:, 3:], E[:, :3])
    expected = np.max(np.abs(W - W.transpose(0, 2, 1)))
    assert not rep.passed
    assert rep.residual("symplectic_residual").value == pytest.approx(expected, abs=1e-12)
    assert 0.9 < expected <= 1.0 + 1e-12
    with pytest.raises(ConstraintError):
        verify_symplectomorphism(psi, P + 0.1)


def test_fd_residual_scales_quadratically():
    P = constraint_points(3, 100, norms=np.linspace(0.6, 1.9, 100), seed=7)
    psi = model_dehn_twist()
    res = [verify_symplectomorphism(psi, P, "fd", step=h).residual("symplectic_residual").value
           for h in (1e-2, 1e-3, 1e-4)]
    assert 50 < res[0] / res[1] < 200 and 50 < res[1] / res[2] < 200


def test_tangent_frames_orthonormal_and_tangent():
    P = constraint_points(4, 30, seed=8)
    E = tangent_frames(P)
    assert E.shape == (30, 8, 6)
    assert np.allclose(np.einsum("nik,nil->nkl", E, E), np.eye(6), atol=1e-12)
    U, V = P[:, :4], P[:, 4:]
    assert np.max(np.abs(np.einsum("ni,nik->nk", U, E[:, :4]))) < 1e-12
    assert np.max(np.abs(np.einsum("ni,nik->nk", V, E[:, :4]) + np.einsum("ni,nik->nk", U, E[:, 4:]))) < 1e-12


def test_closed_form_is_the_flow():
    psi = model_dehn_twist()
    for p in constraint_points(3, 5, norms=[0.3, 0.9, 1.3, 1.7, 2.1], seed=9):
        assert np.max(np.abs(hamiltonian_flow(PROFILE, p) - psi(p[None])[0])) < 1e-6


@pytest.mark.slow
def test_twist_suite():
    rep = twist_suite()
    assert rep.passed, rep.failures()


def test_grafted_twist_preserves_area():
    phi = grafted_t2_twist()
    P = np.random.default_rng(0).uniform([0, -3], [6.28, 3], (200, 2))
    assert np.allclose(np.linalg.det(phi.jacobian(P)), 1.0)
    with pytest.raises(ProfileError):
        grafted_t2_twist(default_profile(C=4.0))


# -- words and chains --------------------------------------------------------------------

def test_word_parsing():
    w = DehnWord.parse("l1 l2^-1 l1")
    assert w.letters == (("l1", 1), ("l2", -1), ("l1", 1))
    assert w.text() == "l1 l2^-1 l1"
    assert DehnWord.parse("l l^-1").reduced() == ()
    for bad in ["", "l1^2", "1l"]:
        with pytest.raises(ParseError):
            DehnWord.parse(bad)
    with pytest.raises(ParseError):
        DehnWord.parse("l3", spheres={"l1", "l2"})


def test_chain_examples():
    c1 = dehn_word_chain("l")
    assert len(c1) == 2 and c1.terminal["mapping_torus"] == "Z(id)"
    c2 = dehn_word_chain("l l^-1")
    assert len(c2) == 3 and c2.to_dict()["reduced_word"] == "id"
    c3 = dehn_word_chain("l1 l2^-1 l1")
    assert len(c3) == 4
    assert [l["next"]["surgery"] for l in c3.links[:-1]] == ["positive", "negative", "positive"]
    assert [l["monodromy"] for l in c3.links] == ["l1 l2^-1 l1", "l2^-1 l1", "l1", "id"]
    assert c3.filling["verified"] and c3.filling["form"] == "sigma + dy1^dy2"
