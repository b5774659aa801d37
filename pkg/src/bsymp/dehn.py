"""Model Dehn twists on ``T*S^(n-1)`` and Dehn-word certificate chains.

Points are ambient pairs ``(u, v)`` in ``R^n x R^n`` with ``|u| = 1`` and
``<u, v> = 0``; arrays of points have shape ``(N, 2n)`` with ``u`` first. The
symplectic form is ``w = sum dv_k ^ du_k`` restricted to the constraint set,
so ``w(X, Y) = X_v . Y_u - X_u . Y_v``. Hamiltonian fields satisfy
``i_X w = -dH``, giving ``du/ds = dH/dv``; the flow of the norm ``|v|`` is the
unit-speed geodesic flow, of period ``2 pi``.

The twist ``psi`` rotates by angle ``2 pi r'(|v|)`` (the circle action at time
``r'(|v|)``), which is the time-``2 pi`` map of the Hamiltonian ``r(|v|)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .chartcalc import ChartDomain, ChartMap
from .errors import ConstraintError, DomainError, ParseError, ProfileError
from .expr import Expr, evaluate_many, smooth_step, var
from .report import VerificationReport

CONSTRAINT_TOL = 1e-10
TWIST_TOL = 1e-6
FD_TWIST_TOL = 1e-4
FLOW_TOL = 1e-6

__all__ = [
    "TwistProfile", "default_profile", "circle_action", "model_dehn_twist", "ModelDehnTwist",
    "verify_symplectomorphism", "tangent_frames", "constraint_points", "constraint_violation",
    "hamiltonian_flow", "grafted_t2_twist", "DehnWord", "CertificateChain", "dehn_word_chain",
    "scaling_map", "sphere_grid", "hamiltonian_field", "twist_suite",
]


# -- profiles -----------------------------------------------------------------

@dataclass(frozen=True)
class TwistProfile:
    """Odd profile ``r`` in the variable ``s`` with ``r = 0`` for ``|s| >= C``.

    ``inner`` is the radius on which ``r(s) - r(-s) = s`` holds.
    """

    r: Expr
    C: float
    inner: float
    var: str = "s"

    def derivatives(self, s) -> tuple:
        """``(r, r', r'')`` at ``s``."""
        r1 = self.r.diff(self.var)
        r2 = r1.diff(self.var)
        s = np.asarray(s, dtype=float)
        out = evaluate_many([self.r, r1, r2], {self.var: s})
        return tuple(np.broadcast_to(o, s.shape).astype(float) for o in out)

    def negated(self) -> "TwistProfile":
        return TwistProfile(-self.r, self.C, self.inner, self.var)

    def validate(self, samples: int = 4001) -> VerificationReport:
        """Support and oddness checks on a dense sample of ``[-2C, 2C]``."""
        rep = VerificationReport("profile")
        s = np.linspace(-2 * self.C, 2 * self.C, samples)
        r0, r1, r2 = self.derivatives(s)
        out = np.abs(s) >= self.C
        rep.check("support_exact", float(np.max(np.abs(np.concatenate([r0[out], r1[out], r2[out]])))) == 0.0)
        ins = np.abs(s) <= self.inner
        rm = self.derivatives(-s[ins])[0]
        rep.add("odd_part", float(np.max(np.abs(r0[ins] - rm - s[ins]))), 1e-12)
        rep.add("slope_at_zero", abs(float(self.derivatives(0.0)[1]) - 0.5), 1e-12)
        rep.provenance.update({"C": self.C, "inner": self.inner, "r": str(self.r)})
        return rep


def default_profile(C: float = 2.0, a: float = 0.25) -> TwistProfile:
    """``r(s) = (s/2) rho(s/C)`` with ``rho = smooth_step((1 - x^2)/(1 - a^2))``.

    ``rho`` is 1 on ``|x| <= a`` and 0 on ``|x| >= 1``, so ``r(s) - r(-s) = s``
    for ``|s| <= a C``.
    """
    if not C > 0 or not 0 < a < 1:
        raise ProfileError("need C > 0 and 0 < a < 1")
    s = var("s")
    x = s / C
    rho = smooth_step((1 - x * x) / (1 - a * a))
    return TwistProfile(0.5 * s * rho, float(C), float(a * C))


# -- circle action and twist ------------------------------------------------

def _split(points):
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] % 2:
        raise DomainError("points must have an even number of ambient coordinates")
    n = P.shape[1] // 2
    return P[:, :n], P[:, n:]


def circle_action(t, points) -> np.ndarray:
    """``(cos(2 pi t) u + sin(2 pi t) v/|v|, cos(2 pi t) v - sin(2 pi t) |v| u)``."""
    U, V = _split(points)
    if np.any(np.linalg.norm(V, axis=1) == 0.0):
        raise DomainError("circle action is undefined on the zero section")
    PU, PV = _kernels.circle_action(t, U, V)
    return np.hstack([PU, PV])


def constraint_violation(points) -> np.ndarray:
    U, V = _split(points)
    return np.maximum(np.abs(np.sum(U * U, axis=1) - 1.0), np.abs(np.sum(U * V, axis=1)))


class ModelDehnTwist:
    """``psi(u, v) = circle_action(r'(|v|), (u, v))``, antipodal on ``v = 0``."""

    def __init__(self, profile: TwistProfile):
        self.profile = profile

    def _angles(self, V):
        rho = np.linalg.norm(V, axis=1)
        _, r1, r2 = self.profile.derivatives(rho)
        return r1, r2

    def evaluate(self, points):
        U, V = _split(points)
        r1, r2 = self._angles(V)
        return _kernels.twist(U, V, r1, r2)

    def __call__(self, points) -> np.ndarray:
        PU, PV, _ = self.evaluate(points)
        return np.hstack([PU, PV])

    def jacobian(self, points) -> np.ndarray:
        """Analytic ambient Jacobian, shape ``(N, 2n, 2n)``."""
        return self.evaluate(points)[2]

    def inverse(self) -> "ModelDehnTwist":
        return ModelDehnTwist(self.profile.negated())

    def as_chart_map(self, n: int) -> ChartMap:
        names = tuple(f"u{i}" for i in range(1, n + 1)) + tuple(f"v{i}" for i in range(1, n + 1))
        dom = ChartDomain(names, ((-1e6, 1e6),) * (2 * n))
        return ChartMap(dom, dom, func=self.__call__, jacobian=self.jacobian, name="model_dehn_twist")


def model_dehn_twist(profile: TwistProfile = None) -> ModelDehnTwist:
    return ModelDehnTwist(profile or default_profile())


def scaling_map(factor: float = 2.0):
    """``(u, v) -> (u, factor v)``; preserves the constraints, scales ``w``."""
    def f(points):
        U, V = _split(points)
        return np.hstack([U, factor * V])

    def jac(points):
        P = np.atleast_2d(points)
        n = P.shape[1] // 2
        J = np.eye(2 * n)
        J[n:, n:] *= factor
        return np.broadcast_to(J, (len(P), 2 * n, 2 * n)).copy()

    f.jacobian = jac
    return f


# -- constraint geometry ------------------------------------------------------

def tangent_frames(points) -> np.ndarray:
    """Orthonormal frames ``(N, 2n, 2n-2)`` of the constraint tangent spaces.

    Orthogonal complement of the constraint gradients ``(u, 0)`` and ``(v, u)``.
    """
    U, V = _split(points)
    N, n = U.shape
    G = np.zeros((N, 2, 2 * n))
    G[:, 0, :n] = U
    G[:, 1, :n] = V
    G[:, 1, n:] = U
    _, _, Vh = np.linalg.svd(G, full_matrices=True)
    return np.transpose(Vh[:, 2:, :], (0, 2, 1))


def constraint_points(n: int = 3, count: int = 200, norms=None, seed: int = 0) -> np.ndarray:
    """Seeded points of ``T*S^(n-1)``; ``norms`` fixes the values of ``|v|``."""
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((count, n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    W = rng.standard_normal((count, n))
    W -= np.sum(W * U, axis=1, keepdims=True) * U
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    if norms is None:
        rho = rng.uniform(0.0, 1.2, count)
    else:
        norms = np.asarray(norms, dtype=float)
        rho = np.resize(norms, count)
    return np.hstack([U, W * rho[:, None]])


SPHERE_NORMS = (0.02, 0.15, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.97, 1.0, 1.1)


def sphere_grid(n: int = 3, directions: int = 6, norms=None, base: int = 40,
                C: float = 2.0) -> np.ndarray:
    """Structured grid on ``T*S^2`` (Fibonacci base points, fan of directions).

    ``norms`` defaults to fractions of ``C`` covering the inner disk, the
    transition band and the region outside the support.
    """
    norms = tuple(C * f for f in SPHERE_NORMS) if norms is None else tuple(norms)
    if n != 3:
        return constraint_points(n, base * directions * len(norms))
    k = np.arange(base) + 0.5
    phi = np.arccos(1 - 2 * k / base)
    th = math.pi * (1 + 5 ** 0.5) * k
    U = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    e1 = np.cross(U, np.array([0.3, 0.5, 0.81]))
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(U, e1)
    pts = []
    for j in range(directions):
        ang = 2 * math.pi * j / directions
        W = math.cos(ang) * e1 + math.sin(ang) * e2
        for rho in norms:
            pts.append(np.hstack([U, rho * W]))
    return np.vstack(pts)


def _omega(X, Y, n):
    return np.einsum("...i,...i->...", X[..., n:], Y[..., :n]) - np.einsum("...i,...i->...", X[..., :n], Y[..., n:])


def _fd_frame_images(F, points, E, step):
    """Central differences of ``F`` along each frame vector: ``(N, 2n, m)``."""
    cols = []
    for k in range(E.shape[2]):
        h = step * E[:, :, k]
        cols.append((F(points + h) - F(points - h)) / (2 * step))
    return np.stack(cols, axis=2)


def verify_symplectomorphism(F, points, jacobian="analytic", step: float = 1e-5,
                             tol: float = None) -> VerificationReport:
    """``max |(F*w - w)(E_i, E_j)|`` over orthonormal constraint-tangent frames.

    ``F`` maps ``(N, 2n)`` arrays; with ``jacobian="analytic"`` it must expose
    ``F.jacobian``; ``"fd"`` uses central differences along the frame vectors.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    viol = constraint_violation(P)
    if viol.max() > CONSTRAINT_TOL:
        raise ConstraintError(f"input points violate the constraints by {viol.max():.3g}")
    img = F(P)
    iv = constraint_violation(img)
    if iv.max() > CONSTRAINT_TOL:
        raise ConstraintError(f"map leaves the constraint set (violation {iv.max():.3g})")
    E = tangent_frames(P)
    n = P.shape[1] // 2
    if jacobian == "analytic":
        defect = _kernels.symplectic_defect(F.jacobian(P), E)
        tol = TWIST_TOL if tol is None else tol
    elif jacobian == "fd":
        JE = _fd_frame_images(F, P, E, step)
        m = E.shape[2]
        before = _omega(E.transpose(0, 2, 1)[:, :, None, :], E.transpose(0, 2, 1)[:, None, :, :], n)
        after = _omega(JE.transpose(0, 2, 1)[:, :, None, :], JE.transpose(0, 2, 1)[:, None, :, :], n)
        defect = np.abs(after - before).reshape(len(P), m * m).max(axis=1)
        tol = FD_TWIST_TOL if tol is None else tol
    else:
        raise ValueError("jacobian must be 'analytic' or 'fd'")
    rep = VerificationReport("verify_symplectomorphism")
    rep.add("symplectic_residual", float(defect.max()), tol)
    rep.add("image_constraint", float(iv.max()), CONSTRAINT_TOL)
    rep.grid = {"points": int(len(P)), "n": int(n), "jacobian": jacobian,
                **({"step": step} if jacobian == "fd" else {})}
    return rep


# -- Hamiltonian flow oracle ------------------------------------------------

def hamiltonian_field(profile: TwistProfile, p) -> np.ndarray:
    """Field of ``H = r(|v|)`` projected to the constraint tangent space."""
    p = np.asarray(p, dtype=float)
    n = p.size // 2
    v = p[n:]
    rho = np.linalg.norm(v)
    _, r1, _ = profile.derivatives(rho)
    grad = np.zeros(2 * n)
    if rho > 0:
        grad[n:] = float(r1) * v / rho
    E = tangent_frames(p[None])[0]
    W = np.zeros((2 * n, 2 * n))
    W[n:, :n] = np.eye(n)
    W[:n, n:] = -np.eye(n)
    A = E.T @ W @ E
    c = np.linalg.solve(A, E.T @ grad)
    return E @ c


def hamiltonian_flow(profile: TwistProfile, p, time: float = 2 * math.pi,
                     rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    sol = solve_ivp(lambda _s, y: hamiltonian_field(profile, y), (0.0, time),
                    np.asarray(p, dtype=float), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[:, -1]


def twist_suite(profile: TwistProfile = None, n: int = 3, flow_points: int = 20, seed: int = 0,
                tol: float = TWIST_TOL, flow_tol: float = FLOW_TOL) -> VerificationReport:
    """Closed form against the flow, symplectic residual, zero-section limit, support."""
    profile = profile or default_profile()
    C = profile.C
    psi = model_dehn_twist(profile)
    rep = VerificationReport("dehn_twist")
    rep.merge(profile.validate(), prefix="profile")
    grid = sphere_grid(n, C=C)
    rep.merge(verify_symplectomorphism(psi, grid, "analytic", tol=tol), prefix="analytic")
    pts = constraint_points(n, flow_points, norms=np.linspace(0.025, 1.1, flow_points) * C, seed=seed)
    err = max(float(np.max(np.abs(hamiltonian_flow(profile, q) - psi(q[None])[0]))) for q in pts)
    rep.add("flow_match", err, flow_tol)
    near = constraint_points(n, 50, norms=[1e-7], seed=seed + 1)
    U, V = _split(near)
    rep.add("zero_section_limit", float(np.max(np.abs(psi(near) - np.hstack([-U, -V])))), tol)
    far = constraint_points(n, 200, norms=np.linspace(1.0, 3.0, 200) * C, seed=seed + 2)
    rep.check("support_identity_exact", bool(np.array_equal(psi(far), far)))
    rep.provenance.update({"C": C, "n": n, "flow_points": flow_points, "seed": seed,
                           "grid_points": int(len(grid))})
    return rep


# -- grafted twist on a torus annulus -----------------------------------------

def grafted_t2_twist(profile: TwistProfile = None, period: float = 2 * math.pi) -> ChartMap:
    """Twist on ``(T^2, dx^dy)`` through the chart ``alpha = x``, ``p = -y``.

    On ``T*S^1`` with ``u = (cos alpha, sin alpha)``, ``v = p u'`` the form
    ``sum dv ^ du`` is ``dp ^ dalpha``, so the chart is symplectic and the
    model twist becomes ``(x, y) -> (x - 2 pi sgn(y) r'(|y|), y)``.
    """
    profile = profile or default_profile()
    if profile.C >= period / 2:
        raise ProfileError("profile support must fit inside the annulus chart")
    dom = ChartDomain(("x", "y"), ((0.0, period), (-period / 2, period / 2)), (True, False))

    def f(P):
        P = np.atleast_2d(P)
        _, r1, _ = profile.derivatives(np.abs(P[:, 1]))
        return np.stack([P[:, 0] - 2 * math.pi * np.sign(P[:, 1]) * r1, P[:, 1]], axis=1)

    def jac(P):
        P = np.atleast_2d(P)
        _, _, r2 = profile.derivatives(np.abs(P[:, 1]))
        J = np.zeros((len(P), 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
        J[:, 0, 1] = -2 * math.pi * r2
        return J

    return ChartMap(dom, dom, func=f, jacobian=jac, name="grafted_dehn_twist")


# -- words and chains -----------------------------------------------------------

_LETTER = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)(?:\^(-?1|\+1))?$")


@dataclass(frozen=True)
class DehnWord:
    letters: tuple
    fiber: str = "F"

    @classmethod
    def parse(cls, text: str, spheres=None, fiber: str = "F") -> "DehnWord":
        toks = text.split()
        if not toks:
            raise ParseError("empty Dehn word")
        letters = []
        for tok in toks:
            m = _LETTER.match(tok)
            if not m:
                raise ParseError(f"bad Dehn letter {tok!r} (expected e.g. l1 or l1^-1)")
            label, exp = m.group(1), int(m.group(2) or 1)
            if spheres is not None and label not in spheres:
                raise ParseError(f"unknown sphere label {label!r}")
            letters.append((label, exp))
        return cls(tuple(letters), fiber)

    def text(self) -> str:
        return " ".join(l if e == 1 else f"{l}^-1" for l, e in self.letters) or "id"

    def reduced(self) -> tuple:
        out = []
        for l, e in self.letters:
            if out and out[-1] == (l, -e):
                out.pop()
            else:
                out.append((l, e))
        return tuple(out)


@dataclass
class CertificateChain:
    word: DehnWord
    links: list = field(default_factory=list)
    filling: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.links)

    @property
    def terminal(self) -> dict:
        return self.links[-1]

    def to_dict(self) -> dict:
        return {"word": self.word.text(), "fiber": self.word.fiber, "length": len(self.links),
                "reduced_word": DehnWord(self.word.reduced()).text(),
                "links": self.links, "filling": self.filling}


def _word_text(letters):
    return DehnWord(tuple(letters)).text()


def dehn_word_chain(word, spheres=None, verify_filling: bool = True) -> CertificateChain:
    """Peel letters left to right down to ``Z(id)`` and attach its filling.

    Each step multiplies the monodromy by ``tau_l^(-e)`` on the left; it is
    justified by the trace of a positive (``e = +1``) or negative (``e = -1``)
    Lagrangian surgery. Only the bookkeeping is produced; the handle geometry
    is not modelled. With ``verify_filling`` the terminal product filling is
    checked numerically.
    """
    if isinstance(word, str):
        word = DehnWord.parse(word, spheres)
    elif spheres is not None:
        for label, _ in word.letters:
            if label not in spheres:
                raise ParseError(f"unknown sphere label {label!r}")
    if not word.letters:
        raise ParseError("empty Dehn word")
    chain = CertificateChain(word)
    letters = list(word.letters)
    for k in range(len(letters) + 1):
        link = {"index": k, "monodromy": _word_text(letters[k:]),
                "mapping_torus": f"Z({_word_text(letters[k:])})"}
        if k < len(letters):
            label, e = letters[k]
            link["next"] = {"peel": label, "exponent": e,
                            "surgery": "positive" if e > 0 else "negative",
                            "justification": ("trace of a positive Lagrangian surgery" if e > 0 else
                                              "trace of a negative Lagrangian surgery")
                                             + f" along the sphere {label}"}
        else:
            link["next"] = None
        chain.links.append(link)
    chain.filling = {"manifold": f"{word.fiber} x D^2", "form": "sigma + dy1^dy2",
                     "boundary": "Z(id)"}
    if verify_filling:
        from .construct import product_filling, verify_filling as _vf
        rep = _vf(product_filling())
        chain.filling["verified"] = rep.passed
        chain.filling["residuals"] = rep.to_dict()["residuals"]
    return chain
