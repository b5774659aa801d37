"""Reference implementations used only by the tests.

They avoid the package's own algebra: forms are expanded into dense
antisymmetric tensors, derivatives come from sympy, and Reeb data from a
pointwise linear solve.
"""
import itertools
import math

import numpy as np
import sympy

from bsymp.chartcalc import ChartDomain, FormField
from bsymp.expr import cos, exp, sin, to_sympy, var

# -- random fields -------------------------------------------------------------


def random_expr(rng, names, depth=2):
    """Smooth random expression: sums of products of trig/poly atoms."""
    terms = []
    for _ in range(int(rng.integers(1, 3))):
        a = var(names[int(rng.integers(len(names)))])
        b = var(names[int(rng.integers(len(names)))])
        c = float(np.round(rng.uniform(-1.5, 1.5), 3))
        kind = int(rng.integers(5))
        if kind == 0:
            atom = sin(a + 0.5 * b)
        elif kind == 1:
            atom = cos(a) * b
        elif kind == 2:
            atom = a * a + 0.3 * b
        elif kind == 3:
            atom = exp(0.2 * a) * sin(b)
        else:
            atom = a * b + 1.0
        terms.append(c * atom)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    if depth > 1 and rng.random() < 0.3:
        out = out * cos(var(names[0]))
    return out


def random_field(rng, domain, degree, cls=FormField, density=0.7):
    comps = {}
    for idx in itertools.combinations(range(domain.dim), degree):
        if rng.random() < density:
            comps[idx] = random_expr(rng, domain.coords)
    if not comps and degree <= domain.dim:
        comps[tuple(range(degree))] = random_expr(rng, domain.coords)
    return cls(domain, degree, comps)


def box(names, half=1.0):
    return ChartDomain(tuple(names), tuple((-half, half) for _ in names), (False,) * len(names))


def random_points(rng, domain, count=25):
    lo = np.array([b[0] for b in domain.bounds])
    hi = np.array([b[1] for b in domain.bounds])
    return lo + (hi - lo) * (0.1 + 0.8 * rng.random((count, domain.dim)))


# -- dense tensors ----------------------------------------------------------------


def _perm_parity(p):
    p = list(p)
    s = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def dense(field, point):
    """Full antisymmetric array of a field at one point."""
    n, k = field.domain.dim, field.degree
    T = np.zeros((n,) * k) if k else np.zeros(())
    vals = field.evaluate(np.atleast_2d(point))
    if k == 0:
        return np.array(float(np.broadcast_to(vals.get((), 0.0), (1,))[0]))
    for idx, v in vals.items():
        v = float(np.broadcast_to(v, (1,))[0])
        for perm in itertools.permutations(range(k)):
            T[tuple(idx[p] for p in perm)] = _perm_parity(perm) * v
    return T


def tensor_wedge(A, B):
    """``(A ^ B)_{I J} = sum over shuffles``, in the component (not Alt) normalisation."""
    p, q = A.ndim, B.ndim
    n = A.shape[0] if p else B.shape[0]
    out = np.zeros((n,) * (p + q))
    for idx in itertools.product(range(n), repeat=p + q):
        if len(set(idx)) < p + q:
            continue
        acc = 0.0
        for S in itertools.combinations(range(p + q), p):
            rest = tuple(i for i in range(p + q) if i not in S)
            sign = _perm_parity(S + rest)
            acc += sign * A[tuple(idx[i] for i in S)] * B[tuple(idx[i] for i in rest)]
        out[idx] = acc
    return out


def tensor_contract(V, W):
    """``i_V W`` contracting the leading slots of ``W`` with the vector/multivector ``V``.

    With increasing-index storage the convention is
    ``(i_V w)_J = sum_{I increasing} V^I w_{I J}``.
    """
    k = V.ndim
    n = W.shape[0]
    out = np.zeros((n,) * (W.ndim - k)) if W.ndim > k else np.zeros(())
    for I in itertools.combinations(range(n), k):
        out = out + V[I] * W[I]
    return out


def sym_components(field):
    syms = {c: sympy.Symbol(c, real=True) for c in field.domain.coords}
    return syms, {k: to_sympy(v, syms) for k, v in field.components.items()}


def sympy_d(field):
    """Exterior derivative through sympy; returns {increasing index: sympy expr}."""
    syms, comps = sym_components(field)
    coords = field.domain.coords
    out = {}
    for I, e in comps.items():
        for j, c in enumerate(coords):
            if j in I:
                continue
            de = sympy.diff(e, syms[c])
            if de == 0:
                continue
            J = tuple(sorted((j,) + I))
            sign = (-1) ** J.index(j)
            out[J] = out.get(J, 0) + sign * de
    return out, syms


def eval_sympy_comps(comps, syms, domain, points):
    fns = {}
    order = [syms[c] for c in domain.coords]
    for k, e in comps.items():
        f = sympy.lambdify(order, e, "numpy")
        fns[k] = np.broadcast_to(np.asarray(f(*points.T), dtype=float), (len(points),))
    return fns


# -- cosymplectic reference ---------------------------------------------------------


def reeb_at(theta, eta, point):
    """``R`` and ``nu`` at one point, each from a least-squares solve of its defining equations."""
    th = dense(theta, point)
    E = dense(eta, point)
    n = len(th)
    M = np.zeros((n + 1, n))
    M[0] = th
    M[1:] = E.T  # (i_R eta)_j = R^i E_ij
    rhs = np.zeros(n + 1)
    rhs[0] = 1.0
    R, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    # nu: antisymmetric N with N theta = 0 and N^T E + R theta^T = I, by least squares
    pairs = list(itertools.combinations(range(n), 2))
    rows, rhs2 = [], []
    for a in range(n):
        for b in range(n):
            row = np.zeros(len(pairs))
            for k, (i, j) in enumerate(pairs):
                # (N^T E)_{ab} = sum_c N_{ca} E_{cb}
                if j == a:
                    row[k] += E[i, b]
                if i == a:
                    row[k] -= E[j, b]
            rows.append(row)
            rhs2.append((1.0 if a == b else 0.0) - R[a] * th[b])
    for a in range(n):
        row = np.zeros(len(pairs))
        for k, (i, j) in enumerate(pairs):
            if i == a:
                row[k] += th[j]
            if j == a:
                row[k] -= th[i]
        rows.append(row)
        rhs2.append(0.0)
    x, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs2), rcond=None)
    N = np.zeros((n, n))
    for k, (i, j) in enumerate(pairs):
        N[i, j], N[j, i] = x[k], -x[k]
    return R, N


def pfaffian_4(M):
    return M[0, 1] * M[2, 3] - M[0, 2] * M[1, 3] + M[0, 3] * M[1, 2]


LOG_QUARTER = math.log(0.25)
