"""Batched numeric kernels with a numba path and a pure-numpy path.

Both paths compute the same quantities to rounding. The numba path is used
when numba imports and ``BSYMP_NUMBA`` is not set to ``0`` at import time.
Each public function dispatches on :data:`USE_NUMBA`; the individual
implementations stay importable as ``np_*`` / ``nb_*`` for tests and the
benchmark.
"""
import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("BSYMP_NUMBA", "1").lower() not in ("0", "false", "no", "off")

__all__ = ["USE_NUMBA", "HAS_NUMBA", "pfaffian", "twist", "circle_action", "symplectic_defect",
           "np_pfaffian", "np_twist", "np_circle_action", "np_symplectic_defect"]


# -- pfaffian ---------------------------------------------------------------

def np_pfaffian(A):
    """Pfaffians of a stack of antisymmetric matrices, shape (N, 2m, 2m)."""
    A = np.array(A, dtype=float, copy=True)
    N, n, _ = A.shape
    if n % 2:
        return np.zeros(N)
    pf = np.ones(N)
    dead = np.zeros(N, dtype=bool)
    idx = np.arange(N)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(A[:, k + 1:, k]), axis=1)
        swap = kp != k + 1
        if swap.any():
            r1 = A[idx, k + 1, :].copy()
            A[idx, k + 1, :] = A[idx, kp, :]
            A[idx, kp, :] = r1
            c1 = A[idx, :, k + 1].copy()
            A[idx, :, k + 1] = A[idx, :, kp]
            A[idx, :, kp] = c1
            pf = np.where(swap, -pf, pf)
        piv = A[:, k, k + 1].copy()
        zero = piv == 0.0
        dead |= zero
        piv[zero] = 1.0
        pf *= piv
        if k + 2 < n:
            tau = A[:, k, k + 2:] / piv[:, None]
            col = A[:, k + 2:, k + 1]
            A[:, k + 2:, k + 2:] += tau[:, :, None] * col[:, None, :] - col[:, :, None] * tau[:, None, :]
    pf[dead] = 0.0
    return pf


# -- model twist --------------------------------------------------------------

def np_circle_action(t, U, V):
    t = np.broadcast_to(np.asarray(t, dtype=float), (U.shape[0],))
    rho = np.linalg.norm(V, axis=1)
    c, s = np.cos(2 * np.pi * t)[:, None], np.sin(2 * np.pi * t)[:, None]
    return c * U + s * V / rho[:, None], c * V - s * rho[:, None] * U


def np_twist(U, V, rp, rpp):
    """Rotate (u, v) by angle 2*pi*r'(|v|); also return the ambient Jacobian.

    ``rp`` and ``rpp`` are r' and r'' sampled at |v|. Rows with v = 0 are
    sent to (cos a * u, cos a * v) with a = 2*pi*r'(0), which is the
    antipodal map when r'(0) = 1/2.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    N, n = U.shape
    rho = np.linalg.norm(V, axis=1)
    zero = rho == 0.0
    safe = np.where(zero, 1.0, rho)
    e = V / safe[:, None]
    a = 2 * np.pi * np.asarray(rp, dtype=float)
    da = 2 * np.pi * np.where(zero, 0.0, np.asarray(rpp, dtype=float))
    ca, sa = np.cos(a), np.sin(a)
    sa = np.where(zero, 0.0, sa)
    PU = ca[:, None] * U + sa[:, None] * e
    PV = ca[:, None] * V - (sa * rho)[:, None] * U
    eye = np.eye(n)[None]
    P = eye - e[:, :, None] * e[:, None, :]
    J = np.zeros((N, 2 * n, 2 * n))
    J[:, :n, :n] = ca[:, None, None] * eye
    wu = -sa[:, None] * U + ca[:, None] * e
    J[:, :n, n:] = (sa / safe)[:, None, None] * P + (wu * da[:, None])[:, :, None] * e[:, None, :]
    J[:, n:, :n] = -(sa * rho)[:, None, None] * eye
    wv = -sa[:, None] * V - (ca * rho)[:, None] * U
    J[:, n:, n:] = (ca[:, None, None] * eye - sa[:, None, None] * U[:, :, None] * e[:, None, :]
                    + (wv * da[:, None])[:, :, None] * e[:, None, :])
    return PU, PV, J


def np_symplectic_defect(J, E):
    """max_ij |w(J e_i, J e_j) - w(e_i, e_j)| for w = sum dv_k ^ du_k.

    ``J`` has shape (N, 2n, 2n), ``E`` (N, 2n, m) holds tangent frames.
    """
    n = J.shape[1] // 2
    W = np.zeros((2 * n, 2 * n))
    W[n:, :n] = np.eye(n)
    W[:n, n:] = -np.eye(n)
    JE = J @ E
    before = np.einsum("nai,ab,nbj->nij", E, W, E)
    after = np.einsum("nai,ab,nbj->nij", JE, W, JE)
    return np.abs(after - before).max(axis=(1, 2))


if HAS_NUMBA:

    @njit(cache=True)
    def _pf_one(M):
        A = M.copy()
        n = A.shape[0]
        pf = 1.0
        for k in range(0, n - 1, 2):
            kp = k + 1
            best = abs(A[k + 1, k])
            for i in range(k + 2, n):
                if abs(A[i, k]) > best:
                    best = abs(A[i, k])
                    kp = i
            if kp != k + 1:
                for j in range(n):
                    tmp = A[k + 1, j]
                    A[k + 1, j] = A[kp, j]
                    A[kp, j] = tmp
                for i in range(n):
                    tmp = A[i, k + 1]
                    A[i, k + 1] = A[i, kp]
                    A[i, kp] = tmp
                pf = -pf
            piv = A[k, k + 1]
            if piv == 0.0:
                return 0.0
            pf *= piv
            for i in range(k + 2, n):
                ti = A[k, i] / piv
                ci = A[i, k + 1]
                for j in range(k + 2, n):
                    A[i, j] += ti * A[j, k + 1] - ci * (A[k, j] / piv)
        return pf

    @njit(cache=True)
    def nb_pfaffian(A):
        N = A.shape[0]
        out = np.zeros(N)
        if A.shape[1] % 2:
            return out
        for b in range(N):
            out[b] = _pf_one(A[b])
        return out

    @njit(cache=True)
    def nb_circle_action(t, U, V):
        N, n = U.shape
        PU = np.empty_like(U)
        PV = np.empty_like(V)
        for b in range(N):
            rho = 0.0
            for i in range(n):
                rho += V[b, i] * V[b, i]
            rho = np.sqrt(rho)
            c = np.cos(2 * np.pi * t[b])
            s = np.sin(2 * np.pi * t[b])
            for i in range(n):
                PU[b, i] = c * U[b, i] + s * V[b, i] / rho
                PV[b, i] = c * V[b, i] - s * rho * U[b, i]
        return PU, PV

    @njit(cache=True)
    def nb_twist(U, V, rp, rpp):
        N, n = U.shape
        PU = np.empty_like(U)
        PV = np.empty_like(V)
        J = np.zeros((N, 2 * n, 2 * n))
        e = np.empty(n)
        for b in range(N):
            rho = 0.0
            for i in range(n):
                rho += V[b, i] * V[b, i]
            rho = np.sqrt(rho)
            a = 2 * np.pi * rp[b]
            ca = np.cos(a)
            if rho == 0.0:
                for i in range(n):
                    PU[b, i] = ca * U[b, i]
                    PV[b, i] = ca * V[b, i]
                    J[b, i, i] = ca
                    J[b, n + i, n + i] = ca
                continue
            sa = np.sin(a)
            da = 2 * np.pi * rpp[b]
            for i in range(n):
                e[i] = V[b, i] / rho
            for i in range(n):
                PU[b, i] = ca * U[b, i] + sa * e[i]
                PV[b, i] = ca * V[b, i] - sa * rho * U[b, i]
            for i in range(n):
                wu = -sa * U[b, i] + ca * e[i]
                wv = -sa * V[b, i] - ca * rho * U[b, i]
                J[b, i, i] = ca
                J[b, n + i, i] = -sa * rho
                for j in range(n):
                    p = -e[i] * e[j]
                    if i == j:
                        p += 1.0
                    J[b, i, n + j] = sa / rho * p + wu * da * e[j]
                    vv = -sa * U[b, i] * e[j] + wv * da * e[j]
                    if i == j:
                        vv += ca
                    J[b, n + i, n + j] = vv
        return PU, PV, J

    @njit(cache=True)
    def nb_symplectic_defect(J, E):
        N, d, m = E.shape
        n = d // 2
        out = np.zeros(N)
        JE = np.empty((d, m))
        for b in range(N):
            for a in range(d):
                for k in range(m):
                    s = 0.0
                    for c in range(d):
                        s += J[b, a, c] * E[b, c, k]
                    JE[a, k] = s
            worst = 0.0
            for i in range(m):
                for j in range(m):
                    w0 = 0.0
                    w1 = 0.0
                    for k in range(n):
                        w0 += E[b, n + k, i] * E[b, k, j] - E[b, k, i] * E[b, n + k, j]
                        w1 += JE[n + k, i] * JE[k, j] - JE[k, i] * JE[n + k, j]
                    if abs(w1 - w0) > worst:
                        worst = abs(w1 - w0)
            out[b] = worst
        return out


# -- dispatch ---------------------------------------------------------------

def pfaffian(A):
    A = np.ascontiguousarray(A, dtype=float)
    if USE_NUMBA:
        return nb_pfaffian(A)
    return np_pfaffian(A)


def circle_action(t, U, V):
    U = np.ascontiguousarray(U, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    if USE_NUMBA:
        t = np.ascontiguousarray(np.broadcast_to(np.asarray(t, dtype=float), (U.shape[0],)))
        return nb_circle_action(t, U, V)
    return np_circle_action(t, U, V)


def twist(U, V, rp, rpp):
    U = np.ascontiguousarray(U, dtype=float)
    V = np.ascontiguousarray(V, dtype=float)
    rp = np.ascontiguousarray(np.broadcast_to(np.asarray(rp, dtype=float), (U.shape[0],)))
    rpp = np.ascontiguousarray(np.broadcast_to(np.asarray(rpp, dtype=float), (U.shape[0],)))
    if USE_NUMBA:
        return nb_twist(U, V, rp, rpp)
    return np_twist(U, V, rp, rpp)


def symplectic_defect(J, E):
    J = np.ascontiguousarray(J, dtype=float)
    E = np.ascontiguousarray(E, dtype=float)
    if USE_NUMBA:
        return nb_symplectic_defect(J, E)
    return np_symplectic_defect(J, E)
