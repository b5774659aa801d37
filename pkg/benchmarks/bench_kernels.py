"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 5] [--json out.json]

The first numba call (compilation) is excluded from the timings and reported
separately. Each row also reports the largest difference between the two paths.
"""
import argparse
import json
import time

import numpy as np

from bsymp import _kernels as K
from bsymp.dehn import constraint_points, default_profile, model_dehn_twist, tangent_frames


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(n):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((n, 6, 6))
    A = A - A.transpose(0, 2, 1)
    P = constraint_points(3, n, seed=1)
    U, V = P[:, :3].copy(), P[:, 3:].copy()
    _, r1, r2 = default_profile().derivatives(np.linalg.norm(V, axis=1))
    psi = model_dehn_twist()
    T = np.full(n, 0.3)
    m = min(n, 20000)
    J = psi.jacobian(P[:m])
    E = tangent_frames(P[:m])
    return {
        "pfaffian 6x6": (lambda: K.np_pfaffian(A), lambda: K.nb_pfaffian(A)),
        "circle_action": (lambda: K.np_circle_action(T, U, V), lambda: K.nb_circle_action(T, U, V)),
        "twist": (lambda: K.np_twist(U, V, r1, r2), lambda: K.nb_twist(U, V, r1, r2)),
        f"symplectic_defect (N={m})": (lambda: K.np_symplectic_defect(J, E),
                                       lambda: K.nb_symplectic_defect(J, E)),
    }


def _diff(a, b):
    if isinstance(a, tuple):
        return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
    return float(np.max(np.abs(a - b)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 100000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows as JSON")
    a = ap.parse_args(argv)
    if not K.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for n in a.sizes:
        for name, (f_np, f_nb) in _cases(n).items():
            t0 = time.perf_counter()
            f_nb()
            warm = time.perf_counter() - t0
            t_np, t_nb = _best(f_np, a.repeat), _best(f_nb, a.repeat)
            rows.append({"kernel": name, "N": n, "numpy_s": t_np, "numba_s": t_nb,
                         "speedup": t_np / t_nb if t_nb else float("inf"),
                         "first_call_s": warm, "max_diff": _diff(f_np(), f_nb())})
    print(f"{'kernel':<30}{'N':>8}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}{'max diff':>11}")
    for r in rows:
        print(f"{r['kernel']:<30}{r['N']:>8}{1e3 * r['numpy_s']:>11.3f}{1e3 * r['numba_s']:>11.3f}"
              f"{r['speedup']:>9.2f}{r['max_diff']:>11.1e}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
