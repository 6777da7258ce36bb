"""Quick property checks behind ``python3 -m copokernel selftest``."""

from __future__ import annotations

import random
import time
from fractions import Fraction

import numpy as np

from . import bounds, conic, tensor_cop
from .gegenbauer import gegenbauer, gegenbauer_eval


def _motzkin_straus():
    for n in range(1, 5):
        for G in tensor_cop.all_graphs(n):
            A = G.adjacency() + np.eye(n, dtype=int)
            if tensor_cop.simplex_min_quadratic(A.tolist()) != Fraction(1, tensor_cop.stability_bruteforce(G)):
                return False
    return True


def _random_matrix(rng, n):
    M = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            M[i][j] = M[j][i] = Fraction(rng.randint(-4, 6), rng.randint(1, 3))
    return M


def _tensor_vs_polynomial():
    rng = random.Random(7)
    for _ in range(40):
        M = _random_matrix(rng, rng.randint(2, 4))
        for r in range(3):
            if tensor_cop.in_Cr(M, r).member != tensor_cop.in_Cr(M, r, "tensor").member:
                return False
    return True


def _nesting():
    rng = random.Random(11)
    for _ in range(40):
        M = _random_matrix(rng, rng.randint(2, 4))
        for r in range(2):
            if tensor_cop.in_Cr(M, r) and not tensor_cop.in_Cr(M, r + 1):
                return False
    return True


def _gegenbauer():
    s = np.linspace(-1, 1, 41)
    return all(np.allclose(gegenbauer(Fraction(3, 2), d)(s), gegenbauer_eval(1.5, d, s)) for d in range(12))


def _lambda_example():
    b = conic.ProgramBuilder()
    X = b.add_block(conic.PSD, 2, "X")
    b.add_equality({X.index(0, 0): 1}, 1)
    b.add_equality({X.index(1, 1): 1}, 1)
    b.set_objective({X.index(0, 1): -1})
    s = conic.solve(b.build())
    return s.status == conic.OPTIMAL and abs(s.objective + 1) < 1e-6


def _graph_sandwich():
    for G in tensor_cop.all_graphs(4):
        a = tensor_cop.stability_bruteforce(G)
        nu = tensor_cop.nu_r(G, 0)
        g = tensor_cop.gamma_r(G, 1)
        if nu.value is None or nu.value < a - 1e-6:
            return False
        if g.value is not None and nu.value > g.value + 1e-6:
            return False
    return True


def _q0_e8():
    r = bounds.solve_bound(bounds.BoundSpec(8, 0), samples=2000)
    return r.status == bounds.OPTIMAL and abs(r.value - 240) < 0.05


CHECKS = [
    ("conic: lambda example", _lambda_example, False),
    ("gegenbauer: coefficients vs recurrence", _gegenbauer, False),
    ("tensor_cop: Motzkin-Straus, n <= 4", _motzkin_straus, False),
    ("tensor_cop: C_r tensor route = polynomial route", _tensor_vs_polynomial, False),
    ("tensor_cop: C_r nesting", _nesting, False),
    ("tensor_cop: alpha <= nu_0 <= gamma_1, n = 4", _graph_sandwich, True),
    ("bounds: Q0 for n = 8 gives 240", _q0_e8, True),
]


def run_selftest(out, quick: bool = False) -> bool:
    ok_all = True
    for name, fn, slow in CHECKS:
        if quick and slow:
            print(f"SKIP  {name}", file=out)
            continue
        t0 = time.perf_counter()
        try:
            ok = bool(fn())
        except Exception as exc:  # report, do not abort the suite
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok_all &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{time.perf_counter() - t0:.1f}s]", file=out)
    print("selftest " + ("passed" if ok_all else "FAILED"), file=out)
    return ok_all
