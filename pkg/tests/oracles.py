"""Independent reference computations used by the tests.

None of these import the package.  ``python3 tests/oracles.py`` recomputes
every value and rewrites ``tests/data/frozen_oracles.json``; the tests read
the frozen file, and ``test_oracles.py`` checks that the references still
reproduce it.
"""

from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import linprog
from scipy.special import eval_gegenbauer

FROZEN = Path(__file__).parent / "data" / "frozen_oracles.json"

# Published reference values (kissing-number bounds, two decimals, rounded up).
REFERENCE_Q0 = {3: 13.16, 4: 25.56, 5: 46.34, 6: 82.64, 7: 140.17, 8: 240.00, 24: 196560.00}
REFERENCE_Q1 = {3: 12.54, 4: 24.50, 5: 45.16, 6: 78.90, 7: 136.30, 8: 240.00, 24: 196560.02}
REFERENCE_Q2 = {4: 25.77, 5: 47.74}
KISSING = {3: 12, 4: 24, 8: 240, 24: 196560}
SWEEP_REFERENCE = {"q0_n7_0.50428868": 144.49659, "q1_n7_0.50428868": 140.52959}


def normalized_gegenbauer(n: int, k: int, s):
    """``P_k^{n/2-1}(s) / P_k^{n/2-1}(1)`` via scipy."""
    alpha = n / 2 - 1
    s = np.asarray(s, dtype=float)
    if alpha == 0:
        return np.cos(k * np.arccos(np.clip(s, -1, 1)))
    return eval_gegenbauer(k, alpha, s) / eval_gegenbauer(k, alpha, 1.0)


def delsarte_grid_lp(n: int, N: int = 24, cos_theta: float = 0.5, points: int = 2000) -> float:
    """Discretized Delsarte LP: min 1 + sum a_k, a >= 0, sum a_k P_k(s) <= -1 on a grid.

    A relaxation of the continuous problem, so its value is a lower estimate
    of the certified bound.
    """
    s = np.linspace(-1.0, cos_theta, points)
    A = np.stack([normalized_gegenbauer(n, k, s) for k in range(1, N + 1)], axis=1)
    res = linprog(np.ones(N), A_ub=A, b_ub=-np.ones(points), bounds=[(0, None)] * N, method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return 1.0 + float(res.fun)


def stability_number(n: int, edges) -> int:
    G = nx.Graph()
    G.add_nodes_from(range(n))
    G.add_edges_from(edges)
    H = nx.complement(G)
    return max(len(c) for c in nx.find_cliques(H))


def connected_graphs(max_n: int):
    """Connected graphs up to isomorphism from the networkx atlas, as (n, edges)."""
    for G in nx.graph_atlas_g():
        if 1 <= G.number_of_nodes() <= max_n and nx.is_connected(G):
            yield G.number_of_nodes(), sorted(G.edges())


def all_graphs(max_n: int):
    """Every graph on 1..max_n vertices up to isomorphism, as (n, edges)."""
    for G in nx.graph_atlas_g():
        if 1 <= G.number_of_nodes() <= max_n:
            yield G.number_of_nodes(), sorted(G.edges())


def form_coefficients(M, r: int) -> dict:
    """Coefficients of ``(sum x)^r x^T M x`` from the tensor sum over ``[n]^(r+2)``."""
    n = len(M)
    out: dict = {}
    for idx in itertools.product(range(n), repeat=r + 2):
        m = [0] * n
        for k in idx:
            m[k] += 1
        m = tuple(m)
        out[m] = out.get(m, 0) + Fraction(M[idx[0]][idx[1]])
    return out


def cr_member(M, r: int) -> bool:
    return min(form_coefficients(M, r).values()) >= 0


def qr_member(M, r: int, solver: str = "CLARABEL"):
    """Feasibility of ``sum x^b x^T N_b x + sum x^b x^T S_b x`` with cvxpy.

    Full matrices per ``beta``: ``N_b`` symmetric entrywise nonnegative and
    ``S_b`` PSD.  Returns True, False, or None when the solver is inconclusive.
    """
    import cvxpy as cp

    n = len(M)
    betas = [b for b in itertools.product(range(r + 1), repeat=n) if sum(b) == r]
    Ns = {b: cp.Variable((n, n), symmetric=True) for b in betas}
    Ss = {b: cp.Variable((n, n), PSD=True) for b in betas}
    target = form_coefficients(M, r)
    expr: dict = {m: 0 for m in target}
    for b in betas:
        for i in range(n):
            for j in range(n):
                m = list(b)
                m[i] += 1
                m[j] += 1
                m = tuple(m)
                expr[m] = expr[m] + Ns[b][i, j] + Ss[b][i, j]
    cons = [Ns[b] >= 0 for b in betas]
    cons += [expr[m] == float(c) for m, c in target.items()]
    prob = cp.Problem(cp.Minimize(0), cons)
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError:
        return None
    if prob.status in ("optimal", "optimal_inaccurate"):
        return True
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return False
    return None


def compute_all() -> dict:
    out = {
        "reference_q0": {str(k): v for k, v in REFERENCE_Q0.items()},
        "reference_q1": {str(k): v for k, v in REFERENCE_Q1.items()},
        "reference_q2": {str(k): v for k, v in REFERENCE_Q2.items()},
        "kissing": {str(k): v for k, v in KISSING.items()},
        "sweep_reference": SWEEP_REFERENCE,
        "delsarte_grid": {str(n): delsarte_grid_lp(n) for n in (3, 4, 5, 6, 7, 8, 24)},
        "delsarte_grid_n7_cos0": delsarte_grid_lp(7, cos_theta=0.0),
        "stability": {
            "C5": stability_number(5, [(i, (i + 1) % 5) for i in range(5)]),
            "K4": stability_number(4, list(itertools.combinations(range(4), 2))),
            "petersen": stability_number(10, nx.edges(nx.petersen_graph())),
        },
        "theta_C5": math.sqrt(5.0),
        "gegenbauer_samples": {
            f"{n}_{k}_{s}": float(normalized_gegenbauer(n, k, s))
            for n in (3, 4, 8, 24) for k in (1, 2, 5, 12) for s in (-0.9, -0.3, 0.25, 0.5)
        },
        "connected_graphs_upto6": sum(1 for _ in connected_graphs(6)),
    }
    return out


if __name__ == "__main__":
    data = compute_all()
    FROZEN.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {FROZEN}")


def sdpa_dual_value(path, solver: str = "CLARABEL") -> float:
    """Solve an SDPA sparse file's ``max tr(F0 Y) s.t. tr(Fi Y) = c_i, Y >= 0`` in cvxpy.

    A separate parser from the package's reader: blocks with negative size are
    diagonal, matrix entries are upper-triangle and mirrored.
    """
    import cvxpy as cp

    lines = []
    for raw in Path(path).read_text().splitlines():
        raw = raw.split("*")[0].split('"')[0].strip()
        if raw:
            lines.append(raw.replace(",", " ").replace("{", " ").replace("}", " "))
    m = int(lines[0].split()[0])
    sizes = [int(s) for s in lines[2].split()][: int(lines[1].split()[0])]
    c = [float(v) for v in lines[3].split()] if m else []
    Y = [cp.Variable(-s, nonneg=True) if s < 0 else cp.Variable((s, s), PSD=True) for s in sizes]
    exprs = [0] * (m + 1)
    for line in lines[4 if m else 3:]:
        p = line.split()
        k, blk, i, j, v = int(p[0]), int(p[1]) - 1, int(p[2]) - 1, int(p[3]) - 1, float(p[4])
        if sizes[blk] < 0:
            term = v * Y[blk][i]
        else:
            term = v * Y[blk][i, j] * (1 if i == j else 2)
        exprs[k] = exprs[k] + term
    cons = [exprs[k + 1] == c[k] for k in range(m)]
    prob = cp.Problem(cp.Maximize(exprs[0]), cons)
    prob.solve(solver=solver)
    return float(prob.value)
