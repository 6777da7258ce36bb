"""Stability-number bounds from the copositive hierarchy on small graphs.

For each graph: alpha <= nu_r <= gamma_r, with gamma_r infinite (infeasible)
until r is large enough.
"""

import math

from copokernel import tensor_cop as tc

graphs = {
    "5-cycle": tc.FiniteGraph.cycle(5),
    "K4": tc.FiniteGraph.complete(4),
    "empty-3": tc.FiniteGraph.empty(3),
}
for name, G in graphs.items():
    alpha = tc.stability_bruteforce(G)
    print(f"{name}: alpha = {alpha}")
    for r in (0, 1):
        nu = tc.nu_r(G, r)
        ga = tc.gamma_r(G, r)
        gtxt = f"{ga.value:.6f}" if ga.status == "optimal" else ga.status
        print(f"  r={r}: nu = {nu.value:.6f}   gamma = {gtxt}")
print(f"(theta of the 5-cycle is sqrt 5 = {math.sqrt(5):.6f})")
