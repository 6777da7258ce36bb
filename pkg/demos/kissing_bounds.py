"""Upper bounds on kissing numbers from the level-0 and level-1 relaxations.

Run with ``python3 demos/kissing_bounds.py``.  Level 0 reproduces the
classical linear-programming bound in about a second per dimension; the
level-1 block at the end is slower (minutes per dimension at N1 = 12), so it
defaults to a lower degree.  Pass ``--full`` for N1 = 12.
"""

import sys

from copokernel.bounds import BoundSpec, solve_bound, verify_bound

KNOWN = {3: 12, 4: 24, 8: 240, 24: 196560}

# %% Level 0: one univariate certificate per dimension.
print("level 0, N0 = 24")
for n in (3, 4, 5, 6, 7, 8, 24):
    rep = solve_bound(BoundSpec(n, 0), samples=2000)
    known = f"  (known kissing number {KNOWN[n]})" if n in KNOWN else ""
    print(f"  n = {n:2d}: {rep.display_value():>10}  {rep.status}{known}")

# %% The certificate travels with the report and can be re-checked on its own.
rep = solve_bound(BoundSpec(8, 0))
check = verify_bound(rep, samples=10_000)
print(f"\nre-verification for n = 8: ok={check.ok}, "
      f"equality residual {check.residual_eq:.1e}, PSD floor {check.residual_psd:.1e}")

# %% Level 1 adds a three-point kernel.  Its bound never exceeds level 0.
N1 = 12 if "--full" in sys.argv else 6
print(f"\nlevel 1, N1 = {N1}")
for n in (3, 4, 5):
    rep = solve_bound(BoundSpec(n, 1, N1), samples=2000)
    print(f"  n = {n}: {rep.display_value():>8}  {rep.status}  ({rep.wall_ms / 1000:.1f} s)")
