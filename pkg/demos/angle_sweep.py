"""Spherical-code bounds as the minimal angle varies (plot-ready CSV on stdout).

``python3 demos/angle_sweep.py > sweep.csv``.  Larger cos(theta) means a weaker
angle constraint, so the bound grows along the sweep.
"""

from fractions import Fraction

from copokernel.bounds import reports_to_csv, sweep

angles = [Fraction(k, 20) for k in range(2, 13)]  # cos theta from 0.1 to 0.6
rows = sweep(7, 0, angles, N=16, samples=1000)
print(reports_to_csv(rows), end="")
