"""Gegenbauer polynomials by three-term recurrence, with exact coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .poly import Polynomial, chebyshev_coefficients, parity_compose


@dataclass(frozen=True)
class GegenbauerPoly:
    order: Fraction
    degree: int
    coeffs: tuple  # coeffs[k] multiplies s**k
    normalized: bool = False

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c in reversed(self.coeffs):
            out = out * s + float(c)
        return out

    def value_at_one(self) -> Fraction:
        return sum(self.coeffs, Fraction(0))

    def exact(self, s) -> Fraction:
        s = Fraction(s)
        out = Fraction(0)
        for c in reversed(self.coeffs):
            out = out * s + c
        return out


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, float):
        return Fraction(alpha).limit_denominator(10**6)
    return Fraction(alpha)


@lru_cache(maxsize=None)
def _recurrence_table(alpha: Fraction, d: int) -> tuple:
    polys = [[Fraction(1)]]
    if d >= 1:
        polys.append([Fraction(0), 2 * alpha])
    for k in range(2, d + 1):
        prev, prev2 = polys[-1], polys[-2]
        nxt = [Fraction(0)] * (k + 1)
        a = 2 * (k + alpha - 1) / k
        b = (k + 2 * alpha - 2) / Fraction(k)
        for p, c in enumerate(prev):
            nxt[p + 1] += a * c
        for p, c in enumerate(prev2):
            nxt[p] -= b * c
        polys.append(nxt)
    return tuple(tuple(p) for p in polys)


def gegenbauer(alpha, d: int) -> GegenbauerPoly:
    """``P_d^alpha`` from ``P_0 = 1``, ``P_1 = 2 alpha t`` and
    ``d P_d = 2t(d + alpha - 1) P_{d-1} - (d + 2 alpha - 2) P_{d-2}``."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    alpha = _as_fraction(alpha)
    return GegenbauerPoly(alpha, d, _recurrence_table(alpha, d)[d])


def normalized_gegenbauer(alpha, d: int) -> GegenbauerPoly:
    """Gegenbauer polynomial scaled to value 1 at ``s = 1``.

    For ``alpha = 0`` the recurrence degenerates (``P_d^0 = 0`` for ``d >= 1``);
    the normalized family converges to the Chebyshev polynomials ``T_d`` as
    ``alpha -> 0``, and that limit is returned.
    """
    alpha = _as_fraction(alpha)
    if alpha == 0 and d >= 1:
        return GegenbauerPoly(alpha, d, chebyshev_coefficients(d), normalized=True)
    g = gegenbauer(alpha, d)
    v = g.value_at_one()
    if v == 0:
        raise ValueError(f"P_{d}^{alpha}(1) = 0; cannot normalize")
    return GegenbauerPoly(alpha, d, tuple(c / v for c in g.coeffs), normalized=True)


def gegenbauer_eval(alpha: float, d: int, s) -> np.ndarray:
    """Floating-point recurrence evaluation (independent of the coefficient path)."""
    s = np.asarray(s, dtype=float)
    p0 = np.ones_like(s)
    if d == 0:
        return p0
    p1 = 2 * alpha * s
    for k in range(2, d + 1):
        p0, p1 = p1, (2 * s * (k + alpha - 1) * p1 - (k + 2 * alpha - 2) * p0) / k
    return p1


def extended_gegenbauer(i: int, alpha, W: Polynomial, R: Polynomial) -> Polynomial:
    """``R**(i/2) * Phat_i(W / sqrt(R))`` as a polynomial in W and R."""
    if i == 0:
        return Polynomial.constant(W.vars, 1)
    return parity_compose(normalized_gegenbauer(alpha, i).coeffs, W, R)
