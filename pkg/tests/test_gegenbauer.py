from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from copokernel.gegenbauer import extended_gegenbauer, gegenbauer, gegenbauer_eval, normalized_gegenbauer
from copokernel.poly import Polynomial, VariableSet

import oracles


@pytest.mark.parametrize("alpha", [Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(11)])
def test_low_degrees(alpha):
    assert gegenbauer(alpha, 0).coeffs == (1,)
    assert gegenbauer(alpha, 1).coeffs == (0, 2 * alpha)
    assert gegenbauer(alpha, 2).coeffs == (-alpha, 0, 2 * alpha * (alpha + 1))
    assert normalized_gegenbauer(alpha, 1).coeffs == (0, 1)
    assert normalized_gegenbauer(alpha, 0).coeffs == (1,)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 20), st.sampled_from([Fraction(k, 2) for k in range(0, 24)]))
def test_normalized_value_at_one(d, alpha):
    assert normalized_gegenbauer(alpha, d).value_at_one() == 1


def test_against_frozen_scipy(frozen):
    for key, want in frozen["gegenbauer_samples"].items():
        n, k, s = key.split("_")
        g = normalized_gegenbauer(Fraction(int(n), 2) - 1, int(k))
        assert float(g(float(s))) == pytest.approx(want, abs=1e-12)


def test_coefficient_path_matches_float_recurrence():
    s = np.linspace(-1, 1, 41)
    for alpha in (0.5, 1.0, 2.5, 11.0):
        for d in range(0, 15):
            assert np.allclose(gegenbauer(alpha, d)(s), gegenbauer_eval(alpha, d, s), rtol=1e-9, atol=1e-9)


def test_alpha_zero_is_chebyshev_limit():
    s = np.linspace(-1, 1, 11)
    assert np.allclose(normalized_gegenbauer(0, 5)(s), oracles.normalized_gegenbauer(2, 5, s))


def test_extended_examples():
    V0 = VariableSet.for_level(0)
    u0 = Polynomial.variable(V0, 0)
    assert extended_gegenbauer(0, Fraction(1, 2), u0, u0) == Polynomial.constant(V0, 1)
    for i in range(1, 6):
        ext = extended_gegenbauer(i, Fraction(1, 2), u0, Polynomial.constant(V0, 1))
        assert ext == Polynomial.univariate(V0, normalized_gegenbauer(Fraction(1, 2), i).coeffs)
    V1 = VariableSet.for_level(1)
    u, v, t = (Polynomial.variable(V1, k) for k in "uvt")
    alpha = Fraction(1, 2)
    for i in range(0, 6):
        ext = extended_gegenbauer(i, alpha, u - v * t, (1 - v * v) * (1 - t * t))
        pts = np.array([[s, 0.0, 0.0] for s in np.linspace(-1, 1, 7)])
        assert np.allclose(ext.evaluate(pts), normalized_gegenbauer(alpha, i)(pts[:, 0]))
