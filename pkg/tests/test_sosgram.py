from fractions import Fraction

import numpy as np
import pytest

from copokernel import conic
from copokernel.conic import ProgramBuilder
from copokernel.poly import Polynomial, VariableSet
from copokernel.sosgram import (
    CHEBYSHEV, MONOMIAL, GramCertificate, SosTemplate, certificate, encode, interval_template,
    monomial_basis, reconstruct, reconstruct_monomial,
)

V0 = VariableSet.for_level(0)
V1 = VariableSet.for_level(1)
u = Polynomial.variable(V0, 0)
one = Polynomial.constant(V0, 1)


def test_monomial_basis_examples():
    assert monomial_basis(V0, 2) == [(0,), (1,), (2,)]
    assert len(monomial_basis(V1, 2, 2)) == 10
    assert len(monomial_basis(V1, 2, 1)) == 7


def solve_template(t, target):
    b = ProgramBuilder()
    enc = encode(t, b, target)
    prog = b.build()
    return prog, enc, conic.solve(prog)


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_square_target(basis):
    t = SosTemplate(V0, (one,), (((0,), (1,)),), basis=basis)
    _, enc, s = solve_template(t, u * u)
    assert s.status == conic.OPTIMAL
    cert = certificate(enc, s)
    if basis == MONOMIAL:
        assert np.allclose(cert.matrices[0], np.diag([0, 1]), atol=1e-6)
    assert cert.max_residual < 1e-8


def test_interval_weight_target():
    t = SosTemplate(V0, (one, 1 - u * u), (((0,), (1,)), ((0,),)))
    _, enc, s = solve_template(t, 1 - u * u)
    assert s.status == conic.OPTIMAL
    cert = certificate(enc, s)
    # unique decomposition up to the G0 nullspace: G1 = [1]
    assert cert.matrices[1][0, 0] == pytest.approx(1, abs=1e-6)
    assert np.allclose(cert.matrices[0], 0, atol=1e-6)
    rec = reconstruct_monomial(cert)
    for m, c in (1 - u * u).items():
        assert rec.coefficient(m) == pytest.approx(float(c), abs=1e-10 + 1e-6)


def test_odd_target_infeasible():
    t = SosTemplate(V0, (one,), (((0,), (1,)),))
    prog, _, s = solve_template(t, u)
    assert s.status == conic.PRIMAL_INFEASIBLE
    assert conic.check_primal_ray(prog, s.certificate)


def test_reconstruct_examples():
    c = GramCertificate(V0, (one,), (((0,), (1,)),), (np.eye(2),), Polynomial(V0, {}))
    assert reconstruct(c) == Polynomial(V0, {(0,): 1.0, (2,): 1.0})
    z = GramCertificate(V0, (one,), (((0,), (1,)),), (np.zeros((2, 2)),), Polynomial(V0, {}))
    assert reconstruct(z).is_zero()


def test_certificate_dict_round_trip():
    t = SosTemplate(V0, (one, 1 - u * u), (((0,), (1,)), ((0,),)))
    _, enc, s = solve_template(t, 1 - u * u + u ** 4)
    cert = certificate(enc, s)
    back = GramCertificate.from_dict(cert.to_dict(), V0)
    assert back.max_residual == pytest.approx(cert.max_residual, abs=1e-12)
    assert all(np.array_equal(a, b) for a, b in zip(back.matrices, cert.matrices))


@pytest.mark.parametrize("basis", [MONOMIAL, CHEBYSHEV])
def test_interval_template_nonneg(basis):
    # (s - 1/2)^2 (s + 2) >= 0 on [-1, 1/2] with a touching root
    s = u
    p = (s - Fraction(1, 2)) ** 2 * (s + 2)
    t = interval_template(V0, -1, Fraction(1, 2), 4, basis=basis)
    _, enc, sol = solve_template(t, p)
    assert sol.status == conic.OPTIMAL
    assert certificate(enc, sol).max_residual < 1e-7
    # and something negative inside the interval is refused
    _, _, bad = solve_template(t, s * s - Fraction(1, 10))
    assert bad.status == conic.PRIMAL_INFEASIBLE


def test_symmetric_encoding_rejects_non_invariant():
    vt = Polynomial.variable(V1, 0)
    t = SosTemplate.from_caps(V1, (Polynomial.constant(V1, 1),), 2, symmetry=1)
    with pytest.raises(ValueError):
        encode(t, ProgramBuilder(), vt * vt)
