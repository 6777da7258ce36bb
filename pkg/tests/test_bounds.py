import json
from fractions import Fraction

import numpy as np
import pytest

from copokernel import bounds, conic
from copokernel.bounds import BoundReport, BoundSpec, round_up, solve_bound, verify_bound
from copokernel.conic import ProgramBuilder
from copokernel.gegenbauer import normalized_gegenbauer
from copokernel.poly import level_variable_permutations


@pytest.fixture(scope="module")
def q0_n8():
    return solve_bound(BoundSpec(8, 0), samples=2000)


def test_spec_validation():
    with pytest.raises(ValueError):
        BoundSpec(2, 0)
    with pytest.raises(ValueError):
        BoundSpec(3, 2)
    with pytest.raises(ValueError):
        BoundSpec(4, 0, cos_theta=Fraction(1))
    assert BoundSpec(4, 0, cos_theta="0.5") == BoundSpec(4, 0)
    assert BoundSpec(4, 1).N == 12 and BoundSpec(4, 0).N == 24


def test_round_up():
    assert round_up(240.0000011) == 240.00
    assert round_up(13.1527) == 13.16
    assert round_up(13.15) == 13.15
    assert round_up(25.5584) == 25.56
    assert round_up(1.001) == 1.01
    assert round_up(-0.5) == -0.5


def test_q0_n8(q0_n8, frozen):
    assert q0_n8.status == "optimal"
    assert abs(q0_n8.value - 240.0) <= 0.05
    assert q0_n8.display_value() == "240.00"
    assert q0_n8.value >= frozen["kissing"]["8"]


@pytest.mark.parametrize("n", [3, 4])
def test_q0_small(n, frozen):
    r = solve_bound(BoundSpec(n, 0), samples=2000)
    assert r.status == "optimal"
    assert abs(r.value - frozen["reference_q0"][str(n)]) <= 0.05
    # discretized LP is a relaxation of the certified bound
    assert frozen["delsarte_grid"][str(n)] <= r.value + 1e-3
    assert r.value >= frozen["kissing"][str(n)]


def test_q0_grid_check(q0_n8):
    cert = bounds.BoundCertificate.from_dict(q0_n8.certificate)
    s = np.linspace(-1, 0.5, 2000)
    assert np.all(bounds._phi_values(cert, s) <= -1 + 1e-6)


def test_verify_bound_detects_negated_block(q0_n8):
    assert verify_bound(q0_n8, samples=1000).ok
    d = json.loads(json.dumps(q0_n8.certificate))
    G = np.array(d["interval"]["matrices"][0])
    d["interval"]["matrices"][0] = (-G).tolist()
    bad = BoundReport(**{**q0_n8.__dict__, "certificate": d})
    v = verify_bound(bad, samples=1000)
    assert not v.ok and v.residual_psd < -1e-8


def test_report_json_and_csv_round_trip(q0_n8):
    back = BoundReport.from_json(q0_n8.to_json())
    assert back == q0_n8
    rows = bounds.reports_from_csv(bounds.reports_to_csv([q0_n8]))
    assert rows[0].value == q0_n8.value and rows[0].status == q0_n8.status


def test_q1_low_degree_verifies():
    r = solve_bound(BoundSpec(4, 1, 4), samples=2000)
    assert r.status == "optimal" and r.value >= 24
    assert verify_bound(r, samples=2000).ok


def test_sweep_monotone_in_cos_theta():
    rows = bounds.sweep(4, 0, ["0.3", "0.4", "1/2"], N=12, samples=500)
    vals = [r.value for r in rows]
    assert all(r.status == "optimal" for r in rows)
    assert vals == sorted(vals)
    bad = bounds.sweep(4, 0, ["1.5"], N=12)
    assert bad[0].status == "invalid"


def test_schoenberg_sampling():
    rng = np.random.default_rng(0)
    for n in (3, 4, 8):
        X = rng.normal(size=(50, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        S = np.clip(X @ X.T, -1, 1)
        c = rng.uniform(0, 1, size=10)
        K = sum(ci * normalized_gegenbauer(Fraction(n, 2) - 1, i)(S) for i, ci in enumerate(c))
        assert np.linalg.eigvalsh(K)[0] >= -1e-8


@pytest.mark.parametrize("n", [4, 6])
def test_two_psd_sampling(n):
    rng = np.random.default_rng(n)
    kx = bounds.kernel_expansion(1, Fraction(n - 1, 2) - 1, 4)
    mats = []
    for part in kx.parts:
        B = rng.normal(size=(part.size, part.size))
        mats.append(B @ B.T)
    z = rng.normal(size=n)
    z /= np.linalg.norm(z)
    X = rng.normal(size=(30, n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    G = X @ X.T
    xz = X @ z
    pts = np.stack([G, np.repeat(xz[:, None], 30, 1), np.repeat(xz[None, :], 30, 0)], axis=-1)
    F = kx.evaluate(mats, pts)
    F = (F + F.T) / 2
    scale = max(1.0, np.abs(F).max())
    assert np.linalg.eigvalsh(F)[0] >= -1e-7 * scale


def test_sigma_F_invariant():
    b = ProgramBuilder()
    kx = bounds.kernel_expansion(1, Fraction(1, 2), 3, b)
    F = kx.sigma_F
    for perm in level_variable_permutations(1):
        moved = F.permute_variables(perm)
        assert moved.terms == F.terms


def test_level_two_builds():
    built = bounds.build(BoundSpec(4, 2, 1))
    assert built.program.num_rows > 0
    rep = solve_bound(BoundSpec(4, 2, 1), samples=200)
    assert rep.status in ("optimal", "infeasible")
    if rep.status == "infeasible":
        assert rep.message == "Farkas ray verified"
