import numpy as np
import pytest

from copokernel import conic
from copokernel.conic import FREE, NONNEG, PSD, ProgramBuilder

import oracles


def lam_program():
    """max lambda s.t. [[1, lambda], [lambda, 1]] PSD."""
    b = ProgramBuilder()
    X = b.add_block(PSD, 2, "X")
    b.add_equality({X.index(0, 0): 1}, 1)
    b.add_equality({X.index(1, 1): 1}, 1)
    b.set_objective({X.index(0, 1): -1})
    return b.build(), X


def test_trivial_lp():
    b = ProgramBuilder()
    x = b.add_block(NONNEG, 1)
    b.add_equality({x.index(0): 1}, 1)
    b.set_objective({x.index(0): 1})
    s = conic.solve(b.build())
    assert s.status == conic.OPTIMAL
    assert s.objective == pytest.approx(1, abs=1e-7)


def test_lambda_example():
    prog, X = lam_program()
    s = conic.solve(prog)
    assert s.status == conic.OPTIMAL
    assert s.objective == pytest.approx(-1, abs=1e-6)
    assert s.block_value(X)[0, 1] == pytest.approx(1, abs=1e-5)


def test_infeasible_lp_has_ray():
    b = ProgramBuilder()
    x = b.add_block(NONNEG, 1)
    b.add_equality({x.index(0): 1}, -1)
    prog = b.build()
    s = conic.solve(prog)
    assert s.status == conic.PRIMAL_INFEASIBLE
    assert conic.check_primal_ray(prog, s.certificate)


def test_unbounded_lp():
    b = ProgramBuilder()
    x = b.add_block(NONNEG, 2)
    b.add_equality({x.index(0): 1, x.index(1): -1}, 0)
    b.set_objective({x.index(0): -1})
    assert conic.solve(b.build()).status == conic.DUAL_INFEASIBLE


def test_verify_hand_built_and_perturbed():
    prog, X = lam_program()
    x = np.zeros(prog.num_vars)
    x[X.offset:X.offset + X.size] = conic.pack_psd(np.ones((2, 2)))
    res = conic.verify(prog, x)
    assert res.equality <= 1e-12 and abs(res.objective + 1) <= 1e-12
    assert res.psd_floor == pytest.approx(0, abs=1e-12)
    x[X.index(0, 0)] += 1e-3
    assert conic.verify(prog, x).equality >= 1e-3 * (1 - 1e-12)


def random_sdp(seed, m=6, n=4):
    rng = np.random.default_rng(seed)
    b = ProgramBuilder()
    X = b.add_block(PSD, n)
    x = b.add_block(NONNEG, 3)
    f = b.add_block(FREE, 1)
    X0 = rng.normal(size=(n, n))
    X0 = X0 @ X0.T + np.eye(n)
    x0 = rng.uniform(0.5, 2, size=3)
    f0 = rng.normal()
    v0 = np.concatenate([conic.pack_psd(X0), x0, [f0]])
    for _ in range(m):
        row = rng.normal(size=v0.size)
        b.add_equality(dict(enumerate(row)), float(row @ v0))
    C = rng.normal(size=(n, n))
    C = C @ C.T + np.eye(n)
    obj = {X.index(i, j): C[i, j] * (1 if i == j else 2) for i in range(n) for j in range(i, n)}
    obj.update({x.index(k): 1.0 for k in range(3)})
    b.set_objective(obj)
    return b.build()


def cvxpy_value(prog):
    import cvxpy as cp

    z = cp.Variable(prog.num_vars)
    cons = [prog.A @ z == prog.b]
    for blk in prog.blocks:
        seg = z[blk.offset:blk.offset + blk.size]
        if blk.kind == NONNEG:
            cons.append(seg >= 0)
        elif blk.kind == PSD:
            S = cp.Variable((blk.dim, blk.dim), PSD=True)
            iu = np.triu_indices(blk.dim)
            cons += [S[i, j] == seg[t] for t, (i, j) in enumerate(zip(*iu))]
    p = cp.Problem(cp.Minimize(prog.c @ z), cons)
    p.solve(solver="CLARABEL")
    return p.value


@pytest.mark.parametrize("seed", range(4))
def test_random_sdp_against_cvxpy(seed):
    prog = random_sdp(seed)
    s = conic.solve(prog)
    assert s.status == conic.OPTIMAL
    assert s.objective == pytest.approx(cvxpy_value(prog), rel=1e-5, abs=1e-6)
    # weak duality and residual bound
    assert s.objective >= s.dual_objective - 1e-6 * (1 + abs(s.objective))
    res = conic.verify(prog, s)
    assert res.equality_relative <= 10 * conic.DEFAULT_TOL
    assert res.psd_floor >= -1e-10


def test_determinism():
    prog = random_sdp(11)
    a, b = conic.solve(prog), conic.solve(prog)
    assert a.iterations == b.iterations and a.status == b.status
    assert np.array_equal(a.x, b.x)


def test_objective_scaling():
    prog = random_sdp(5)
    big = conic.ConicProgram(prog.blocks, prog.A, prog.b, prog.c * 1e3, prog.objective_constant)
    s1, s2 = conic.solve(prog), conic.solve(big)
    assert s2.objective == pytest.approx(1e3 * s1.objective, rel=1e-6)
    assert np.allclose(s1.x, s2.x, atol=1e-4 * (1 + np.abs(s1.x).max()))


def test_trace_cap_keeps_feasibility():
    prog = random_sdp(2)
    s = conic.solve(prog)
    X = prog.blocks[0]
    tr = np.trace(s.block_value(X))
    capped = conic.with_trace_cap(prog, 2 * tr)
    sc = conic.solve(capped)
    assert sc.status == conic.OPTIMAL
    assert sc.objective == pytest.approx(s.objective, rel=1e-6)
    assert conic.verify(prog, sc.x[:prog.num_vars]).equality <= 1e-6


def test_sdpa_export_lambda(tmp_path):
    prog, _ = lam_program()
    p = conic.export_sdpa(prog, tmp_path / "lam.dat-s")
    lines = p.read_text().splitlines()
    assert lines[0] == "2" and lines[2] == "2"
    again = conic.read_sdpa(p)
    assert conic.solve(again).objective == pytest.approx(-1, abs=1e-6)
    assert -oracles.sdpa_dual_value(p) == pytest.approx(-1, abs=1e-6)


def test_sdpa_empty_and_diagonal(tmp_path):
    b = ProgramBuilder()
    b.add_block(PSD, 2)
    p = conic.export_sdpa(b.build(), tmp_path / "e.dat-s")
    assert p.read_text().splitlines() == ["0", "1", "2", ""] or len(p.read_text().splitlines()) <= 4
    b = ProgramBuilder()
    x = b.add_block(NONNEG, 3)
    b.add_equality({x.index(1): 1, x.index(2): 2}, 4)
    b.set_objective({x.index(1): 1, x.index(2): 1})
    p = conic.export_sdpa(b.build(), tmp_path / "d.dat-s")
    assert p.read_text().splitlines()[2] == "-3"
    again = conic.read_sdpa(p)
    assert conic.solve(again).objective == pytest.approx(2, abs=1e-6)
