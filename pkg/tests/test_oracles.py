"""The reference computations still reproduce their frozen values."""

import pytest

import oracles


@pytest.mark.parametrize("n", [3, 4, 8])
def test_delsarte_grid_frozen(frozen, n):
    assert oracles.delsarte_grid_lp(n) == pytest.approx(frozen["delsarte_grid"][str(n)], rel=1e-9)


def test_grid_lp_is_below_reference(frozen):
    for n, v in frozen["delsarte_grid"].items():
        assert v <= frozen["reference_q0"][n] + 1e-9


def test_stability_frozen(frozen):
    assert oracles.stability_number(5, [(i, (i + 1) % 5) for i in range(5)]) == frozen["stability"]["C5"]
    assert sum(1 for _ in oracles.connected_graphs(6)) == frozen["connected_graphs_upto6"]
    assert sum(1 for _ in oracles.all_graphs(5)) == 52


def test_form_coefficients_small():
    # (x1 + x2) * (x1^2 - 2 x1 x2 + x2^2)
    c = oracles.form_coefficients([[1, -1], [-1, 1]], 1)
    assert c[(3, 0)] == 1 and c[(2, 1)] == -1 and c[(1, 2)] == -1 and c[(0, 3)] == 1
    assert oracles.cr_member([[1, 0], [0, 1]], 0)
    assert not oracles.cr_member([[1, -3], [-3, 1]], 3)


def test_qr_oracle_small():
    assert oracles.qr_member([[1, 0], [0, 1]], 0) is True
    assert oracles.qr_member([[1, -3], [-3, 1]], 0) is False
