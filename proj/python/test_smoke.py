"""Smoke tests for the _concentra extension module."""
import json
import math
import tempfile

import _concentra as cc


def test_bubble():
    assert abs(cc.alpha_n(3) - 3 ** 0.25) < 1e-14
    assert abs(cc.critical_p(3) - 6.0) < 1e-14
    # center value alpha_n delta^{-1/2}
    v = cc.bubble_value(0.5, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    assert abs(v - cc.alpha_n(3) * 0.5 ** -0.5) < 1e-12
    # derivative is odd at the center
    assert cc.bubble_derivative(0.5, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], 1) == 0.0


def test_geometry():
    assert abs(cc.critical_exponent(5, 2) - 6.0) < 1e-14
    d, p, nu, xbar = cc.collar_data([0.0, 0.0, 0.0], 1.0, [0.9, 0.0, 0.0])
    assert abs(d - 0.1) < 1e-12
    assert abs(p[0] - 1.0) < 1e-12
    assert abs(nu[0] + 1.0) < 1e-12
    assert abs(xbar[0] - 1.1) < 1e-12


def test_green():
    assert abs(cc.regular_part_ball([0.0, 0.0, 0.0], [0.4, 0.1, 0.0]) - 1.0) < 1e-13
    assert abs(cc.regular_part_halfspace([0, 0, 0.4], [0, 0, 0.3]) - 1.0 / 0.7) < 1e-13


def test_reduced_model():
    g = cc.gamma_constants(3)
    assert abs(g.gamma1 - 3 ** 1.5 * math.pi ** 2 / 4) < 1e-8
    assert abs(g.gamma2 - 4 * 3 ** 0.5 * math.pi) < 1e-8
    assert g.gamma3 < 0
    m = cc.assemble_coefficients(g)
    assert m.c4 > 0 and m.c5 > 0 and m.c6 > 0
    d_star, t_star = cc.single_peak_optimum(m, 1.0, 1.0)
    assert abs(t_star - m.c6 / m.c4) < 1e-12
    # psi is symmetric under the pair swap
    p1 = cc.psi_tower(m, 1.0, 1.0, [1.2, 0.7], [0.5, 1.9])
    p2 = cc.psi_tower(m, 1.0, 1.0, [0.7, 1.2], [1.9, 0.5])
    assert abs(p1 - p2) < 1e-12
    d, t, _ = cc.minimize_tower(m, 1.0, 1.0)
    assert 0 < t[0] < t[1]


def test_run_scenario():
    cfg = {"scenario": "constants", "n_list": [3]}
    with tempfile.TemporaryDirectory() as tmp:
        manifest = json.loads(cc.run_scenario(json.dumps(cfg), tmp))
    assert manifest["passed"]
    assert any(ch["name"] == "gamma1_closed_form_n3" for ch in manifest["checks"])


if __name__ == "__main__":
    test_bubble()
    test_geometry()
    test_green()
    test_reduced_model()
    test_run_scenario()
    print("python smoke tests passed")
