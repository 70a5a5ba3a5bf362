import json

import numpy as np
import pytest

from mawhf import benchmarks
from mawhf.asymptotics import (AsymptoticsError, inf_transform_limit, limit_R_check, richardson, ruin_curve,
                               ruin_by_laplace_inversion, zero_drift_atoms)
from mawhf.model import scalar_model, scale_model


def test_richardson_removes_polynomial_error():
    s = np.array([1e-1, 1e-2, 1e-3])
    val, err = richardson(s, 2.0 + 3 * s + 5 * s ** 2)
    assert val == pytest.approx(2.0, abs=1e-12)


def test_limit_scalar(scalar_inf):
    chk = limit_R_check(scalar_inf)
    assert chk.R[0, 0] == pytest.approx(1.0, abs=1e-4)
    assert chk.discrepancy < 1e-4


def test_limit_monotone():
    assert limit_R_check(benchmarks.scalar_monotone()).R[0, 0] == pytest.approx(3.0, abs=1e-4)


def test_limit_two_state_routes_agree(two_state_ruin):
    chk = limit_R_check(two_state_ruin)
    assert chk.discrepancy < 1e-4
    assert np.allclose(chk.route_resolvent, chk.route_moment, atol=1e-4)


def test_negative_drift_has_no_proper_infimum(two_state):
    with pytest.raises(AsymptoticsError, match="m1"):
        limit_R_check(two_state)


def test_infimum_transform_scalar(scalar_inf):
    assert inf_transform_limit(scalar_inf, 1.0)[0, 0] == pytest.approx(0.5, abs=1e-8)
    assert inf_transform_limit(scalar_inf, 1e-6)[0, 0] == pytest.approx(1.0, abs=1e-5)
    assert inf_transform_limit(scalar_inf, 1e4)[0, 0] == pytest.approx(0.0, abs=1e-3)


def test_infimum_transform_rejects_bad_r(scalar_inf):
    with pytest.raises(ValueError):
        inf_transform_limit(scalar_inf, 2.0)
    with pytest.raises(ValueError):
        inf_transform_limit(scalar_inf, -1.0)


def test_ruin_scalar_closed_form(scalar_inf):
    x = np.array([-0.5, -1.0, -2.0, -5.0])
    curve = ruin_curve(scalar_inf, x)
    assert np.allclose(curve.values[:, 0, 0], np.exp(x), atol=1e-4)
    assert curve.meta["laplace_check"]["max_deviation"] < 1e-3


def test_ruin_curve_shape(two_state_ruin):
    x = np.array([-3.0, -1.0, -0.2, -1e-4])
    curve = ruin_curve(two_state_ruin, x, cross_check=False)
    assert np.all(np.diff(curve.values, axis=0) >= -1e-10)
    assert np.all((curve.values >= 0) & (curve.values <= 1))
    assert np.allclose(curve.probability()[-1], 1.0 - curve.p_minus.sum(axis=1), atol=1e-3)
    # asymptotically the final state is stationary: columns proportional to pi
    pi = np.array([0.5, 0.5])
    assert np.allclose(curve.values[0] / curve.values[0].sum(axis=1, keepdims=True), pi, atol=1e-4)


def test_ruin_transform_consistency(two_state_ruin):
    # int e^{r x} dF(x) over x < 0 = F(0-) - r int_0^inf e^{-r y} F(-y) dy, by Gauss-Laguerre
    y, w = np.polynomial.laguerre.laggauss(12)
    # r = 2 coincides with the jump rate, where the transform formula is not defined
    for r in (0.5, 1.0, 1.9):
        F = ruin_curve(two_state_ruin, -y / r, cross_check=False).values
        full = np.full((2, 2), 0.5) - np.einsum("n,nkr->kr", w, F)
        assert np.max(np.abs(full - inf_transform_limit(two_state_ruin, r))) < 1e-3


def test_laplace_route_matches_extrapolation(two_state_ruin):
    x = np.array([-0.5, -2.0])
    a = ruin_curve(two_state_ruin, x, cross_check=False).values
    assert np.max(np.abs(ruin_by_laplace_inversion(two_state_ruin, x) - a)) < 1e-3


def test_ruin_scaling_covariance(scalar_inf):
    sigma = 2.0
    x = np.array([-1.0, -3.0])
    scaled = ruin_curve(scale_model(scalar_inf, sigma), x, cross_check=False).values
    base = ruin_curve(scalar_inf, x / sigma, cross_check=False).values
    assert np.allclose(scaled, base, atol=1e-6)


def test_ruin_csv_header(scalar_inf):
    text = ruin_curve(scalar_inf, [-1.0], cross_check=False).to_csv()
    lines = text.splitlines()
    assert lines[0] == "# mawhf_csv_schema=1"
    header = json.loads(lines[1][2:])
    assert header["R_check"][0][0] == pytest.approx(1.0, abs=1e-4)
    assert header["p_minus"] == [[0.0]]
    assert lines[2] == "x,k,r,value"


def test_zero_drift_atoms_monotone():
    atoms = zero_drift_atoms(benchmarks.scalar_monotone(), 1.0)
    assert atoms["p_minus"][0, 0] == pytest.approx(1.0, abs=1e-8)
    assert atoms["P0"][0, 0] == pytest.approx(0.25, abs=1e-10)


def test_zero_drift_atoms_with_only_null_jumps():
    from mawhf.model import Atom, NegativeMixture
    # every jump has size 0 and the chain never moves: the process stays at 0
    spec = scalar_model(0.0, 2.0, 1.0, pos_weight=0.0, neg_jump=NegativeMixture((Atom(1.0, 0.0),)),
                        zero_drift=True)
    atoms = zero_drift_atoms(spec, 0.6)
    assert np.allclose(atoms["P0"], np.eye(1))
    assert atoms["p_minus"] is None


def test_zero_drift_atoms_need_zero_drift(scalar_inf):
    with pytest.raises(AsymptoticsError):
        zero_drift_atoms(scalar_inf, 1.0)
