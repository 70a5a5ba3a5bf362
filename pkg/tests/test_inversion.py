import numpy as np
import pytest

from mawhf import benchmarks
from mawhf.factorize import default_probes
from mawhf.inversion import (GriddedDistribution, cdf_at, exp_smooth_convolution, invert_xi_distribution,
                             minus_projection_moment, project)
from mawhf.spectral import CumulantEvaluator


@pytest.fixture(scope="module")
def drift_dist():
    return invert_xi_distribution(benchmarks.pure_drift(), 1.0)


def test_pure_drift_law(drift_dist):
    assert drift_dist.cdf(-1.0)[0, 0, 0] == pytest.approx(np.exp(-1.0), abs=1e-6)
    assert drift_dist.cdf(0.5)[0, 0, 0] == pytest.approx(1.0, abs=1e-6)


def test_grid_invariants():
    dist = invert_xi_distribution(benchmarks.two_state(), 1.0)
    assert np.all(np.diff(dist.values, axis=0) >= -1e-9)
    assert np.all(dist.values[0] <= 1e-6)
    assert np.allclose(dist.values[-1].sum(axis=1), 1.0, atol=1e-6)
    assert dist.error_estimate < 1e-6


def test_roundtrip_transform():
    spec = benchmarks.two_state()
    dist = invert_xi_distribution(spec, 1.0)
    probes = default_probes()
    err = np.max(np.abs(dist.transform(probes) - CumulantEvaluator(spec).phi(1.0, probes)))
    assert err < 1e-6


def test_zero_drift_atom_is_separated():
    dist = invert_xi_distribution(benchmarks.scalar_monotone(), 1.0)
    assert dist.atom0[0, 0] == pytest.approx(0.25, abs=1e-10)
    assert dist.cdf(-1e-3)[0, 0, 0] < 1e-6
    assert dist.cdf(1e-9)[0, 0, 0] == pytest.approx(0.25, abs=1e-6)


def test_pointwise_law_matches_grid():
    spec = benchmarks.two_state()
    dist = invert_xi_distribution(spec, 1.0)
    x = np.array([-2.0, -0.5, 0.7, 1.5])
    assert np.max(np.abs(cdf_at(CumulantEvaluator(spec), 1.0, x) - dist.cdf(x))) < 1e-6


def test_minus_moment_of_pure_drift(drift_dist):
    assert minus_projection_moment(drift_dist, 2.0)[0, 0] == pytest.approx(1 / 3, abs=1e-8)


def test_minus_moment_small_rate_is_negative_mass(drift_dist):
    assert minus_projection_moment(drift_dist, 1e-6)[0, 0] == pytest.approx(1.0, abs=1e-5)


def test_minus_moment_decreases_in_rate():
    dist = invert_xi_distribution(benchmarks.two_state(), 1.0)
    vals = [minus_projection_moment(dist, c) for c in (0.5, 1.0, 2.0, 4.0)]
    assert all(np.all(b <= a + 1e-12) for a, b in zip(vals, vals[1:]))


def test_minus_moment_of_positive_law_is_zero():
    x = np.linspace(-5, 5, 1001)
    vals = np.where(x > 0, 1.0 - np.exp(-x), 0.0)[:, None, None]
    dist = GriddedDistribution(1.0, x, vals, np.zeros((1, 1)))
    assert minus_projection_moment(dist, 1.5)[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_minus_moment_per_column_rates():
    dist = invert_xi_distribution(benchmarks.two_state(), 1.0)
    per_col = minus_projection_moment(dist, [2.0, 3.0], axis="col")
    assert np.allclose(per_col[:, 0], minus_projection_moment(dist, 2.0)[:, 0])
    assert np.allclose(per_col[:, 1], minus_projection_moment(dist, 3.0)[:, 1])


def test_contour_projection_matches_grid():
    spec = benchmarks.two_state()
    ev = CumulantEvaluator(spec)
    moment = project(ev, 1.0, [-2.0j], side=-1)["none"][0]
    assert np.max(np.abs(moment.real - minus_projection_moment(invert_xi_distribution(spec, 1.0), 2.0))) < 1e-6


def test_exp_smoothing_closed_form(drift_dist):
    val = exp_smooth_convolution(drift_dist, [2.0], x=-1.0)[0, 0, 0]
    assert val == pytest.approx(np.exp(-1.0) / 3, abs=1e-7)


def test_exp_smoothing_constants():
    x = np.linspace(-10, 10, 2001)
    ones = GriddedDistribution(1.0, x, np.ones((len(x), 2, 2)), np.zeros((2, 2)))
    out = exp_smooth_convolution(ones, [2.0, 4.0], x=[0.3])[0]
    assert np.allclose(out, [[0.5, 0.5], [0.25, 0.25]], atol=1e-12)
    right = exp_smooth_convolution(ones, [2.0, 4.0], x=[0.3], side="right")[0]
    assert np.allclose(right, [[0.5, 0.25], [0.5, 0.25]], atol=1e-12)
    zeros = GriddedDistribution(1.0, x, np.zeros((len(x), 2, 2)), np.zeros((2, 2)))
    assert not np.any(exp_smooth_convolution(zeros, [2.0, 4.0]))


def test_exp_smoothing_outside_grid(drift_dist):
    with pytest.raises(ValueError):
        exp_smooth_convolution(drift_dist, [1.0], x=[drift_dist.x_max + 1])


def test_refinement_is_second_order():
    spec = benchmarks.pure_drift()
    coarse = invert_xi_distribution(spec, 1.0, n=2 ** 12, x_min=-60.0, x_max=40.0)
    fine = invert_xi_distribution(spec, 1.0, n=2 ** 13, x_min=-60.0, x_max=40.0)
    exact = 1 / 3
    e1 = abs(minus_projection_moment(coarse, 2.0)[0, 0] - exact)
    e2 = abs(minus_projection_moment(fine, 2.0)[0, 0] - exact)
    assert e2 <= e1 / 3.5 or e2 < 1e-10


def test_csv_has_schema_and_atom(drift_dist):
    text = drift_dist.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# mawhf_csv_schema=1"
    assert any(line.startswith("# atom0") for line in lines)
    assert "x,k,r,value" in lines


def test_pointwise_law_agrees_with_mirror_where_a_cycle_is_flagged():
    # at x = 0.25 the mirrored evaluation hits a QUADPACK cycle warning
    from mawhf.model import mirror_model
    spec = benchmarks.two_state()
    ev, mirrored = CumulantEvaluator(spec), CumulantEvaluator(mirror_model(spec))
    x = np.array([0.2, 0.25, 0.3])
    direct = cdf_at(ev, 1.0, -x)
    via_mirror = ev.Ps(1.0)[None] - cdf_at(mirrored, 1.0, x)
    assert np.max(np.abs(direct - via_mirror)) < 1e-12
