import numpy as np
import pytest

from mawhf import benchmarks
from mawhf.factorize import (NonConvergenceError, default_probes, first_passage_transforms, identity_residuals,
                             phi_plus_general, solve_inf, solve_sup)
from mawhf.model import exponential, mirror_model, scalar_model

SQ2, SQ3 = np.sqrt(2.0), np.sqrt(3.0)


@pytest.fixture(scope="module")
def sup1():
    return solve_sup(benchmarks.scalar_sup(), 1.0)


@pytest.fixture(scope="module")
def two_state_pair():
    spec = benchmarks.two_state()
    return solve_sup(spec, 1.0), solve_inf(spec, 1.0)


def no_upward_jumps():
    return scalar_model(-1.0, 1.0, 2.0, pos_weight=0.0, neg_jump=exponential(3.0))


def test_scalar_supremum_oracle(sup1):
    assert sup1.p_plus[0, 0] == pytest.approx(SQ2 / 2, abs=1e-8)
    assert sup1.q_plus[0, 0] == pytest.approx(1 - SQ2 / 2, abs=1e-8)
    assert sup1.D_sup[0, 0] == pytest.approx(SQ2, abs=1e-8)
    assert sup1.M[0, 0] == pytest.approx(SQ2 - 1, abs=1e-8)


def test_scalar_infimum_oracle():
    inf = solve_inf(benchmarks.scalar_inf(), 1.0)
    assert inf.p_check_plus[0, 0] == pytest.approx(1 / (1 + SQ3), abs=1e-8)
    assert inf.D_inf[0, 0] == pytest.approx(SQ3 - 1, abs=1e-8)
    assert inf.m_check[0, 0] == pytest.approx(1 / SQ3, abs=1e-6)


def test_no_upward_jumps_means_no_excursions():
    spec = no_upward_jumps()
    sup, inf = solve_sup(spec, 1.0), solve_inf(spec, 1.0)
    assert np.allclose(sup.p_plus, sup.Ps) and np.allclose(sup.q_plus, 0.0)
    assert np.allclose(sup.sup_tail([0.5, 2.0]), 0.0)
    assert np.allclose(inf.p_check_plus, inf.Ps) and np.allclose(inf.q_check_plus, 0.0)


@pytest.mark.parametrize("name", sorted(benchmarks.STANDARD))
def test_structural_invariants(name):
    spec = benchmarks.STANDARD[name]()
    for fact in (solve_sup(spec, 1.0), solve_inf(spec, 1.0)):
        assert np.allclose(fact.p + fact.q, fact.Ps, atol=1e-10)
        assert np.all(fact.q >= -1e-12)
        assert np.all(np.linalg.eigvals(fact.D).real > 0)
        assert np.all((fact.moment >= -1e-12) & (fact.moment <= 1 + 1e-12))
        assert fact.report.init_spread < 1e-10


@pytest.mark.parametrize("name", sorted(benchmarks.STANDARD))
def test_factorization_identity(name):
    spec = benchmarks.STANDARD[name]()
    for s in (0.5, 2.0):
        res = identity_residuals(solve_sup(spec, s), solve_inf(spec, s), default_probes())
        assert max(res) < 1e-6


def test_boundary_values(two_state_pair):
    sup, inf = two_state_pair
    for f in (sup.sup_transform, sup.complement_transform, inf.inf_transform, inf.complement_transform):
        assert np.allclose(f([0.0])[0], sup.Ps, atol=1e-8)


def test_tails_decay_at_the_smallest_exponent(two_state_pair):
    for fact, tail in ((two_state_pair[0], two_state_pair[0].sup_tail),
                       (two_state_pair[1], two_state_pair[1].exponential_tail)):
        x = np.linspace(0.0, 20.0, 201)
        vals = tail(x)
        assert np.all(np.diff(vals, axis=0) <= 1e-15)
        last = x >= 10.0
        for k in range(2):
            for r in range(2):
                slope = np.polyfit(x[last], np.log(vals[last, k, r]), 1)[0]
                assert slope == pytest.approx(-fact.exponential_rate(), rel=0.01)


def test_iteration_contracts(two_state_pair):
    hist = two_state_pair[0].report.history
    assert hist[-1] < 1e-12
    assert all(b < a for a, b in zip(hist[3:], hist[4:]))


def test_both_starts_agree():
    spec = benchmarks.rich_two_state()
    a = solve_sup(spec, 1.0, init="identity", check_uniqueness=False)
    b = solve_sup(spec, 1.0, init="zero", check_uniqueness=False)
    assert np.max(np.abs(a.M - b.M)) < 1e-10
    assert a.iterations <= 200 and b.iterations <= 200


def test_affine_solution_matches_iteration(two_state_pair):
    sup = solve_sup(benchmarks.two_state(), 1.0, method="affine")
    assert np.allclose(sup.M, two_state_pair[0].M, atol=1e-11)


def test_non_convergence_reports_history():
    with pytest.raises(NonConvergenceError) as err:
        solve_sup(benchmarks.two_state(), 1.0, max_iter=2, check_uniqueness=False)
    assert len(err.value.history) == 2


def test_mirror_duality(two_state_pair):
    spec = benchmarks.two_state()
    msup = solve_sup(mirror_model(spec), 1.0)
    inf = two_state_pair[1]
    assert np.allclose(msup.p, inf.p, atol=1e-8) and np.allclose(msup.D, inf.D, atol=1e-8)
    a = default_probes(8)
    assert np.allclose(msup.sup_transform(a), inf.inf_transform(-a), atol=1e-8)
    assert np.allclose(msup.sup_tail([0.5, 1.5]), inf.inf_cdf([-0.5, -1.5]), atol=1e-8)


def test_first_passage_scalar(sup1):
    x = np.array([0.3, 1.0, 2.5])
    T = first_passage_transforms(sup1, x)[:, 0, 0]
    assert np.allclose(T, (1 - SQ2 / 2) * np.exp(-SQ2 * x), atol=1e-10)
    assert np.allclose(first_passage_transforms(sup1, x) @ sup1.Ps, sup1.sup_tail(x), atol=1e-10)
    with pytest.raises(ValueError):
        sup1.first_passage([-1.0])


def test_first_passage_at_zero_limit(two_state_pair):
    sup = two_state_pair[0]
    assert np.allclose(sup.first_passage([1e-12])[0], sup.q_plus @ sup.Ps_inv, atol=1e-10)


def test_downward_passage_of_pure_drift():
    inf = solve_inf(benchmarks.pure_drift(), 1.0)
    x = np.array([-0.5, -2.0])
    assert np.allclose(first_passage_transforms(inf, x)[:, 0, 0], np.exp(x), atol=1e-8)


@pytest.mark.parametrize("make", [benchmarks.scalar_sup, benchmarks.two_state])
def test_convolution_route_agrees(make):
    assert phi_plus_general(make(), 1.0)["max_deviation"] < 1e-4


def test_convolution_route_without_upward_jumps():
    out = phi_plus_general(no_upward_jumps(), 1.0)
    assert np.allclose(out["rebuilt"], out["rebuilt"][0][None]) and out["max_deviation"] < 1e-8


def test_json_report(sup1):
    rep = sup1.to_json()
    assert rep["p_plus"][0][0] == pytest.approx(SQ2 / 2)
    assert {"q_plus", "M", "D_sup", "iterations", "residual"} <= set(rep)
