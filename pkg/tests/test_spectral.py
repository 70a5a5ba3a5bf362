import numpy as np
import pytest

from mawhf import benchmarks
from mawhf.model import mirror_model, resolvent_Ps
from mawhf.spectral import CumulantEvaluator, StripError


def test_cumulant_at_zero_is_generator():
    spec = benchmarks.rich_two_state()
    ev = CumulantEvaluator(spec)
    assert np.allclose(ev.psi(0.0), ev.Q)


def test_resolvent_at_zero_is_chain_resolvent():
    spec = benchmarks.rich_two_state()
    assert np.allclose(CumulantEvaluator(spec).phi(0.8, 0.0), resolvent_Ps(spec, 0.8))


def test_scalar_cumulant_closed_form():
    ev = CumulantEvaluator(benchmarks.scalar_sup())
    a = np.array([-3.0, 0.4, 2.5])
    expected = -1j * a + (2.0 / (2.0 - 1j * a) - 1.0)
    assert np.allclose(ev.psi(a)[:, 0, 0], expected)


def test_real_cumulant_closed_form():
    ev = CumulantEvaluator(benchmarks.scalar_inf())
    r = np.array([-0.7, 0.3, 1.5])
    assert np.allclose(ev.K(r)[:, 0, 0], r * (r + 1) / (2 - r))


def test_strip_is_enforced():
    ev = CumulantEvaluator(benchmarks.scalar_sup())
    with pytest.raises(StripError):
        ev.K(2.5)
    with pytest.raises(StripError):
        ev.psi(-2.5j)


def test_moment_interval_scalar_root():
    ev = CumulantEvaluator(benchmarks.scalar_sup())
    lo, hi = ev.moment_interval(1.0)
    assert hi == pytest.approx(np.sqrt(2.0), abs=1e-10)
    assert lo < 0


def test_mirror_cumulant_is_reflected():
    spec = benchmarks.rich_two_state()
    a = np.linspace(-4, 4, 9)
    ev, evm = CumulantEvaluator(spec), CumulantEvaluator(mirror_model(spec))
    assert np.allclose(evm.psi(a), ev.psi(-a))


def test_zero_atom_only_in_zero_drift_mode():
    assert not np.any(CumulantEvaluator(benchmarks.scalar_sup()).zero_atom(1.0))
    assert CumulantEvaluator(benchmarks.scalar_monotone()).zero_atom(1.0)[0, 0] == pytest.approx(0.25)


def test_jump_tail_kernel():
    ev = CumulantEvaluator(benchmarks.two_state())
    k = ev.k0_tail(np.array([0.5]))[0]
    assert np.allclose(np.diag(k), [1.0 * np.exp(-1.0), 2.0 * np.exp(-1.5)])
    assert k[0, 1] == 0.0
