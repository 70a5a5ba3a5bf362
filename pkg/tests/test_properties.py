import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mawhf.factorize import default_probes, identity_residuals, solve_inf, solve_sup
from mawhf.model import exponential, scalar_model, validate_model
from mawhf.spectral import CumulantEvaluator

settings.register_profile("mawhf", max_examples=15, deadline=None)
settings.load_profile("mawhf")

scalar_models = st.builds(
    lambda a, lam, c, w, d: scalar_model(-a, lam, c, pos_weight=w, neg_jump=exponential(d)),
    st.floats(0.2, 3.0), st.floats(0.1, 4.0), st.floats(0.5, 5.0), st.floats(0.05, 1.0), st.floats(0.5, 5.0))


@given(scalar_models, st.sampled_from([0.3, 1.0, 3.0]))
def test_factor_bookkeeping(spec, s):
    assert validate_model(spec) == []
    sup = solve_sup(spec, s)
    assert np.allclose(sup.p + sup.q, sup.Ps, atol=1e-10)
    assert 0 <= sup.M[0, 0] <= 1
    # the tail exponent is the positive root of K(u) = s
    assert np.isclose(CumulantEvaluator(spec).K(sup.D[0, 0])[0, 0], s, atol=1e-8)


@given(scalar_models, st.sampled_from([0.5, 2.0]))
def test_identity_on_random_scalars(spec, s):
    res = identity_residuals(solve_sup(spec, s), solve_inf(spec, s), default_probes(12))
    assert max(res) < 1e-6


@given(scalar_models)
def test_resolvent_modulus_bounded(spec):
    phi = CumulantEvaluator(spec).phi(1.0, default_probes(16))
    assert np.all(np.abs(phi) <= 1 + 1e-12)
